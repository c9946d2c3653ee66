//! End-to-end checks of the binary: artifact layout, byte determinism,
//! manifest contents and exit codes.

use std::path::Path;
use std::process::Command;

fn ntklab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ntklab"))
}

fn smoke_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("smoke.cfg");
    std::fs::write(
        &path,
        "widths = 8,16\nseeds = 2\nsteps = 6\nrecord_every = 3\n\
         blobs_classes = 2\nblobs_dim = 5\nblobs_per_class = 3\nout_dim = 2\neta = 0.3\n",
    )
    .unwrap();
    path
}

#[test]
fn drift_run_is_deterministic_and_complete() {
    let tmp = tempfile::TempDir::new().unwrap();
    let cfg = smoke_config(tmp.path());
    for out in ["a", "b"] {
        let status = ntklab()
            .args(["--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(tmp.path().join(out))
            .arg("ntk-drift")
            .status()
            .unwrap();
        assert!(status.success());
    }
    let csv_a = std::fs::read(tmp.path().join("a/ntk-drift/ntk-drift.csv")).unwrap();
    let csv_b = std::fs::read(tmp.path().join("b/ntk-drift/ntk-drift.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "identical configs must give identical bytes");

    let manifest = std::fs::read_to_string(tmp.path().join("a/ntk-drift/manifest.txt")).unwrap();
    assert!(manifest.contains("status = ok"));
    assert!(manifest.contains("sha256_ntk-drift.csv = "));
    assert!(manifest.contains("columns_ntk-drift.csv = width,seed,t,loss,ntk_drift_max"));
    assert!(tmp.path().join("a/ntk-drift/ntk-drift.plt").exists());

    // One row per (width, seed, recorded step) with strictly positive drift.
    let text = String::from_utf8(csv_a).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 2 * 2, "widths x seeds x records");
    for row in rows {
        let drift: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!(drift > 0.0, "non-positive drift in row {row}");
    }
}

#[test]
fn divergence_manifest_carries_blowup_fields() {
    let tmp = tempfile::TempDir::new().unwrap();
    let cfg = tmp.path().join("div.cfg");
    std::fs::write(&cfg, "widths = 100\nseeds = 1\ndivergence_n = 8\n").unwrap();
    let status = ntklab()
        .args(["--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(tmp.path())
        .arg("divergence-1d")
        .status()
        .unwrap();
    assert!(status.success());
    let manifest =
        std::fs::read_to_string(tmp.path().join("divergence-1d/manifest.txt")).unwrap();
    assert!(manifest.contains("t_blowup_pred_width100_seed0 = "));
    assert!(manifest.contains("t_blowup_measured_width100_seed0 = "));
    assert!(manifest.contains("blowup_under_log_width_width100_seed0 = true"));
    // Predicted and measured blow-up agree to simulation resolution.
    let grab = |key: &str| -> f64 {
        manifest
            .lines()
            .find(|l| l.starts_with(key))
            .and_then(|l| l.split(" = ").nth(1))
            .unwrap()
            .parse()
            .unwrap()
    };
    let pred = grab("t_blowup_pred_width100_seed0");
    let measured = grab("t_blowup_measured_width100_seed0");
    assert!(
        (measured - pred).abs() <= 0.05 * pred,
        "measured {measured} vs predicted {pred}"
    );
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    // Unknown subcommand: usage error (2).
    let out = ntklab().arg("no-such-experiment").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown config key: usage error (2).
    let tmp = tempfile::TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = ntklab()
        .args(["--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(tmp.path())
        .arg("ntk-drift")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing config file: data error (3).
    let out = ntklab()
        .args(["--config", "/nonexistent/nothing.cfg", "ntk-drift"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Config experiment name must match the subcommand.
    let cfg2 = tmp.path().join("mismatch.cfg");
    std::fs::write(&cfg2, "experiment = downstream\n").unwrap();
    let out = ntklab()
        .args(["--config"])
        .arg(&cfg2)
        .args(["--out"])
        .arg(tmp.path())
        .arg("ntk-drift")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn collapse_demo_reports_tiny_duplicated_gaps() {
    let tmp = tempfile::TempDir::new().unwrap();
    let cfg = smoke_config(tmp.path());
    let status = ntklab()
        .args(["--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(tmp.path())
        .args(["--threads", "2"])
        .arg("collapse-demo")
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(tmp.path().join("collapse-demo/collapse-demo.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let dup: f64 = fields[3].parse().unwrap();
        let ctl: f64 = fields[4].parse().unwrap();
        assert!(dup <= 1e-8, "duplicated gap {dup} in {line}");
        assert!(ctl > 1e-3, "control gap {ctl} in {line}");
    }
}
