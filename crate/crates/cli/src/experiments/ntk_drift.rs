//! Kernel drift during training across widths and epochs, for either
//! similarity, any configured depth and activation. Dot-product runs that
//! trip the divergence guard keep their partial trace; the aborting step is
//! recorded in the manifest.

use super::Context;
use ntklab::error::Result;
use ntklab::model::init_network;
use ntklab::training::{train_until_divergence, TrainConfig, TrainTrace};

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("ntk-drift");
    let dataset = ctx.contrastive_dataset()?;
    let spec = ctx.config.similarity_spec()?;
    let probes = ctx.probes(&dataset);

    let results = super::run_grid(&ctx.config.widths, ctx.config.seeds, |width, seed| {
        let params = init_network(ctx.arch(width)?, ctx.net_seed(seed))?;
        let mut config = TrainConfig::new(ctx.config.eta, ctx.config.steps, ctx.config.record_every);
        config.ntk_probes = Some(probes.clone());
        let (_, trace, diverged) = train_until_divergence(&params, &dataset, &spec, &config)?;
        Ok::<(TrainTrace, Option<usize>), ntklab::Error>((trace, diverged))
    });

    let mut csv = String::from("width,seed,t,loss,ntk_drift_max\n");
    for (width, seed, outcome) in results {
        match outcome {
            Ok((trace, diverged)) => {
                for r in &trace.records {
                    csv.push_str(&format!(
                        "{width},{seed},{},{:.16e},{:.16e}\n",
                        r.step,
                        r.loss,
                        r.ntk_drift_max.unwrap_or(f64::NAN)
                    ));
                }
                if let Some(step) = diverged {
                    manifest.note(&format!("diverged_width{width}_seed{seed}"), step);
                }
            }
            Err(e) => manifest.failure(format!("width {width} seed {seed}: {e}")),
        }
    }
    manifest.note("columns_ntk-drift.csv", "width,seed,t,loss,ntk_drift_max");
    manifest.note("drift_metric", "max entry-wise kernel change against initialization");
    manifest.write_artifact(&ctx.out_dir, "ntk-drift.csv", &csv)?;
    let plt = super::plot_script("ntk-drift.csv", "kernel drift vs width", 1, 5, true);
    manifest.write_artifact(&ctx.out_dir, "ntk-drift.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
