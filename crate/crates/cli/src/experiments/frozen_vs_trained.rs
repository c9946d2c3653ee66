//! Difference between constrained models trained with a live feature matrix
//! and with the initial one frozen, aligned by the optimal rotation, across
//! widths. Each cell also records the eigengap of the initial symmetrized
//! feature matrix, since the comparison degenerates when it closes.

use super::Context;
use ntklab::error::Result;
use ntklab::model::init_network;
use ntklab::pca;
use ntklab::training::{orthonormalize_output_layer, train_orthogonal, CvMode};

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("frozen-vs-trained-cv");
    let dataset = ctx.contrastive_dataset()?;
    let fm = ctx.config.feature_matrix_spec()?;
    let eta = ctx.config.eta;
    let probes: Vec<Vec<f64>> = dataset.anchors().to_vec();
    let z = ctx.config.out_dim;

    let results = super::run_grid(&ctx.config.widths, ctx.config.seeds, |width, seed| {
        let params =
            orthonormalize_output_layer(&init_network(ctx.arch(width)?, ctx.net_seed(seed))?)?;
        let cv0 = pca::compute_cv(params.v(), params.activation(), &dataset, &fm)?;
        let c_tilde0 = pca::symmetrize(&cv0)?;
        let eigengap = {
            let sol = pca::pca_top(&c_tilde0, z)?;
            sol.eigenvalues[z - 1] - sol.eigenvalues[z]
        };
        let (live, live_trace) = train_orthogonal(
            &params,
            &dataset,
            &CvMode::Live(fm),
            eta,
            ctx.config.steps,
            ctx.config.steps,
        )?;
        let (frozen, frozen_trace) = train_orthogonal(
            &params,
            &dataset,
            &CvMode::Frozen(c_tilde0),
            eta,
            ctx.config.steps,
            ctx.config.steps,
        )?;
        let diff = pca::representation_diff(&frozen, &live, &probes, true)?;
        let orth = live_trace
            .max_orthogonality_error
            .max(frozen_trace.max_orthogonality_error);
        Ok((diff, eigengap, orth))
    });

    let mut csv = String::from("width,seed,mean_frac_diff,eigengap\n");
    for (width, seed, outcome) in results {
        match outcome {
            Ok((diff, gap, orth)) => {
                csv.push_str(&format!("{width},{seed},{diff:.16e},{gap:.16e}\n"));
                manifest.note(
                    &format!("orthonormality_error_width{width}_seed{seed}"),
                    format!("{orth:.3e}"),
                );
            }
            Err(e) => manifest.failure(format!("width {width} seed {seed}: {e}")),
        }
    }
    manifest.note(
        "columns_frozen-vs-trained-cv.csv",
        "width,seed,mean_frac_diff,eigengap",
    );
    manifest.write_artifact(&ctx.out_dir, "frozen-vs-trained-cv.csv", &csv)?;
    let plt = super::plot_script(
        "frozen-vs-trained-cv.csv",
        "frozen vs trained feature matrix",
        1,
        3,
        true,
    );
    manifest.write_artifact(&ctx.out_dir, "frozen-vs-trained-cv.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
