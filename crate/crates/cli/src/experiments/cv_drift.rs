//! Feature-matrix drift under constrained training: Frobenius drift of
//! C_V(t) per recorded step plus the relative-change race between the
//! output layer and the feature matrix.

use super::Context;
use ntklab::bounds::{cv_drift_bound, measure_constants};
use ntklab::error::Result;
use ntklab::model::init_network;
use ntklab::training::{orthonormalize_output_layer, train_orthogonal, CvMode};

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("cv-drift");
    let dataset = ctx.contrastive_dataset()?;
    let fm = ctx.config.feature_matrix_spec()?;
    let sim = ctx.config.similarity_spec()?;
    let eta = ctx.config.eta;

    let results = super::run_grid(&ctx.config.widths, ctx.config.seeds, |width, seed| {
        let params =
            orthonormalize_output_layer(&init_network(ctx.arch(width)?, ctx.net_seed(seed))?)?;
        let consts = measure_constants(&params, &dataset, &sim, eta)?;
        let (_, trace) = train_orthogonal(
            &params,
            &dataset,
            &CvMode::Live(fm),
            eta,
            ctx.config.steps,
            ctx.config.record_every,
        )?;
        Ok((consts, trace))
    });

    let mut csv = String::from("width,seed,t,cv_drift_fro,cv_drift_bound,w_rel,cv_rel\n");
    for (width, seed, outcome) in results {
        match outcome {
            Ok((consts, trace)) => {
                manifest.note(
                    &format!("orthonormality_error_width{width}_seed{seed}"),
                    format!("{:.3e}", trace.max_orthogonality_error),
                );
                for r in &trace.records {
                    let bound = cv_drift_bound(&consts, r.step)?;
                    csv.push_str(&format!(
                        "{width},{seed},{},{:.16e},{bound:.16e},{:.16e},{:.16e}\n",
                        r.step,
                        r.cv_drift_fro.unwrap_or(f64::NAN),
                        r.w_rel,
                        r.cv_rel.unwrap_or(f64::NAN),
                    ));
                }
            }
            Err(e) => manifest.failure(format!("width {width} seed {seed}: {e}")),
        }
    }
    manifest.note(
        "columns_cv-drift.csv",
        "width,seed,t,cv_drift_fro,cv_drift_bound,w_rel,cv_rel",
    );
    manifest.write_artifact(&ctx.out_dir, "cv-drift.csv", &csv)?;
    let plt = super::plot_script("cv-drift.csv", "feature-matrix drift", 1, 4, true);
    manifest.write_artifact(&ctx.out_dir, "cv-drift.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
