//! Every bound calculator against its measured quantity on one grid:
//! max-entry weight drift, kernel drift and feature-matrix drift per
//! recorded step, plus a Hessian probe at the end of each run.

use super::Context;
use ntklab::bounds::{
    cv_drift_bound, hessian_bound, measure_constants, ntk_change_bound, weight_drift_bound,
};
use ntklab::error::Result;
use ntklab::model::init_network;
use ntklab::ntk;
use ntklab::training::{
    orthonormalize_output_layer, train_orthogonal, train_with, CvMode, TrainConfig,
};

const HORIZON_EXP: f64 = 0.25;

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("bounds-report");
    let dataset = ctx.contrastive_dataset()?;
    let sim = ctx.config.similarity_spec()?;
    let fm = ctx.config.feature_matrix_spec()?;
    let probes = ctx.probes(&dataset);
    let smooth = ctx.config.activation.is_smooth();

    let results = super::run_grid(&ctx.config.widths, 1, |width, _seed| {
        let params0 = init_network(ctx.arch(width)?, ctx.net_seed(0))?;
        let consts = measure_constants(&params0, &dataset, &sim, ctx.config.eta)?;

        // Unconstrained run: weight drift and kernel drift.
        let mut config = TrainConfig::new(ctx.config.eta, ctx.config.steps, ctx.config.record_every);
        config.ntk_probes = Some(probes.clone());
        let (trained, trace) = train_with(&params0, &dataset, &sim, &config)?;

        // Constrained run: feature-matrix drift.
        let ortho0 = orthonormalize_output_layer(&params0)?;
        let ortho_consts = measure_constants(&ortho0, &dataset, &sim, ctx.config.eta)?;
        let (_, cv_trace) = train_orthogonal(
            &ortho0,
            &dataset,
            &CvMode::Live(fm),
            ctx.config.eta,
            ctx.config.steps,
            ctx.config.record_every,
        )?;

        // Hessian probe at the end of the unconstrained run.
        let hessian = if smooth {
            let radius = trained.w().sub(params0.w()).frobenius_norm()
                + trained.v().sub(params0.v()).frobenius_norm();
            let measured = match ntk::hessian_spectral_norm(&trained, &probes[0], 0) {
                Ok(v) => v,
                Err(ntklab::Error::NoConvergence { best, .. }) => best,
                Err(e) => return Err(e),
            };
            Some((measured, hessian_bound(&consts, radius)?))
        } else {
            None
        };
        Ok((consts, ortho_consts, trace, cv_trace, hessian))
    });

    let mut csv = String::from(
        "width,t,w_drift_measured,w_drift_bound,ntk_drift_measured,ntk_drift_bound,cv_drift_measured,cv_drift_bound,hessian_measured,hessian_bound\n",
    );
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for (width, _seed, outcome) in results {
        match outcome {
            Ok((consts, ortho_consts, trace, cv_trace, hessian)) => {
                let horizon = (width as f64).powf(HORIZON_EXP);
                for (i, r) in trace.records.iter().enumerate() {
                    let w_measured = r.drift_max.iter().cloned().fold(0.0f64, f64::max);
                    let w_bound = weight_drift_bound(&consts, r.step).ok();
                    let ntk_bound = if smooth && (r.step as f64) <= horizon {
                        ntk_change_bound(&consts, r.step, HORIZON_EXP)
                            .ok()
                            .map(|b| b.value)
                    } else {
                        None
                    };
                    let cv_rec = cv_trace.records.get(i);
                    let cv_measured = cv_rec.and_then(|c| c.cv_drift_fro);
                    let cv_bound = cv_rec.map(|c| cv_drift_bound(&ortho_consts, c.step)).transpose()?;
                    let (h_meas, h_bound) = match (i + 1 == trace.records.len(), hessian) {
                        (true, Some((m, b))) => (Some(m), Some(b)),
                        _ => (None, None),
                    };
                    csv.push_str(&format!(
                        "{width},{},{w_measured:.16e},{},{:.16e},{},{},{},{},{}\n",
                        r.step,
                        fmt_opt(w_bound),
                        r.ntk_drift_max.unwrap_or(f64::NAN),
                        fmt_opt(ntk_bound),
                        fmt_opt(cv_measured),
                        fmt_opt(cv_bound),
                        fmt_opt(h_meas),
                        fmt_opt(h_bound),
                    ));
                }
            }
            Err(e) => manifest.failure(format!("width {width}: {e}")),
        }
    }
    manifest.note(
        "columns_bounds-report.csv",
        "width,t,w_drift_measured,w_drift_bound,ntk_drift_measured,ntk_drift_bound,cv_drift_measured,cv_drift_bound,hessian_measured,hessian_bound",
    );
    manifest.note("ntk_bound_horizon_exponent", HORIZON_EXP);
    manifest.note(
        "empty_cells",
        "bounds needing smoothness or an in-regime horizon stay empty where inapplicable",
    );
    manifest.write_artifact(&ctx.out_dir, "bounds-report.csv", &csv)?;
    let plt = super::plot_script("bounds-report.csv", "bounds vs measured", 2, 3, true);
    manifest.write_artifact(&ctx.out_dir, "bounds-report.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
