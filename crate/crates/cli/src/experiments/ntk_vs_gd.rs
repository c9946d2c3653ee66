//! Frozen-kernel dynamics against real descent: integrate the
//! representation flow with the kernel pinned at initialization, train the
//! same network by full-batch descent, and report the max fractional
//! representation difference per width.

use super::Context;
use ntklab::error::Result;
use ntklab::model::init_network;
use ntklab::ntk::{dynamics_points, integrate_ntk_dynamics, ntk_table, NtkMode, RepState};
use ntklab::training;

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("ntk-vs-gd");
    let dataset = ctx.contrastive_dataset()?;
    let spec = ctx.config.similarity_spec()?;
    let eta = ctx.config.eta;
    let steps = ctx.config.steps;

    let results = super::run_grid(&ctx.config.widths, ctx.config.seeds, |width, seed| {
        let params = init_network(ctx.arch(width)?, ctx.net_seed(seed))?;
        let points = dynamics_points(&dataset, &[]);
        let mode = if ctx.config.depth == 1 {
            NtkMode::ClosedForm
        } else {
            NtkMode::Jacobian
        };
        let kernel = ntk_table(&params, &points, mode)?;
        let init = RepState::from_params(&params, &points)?;
        let states = integrate_ntk_dynamics(&kernel, &init, &dataset, &spec, eta, steps)?;
        let integrated = states.last().unwrap();
        let (trained, _) = training::train(&params, &dataset, &spec, eta, steps, steps)?;

        let mut worst: f64 = 0.0;
        for idx in 0..dataset.num_anchors() {
            let f_gd = trained.forward(dataset.anchor(idx))?;
            for (z, value) in f_gd.iter().enumerate() {
                let frac = (integrated.reps[(idx, z)] - value).abs() / (value.abs() + 1e-12);
                worst = worst.max(frac);
            }
        }
        Ok(worst)
    });

    let mut csv = String::from("width,seed,max_frac_diff\n");
    for (width, seed, outcome) in results {
        match outcome {
            Ok(diff) => csv.push_str(&format!("{width},{seed},{diff:.16e}\n")),
            Err(e) => manifest.failure(format!("width {width} seed {seed}: {e}")),
        }
    }
    manifest.note("columns_ntk-vs-gd.csv", "width,seed,max_frac_diff");
    manifest.write_artifact(&ctx.out_dir, "ntk-vs-gd.csv", &csv)?;
    let plt = super::plot_script("ntk-vs-gd.csv", "kernel dynamics vs descent", 1, 3, true);
    manifest.write_artifact(&ctx.out_dir, "ntk-vs-gd.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
