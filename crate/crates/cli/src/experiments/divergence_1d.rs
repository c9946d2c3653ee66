//! Closed-form blow-up dynamics of the 1-D linear dot-product model against
//! a fine-step simulation: per (width, seed), the predicted blow-up time,
//! the measured one, and a strided trajectory comparison.

use super::Context;
use ntklab::bounds::{divergence_closed_form, simulate_divergence_ode};
use ntklab::data::divergence_dataset_1d;
use ntklab::error::Result;
use ntklab::model::{init_network, Activation, NetworkArch};
use ntklab::numerics::derive_seed;

const BLOWUP_LEVEL: f64 = 1e6;
const SIM_GUARD: f64 = 1e12;

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("divergence-1d");
    let results = super::run_grid(&ctx.config.widths, ctx.config.seeds, |width, seed| {
        let (_, c) = divergence_dataset_1d(
            ctx.config.divergence_n,
            derive_seed(ctx.seed_base, 0xDA7A ^ seed),
        )?;
        let arch = NetworkArch::new(1, width, 1, 1, Activation::Linear)?;
        let params = init_network(arch, ctx.net_seed(seed))?;
        let state = divergence_closed_form(&params.w().col(0), &params.v().col(0), c)?;
        let t_pred = state.t_blowup.unwrap_or(f64::INFINITY);
        // Cap the horizon so a fixed-point cell cannot stall the grid.
        let samples = simulate_divergence_ode(
            state.s0,
            state.p0,
            c,
            ctx.config.sim_dt,
            (10.0 * t_pred).min(50.0),
            SIM_GUARD,
        );
        let t_measured = samples
            .iter()
            .find(|s| s.p.abs() > BLOWUP_LEVEL)
            .map(|s| s.t)
            .unwrap_or(f64::NAN);
        let rows: Vec<(f64, f64, f64)> = samples
            .iter()
            .step_by((samples.len() / 200).max(1))
            .filter(|s| s.t < 0.95 * t_pred)
            .map(|s| (s.t, s.p, state.p_at(s.t).unwrap_or(f64::NAN)))
            .collect();
        Ok((c, state, t_pred, t_measured, rows))
    });

    let mut csv = String::from("width,seed,t,p_simulated,p_closed_form\n");
    for (width, seed, outcome) in results {
        match outcome {
            Ok((c, state, t_pred, t_measured, rows)) => {
                for (t, p_sim, p_exact) in rows {
                    csv.push_str(&format!(
                        "{width},{seed},{t:.9e},{p_sim:.16e},{p_exact:.16e}\n"
                    ));
                }
                let tag = format!("width{width}_seed{seed}");
                manifest.note(&format!("c_{tag}"), format!("{c:.12e}"));
                manifest.note(&format!("p0_{tag}"), format!("{:.12e}", state.p0));
                manifest.note(&format!("s0_{tag}"), format!("{:.12e}", state.s0));
                manifest.note(&format!("beta_ratio_{tag}"), format!("{:.12e}", state.beta_ratio));
                manifest.note(&format!("t_blowup_pred_{tag}"), format!("{t_pred:.9e}"));
                manifest.note(&format!("t_blowup_measured_{tag}"), format!("{t_measured:.9e}"));
                manifest.note(
                    &format!("blowup_under_log_width_{tag}"),
                    t_measured < (width as f64).ln(),
                );
            }
            Err(e) => manifest.failure(format!("width {width} seed {seed}: {e}")),
        }
    }
    manifest.note(
        "columns_divergence-1d.csv",
        "width,seed,t,p_simulated,p_closed_form",
    );
    manifest.note("blowup_level", BLOWUP_LEVEL);
    manifest.write_artifact(&ctx.out_dir, "divergence-1d.csv", &csv)?;
    let plt = super::plot_script("divergence-1d.csv", "kernel scale blow-up", 3, 4, false);
    manifest.write_artifact(&ctx.out_dir, "divergence-1d.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
