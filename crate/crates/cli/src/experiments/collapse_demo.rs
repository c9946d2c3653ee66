//! Dimension collapse: duplicated output-layer columns stay identical under
//! training with either similarity, while generic initializations keep
//! their columns visibly apart (the control column).

use super::Context;
use ntklab::error::Result;
use ntklab::eval::collapse_check;
use ntklab::model::init_network;
use ntklab::similarity::{loss_gradient, SimilaritySpec};
use ntklab::training::gd_step;

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("collapse-demo");
    let dataset = ctx.contrastive_dataset()?;
    let probes = ctx.probes(&dataset);
    let z = ctx.config.out_dim;
    if z < 2 {
        return Err(ntklab::Error::invalid("collapse demo needs out_dim >= 2"));
    }
    let pair = (0usize, z - 1);
    let specs: Vec<(&str, SimilaritySpec, f64)> = vec![
        ("dot", SimilaritySpec::dot(), ctx.config.eta_dot),
        ("cosine", SimilaritySpec::cosine(ctx.config.delta)?, ctx.config.eta),
    ];

    let mut csv = String::from("width,seed,similarity,duplicated_gap,control_gap\n");
    for &width in &ctx.config.widths {
        for seed in 0..ctx.config.seeds as u64 {
            for (name, spec, eta) in &specs {
                let arch = ctx.arch(width)?;
                let outcome = collapse_check(
                    arch,
                    ctx.net_seed(seed),
                    &dataset,
                    spec,
                    pair,
                    *eta,
                    ctx.config.steps,
                    &probes,
                );
                // Control: same training, no duplication.
                let control = (|| -> Result<f64> {
                    let mut params = init_network(arch, ctx.net_seed(seed))?;
                    let mut gap: f64 = 0.0;
                    for x in &probes {
                        let f = params.forward(x)?;
                        gap = gap.max((f[pair.0] - f[pair.1]).abs());
                    }
                    for _ in 0..ctx.config.steps {
                        let g = loss_gradient(spec, &params, &dataset)?;
                        params = gd_step(&params, &g, *eta)?;
                        for x in &probes {
                            let f = params.forward(x)?;
                            gap = gap.max((f[pair.0] - f[pair.1]).abs());
                        }
                    }
                    Ok(gap)
                })();
                match (outcome, control) {
                    (Ok(dup), Ok(ctl)) => {
                        csv.push_str(&format!("{width},{seed},{name},{dup:.16e},{ctl:.16e}\n"));
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        manifest.failure(format!("width {width} seed {seed} {name}: {e}"))
                    }
                }
            }
        }
    }
    manifest.note(
        "columns_collapse-demo.csv",
        "width,seed,similarity,duplicated_gap,control_gap",
    );
    manifest.note("duplicated_pair", format!("({}, {})", pair.0, pair.1));
    manifest.write_artifact(&ctx.out_dir, "collapse-demo.csv", &csv)?;
    let plt = super::plot_script("collapse-demo.csv", "column collapse", 1, 4, true);
    manifest.write_artifact(&ctx.out_dir, "collapse-demo.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
