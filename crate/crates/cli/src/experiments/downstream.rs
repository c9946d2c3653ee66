//! Downstream linear-probe accuracy of three representation learners per
//! width: exact trace maximization of the initial feature matrix, the fully
//! trained constrained model, and the alternating exact-PCA/descent
//! procedure.

use super::Context;
use ntklab::error::Result;
use ntklab::eval::linear_probe;
use ntklab::model::{init_network, NetworkParams};
use ntklab::numerics::Matrix;
use ntklab::pca;
use ntklab::training::{orthonormalize_output_layer, train_orthogonal, CvMode};

pub fn run(ctx: &Context) -> Result<bool> {
    let mut manifest = ctx.manifest("downstream");
    let base = ctx.labeled_points()?;
    // Alternating split keeps every class in both halves.
    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for i in 0..base.len() {
        let row = base.points.row(i).to_vec();
        if i % 2 == 0 {
            train_rows.push(row);
            train_labels.push(base.labels[i]);
        } else {
            test_rows.push(row);
            test_labels.push(base.labels[i]);
        }
    }
    let train_points = Matrix::from_rows(&train_rows);
    let test_points = Matrix::from_rows(&test_rows);
    let train_set = ntklab::data::LabeledPoints::new(train_points.clone(), train_labels.clone())?;
    let dataset = ntklab::data::build_contrastive_dataset(
        &train_set,
        ctx.config.q_pos,
        ctx.config.q_neg,
        match ctx.config.augmentation {
            crate::config::AugmentationKind::Identity => ntklab::data::Augmentation::Identity,
            crate::config::AugmentationKind::Crop => ntklab::data::Augmentation::ResizedCrop {
                lo: ctx.config.crop_lo,
                hi: ctx.config.crop_hi,
            },
        },
        ntklab::numerics::derive_seed(ctx.seed_base, 0xAA61),
    )?;

    let fm = ctx.config.feature_matrix_spec()?;
    let z = ctx.config.out_dim;
    let reps_of = |net: &NetworkParams, pts: &Matrix| -> Result<Matrix> {
        let mut reps = Matrix::zeros(pts.rows(), z);
        for i in 0..pts.rows() {
            let f = net.forward(pts.row(i))?;
            for j in 0..z {
                reps[(i, j)] = f[j];
            }
        }
        Ok(reps)
    };
    let probe = |net: &NetworkParams| -> Result<f64> {
        let train_reps = reps_of(net, &train_points)?;
        let test_reps = reps_of(net, &test_points)?;
        Ok(linear_probe(
            &train_reps,
            &train_labels,
            &test_reps,
            &test_labels,
            ctx.config.ridge,
        )?
        .accuracy)
    };

    let results = super::run_grid(&ctx.config.widths, ctx.config.seeds, |width, seed| {
        let params0 =
            orthonormalize_output_layer(&init_network(ctx.arch(width)?, ctx.net_seed(seed))?)?;
        let cv0 = pca::compute_cv(params0.v(), params0.activation(), &dataset, &fm)?;
        let sol = pca::pca_top(&pca::symmetrize(&cv0)?, z)?;
        let acc_pca = probe(&params0.with_output_layer(sol.w_star)?)?;
        let (trained, _) = train_orthogonal(
            &params0,
            &dataset,
            &CvMode::Live(fm),
            ctx.config.eta,
            ctx.config.steps,
            ctx.config.steps,
        )?;
        let acc_trained = probe(&trained)?;
        let (iterative, _) = pca::iterative_pca_train(
            &params0,
            &dataset,
            &fm,
            ctx.config.eta,
            ctx.config.iterative_steps,
        )?;
        let acc_iter = probe(&iterative)?;
        Ok([acc_pca, acc_trained, acc_iter])
    });

    let mut csv = String::from("config_id,M,method,accuracy\n");
    for (width, seed, outcome) in results {
        match outcome {
            Ok([pca_acc, trained_acc, iter_acc]) => {
                let id = format!("seed{seed}");
                csv.push_str(&format!("{id},{width},pca_initial,{pca_acc:.6}\n"));
                csv.push_str(&format!("{id},{width},trained,{trained_acc:.6}\n"));
                csv.push_str(&format!("{id},{width},iterative,{iter_acc:.6}\n"));
            }
            Err(e) => manifest.failure(format!("width {width} seed {seed}: {e}")),
        }
    }
    manifest.note("columns_downstream.csv", "config_id,M,method,accuracy");
    manifest.note("chance_level", 1.0 / base.num_classes() as f64);
    manifest.write_artifact(&ctx.out_dir, "downstream.csv", &csv)?;
    let plt = super::plot_script("downstream.csv", "downstream accuracy", 2, 4, false);
    manifest.write_artifact(&ctx.out_dir, "downstream.plt", &plt)?;
    let clean = !manifest.has_failures();
    manifest.save(&ctx.out_dir)?;
    Ok(clean)
}
