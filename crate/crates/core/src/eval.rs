//! Downstream evaluation: a closed-form ridge linear probe and a detector
//! for collapsed output dimensions.
//!
//! The probe is one-vs-all ridge regression on one-hot targets with a bias
//! column, solved through the eigendecomposition of the (Z+1)x(Z+1) Gram
//! system; no optimizer hyperparameters, bit-reproducible.

use crate::error::{Error, Result};
use crate::model::{init_network, NetworkArch, NetworkParams};
use crate::numerics::{self, Matrix};
use crate::similarity::{loss_gradient, ContrastiveDataset, SimilaritySpec};
use crate::training::gd_step;

/// Downstream accuracy of a probe, with per-class breakdown and the chance
/// level 1/G.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub chance: f64,
}

impl ProbeResult {
    /// CSV row `config_id,M,method,accuracy`.
    pub fn to_csv_row(&self, config_id: &str, width: usize, method: &str) -> String {
        format!("{config_id},{width},{method},{:.6}\n", self.accuracy)
    }
}

/// One-vs-all ridge probe: fit on train representations, report argmax
/// accuracy on the test set (ties break toward the lowest class index).
pub fn linear_probe(
    train_reps: &Matrix,
    train_labels: &[usize],
    test_reps: &Matrix,
    test_labels: &[usize],
    ridge: f64,
) -> Result<ProbeResult> {
    if !(ridge > 0.0) {
        return Err(Error::invalid("ridge strength must be positive"));
    }
    if train_reps.rows() != train_labels.len() || test_reps.rows() != test_labels.len() {
        return Err(Error::invalid("representation/label counts differ"));
    }
    if train_reps.cols() != test_reps.cols() {
        return Err(Error::invalid("train/test representation dims differ"));
    }
    let classes = train_labels
        .iter()
        .chain(test_labels)
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let n = train_reps.rows();
    let z = train_reps.cols();
    let dim = z + 1; // bias column appended

    // Gram system A = X~^T X~ + ridge I, right-hand side X~^T Y.
    let mut gram = Matrix::zeros(dim, dim);
    let mut rhs = Matrix::zeros(dim, classes);
    for i in 0..n {
        let row = train_reps.row(i);
        for a in 0..dim {
            let xa = if a < z { row[a] } else { 1.0 };
            if xa == 0.0 {
                continue;
            }
            for b in 0..dim {
                let xb = if b < z { row[b] } else { 1.0 };
                gram[(a, b)] += xa * xb;
            }
            rhs[(a, train_labels[i])] += xa;
        }
    }
    for a in 0..dim {
        gram[(a, a)] += ridge;
    }
    let eig = numerics::sym_eigen(&gram)?;
    // A^{-1} via the spectrum; ridge > 0 keeps it well defined.
    let q = &eig.eigenvectors;
    let mut inv = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for k in 0..dim {
                s += q[(i, k)] * q[(j, k)] / eig.eigenvalues[k];
            }
            inv[(i, j)] = s;
        }
    }
    let coefs = inv.matmul(&rhs); // dim x classes

    let mut correct = 0usize;
    let mut class_total = vec![0usize; classes];
    let mut class_correct = vec![0usize; classes];
    for i in 0..test_reps.rows() {
        let row = test_reps.row(i);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for g in 0..classes {
            let mut score = coefs[(z, g)];
            for (a, &xa) in row.iter().enumerate() {
                score += xa * coefs[(a, g)];
            }
            if score > best_score {
                best_score = score;
                best = g;
            }
        }
        let truth = test_labels[i];
        class_total[truth] += 1;
        if best == truth {
            correct += 1;
            class_correct[truth] += 1;
        }
    }
    let per_class = class_total
        .iter()
        .zip(&class_correct)
        .map(|(&t, &c)| if t > 0 { c as f64 / t as f64 } else { 0.0 })
        .collect();
    Ok(ProbeResult {
        accuracy: correct as f64 / test_reps.rows() as f64,
        per_class,
        chance: 1.0 / classes as f64,
    })
}

/// Train a network whose output columns `i` and `j` start identical and
/// report the largest `|f_i(x) - f_j(x)|` seen over the probes at any step
/// (initialization included). A nonzero result exposes numerical leakage;
/// the columns provably stay equal under full-batch descent.
#[allow(clippy::too_many_arguments)]
pub fn collapse_check(
    arch: NetworkArch,
    seed: u64,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    duplicate_pair: (usize, usize),
    eta: f64,
    steps: usize,
    probes: &[Vec<f64>],
) -> Result<f64> {
    let (i, j) = duplicate_pair;
    if i == j || i >= arch.output_dim || j >= arch.output_dim {
        return Err(Error::invalid(format!(
            "duplicate pair ({i},{j}) must be two distinct output indices below {}",
            arch.output_dim
        )));
    }
    if probes.is_empty() {
        return Err(Error::invalid("collapse check needs probe points"));
    }
    let params = init_network(arch, seed)?;
    let mut w = params.w().clone();
    let col_i = w.col(i);
    w.set_col(j, &col_i);
    let mut params = params.with_output_layer(w)?;

    let mut worst = column_gap(&params, probes, i, j)?;
    for t in 1..=steps {
        let grad = loss_gradient(spec, &params, dataset)?;
        params = gd_step(&params, &grad, eta).map_err(|e| match e {
            Error::Divergence { quantity, value, .. } => Error::Divergence {
                step: t,
                quantity,
                value,
            },
            other => other,
        })?;
        if params.max_abs_weight() > crate::ntk::DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                step: t,
                quantity: "weight magnitude".to_string(),
                value: params.max_abs_weight(),
            });
        }
        worst = worst.max(column_gap(&params, probes, i, j)?);
    }
    Ok(worst)
}

fn column_gap(
    params: &NetworkParams,
    probes: &[Vec<f64>],
    i: usize,
    j: usize,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in probes {
        let f = params.forward(x)?;
        worst = worst.max((f[i] - f[j]).abs());
    }
    Ok(worst)
}
