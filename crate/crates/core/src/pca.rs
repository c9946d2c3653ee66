//! Feature-matrix assembly, its PCA solution, aligned representation
//! comparison and the iterative PCA+descent trainer.
//!
//! For first-layer features `a(x) = phi(V x)` the feature matrix over a
//! contrastive dataset is
//!
//! * dot form:          `C_V = (1/(M N)) sum_{n,q} alpha_q a(x_nq) a(x_n)^T`
//! * cosine-bound form: `C_V = (1/N) sum_{n,q} alpha_q a(x_nq) a(x_n)^T /
//!                       ((||a(x_nq)|| + d')(||a(x_n)|| + d'))`, `d' = sqrt(M) d`
//!
//! Minimizing the linear contrastive loss of an output-orthonormal network
//! over W alone is trace maximization of `W^T C~ W` with
//! `C~ = (C_V + C_V^T)/2`, solved exactly by the top-Z eigenvectors.

use crate::error::{Error, Result};
use crate::model::{Activation, NetworkParams};
use crate::numerics::{self, dot, norm2, Matrix};
use crate::similarity::ContrastiveDataset;
use crate::training::{TraceRecord, TrainTrace};

// ---------------------------------------------------------------------------
// Feature-matrix specification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvForm {
    Dot,
    CosineBound,
}

/// Which feature-matrix form to assemble; `delta` is the cosine floor of
/// the underlying similarity (the assembly internally uses
/// `delta' = sqrt(M) delta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMatrixSpec {
    form: CvForm,
    delta: f64,
}

impl FeatureMatrixSpec {
    pub fn new(form: CvForm, delta: f64) -> Result<Self> {
        if form == CvForm::CosineBound && !(delta > 0.0) {
            return Err(Error::invalid(format!(
                "cosine-bound feature matrix needs delta > 0, got {delta}"
            )));
        }
        Ok(FeatureMatrixSpec { form, delta })
    }

    pub fn dot() -> Self {
        FeatureMatrixSpec {
            form: CvForm::Dot,
            delta: 0.0,
        }
    }

    pub fn cosine_bound(delta: f64) -> Result<Self> {
        Self::new(CvForm::CosineBound, delta)
    }

    pub fn form(&self) -> CvForm {
        self.form
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_prime(&self, width: usize) -> f64 {
        (width as f64).sqrt() * self.delta
    }
}

// ---------------------------------------------------------------------------
// Feature matrix
// ---------------------------------------------------------------------------

fn features(v: &Matrix, activation: Activation, x: &[f64]) -> Vec<f64> {
    v.matvec(x).iter().map(|&u| activation.phi(u)).collect()
}

/// Assemble the MxM feature matrix for first-layer weights `v`.
/// Summation order is fixed: anchors in order, pairs in order.
pub fn compute_cv(
    v: &Matrix,
    activation: Activation,
    dataset: &ContrastiveDataset,
    spec: &FeatureMatrixSpec,
) -> Result<Matrix> {
    if dataset.input_dim() != v.cols() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match first-layer input {}",
            dataset.input_dim(),
            v.cols()
        )));
    }
    let m = v.rows();
    let n = dataset.num_anchors();
    let inv_n = 1.0 / n as f64;
    let d_prime = spec.delta_prime(m);
    let mut cv = Matrix::zeros(m, m);
    for a in 0..n {
        let feat_anchor = features(v, activation, dataset.anchor(a));
        for p in dataset.pairs_of(a) {
            let feat_pair = features(v, activation, &p.point);
            let coef = match spec.form {
                CvForm::Dot => p.alpha * inv_n / m as f64,
                CvForm::CosineBound => {
                    p.alpha * inv_n
                        / ((norm2(&feat_pair) + d_prime) * (norm2(&feat_anchor) + d_prime))
                }
            };
            cv.add_outer(coef, &feat_pair, &feat_anchor);
        }
    }
    Ok(cv)
}

/// `(C + C^T)/2`; trace is preserved exactly.
pub fn symmetrize(c: &Matrix) -> Result<Matrix> {
    if c.rows() != c.cols() {
        return Err(Error::invalid("symmetrize needs a square matrix"));
    }
    let n = c.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = c[(i, i)];
        for j in (i + 1)..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trace maximization
// ---------------------------------------------------------------------------

/// Solution of `max Tr(W^T C~ W)` over orthonormal W: the top-Z
/// eigenvectors, the leading Z+1 eigenvalues (one extra for the eigengap)
/// and the attained objective.
#[derive(Debug, Clone)]
pub struct PcaSolution {
    pub w_star: Matrix,
    /// Leading eigenvalues, Z+1 of them.
    pub eigenvalues: Vec<f64>,
    pub objective: f64,
    /// Set when the Z-th and (Z+1)-th eigenvalues coincide to 1e-12; the
    /// maximizer is then not unique and subspace perturbation bounds are
    /// vacuous.
    pub degenerate_eigengap: bool,
}

const EIGENGAP_TOL: f64 = 1e-12;

/// Top-Z eigenvectors of a symmetric matrix, sign-fixed so each column's
/// largest-magnitude entry is positive (deterministic across platforms).
pub fn pca_top(c_tilde: &Matrix, z: usize) -> Result<PcaSolution> {
    let m = c_tilde.rows();
    if z == 0 || z >= m {
        return Err(Error::invalid(format!(
            "need 0 < Z < M for trace maximization, got Z={z}, M={m}"
        )));
    }
    let eig = numerics::sym_eigen(c_tilde)?;
    let mut w_star = Matrix::zeros(m, z);
    for j in 0..z {
        let mut col = eig.eigenvectors.col(j);
        let mut pivot = 0;
        for (i, val) in col.iter().enumerate() {
            if val.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            for val in col.iter_mut() {
                *val = -*val;
            }
        }
        w_star.set_col(j, &col);
    }
    let eigenvalues: Vec<f64> = eig.eigenvalues[..=z].to_vec();
    let objective = eig.eigenvalues[..z].iter().sum();
    let degenerate_eigengap = (eigenvalues[z - 1] - eigenvalues[z]).abs() <= EIGENGAP_TOL;
    Ok(PcaSolution {
        w_star,
        eigenvalues,
        objective,
        degenerate_eigengap,
    })
}

impl PcaSolution {
    /// Dump: eigenvalues on the first line, then the W* matrix as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eigenvalues,");
        out.push_str(
            &self
                .eigenvalues
                .iter()
                .map(|l| format!("{l:.16e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        out.push_str(&self.w_star.to_csv());
        out
    }
}

// ---------------------------------------------------------------------------
// Representation comparison
// ---------------------------------------------------------------------------

/// Mean fractional difference of the representations of two networks over
/// probe points, optionally after the optimal orthogonal alignment of the
/// second onto the first.
pub fn representation_diff(
    params_a: &NetworkParams,
    params_b: &NetworkParams,
    probes: &[Vec<f64>],
    align: bool,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::invalid("representation comparison needs probes"));
    }
    if params_a.output_dim() != params_b.output_dim() {
        return Err(Error::invalid("output dimensions differ"));
    }
    let z = params_a.output_dim();
    let mut u_a = Matrix::zeros(probes.len(), z);
    let mut u_b = Matrix::zeros(probes.len(), z);
    for (i, p) in probes.iter().enumerate() {
        let fa = params_a.forward(p)?;
        let fb = params_b.forward(p)?;
        for j in 0..z {
            u_a[(i, j)] = fa[j];
            u_b[(i, j)] = fb[j];
        }
    }
    let rotation = if align {
        Some(numerics::polar_orthogonal(&u_b.matmul_transpose_left(&u_a))?)
    } else {
        None
    };
    let mut total = 0.0;
    for i in 0..probes.len() {
        let ua = u_a.row(i);
        let ub = u_b.row(i);
        let aligned: Vec<f64> = match &rotation {
            Some(o) => o.matvec_transpose(ub),
            None => ub.to_vec(),
        };
        let diff: f64 = aligned
            .iter()
            .zip(ua)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        total += diff / (norm2(ua) + 1e-12);
    }
    Ok(total / probes.len() as f64)
}

// ---------------------------------------------------------------------------
// Feature-matrix loss pieces shared with the trainers
// ---------------------------------------------------------------------------

/// Value of the trace-form loss `-(1/N) sum alpha_q s_nq` for the given
/// feature-matrix form, evaluated without materializing C_V.
pub(crate) fn cv_loss_value(
    params: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &FeatureMatrixSpec,
) -> Result<f64> {
    let v = params.v();
    let w = params.w();
    let act = params.activation();
    let m = params.width();
    let n = dataset.num_anchors();
    let d_prime = spec.delta_prime(m);
    let mut total = 0.0;
    for a in 0..n {
        let feat_anchor = features(v, act, dataset.anchor(a));
        let wa = w.matvec_transpose(&feat_anchor);
        for p in dataset.pairs_of(a) {
            let feat_pair = features(v, act, &p.point);
            let wp = w.matvec_transpose(&feat_pair);
            let s = match spec.form {
                CvForm::Dot => dot(&wp, &wa) / m as f64,
                CvForm::CosineBound => {
                    dot(&wp, &wa)
                        / ((norm2(&feat_pair) + d_prime) * (norm2(&feat_anchor) + d_prime))
                }
            };
            total += p.alpha * s;
        }
    }
    Ok(-total / n as f64)
}

/// Gradient of [`cv_loss_value`] with respect to the output layer:
/// `-(C_V + C_V^T) W`, assembled from rank-1 terms.
pub(crate) fn cv_loss_w_gradient(
    params: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &FeatureMatrixSpec,
) -> Result<Matrix> {
    let v = params.v();
    let w = params.w();
    let act = params.activation();
    let m = params.width();
    let n = dataset.num_anchors();
    let inv_n = 1.0 / n as f64;
    let d_prime = spec.delta_prime(m);
    let mut grad = Matrix::zeros(m, params.output_dim());
    for a in 0..n {
        let feat_anchor = features(v, act, dataset.anchor(a));
        let wa = w.matvec_transpose(&feat_anchor);
        for p in dataset.pairs_of(a) {
            let feat_pair = features(v, act, &p.point);
            let wp = w.matvec_transpose(&feat_pair);
            let coef = match spec.form {
                CvForm::Dot => -p.alpha * inv_n / m as f64,
                CvForm::CosineBound => {
                    -p.alpha * inv_n
                        / ((norm2(&feat_pair) + d_prime) * (norm2(&feat_anchor) + d_prime))
                }
            };
            // d/dW of alpha (W^T a_p).(W^T a_a) coef = coef (a_p wa^T + a_a wp^T)
            grad.add_outer(coef, &feat_pair, &wa);
            grad.add_outer(coef, &feat_anchor, &wp);
        }
    }
    Ok(grad)
}

/// Gradient of [`cv_loss_value`] with respect to the first layer.
pub(crate) fn cv_loss_v_gradient(
    params: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &FeatureMatrixSpec,
) -> Result<Matrix> {
    let v = params.v();
    let w = params.w();
    let act = params.activation();
    let m = params.width();
    let n = dataset.num_anchors();
    let inv_n = 1.0 / n as f64;
    let d_prime = spec.delta_prime(m);
    let mut grad = Matrix::zeros(m, params.input_dim());

    for a in 0..n {
        let anchor = dataset.anchor(a);
        let pre_anchor = v.matvec(anchor);
        let feat_anchor: Vec<f64> = pre_anchor.iter().map(|&u| act.phi(u)).collect();
        let wa = w.matvec_transpose(&feat_anchor);
        for p in dataset.pairs_of(a) {
            let pre_pair = v.matvec(&p.point);
            let feat_pair: Vec<f64> = pre_pair.iter().map(|&u| act.phi(u)).collect();
            let wp = w.matvec_transpose(&feat_pair);
            let coef = -p.alpha * inv_n;
            match spec.form {
                CvForm::Dot => {
                    // s = (1/M) wp.wa; d s/d a_anchor = (1/M) W wp, etc.
                    let mut da = w.matvec(&wp);
                    let mut dp = w.matvec(&wa);
                    for x in da.iter_mut() {
                        *x *= coef / m as f64;
                    }
                    for x in dp.iter_mut() {
                        *x *= coef / m as f64;
                    }
                    accumulate_feature_gradient(&mut grad, &da, &pre_anchor, anchor, act);
                    accumulate_feature_gradient(&mut grad, &dp, &pre_pair, &p.point, act);
                }
                CvForm::CosineBound => {
                    let na = norm2(&feat_anchor);
                    let np = norm2(&feat_pair);
                    let denom = (na + d_prime) * (np + d_prime);
                    let s = dot(&wp, &wa) / denom;
                    // d s/d a_anchor = W wp / denom - s a_anchor/(||a||(||a||+d'))
                    let mut da = w.matvec(&wp);
                    for x in da.iter_mut() {
                        *x /= denom;
                    }
                    if na >= 1e-12 {
                        let c2 = s / (na * (na + d_prime));
                        for (x, f) in da.iter_mut().zip(&feat_anchor) {
                            *x -= c2 * f;
                        }
                    }
                    let mut dp = w.matvec(&wa);
                    for x in dp.iter_mut() {
                        *x /= denom;
                    }
                    if np >= 1e-12 {
                        let c2 = s / (np * (np + d_prime));
                        for (x, f) in dp.iter_mut().zip(&feat_pair) {
                            *x -= c2 * f;
                        }
                    }
                    for x in da.iter_mut() {
                        *x *= coef;
                    }
                    for x in dp.iter_mut() {
                        *x *= coef;
                    }
                    accumulate_feature_gradient(&mut grad, &da, &pre_anchor, anchor, act);
                    accumulate_feature_gradient(&mut grad, &dp, &pre_pair, &p.point, act);
                }
            }
        }
    }
    Ok(grad)
}

/// `grad_V += (d_feat . phi'(pre)) x^T`
fn accumulate_feature_gradient(
    grad: &mut Matrix,
    d_feat: &[f64],
    pre: &[f64],
    x: &[f64],
    act: Activation,
) {
    for (i, (&df, &u)) in d_feat.iter().zip(pre).enumerate() {
        let c = df * act.phi_prime(u);
        if c != 0.0 {
            let row_start = i * grad.cols();
            let row = &mut grad.data_mut()[row_start..row_start + x.len()];
            for (j, &xj) in x.iter().enumerate() {
                row[j] += c * xj;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Iterative PCA + descent
// ---------------------------------------------------------------------------

/// Alternating optimization: per iteration, (a) set W to the exact trace
/// maximizer of the current symmetrized feature matrix, then (b) take one
/// descent step on V with W fixed. The trace records the attained objective
/// (as a negated loss) per iteration.
pub fn iterative_pca_train(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &FeatureMatrixSpec,
    eta: f64,
    steps: usize,
) -> Result<(NetworkParams, TrainTrace)> {
    if params0.depth() != 1 {
        return Err(Error::invalid("iterative PCA training needs depth 1"));
    }
    let mut params = params0.clone();
    let mut trace = TrainTrace::new();
    let v0 = params0.v().clone();
    let w0_fro = params0.w().frobenius_norm();

    for t in 1..=steps {
        let cv = compute_cv(params.v(), params.activation(), dataset, spec)?;
        let c_tilde = symmetrize(&cv)?;
        let solution = pca_top(&c_tilde, params.output_dim()).map_err(|e| {
            Error::NumericalFailure(format!("trace maximization failed at iteration {t}: {e}"))
        })?;
        params = params.with_output_layer(solution.w_star.clone())?;

        let grad_v = cv_loss_v_gradient(&params, dataset, spec)?;
        let new_v = params.v().add_scaled(&grad_v, -eta);
        params = params.with_first_layer(new_v)?;

        let v_drift = params.v().sub(&v0);
        let w_drift = params.w().sub(params0.w());
        trace.records.push(TraceRecord {
            step: t,
            loss: -solution.objective,
            drift_max: vec![v_drift.max_abs(), w_drift.max_abs()],
            drift_fro: vec![v_drift.frobenius_norm(), w_drift.frobenius_norm()],
            ntk_drift_max: None,
            cv_drift_fro: None,
            w_rel: if w0_fro > 0.0 {
                w_drift.frobenius_norm() / w0_fro
            } else {
                0.0
            },
            cv_rel: None,
        });
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_network, NetworkArch};
    use crate::numerics::qr_orthonormalize;
    use crate::similarity::{similarity, Pair, SimilaritySpec};

    fn arch(d: usize, m: usize, z: usize) -> NetworkArch {
        NetworkArch::new(d, m, z, 1, Activation::Relu).unwrap()
    }

    fn small_dataset() -> ContrastiveDataset {
        ContrastiveDataset::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![
                vec![
                    Pair { point: vec![0.9, 0.1], alpha: 1.0 },
                    Pair { point: vec![0.1, 0.8], alpha: -1.0 },
                ],
                vec![
                    Pair { point: vec![0.2, 0.9], alpha: 1.0 },
                    Pair { point: vec![0.7, 0.3], alpha: -1.0 },
                ],
            ],
        )
        .unwrap()
    }

    #[test]
    fn cv_hand_case_single_unit() {
        // M=1, N=Q=1, identity-like activation, V = [1, 0], x = pair = (1,0):
        // the dot form gives exactly 1, the cosine-bound form 1/(1+d')^2.
        let v = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let ds = ContrastiveDataset::new(
            vec![vec![1.0, 0.0]],
            vec![vec![Pair { point: vec![1.0, 0.0], alpha: 1.0 }]],
        )
        .unwrap();
        let cv = compute_cv(&v, Activation::Linear, &ds, &FeatureMatrixSpec::dot()).unwrap();
        assert_eq!(cv.rows(), 1);
        assert!((cv[(0, 0)] - 1.0).abs() < 1e-15);

        let spec = FeatureMatrixSpec::cosine_bound(0.5).unwrap();
        let d_prime = spec.delta_prime(1);
        let cv = compute_cv(&v, Activation::Linear, &ds, &spec).unwrap();
        assert!((cv[(0, 0)] - 1.0 / ((1.0 + d_prime) * (1.0 + d_prime))).abs() < 1e-15);
    }

    #[test]
    fn cv_negating_signs_negates_matrix() {
        let a = arch(2, 6, 2);
        let p = init_network(a, 4).unwrap();
        let ds = small_dataset();
        let spec = FeatureMatrixSpec::cosine_bound(0.1).unwrap();
        let cv = compute_cv(p.v(), p.activation(), &ds, &spec).unwrap();
        let cv_neg = compute_cv(p.v(), p.activation(), &ds.with_negated_signs(), &spec).unwrap();
        for (x, y) in cv.data().iter().zip(cv_neg.data()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn cv_cosine_bound_summands_are_normalized() {
        // Each (n,q) summand of the cosine-bound form has Frobenius norm
        // at most 1 before averaging.
        let a = arch(2, 8, 2);
        let p = init_network(a, 11).unwrap();
        let ds = small_dataset();
        let spec = FeatureMatrixSpec::cosine_bound(0.05).unwrap();
        let d_prime = spec.delta_prime(8);
        for n in 0..ds.num_anchors() {
            let fa = features(p.v(), p.activation(), ds.anchor(n));
            for pair in ds.pairs_of(n) {
                let fp = features(p.v(), p.activation(), &pair.point);
                let mut term = Matrix::zeros(8, 8);
                term.add_outer(
                    1.0 / ((norm2(&fp) + d_prime) * (norm2(&fa) + d_prime)),
                    &fp,
                    &fa,
                );
                assert!(term.frobenius_norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn symmetrize_cases() {
        let sym = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]);
        assert_eq!(symmetrize(&sym).unwrap(), sym);

        let c = Matrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]);
        let s = symmetrize(&c).unwrap();
        assert_eq!(s[(0, 1)], 1.0);
        assert_eq!(s[(1, 0)], 1.0);

        let c = Matrix::from_rows(&[vec![1.0, 5.0], vec![7.0, 2.0]]);
        assert_eq!(symmetrize(&c).unwrap().trace(), 3.0);
    }

    #[test]
    fn pca_diagonal_case() {
        let c = Matrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ]);
        let sol = pca_top(&c, 2).unwrap();
        assert!((sol.objective - 4.0).abs() < 1e-12);
        assert_eq!(sol.eigenvalues.len(), 3);
        // Sign-fixed standard basis vectors.
        assert!((sol.w_star[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((sol.w_star[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(!sol.degenerate_eigengap);
    }

    #[test]
    fn pca_isotropic_case_flags_degeneracy() {
        let c = Matrix::identity(3);
        let sol = pca_top(&c, 1).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!(sol.degenerate_eigengap);
        assert!((norm2(&sol.w_star.col(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_beats_random_competitors() {
        let g = numerics::gaussian_matrix(32, 32, 15).unwrap();
        let c = g.add_scaled(&g.transpose(), 1.0).scaled(0.5);
        let sol = pca_top(&c, 4).unwrap();
        for seed in 0..100 {
            let q = qr_orthonormalize(&numerics::gaussian_matrix(32, 4, 1000 + seed).unwrap())
                .unwrap();
            let value = q.matmul_transpose_left(&c.matmul(&q)).trace();
            assert!(
                sol.objective >= value - 1e-9,
                "random competitor {seed} beat the eigen solution: {value} > {}",
                sol.objective
            );
        }
    }

    #[test]
    fn pca_solution_dump_has_eigenvalue_header() {
        let c = Matrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ]);
        let sol = pca_top(&c, 2).unwrap();
        let dump = sol.to_csv();
        let mut lines = dump.lines();
        let head = lines.next().unwrap();
        assert!(head.starts_with("eigenvalues,"));
        assert_eq!(head.split(',').count(), 4); // label + Z+1 values
        assert_eq!(lines.count(), 3); // 3 rows of W*
    }

    #[test]
    fn pca_rejects_full_rank_request() {
        let c = Matrix::identity(3);
        assert!(pca_top(&c, 3).is_err());
        assert!(pca_top(&c, 0).is_err());
    }

    #[test]
    fn representation_diff_zero_for_same_params() {
        let a = arch(2, 8, 3);
        let p = init_network(a, 2).unwrap();
        let probes = vec![
            vec![0.3, -0.6],
            vec![1.0, 0.4],
            vec![-0.5, 0.2],
            vec![0.1, 0.9],
        ];
        let d = representation_diff(&p, &p, &probes, true).unwrap();
        assert!(d <= 1e-10, "self-difference {d}");
    }

    #[test]
    fn representation_diff_alignment_recovers_rotation() {
        let a = arch(3, 16, 3);
        let p = init_network(a, 7).unwrap();
        let rot = qr_orthonormalize(&numerics::gaussian_matrix(3, 3, 99).unwrap()).unwrap();
        let rotated = p.with_output_layer(p.w().matmul(&rot)).unwrap();
        let probes: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                (0..3)
                    .map(|j| numerics::counter_normal(70 + i, j as u64) * 0.5)
                    .collect()
            })
            .collect();
        let aligned = representation_diff(&p, &rotated, &probes, true).unwrap();
        assert!(aligned <= 1e-10, "aligned diff {aligned}");
        let unaligned = representation_diff(&p, &rotated, &probes, false).unwrap();
        assert!(unaligned > 1e-3, "rotation should be visible unaligned");
    }

    #[test]
    fn alignment_beats_random_rotations() {
        // The polar factor minimizes ||U_b O - U_a||_F over orthogonal O;
        // check it against 100 random competitors in that metric.
        let a = arch(3, 12, 3);
        let p = init_network(a, 40).unwrap();
        let q = init_network(a, 41).unwrap();
        let probes: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                (0..3)
                    .map(|j| numerics::counter_normal(900 + i, j as u64))
                    .collect()
            })
            .collect();
        let reps = |net: &NetworkParams| {
            let mut u = Matrix::zeros(probes.len(), 3);
            for (i, x) in probes.iter().enumerate() {
                let f = net.forward(x).unwrap();
                for j in 0..3 {
                    u[(i, j)] = f[j];
                }
            }
            u
        };
        let u_a = reps(&p);
        let u_b = reps(&q);
        let best_o = numerics::polar_orthogonal(&u_b.matmul_transpose_left(&u_a)).unwrap();
        let residual = |o: &Matrix| u_b.matmul(o).sub(&u_a).frobenius_norm();
        let best = residual(&best_o);
        for seed in 0..100 {
            let rot = qr_orthonormalize(&numerics::gaussian_matrix(3, 3, 5000 + seed).unwrap())
                .unwrap();
            let res = residual(&rot);
            assert!(best <= res + 1e-9, "seed {seed}: {best} > {res}");
        }
    }

    #[test]
    fn cosine_bound_undercuts_true_cosine_for_aligned_pairs() {
        // With an orthonormal output layer, ||W^T a|| <= ||a||, so whenever
        // the projected features align nonnegatively the floored cosine of
        // the representations dominates the feature-level bound.
        let a = arch(2, 10, 3);
        let p = init_network(a, 23).unwrap();
        let w = qr_orthonormalize(p.w()).unwrap();
        let p = p.with_output_layer(w).unwrap();
        let delta = 0.2;
        let spec = SimilaritySpec::cosine(delta).unwrap();
        let d_prime = (10f64).sqrt() * delta;
        let ds = small_dataset();
        let mut checked = 0;
        for n in 0..ds.num_anchors() {
            let fa = features(p.v(), p.activation(), ds.anchor(n));
            let ra = p.forward(ds.anchor(n)).unwrap();
            for pair in ds.pairs_of(n) {
                let fp = features(p.v(), p.activation(), &pair.point);
                let rp = p.forward(&pair.point).unwrap();
                let lhs = similarity(&spec, &ra, &rp).unwrap();
                let wa = p.w().matvec_transpose(&fa);
                let wp = p.w().matvec_transpose(&fp);
                let rhs = dot(&wa, &wp) / ((norm2(&fa) + d_prime) * (norm2(&fp) + d_prime));
                if rhs >= 0.0 {
                    checked += 1;
                    assert!(lhs >= rhs - 1e-10, "pair violates the bound: {lhs} < {rhs}");
                }
            }
        }
        assert!(checked > 0, "no nonnegative pairs to check");
    }

    #[test]
    fn iterative_single_step_is_plain_pca() {
        // relu features of nonnegative data with a frozen first layer whose
        // gradient vanishes (all-positive pre-activations and symmetric
        // pairs are not needed: we just compare the output layer).
        let a = arch(2, 6, 2);
        let p = init_network(a, 9).unwrap();
        let ds = small_dataset();
        let spec = FeatureMatrixSpec::dot();
        let cv = compute_cv(p.v(), p.activation(), &ds, &spec).unwrap();
        let sol = pca_top(&symmetrize(&cv).unwrap(), 2).unwrap();
        let (trained, trace) = iterative_pca_train(&p, &ds, &spec, 0.0, 1).unwrap();
        assert_eq!(trained.w().data(), sol.w_star.data());
        assert_eq!(trace.records.len(), 1);
        assert!((trace.records[0].loss + sol.objective).abs() < 1e-12);
    }

    #[test]
    fn iterative_pca_substep_never_decreases_objective() {
        let a = arch(2, 8, 2);
        let p = init_network(a, 31).unwrap();
        let ds = small_dataset();
        let spec = FeatureMatrixSpec::cosine_bound(0.1).unwrap();
        let mut params = p
            .with_output_layer(qr_orthonormalize(p.w()).unwrap())
            .unwrap();
        for _ in 0..5 {
            let cv = compute_cv(params.v(), params.activation(), &ds, &spec).unwrap();
            let c_tilde = symmetrize(&cv).unwrap();
            let before = params
                .w()
                .matmul_transpose_left(&c_tilde.matmul(params.w()))
                .trace();
            let sol = pca_top(&c_tilde, 2).unwrap();
            let after = sol
                .w_star
                .matmul_transpose_left(&c_tilde.matmul(&sol.w_star))
                .trace();
            assert!(after >= before - 1e-10);
            params = params.with_output_layer(sol.w_star).unwrap();
            let grad_v = cv_loss_v_gradient(&params, &ds, &spec).unwrap();
            let new_v = params.v().add_scaled(&grad_v, -0.05);
            params = params.with_first_layer(new_v).unwrap();
        }
    }

    #[test]
    fn cv_v_gradient_matches_finite_differences() {
        let a = NetworkArch::new(2, 5, 2, 1, Activation::Tanh).unwrap();
        let p = init_network(a, 13).unwrap();
        let ds = small_dataset();
        for spec in [
            FeatureMatrixSpec::dot(),
            FeatureMatrixSpec::cosine_bound(0.15).unwrap(),
        ] {
            let grad = cv_loss_v_gradient(&p, &ds, &spec).unwrap();
            let eps = 1e-6;
            for i in 0..p.v().rows() {
                for j in 0..p.v().cols() {
                    let mut vp = p.v().clone();
                    vp[(i, j)] += eps;
                    let mut vm = p.v().clone();
                    vm[(i, j)] -= eps;
                    let lp = cv_loss_value(&p.with_first_layer(vp).unwrap(), &ds, &spec).unwrap();
                    let lm = cv_loss_value(&p.with_first_layer(vm).unwrap(), &ds, &spec).unwrap();
                    let fd = (lp - lm) / (2.0 * eps);
                    assert!(
                        (grad[(i, j)] - fd).abs() <= 1e-7 * fd.abs().max(1.0),
                        "({i},{j}): {} vs {fd}",
                        grad[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn cv_w_gradient_matches_finite_differences() {
        let a = NetworkArch::new(2, 5, 2, 1, Activation::Tanh).unwrap();
        let p = init_network(a, 14).unwrap();
        let ds = small_dataset();
        for spec in [
            FeatureMatrixSpec::dot(),
            FeatureMatrixSpec::cosine_bound(0.15).unwrap(),
        ] {
            let grad = cv_loss_w_gradient(&p, &ds, &spec).unwrap();
            let eps = 1e-6;
            for i in 0..p.w().rows() {
                for j in 0..p.w().cols() {
                    let mut wp = p.w().clone();
                    wp[(i, j)] += eps;
                    let mut wm = p.w().clone();
                    wm[(i, j)] -= eps;
                    let lp = cv_loss_value(&p.with_output_layer(wp).unwrap(), &ds, &spec).unwrap();
                    let lm = cv_loss_value(&p.with_output_layer(wm).unwrap(), &ds, &spec).unwrap();
                    let fd = (lp - lm) / (2.0 * eps);
                    assert!(
                        (grad[(i, j)] - fd).abs() <= 1e-7 * fd.abs().max(1.0),
                        "({i},{j}): {} vs {fd}",
                        grad[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn cv_w_gradient_equals_feature_matrix_product() {
        // The assembled gradient must equal -(C_V + C_V^T) W.
        let a = arch(2, 7, 3);
        let p = init_network(a, 55).unwrap();
        let ds = small_dataset();
        let spec = FeatureMatrixSpec::cosine_bound(0.2).unwrap();
        let grad = cv_loss_w_gradient(&p, &ds, &spec).unwrap();
        let cv = compute_cv(p.v(), p.activation(), &ds, &spec).unwrap();
        let direct = cv
            .add_scaled(&cv.transpose(), 1.0)
            .matmul(p.w())
            .scaled(-1.0);
        assert!(grad.sub(&direct).max_abs() <= 1e-12);
    }
}
