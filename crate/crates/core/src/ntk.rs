//! Empirical tangent kernels, drift metrics, Monte-Carlo expectation
//! estimates, kernel-space training dynamics and a Hessian-norm probe.
//!
//! The empirical kernel of a network is
//! `K_ij(x, y) = (d f_i(x)/d theta)^T (d f_j(y)/d theta)`. For depth-1
//! networks it has the closed form
//!
//! ```text
//! K_ij(x,y) = (x.y / M) sum_q W_qi W_qj phi'(V_q.x) phi'(V_q.y)
//!           + 1_{i=j} (1/M)  sum_q phi(V_q.x) phi(V_q.y)
//! ```
//!
//! which the jacobian-product mode must reproduce to 1e-10; the jacobian
//! mode additionally supports any depth.

use crate::error::{Error, Result};
use crate::model::{init_network, NetworkArch, NetworkParams};
use crate::numerics::{self, dot, Matrix};
use crate::similarity::{linear_loss_ds, similarity_grad, ContrastiveDataset, SimilaritySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkMode {
    ClosedForm,
    Jacobian,
}

/// Representation-magnitude guard for trainers and the dynamics integrator.
pub const DIVERGENCE_GUARD: f64 = 1e12;

// ---------------------------------------------------------------------------
// Empirical kernel
// ---------------------------------------------------------------------------

/// ZxZ empirical kernel block for inputs `x`, `y`.
pub fn empirical_ntk(
    params: &NetworkParams,
    x: &[f64],
    y: &[f64],
    mode: NtkMode,
) -> Result<Matrix> {
    match mode {
        NtkMode::ClosedForm => {
            if params.depth() != 1 {
                return Err(Error::Unsupported(format!(
                    "closed-form kernel is only defined for depth 1, got depth {}",
                    params.depth()
                )));
            }
            let cx = PointCache::new(params, x)?;
            let cy = PointCache::new(params, y)?;
            Ok(closed_form_block(params, &cx, &cy))
        }
        NtkMode::Jacobian => {
            let jx = params.param_gradient(x)?;
            let jy = params.param_gradient(y)?;
            let z = params.output_dim();
            let mut k = Matrix::zeros(z, z);
            for i in 0..z {
                for j in 0..z {
                    k[(i, j)] = dot(jx.row(i), jy.row(j));
                }
            }
            Ok(k)
        }
    }
}

/// Per-point features for the closed form: x, x.x deferred, phi(Vx), phi'(Vx).
struct PointCache {
    point: Vec<f64>,
    features: Vec<f64>,
    slopes: Vec<f64>,
}

impl PointCache {
    fn new(params: &NetworkParams, x: &[f64]) -> Result<Self> {
        if x.len() != params.input_dim() {
            return Err(Error::invalid(format!(
                "kernel input length {} does not match D = {}",
                x.len(),
                params.input_dim()
            )));
        }
        let act = params.activation();
        let pre = params.v().matvec(x);
        let features = pre.iter().map(|&u| act.phi(u)).collect();
        let slopes = pre.iter().map(|&u| act.phi_prime(u)).collect();
        Ok(PointCache {
            point: x.to_vec(),
            features,
            slopes,
        })
    }
}

fn closed_form_block(params: &NetworkParams, cx: &PointCache, cy: &PointCache) -> Matrix {
    let m = params.width();
    let z = params.output_dim();
    let inv_m = 1.0 / m as f64;
    let xy = dot(&cx.point, &cy.point);
    let w = params.w();

    let mut k = Matrix::zeros(z, z);
    let mut feature_overlap = 0.0;
    for q in 0..m {
        let e = cx.slopes[q] * cy.slopes[q];
        feature_overlap += cx.features[q] * cy.features[q];
        if e != 0.0 {
            let w_row = w.row(q);
            for i in 0..z {
                let coef = e * w_row[i];
                if coef != 0.0 {
                    let k_row = &mut k.data_mut()[i * z..(i + 1) * z];
                    for (j, &wqj) in w_row.iter().enumerate() {
                        k_row[j] += coef * wqj;
                    }
                }
            }
        }
    }
    for i in 0..z {
        for j in 0..z {
            k[(i, j)] *= xy * inv_m;
        }
    }
    for i in 0..z {
        k[(i, i)] += feature_overlap * inv_m;
    }
    k
}

// ---------------------------------------------------------------------------
// Kernel tables
// ---------------------------------------------------------------------------

/// Empirical kernel evaluated on a fixed point set: one ZxZ block per
/// ordered point pair.
#[derive(Debug, Clone)]
pub struct KernelTable {
    points: Vec<Vec<f64>>,
    out_dim: usize,
    blocks: Vec<Matrix>, // blocks[a * n + b] = K(x_a, x_b)
}

const TABLE_SYMMETRY_TOL: f64 = 1e-10;

impl KernelTable {
    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn block(&self, a: usize, b: usize) -> &Matrix {
        &self.blocks[a * self.points.len() + b]
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().fold(0.0f64, |m, b| m.max(b.max_abs()))
    }

    /// The full (n Z) x (n Z) kernel matrix, rows/cols indexed point-major.
    pub fn full_matrix(&self) -> Matrix {
        let n = self.points.len();
        let z = self.out_dim;
        let mut full = Matrix::zeros(n * z, n * z);
        for a in 0..n {
            for b in 0..n {
                let blk = self.block(a, b);
                for i in 0..z {
                    for j in 0..z {
                        full[(a * z + i, b * z + j)] = blk[(i, j)];
                    }
                }
            }
        }
        full
    }

    fn check_symmetry(&self) -> Result<()> {
        let n = self.points.len();
        for a in 0..n {
            for b in a..n {
                let kab = self.block(a, b);
                let kba = self.block(b, a);
                for i in 0..self.out_dim {
                    for j in 0..self.out_dim {
                        if (kab[(i, j)] - kba[(j, i)]).abs() > TABLE_SYMMETRY_TOL {
                            return Err(Error::NumericalFailure(format!(
                                "kernel table asymmetric at points ({a},{b}), entry ({i},{j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// CSV dump with header `i,j,a,b,value`, rows nested in that order,
    /// 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.points.len();
        let z = self.out_dim;
        let mut out = String::from("i,j,a,b,value\n");
        for i in 0..z {
            for j in 0..z {
                for a in 0..n {
                    for b in 0..n {
                        let v = self.block(a, b)[(i, j)];
                        out.push_str(&format!("{i},{j},{a},{b},{v:.16e}\n"));
                    }
                }
            }
        }
        out
    }
}

/// Kernel blocks for every ordered pair of probe points. Symmetry
/// `K(a,b) = K(b,a)^T` is checked at 1e-10.
pub fn ntk_table(
    params: &NetworkParams,
    probe_points: &[Vec<f64>],
    mode: NtkMode,
) -> Result<KernelTable> {
    if probe_points.is_empty() {
        return Err(Error::invalid("kernel table needs at least one point"));
    }
    let n = probe_points.len();
    let z = params.output_dim();
    let mut blocks = Vec::with_capacity(n * n);
    match mode {
        NtkMode::ClosedForm => {
            if params.depth() != 1 {
                return Err(Error::Unsupported(
                    "closed-form kernel is only defined for depth 1".to_string(),
                ));
            }
            let caches = probe_points
                .iter()
                .map(|p| PointCache::new(params, p))
                .collect::<Result<Vec<_>>>()?;
            for ca in &caches {
                for cb in &caches {
                    blocks.push(closed_form_block(params, ca, cb));
                }
            }
        }
        NtkMode::Jacobian => {
            let jacs = probe_points
                .iter()
                .map(|p| params.param_gradient(p))
                .collect::<Result<Vec<_>>>()?;
            for ja in &jacs {
                for jb in &jacs {
                    let mut k = Matrix::zeros(z, z);
                    for i in 0..z {
                        for j in 0..z {
                            k[(i, j)] = dot(ja.row(i), jb.row(j));
                        }
                    }
                    blocks.push(k);
                }
            }
        }
    }
    let table = KernelTable {
        points: probe_points.to_vec(),
        out_dim: z,
        blocks,
    };
    table.check_symmetry()?;
    Ok(table)
}

// ---------------------------------------------------------------------------
// Drift metrics
// ---------------------------------------------------------------------------

/// Change of a kernel table against a reference table.
#[derive(Debug, Clone, Copy)]
pub struct DriftMetrics {
    /// max entry-wise |K_t - K_0|.
    pub max_abs_change: f64,
    /// Frobenius norm of the stacked difference.
    pub frobenius_change: f64,
    /// max-abs change divided by the max-abs entry of the reference.
    pub relative_change: f64,
}

pub fn ntk_drift(table_t: &KernelTable, table_0: &KernelTable) -> Result<DriftMetrics> {
    if table_t.num_points() != table_0.num_points() || table_t.out_dim != table_0.out_dim {
        return Err(Error::invalid(format!(
            "kernel tables have mismatched shapes: {} points / Z={} vs {} points / Z={}",
            table_t.num_points(),
            table_t.out_dim,
            table_0.num_points(),
            table_0.out_dim
        )));
    }
    let mut max_abs = 0.0f64;
    let mut fro = 0.0f64;
    for (bt, b0) in table_t.blocks.iter().zip(&table_0.blocks) {
        for (x, y) in bt.data().iter().zip(b0.data()) {
            let d = x - y;
            max_abs = max_abs.max(d.abs());
            fro += d * d;
        }
    }
    let base = table_0.max_abs();
    let relative = if max_abs == 0.0 { 0.0 } else { max_abs / base };
    Ok(DriftMetrics {
        max_abs_change: max_abs,
        frobenius_change: fro.sqrt(),
        relative_change: relative,
    })
}

// ---------------------------------------------------------------------------
// Monte-Carlo estimate of the expected kernel
// ---------------------------------------------------------------------------

/// Mean kernel over fresh initializations with its per-entry standard error.
#[derive(Debug, Clone)]
pub struct MonteCarloKernel {
    pub mean: KernelTable,
    pub std_error: KernelTable,
    pub n_seeds: usize,
}

/// Estimate `E_theta[K(x, y; theta)]` by averaging the empirical kernel of
/// `n_seeds` fresh initializations (seeds derived from `seed`).
pub fn estimate_analytical_ntk(
    arch: NetworkArch,
    probe_points: &[Vec<f64>],
    n_seeds: usize,
    seed: u64,
) -> Result<MonteCarloKernel> {
    if n_seeds < 2 {
        return Err(Error::invalid("need at least 2 seeds for a standard error"));
    }
    let mode = if arch.depth == 1 {
        NtkMode::ClosedForm
    } else {
        NtkMode::Jacobian
    };
    let mut tables = Vec::with_capacity(n_seeds);
    for s in 0..n_seeds {
        let params = init_network(arch, numerics::derive_seed(seed, s as u64))?;
        tables.push(ntk_table(&params, probe_points, mode)?);
    }
    let n = probe_points.len();
    let z = arch.output_dim;
    let count = n_seeds as f64;
    let mut mean_blocks = Vec::with_capacity(n * n);
    let mut se_blocks = Vec::with_capacity(n * n);
    for idx in 0..n * n {
        let mut mean = Matrix::zeros(z, z);
        for t in &tables {
            mean = mean.add_scaled(&t.blocks[idx], 1.0 / count);
        }
        let mut var = Matrix::zeros(z, z);
        for t in &tables {
            let d = t.blocks[idx].sub(&mean);
            for (v, e) in var.data_mut().iter_mut().zip(d.data()) {
                *v += e * e;
            }
        }
        let mut se = var;
        for v in se.data_mut() {
            *v = (*v / (count * (count - 1.0))).sqrt();
        }
        mean_blocks.push(mean);
        se_blocks.push(se);
    }
    Ok(MonteCarloKernel {
        mean: KernelTable {
            points: probe_points.to_vec(),
            out_dim: z,
            blocks: mean_blocks,
        },
        std_error: KernelTable {
            points: probe_points.to_vec(),
            out_dim: z,
            blocks: se_blocks,
        },
        n_seeds,
    })
}

// ---------------------------------------------------------------------------
// Kernel-space dynamics
// ---------------------------------------------------------------------------

/// Representations of every tracked point (rows) at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct RepState {
    pub reps: Matrix,
}

impl RepState {
    pub fn from_params(params: &NetworkParams, points: &[Vec<f64>]) -> Result<Self> {
        let mut reps = Matrix::zeros(points.len(), params.output_dim());
        for (i, p) in points.iter().enumerate() {
            let f = params.forward(p)?;
            for (j, v) in f.iter().enumerate() {
                reps[(i, j)] = *v;
            }
        }
        Ok(RepState { reps })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.reps.row(i)
    }
}

/// Point list the dynamics integrator evolves: anchors in dataset order,
/// then pairs grouped by anchor, then the extra probe points.
pub fn dynamics_points(dataset: &ContrastiveDataset, probes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = dataset.anchors().to_vec();
    for n in 0..dataset.num_anchors() {
        for p in dataset.pairs_of(n) {
            pts.push(p.point.clone());
        }
    }
    pts.extend_from_slice(probes);
    pts
}

/// Explicit-Euler integration of the representation dynamics with a frozen
/// kernel.
///
/// Per step every tracked representation moves by
/// `-eta (1/N) sum_{n,q} (dl/ds) [ K(p, x_n) g(x_n, x_nq) + K(p, x_nq) g(x_nq, x_n) ]`
/// where the similarity gradients `g` are evaluated at the CURRENT
/// representations and the kernel blocks stay fixed. Returns all states,
/// initial included. Any entry exceeding 1e12 in magnitude aborts.
pub fn integrate_ntk_dynamics(
    kernel: &KernelTable,
    initial: &RepState,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    eta: f64,
    steps: usize,
) -> Result<Vec<RepState>> {
    let n = dataset.num_anchors();
    let q = dataset.pairs_per_anchor();
    let n_points = kernel.num_points();
    if n_points < n + n * q {
        return Err(Error::invalid(format!(
            "kernel table covers {n_points} points but the dataset needs {}",
            n + n * q
        )));
    }
    if initial.reps.rows() != n_points || initial.reps.cols() != kernel.out_dim {
        return Err(Error::invalid(
            "initial representation state does not match the kernel table",
        ));
    }
    let z = kernel.out_dim;
    let inv_n = 1.0 / n as f64;
    let pair_index = |a: usize, k: usize| n + a * q + k;

    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial.clone());
    let mut current = initial.clone();

    for step in 1..=steps {
        // Cotangent per source point, from the current representations.
        let mut cots: Vec<Vec<f64>> = vec![vec![0.0; z]; n_points];
        for a in 0..n {
            let f_anchor = current.reps.row(a).to_vec();
            for (k, pair) in dataset.pairs_of(a).iter().enumerate() {
                let f_pair = current.reps.row(pair_index(a, k)).to_vec();
                let dl_ds = linear_loss_ds(pair.alpha);
                let g_anchor = similarity_grad(spec, &f_anchor, &f_pair)?;
                for (c, g) in cots[a].iter_mut().zip(&g_anchor) {
                    *c += dl_ds * g;
                }
                let g_pair = similarity_grad(spec, &f_pair, &f_anchor)?;
                for (c, g) in cots[pair_index(a, k)].iter_mut().zip(&g_pair) {
                    *c += dl_ds * g;
                }
            }
        }
        let mut next = current.clone();
        for p in 0..n_points {
            let upd = &mut next.reps.data_mut()[p * z..(p + 1) * z];
            for (s, cot) in cots.iter().enumerate() {
                if cot.iter().all(|c| *c == 0.0) {
                    continue;
                }
                let blk = kernel.block(p, s);
                for zz in 0..z {
                    upd[zz] -= eta * inv_n * dot(blk.row(zz), cot);
                }
            }
        }
        for (idx, v) in next.reps.data().iter().enumerate() {
            if !v.is_finite() || v.abs() > DIVERGENCE_GUARD {
                return Err(Error::Divergence {
                    step,
                    quantity: format!("representation entry {idx}"),
                    value: *v,
                });
            }
        }
        states.push(next.clone());
        current = next;
    }
    Ok(states)
}

// ---------------------------------------------------------------------------
// Hessian spectral norm probe
// ---------------------------------------------------------------------------

const HESSIAN_MAX_PARAMS: usize = 200_000;
const HESSIAN_POWER_ITERS: usize = 200;
const HESSIAN_POWER_TOL: f64 = 1e-6;

/// Power-iteration estimate of the spectral norm of the Hessian of `f_z(x)`
/// with respect to all parameters.
///
/// Hessian-vector products use central finite differences of the exact
/// gradient with `eps = 1e-4 * (1 + max|theta|)`, so the probe is
/// reproducible from `(params, x, z)` alone. Smooth activations only.
pub fn hessian_spectral_norm(params: &NetworkParams, x: &[f64], z: usize) -> Result<f64> {
    if !params.activation().is_smooth() {
        return Err(Error::Unsupported(
            "hessian probe needs a smooth activation (tanh, sigmoid or linear)".to_string(),
        ));
    }
    if z >= params.output_dim() {
        return Err(Error::invalid(format!("output index {z} out of range")));
    }
    let p = params.param_count();
    if p > HESSIAN_MAX_PARAMS {
        return Err(Error::invalid(format!(
            "hessian probe supports at most {HESSIAN_MAX_PARAMS} parameters, got {p}"
        )));
    }
    let eps = 1e-4 * (1.0 + params.max_abs_weight());
    let mut cot = vec![0.0; params.output_dim()];
    cot[z] = 1.0;
    let grad_at = |theta: &NetworkParams| -> Vec<f64> {
        let mut g = vec![0.0; p];
        theta.vjp_accumulate(x, &cot, 1.0, &mut g);
        g
    };

    let mut v: Vec<f64> = (0..p)
        .map(|k| numerics::counter_normal(0x4E55_0001, k as u64))
        .collect();
    normalize(&mut v);
    let mut estimate = 0.0f64;
    for it in 0..HESSIAN_POWER_ITERS {
        let plus = grad_at(&params.add_flat(&v, eps)?);
        let minus = grad_at(&params.add_flat(&v, -eps)?);
        let hv: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
        let norm = numerics::norm2(&hv);
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = hv;
        normalize(&mut v);
        if it > 0 && (norm - estimate).abs() <= HESSIAN_POWER_TOL * norm {
            return Ok(norm);
        }
        estimate = norm;
    }
    Err(Error::NoConvergence {
        iterations: HESSIAN_POWER_ITERS,
        best: estimate,
    })
}

fn normalize(v: &mut [f64]) {
    let n = numerics::norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::similarity::Pair;

    fn arch(d: usize, m: usize, z: usize, depth: usize, act: Activation) -> NetworkArch {
        NetworkArch::new(d, m, z, depth, act).unwrap()
    }

    /// 1-D linear net with explicit weight vectors w, v.
    fn linear_1d(w: &[f64], v: &[f64]) -> NetworkParams {
        let m = w.len();
        let a = arch(1, m, 1, 1, Activation::Linear);
        NetworkParams::from_weights(
            a,
            vec![
                Matrix::from_vec(m, 1, v.to_vec()),
                Matrix::from_vec(m, 1, w.to_vec()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn closed_form_hand_1d_linear() {
        // K(x,y) = P x y with P = (1/M) sum (v^2 + w^2) = 2 here.
        let p = linear_1d(&[1.0, 1.0], &[1.0, 1.0]);
        for mode in [NtkMode::ClosedForm, NtkMode::Jacobian] {
            let k = empirical_ntk(&p, &[1.0], &[3.0], mode).unwrap();
            assert!((k[(0, 0)] - 6.0).abs() < 1e-12, "mode {mode:?}");
        }
    }

    #[test]
    fn kernel_scale_identity_for_1d_linear_nets() {
        // K(x,y) = P * x * y exactly, P computed independently from weights.
        let w = [0.7, -1.3, 0.2];
        let v = [1.1, 0.4, -0.9];
        let p = linear_1d(&w, &v);
        let pm: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| wi * wi + vi * vi)
            .sum::<f64>()
            / 3.0;
        for (x, y) in [(1.0, 1.0), (0.5, -2.0), (3.0, 0.25)] {
            let k = empirical_ntk(&p, &[x], &[y], NtkMode::ClosedForm).unwrap();
            assert!((k[(0, 0)] - pm * x * y).abs() <= 1e-12 * pm.abs().max(1.0));
        }
    }

    #[test]
    fn zero_output_layer_leaves_only_feature_term() {
        let a = arch(3, 8, 4, 1, Activation::Linear);
        let p = init_network(a, 17).unwrap();
        let p = p.with_output_layer(Matrix::zeros(8, 4)).unwrap();
        let x = [0.5, -0.2, 0.8];
        let y = [1.0, 0.3, -0.4];
        let k = empirical_ntk(&p, &x, &y, NtkMode::ClosedForm).unwrap();
        let vx = p.v().matvec(&x);
        let vy = p.v().matvec(&y);
        let expected = dot(&vx, &vy) / 8.0;
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert!((k[(i, j)] - expected).abs() < 1e-12);
                } else {
                    assert_eq!(k[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn modes_agree_on_random_tanh_net() {
        let a = arch(4, 16, 3, 1, Activation::Tanh);
        let p = init_network(a, 3).unwrap();
        let x = [0.3, -0.8, 0.5, 0.1];
        let y = [-0.2, 0.9, 0.4, -0.6];
        let kc = empirical_ntk(&p, &x, &y, NtkMode::ClosedForm).unwrap();
        let kj = empirical_ntk(&p, &x, &y, NtkMode::Jacobian).unwrap();
        assert!(kc.sub(&kj).max_abs() <= 1e-10);
    }

    #[test]
    fn closed_form_rejects_depth_2() {
        let a = arch(2, 4, 2, 2, Activation::Tanh);
        let p = init_network(a, 0).unwrap();
        assert!(matches!(
            empirical_ntk(&p, &[1.0, 0.0], &[0.0, 1.0], NtkMode::ClosedForm),
            Err(Error::Unsupported(_))
        ));
        assert!(empirical_ntk(&p, &[1.0, 0.0], &[0.0, 1.0], NtkMode::Jacobian).is_ok());
    }

    #[test]
    fn table_single_and_duplicate_points() {
        let a = arch(2, 8, 2, 1, Activation::Relu);
        let p = init_network(a, 5).unwrap();
        let single = ntk_table(&p, &[vec![0.4, -0.7]], NtkMode::ClosedForm).unwrap();
        assert_eq!(single.num_points(), 1);
        let blk = single.block(0, 0);
        assert!(blk.sub(&blk.transpose()).max_abs() <= 1e-10);

        let dup = ntk_table(
            &p,
            &[vec![0.4, -0.7], vec![0.4, -0.7]],
            NtkMode::ClosedForm,
        )
        .unwrap();
        for a_i in 0..2 {
            for b_i in 0..2 {
                assert!(dup.block(a_i, b_i).sub(dup.block(0, 0)).max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn table_is_positive_semidefinite() {
        let a = arch(3, 16, 2, 1, Activation::Tanh);
        let p = init_network(a, 9).unwrap();
        let points: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                (0..3)
                    .map(|j| numerics::counter_normal(400 + i, j as u64) * 0.5)
                    .collect()
            })
            .collect();
        let table = ntk_table(&p, &points, NtkMode::ClosedForm).unwrap();
        let full = table.full_matrix();
        let eig = numerics::sym_eigen(&full).unwrap();
        let min = *eig.eigenvalues.last().unwrap();
        let trace = full.trace();
        assert!(min >= -1e-8 * trace, "min eigenvalue {min}, trace {trace}");
    }

    #[test]
    fn jacobian_table_symmetry_is_tight() {
        let a = arch(2, 6, 3, 2, Activation::Tanh);
        let p = init_network(a, 31).unwrap();
        let pts = vec![vec![0.2, -0.5], vec![0.8, 0.3], vec![-0.4, 0.1]];
        let t = ntk_table(&p, &pts, NtkMode::Jacobian).unwrap();
        for a_i in 0..3 {
            for b_i in 0..3 {
                let d = t.block(a_i, b_i).sub(&t.block(b_i, a_i).transpose());
                assert!(d.max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn drift_metrics_basics() {
        let a = arch(2, 8, 2, 1, Activation::Relu);
        let p = init_network(a, 5).unwrap();
        let pts = vec![vec![0.4, -0.7], vec![0.3, 0.3]];
        let t0 = ntk_table(&p, &pts, NtkMode::ClosedForm).unwrap();
        let same = ntk_drift(&t0, &t0).unwrap();
        assert_eq!(same.max_abs_change, 0.0);
        assert_eq!(same.frobenius_change, 0.0);
        assert_eq!(same.relative_change, 0.0);

        let mut t1 = t0.clone();
        t1.blocks[0][(0, 1)] += 0.5;
        let d = ntk_drift(&t1, &t0).unwrap();
        assert!((d.max_abs_change - 0.5).abs() < 1e-15);
        assert!((d.frobenius_change - 0.5).abs() < 1e-15);
        assert!((d.relative_change - 0.5 / t0.max_abs()).abs() < 1e-15);
    }

    #[test]
    fn drift_rejects_mismatched_tables() {
        let a = arch(2, 4, 2, 1, Activation::Relu);
        let p = init_network(a, 5).unwrap();
        let t1 = ntk_table(&p, &[vec![0.4, -0.7]], NtkMode::ClosedForm).unwrap();
        let t2 = ntk_table(&p, &[vec![0.4, -0.7], vec![0.0, 0.1]], NtkMode::ClosedForm).unwrap();
        assert!(ntk_drift(&t1, &t2).is_err());
    }

    #[test]
    fn expectation_estimate_matches_known_value() {
        // For the 1-D linear net, E[K(1,1)] = E[(1/M) sum (v^2+w^2)] = 2.
        let a = arch(1, 32, 1, 1, Activation::Linear);
        let mc = estimate_analytical_ntk(a, &[vec![1.0]], 64, 7).unwrap();
        let got = mc.mean.block(0, 0)[(0, 0)];
        let se = mc.std_error.block(0, 0)[(0, 0)];
        assert!(
            (got - 2.0).abs() <= 3.0 * se,
            "estimate {got} with standard error {se}"
        );
    }

    #[test]
    fn expectation_estimate_zero_input_is_exact() {
        let a = arch(2, 8, 2, 1, Activation::Tanh); // tanh(0) = 0
        let mc = estimate_analytical_ntk(a, &[vec![0.0, 0.0]], 4, 3).unwrap();
        assert_eq!(mc.mean.block(0, 0).max_abs(), 0.0);
        assert_eq!(mc.std_error.block(0, 0).max_abs(), 0.0);
    }

    #[test]
    fn standard_error_shrinks_like_sqrt_seeds() {
        let a = arch(1, 16, 1, 1, Activation::Linear);
        let small = estimate_analytical_ntk(a, &[vec![1.0]], 32, 11).unwrap();
        let large = estimate_analytical_ntk(a, &[vec![1.0]], 128, 11).unwrap();
        let ratio = small.std_error.block(0, 0)[(0, 0)] / large.std_error.block(0, 0)[(0, 0)];
        assert!(
            (1.6..2.5).contains(&ratio),
            "standard error ratio {ratio} not near 2"
        );
    }

    #[test]
    fn estimate_needs_two_seeds() {
        let a = arch(1, 4, 1, 1, Activation::Linear);
        assert!(estimate_analytical_ntk(a, &[vec![1.0]], 1, 0).is_err());
    }

    fn triplet_1d() -> ContrastiveDataset {
        ContrastiveDataset::new(
            vec![vec![1.0]],
            vec![vec![
                Pair {
                    point: vec![1.0],
                    alpha: 1.0,
                },
                Pair {
                    point: vec![-1.0],
                    alpha: -1.0,
                },
            ]],
        )
        .unwrap()
    }

    #[test]
    fn dynamics_constant_under_zero_kernel() {
        let ds = triplet_1d();
        let p = linear_1d(&[1.0, 1.0], &[1.0, 1.0]);
        let points = dynamics_points(&ds, &[vec![0.5]]);
        let mut table = ntk_table(&p, &points, NtkMode::ClosedForm).unwrap();
        for b in table.blocks.iter_mut() {
            *b = Matrix::zeros(1, 1);
        }
        let init = RepState::from_params(&p, &points).unwrap();
        let states =
            integrate_ntk_dynamics(&table, &init, &ds, &SimilaritySpec::dot(), 0.1, 5).unwrap();
        for s in &states {
            assert_eq!(s.reps, init.reps);
        }
    }

    #[test]
    fn dynamics_hand_euler_step() {
        // Triplet x = x+ = 1, x- = -1, probe 1; K = 2xy; f0(1) = sqrt(2).
        // One Euler step with eta = 0.01 moves f(1) to 1.08 sqrt(2).
        let ds = triplet_1d();
        let p = linear_1d(&[1.0, 1.0], &[1.0, 1.0]);
        let points = dynamics_points(&ds, &[vec![1.0]]);
        let table = ntk_table(&p, &points, NtkMode::ClosedForm).unwrap();
        let init = RepState::from_params(&p, &points).unwrap();
        assert!((init.reps[(0, 0)] - 2.0f64.sqrt()).abs() < 1e-12);
        let states =
            integrate_ntk_dynamics(&table, &init, &ds, &SimilaritySpec::dot(), 0.01, 1).unwrap();
        let got = states[1].reps[(3, 0)]; // the probe row
        assert!(
            (got - 1.08 * 2.0f64.sqrt()).abs() <= 1e-12,
            "probe after one step: {got}"
        );
    }

    #[test]
    fn dynamics_euler_step_halving_is_first_order() {
        let ds = ContrastiveDataset::new(
            vec![vec![0.8, -0.3], vec![-0.5, 0.6]],
            vec![
                vec![
                    Pair { point: vec![0.7, -0.2], alpha: 1.0 },
                    Pair { point: vec![-0.6, 0.5], alpha: -1.0 },
                ],
                vec![
                    Pair { point: vec![-0.4, 0.7], alpha: 1.0 },
                    Pair { point: vec![0.9, -0.1], alpha: -1.0 },
                ],
            ],
        )
        .unwrap();
        let a = arch(2, 32, 3, 1, Activation::Tanh);
        let p = init_network(a, 13).unwrap();
        let points = dynamics_points(&ds, &[]);
        let table = ntk_table(&p, &points, NtkMode::ClosedForm).unwrap();
        let init = RepState::from_params(&p, &points).unwrap();
        let spec = SimilaritySpec::cosine(0.2).unwrap();

        let horizon = 2.0; // integrate to the same physical time
        let ends: Vec<Matrix> = [0.1f64, 0.05, 0.025]
            .iter()
            .map(|&eta| {
                let steps = (horizon / eta).round() as usize;
                integrate_ntk_dynamics(&table, &init, &ds, &spec, eta, steps)
                    .unwrap()
                    .last()
                    .unwrap()
                    .reps
                    .clone()
            })
            .collect();
        let d1 = ends[0].sub(&ends[1]).frobenius_norm();
        let d2 = ends[1].sub(&ends[2]).frobenius_norm();
        let ratio = d1 / d2;
        assert!(
            (1.5..2.5).contains(&ratio),
            "euler consistency ratio {ratio}"
        );
    }

    #[test]
    fn dynamics_guard_catches_blowup() {
        // Dot-product triplet with a large learning rate blows up in finite
        // time; the guard reports the step.
        let ds = triplet_1d();
        let p = linear_1d(&[1.0, 1.0], &[1.0, 1.0]);
        let points = dynamics_points(&ds, &[]);
        let table = ntk_table(&p, &points, NtkMode::ClosedForm).unwrap();
        let init = RepState::from_params(&p, &points).unwrap();
        let res = integrate_ntk_dynamics(&table, &init, &ds, &SimilaritySpec::dot(), 0.9, 4000);
        match res {
            Err(Error::Divergence { step, .. }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn hessian_probe_hand_linear() {
        // M=D=Z=1 linear: f = w v x, the only curvature couples w and v, so
        // H = [[0, x], [x, 0]] and its norm is |x|.
        let p = linear_1d(&[3.0], &[2.0]);
        for x in [0.5, 1.0, 2.0] {
            let h = hessian_spectral_norm(&p, &[x], 0).unwrap();
            assert!((h - x).abs() <= 1e-5, "x={x}: got {h}");
        }
    }

    /// Dense Hessian of f_z at x by finite differences of the exact gradient.
    fn dense_hessian(p: &NetworkParams, x: &[f64], z: usize, eps: f64) -> Matrix {
        let n = p.param_count();
        let mut cot = vec![0.0; p.output_dim()];
        cot[z] = 1.0;
        let grad = |theta: &NetworkParams| {
            let mut g = vec![0.0; n];
            theta.vjp_accumulate(x, &cot, 1.0, &mut g);
            g
        };
        let mut h = Matrix::zeros(n, n);
        let mut dir = vec![0.0; n];
        for k in 0..n {
            dir[k] = 1.0;
            let gp = grad(&p.add_flat(&dir, eps).unwrap());
            let gm = grad(&p.add_flat(&dir, -eps).unwrap());
            for r in 0..n {
                h[(r, k)] = (gp[r] - gm[r]) / (2.0 * eps);
            }
            dir[k] = 0.0;
        }
        // Symmetrize away the finite-difference noise.
        h.add_scaled(&h.transpose(), 1.0).scaled(0.5)
    }

    #[test]
    fn hessian_probe_matches_dense_oracle_at_origin() {
        // W = V = 0, tanh: only the W-V cross term survives and the norm is
        // ||x|| / sqrt(M).
        let m = 6;
        let d = 3;
        let a = arch(d, m, 2, 1, Activation::Tanh);
        let zeros = NetworkParams::from_weights(
            a,
            vec![Matrix::zeros(m, d), Matrix::zeros(m, 2)],
        )
        .unwrap();
        let x = [0.6, -0.3, 0.2];
        let probe = hessian_spectral_norm(&zeros, &x, 0).unwrap();
        let expected = numerics::norm2(&x) / (m as f64).sqrt();
        assert!((probe - expected).abs() <= 1e-5, "probe {probe} vs {expected}");

        let dense = dense_hessian(&zeros, &x, 0, 1e-4);
        let eig = numerics::sym_eigen(&dense).unwrap();
        let dense_norm = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.abs()));
        assert!((probe - dense_norm).abs() <= 1e-5);
    }

    #[test]
    fn hessian_probe_matches_dense_oracle_random() {
        let a = arch(3, 8, 2, 1, Activation::Tanh);
        let p = init_network(a, 19).unwrap();
        let x = [0.4, -0.9, 0.3];
        let probe = hessian_spectral_norm(&p, &x, 1).unwrap();
        let dense = dense_hessian(&p, &x, 1, 1e-4);
        let eig = numerics::sym_eigen(&dense).unwrap();
        let dense_norm = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.abs()));
        assert!(
            (probe - dense_norm).abs() <= 1e-4 * dense_norm.max(1.0),
            "probe {probe} vs dense {dense_norm}"
        );
    }

    #[test]
    fn hessian_probe_rejects_relu() {
        let a = arch(2, 4, 1, 1, Activation::Relu);
        let p = init_network(a, 0).unwrap();
        assert!(matches!(
            hessian_spectral_norm(&p, &[1.0, 0.5], 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn kernel_csv_has_header_and_rows() {
        let a = arch(2, 4, 2, 1, Activation::Relu);
        let p = init_network(a, 5).unwrap();
        let t = ntk_table(&p, &[vec![0.4, -0.7], vec![0.1, 0.2]], NtkMode::ClosedForm).unwrap();
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "i,j,a,b,value");
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 * 2);
    }
}
