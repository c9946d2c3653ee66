//! Closed-form drift bounds and the exactly solvable 1-D divergence model.
//!
//! Every calculator takes measured constants (never assumed ones): input
//! bound `c_in`, loss-slope bound `c_l`, weight scales `c_theta` and `c_s`,
//! gradient flatness `s_0`, activation Lipschitz/smoothness constants, the
//! cosine floor `delta`, the learning rate and the problem sizes. The
//! formulas:
//!
//! * Hessian norm:        `(a1 R + a2)/sqrt(M)`, `a1 = 4 b c_in^2 L`,
//!   `a2 = 4 L c_in (1 + b c_in s_0 c_s)`
//! * Kernel change:       `2 eps c_0 R`
//! * Weight drift:        `c(t) - c(0)` with `c(t) = c(0)(1 + beta/sqrt(M))^t`,
//!   `c(0) = c_theta log M`, `beta = max(beta1, beta2)`,
//!   `beta1 = 4 c_l c_in Q sqrt(Z) L / delta`, `beta2 = 4 c_l c_in Q D L / delta`
//! * Kernel drift over a horizon `t <= M^a`:
//!   `gamma (c(0) e^{beta M^{a-1/2}}) (a1 R^2 + a2 R)/sqrt(M)` with
//!   `gamma = 2 sqrt(2) D L c_in` and
//!   `R = c(0) sqrt(M) (sqrt(D)+sqrt(Z)) (e^{beta M^{a-1/2}} - 1)`
//! * Feature-matrix drift: `kappa t / sqrt(M)`,
//!   `kappa = 16 delta^-2 eta Q^2 L^2 c_in^2 sqrt(D)`
//! * Representation drift: `zeta (t/sqrt(M)) (1 + xi log M / (l_Z - l_{Z+1}))`,
//!   `zeta = 4 delta^-1 eta Q sqrt(D) L^2 c_in^2`,
//!   `xi = 2^{7/2} delta^-1 Q D c_in (L c_theta + |phi(0)|)`
//!
//! The divergence model covers the 1-D linear dot-product triplet loss,
//! where `S = (1/M) sum w_m v_m` and `P = (1/M) sum (v_m^2 + w_m^2)` obey
//! `dP/dt = 8 C S^2`, `dS/dt = 2 C S P`, conserve `S^2 = P^2/4 - alpha`, and
//! `P(t) = 2 sqrt(alpha) (1 + beta e^{8 C sqrt(alpha) t}) / (1 - beta e^{8 C sqrt(alpha) t})`
//! blows up at `t~ = log(1/beta) / (8 C sqrt(alpha))`. The kernel of that
//! model is `K(x, y; t) = P(t) x y`.

use crate::error::{Error, Result};
use crate::model::{validate_assumptions, NetworkParams};
use crate::similarity::{ContrastiveDataset, SimilaritySpec};

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// Measured or supplied constants feeding every bound formula.
#[derive(Debug, Clone)]
pub struct BoundConstants {
    pub c_in: f64,
    pub c_l: f64,
    /// None when M = 1 (log M = 0 leaves it undefined).
    pub c_theta: Option<f64>,
    pub c_s: f64,
    pub s_0: f64,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub phi_at_zero: f64,
    pub delta: f64,
    pub eta: f64,
    pub input_dim: usize,
    pub out_dim: usize,
    pub width: usize,
    pub pairs_per_anchor: usize,
}

impl BoundConstants {
    fn m(&self) -> f64 {
        self.width as f64
    }

    fn require_smooth(&self) -> Result<()> {
        if !self.smoothness.is_finite() {
            return Err(Error::Unsupported(
                "bound needs a finite smoothness constant; relu does not provide one".to_string(),
            ));
        }
        Ok(())
    }

    fn require_delta(&self) -> Result<f64> {
        if self.delta > 0.0 {
            Ok(self.delta)
        } else {
            Err(Error::invalid(
                "bound needs the cosine floor delta > 0 (dot-product losses are unbounded)",
            ))
        }
    }

    fn require_c_theta(&self) -> Result<f64> {
        self.c_theta.ok_or_else(|| {
            Error::invalid("c_theta is undefined for width M = 1 (log M = 0)")
        })
    }
}

/// Measure every constant from an actual initialization, dataset and
/// similarity configuration. The loss-slope bound is 1 for the linear head
/// (|dl/ds| = |-alpha_q| = 1). Depth-1 networks only.
pub fn measure_constants(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    eta: f64,
) -> Result<BoundConstants> {
    if params0.depth() != 1 {
        return Err(Error::invalid(format!(
            "bound constants are defined for depth 1, got depth {}",
            params0.depth()
        )));
    }
    if params0.width() == 1 {
        return Err(Error::invalid(
            "c_theta is undefined for width M = 1 (log M = 0)",
        ));
    }
    let report = validate_assumptions(params0, dataset, spec)?;
    let info = params0.activation().info();
    Ok(BoundConstants {
        c_in: report.c_in,
        c_l: 1.0,
        c_theta: report.c_theta,
        c_s: report.c_s,
        s_0: report.s_0,
        lipschitz: info.lipschitz,
        smoothness: info.smoothness,
        phi_at_zero: info.value_at_zero.abs(),
        delta: spec.delta(),
        eta,
        input_dim: params0.input_dim(),
        out_dim: params0.output_dim(),
        width: params0.width(),
        pairs_per_anchor: dataset.pairs_per_anchor(),
    })
}

// ---------------------------------------------------------------------------
// Hessian and kernel-change bounds
// ---------------------------------------------------------------------------

/// `(a1, a2)` of the Hessian bound.
pub fn hessian_coefficients(consts: &BoundConstants) -> Result<(f64, f64)> {
    consts.require_smooth()?;
    let a1 = 4.0 * consts.smoothness * consts.c_in * consts.c_in * consts.lipschitz;
    let a2 = 4.0
        * consts.lipschitz
        * consts.c_in
        * (1.0 + consts.smoothness * consts.c_in * consts.s_0 * consts.c_s);
    Ok((a1, a2))
}

/// Spectral-norm bound on each output Hessian when the weights have moved at
/// most `r` in summed Frobenius norm: `(a1 r + a2)/sqrt(M)`.
pub fn hessian_bound(consts: &BoundConstants, r: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::invalid("weight-movement radius must be nonnegative"));
    }
    let (a1, a2) = hessian_coefficients(consts)?;
    Ok((a1 * r + a2) / consts.m().sqrt())
}

/// Kernel-entry change bound from a Hessian bound `epsilon`, a gradient
/// bound `c_0` and a parameter-movement radius `r`: `2 epsilon c_0 r`.
pub fn ntk_change_from_hessian(epsilon: f64, c_0: f64, r: f64) -> Result<f64> {
    if epsilon < 0.0 || c_0 < 0.0 || r < 0.0 {
        return Err(Error::invalid("all inputs must be nonnegative"));
    }
    Ok(2.0 * epsilon * c_0 * r)
}

// ---------------------------------------------------------------------------
// Weight drift under cosine-similarity training
// ---------------------------------------------------------------------------

/// Per-step drift rates `(beta1, beta2)` for the first and output layer.
pub fn weight_drift_rates(consts: &BoundConstants) -> Result<(f64, f64)> {
    let delta = consts.require_delta()?;
    let common = 4.0 * consts.c_l * consts.c_in * consts.pairs_per_anchor as f64
        * consts.lipschitz
        / delta;
    Ok((
        common * (consts.out_dim as f64).sqrt(),
        common * consts.input_dim as f64,
    ))
}

fn drift_envelope(consts: &BoundConstants, t: usize) -> Result<(f64, f64, f64)> {
    let c_theta = consts.require_c_theta()?;
    let (b1, b2) = weight_drift_rates(consts)?;
    let beta = b1.max(b2);
    let c0 = c_theta * consts.m().ln();
    let ct = c0 * (1.0 + beta / consts.m().sqrt()).powi(t as i32);
    Ok((c0, ct, beta))
}

/// Max-entry weight drift envelope after `t` full-batch steps:
/// `c(t) - c(0)`.
pub fn weight_drift_bound(consts: &BoundConstants, t: usize) -> Result<f64> {
    let (c0, ct, _) = drift_envelope(consts, t)?;
    Ok(ct - c0)
}

/// Kernel drift bound over a training horizon, with the asymptotic-regime
/// flag.
#[derive(Debug, Clone, Copy)]
pub struct NtkChangeBound {
    pub value: f64,
    /// Set when the horizon exponent is 1/6 and `M >= max(1, beta^3)`, the
    /// regime where the bound behaves like `M^{-1/6} (log M)^3`.
    pub asymptotic_regime: bool,
}

/// Kernel-entry change bound after `t <= M^alpha_exp` steps of
/// cosine-similarity training.
///
/// The movement radius is evaluated at the requested horizon exponent:
/// `R = c(0) sqrt(M) (sqrt(D) + sqrt(Z)) (e^{beta M^{alpha-1/2}} - 1)`.
pub fn ntk_change_bound(
    consts: &BoundConstants,
    t: usize,
    alpha_exp: f64,
) -> Result<NtkChangeBound> {
    consts.require_smooth()?;
    let m = consts.m();
    let horizon = m.powf(alpha_exp);
    if t as f64 > horizon {
        return Err(Error::OutOfRegime { t, horizon });
    }
    let c_theta = consts.require_c_theta()?;
    let (b1, b2) = weight_drift_rates(consts)?;
    let beta = b1.max(b2);
    let c0 = c_theta * m.ln();
    let growth = (beta * m.powf(alpha_exp - 0.5)).exp();
    let radius = c0
        * m.sqrt()
        * ((consts.input_dim as f64).sqrt() + (consts.out_dim as f64).sqrt())
        * (growth - 1.0);
    let (a1, a2) = hessian_coefficients(consts)?;
    let gamma = 2.0 * 2.0f64.sqrt() * consts.input_dim as f64 * consts.lipschitz * consts.c_in;
    let value = gamma * (c0 * growth) * (a1 * radius * radius + a2 * radius) / m.sqrt();
    let asymptotic_regime =
        (alpha_exp - 1.0 / 6.0).abs() < 1e-12 && m >= beta.powi(3).max(1.0);
    Ok(NtkChangeBound {
        value,
        asymptotic_regime,
    })
}

// ---------------------------------------------------------------------------
// Feature-matrix and representation bounds (orthonormal output layer)
// ---------------------------------------------------------------------------

/// Frobenius drift bound on the feature matrix after `t` constrained steps:
/// `kappa t / sqrt(M)` with `kappa = 16 delta^-2 eta Q^2 L^2 c_in^2 sqrt(D)`.
pub fn cv_drift_bound(consts: &BoundConstants, t: usize) -> Result<f64> {
    let delta = consts.require_delta()?;
    let q = consts.pairs_per_anchor as f64;
    let kappa = 16.0 / (delta * delta)
        * consts.eta
        * q
        * q
        * consts.lipschitz
        * consts.lipschitz
        * consts.c_in
        * consts.c_in
        * (consts.input_dim as f64).sqrt();
    Ok(kappa * t as f64 / consts.m().sqrt())
}

/// Aligned representation difference bound between the top-Z subspaces of
/// the drifted and initial feature matrices, given the eigengap of the
/// initial one.
pub fn representation_bound(
    consts: &BoundConstants,
    t: usize,
    lambda_z: f64,
    lambda_z1: f64,
) -> Result<f64> {
    if lambda_z <= lambda_z1 {
        return Err(Error::EigengapNotPositive { lambda_z, lambda_z1 });
    }
    let delta = consts.require_delta()?;
    let c_theta = consts.require_c_theta()?;
    let q = consts.pairs_per_anchor as f64;
    let d = consts.input_dim as f64;
    let m = consts.m();
    let zeta = 4.0 / delta * consts.eta * q * d.sqrt() * consts.lipschitz * consts.lipschitz
        * consts.c_in
        * consts.c_in;
    let xi = 2.0f64.powf(3.5) / delta
        * q
        * d
        * consts.c_in
        * (consts.lipschitz * c_theta + consts.phi_at_zero);
    Ok(zeta * t as f64 / m.sqrt() * (1.0 + xi * m.ln() / (lambda_z - lambda_z1)))
}

// ---------------------------------------------------------------------------
// Closed-form divergence model (1-D linear network, dot-product triplets)
// ---------------------------------------------------------------------------

/// Closed-form state of the 1-D linear dot-product gradient flow.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceState {
    /// `S(0) = (1/M) sum w_m v_m`.
    pub s0: f64,
    /// `P(0) = (1/M) sum (v_m^2 + w_m^2)`; the kernel scale at t = 0.
    pub p0: f64,
    /// Conserved offset `P(0)^2/4 - S(0)^2`.
    pub alpha: f64,
    /// `|P(0) - 2 sqrt(alpha)| / (P(0) + 2 sqrt(alpha))`, in [0, 1).
    pub beta_ratio: f64,
    /// Data constant `C = (1/N) sum x_n (x_n^+ - x_n^-)`.
    pub data_constant: f64,
    /// Finite blow-up time; None at the fixed point `S(0) = 0`.
    pub t_blowup: Option<f64>,
    pub fixed_point: bool,
}

/// Build the closed-form state from the initial 1-D weight vectors and the
/// data constant `C > 0`.
pub fn divergence_closed_form(w0: &[f64], v0: &[f64], c: f64) -> Result<DivergenceState> {
    if w0.is_empty() || w0.len() != v0.len() {
        return Err(Error::invalid(
            "divergence model needs equal-length nonempty weight vectors",
        ));
    }
    if c <= 0.0 {
        return Err(Error::Unsupported(format!(
            "divergence model needs a dataset constant C > 0, got {c}"
        )));
    }
    let m = w0.len() as f64;
    let s0 = w0.iter().zip(v0).map(|(w, v)| w * v).sum::<f64>() / m;
    let p0 = w0
        .iter()
        .zip(v0)
        .map(|(w, v)| w * w + v * v)
        .sum::<f64>()
        / m;
    if s0 == 0.0 {
        // dP/dt = 8 C S^2 = 0 forever: the flow sits at a fixed point.
        return Ok(DivergenceState {
            s0,
            p0,
            alpha: p0 * p0 / 4.0,
            beta_ratio: 0.0,
            data_constant: c,
            t_blowup: None,
            fixed_point: true,
        });
    }
    let alpha = p0 * p0 / 4.0 - s0 * s0;
    if alpha <= f64::EPSILON * p0 * p0 {
        return Err(Error::NumericalFailure(
            "initialization sits on the separatrix (v = +/- w); the logistic form degenerates"
                .to_string(),
        ));
    }
    let root = alpha.sqrt();
    let beta_ratio = (p0 - 2.0 * root).abs() / (p0 + 2.0 * root);
    let t_blowup = (1.0 / beta_ratio).ln() / (8.0 * c * root);
    Ok(DivergenceState {
        s0,
        p0,
        alpha,
        beta_ratio,
        data_constant: c,
        t_blowup: Some(t_blowup),
        fixed_point: false,
    })
}

impl DivergenceState {
    /// `P(t)`; defined on `[0, t_blowup)` (everywhere for a fixed point).
    pub fn p_at(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::invalid("time must be nonnegative"));
        }
        if self.fixed_point {
            return Ok(self.p0);
        }
        let root = self.alpha.sqrt();
        let e = self.beta_ratio * (8.0 * self.data_constant * root * t).exp();
        if e >= 1.0 {
            return Err(Error::invalid(format!(
                "t = {t} is at or beyond the blow-up time {:?}",
                self.t_blowup
            )));
        }
        Ok(2.0 * root * (1.0 + e) / (1.0 - e))
    }

    /// Kernel of the 1-D linear model: `K(x, y; t) = P(t) x y`.
    pub fn kernel_at(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(self.p_at(t)? * x * y)
    }
}

/// One sample of the simulated scale dynamics.
#[derive(Debug, Clone, Copy)]
pub struct OdeSample {
    pub t: f64,
    pub s: f64,
    pub p: f64,
}

/// Explicit-Euler simulation of `dS/dt = 2 C S P`, `dP/dt = 8 C S^2`,
/// stopping at `max_t` or when `P` exceeds `guard`.
pub fn simulate_divergence_ode(
    s0: f64,
    p0: f64,
    c: f64,
    dt: f64,
    max_t: f64,
    guard: f64,
) -> Vec<OdeSample> {
    let mut out = Vec::new();
    let mut s = s0;
    let mut p = p0;
    let mut t = 0.0;
    out.push(OdeSample { t, s, p });
    while t < max_t && p.abs() <= guard && p.is_finite() {
        let ds = 2.0 * c * s * p;
        let dp = 8.0 * c * s * s;
        s += dt * ds;
        p += dt * dp;
        t += dt;
        out.push(OdeSample { t, s, p });
    }
    out
}
