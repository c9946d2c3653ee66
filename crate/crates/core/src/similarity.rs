//! Similarity measures, their representation-space derivatives and the
//! linear contrastive loss.
//!
//! Two measures are supported for representations `f_x, f_y`:
//!
//! * dot:    `s = f_x . f_y`
//! * cosine: `s = f_x . f_y / ((||f_x|| + delta)(||f_y|| + delta))`
//!
//! and the loss over a dataset of anchors with signed pairs is
//! `L = -(1/N) sum_n sum_q alpha_q s(x_n, x_{n,q})` with `alpha_q = +1` for
//! positive pairs and `-1` for negative pairs, so gradient descent pulls
//! positives together and pushes negatives apart.

use crate::error::{Error, Result};
use crate::model::NetworkParams;
use crate::numerics::{dot, norm2, norm_inf};

// ---------------------------------------------------------------------------
// Similarity specification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    Dot,
    Cosine,
}

/// Similarity measure plus the cosine floor `delta` (ignored for dot).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilaritySpec {
    kind: SimilarityKind,
    delta: f64,
}

impl SimilaritySpec {
    pub fn new(kind: SimilarityKind, delta: f64) -> Result<Self> {
        if kind == SimilarityKind::Cosine && !(delta > 0.0) {
            return Err(Error::invalid(format!(
                "cosine similarity needs delta > 0, got {delta}"
            )));
        }
        Ok(SimilaritySpec { kind, delta })
    }

    pub fn dot() -> Self {
        SimilaritySpec {
            kind: SimilarityKind::Dot,
            delta: 0.0,
        }
    }

    pub fn cosine(delta: f64) -> Result<Self> {
        Self::new(SimilarityKind::Cosine, delta)
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

// ---------------------------------------------------------------------------
// Contrastive dataset
// ---------------------------------------------------------------------------

/// One paired sample for an anchor, with sign `alpha` in {+1, -1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub point: Vec<f64>,
    pub alpha: f64,
}

/// N anchors, each with exactly Q signed pairs of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveDataset {
    anchors: Vec<Vec<f64>>,
    pairs: Vec<Vec<Pair>>,
    input_dim: usize,
    pairs_per_anchor: usize,
    c_in: f64,
}

impl ContrastiveDataset {
    pub fn new(anchors: Vec<Vec<f64>>, pairs: Vec<Vec<Pair>>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::invalid("dataset needs at least one anchor"));
        }
        if anchors.len() != pairs.len() {
            return Err(Error::invalid(format!(
                "{} anchors but {} pair groups",
                anchors.len(),
                pairs.len()
            )));
        }
        let input_dim = anchors[0].len();
        if input_dim == 0 {
            return Err(Error::invalid("anchors must have positive dimension"));
        }
        let q = pairs[0].len();
        if q == 0 {
            return Err(Error::invalid("every anchor needs at least one pair"));
        }
        let mut c_in = 0.0f64;
        for (n, (a, ps)) in anchors.iter().zip(&pairs).enumerate() {
            if a.len() != input_dim {
                return Err(Error::invalid(format!("anchor {n} has wrong dimension")));
            }
            if ps.len() != q {
                return Err(Error::invalid(format!(
                    "anchor {n} has {} pairs, expected {q}",
                    ps.len()
                )));
            }
            c_in = c_in.max(norm_inf(a));
            for (k, p) in ps.iter().enumerate() {
                if p.point.len() != input_dim {
                    return Err(Error::invalid(format!(
                        "pair ({n},{k}) has wrong dimension"
                    )));
                }
                if p.alpha != 1.0 && p.alpha != -1.0 {
                    return Err(Error::invalid(format!(
                        "pair ({n},{k}) has sign {}, expected +1 or -1",
                        p.alpha
                    )));
                }
                c_in = c_in.max(norm_inf(&p.point));
            }
        }
        if !c_in.is_finite() {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        Ok(ContrastiveDataset {
            anchors,
            pairs,
            input_dim,
            pairs_per_anchor: q,
            c_in,
        })
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn pairs_per_anchor(&self) -> usize {
        self.pairs_per_anchor
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Max infinity-norm over anchors and pairs.
    pub fn c_in(&self) -> f64 {
        self.c_in
    }

    pub fn anchor(&self, n: usize) -> &[f64] {
        &self.anchors[n]
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn pair(&self, n: usize, q: usize) -> &Pair {
        &self.pairs[n][q]
    }

    pub fn pairs_of(&self, n: usize) -> &[Pair] {
        &self.pairs[n]
    }

    /// All points in deterministic order: anchors first, then pairs grouped
    /// by anchor.
    pub fn all_points(&self) -> impl Iterator<Item = &[f64]> {
        self.anchors
            .iter()
            .map(|a| a.as_slice())
            .chain(self.pairs.iter().flatten().map(|p| p.point.as_slice()))
    }

    /// Flip every pair sign (negatives become positives and vice versa).
    pub fn with_negated_signs(&self) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|ps| {
                ps.iter()
                    .map(|p| Pair {
                        point: p.point.clone(),
                        alpha: -p.alpha,
                    })
                    .collect()
            })
            .collect();
        ContrastiveDataset {
            anchors: self.anchors.clone(),
            pairs,
            input_dim: self.input_dim,
            pairs_per_anchor: self.pairs_per_anchor,
            c_in: self.c_in,
        }
    }

    /// CSV export: one row per vector with the role and sign leading.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("role,anchor_index,pair_index,alpha,");
        out.push_str(
            &(0..self.input_dim)
                .map(|j| format!("x{j}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        for (n, a) in self.anchors.iter().enumerate() {
            out.push_str(&format!("anchor,{n},,,{}\n", fmt(a)));
            for (q, p) in self.pairs[n].iter().enumerate() {
                out.push_str(&format!(
                    "pair,{n},{q},{},{}\n",
                    p.alpha as i64,
                    fmt(&p.point)
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Similarity values and derivatives
// ---------------------------------------------------------------------------

const ZERO_NORM_TOL: f64 = 1e-12;

/// `s(f_x, f_y)` for the chosen measure.
pub fn similarity(spec: &SimilaritySpec, f_x: &[f64], f_y: &[f64]) -> Result<f64> {
    if f_x.len() != f_y.len() {
        return Err(Error::invalid("representation lengths differ"));
    }
    if !f_x.iter().chain(f_y).all(|v| v.is_finite()) {
        return Err(Error::invalid("similarity inputs must be finite"));
    }
    match spec.kind {
        SimilarityKind::Dot => Ok(dot(f_x, f_y)),
        SimilarityKind::Cosine => {
            Ok(dot(f_x, f_y) / ((norm2(f_x) + spec.delta) * (norm2(f_y) + spec.delta)))
        }
    }
}

/// Derivative of `s(f_x, f_y)` with respect to `f_x`.
///
/// For cosine this is
/// `f_y / ((||f_x||+d)(||f_y||+d)) - (f_x.f_y) f_x / ((||f_x||+d)^2 (||f_y||+d) ||f_x||)`,
/// with the second term defined as 0 when `||f_x||` vanishes (the direction
/// is undefined there; delta keeps the value finite).
pub fn similarity_grad(spec: &SimilaritySpec, f_x: &[f64], f_y: &[f64]) -> Result<Vec<f64>> {
    if f_x.len() != f_y.len() {
        return Err(Error::invalid("representation lengths differ"));
    }
    match spec.kind {
        SimilarityKind::Dot => Ok(f_y.to_vec()),
        SimilarityKind::Cosine => {
            let nx = norm2(f_x);
            let ny = norm2(f_y);
            let d = spec.delta;
            let denom = (nx + d) * (ny + d);
            let mut g: Vec<f64> = f_y.iter().map(|v| v / denom).collect();
            if nx >= ZERO_NORM_TOL {
                let coef = dot(f_x, f_y) / ((nx + d) * (nx + d) * (ny + d) * nx);
                for (gi, &xi) in g.iter_mut().zip(f_x) {
                    *gi -= coef * xi;
                }
            }
            Ok(g)
        }
    }
}

// ---------------------------------------------------------------------------
// Linear contrastive loss
// ---------------------------------------------------------------------------

/// Derivative of the scalar head `l` with respect to each pair similarity.
/// Only the linear head ships: `l = -sum_q alpha_q s_q`, so the derivative
/// for pair q is `-alpha_q`. A different head with a uniformly bounded
/// derivative can be slotted in here.
pub(crate) fn linear_loss_ds(alpha: f64) -> f64 {
    -alpha
}

/// `L = -(1/N) sum_{n,q} alpha_q s(f(x_n), f(x_{n,q}))`
pub fn contrastive_loss(
    spec: &SimilaritySpec,
    params: &NetworkParams,
    dataset: &ContrastiveDataset,
) -> Result<f64> {
    if dataset.input_dim() != params.input_dim() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match network input {}",
            dataset.input_dim(),
            params.input_dim()
        )));
    }
    let n = dataset.num_anchors();
    let mut total = 0.0;
    for i in 0..n {
        let f_anchor = params.forward(dataset.anchor(i))?;
        for p in dataset.pairs_of(i) {
            let f_pair = params.forward(&p.point)?;
            total += p.alpha * similarity(spec, &f_anchor, &f_pair)?;
        }
    }
    Ok(-total / n as f64)
}

/// Exact gradient of [`contrastive_loss`] over all weights, flat layout.
///
/// Chain rule per pair: `dL/dtheta = (1/N) sum_{n,q} (dl/ds) *
/// [ grad_theta f(x_n) . g(x_n, x_nq) + grad_theta f(x_nq) . g(x_nq, x_n) ]`
/// where `g` is [`similarity_grad`]; accumulation order is fixed (anchors in
/// order, then their pairs) so runs are reproducible.
pub fn loss_gradient(
    spec: &SimilaritySpec,
    params: &NetworkParams,
    dataset: &ContrastiveDataset,
) -> Result<Vec<f64>> {
    if dataset.input_dim() != params.input_dim() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match network input {}",
            dataset.input_dim(),
            params.input_dim()
        )));
    }
    let n = dataset.num_anchors();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; params.param_count()];
    let mut anchor_cot = vec![0.0; params.output_dim()];

    for i in 0..n {
        let anchor = dataset.anchor(i);
        let f_anchor = params.forward(anchor)?;
        anchor_cot.iter_mut().for_each(|v| *v = 0.0);
        for p in dataset.pairs_of(i) {
            let f_pair = params.forward(&p.point)?;
            let dl_ds = linear_loss_ds(p.alpha);
            // Contribution through the anchor representation.
            let g_anchor = similarity_grad(spec, &f_anchor, &f_pair)?;
            for (c, g) in anchor_cot.iter_mut().zip(&g_anchor) {
                *c += dl_ds * g;
            }
            // Contribution through the pair representation.
            let g_pair = similarity_grad(spec, &f_pair, &f_anchor)?;
            params.vjp_accumulate(&p.point, &g_pair, inv_n * dl_ds, &mut grad);
        }
        params.vjp_accumulate(anchor, &anchor_cot, inv_n, &mut grad);
    }
    Ok(grad)
}
