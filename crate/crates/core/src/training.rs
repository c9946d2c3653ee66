//! Full-batch gradient-descent trainers: unconstrained descent on the
//! contrastive loss, and descent with the output layer constrained to
//! orthonormal frames (tangent projection followed by a QR retraction).
//!
//! Trainers are pure: they consume a parameter value and return a new one
//! together with a trace of drift quantities. Identical configurations give
//! bitwise-identical traces. A guard aborts cleanly once any weight exceeds
//! 1e12 in magnitude, which is how the dot-product divergence experiments
//! terminate.

use crate::error::{Error, Result};
use crate::model::NetworkParams;
use crate::ntk::{self, NtkMode, DIVERGENCE_GUARD};
use crate::numerics::{self, Matrix};
use crate::pca::{self, FeatureMatrixSpec};
use crate::similarity::{contrastive_loss, loss_gradient, ContrastiveDataset, SimilaritySpec};

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Drift quantities at one recorded step. `drift_max`/`drift_fro` hold one
/// entry per layer (first layer first, output layer last).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub drift_max: Vec<f64>,
    pub drift_fro: Vec<f64>,
    pub ntk_drift_max: Option<f64>,
    pub cv_drift_fro: Option<f64>,
    /// `||W(t) - W(0)||_F / ||W(0)||_F` for the output layer.
    pub w_rel: f64,
    pub cv_rel: Option<f64>,
}

/// Recorded training history plus optional parameter snapshots.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<(usize, NetworkParams)>,
    /// Max `||W^T W - I||_max` seen at any step of a constrained run
    /// (0 for unconstrained training).
    pub max_orthogonality_error: f64,
}

impl TrainTrace {
    pub fn new() -> Self {
        TrainTrace::default()
    }

    /// CSV with the fixed column set
    /// `t,loss,w_drift_max,v_drift_max,w_drift_fro,v_drift_fro,ntk_drift_max,cv_drift_fro,w_rel,cv_rel`;
    /// missing metrics stay empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,loss,w_drift_max,v_drift_max,w_drift_fro,v_drift_fro,ntk_drift_max,cv_drift_fro,w_rel,cv_rel\n",
        );
        let opt = |v: &Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for r in &self.records {
            let w_max = r.drift_max.last().copied().unwrap_or(0.0);
            let v_max = r.drift_max.first().copied().unwrap_or(0.0);
            let w_fro = r.drift_fro.last().copied().unwrap_or(0.0);
            let v_fro = r.drift_fro.first().copied().unwrap_or(0.0);
            out.push_str(&format!(
                "{},{:.16e},{w_max:.16e},{v_max:.16e},{w_fro:.16e},{v_fro:.16e},{},{},{:.16e},{}\n",
                r.step,
                r.loss,
                opt(&r.ntk_drift_max),
                opt(&r.cv_drift_fro),
                r.w_rel,
                opt(&r.cv_rel),
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Plain gradient descent
// ---------------------------------------------------------------------------

/// One descent step `theta - eta * gradient` as a new parameter value.
pub fn gd_step(params: &NetworkParams, gradient: &[f64], eta: f64) -> Result<NetworkParams> {
    if gradient.len() != params.param_count() {
        return Err(Error::invalid(format!(
            "gradient has {} entries, parameters have {}",
            gradient.len(),
            params.param_count()
        )));
    }
    if let Some(bad) = gradient.iter().find(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            step: 0,
            quantity: "gradient entry".to_string(),
            value: *bad,
        });
    }
    params.add_flat(gradient, -eta)
}

/// Options for [`train_with`]: which drift quantities to record and when.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    pub record_every: usize,
    /// Record max-entry kernel drift on these probe points.
    pub ntk_probes: Option<Vec<Vec<f64>>>,
    /// Record Frobenius drift of the feature matrix of this form.
    pub track_cv: Option<FeatureMatrixSpec>,
    /// Steps at which to keep full parameter snapshots.
    pub snapshot_steps: Vec<usize>,
}

impl TrainConfig {
    pub fn new(eta: f64, steps: usize, record_every: usize) -> Self {
        TrainConfig {
            eta,
            steps,
            record_every,
            ntk_probes: None,
            track_cv: None,
            snapshot_steps: Vec::new(),
        }
    }
}

/// `steps` full-batch descent steps on the contrastive loss.
pub fn train(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    eta: f64,
    steps: usize,
    record_every: usize,
) -> Result<(NetworkParams, TrainTrace)> {
    train_with(params0, dataset, spec, &TrainConfig::new(eta, steps, record_every))
}

/// As [`train`], with full recording options. Divergence is an error
/// carrying the offending step.
pub fn train_with(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainTrace)> {
    let (params, trace, diverged) = train_engine(params0, dataset, spec, config)?;
    match diverged {
        Some(step) => Err(Error::Divergence {
            step,
            quantity: "weight magnitude".to_string(),
            value: params.max_abs_weight(),
        }),
        None => Ok((params, trace)),
    }
}

/// As [`train_with`], but a divergence-guard trip is a normal outcome: the
/// last finite parameters, the trace so far and the aborting step are
/// returned. Used by the dot-product blow-up experiments.
pub fn train_until_divergence(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainTrace, Option<usize>)> {
    train_engine(params0, dataset, spec, config)
}

fn train_engine(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainTrace, Option<usize>)> {
    if config.steps == 0 {
        return Err(Error::invalid("training needs at least one step"));
    }
    if config.record_every == 0 {
        return Err(Error::invalid("record_every must be positive"));
    }
    let ntk_mode = if params0.depth() == 1 {
        NtkMode::ClosedForm
    } else {
        NtkMode::Jacobian
    };
    let table0 = match &config.ntk_probes {
        Some(probes) => Some(ntk::ntk_table(params0, probes, ntk_mode)?),
        None => None,
    };
    let cv0 = match &config.track_cv {
        Some(fm) => Some(pca::compute_cv(
            params0.v(),
            params0.activation(),
            dataset,
            fm,
        )?),
        None => None,
    };
    let cv0_fro = cv0.as_ref().map(|c| c.frobenius_norm());
    let w0_fro = params0.w().frobenius_norm();

    let mut params = params0.clone();
    let mut trace = TrainTrace::new();
    for t in 1..=config.steps {
        let grad = loss_gradient(spec, &params, dataset)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Ok((params, trace, Some(t)));
        }
        let next = params.add_flat(&grad, -config.eta)?;
        if next.max_abs_weight() > DIVERGENCE_GUARD {
            return Ok((params, trace, Some(t)));
        }
        params = next;

        if config.snapshot_steps.contains(&t) {
            trace.snapshots.push((t, params.clone()));
        }
        if t % config.record_every == 0 || t == config.steps {
            let loss = contrastive_loss(spec, &params, dataset)?;
            let mut record = drift_record(t, loss, &params, params0, w0_fro);
            if let (Some(probes), Some(t0)) = (&config.ntk_probes, &table0) {
                let table_t = ntk::ntk_table(&params, probes, ntk_mode)?;
                record.ntk_drift_max = Some(ntk::ntk_drift(&table_t, t0)?.max_abs_change);
            }
            if let (Some(fm), Some(c0)) = (&config.track_cv, &cv0) {
                let cv_t = pca::compute_cv(params.v(), params.activation(), dataset, fm)?;
                let drift = cv_t.sub(c0).frobenius_norm();
                record.cv_drift_fro = Some(drift);
                record.cv_rel = cv0_fro.map(|f| if f > 0.0 { drift / f } else { 0.0 });
            }
            trace.records.push(record);
        }
    }
    Ok((params, trace, None))
}

fn drift_record(
    step: usize,
    loss: f64,
    params: &NetworkParams,
    params0: &NetworkParams,
    w0_fro: f64,
) -> TraceRecord {
    let mut drift_max = Vec::with_capacity(params.weights().len());
    let mut drift_fro = Vec::with_capacity(params.weights().len());
    for (wt, w0) in params.weights().iter().zip(params0.weights()) {
        let d = wt.sub(w0);
        drift_max.push(d.max_abs());
        drift_fro.push(d.frobenius_norm());
    }
    let w_rel = if w0_fro > 0.0 {
        drift_fro.last().copied().unwrap_or(0.0) / w0_fro
    } else {
        0.0
    };
    TraceRecord {
        step,
        loss,
        drift_max,
        drift_fro,
        ntk_drift_max: None,
        cv_drift_fro: None,
        w_rel,
        cv_rel: None,
    }
}

// ---------------------------------------------------------------------------
// Orthonormal-output training
// ---------------------------------------------------------------------------

const ORTHONORMALITY_PRE_TOL: f64 = 1e-8;

/// One constrained step for an orthonormal frame `w`: project the gradient
/// onto the tangent space, step, and retract by QR:
/// `W' = qr(W - eta (I - W W^T) G)`.
pub fn grassmann_step(w: &Matrix, gradient: &Matrix, eta: f64) -> Result<Matrix> {
    if w.rows() != gradient.rows() || w.cols() != gradient.cols() {
        return Err(Error::invalid("gradient shape does not match the frame"));
    }
    let orth_err = orthogonality_error(w);
    if orth_err > ORTHONORMALITY_PRE_TOL {
        return Err(Error::invalid(format!(
            "frame is not orthonormal: ||W^T W - I||_max = {orth_err:.3e}"
        )));
    }
    let wtg = w.matmul_transpose_left(gradient); // Z x Z
    let tangent = gradient.sub(&w.matmul(&wtg)); // (I - W W^T) G
    numerics::qr_orthonormalize(&w.add_scaled(&tangent, -eta))
}

/// `||W^T W - I||_max`
pub fn orthogonality_error(w: &Matrix) -> f64 {
    let gram = w.matmul_transpose_left(w);
    gram.sub(&Matrix::identity(w.cols())).max_abs()
}

/// Orthonormalize the output layer of a parameter value (the starting point
/// the constrained trainer expects).
pub fn orthonormalize_output_layer(params: &NetworkParams) -> Result<NetworkParams> {
    params.with_output_layer(numerics::qr_orthonormalize(params.w())?)
}

/// Loss matrix driving the constrained trainer: either the live feature
/// matrix of the current first layer, or a frozen symmetric matrix.
#[derive(Debug, Clone)]
pub enum CvMode {
    Live(FeatureMatrixSpec),
    Frozen(Matrix),
}

/// Constrained training of a depth-1 network: per step, V takes a plain
/// descent step on the trace-form loss while W takes a projected step with
/// QR retraction. With `CvMode::Frozen` the loss matrix (and hence V) stays
/// fixed. `record_every` also controls feature-matrix drift recording in
/// live mode.
pub fn train_orthogonal(
    params0: &NetworkParams,
    dataset: &ContrastiveDataset,
    mode: &CvMode,
    eta: f64,
    steps: usize,
    record_every: usize,
) -> Result<(NetworkParams, TrainTrace)> {
    if params0.depth() != 1 {
        return Err(Error::invalid(format!(
            "constrained training needs depth 1, got {}",
            params0.depth()
        )));
    }
    if record_every == 0 {
        return Err(Error::invalid("record_every must be positive"));
    }
    let pre_err = orthogonality_error(params0.w());
    if pre_err > ORTHONORMALITY_PRE_TOL {
        return Err(Error::invalid(format!(
            "output layer must start orthonormal (||W^T W - I||_max = {pre_err:.3e}); \
             see orthonormalize_output_layer"
        )));
    }
    if let CvMode::Frozen(c) = mode {
        if c.rows() != params0.width() || c.cols() != params0.width() {
            return Err(Error::invalid("frozen loss matrix must be M x M"));
        }
    }

    let cv0 = match mode {
        CvMode::Live(fm) => Some(pca::compute_cv(
            params0.v(),
            params0.activation(),
            dataset,
            fm,
        )?),
        CvMode::Frozen(_) => None,
    };
    let cv0_fro = cv0.as_ref().map(|c| c.frobenius_norm());
    let w0_fro = params0.w().frobenius_norm();

    let mut params = params0.clone();
    let mut trace = TrainTrace::new();
    trace.max_orthogonality_error = orthogonality_error(params.w());

    for t in 1..=steps {
        let (grad_w, grad_v) = match mode {
            CvMode::Live(fm) => (
                pca::cv_loss_w_gradient(&params, dataset, fm)?,
                Some(pca::cv_loss_v_gradient(&params, dataset, fm)?),
            ),
            CvMode::Frozen(c) => {
                // L = -Tr(W^T C W) for a fixed symmetric C: dL/dW = -2 C W.
                (c.matmul(params.w()).scaled(-2.0), None)
            }
        };
        let new_w = grassmann_step(params.w(), &grad_w, eta)?;
        if let Some(gv) = grad_v {
            let new_v = params.v().add_scaled(&gv, -eta);
            params = params.with_first_layer(new_v)?;
        }
        params = params.with_output_layer(new_w)?;
        if params.max_abs_weight() > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                step: t,
                quantity: "weight magnitude".to_string(),
                value: params.max_abs_weight(),
            });
        }
        let orth = orthogonality_error(params.w());
        trace.max_orthogonality_error = trace.max_orthogonality_error.max(orth);

        if t % record_every == 0 || t == steps {
            let loss = match mode {
                CvMode::Live(fm) => pca::cv_loss_value(&params, dataset, fm)?,
                CvMode::Frozen(c) => -params
                    .w()
                    .matmul_transpose_left(&c.matmul(params.w()))
                    .trace(),
            };
            let mut record = drift_record(t, loss, &params, params0, w0_fro);
            if let (CvMode::Live(fm), Some(c0)) = (mode, &cv0) {
                let cv_t = pca::compute_cv(params.v(), params.activation(), dataset, fm)?;
                let drift = cv_t.sub(c0).frobenius_norm();
                record.cv_drift_fro = Some(drift);
                record.cv_rel = cv0_fro.map(|f| if f > 0.0 { drift / f } else { 0.0 });
            }
            trace.records.push(record);
        }
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_network, Activation, NetworkArch};
    use crate::numerics::CounterRng;
    use crate::similarity::Pair;

    fn arch(d: usize, m: usize, z: usize) -> NetworkArch {
        NetworkArch::new(d, m, z, 1, Activation::Relu).unwrap()
    }

    fn small_dataset() -> ContrastiveDataset {
        ContrastiveDataset::new(
            vec![vec![0.8, -0.2], vec![-0.4, 0.6]],
            vec![
                vec![
                    Pair { point: vec![0.7, -0.1], alpha: 1.0 },
                    Pair { point: vec![-0.3, 0.5], alpha: -1.0 },
                ],
                vec![
                    Pair { point: vec![-0.5, 0.7], alpha: 1.0 },
                    Pair { point: vec![0.9, -0.3], alpha: -1.0 },
                ],
            ],
        )
        .unwrap()
    }

    /// 1-D triplet construction whose dot-product flow provably blows up.
    fn divergence_triplets(n: usize, seed: u64) -> (ContrastiveDataset, f64) {
        let mut rng = CounterRng::new(seed);
        let mut anchors = Vec::new();
        let mut pairs = Vec::new();
        let mut c = 0.0;
        for _ in 0..n {
            let x = 0.5 + 0.5 * rng.uniform();
            anchors.push(vec![x]);
            pairs.push(vec![
                Pair { point: vec![x + 0.5], alpha: 1.0 },
                Pair { point: vec![x - 0.5], alpha: -1.0 },
            ]);
            c += x * ((x + 0.5) - (x - 0.5));
        }
        (
            ContrastiveDataset::new(anchors, pairs).unwrap(),
            c / n as f64,
        )
    }

    #[test]
    fn gd_step_hand_cases() {
        let a = NetworkArch::new(1, 1, 1, 1, Activation::Linear).unwrap();
        let p = NetworkParams::from_flat(a, &[1.0, 1.0]).unwrap();
        let stepped = gd_step(&p, &[2.0, 0.0], 0.1).unwrap();
        assert!((stepped.flatten()[0] - 0.8).abs() < 1e-15);
        assert_eq!(stepped.flatten()[1], 1.0);

        assert_eq!(gd_step(&p, &[0.0, 0.0], 0.5).unwrap(), p);
        assert_eq!(gd_step(&p, &[3.0, -1.0], 0.0).unwrap(), p);
        assert!(matches!(
            gd_step(&p, &[f64::NAN, 0.0], 0.1),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn training_is_reproducible() {
        let p = init_network(arch(2, 16, 3), 5).unwrap();
        let ds = small_dataset();
        let spec = SimilaritySpec::cosine(0.2).unwrap();
        let (pa, ta) = train(&p, &ds, &spec, 0.3, 20, 5).unwrap();
        let (pb, tb) = train(&p, &ds, &spec, 0.3, 20, 5).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ta.records, tb.records);
    }

    #[test]
    fn training_keeps_loss_constant_at_stationary_degenerate_point() {
        let p = init_network(arch(2, 8, 2), 3).unwrap();
        let p = p.with_output_layer(Matrix::zeros(8, 2)).unwrap();
        let ds = ContrastiveDataset::new(
            vec![vec![0.0, 0.0]],
            vec![vec![Pair { point: vec![0.0, 0.0], alpha: 1.0 }]],
        )
        .unwrap();
        let spec = SimilaritySpec::cosine(0.5).unwrap();
        let (trained, trace) = train(&p, &ds, &spec, 0.5, 10, 1).unwrap();
        assert_eq!(trained, p);
        for r in &trace.records {
            assert_eq!(r.loss, 0.0);
        }
    }

    #[test]
    fn dot_loss_decreases_for_small_eta() {
        let p = init_network(arch(2, 12, 2), 9).unwrap();
        let ds = small_dataset();
        let spec = SimilaritySpec::dot();
        let (_, trace) = train(&p, &ds, &spec, 1e-3, 20, 1).unwrap();
        let mut prev = f64::INFINITY;
        for r in &trace.records {
            assert!(r.loss < prev + 1e-12, "loss rose at step {}", r.step);
            prev = r.loss;
        }
    }

    #[test]
    fn dot_divergence_construction_blows_up_fast() {
        // Max-entry weight drift exceeds 10 c(0) within log M steps on the
        // 1-D blow-up construction, in at least 4 of 5 seeds.
        let m = 256;
        let a = NetworkArch::new(1, m, 1, 1, Activation::Linear).unwrap();
        let budget = (m as f64).ln().floor() as usize; // 5 steps
        let mut successes = 0;
        for seed in 0..5 {
            let (ds, c) = divergence_triplets(16, 100 + seed);
            assert!(c >= 0.5);
            let p = init_network(a, seed).unwrap();
            let c0 = p.max_abs_weight();
            let config = TrainConfig::new(1.0, budget, 1);
            let (_, trace, _) =
                train_until_divergence(&p, &ds, &SimilaritySpec::dot(), &config).unwrap();
            if trace
                .records
                .iter()
                .any(|r| r.drift_max.iter().cloned().fold(0.0f64, f64::max) > 10.0 * c0)
            {
                successes += 1;
            }
        }
        assert!(successes >= 4, "only {successes}/5 seeds blew up in time");
    }

    #[test]
    fn divergence_guard_reports_step() {
        let (ds, _) = divergence_triplets(8, 3);
        let a = NetworkArch::new(1, 64, 1, 1, Activation::Linear).unwrap();
        let p = init_network(a, 1).unwrap();
        let err = train(&p, &ds, &SimilaritySpec::dot(), 2.0, 200, 10).unwrap_err();
        match err {
            Error::Divergence { step, .. } => assert!(step >= 1 && step <= 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn grassmann_step_hand_cases() {
        let g = numerics::gaussian_matrix(8, 2, 1).unwrap();
        let w = numerics::qr_orthonormalize(&g).unwrap();

        // Gradient inside span(W) projects to zero: the frame is unchanged.
        let a = Matrix::from_rows(&[vec![0.3, -1.0], vec![0.7, 0.2]]);
        let stepped = grassmann_step(&w, &w.matmul(&a), 0.5).unwrap();
        assert!(stepped.sub(&w).max_abs() <= 1e-12);

        // eta = 0 keeps the frame.
        let g2 = numerics::gaussian_matrix(8, 2, 2).unwrap();
        let same = grassmann_step(&w, &g2, 0.0).unwrap();
        assert!(same.sub(&w).max_abs() <= 1e-12);

        // Orthonormality after a generic step.
        let stepped = grassmann_step(&w, &g2, 0.3).unwrap();
        assert!(orthogonality_error(&stepped) <= 1e-10);
    }

    #[test]
    fn grassmann_step_rejects_non_orthonormal_frame() {
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]]);
        let g = Matrix::zeros(3, 2);
        assert!(grassmann_step(&w, &g, 0.1).is_err());
    }

    #[test]
    fn orthogonal_training_preserves_frame() {
        let p = orthonormalize_output_layer(&init_network(arch(2, 16, 3), 7).unwrap()).unwrap();
        let ds = small_dataset();
        let fm = FeatureMatrixSpec::cosine_bound(0.1).unwrap();
        let (trained, trace) =
            train_orthogonal(&p, &ds, &CvMode::Live(fm), 0.3, 40, 10).unwrap();
        assert!(trace.max_orthogonality_error <= 1e-10);
        assert!(orthogonality_error(trained.w()) <= 1e-10);
        assert!(!trace.records.is_empty());
        assert!(trace.records.iter().all(|r| r.cv_drift_fro.is_some()));
    }

    #[test]
    fn orthogonal_training_requires_orthonormal_start() {
        let p = init_network(arch(2, 16, 3), 7).unwrap();
        let ds = small_dataset();
        let fm = FeatureMatrixSpec::cosine_bound(0.1).unwrap();
        assert!(train_orthogonal(&p, &ds, &CvMode::Live(fm), 0.3, 5, 1).is_err());
    }

    #[test]
    fn frozen_matrix_ascends_the_trace_objective() {
        // With a frozen symmetric loss matrix, the constrained steps are
        // projected ascent on Tr(W^T C W): monotone for small eta.
        let p = orthonormalize_output_layer(&init_network(arch(2, 10, 2), 11).unwrap()).unwrap();
        let ds = small_dataset();
        let fm = FeatureMatrixSpec::cosine_bound(0.1).unwrap();
        let cv = pca::compute_cv(p.v(), p.activation(), &ds, &fm).unwrap();
        let c_tilde = pca::symmetrize(&cv).unwrap();
        let (_, trace) =
            train_orthogonal(&p, &ds, &CvMode::Frozen(c_tilde), 1e-2, 50, 1).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for r in &trace.records {
            let objective = -r.loss;
            assert!(
                objective >= prev - 1e-9,
                "objective decreased at step {}",
                r.step
            );
            prev = objective;
        }
        // V never moves in frozen mode.
        assert_eq!(trace.records.last().unwrap().drift_max[0], 0.0);
    }

    #[test]
    fn trace_csv_schema() {
        let p = init_network(arch(2, 8, 2), 2).unwrap();
        let ds = small_dataset();
        let spec = SimilaritySpec::cosine(0.2).unwrap();
        let mut config = TrainConfig::new(0.2, 6, 2);
        config.ntk_probes = Some(vec![vec![0.5, 0.5]]);
        let (_, trace) = train_with(&p, &ds, &spec, &config).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,loss,w_drift_max,v_drift_max,w_drift_fro,v_drift_fro,ntk_drift_max,cv_drift_fro,w_rel,cv_rel"
        );
        let first = lines.next().unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "2");
        assert!(!fields[6].is_empty(), "ntk drift requested but missing");
        assert!(fields[7].is_empty(), "cv drift not requested");
    }

    #[test]
    fn snapshots_are_taken_at_requested_steps() {
        let p = init_network(arch(2, 8, 2), 2).unwrap();
        let ds = small_dataset();
        let spec = SimilaritySpec::cosine(0.2).unwrap();
        let mut config = TrainConfig::new(0.2, 10, 5);
        config.snapshot_steps = vec![3, 7];
        let (_, trace) = train_with(&p, &ds, &spec, &config).unwrap();
        let steps: Vec<usize> = trace.snapshots.iter().map(|(t, _)| *t).collect();
        assert_eq!(steps, vec![3, 7]);
    }
}
