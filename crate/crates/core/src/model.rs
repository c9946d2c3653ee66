//! Width-M fully connected networks in the 1/sqrt(M) output scaling, their
//! forward maps and exact reverse-mode parameter gradients.
//!
//! A depth-1 network computes `f(x) = (1/sqrt(M)) W^T phi(V x)` with
//! `V in R^{MxD}`, `W in R^{MxZ}` and i.i.d. N(0,1) entries at
//! initialization. Deeper variants insert MxM hidden layers, each scaled by
//! 1/sqrt(M). Parameters are immutable values; trainers produce new values
//! per step.

use crate::error::{Error, Result};
use crate::numerics::{self, norm2, norm_inf, Matrix, MatrixNorm};
use crate::similarity::ContrastiveDataset;
use crate::similarity::SimilaritySpec;
use std::io::{Read, Write};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

/// Lipschitz/smoothness data for an activation: `lipschitz` bounds |phi'|,
/// `smoothness` bounds |phi''| (infinite for relu).
#[derive(Debug, Clone, Copy)]
pub struct ActivationInfo {
    pub kind: Activation,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub value_at_zero: f64,
}

impl Activation {
    #[inline]
    pub fn phi(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-u).exp()),
            Activation::Linear => u,
        }
    }

    /// First derivative; the relu slope at exactly 0 is defined as 0.
    #[inline]
    pub fn phi_prime(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-u).exp());
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    /// `phi(u)` for order 0, `phi'(u)` for order 1.
    pub fn eval(self, u: f64, order: usize) -> f64 {
        match order {
            0 => self.phi(u),
            1 => self.phi_prime(u),
            _ => panic!("activation order must be 0 or 1, got {order}"),
        }
    }

    pub fn info(self) -> ActivationInfo {
        // max |phi''|: tanh attains 4/(3*sqrt(3)), sigmoid 1/(6*sqrt(3)).
        let (lipschitz, smoothness, value_at_zero) = match self {
            Activation::Relu => (1.0, f64::INFINITY, 0.0),
            Activation::Tanh => (1.0, 4.0 / (3.0 * 3.0f64.sqrt()), 0.0),
            Activation::Sigmoid => (0.25, 1.0 / (6.0 * 3.0f64.sqrt()), 0.5),
            Activation::Linear => (1.0, 0.0, 0.0),
        };
        ActivationInfo {
            kind: self,
            lipschitz,
            smoothness,
            value_at_zero,
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Linear => 3,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Sigmoid),
            3 => Ok(Activation::Linear),
            other => Err(Error::DataFormat(format!("unknown activation code {other}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Architecture and parameters
// ---------------------------------------------------------------------------

/// Shape of a network: input dim D, width M, output dim Z, hidden depth,
/// activation kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkArch {
    pub input_dim: usize,
    pub width: usize,
    pub output_dim: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl NetworkArch {
    pub fn new(
        input_dim: usize,
        width: usize,
        output_dim: usize,
        depth: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || width == 0 || output_dim == 0 || depth == 0 {
            return Err(Error::invalid(format!(
                "network dimensions must be positive: D={input_dim}, M={width}, \
                 Z={output_dim}, depth={depth}"
            )));
        }
        Ok(NetworkArch {
            input_dim,
            width,
            output_dim,
            depth,
            activation,
        })
    }

    pub fn param_count(&self) -> usize {
        self.width * self.input_dim
            + (self.depth - 1) * self.width * self.width
            + self.width * self.output_dim
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.width, self.input_dim)];
        for _ in 1..self.depth {
            shapes.push((self.width, self.width));
        }
        shapes.push((self.width, self.output_dim));
        shapes
    }
}

/// Weights of a network: first layer `V` (MxD), optional hidden layers
/// (MxM), output layer `W` (MxZ).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: NetworkArch,
    weights: Vec<Matrix>,
}

/// Standard normal initialization with a per-layer derived seed.
pub fn init_network(arch: NetworkArch, seed: u64) -> Result<NetworkParams> {
    let weights = arch
        .layer_shapes()
        .iter()
        .enumerate()
        .map(|(l, &(r, c))| numerics::gaussian_matrix(r, c, numerics::derive_seed(seed, l as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkParams { arch, weights })
}

impl NetworkParams {
    pub fn from_weights(arch: NetworkArch, weights: Vec<Matrix>) -> Result<Self> {
        let shapes = arch.layer_shapes();
        if weights.len() != shapes.len() {
            return Err(Error::invalid(format!(
                "expected {} weight matrices, got {}",
                shapes.len(),
                weights.len()
            )));
        }
        for (l, (w, &(r, c))) in weights.iter().zip(&shapes).enumerate() {
            if w.rows() != r || w.cols() != c {
                return Err(Error::invalid(format!(
                    "layer {l} has shape {}x{}, expected {r}x{c}",
                    w.rows(),
                    w.cols()
                )));
            }
            if !w.is_finite() {
                return Err(Error::invalid(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(NetworkParams { arch, weights })
    }

    pub fn arch(&self) -> NetworkArch {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn width(&self) -> usize {
        self.arch.width
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn depth(&self) -> usize {
        self.arch.depth
    }

    pub fn activation(&self) -> Activation {
        self.arch.activation
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// First-layer weights V (MxD).
    pub fn v(&self) -> &Matrix {
        &self.weights[0]
    }

    /// Output-layer weights W (MxZ).
    pub fn w(&self) -> &Matrix {
        self.weights.last().unwrap()
    }

    /// Replace the output layer (same shape required).
    pub fn with_output_layer(&self, w: Matrix) -> Result<Self> {
        let mut weights = self.weights.clone();
        let last = weights.len() - 1;
        if w.rows() != weights[last].rows() || w.cols() != weights[last].cols() {
            return Err(Error::invalid("output layer shape mismatch"));
        }
        weights[last] = w;
        NetworkParams::from_weights(self.arch, weights)
    }

    /// Replace the first layer (same shape required).
    pub fn with_first_layer(&self, v: Matrix) -> Result<Self> {
        let mut weights = self.weights.clone();
        if v.rows() != weights[0].rows() || v.cols() != weights[0].cols() {
            return Err(Error::invalid("first layer shape mismatch"));
        }
        weights[0] = v;
        NetworkParams::from_weights(self.arch, weights)
    }

    // -- forward ------------------------------------------------------------

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::invalid(format!(
                "input length {} does not match D = {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// `f(x)`: length-Z representation of `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_trace(x).0)
    }

    /// Forward pass keeping pre-activations and activations of every hidden
    /// layer (needed by the backward pass).
    fn forward_trace(&self, x: &[f64]) -> (Vec<f64>, ForwardTrace) {
        let m_scale = 1.0 / (self.arch.width as f64).sqrt();
        let act = self.arch.activation;
        let mut pre = Vec::with_capacity(self.arch.depth);
        let mut hidden = Vec::with_capacity(self.arch.depth);

        let mut u = self.weights[0].matvec(x);
        let mut a: Vec<f64> = u.iter().map(|&t| act.phi(t)).collect();
        pre.push(u);
        hidden.push(a.clone());
        for l in 1..self.arch.depth {
            u = self.weights[l].matvec(&a);
            for t in u.iter_mut() {
                *t *= m_scale;
            }
            a = u.iter().map(|&t| act.phi(t)).collect();
            pre.push(u);
            hidden.push(a.clone());
        }
        let mut out = self.w().matvec_transpose(&a);
        for t in out.iter_mut() {
            *t *= m_scale;
        }
        (out, ForwardTrace { pre, hidden })
    }

    // -- gradients ----------------------------------------------------------

    /// Accumulate `scale * d<c, f(x)>/d theta` into the flat buffer `out`.
    ///
    /// Flat layout: layer by layer in row-major order (V first, W last).
    pub fn vjp_accumulate(&self, x: &[f64], cotangent: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(cotangent.len(), self.arch.output_dim);
        debug_assert_eq!(out.len(), self.param_count());
        let (_, trace) = self.forward_trace(x);
        self.vjp_from_trace(x, &trace, cotangent, scale, out);
    }

    fn vjp_from_trace(
        &self,
        x: &[f64],
        trace: &ForwardTrace,
        cotangent: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let m = self.arch.width;
        let m_scale = 1.0 / (m as f64).sqrt();
        let act = self.arch.activation;
        let depth = self.arch.depth;
        let mut offsets = self.layer_offsets();

        // Output layer: d<c,f>/dW[m,z] = m_scale * a_last[m] * c[z].
        let w_off = offsets.pop().unwrap();
        let a_last = &trace.hidden[depth - 1];
        let z_dim = self.arch.output_dim;
        for (i, &ai) in a_last.iter().enumerate() {
            let coef = scale * m_scale * ai;
            if coef != 0.0 {
                let row = &mut out[w_off + i * z_dim..w_off + (i + 1) * z_dim];
                for (j, &cj) in cotangent.iter().enumerate() {
                    row[j] += coef * cj;
                }
            }
        }

        // b = d<c,f>/d a_last.
        let mut b = self.w().matvec(cotangent);
        for t in b.iter_mut() {
            *t *= m_scale;
        }

        for l in (1..depth).rev() {
            let off = offsets.pop().unwrap();
            let delta: Vec<f64> = b
                .iter()
                .zip(&trace.pre[l])
                .map(|(&bi, &ui)| bi * act.phi_prime(ui) * m_scale)
                .collect();
            let a_prev = &trace.hidden[l - 1];
            for (i, &di) in delta.iter().enumerate() {
                let coef = scale * di;
                if coef != 0.0 {
                    let row = &mut out[off + i * m..off + (i + 1) * m];
                    for (j, &aj) in a_prev.iter().enumerate() {
                        row[j] += coef * aj;
                    }
                }
            }
            b = self.weights[l].matvec_transpose(&delta);
        }

        // First layer: u0 = V x carries no width scaling.
        let off = offsets.pop().unwrap();
        debug_assert_eq!(off, 0);
        let d_in = self.arch.input_dim;
        for (i, (&bi, &ui)) in b.iter().zip(&trace.pre[0]).enumerate() {
            let coef = scale * bi * act.phi_prime(ui);
            if coef != 0.0 {
                let row = &mut out[i * d_in..(i + 1) * d_in];
                for (j, &xj) in x.iter().enumerate() {
                    row[j] += coef * xj;
                }
            }
        }
    }

    /// Jacobian of the network output at `x`: Z rows by P parameters.
    pub fn param_gradient(&self, x: &[f64]) -> Result<Matrix> {
        self.check_input(x)?;
        let z_dim = self.arch.output_dim;
        let p = self.param_count();
        let (_, trace) = self.forward_trace(x);
        let mut jac = Matrix::zeros(z_dim, p);
        let mut cot = vec![0.0; z_dim];
        for z in 0..z_dim {
            cot[z] = 1.0;
            let row = &mut jac.data_mut()[z * p..(z + 1) * p];
            self.vjp_from_trace(x, &trace, &cot, 1.0, row);
            cot[z] = 0.0;
        }
        Ok(jac)
    }

    /// Gradient of `f_z` with respect to the input and with respect to the
    /// first-layer features `phi(Vx)`; used for assumption measurements.
    pub fn input_feature_gradients(&self, x: &[f64], z: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        if z >= self.arch.output_dim {
            return Err(Error::invalid(format!("output index {z} out of range")));
        }
        let m = self.arch.width;
        let m_scale = 1.0 / (m as f64).sqrt();
        let act = self.arch.activation;
        let (_, trace) = self.forward_trace(x);

        let mut b: Vec<f64> = self.w().col(z).iter().map(|wi| wi * m_scale).collect();
        for l in (1..self.arch.depth).rev() {
            let delta: Vec<f64> = b
                .iter()
                .zip(&trace.pre[l])
                .map(|(&bi, &ui)| bi * act.phi_prime(ui) * m_scale)
                .collect();
            b = self.weights[l].matvec_transpose(&delta);
        }
        // b is now d f_z / d phi(Vx).
        let feature_grad = b.clone();
        let delta0: Vec<f64> = b
            .iter()
            .zip(&trace.pre[0])
            .map(|(&bi, &ui)| bi * act.phi_prime(ui))
            .collect();
        let input_grad = self.weights[0].matvec_transpose(&delta0);
        Ok((input_grad, feature_grad))
    }

    // -- flat parameter vector ------------------------------------------------

    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.weights.len());
        let mut acc = 0;
        for w in &self.weights {
            offs.push(acc);
            acc += w.rows() * w.cols();
        }
        offs
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in &self.weights {
            out.extend_from_slice(w.data());
        }
        out
    }

    pub fn from_flat(arch: NetworkArch, flat: &[f64]) -> Result<Self> {
        if flat.len() != arch.param_count() {
            return Err(Error::invalid(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                arch.param_count()
            )));
        }
        let mut weights = Vec::new();
        let mut off = 0;
        for (r, c) in arch.layer_shapes() {
            weights.push(Matrix::from_vec(r, c, flat[off..off + r * c].to_vec()));
            off += r * c;
        }
        NetworkParams::from_weights(arch, weights)
    }

    /// `theta + scale * direction` as a new parameter value.
    pub fn add_flat(&self, direction: &[f64], scale: f64) -> Result<Self> {
        if direction.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "direction has {} entries, expected {}",
                direction.len(),
                self.param_count()
            )));
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut off = 0;
        for w in &self.weights {
            let len = w.rows() * w.cols();
            let data: Vec<f64> = w
                .data()
                .iter()
                .zip(&direction[off..off + len])
                .map(|(&a, &d)| a + scale * d)
                .collect();
            weights.push(Matrix::from_vec(w.rows(), w.cols(), data));
            off += len;
        }
        Ok(NetworkParams {
            arch: self.arch,
            weights,
        })
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0f64, |m, w| m.max(w.max_abs()))
    }

    // -- serialization --------------------------------------------------------

    /// Checkpoint format: 32-byte header (magic "NTKP", version, D, M, Z,
    /// depth, activation code, reserved word) followed by all weights as
    /// little-endian f64 in layer order.
    pub fn save_to<W: Write>(&self, writer: &mut W) -> Result<()> {
        writer.write_all(b"NTKP")?;
        for v in [
            1u32,
            self.arch.input_dim as u32,
            self.arch.width as u32,
            self.arch.output_dim as u32,
            self.arch.depth as u32,
            self.arch.activation.code(),
            0u32,
        ] {
            writer.write_all(&v.to_le_bytes())?;
        }
        for w in &self.weights {
            for x in w.data() {
                writer.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load_from<R: Read>(reader: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != b"NTKP" {
            return Err(Error::DataFormat(format!(
                "bad checkpoint magic {magic:02x?}, expected \"NTKP\""
            )));
        }
        let mut next = || -> Result<u32> {
            let mut word = [0u8; 4];
            reader.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next()?;
        if version != 1 {
            return Err(Error::DataFormat(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let d = next()? as usize;
        let m = next()? as usize;
        let z = next()? as usize;
        let depth = next()? as usize;
        let activation = Activation::from_code(next()?)?;
        let _reserved = next()?;
        let arch = NetworkArch::new(d, m, z, depth, activation)?;

        let mut buf = vec![0u8; arch.param_count() * 8];
        reader.read_exact(&mut buf)?;
        let flat: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        NetworkParams::from_flat(arch, &flat)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_to(&mut f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load_from(&mut f)
    }
}

struct ForwardTrace {
    pre: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Assumption measurement
// ---------------------------------------------------------------------------

/// Constants measured from an actual initialization and dataset: input
/// max-norm bound, weight max-norm scale, weight spectral scale and the
/// gradient flatness ratio. Report-only; violations are listed, not raised.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// max infinity-norm over all inputs.
    pub c_in: f64,
    /// max-entry weight scale divided by log M; undefined for M = 1.
    pub c_theta: Option<f64>,
    /// max spectral norm of the layers divided by sqrt(M).
    pub c_s: f64,
    /// max over points and outputs of sqrt(M) ||b||_inf / ||b||_2 for the
    /// input gradient and the first-layer feature gradient.
    pub s_0: f64,
    pub delta: f64,
    pub violations: Vec<String>,
}

/// Measure the assumption constants on a concrete network and dataset.
pub fn validate_assumptions(
    params: &NetworkParams,
    dataset: &ContrastiveDataset,
    spec: &SimilaritySpec,
) -> Result<AssumptionReport> {
    if dataset.num_anchors() == 0 {
        return Err(Error::invalid("dataset must be nonempty"));
    }
    let mut violations = Vec::new();
    let m = params.width() as f64;

    let c_in = dataset.c_in();
    if !c_in.is_finite() {
        violations.push("inputs are not uniformly bounded".to_string());
    }

    let c_theta = if params.width() == 1 {
        violations.push("c_theta undefined: log M = 0 for M = 1".to_string());
        None
    } else {
        Some(params.max_abs_weight() / m.ln())
    };

    let mut c_s = 0.0f64;
    for w in params.weights() {
        c_s = c_s.max(numerics::matrix_norm(w, MatrixNorm::Spectral)? / m.sqrt());
    }

    let mut s_0 = 0.0f64;
    for point in dataset.all_points() {
        for z in 0..params.output_dim() {
            let (b1, b2) = params.input_feature_gradients(point, z)?;
            for b in [&b1, &b2] {
                let n2 = norm2(b);
                if n2 > 0.0 {
                    s_0 = s_0.max(m.sqrt() * norm_inf(b) / n2);
                }
            }
        }
    }

    if !params.weights().iter().all(|w| w.is_finite()) {
        violations.push("weights contain non-finite entries".to_string());
    }
    if !params.activation().is_smooth() {
        violations.push(
            "relu has unbounded second derivative; smoothness-based bounds are unavailable"
                .to_string(),
        );
    }

    Ok(AssumptionReport {
        c_in,
        c_theta,
        c_s,
        s_0,
        delta: spec.delta(),
        violations,
    })
}
