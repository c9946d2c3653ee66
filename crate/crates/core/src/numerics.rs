//! Deterministic dense linear algebra and seeded random generation.
//!
//! Everything downstream (networks, kernels, trainers, bound calculators)
//! is built on the operations here: seeded Gaussian sampling, a cyclic
//! Jacobi eigensolver, Gram-Schmidt orthonormalization, polar decomposition
//! and matrix norms. All routines are pure functions of their inputs, so
//! values can be shared freely across threads.
//!
//! Random generation uses Box-Muller on top of a 64-bit counter hash
//! (splitmix-style) so that a given `(shape, seed)` reproduces bit-identical
//! matrices across runs and platforms.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Seeded random generation
// ---------------------------------------------------------------------------

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; bijective on u64.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless counter hash: the `index`-th word of the stream named `seed`.
#[inline]
fn counter_word(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

/// Uniform draw in (0, 1] from stream `seed` at position `index`.
#[inline]
fn counter_uniform(seed: u64, index: u64) -> f64 {
    // 53 mantissa bits; +1 keeps the draw away from exactly 0 for log().
    ((counter_word(seed, index) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw at position `index` of stream `seed` (Box-Muller).
#[inline]
pub fn counter_normal(seed: u64, index: u64) -> f64 {
    let u1 = counter_uniform(seed, 2 * index);
    let u2 = counter_uniform(seed, 2 * index + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Derive an independent child seed, e.g. one per layer or per grid cell.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0x5851_F42D_4C95_7F2D))
}

/// Sequential convenience wrapper over the counter hash.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    next: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, next: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let w = counter_word(self.seed, self.next);
        self.next += 1;
        w
    }

    /// Uniform in (0, 1].
    pub fn uniform(&mut self) -> f64 {
        let w = self.next_u64();
        ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n` via multiply-shift (deterministic, unbiased
    /// to within 2^-64).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let w = self.next_u64();
        ((w as u128 * n as u128) >> 64) as usize
    }
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must be rows * cols");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    /// Column vector from a slice.
    pub fn from_column(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self.data[i * self.cols + j] = v[i];
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self * other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for j in 0..other.cols {
                    out_row[j] += a_ik * b_row[j];
                }
            }
        }
        out
    }

    /// `self^T * other`
    pub fn matmul_transpose_left(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "row counts must agree");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a_ki) in a_row.iter().enumerate() {
                if a_ki == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    out_row[j] += a_ki * b_row[j];
                }
            }
        }
        out
    }

    /// `self * x` for a vector x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "vector length must equal cols");
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    /// `self^T * x` for a vector x.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "vector length must equal rows");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for j in 0..self.cols {
                out[j] += xi * row[j];
            }
        }
        out
    }

    /// `self += coef * a * b^T`
    pub fn add_outer(&mut self, coef: f64, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            let c = coef * ai;
            if c == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (j, &bj) in b.iter().enumerate() {
                row[j] += c * bj;
            }
        }
    }

    pub fn add_scaled(&self, other: &Matrix, scale: f64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add_scaled(other, -1.0)
    }

    pub fn scaled(&self, scale: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * scale).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace needs a square matrix");
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Square CSV dump, 17 significant digits per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------------------
// Gaussian matrices
// ---------------------------------------------------------------------------

/// Matrix of i.i.d. standard normals, reproducible from `(rows, cols, seed)`.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "gaussian_matrix needs positive dimensions, got {rows}x{cols}"
        )));
    }
    let data = (0..rows * cols)
        .map(|k| counter_normal(seed, k as u64))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Full spectrum of a symmetric matrix: eigenvalues sorted descending with
/// orthonormal eigenvector columns aligned to them.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 30;
const JACOBI_OFF_TOL: f64 = 1e-12;
const SYM_TOL: f64 = 1e-9;
pub const MAX_EIGEN_SIZE: usize = 4096;

fn off_diagonal_frobenius(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let x = a[i * n + j];
                s += x * x;
            }
        }
    }
    s.sqrt()
}

/// Size above which the tridiagonal path replaces plain Jacobi; the cyclic
/// sweeps become latency-bound on column walks well before 1024.
const JACOBI_MAX_SIZE: usize = 256;

/// Full spectrum of a symmetric matrix with orthonormal eigenvectors,
/// eigenvalues sorted descending.
///
/// Matrices up to 256x256 go through cyclic Jacobi sweeps (off-diagonal
/// Frobenius mass reduced below `1e-12 * ||A||_F` within a 30-sweep
/// budget); larger ones are Householder-tridiagonalized and solved by
/// implicit-shift QL at machine precision. Input must be symmetric within
/// 1e-9 and at most 4096x4096.
pub fn sym_eigen(a: &Matrix) -> Result<EigenResult> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::invalid(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n > MAX_EIGEN_SIZE {
        return Err(Error::invalid(format!(
            "sym_eigen size {n} exceeds the supported maximum {MAX_EIGEN_SIZE}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::invalid("sym_eigen input has non-finite entries"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYM_TOL {
                return Err(Error::invalid(format!(
                    "sym_eigen input asymmetric at ({i},{j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    if n <= JACOBI_MAX_SIZE {
        jacobi_eigen(a)
    } else {
        tridiagonal_eigen(a)
    }
}

fn jacobi_eigen(a: &Matrix) -> Result<EigenResult> {
    let n = a.rows();
    let mut m = a.data().to_vec();
    // Work on the exactly symmetric average so rotations preserve symmetry.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    let mut q = Matrix::identity(n).data().to_vec();
    let fro = a.frobenius_norm();
    let target = JACOBI_OFF_TOL * fro;

    let mut converged = fro == 0.0 || off_diagonal_frobenius(&m, n) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n - 1 {
            for r in (p + 1)..n {
                let apq = m[p * n + r];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[r * n + r];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    // Avoid overflow in theta^2; the rotation is tiny anyway.
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // A <- J^T A (rows p and r), then A <- A J (columns p and r).
                for k in 0..n {
                    let apk = m[p * n + k];
                    let ark = m[r * n + k];
                    m[p * n + k] = c * apk - s * ark;
                    m[r * n + k] = s * apk + c * ark;
                }
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akr = m[k * n + r];
                    m[k * n + p] = c * akp - s * akr;
                    m[k * n + r] = s * akp + c * akr;
                    let qkp = q[k * n + p];
                    let qkr = q[k * n + r];
                    q[k * n + p] = c * qkp - s * qkr;
                    q[k * n + r] = s * qkp + c * qkr;
                }
            }
        }
        sweeps += 1;
        converged = off_diagonal_frobenius(&m, n) <= target;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps \
             (off-diagonal mass {:.3e}, target {:.3e})",
            off_diagonal_frobenius(&m, n),
            target
        )));
    }

    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    Ok(sort_eigenpairs(n, &diag, &q, false))
}

/// Package (values, vector table) into a descending-sorted result.
/// `vectors_in_rows` says whether eigenvector k lives in row k of `table`
/// (it is emitted as column k either way).
fn sort_eigenpairs(n: usize, values: &[f64], table: &[f64], vectors_in_rows: bool) -> EigenResult {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            let v = if vectors_in_rows {
                table[old_j * n + i]
            } else {
                table[i * n + old_j]
            };
            vectors[(i, new_j)] = v;
        }
    }
    EigenResult {
        eigenvalues,
        eigenvectors: vectors,
    }
}

const QL_MAX_ITERS: usize = 50;

/// Householder reduction to tridiagonal form with accumulated transform,
/// followed by implicit-shift QL. The rotation accumulator is kept with
/// eigenvectors as rows so the QL plane rotations stay cache-contiguous.
fn tridiagonal_eigen(a: &Matrix) -> Result<EigenResult> {
    let n = a.rows();
    let mut z = a.data().to_vec();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];

    // Householder reduction (tred2). After this, z holds the accumulated
    // orthogonal transform Q0 with A = Q0 T Q0^T.
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = z[i * n..i * n + l + 1].iter().map(|x| x.abs()).sum();
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z[i * n + j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] -= g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..i {
            z[j * n + i] = 0.0;
            z[i * n + j] = 0.0;
        }
    }

    // Transpose the accumulator: row k now holds eigenvector candidate k.
    for i in 0..n {
        for j in (i + 1)..n {
            z.swap(i * n + j, j * n + i);
        }
    }

    // Implicit-shift QL on (d, e), rotating accumulator rows.
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iters = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iters += 1;
            if iters > QL_MAX_ITERS {
                return Err(Error::NumericalFailure(format!(
                    "QL iteration did not converge for eigenvalue {l} after {QL_MAX_ITERS} shifts"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (row_i, row_i1) = {
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    (&mut lo[i * n..(i + 1) * n], &mut hi[..n])
                };
                for k in 0..n {
                    f = row_i1[k];
                    row_i1[k] = s * row_i[k] + c * f;
                    row_i[k] = c * row_i[k] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(sort_eigenpairs(n, &d, &z, true))
}

// ---------------------------------------------------------------------------
// QR orthonormalization (modified Gram-Schmidt, two passes)
// ---------------------------------------------------------------------------

const RANK_TOL: f64 = 1e-12;

/// Orthonormal basis of the column span of `a` (rows >= cols), with the sign
/// convention that the implied triangular factor has nonnegative diagonal.
pub fn qr_orthonormalize(a: &Matrix) -> Result<Matrix> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::invalid(format!(
            "qr_orthonormalize needs rows >= cols, got {m}x{n}"
        )));
    }
    let fro = a.frobenius_norm();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    for j in 0..n {
        // Two Gram-Schmidt passes keep Q^T Q = I to ~1e-15 even for
        // ill-conditioned inputs.
        for _ in 0..2 {
            for i in 0..j {
                let cols_i = std::mem::take(&mut cols[i]);
                let r = dot(&cols_i, &cols[j]);
                for (vj, vi) in cols[j].iter_mut().zip(&cols_i) {
                    *vj -= r * vi;
                }
                cols[i] = cols_i;
            }
        }
        let r_jj = norm2(&cols[j]);
        if r_jj < RANK_TOL * fro || r_jj == 0.0 {
            return Err(Error::RankDeficient(format!(
                "column {j} is numerically dependent (residual norm {r_jj:.3e})"
            )));
        }
        for v in cols[j].iter_mut() {
            *v /= r_jj;
        }
    }
    let mut out = Matrix::zeros(m, n);
    for (j, cj) in cols.iter().enumerate() {
        out.set_col(j, cj);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Polar decomposition
// ---------------------------------------------------------------------------

pub const MAX_POLAR_SIZE: usize = 64;
const SINGULAR_TOL: f64 = 1e-12;

/// Orthogonal factor O of the polar decomposition `a = O * P` with P
/// symmetric positive semidefinite, computed via the eigendecomposition of
/// `a^T a`. Intended for small square alignment problems (size <= 64).
pub fn polar_orthogonal(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::invalid(format!(
            "polar_orthogonal needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n > MAX_POLAR_SIZE {
        return Err(Error::invalid(format!(
            "polar_orthogonal size {n} exceeds the supported maximum {MAX_POLAR_SIZE}"
        )));
    }
    let gram = a.matmul_transpose_left(a); // a^T a, symmetric PSD
    let eig = sym_eigen(&gram)?;
    let sigmas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let sigma_min = sigmas.last().copied().unwrap_or(0.0);
    if sigma_min < SINGULAR_TOL {
        return Err(Error::DegenerateAlignment(sigma_min));
    }
    // O = a * Q * diag(1/sigma) * Q^T  (the inverse symmetric square root).
    let q = &eig.eigenvectors;
    let mut inv_sqrt = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += q[(i, k)] * q[(j, k)] / sigmas[k];
            }
            inv_sqrt[(i, j)] = s;
        }
    }
    Ok(a.matmul(&inv_sqrt))
}

// ---------------------------------------------------------------------------
// Matrix norms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixNorm {
    Frobenius,
    MaxAbs,
    Spectral,
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

/// Matrix norm of the requested kind. The spectral norm runs power iteration
/// on `a^T a` (tolerance 1e-10, cap 10000 iterations).
pub fn matrix_norm(a: &Matrix, kind: MatrixNorm) -> Result<f64> {
    match kind {
        MatrixNorm::Frobenius => Ok(a.frobenius_norm()),
        MatrixNorm::MaxAbs => Ok(a.max_abs()),
        MatrixNorm::Spectral => spectral_norm(a),
    }
}

fn spectral_norm(a: &Matrix) -> Result<f64> {
    if a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let n = a.cols();
    let mut v: Vec<f64> = (0..n)
        .map(|k| counter_normal(0x9D2C_5680_1701_D00D, k as u64))
        .collect();
    let nv = norm2(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut sigma = 0.0f64;
    for it in 0..POWER_MAX_ITERS {
        let av = a.matvec(&v);
        let new_sigma = norm2(&av);
        if new_sigma == 0.0 {
            // Start vector fell in the null space; perturb and continue.
            for (k, x) in v.iter_mut().enumerate() {
                *x += counter_normal(0xDEC0_DE00 + it as u64, k as u64) * 1e-3;
            }
            let nv = norm2(&v);
            for x in v.iter_mut() {
                *x /= nv;
            }
            continue;
        }
        let mut w = a.matvec_transpose(&av);
        let nw = norm2(&w);
        for x in w.iter_mut() {
            *x /= nw;
        }
        v = w;
        if (new_sigma - sigma).abs() <= POWER_TOL * new_sigma.max(f64::MIN_POSITIVE) {
            return Ok(new_sigma);
        }
        sigma = new_sigma;
    }
    Err(Error::NumericalFailure(format!(
        "power iteration did not converge in {POWER_MAX_ITERS} iterations (estimate {sigma:.6e})"
    )))
}
