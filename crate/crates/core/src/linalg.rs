//! Dense complex linear algebra helpers on top of `faer`.
//!
//! Every kernel runs with sequential parallelism so results are
//! bit-identical regardless of how many worker threads the caller uses.

use std::sync::Once;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Par, Side};

pub type CMat = Mat<c64>;

/// Matrices up to this size get an exact SVD in invertibility checks;
/// larger ones use power-iteration estimates of the extreme singular values.
pub const EXACT_SVD_MAX_DIM: usize = 256;

const POWER_ITERATIONS: usize = 40;
const MIN_POWER_ITERATIONS: usize = 4;
/// Relative growth below which the norm estimate counts as settled.
const POWER_REL_TOL: f64 = 1e-3;

static SEQUENTIAL: Once = Once::new();

pub(crate) fn ensure_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

pub fn scalar(z: c64) -> CMat {
    Mat::from_fn(1, 1, |_, _| z)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    Mat::from_fn(r, c, |i, j| c64::new(rows[i][j], 0.0))
}

pub fn is_zero(m: MatRef<'_, c64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)] == c64::new(0.0, 0.0)))
}

/// Kronecker product: block `(a, b)` of the result is `lhs[a, b] * rhs`.
pub fn kron(lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) -> CMat {
    let mut out = zeros(lhs.nrows() * rhs.nrows(), lhs.ncols() * rhs.ncols());
    add_kron(&mut out, lhs, rhs);
    out
}

/// `dst += lhs ⊗ rhs`, skipping zero coefficients.
pub fn add_kron(dst: &mut CMat, lhs: MatRef<'_, c64>, rhs: MatRef<'_, c64>) {
    let (n, m) = (rhs.nrows(), rhs.ncols());
    assert_eq!(dst.nrows(), lhs.nrows() * n);
    assert_eq!(dst.ncols(), lhs.ncols() * m);
    for a in 0..lhs.nrows() {
        for b in 0..lhs.ncols() {
            let coeff = lhs[(a, b)];
            if coeff == c64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..m {
                for i in 0..n {
                    dst[(a * n + i, b * m + j)] += coeff * rhs[(i, j)];
                }
            }
        }
    }
}

pub fn adjoint(m: MatRef<'_, c64>) -> CMat {
    m.adjoint().to_owned()
}

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// Frobenius norm of `m - m*`.
pub fn hermitian_defect(m: MatRef<'_, c64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += (m[(i, j)] - m[(j, i)].conj()).norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn symmetrize(m: MatRef<'_, c64>) -> CMat {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Singular values in non-increasing order.
pub fn singular_values(m: MatRef<'_, c64>) -> Vec<f64> {
    ensure_sequential();
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.singular_values().expect("svd failed to converge")
}

/// Number of singular values strictly above `rel_tol * sigma_max`.
pub fn numerical_rank(m: MatRef<'_, c64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * max).count()
}

/// Number of singular values strictly above an absolute threshold.
pub fn rank_above(m: MatRef<'_, c64>, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&x| x > threshold).count()
}

pub fn inverse(m: MatRef<'_, c64>) -> CMat {
    ensure_sequential();
    m.partial_piv_lu().inverse()
}

/// Solves `a x = b` by partial-pivoting LU.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    ensure_sequential();
    a.partial_piv_lu().solve(b)
}

fn all_finite(m: MatRef<'_, c64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

fn probe_vector(n: usize) -> CMat {
    let v = Mat::from_fn(n, 1, |i, _| {
        let t = i as f64;
        c64::new(1.0 + 0.5 * (0.7 * t).sin(), 0.3 * (1.3 * t + 0.4).cos())
    });
    let norm = frobenius(v.as_ref());
    Mat::from_fn(n, 1, |i, _| v[(i, 0)] / norm)
}

/// Power-iteration estimate of the spectral norm. Always a lower bound;
/// stops early once the estimate grows by less than `POWER_REL_TOL`.
pub fn spectral_norm_estimate(m: MatRef<'_, c64>) -> f64 {
    ensure_sequential();
    if m.ncols() == 0 {
        return 0.0;
    }
    let mut x = probe_vector(m.ncols());
    let mut est = 0.0_f64;
    for it in 0..POWER_ITERATIONS {
        let y = m * &x;
        let z = m.adjoint() * &y;
        let nz = frobenius(z.as_ref());
        if nz == 0.0 || !nz.is_finite() {
            return if nz.is_finite() { est } else { f64::INFINITY };
        }
        let ny = frobenius(y.as_ref());
        let settled = it >= MIN_POWER_ITERATIONS && ny <= est * (1.0 + POWER_REL_TOL);
        est = est.max(ny);
        if settled {
            break;
        }
        x = Mat::from_fn(z.nrows(), 1, |i, _| z[(i, 0)] / nz);
    }
    est
}

/// Inverts `m` when `sigma_min > rel_tol * sigma_max`; otherwise returns
/// the (estimated) relative smallest singular value.
pub fn invert_checked(m: MatRef<'_, c64>, rel_tol: f64) -> Result<CMat, f64> {
    assert_eq!(m.nrows(), m.ncols(), "invert_checked needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    if n <= EXACT_SVD_MAX_DIM {
        let rel = relative_sigma_min(m);
        if !(rel > rel_tol) {
            return Err(rel);
        }
        return Ok(inverse(m));
    }
    let inv = inverse(m);
    if !all_finite(inv.as_ref()) {
        return Err(0.0);
    }
    let rel = 1.0 / (spectral_norm_estimate(m) * spectral_norm_estimate(inv.as_ref()));
    if !(rel > rel_tol) {
        return Err(rel);
    }
    Ok(inv)
}

/// `sigma_min / sigma_max`, or 0 for the zero matrix.
pub fn relative_sigma_min(m: MatRef<'_, c64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 && max.is_finite() => min / max,
        _ => 0.0,
    }
}

/// Sorted eigenvalues of a Hermitian matrix (the lower triangle is used
/// after symmetrization).
pub fn hermitian_eigenvalues(m: MatRef<'_, c64>) -> Vec<f64> {
    ensure_sequential();
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = symmetrize(m);
    let mut ev = h.self_adjoint_eigenvalues(Side::Lower).expect("eigensolver failed to converge");
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues (non-decreasing) and unitary eigenvector matrix.
pub fn hermitian_eigen(m: MatRef<'_, c64>) -> (Vec<f64>, CMat) {
    ensure_sequential();
    let h = symmetrize(m);
    let evd = h.self_adjoint_eigen(Side::Lower).expect("eigensolver failed to converge");
    let s = evd.S();
    let values: Vec<f64> = (0..h.nrows()).map(|i| s[i].re).collect();
    (values, evd.U().to_owned())
}

/// Determinant as `phase * exp(log_modulus)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDet {
    pub log_modulus: f64,
    /// Unit-modulus phase factor; zero when the matrix is singular.
    pub phase: c64,
}

impl LogDet {
    pub fn is_zero(&self) -> bool {
        self.log_modulus == f64::NEG_INFINITY
    }

    pub fn value(&self) -> c64 {
        if self.is_zero() {
            return c64::new(0.0, 0.0);
        }
        self.phase * self.log_modulus.exp()
    }
}

pub fn log_det(m: MatRef<'_, c64>) -> LogDet {
    ensure_sequential();
    assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    if n == 0 {
        return LogDet { log_modulus: 0.0, phase: c64::new(1.0, 0.0) };
    }
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let mut log_modulus = 0.0;
    let mut phase = c64::new(1.0, 0.0);
    for i in 0..n {
        let d = u[(i, i)];
        let r = d.norm();
        if r == 0.0 || !r.is_finite() {
            return LogDet { log_modulus: f64::NEG_INFINITY, phase: c64::new(0.0, 0.0) };
        }
        log_modulus += r.ln();
        phase *= d / r;
    }
    let (fwd, _) = lu.P().arrays();
    if permutation_is_odd(fwd) {
        phase = -phase;
    }
    LogDet { log_modulus, phase }
}

fn permutation_is_odd(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    let mut transpositions = 0usize;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0usize;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        transpositions += len - 1;
    }
    transpositions % 2 == 1
}

pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn difference_norm(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    frobenius((a - b).as_ref())
}

/// Places `blocks` on a grid; `None` entries are zero blocks. Row heights
/// and column widths are given explicitly.
pub fn block(heights: &[usize], widths: &[usize], blocks: &[&[Option<MatRef<'_, c64>>]]) -> CMat {
    let rows: usize = heights.iter().sum();
    let cols: usize = widths.iter().sum();
    let mut out = zeros(rows, cols);
    let mut r0 = 0;
    for (bi, &h) in heights.iter().enumerate() {
        let mut c0 = 0;
        for (bj, &w) in widths.iter().enumerate() {
            if let Some(b) = blocks[bi][bj] {
                assert_eq!((b.nrows(), b.ncols()), (h, w), "block ({bi},{bj}) has wrong size");
                for j in 0..w {
                    for i in 0..h {
                        out[(r0 + i, c0 + j)] = b[(i, j)];
                    }
                }
            }
            c0 += w;
        }
        r0 += h;
    }
    out
}
