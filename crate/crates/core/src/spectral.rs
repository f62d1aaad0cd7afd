//! Spectra, distribution functions, Kolmogorov distance, ranks, and the
//! regularized inverse `f_ε`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::c64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat};

/// Relative Hermitian defect accepted before symmetrizing.
pub const HERMITIAN_INPUT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not Hermitian (relative defect {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
}

/// Sorted eigenvalues; the CDF is `#{λ ≤ t} / dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalSpectrum {
    values: Vec<f64>,
}

impl EmpiricalSpectrum {
    pub fn new(mut values: Vec<f64>) -> Self {
        assert!(values.iter().all(|v| !v.is_nan()), "spectrum contains NaN");
        values.sort_by(f64::total_cmp);
        EmpiricalSpectrum { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&x| x <= t) as f64 / self.dim() as f64
    }

    /// `lim_{s↑t} F(s)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&x| x < t) as f64 / self.dim() as f64
    }

    /// Empirical quantile, `q ∈ [0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        assert!(n > 0, "quantile of an empty spectrum");
        let idx = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.values[idx]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }
}

/// Named limit laws with closed-form distribution functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum AnalyticLaw {
    /// Centered semicircle on `[-2σ, 2σ]`.
    Semicircle { variance: f64 },
    /// Law of `2cos θ`, θ uniform: `F(t) = 1/2 + arcsin(t/2)/π` on `[-2, 2]`.
    Arcsine2,
    Uniform { a: f64, b: f64 },
    /// Law of `1/X` for `X` distributed by the inner (atomless) law.
    PushforwardInverse { of: Box<AnalyticLaw> },
    /// Piecewise-linear CDF through sorted `(t, F(t))` knots.
    Tabulated { grid: Vec<(f64, f64)> },
}

impl AnalyticLaw {
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            AnalyticLaw::Semicircle { variance } => {
                let x = t / variance.sqrt();
                if x <= -2.0 {
                    0.0
                } else if x >= 2.0 {
                    1.0
                } else {
                    0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
                }
            }
            AnalyticLaw::Arcsine2 => {
                if t <= -2.0 {
                    0.0
                } else if t >= 2.0 {
                    1.0
                } else {
                    0.5 + (t / 2.0).asin() / PI
                }
            }
            AnalyticLaw::Uniform { a, b } => ((t - a) / (b - a)).clamp(0.0, 1.0),
            AnalyticLaw::PushforwardInverse { of } => {
                let f0 = of.cdf(0.0);
                if t > 0.0 {
                    f0 + 1.0 - of.cdf(1.0 / t)
                } else if t < 0.0 {
                    f0 - of.cdf(1.0 / t)
                } else {
                    f0
                }
            }
            AnalyticLaw::Tabulated { grid } => {
                let Some(&(t0, f0)) = grid.first() else { return 0.0 };
                let &(t1, f1) = grid.last().expect("non-empty");
                if t < t0 {
                    return 0.0;
                }
                if t >= t1 {
                    return f1;
                }
                let i = grid.partition_point(|&(s, _)| s <= t);
                let (a, fa) = grid[i - 1];
                let (b, fb) = grid[i];
                if b == a {
                    fb
                } else {
                    (fa + (fb - fa) * (t - a) / (b - a)).max(f0)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            AnalyticLaw::Semicircle { variance } if !(*variance > 0.0) => Err("semicircle variance must be positive".into()),
            AnalyticLaw::Uniform { a, b } if !(a < b) => Err("uniform law needs a < b".into()),
            AnalyticLaw::PushforwardInverse { of } => of.validate(),
            AnalyticLaw::Tabulated { grid } => {
                let sorted = grid.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
                let in_range = grid.iter().all(|&(_, f)| (0.0..=1.0).contains(&f));
                if grid.is_empty() || !sorted || !in_range {
                    Err("tabulated CDF must be a non-empty non-decreasing grid in [0, 1]".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CdfQueryable {
    Empirical(EmpiricalSpectrum),
    Analytic(AnalyticLaw),
}

impl CdfQueryable {
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            CdfQueryable::Empirical(s) => s.cdf(t),
            CdfQueryable::Analytic(l) => l.cdf(t),
        }
    }
}

pub fn cdf(q: &CdfQueryable, t: f64) -> f64 {
    q.cdf(t)
}

const ANALYTIC_GRID: usize = 200_001;

/// `sup_t |F_a(t) − F_b(t)|`, exact whenever one side is empirical.
pub fn kolmogorov_distance(a: &CdfQueryable, b: &CdfQueryable) -> f64 {
    match (a, b) {
        (CdfQueryable::Empirical(x), CdfQueryable::Empirical(y)) => ks_empirical(x, y),
        (CdfQueryable::Empirical(x), CdfQueryable::Analytic(l)) | (CdfQueryable::Analytic(l), CdfQueryable::Empirical(x)) => {
            ks_against_law(x, l)
        }
        (CdfQueryable::Analytic(l), CdfQueryable::Analytic(m)) => (1..ANALYTIC_GRID)
            .map(|i| {
                let t = (PI * (i as f64 / ANALYTIC_GRID as f64 - 0.5)).tan();
                (l.cdf(t) - m.cdf(t)).abs()
            })
            .fold(0.0, f64::max),
    }
}

fn ks_empirical(x: &EmpiricalSpectrum, y: &EmpiricalSpectrum) -> f64 {
    // Both CDFs are constant between consecutive points of the merged support.
    let (a, b) = (x.values(), y.values());
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0_f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&s), Some(&u)) => s.min(u),
            (Some(&s), None) => s,
            (None, Some(&u)) => u,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        let fa = i as f64 / a.len().max(1) as f64;
        let fb = j as f64 / b.len().max(1) as f64;
        best = best.max((fa - fb).abs());
    }
    best
}

/// Kolmogorov distance with the abscissa blurred by `delta`: the least `h`
/// with `F_x(t − δ) − h ≤ F_y(t) ≤ F_x(t + δ) + h` for all `t`. Two spectra
/// whose sorted eigenvalues agree within `δ` are at distance 0.
pub fn kolmogorov_distance_within(x: &EmpiricalSpectrum, y: &EmpiricalSpectrum, delta: f64) -> f64 {
    let one_side = |a: &EmpiricalSpectrum, b: &EmpiricalSpectrum| {
        b.values().iter().map(|&t| b.cdf(t) - a.cdf(t + delta)).fold(0.0_f64, f64::max)
    };
    one_side(x, y).max(one_side(y, x))
}

/// Largest difference between sorted eigenvalues of equal-size spectra.
pub fn max_sorted_gap(x: &EmpiricalSpectrum, y: &EmpiricalSpectrum) -> f64 {
    assert_eq!(x.dim(), y.dim(), "spectra must have equal size");
    x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn ks_against_law(x: &EmpiricalSpectrum, law: &AnalyticLaw) -> f64 {
    let v = x.values();
    let n = v.len() as f64;
    let mut best = 0.0_f64;
    let mut i = 0;
    while i < v.len() {
        let t = v[i];
        let mut j = i;
        while j < v.len() && v[j] == t {
            j += 1;
        }
        let f = law.cdf(t);
        best = best.max((i as f64 / n - f).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    best
}

/// Eigenvalues of a Hermitian matrix, after symmetrizing away rounding.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<EmpiricalSpectrum, SpectralError> {
    check_hermitian(m)?;
    Ok(EmpiricalSpectrum::new(linalg::hermitian_eigenvalues(m.as_ref())))
}

fn check_hermitian(m: &CMat) -> Result<(), SpectralError> {
    if m.nrows() != m.ncols() {
        return Err(SpectralError::NotSquare(m.nrows(), m.ncols()));
    }
    let defect = linalg::hermitian_defect(m.as_ref());
    let scale = linalg::frobenius(m.as_ref());
    if defect > HERMITIAN_INPUT_TOL * scale {
        return Err(SpectralError::NotHermitian(defect / scale));
    }
    Ok(())
}

/// `#{σ > tol·σ_max} / rows`; 0 for the zero matrix.
pub fn normalized_rank(m: &CMat, tol: f64) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    linalg::numerical_rank(m.as_ref(), tol) as f64 / m.nrows() as f64
}

/// `#{|λ_i − λ| ≤ ε} / dim`.
pub fn atom_fraction(s: &EmpiricalSpectrum, lambda: f64, eps: f64) -> f64 {
    assert!(eps > 0.0, "window must be positive");
    if s.dim() == 0 {
        return 0.0;
    }
    let v = s.values();
    let lo = v.partition_point(|&x| x < lambda - eps);
    let hi = v.partition_point(|&x| x <= lambda + eps);
    (hi - lo) as f64 / s.dim() as f64
}

/// `1/t` outside `[-ε, ε]`, the odd linear interpolation `t/ε²` inside.
pub fn f_eps(t: f64, eps: f64) -> f64 {
    if t.abs() >= eps {
        1.0 / t
    } else {
        t / (eps * eps)
    }
}

/// Eigendecomposition of a Hermitian matrix, reused across several `ε`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    values: Vec<f64>,
    vectors: CMat,
}

impl HermitianEigen {
    pub fn new(m: &CMat) -> Result<Self, SpectralError> {
        check_hermitian(m)?;
        let (values, vectors) = linalg::hermitian_eigen(m.as_ref());
        Ok(HermitianEigen { values, vectors })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }

    /// `V f_ε(Λ) V*`.
    pub fn apply_f_eps(&self, eps: f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let f = f_eps(l, eps);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= f;
            }
        }
        linalg::symmetrize((&scaled * self.vectors.adjoint()).as_ref())
    }

    /// Projects `w`: returns `Y = V* w`, so that `w* f(Q) w = Y* f(Λ) Y`.
    pub fn project(&self, w: &CMat) -> CMat {
        self.vectors.adjoint() * w
    }
}

/// `Y* f_ε(Λ) Y` for `Y` from [`HermitianEigen::project`].
pub fn compress_f_eps(values: &[f64], y: &CMat, eps: f64) -> CMat {
    let mut fy = y.clone();
    for (i, &l) in values.iter().enumerate() {
        let f = f_eps(l, eps);
        for j in 0..fy.ncols() {
            fy[(i, j)] *= f;
        }
    }
    linalg::symmetrize((y.adjoint() * &fy).as_ref())
}

/// `f_ε(Q)` by functional calculus.
pub fn regularized_inverse_apply(q: &CMat, eps: f64) -> Result<CMat, SpectralError> {
    assert!(eps > 0.0, "eps must be positive");
    Ok(HermitianEigen::new(q)?.apply_f_eps(eps))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankCheckReport {
    pub ok: bool,
    /// Normalized rank of the perturbation.
    pub bound: f64,
    pub max_distance: f64,
    pub violating_t: Option<f64>,
}

const RANK_TOL: f64 = 1e-10;

/// Checks `|F_X(t) − F_{X+Y}(t)| ≤ rk(Y)` at every `t` in `grid` and at all
/// jump points of both distribution functions.
pub fn rank_cdf_bound_check(x: &CMat, y: &CMat, grid: &[f64]) -> Result<RankCheckReport, SpectralError> {
    assert_eq!((x.nrows(), x.ncols()), (y.nrows(), y.ncols()), "X and Y must have equal size");
    let sx = hermitian_eigenvalues(x)?;
    let sxy = hermitian_eigenvalues(&(x + y))?;
    let bound = normalized_rank(y, RANK_TOL);
    let limit = bound + 1e-12;
    let points = grid.iter().chain(sx.values()).chain(sxy.values());
    let mut max_distance = 0.0_f64;
    let mut violating_t = None;
    for &t in points {
        let d = (sx.cdf(t) - sxy.cdf(t)).abs();
        if d > max_distance {
            max_distance = d;
        }
        if d > limit && violating_t.is_none() {
            violating_t = Some(t);
        }
    }
    Ok(RankCheckReport { ok: violating_t.is_none(), bound, max_distance, violating_t })
}

/// Checks `rk(pXp) ≤ rk(X)` with one absolute threshold `tol·‖X‖` for
/// both ranks; `p` must be an orthogonal projection.
pub fn projection_rank_check(p: &CMat, x: &CMat, tol: f64) -> bool {
    let sv = linalg::singular_values(x.as_ref());
    let threshold = tol * sv.first().copied().unwrap_or(0.0);
    let pxp = p * x * p;
    linalg::rank_above(pxp.as_ref(), threshold) <= sv.iter().filter(|&&s| s > threshold).count()
}

/// Orthogonal projection onto a Haar-random `rank`-dimensional subspace.
pub fn random_projection<R: Rng>(n: usize, rank: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = linalg::zeros(n, rank);
    for j in 0..rank {
        for i in 0..n {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            g[(i, j)] = c64::new(s * re, s * im);
        }
    }
    let q = g.qr().compute_thin_Q();
    linalg::symmetrize((&q * q.adjoint()).as_ref())
}

/// `(t, F(t))` rows with header `t,F`.
pub fn cdf_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("t,F\n");
    for (t, f) in points {
        let _ = writeln!(out, "{t},{f}");
    }
    out
}
