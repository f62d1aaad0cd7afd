//! Randomized certificates: domain witnesses, fullness of pencils, and
//! inner rank from the proportion of zero eigenvalues.

use serde::Serialize;

use crate::eval::{self, MatrixTuple, DEFAULT_INV_TOL};
use crate::expr::{lift_matrix, ExprMatrix, RationalExpr, Signature};
use crate::linalg::{self, CMat};
use crate::linearize::AffinePencil;
use crate::randmat::standard_tuple;
use crate::spectral::{self, atom_fraction};

use super::HarnessError;

/// Scaled smallest singular value below which a pencil evaluation counts
/// as singular.
pub const FULLNESS_ZERO_TOL: f64 = 1e-10;

/// Eigenvalues with `|λ| ≤ KERNEL_TOL · max|λ|` count as exact zeros.
pub const KERNEL_TOL: f64 = 1e-10;

/// How many extra samples to draw when an inner-rank evaluation leaves
/// the domain.
const RANK_RETRIES: u64 = 5;

#[derive(Clone, Debug)]
pub enum Nondegeneracy {
    Found { n: usize, trial: usize, witness: MatrixTuple },
    NotFound,
}

impl Nondegeneracy {
    pub fn witness_dimension(&self) -> Option<usize> {
        match self {
            Nondegeneracy::Found { n, .. } => Some(*n),
            Nondegeneracy::NotFound => None,
        }
    }
}

/// Scans `n_list` in order, `trials` GUE/Haar samples each, until the
/// expression can be evaluated.
pub fn test_nondegeneracy(expr: &RationalExpr, signature: Signature, n_list: &[usize], trials: usize, seed: u64) -> Nondegeneracy {
    let sig = signature.join(expr.required_signature());
    for &n in n_list {
        for trial in 0..trials {
            let point = standard_tuple(sig, n, seed, trial as u64);
            if eval::eval_expr(expr, &point, DEFAULT_INV_TOL).is_ok() {
                return Nondegeneracy::Found { n, trial, witness: point };
            }
        }
    }
    Nondegeneracy::NotFound
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FullnessWitness {
    #[serde(rename = "N")]
    pub n: usize,
    pub trial: usize,
    /// Smallest singular value of the row-normalized evaluation divided by
    /// its largest.
    pub scaled_sigma_min: f64,
    pub log_abs_det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum FullnessVerdict {
    Full(FullnessWitness),
    /// Every sampled evaluation was singular.
    ProbablyNotFull { largest_scaled_sigma_min: f64 },
}

impl FullnessVerdict {
    pub fn is_full(&self) -> bool {
        matches!(self, FullnessVerdict::Full(_))
    }
}

fn row_normalized(m: &CMat) -> Option<CMat> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let norm = (0..m.ncols()).map(|j| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        for j in 0..m.ncols() {
            out[(i, j)] /= norm;
        }
    }
    Some(out)
}

/// Scaled smallest singular value of the row-normalized matrix; 0 when a
/// row vanishes.
pub fn scaled_sigma_min(m: &CMat) -> f64 {
    match row_normalized(m) {
        Some(r) => linalg::relative_sigma_min(r.as_ref()),
        None => 0.0,
    }
}

/// Evaluates the pencil at `trials` Hermitian/unitary samples per `N`; one
/// invertible evaluation certifies fullness.
pub fn test_fullness(pencil: &AffinePencil, n_list: &[usize], trials: usize, seed: u64) -> FullnessVerdict {
    let sig = pencil.signature();
    let mut largest = 0.0_f64;
    for &n in n_list {
        for trial in 0..trials {
            let point = standard_tuple(sig, n, seed, trial as u64);
            let m = eval::eval_pencil(pencil, &point);
            let s = scaled_sigma_min(&m);
            if s >= FULLNESS_ZERO_TOL {
                let d = linalg::log_det(m.as_ref());
                return FullnessVerdict::Full(FullnessWitness { n, trial, scaled_sigma_min: s, log_abs_det: d.log_modulus });
            }
            largest = largest.max(s);
        }
    }
    FullnessVerdict::ProbablyNotFull { largest_scaled_sigma_min: largest }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankAtDimension {
    #[serde(rename = "N")]
    pub n: usize,
    /// Share of eigenvalues that vanish to working precision.
    pub kernel_fraction: f64,
    pub atom_fractions: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerRankEstimate {
    pub p: usize,
    pub per_n: Vec<RankAtDimension>,
    /// Window fractions at the largest `N` extrapolated linearly to `ε = 0`.
    pub extrapolated_fraction: f64,
    pub rho: usize,
}

/// Estimates the inner rank of a square self-adjoint matrix of
/// expressions as `p·(1 − f)`, `f` the asymptotic share of zero eigenvalues.
pub fn estimate_inner_rank(
    matrix: &ExprMatrix,
    signature: Signature,
    n_list: &[usize],
    eps_list: &[f64],
    seed: u64,
) -> Result<InnerRankEstimate, HarnessError> {
    let p = matrix.rows();
    if matrix.cols() != p {
        return Err(HarnessError::NotSquare(format!("{}x{}", p, matrix.cols())));
    }
    if n_list.is_empty() || eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(HarnessError::Config("need at least one N and one positive eps".into()));
    }
    let expr = lift_matrix(matrix);
    let sig = signature.join(expr.required_signature());
    let mut per_n = Vec::new();
    for &n in n_list {
        let mut value = None;
        let mut last_err = None;
        for sample in 0..RANK_RETRIES {
            match eval::eval_expr(&expr, &standard_tuple(sig, n, seed, sample), DEFAULT_INV_TOL) {
                Ok(v) => {
                    value = Some(v);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let value = match value {
            Some(v) => v,
            None => return Err(HarnessError::Eval(last_err.expect("at least one attempt").to_string())),
        };
        let spectrum = spectral::hermitian_eigenvalues(&value).map_err(|e| HarnessError::Numerical(e.to_string()))?;
        let scale = spectrum.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let zeros = spectrum.values().iter().filter(|v| v.abs() <= KERNEL_TOL * scale).count();
        per_n.push(RankAtDimension {
            n,
            kernel_fraction: zeros as f64 / spectrum.dim() as f64,
            atom_fractions: eps_list.iter().map(|&eps| (eps, atom_fraction(&spectrum, 0.0, eps))).collect(),
        });
    }
    let last = per_n.last().expect("non-empty");
    let extrapolated_fraction = intercept(&last.atom_fractions).clamp(0.0, 1.0);
    let rho = (p as f64 * (1.0 - extrapolated_fraction)).round() as usize;
    Ok(InnerRankEstimate { p, per_n, extrapolated_fraction, rho })
}

/// Least-squares line through `(ε, f)`, evaluated at `ε = 0`.
fn intercept(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    my - (sxy / sxx) * mx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real_rows;
    use crate::linearize::{linearize, schur_pencil};
    use crate::parser::{parse_expr, parse_expr_matrix};

    fn sig(d1: usize, d2: usize) -> Signature {
        Signature::new(d1, d2).unwrap()
    }

    #[test]
    fn commutator_inverse_needs_two_dimensions() {
        let e = parse_expr("inv(x1*x2 - x2*x1)", sig(2, 0)).unwrap();
        assert!(matches!(test_nondegeneracy(&e, sig(2, 0), &[1], 10, 0), Nondegeneracy::NotFound));
        assert_eq!(test_nondegeneracy(&e, sig(2, 0), &[1, 2], 5, 0).witness_dimension(), Some(2));
    }

    #[test]
    fn scalar_inverse_and_degenerate_expression() {
        let e = parse_expr("inv(x1)", sig(1, 0)).unwrap();
        assert_eq!(test_nondegeneracy(&e, sig(1, 0), &[1], 3, 0).witness_dimension(), Some(1));
        let z = parse_expr("inv(x1 - x1)", sig(1, 0)).unwrap();
        assert!(matches!(test_nondegeneracy(&z, sig(1, 0), &[1, 2, 3, 4], 5, 0), Nondegeneracy::NotFound));
    }

    #[test]
    fn fullness_examples() {
        let e = parse_expr("inv(x1)", sig(1, 0)).unwrap();
        let bordered = schur_pencil(&linearize(&e, sig(1, 0))).unwrap();
        assert!(test_fullness(&bordered, &[1, 2], 5, 0).is_full());

        let ones = from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let rank_one = AffinePencil::new(linalg::zeros(2, 2), vec![ones], vec![], false).unwrap();
        assert!(!test_fullness(&rank_one, &[1, 2, 4], 5, 0).is_full());

        let id = AffinePencil::constant(linalg::identity(3));
        match test_fullness(&id, &[1], 1, 0) {
            FullnessVerdict::Full(w) => assert_eq!(w.n, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inner_rank_examples() {
        let m = parse_expr_matrix("[[x1, x1], [x1, x1]]", sig(1, 0)).unwrap();
        let est = estimate_inner_rank(&m, sig(1, 0), &[20, 40], &[0.1, 0.05, 0.01], 1).unwrap();
        assert!(est.per_n.iter().all(|r| r.kernel_fraction == 0.5), "{est:?}");
        assert_eq!(est.rho, 1);

        let d = parse_expr_matrix("[[x1, 0], [0, x2]]", sig(2, 0)).unwrap();
        let est = estimate_inner_rank(&d, sig(2, 0), &[50, 100], &[0.1, 0.05, 0.01], 1).unwrap();
        assert_eq!(est.rho, 2);
        assert!(est.extrapolated_fraction < 0.05);

        let one = parse_expr_matrix("[[x1]]", sig(1, 0)).unwrap();
        assert_eq!(estimate_inner_rank(&one, sig(1, 0), &[30], &[0.1, 0.05], 1).unwrap().rho, 1);
    }

    #[test]
    fn intercept_of_a_line() {
        assert!((intercept(&[(0.1, 0.7), (0.05, 0.6), (0.01, 0.52)]) - 0.5).abs() < 1e-12);
        assert_eq!(intercept(&[(0.1, 0.3)]), 0.3);
    }
}
