//! Evaluation of expressions and pencils at tuples of complex matrices.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{AstPath, Node, PathStep, RationalExpr, Signature, VarKind};
use crate::json::{self, JsonMatrix};
use crate::linalg::{self, CMat, LogDet};
use crate::linearize::{AffinePencil, FormalLinRep, SaLinRep};

/// Relative smallest-singular-value threshold below which a matrix is
/// treated as not invertible.
pub const DEFAULT_INV_TOL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointError {
    #[error("all matrices of a tuple must be {0}x{0}")]
    WrongSize(usize),
    #[error("x{0} is not Hermitian (defect {1:e})")]
    NotHermitian(usize, f64),
    #[error("u{0} is not unitary (defect {1:e})")]
    NotUnitary(usize, f64),
}

/// A point `(X_1..X_d1, U_1..U_d2)` of `N×N` matrices.
#[derive(Clone, Debug)]
pub struct MatrixTuple {
    n: usize,
    xs: Vec<CMat>,
    us: Vec<CMat>,
}

impl MatrixTuple {
    /// Checked constructor: the `xs` must be Hermitian and the `us` unitary.
    pub fn new(n: usize, xs: Vec<CMat>, us: Vec<CMat>) -> Result<Self, PointError> {
        let t = Self::general(n, xs, us)?;
        for (j, x) in t.xs.iter().enumerate() {
            let defect = linalg::hermitian_defect(x.as_ref());
            if defect > HERMITIAN_TOL * linalg::frobenius(x.as_ref()).max(f64::MIN_POSITIVE) {
                return Err(PointError::NotHermitian(j + 1, defect));
            }
        }
        for (j, u) in t.us.iter().enumerate() {
            let defect = unitary_defect(u);
            if defect > UNITARY_TOL {
                return Err(PointError::NotUnitary(j + 1, defect));
            }
        }
        Ok(t)
    }

    /// A point of arbitrary complex matrices (no Hermitian/unitary check);
    /// used to probe pencils off the real manifold.
    pub fn general(n: usize, xs: Vec<CMat>, us: Vec<CMat>) -> Result<Self, PointError> {
        if xs.iter().chain(&us).any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(PointError::WrongSize(n));
        }
        Ok(MatrixTuple { n, xs, us })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xs(&self) -> &[CMat] {
        &self.xs
    }

    pub fn us(&self) -> &[CMat] {
        &self.us
    }

    pub fn signature(&self) -> Signature {
        Signature { d1: self.xs.len(), d2: self.us.len() }
    }

    pub fn to_json(&self) -> MatrixTupleJson {
        MatrixTupleJson {
            n: self.n,
            xs: self.xs.iter().map(|m| json::to_json_matrix(m.as_ref())).collect(),
            us: self.us.iter().map(|m| json::to_json_matrix(m.as_ref())).collect(),
        }
    }

    pub fn from_json(j: &MatrixTupleJson) -> Result<Self, PointError> {
        let xs = j.xs.iter().map(json::from_json_matrix).collect();
        let us = j.us.iter().map(json::from_json_matrix).collect();
        Self::new(j.n, xs, us)
    }
}

/// Wire format: `{"N": n, "Xs": [...], "Us": [...]}` with `[re, im]` entries.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixTupleJson {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Xs", default)]
    pub xs: Vec<JsonMatrix>,
    #[serde(rename = "Us", default)]
    pub us: Vec<JsonMatrix>,
}

pub fn unitary_defect(u: &CMat) -> f64 {
    let prod = u * u.adjoint();
    linalg::max_abs_diff(prod.as_ref(), linalg::identity(u.nrows()).as_ref())
}

/// The inverse rule failed somewhere in the tree.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("not in the domain: {subexpr} at {path} is not invertible (relative sigma_min {sigma_min:e})")]
pub struct DomainFailure {
    pub path: AstPath,
    /// Canonical rendering of the sub-expression that failed to invert.
    pub subexpr: String,
    /// Relative smallest singular value of the offending evaluation.
    pub sigma_min: f64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Domain(#[from] DomainFailure),
    #[error("point of signature ({point}) cannot evaluate an expression needing ({needed})")]
    SignatureMismatch { needed: Signature, point: Signature },
}

fn check_signature(needed: Signature, point: &MatrixTuple) -> Result<(), EvalError> {
    let have = point.signature();
    if needed.d1 > have.d1 || needed.d2 > have.d2 {
        return Err(EvalError::SignatureMismatch { needed, point: have });
    }
    Ok(())
}

/// Recursive evaluation; `A ⊗ X_j` uses Kronecker block layout, so the
/// result of a `p×q` expression is `pN × qN`.
pub fn eval_expr(expr: &RationalExpr, point: &MatrixTuple, inv_tol: f64) -> Result<CMat, EvalError> {
    check_signature(expr.required_signature(), point)?;
    eval_at(expr, point, inv_tol, &AstPath::root()).map_err(EvalError::from)
}

fn eval_at(expr: &RationalExpr, point: &MatrixTuple, inv_tol: f64, path: &AstPath) -> Result<CMat, DomainFailure> {
    let n = point.n();
    match expr.node() {
        Node::Const(a) => Ok(linalg::kron(a.as_ref(), linalg::identity(n).as_ref())),
        Node::ScaledVar { coeff, var } => {
            let m = match var.kind {
                VarKind::SelfAdjoint => &point.xs[var.index],
                VarKind::Unitary => &point.us[var.index],
            };
            Ok(linalg::kron(coeff.as_ref(), m.as_ref()))
        }
        Node::Sum(l, r) => {
            let a = eval_at(l, point, inv_tol, &path.child(PathStep::Lhs))?;
            let b = eval_at(r, point, inv_tol, &path.child(PathStep::Rhs))?;
            Ok(a + b)
        }
        Node::Product(l, r) => {
            let a = eval_at(l, point, inv_tol, &path.child(PathStep::Lhs))?;
            let b = eval_at(r, point, inv_tol, &path.child(PathStep::Rhs))?;
            Ok(a * b)
        }
        Node::Inverse(i) => {
            let a = eval_at(i, point, inv_tol, &path.child(PathStep::Inner))?;
            linalg::invert_checked(a.as_ref(), inv_tol).map_err(|sigma_min| DomainFailure {
                path: path.child(PathStep::Inner),
                subexpr: crate::parser::render(i),
                sigma_min,
            })
        }
    }
}

/// `A0 ⊗ I + Σ A_j ⊗ X_j + Σ B_j ⊗ U_j (+ B_j* ⊗ U_j* for paired pencils)`.
pub fn eval_pencil(pencil: &AffinePencil, point: &MatrixTuple) -> CMat {
    let n = point.n();
    assert!(
        pencil.selfadj_coeffs().len() <= point.xs().len() && pencil.unitary_coeffs().len() <= point.us().len(),
        "pencil needs more variables than the point provides"
    );
    let mut out = linalg::kron(pencil.a0().as_ref(), linalg::identity(n).as_ref());
    for (a, x) in pencil.selfadj_coeffs().iter().zip(point.xs()) {
        linalg::add_kron(&mut out, a.as_ref(), x.as_ref());
    }
    for (b, u) in pencil.unitary_coeffs().iter().zip(point.us()) {
        linalg::add_kron(&mut out, b.as_ref(), u.as_ref());
        if pencil.is_paired() {
            linalg::add_kron(&mut out, linalg::adjoint(b.as_ref()).as_ref(), linalg::adjoint(u.as_ref()).as_ref());
        }
    }
    out
}

pub fn pencil_det(pencil: &AffinePencil, point: &MatrixTuple) -> LogDet {
    linalg::log_det(eval_pencil(pencil, point).as_ref())
}

/// A representation to check against an expression.
#[derive(Clone, Copy, Debug)]
pub enum RepRef<'a> {
    General(&'a FormalLinRep),
    SelfAdjoint(&'a SaLinRep),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub ok: bool,
    /// `‖R − rep‖_F / (1 + ‖R‖_F)`.
    pub residual: f64,
    pub pencil_invertible: bool,
}

/// `u A(X)^-1 v` for a general representation, `w* Q(X)^-1 w` for a
/// self-adjoint one. `None` when the pencil is not invertible at the point.
pub fn eval_representation(rep: RepRef<'_>, point: &MatrixTuple, inv_tol: f64) -> Option<CMat> {
    let n = point.n();
    let id = linalg::identity(n);
    match rep {
        RepRef::General(r) => {
            let a = eval_pencil(r.pencil(), point);
            if !(linalg_invertible(&a, inv_tol)) {
                return None;
            }
            let u = linalg::kron(r.u().as_ref(), id.as_ref());
            let v = linalg::kron(r.v().as_ref(), id.as_ref());
            let x = linalg::solve(a.as_ref(), v.as_ref());
            Some(&u * &x)
        }
        RepRef::SelfAdjoint(r) => {
            let q = eval_pencil(r.pencil(), point);
            if !(linalg_invertible(&q, inv_tol)) {
                return None;
            }
            let w = linalg::kron(r.w().as_ref(), id.as_ref());
            let x = linalg::solve(q.as_ref(), w.as_ref());
            Some(w.adjoint() * &x)
        }
    }
}

fn linalg_invertible(m: &CMat, inv_tol: f64) -> bool {
    if m.nrows() <= linalg::EXACT_SVD_MAX_DIM {
        linalg::relative_sigma_min(m.as_ref()) > inv_tol
    } else {
        linalg::invert_checked(m.as_ref(), inv_tol).is_ok()
    }
}

/// Compares `R(X)` with the representation at `point`.
pub fn verify_representation(
    rep: RepRef<'_>,
    expr: &RationalExpr,
    point: &MatrixTuple,
    tol: f64,
) -> Result<VerifyReport, EvalError> {
    let direct = eval_expr(expr, point, DEFAULT_INV_TOL)?;
    let Some(via_rep) = eval_representation(rep, point, DEFAULT_INV_TOL) else {
        return Ok(VerifyReport { ok: false, residual: f64::INFINITY, pencil_invertible: false });
    };
    if (via_rep.nrows(), via_rep.ncols()) != (direct.nrows(), direct.ncols()) {
        return Ok(VerifyReport { ok: false, residual: f64::INFINITY, pencil_invertible: true });
    }
    let residual = linalg::difference_norm(direct.as_ref(), via_rep.as_ref()) / (1.0 + linalg::frobenius(direct.as_ref()));
    Ok(VerifyReport { ok: residual <= tol, residual, pencil_invertible: true })
}

/// Diagonal `N×N` matrix with real entries, for small hand-made points.
pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(values[i], 0.0) } else { c64::new(0.0, 0.0) })
}
