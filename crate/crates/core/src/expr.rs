//! Matrix-valued noncommutative rational expressions.
//!
//! An expression is a formal syntax tree over complex coefficient matrices
//! and two kinds of variables: self-adjoint ones `x1, x2, ...` and unitary
//! ones `u1, u2, ...`. Nodes are immutable and shared through `Arc`, so
//! cloning an expression is cheap and expressions can be used from several
//! threads at once.
//!
//! No arithmetic identification is ever made: `x1 - x1` is a different
//! expression from `0`, and `(x1^-1)^-1` is not `x1`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, MatrixTuple, DEFAULT_INV_TOL};
use crate::linalg::{self, CMat};
use crate::randmat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    /// Number of self-adjoint variables.
    pub d1: usize,
    /// Number of unitary variables.
    pub d2: usize,
}

impl Signature {
    pub fn new(d1: usize, d2: usize) -> Result<Self, ExprError> {
        if d1 + d2 == 0 {
            return Err(ExprError::EmptySignature);
        }
        Ok(Signature { d1, d2 })
    }

    pub fn contains(&self, var: Var) -> bool {
        match var.kind {
            VarKind::SelfAdjoint => var.index < self.d1,
            VarKind::Unitary => var.index < self.d2,
        }
    }

    /// Checks that every variable of `expr` is declared here.
    pub fn validate(&self, expr: &RationalExpr) -> Result<(), ExprError> {
        match expr.variables().into_iter().find(|v| !self.contains(*v)) {
            Some(var) => Err(ExprError::UnknownVariable { var, signature: *self }),
            None => Ok(()),
        }
    }

    /// Componentwise maximum.
    pub fn join(&self, other: Signature) -> Signature {
        Signature { d1: self.d1.max(other.d1), d2: self.d2.max(other.d2) }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d1={} d2={}", self.d1, self.d2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    SelfAdjoint,
    Unitary,
}

/// A variable; `index` is zero-based, display names are one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn selfadjoint(index: usize) -> Var {
        Var { kind: VarKind::SelfAdjoint, index }
    }

    pub fn unitary(index: usize) -> Var {
        Var { kind: VarKind::Unitary, index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::SelfAdjoint => write!(f, "x{}", self.index + 1),
            VarKind::Unitary => write!(f, "u{}", self.index + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathStep {
    Lhs,
    Rhs,
    Inner,
}

/// Location of a node inside an expression tree, from the root down.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AstPath(pub Vec<PathStep>);

impl AstPath {
    pub fn root() -> Self {
        AstPath(Vec::new())
    }

    pub fn child(&self, step: PathStep) -> Self {
        let mut steps = self.0.clone();
        steps.push(step);
        AstPath(steps)
    }
}

impl fmt::Display for AstPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("root")?;
        for step in &self.0 {
            f.write_str(match step {
                PathStep::Lhs => ".lhs",
                PathStep::Rhs => ".rhs",
                PathStep::Inner => ".inner",
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("shape mismatch at {path}: {detail}")]
    ShapeMismatch { path: AstPath, detail: String },
    #[error("unknown variable {var} for signature ({signature})")]
    UnknownVariable { var: Var, signature: Signature },
    #[error("a signature needs at least one variable")]
    EmptySignature,
    #[error("expression is {0}, expected a square expression")]
    NotSquare(Shape),
    #[error("no sampled point was in the domain of the expression")]
    NoSampleInDomain,
}

pub enum Node {
    /// `A ⊗ 1`.
    Const(CMat),
    /// `A ⊗ var`.
    ScaledVar { coeff: CMat, var: Var },
    Sum(RationalExpr, RationalExpr),
    Product(RationalExpr, RationalExpr),
    Inverse(RationalExpr),
}

struct ExprNode {
    node: Node,
    shape: Shape,
}

#[derive(Clone)]
pub struct RationalExpr {
    inner: Arc<ExprNode>,
}

fn one() -> c64 {
    c64::new(1.0, 0.0)
}

impl RationalExpr {
    fn from_parts(node: Node, shape: Shape) -> Self {
        RationalExpr { inner: Arc::new(ExprNode { node, shape }) }
    }

    pub fn constant(coeff: CMat) -> Result<Self, ExprError> {
        let shape = matrix_shape(&coeff)?;
        Ok(Self::from_parts(Node::Const(coeff), shape))
    }

    pub fn scalar(z: c64) -> Self {
        Self::from_parts(Node::Const(linalg::scalar(z)), Shape { rows: 1, cols: 1 })
    }

    pub fn scaled_var(coeff: CMat, var: Var) -> Result<Self, ExprError> {
        let shape = matrix_shape(&coeff)?;
        Ok(Self::from_parts(Node::ScaledVar { coeff, var }, shape))
    }

    /// The scalar variable `1 ⊗ var`.
    pub fn var(var: Var) -> Self {
        Self::from_parts(
            Node::ScaledVar { coeff: linalg::scalar(one()), var },
            Shape { rows: 1, cols: 1 },
        )
    }

    pub fn x(index: usize) -> Self {
        Self::var(Var::selfadjoint(index))
    }

    pub fn u(index: usize) -> Self {
        Self::var(Var::unitary(index))
    }

    pub fn sum(lhs: RationalExpr, rhs: RationalExpr) -> Result<Self, ExprError> {
        let shape = check_sum(lhs.shape(), rhs.shape(), &AstPath::root())?;
        Ok(Self::from_parts(Node::Sum(lhs, rhs), shape))
    }

    pub fn product(lhs: RationalExpr, rhs: RationalExpr) -> Result<Self, ExprError> {
        let shape = check_product(lhs.shape(), rhs.shape(), &AstPath::root())?;
        Ok(Self::from_parts(Node::Product(lhs, rhs), shape))
    }

    pub fn inverse(inner: RationalExpr) -> Result<Self, ExprError> {
        let shape = check_inverse(inner.shape(), &AstPath::root())?;
        Ok(Self::from_parts(Node::Inverse(inner), shape))
    }

    /// `-e`, written as `(-1)·e`. The sign is folded into the leftmost
    /// coefficient when there is one, otherwise a `-I` constant is prepended.
    pub fn neg(&self) -> Self {
        match self.node() {
            Node::Const(a) => Self::from_parts(Node::Const(-a), self.shape()),
            Node::ScaledVar { coeff, var } => {
                Self::from_parts(Node::ScaledVar { coeff: -coeff, var: *var }, self.shape())
            }
            Node::Product(l, r) => Self::from_parts(Node::Product(l.neg(), r.clone()), self.shape()),
            Node::Sum(..) | Node::Inverse(..) => {
                let p = self.rows();
                let minus = -linalg::identity(p);
                Self::from_parts(
                    Node::Product(Self::from_parts(Node::Const(minus), Shape { rows: p, cols: p }), self.clone()),
                    self.shape(),
                )
            }
        }
    }

    pub fn node(&self) -> &Node {
        &self.inner.node
    }

    pub fn shape(&self) -> Shape {
        self.inner.shape
    }

    pub fn rows(&self) -> usize {
        self.inner.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.inner.shape.cols
    }

    pub fn is_square(&self) -> bool {
        self.inner.shape.is_square()
    }

    pub fn ptr_eq(&self, other: &RationalExpr) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Recomputes the shape from the leaves up, ignoring cached shapes.
    pub fn recompute_shape(&self) -> Result<Shape, ExprError> {
        fn go(e: &RationalExpr, path: &AstPath) -> Result<Shape, ExprError> {
            match e.node() {
                Node::Const(a) | Node::ScaledVar { coeff: a, .. } => Ok(Shape { rows: a.nrows(), cols: a.ncols() }),
                Node::Sum(l, r) => {
                    let ls = go(l, &path.child(PathStep::Lhs))?;
                    let rs = go(r, &path.child(PathStep::Rhs))?;
                    check_sum(ls, rs, path)
                }
                Node::Product(l, r) => {
                    let ls = go(l, &path.child(PathStep::Lhs))?;
                    let rs = go(r, &path.child(PathStep::Rhs))?;
                    check_product(ls, rs, path)
                }
                Node::Inverse(i) => check_inverse(go(i, &path.child(PathStep::Inner))?, path),
            }
        }
        go(self, &AstPath::root())
    }

    /// Sub-expression at `path`, if the path exists.
    pub fn at_path(&self, path: &AstPath) -> Option<&RationalExpr> {
        let mut cur = self;
        for step in &path.0 {
            cur = match (cur.node(), step) {
                (Node::Sum(l, _), PathStep::Lhs) | (Node::Product(l, _), PathStep::Lhs) => l,
                (Node::Sum(_, r), PathStep::Rhs) | (Node::Product(_, r), PathStep::Rhs) => r,
                (Node::Inverse(i), PathStep::Inner) => i,
                _ => return None,
            };
        }
        Some(cur)
    }

    pub fn depth(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::ScaledVar { .. } => 0,
            Node::Sum(l, r) | Node::Product(l, r) => 1 + l.depth().max(r.depth()),
            Node::Inverse(i) => 1 + i.depth(),
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::ScaledVar { .. } => 1,
            Node::Sum(l, r) | Node::Product(l, r) => 1 + l.size() + r.size(),
            Node::Inverse(i) => 1 + i.size(),
        }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self.node() {
            Node::Const(_) => {}
            Node::ScaledVar { var, .. } => {
                out.insert(*var);
            }
            Node::Sum(l, r) | Node::Product(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Node::Inverse(i) => i.collect_vars(out),
        }
    }

    /// Smallest signature containing every variable used (possibly empty).
    pub fn required_signature(&self) -> Signature {
        let mut sig = Signature { d1: 0, d2: 0 };
        for v in self.variables() {
            match v.kind {
                VarKind::SelfAdjoint => sig.d1 = sig.d1.max(v.index + 1),
                VarKind::Unitary => sig.d2 = sig.d2.max(v.index + 1),
            }
        }
        sig
    }

    pub fn contains_inverse(&self) -> bool {
        match self.node() {
            Node::Const(_) | Node::ScaledVar { .. } => false,
            Node::Sum(l, r) | Node::Product(l, r) => l.contains_inverse() || r.contains_inverse(),
            Node::Inverse(_) => true,
        }
    }

    /// The syntactic adjoint: products reverse, coefficients are
    /// conjugate-transposed, `x_j* = x_j` and `u_j* = u_j^-1`.
    pub fn formal_adjoint(&self) -> RationalExpr {
        let shape = Shape { rows: self.cols(), cols: self.rows() };
        match self.node() {
            Node::Const(a) => Self::from_parts(Node::Const(linalg::adjoint(a.as_ref())), shape),
            Node::ScaledVar { coeff, var } => {
                let adj = linalg::adjoint(coeff.as_ref());
                match var.kind {
                    VarKind::SelfAdjoint => Self::from_parts(Node::ScaledVar { coeff: adj, var: *var }, shape),
                    VarKind::Unitary => {
                        // (A ⊗ u)* = (A* ⊗ 1)(I ⊗ u^-1)
                        let p = self.rows();
                        let inv = Self::from_parts(
                            Node::Inverse(Self::from_parts(
                                Node::ScaledVar { coeff: linalg::identity(p), var: *var },
                                Shape { rows: p, cols: p },
                            )),
                            Shape { rows: p, cols: p },
                        );
                        if p == 1 && adj[(0, 0)] == one() {
                            inv
                        } else {
                            let c = Self::from_parts(Node::Const(adj), shape);
                            Self::from_parts(Node::Product(c, inv), shape)
                        }
                    }
                }
            }
            Node::Sum(l, r) => Self::from_parts(Node::Sum(l.formal_adjoint(), r.formal_adjoint()), shape),
            Node::Product(l, r) => Self::from_parts(Node::Product(r.formal_adjoint(), l.formal_adjoint()), shape),
            Node::Inverse(i) => Self::from_parts(Node::Inverse(i.formal_adjoint()), shape),
        }
    }

    /// Flattens nested sums and products (associativity only); used for
    /// display, never for identity of expressions.
    pub fn display_flat(&self) -> String {
        fn terms<'a>(e: &'a RationalExpr, out: &mut Vec<&'a RationalExpr>) {
            match e.node() {
                Node::Sum(l, r) => {
                    terms(l, out);
                    terms(r, out);
                }
                _ => out.push(e),
            }
        }
        fn factors<'a>(e: &'a RationalExpr, out: &mut Vec<&'a RationalExpr>) {
            match e.node() {
                Node::Product(l, r) => {
                    factors(l, out);
                    factors(r, out);
                }
                _ => out.push(e),
            }
        }
        fn go(e: &RationalExpr) -> String {
            match e.node() {
                Node::Const(_) | Node::ScaledVar { .. } => crate::parser::render_atom(e),
                Node::Sum(..) => {
                    let mut ts = Vec::new();
                    terms(e, &mut ts);
                    ts.iter().map(|t| go(t)).collect::<Vec<_>>().join(" + ")
                }
                Node::Product(..) => {
                    let mut fs = Vec::new();
                    factors(e, &mut fs);
                    fs.iter()
                        .map(|f| match f.node() {
                            Node::Sum(..) => format!("({})", go(f)),
                            _ => go(f),
                        })
                        .collect::<Vec<_>>()
                        .join("*")
                }
                Node::Inverse(i) => match i.node() {
                    Node::ScaledVar { .. } => format!("{}^-1", go(i)),
                    _ => format!("({})^-1", go(i)),
                },
            }
        }
        go(self)
    }
}

fn matrix_shape(m: &CMat) -> Result<Shape, ExprError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(ExprError::ShapeMismatch {
            path: AstPath::root(),
            detail: "coefficient matrices must be non-empty".into(),
        });
    }
    Ok(Shape { rows: m.nrows(), cols: m.ncols() })
}

fn check_sum(l: Shape, r: Shape, path: &AstPath) -> Result<Shape, ExprError> {
    if l != r {
        return Err(ExprError::ShapeMismatch { path: path.clone(), detail: format!("sum of {l} and {r}") });
    }
    Ok(l)
}

fn check_product(l: Shape, r: Shape, path: &AstPath) -> Result<Shape, ExprError> {
    if l.cols != r.rows {
        return Err(ExprError::ShapeMismatch { path: path.clone(), detail: format!("product of {l} and {r}") });
    }
    Ok(Shape { rows: l.rows, cols: r.cols })
}

fn check_inverse(s: Shape, path: &AstPath) -> Result<Shape, ExprError> {
    if !s.is_square() {
        return Err(ExprError::ShapeMismatch { path: path.clone(), detail: format!("inverse of {s}") });
    }
    Ok(s)
}

fn same_matrix(a: &CMat, b: &CMat) -> bool {
    a.nrows() == b.nrows()
        && a.ncols() == b.ncols()
        && (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)] == b[(i, j)]))
}

/// Structural equality: same tree, same variables, identical coefficients.
impl PartialEq for RationalExpr {
    fn eq(&self, other: &Self) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        if self.shape() != other.shape() {
            return false;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => same_matrix(a, b),
            (Node::ScaledVar { coeff: a, var: v }, Node::ScaledVar { coeff: b, var: w }) => v == w && same_matrix(a, b),
            (Node::Sum(a, b), Node::Sum(c, d)) | (Node::Product(a, b), Node::Product(c, d)) => a == c && b == d,
            (Node::Inverse(a), Node::Inverse(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Debug for RationalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::render(self))
    }
}

impl fmt::Display for RationalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_flat())
    }
}

/// A `p×q` grid of scalar expressions.
#[derive(Clone, Debug)]
pub struct ExprMatrix {
    entries: Vec<Vec<RationalExpr>>,
}

impl ExprMatrix {
    pub fn new(entries: Vec<Vec<RationalExpr>>) -> Result<Self, ExprError> {
        let cols = entries.first().map_or(0, |r| r.len());
        if entries.is_empty() || cols == 0 {
            return Err(ExprError::ShapeMismatch { path: AstPath::root(), detail: "empty expression matrix".into() });
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != cols {
                return Err(ExprError::ShapeMismatch {
                    path: AstPath::root(),
                    detail: format!("row {i} has {} entries, expected {cols}", row.len()),
                });
            }
            if let Some((j, e)) = row.iter().enumerate().find(|(_, e)| e.shape() != (Shape { rows: 1, cols: 1 })) {
                return Err(ExprError::ShapeMismatch {
                    path: AstPath::root(),
                    detail: format!("entry ({i},{j}) is {}, expected a scalar expression", e.shape()),
                });
            }
        }
        Ok(ExprMatrix { entries })
    }

    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.entries[0].len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &RationalExpr {
        &self.entries[i][j]
    }

    pub fn lift(&self) -> RationalExpr {
        lift_matrix(self)
    }
}

fn scalar_const(e: &RationalExpr) -> Option<c64> {
    match e.node() {
        Node::Const(a) => Some(a[(0, 0)]),
        _ => None,
    }
}

/// Identifies a grid of scalar expressions with the single expression
/// `Σ (e_i ⊗ 1) r_ij (e_j^T ⊗ 1)`. Zero constant entries are dropped; a
/// grid of constants becomes one constant block.
pub fn lift_matrix(m: &ExprMatrix) -> RationalExpr {
    let (p, q) = (m.rows(), m.cols());
    if p == 1 && q == 1 {
        return m.entry(0, 0).clone();
    }
    let consts: Option<Vec<c64>> = m.entries.iter().flatten().map(scalar_const).collect();
    if let Some(vals) = consts {
        let block = Mat::from_fn(p, q, |i, j| vals[i * q + j]);
        return RationalExpr::constant(block).expect("non-empty grid");
    }
    let mut acc: Option<RationalExpr> = None;
    for i in 0..p {
        for j in 0..q {
            let r = m.entry(i, j);
            if scalar_const(r) == Some(c64::new(0.0, 0.0)) {
                continue;
            }
            let left = RationalExpr::constant(Mat::from_fn(p, 1, |a, _| if a == i { one() } else { c64::new(0.0, 0.0) }))
                .expect("basis column");
            let right = RationalExpr::constant(Mat::from_fn(1, q, |_, b| if b == j { one() } else { c64::new(0.0, 0.0) }))
                .expect("basis row");
            let term = RationalExpr::product(RationalExpr::product(left, r.clone()).expect("p×1 · 1×1"), right)
                .expect("p×1 · 1×q");
            acc = Some(match acc {
                None => term,
                Some(prev) => RationalExpr::sum(prev, term).expect("p×q + p×q"),
            });
        }
    }
    acc.expect("grid with a non-constant entry has at least one term")
}

/// Outcome of the randomized self-adjointness test. `No` is certain;
/// `Yes` only means no counterexample was found.
#[derive(Clone, Debug)]
pub enum SelfAdjointVerdict {
    Yes { successful_trials: usize },
    No { witness: MatrixTuple, relative_defect: f64 },
}

impl SelfAdjointVerdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, SelfAdjointVerdict::Yes { .. })
    }
}

/// Evaluates `expr` at `trials` independent GUE/Haar points of size `n` and
/// checks `‖R* − R‖ ≤ tol·‖R‖` wherever evaluation succeeds.
pub fn is_selfadjoint_probabilistic(
    expr: &RationalExpr,
    signature: Signature,
    n: usize,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<SelfAdjointVerdict, ExprError> {
    if !expr.is_square() {
        return Err(ExprError::NotSquare(expr.shape()));
    }
    signature.validate(expr)?;
    let mut ok = 0;
    for trial in 0..trials {
        let point = randmat::standard_tuple(signature, n, seed, trial as u64);
        let Ok(value) = eval::eval_expr(expr, &point, DEFAULT_INV_TOL) else {
            continue;
        };
        let defect = linalg::hermitian_defect(value.as_ref());
        let scale = linalg::frobenius(value.as_ref());
        if defect > tol * scale {
            let relative_defect = if scale > 0.0 { defect / scale } else { f64::INFINITY };
            return Ok(SelfAdjointVerdict::No { witness: point, relative_defect });
        }
        ok += 1;
    }
    if ok == 0 {
        return Err(ExprError::NoSampleInDomain);
    }
    Ok(SelfAdjointVerdict::Yes { successful_trials: ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real_rows;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn shapes_follow_size_algebra() {
        let a = RationalExpr::constant(Mat::from_fn(2, 3, |_, _| c(1.0))).unwrap();
        assert_eq!(a.shape(), Shape { rows: 2, cols: 3 });
        let b = RationalExpr::scaled_var(Mat::from_fn(3, 1, |_, _| c(1.0)), Var::selfadjoint(0)).unwrap();
        let p = RationalExpr::product(a, b).unwrap();
        assert_eq!(p.shape(), Shape { rows: 2, cols: 1 });
        assert_eq!(p.recompute_shape().unwrap(), p.shape());
    }

    #[test]
    fn mismatched_sum_is_rejected() {
        let a = RationalExpr::constant(linalg::identity(2)).unwrap();
        let b = RationalExpr::constant(linalg::identity(3)).unwrap();
        assert!(matches!(RationalExpr::sum(a, b), Err(ExprError::ShapeMismatch { .. })));
        let r = RationalExpr::constant(Mat::from_fn(2, 3, |_, _| c(1.0))).unwrap();
        assert!(matches!(RationalExpr::inverse(r), Err(ExprError::ShapeMismatch { .. })));
    }

    #[test]
    fn adjoint_of_sum_with_inverse_is_itself() {
        let e = RationalExpr::sum(RationalExpr::x(0), RationalExpr::inverse(RationalExpr::x(1)).unwrap()).unwrap();
        assert_eq!(e.formal_adjoint(), e);
    }

    #[test]
    fn adjoint_of_unitary_is_its_inverse() {
        let u = RationalExpr::u(0);
        assert_eq!(u.formal_adjoint(), RationalExpr::inverse(u.clone()).unwrap());
        let xu = RationalExpr::product(RationalExpr::x(0), u.clone()).unwrap();
        let expected = RationalExpr::product(RationalExpr::inverse(u).unwrap(), RationalExpr::x(0)).unwrap();
        assert_eq!(xu.formal_adjoint(), expected);
    }

    #[test]
    fn adjoint_conjugates_coefficients() {
        let a = Mat::from_fn(1, 2, |_, j| c64::new(j as f64, 1.0));
        let e = RationalExpr::scaled_var(a, Var::selfadjoint(0)).unwrap();
        let adj = e.formal_adjoint();
        assert_eq!(adj.shape(), Shape { rows: 2, cols: 1 });
        match adj.node() {
            Node::ScaledVar { coeff, .. } => assert_eq!(coeff[(1, 0)], c64::new(1.0, -1.0)),
            _ => panic!("expected a scaled variable"),
        }
    }

    #[test]
    fn signature_rejects_out_of_range() {
        let sig = Signature::new(0, 2).unwrap();
        assert!(sig.validate(&RationalExpr::u(1)).is_ok());
        assert!(matches!(sig.validate(&RationalExpr::u(2)), Err(ExprError::UnknownVariable { .. })));
        assert!(matches!(sig.validate(&RationalExpr::x(0)), Err(ExprError::UnknownVariable { .. })));
        assert_eq!(Signature::new(0, 0), Err(ExprError::EmptySignature));
    }

    #[test]
    fn neg_folds_into_leading_coefficient() {
        let p = RationalExpr::product(RationalExpr::x(1), RationalExpr::x(0)).unwrap();
        match p.neg().node() {
            Node::Product(l, _) => match l.node() {
                Node::ScaledVar { coeff, .. } => assert_eq!(coeff[(0, 0)], c(-1.0)),
                _ => panic!("expected scaled variable"),
            },
            _ => panic!("expected product"),
        }
    }

    #[test]
    fn lifting_constants_gives_a_block() {
        let m = ExprMatrix::new(vec![
            vec![RationalExpr::scalar(c(1.0)), RationalExpr::scalar(c(2.0))],
            vec![RationalExpr::scalar(c(3.0)), RationalExpr::scalar(c(4.0))],
        ])
        .unwrap();
        let lifted = lift_matrix(&m);
        let expected = RationalExpr::constant(from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(lifted, expected);
    }

    #[test]
    fn lifting_a_singleton_is_the_entry() {
        let m = ExprMatrix::new(vec![vec![RationalExpr::x(0)]]).unwrap();
        assert_eq!(lift_matrix(&m), RationalExpr::x(0));
    }

    #[test]
    fn ragged_grid_is_rejected() {
        let r = ExprMatrix::new(vec![vec![RationalExpr::x(0), RationalExpr::x(0)], vec![RationalExpr::x(0)]]);
        assert!(r.is_err());
    }

    #[test]
    fn hermitian_constant_is_selfadjoint() {
        let h = RationalExpr::constant(Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => c64::new(1.0, 2.0),
            (1, 0) => c64::new(1.0, -2.0),
            _ => c(3.0),
        }))
        .unwrap();
        let sig = Signature::new(1, 0).unwrap();
        for trials in [1, 5] {
            assert!(is_selfadjoint_probabilistic(&h, sig, 3, trials, 1e-10, 1).unwrap().is_yes());
        }
    }

    #[test]
    fn conjugated_inverse_is_selfadjoint_and_mixed_unitaries_are_not() {
        let sig = Signature::new(1, 2).unwrap();
        let u = RationalExpr::u(0);
        let e = RationalExpr::product(
            RationalExpr::product(RationalExpr::inverse(u.clone()).unwrap(), RationalExpr::inverse(RationalExpr::x(0)).unwrap())
                .unwrap(),
            u,
        )
        .unwrap();
        assert!(is_selfadjoint_probabilistic(&e, sig, 4, 20, 1e-8, 3).unwrap().is_yes());
        let bad = RationalExpr::sum(RationalExpr::u(0), RationalExpr::inverse(RationalExpr::u(1)).unwrap()).unwrap();
        assert!(!is_selfadjoint_probabilistic(&bad, sig, 4, 20, 1e-8, 3).unwrap().is_yes());
    }

    #[test]
    fn nowhere_defined_expression_reports_no_sample() {
        let sig = Signature::new(1, 0).unwrap();
        let zero = RationalExpr::sum(RationalExpr::x(0), RationalExpr::x(0).neg()).unwrap();
        let e = RationalExpr::inverse(zero).unwrap();
        assert_eq!(is_selfadjoint_probabilistic(&e, sig, 3, 4, 1e-8, 0).unwrap_err(), ExprError::NoSampleInDomain);
    }
}
