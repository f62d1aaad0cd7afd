//! Linear representations `R = u·A⁻¹·v` and self-adjoint ones `R = w*·Q⁻¹·w`.
//!
//! `linearize` builds a representation recursively: leaves get the bordered
//! `(p+q)`-dimensional pencil, sums are block-diagonal, products couple the
//! two blocks through `-v₁u₂`, and inverses border the pencil with `u`, `v`.

use faer::c64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Node, RationalExpr, Shape, Signature, VarKind};
use crate::json::{self, JsonMatrix};
use crate::linalg::{self, CMat};

/// Relative singular-value threshold for the rank conditions of properness.
pub const PROPER_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizeError {
    #[error("expected a square expression, got {0}")]
    NotSquare(Shape),
    #[error("malformed pencil: {0}")]
    Malformed(String),
}

/// `A0 ⊗ 1 + Σ A_j ⊗ x_j + Σ B_j ⊗ u_j`, plus `B_j* ⊗ u_j*` when paired.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePencil {
    k: usize,
    a0: CMat,
    selfadj: Vec<CMat>,
    unitary: Vec<CMat>,
    paired: bool,
}

impl AffinePencil {
    pub fn new(a0: CMat, selfadj: Vec<CMat>, unitary: Vec<CMat>, paired: bool) -> Result<Self, LinearizeError> {
        let k = a0.nrows();
        if a0.ncols() != k {
            return Err(LinearizeError::Malformed(format!("A0 is {}x{}", a0.nrows(), a0.ncols())));
        }
        for (name, m) in selfadj.iter().map(|m| ("A", m)).chain(unitary.iter().map(|m| ("B", m))) {
            if m.nrows() != k || m.ncols() != k {
                return Err(LinearizeError::Malformed(format!(
                    "coefficient {name} is {}x{}, expected {k}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(AffinePencil { k, a0, selfadj, unitary, paired })
    }

    pub fn constant(a0: CMat) -> Self {
        Self::new(a0, Vec::new(), Vec::new(), false).expect("square constant pencil")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a0(&self) -> &CMat {
        &self.a0
    }

    pub fn selfadj_coeffs(&self) -> &[CMat] {
        &self.selfadj
    }

    pub fn unitary_coeffs(&self) -> &[CMat] {
        &self.unitary
    }

    pub fn is_paired(&self) -> bool {
        self.paired
    }

    pub fn signature(&self) -> Signature {
        Signature { d1: self.selfadj.len(), d2: self.unitary.len() }
    }

    pub fn with_a0(&self, a0: CMat) -> Self {
        Self::new(a0, self.selfadj.clone(), self.unitary.clone(), self.paired).expect("same dimension")
    }

    /// Exact Hermitian structure: `A0` and every `A_j` equal their adjoints
    /// and unitary coefficients come in adjoint pairs.
    pub fn is_structurally_hermitian(&self) -> bool {
        let herm = |m: &CMat| linalg::hermitian_defect(m.as_ref()) == 0.0;
        herm(&self.a0) && self.selfadj.iter().all(herm) && (self.paired || self.unitary.iter().all(|b| linalg::is_zero(b.as_ref())))
    }

    /// Entry `(i, j)` as text, e.g. `1 - x1` or `u1*`.
    pub fn entry_text(&self, i: usize, j: usize) -> String {
        let mut terms: Vec<(c64, String)> = Vec::new();
        terms.push((self.a0[(i, j)], String::new()));
        for (idx, a) in self.selfadj.iter().enumerate() {
            terms.push((a[(i, j)], format!("x{}", idx + 1)));
        }
        for (idx, b) in self.unitary.iter().enumerate() {
            terms.push((b[(i, j)], format!("u{}", idx + 1)));
            if self.paired {
                terms.push((b[(j, i)].conj(), format!("u{}*", idx + 1)));
            }
        }
        let mut out = String::new();
        for (c, sym) in terms.into_iter().filter(|(c, _)| *c != c64::new(0.0, 0.0)) {
            let (neg, mag) = if c.im == 0.0 && c.re < 0.0 { (true, c64::new(-c.re, 0.0)) } else { (false, c) };
            let coeff = crate::parser::fmt_complex(mag);
            let coeff = if mag.im != 0.0 && mag.re != 0.0 { format!("({coeff})") } else { coeff };
            let body = match (sym.is_empty(), coeff == "1") {
                (true, _) => coeff,
                (false, true) => sym,
                (false, false) => format!("{coeff}{sym}"),
            };
            if out.is_empty() {
                out = if neg { format!("-{body}") } else { body };
            } else {
                out.push_str(if neg { " - " } else { " + " });
                out.push_str(&body);
            }
        }
        if out.is_empty() {
            "0".into()
        } else {
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormalLinRep {
    u: CMat,
    pencil: AffinePencil,
    v: CMat,
    proper: bool,
}

impl FormalLinRep {
    pub fn new(u: CMat, pencil: AffinePencil, v: CMat) -> Result<Self, LinearizeError> {
        let k = pencil.k();
        if u.ncols() != k || v.nrows() != k {
            return Err(LinearizeError::Malformed(format!(
                "u is {}x{} and v is {}x{} for k={k}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        let proper = proper_general(&u, k, &v);
        Ok(FormalLinRep { u, pencil, v, proper })
    }

    pub fn u(&self) -> &CMat {
        &self.u
    }

    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn pencil(&self) -> &AffinePencil {
        &self.pencil
    }

    pub fn k(&self) -> usize {
        self.pencil.k()
    }

    pub fn p(&self) -> usize {
        self.u.nrows()
    }

    pub fn q(&self) -> usize {
        self.v.ncols()
    }

    pub fn proper(&self) -> bool {
        self.proper
    }

    pub fn with_pencil(&self, pencil: AffinePencil) -> Self {
        Self::new(self.u.clone(), pencil, self.v.clone()).expect("same dimension")
    }

    pub fn to_json(&self) -> RepJson {
        RepJson {
            u: Some(json::to_json_matrix(self.u.as_ref())),
            v: Some(json::to_json_matrix(self.v.as_ref())),
            ..RepJson::from_pencil(&self.pencil)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaLinRep {
    pencil: AffinePencil,
    w: CMat,
    proper: bool,
}

impl SaLinRep {
    pub fn new(pencil: AffinePencil, w: CMat) -> Result<Self, LinearizeError> {
        if w.nrows() != pencil.k() {
            return Err(LinearizeError::Malformed(format!("w has {} rows for k={}", w.nrows(), pencil.k())));
        }
        if !pencil.is_structurally_hermitian() {
            return Err(LinearizeError::Malformed("pencil is not Hermitian".into()));
        }
        let proper = w.nrows() >= w.ncols() && full_rank(&w, w.ncols());
        Ok(SaLinRep { pencil, w, proper })
    }

    pub fn pencil(&self) -> &AffinePencil {
        &self.pencil
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn k(&self) -> usize {
        self.pencil.k()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    pub fn proper(&self) -> bool {
        self.proper
    }

    pub fn to_json(&self) -> RepJson {
        RepJson { w: Some(json::to_json_matrix(self.w.as_ref())), ..RepJson::from_pencil(&self.pencil) }
    }
}

/// Wire format of a representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepJson {
    pub k: usize,
    #[serde(rename = "A0")]
    pub a0: JsonMatrix,
    #[serde(rename = "Aj")]
    pub aj: Vec<JsonMatrix>,
    #[serde(rename = "Bj")]
    pub bj: Vec<JsonMatrix>,
    /// Whether each `B_j ⊗ u_j` comes with `B_j* ⊗ u_j*`.
    pub paired: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub u: Option<JsonMatrix>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub v: Option<JsonMatrix>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w: Option<JsonMatrix>,
}

impl RepJson {
    pub fn from_pencil(p: &AffinePencil) -> Self {
        RepJson {
            k: p.k(),
            a0: json::to_json_matrix(p.a0().as_ref()),
            aj: p.selfadj_coeffs().iter().map(|m| json::to_json_matrix(m.as_ref())).collect(),
            bj: p.unitary_coeffs().iter().map(|m| json::to_json_matrix(m.as_ref())).collect(),
            paired: p.is_paired(),
            u: None,
            v: None,
            w: None,
        }
    }

    pub fn pencil(&self) -> Result<AffinePencil, LinearizeError> {
        let all = std::iter::once(&self.a0).chain(&self.aj).chain(&self.bj);
        if all.clone().any(|m| !json::is_rectangular(m) || m.len() != self.k) {
            return Err(LinearizeError::Malformed(format!("coefficients must be {0}x{0}", self.k)));
        }
        AffinePencil::new(
            json::from_json_matrix(&self.a0),
            self.aj.iter().map(json::from_json_matrix).collect(),
            self.bj.iter().map(json::from_json_matrix).collect(),
            self.paired,
        )
    }

    pub fn general(&self) -> Result<FormalLinRep, LinearizeError> {
        match (&self.u, &self.v) {
            (Some(u), Some(v)) => {
                FormalLinRep::new(json::from_json_matrix(u), self.pencil()?, json::from_json_matrix(v))
            }
            _ => Err(LinearizeError::Malformed("a general representation needs u and v".into())),
        }
    }

    pub fn selfadjoint(&self) -> Result<SaLinRep, LinearizeError> {
        match &self.w {
            Some(w) => SaLinRep::new(self.pencil()?, json::from_json_matrix(w)),
            None => Err(LinearizeError::Malformed("a self-adjoint representation needs w".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearizeOptions {
    /// Represent `(A ⊗ x_j)⁻¹` and `(A ⊗ 1)⁻¹` for square `A` directly by
    /// `(I, A ⊗ x_j, I)` of dimension `p` instead of bordering the
    /// `2p`-dimensional leaf representation.
    pub atom_inverse_shortcut: bool,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        LinearizeOptions { atom_inverse_shortcut: true }
    }
}

/// Working form with one coefficient slot per variable of the signature.
struct Lin {
    u: CMat,
    a0: CMat,
    selfadj: Vec<CMat>,
    unitary: Vec<CMat>,
    v: CMat,
}

impl Lin {
    fn k(&self) -> usize {
        self.a0.nrows()
    }

    fn coeffs_mut(&mut self, kind: VarKind) -> &mut Vec<CMat> {
        match kind {
            VarKind::SelfAdjoint => &mut self.selfadj,
            VarKind::Unitary => &mut self.unitary,
        }
    }
}

fn empty_coeffs(sig: Signature, k: usize) -> (Vec<CMat>, Vec<CMat>) {
    (vec![linalg::zeros(k, k); sig.d1], vec![linalg::zeros(k, k); sig.d2])
}

fn leaf(coeff: &CMat, var: Option<crate::expr::Var>, sig: Signature) -> Lin {
    let (p, q) = (coeff.nrows(), coeff.ncols());
    let k = p + q;
    let neg = -coeff;
    let (mut selfadj, mut unitary) = empty_coeffs(sig, k);
    let id_p = linalg::identity(p);
    let id_q = linalg::identity(q);
    let a0 = match var {
        None => linalg::block(&[p, q], &[p, q], &[&[Some(id_p.as_ref()), Some(neg.as_ref())], &[None, Some(id_q.as_ref())]]),
        Some(var) => {
            let c = linalg::block(&[p, q], &[p, q], &[&[None, Some(neg.as_ref())], &[None, None]]);
            match var.kind {
                VarKind::SelfAdjoint => selfadj[var.index] = c,
                VarKind::Unitary => unitary[var.index] = c,
            }
            linalg::block(&[p, q], &[p, q], &[&[Some(id_p.as_ref()), None], &[None, Some(id_q.as_ref())]])
        }
    };
    let u = linalg::block(&[p], &[p, q], &[&[Some(id_p.as_ref()), None]]);
    let v = linalg::block(&[p, q], &[q], &[&[None], &[Some(id_q.as_ref())]]);
    Lin { u, a0, selfadj, unitary, v }
}

fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (k1, k2) = (a.nrows(), b.nrows());
    linalg::block(&[k1, k2], &[k1, k2], &[&[Some(a.as_ref()), None], &[None, Some(b.as_ref())]])
}

fn sum(l: Lin, r: Lin) -> Lin {
    let (k1, k2) = (l.k(), r.k());
    let p = l.u.nrows();
    let q = l.v.ncols();
    Lin {
        u: linalg::block(&[p], &[k1, k2], &[&[Some(l.u.as_ref()), Some(r.u.as_ref())]]),
        a0: block_diag(&l.a0, &r.a0),
        selfadj: l.selfadj.iter().zip(&r.selfadj).map(|(a, b)| block_diag(a, b)).collect(),
        unitary: l.unitary.iter().zip(&r.unitary).map(|(a, b)| block_diag(a, b)).collect(),
        v: linalg::block(&[k1, k2], &[q], &[&[Some(l.v.as_ref())], &[Some(r.v.as_ref())]]),
    }
}

fn product(l: Lin, r: Lin) -> Lin {
    let (k1, k2) = (l.k(), r.k());
    let p = l.u.nrows();
    let q = r.v.ncols();
    let coupling = -(&l.v * &r.u);
    Lin {
        u: linalg::block(&[p], &[k1, k2], &[&[Some(l.u.as_ref()), None]]),
        a0: linalg::block(
            &[k1, k2],
            &[k1, k2],
            &[&[Some(l.a0.as_ref()), Some(coupling.as_ref())], &[None, Some(r.a0.as_ref())]],
        ),
        selfadj: l.selfadj.iter().zip(&r.selfadj).map(|(a, b)| block_diag(a, b)).collect(),
        unitary: l.unitary.iter().zip(&r.unitary).map(|(a, b)| block_diag(a, b)).collect(),
        v: linalg::block(&[k1, k2], &[q], &[&[None], &[Some(r.v.as_ref())]]),
    }
}

fn inverse(inner: Lin) -> Lin {
    let k = inner.k();
    let p = inner.u.nrows();
    let id_p = linalg::identity(p);
    let minus_id = -&id_p;
    let border = |a: &CMat| linalg::block(&[p, k], &[p, k], &[&[None, None], &[None, Some(a.as_ref())]]);
    Lin {
        u: linalg::block(&[p], &[p, k], &[&[Some(id_p.as_ref()), None]]),
        a0: linalg::block(
            &[p, k],
            &[p, k],
            &[&[None, Some(inner.u.as_ref())], &[Some(inner.v.as_ref()), Some(inner.a0.as_ref())]],
        ),
        selfadj: inner.selfadj.iter().map(border).collect(),
        unitary: inner.unitary.iter().map(border).collect(),
        v: linalg::block(&[p, k], &[p], &[&[Some(minus_id.as_ref())], &[None]]),
    }
}

fn atom_inverse(expr: &RationalExpr, sig: Signature) -> Option<Lin> {
    let (coeff, var) = match expr.node() {
        Node::Const(a) => (a, None),
        Node::ScaledVar { coeff, var } => (coeff, Some(*var)),
        _ => return None,
    };
    let p = coeff.nrows();
    if coeff.ncols() != p {
        return None;
    }
    let (selfadj, unitary) = empty_coeffs(sig, p);
    let mut lin = Lin { u: linalg::identity(p), a0: linalg::zeros(p, p), selfadj, unitary, v: linalg::identity(p) };
    match var {
        None => lin.a0 = coeff.clone(),
        Some(var) => lin.coeffs_mut(var.kind)[var.index] = coeff.clone(),
    }
    Some(lin)
}

fn build(expr: &RationalExpr, sig: Signature, opts: LinearizeOptions) -> Lin {
    match expr.node() {
        Node::Const(a) => leaf(a, None, sig),
        Node::ScaledVar { coeff, var } => leaf(coeff, Some(*var), sig),
        Node::Sum(l, r) => sum(build(l, sig, opts), build(r, sig, opts)),
        Node::Product(l, r) => product(build(l, sig, opts), build(r, sig, opts)),
        Node::Inverse(i) => {
            if opts.atom_inverse_shortcut {
                if let Some(lin) = atom_inverse(i, sig) {
                    return lin;
                }
            }
            inverse(build(i, sig, opts))
        }
    }
}

/// Proper formal linear representation of `expr`. The pencil carries one
/// coefficient per variable of `signature` (widened to cover every
/// variable of `expr`).
pub fn linearize(expr: &RationalExpr, signature: Signature) -> FormalLinRep {
    linearize_with(expr, signature, LinearizeOptions::default())
}

pub fn linearize_with(expr: &RationalExpr, signature: Signature, opts: LinearizeOptions) -> FormalLinRep {
    let sig = signature.join(expr.required_signature());
    let lin = build(expr, sig, opts);
    let pencil = AffinePencil::new(lin.a0, lin.selfadj, lin.unitary, false).expect("construction keeps k×k blocks");
    FormalLinRep::new(lin.u, pencil, lin.v).expect("construction keeps dimensions consistent")
}

/// Doubles `(u, A, v)` to `Q = [[0, A*], [A, 0]]`, `w = (½u*; v)`, then
/// merges each `x_j*` coefficient into `x_j` so that `A0` and all `A_j`
/// are Hermitian; unitary coefficients stay paired with their adjoints.
///
/// `w*·Q⁻¹·w` evaluates to `(R + R*)/2`, so it reproduces `R` exactly on
/// self-adjoint expressions.
pub fn make_selfadjoint_rep(rep: &FormalLinRep) -> Result<SaLinRep, LinearizeError> {
    if rep.p() != rep.q() {
        return Err(LinearizeError::NotSquare(Shape { rows: rep.p(), cols: rep.q() }));
    }
    let k = rep.k();
    let pencil = rep.pencil();
    let lower = |b: &CMat| linalg::block(&[k, k], &[k, k], &[&[None, None], &[Some(b.as_ref()), None]]);
    let hermitian_pair = |b: &CMat| {
        let bt = b.adjoint().to_owned();
        linalg::block(&[k, k], &[k, k], &[&[None, Some(bt.as_ref())], &[Some(b.as_ref()), None]])
    };
    let a0 = hermitian_pair(pencil.a0());
    let selfadj = pencil.selfadj_coeffs().iter().map(hermitian_pair).collect();
    let unitary = pencil.unitary_coeffs().iter().map(lower).collect();
    let half_u_star = faer::Mat::from_fn(k, rep.p(), |i, j| rep.u()[(j, i)].conj() * 0.5);
    let w = linalg::block(&[k, k], &[rep.p()], &[&[Some(half_u_star.as_ref())], &[Some(rep.v().as_ref())]]);
    let pencil = AffinePencil::new(a0, selfadj, unitary, true)?;
    SaLinRep::new(pencil, w)
}

/// Bordered pencil `[[0_p, u], [v, A]]` of dimension `k + p`.
pub fn schur_pencil(rep: &FormalLinRep) -> Result<AffinePencil, LinearizeError> {
    let (p, k) = (rep.p(), rep.k());
    if p != rep.q() {
        return Err(LinearizeError::NotSquare(Shape { rows: p, cols: rep.q() }));
    }
    let pencil = rep.pencil();
    let border = |a: &CMat| linalg::block(&[p, k], &[p, k], &[&[None, None], &[None, Some(a.as_ref())]]);
    let a0 = linalg::block(
        &[p, k],
        &[p, k],
        &[&[None, Some(rep.u().as_ref())], &[Some(rep.v().as_ref()), Some(pencil.a0().as_ref())]],
    );
    AffinePencil::new(
        a0,
        pencil.selfadj_coeffs().iter().map(border).collect(),
        pencil.unitary_coeffs().iter().map(border).collect(),
        pencil.is_paired(),
    )
}

fn full_rank(m: &CMat, r: usize) -> bool {
    linalg::numerical_rank(m.as_ref(), PROPER_RANK_TOL) == r
}

fn proper_general(u: &CMat, k: usize, v: &CMat) -> bool {
    let (p, q) = (u.nrows(), v.ncols());
    k >= p.max(q) && full_rank(u, p) && full_rank(v, q)
}

pub fn is_proper(rep: &FormalLinRep) -> bool {
    proper_general(rep.u(), rep.k(), rep.v())
}

pub fn is_proper_sa(rep: &SaLinRep) -> bool {
    rep.k() >= rep.p() && full_rank(rep.w(), rep.p())
}
