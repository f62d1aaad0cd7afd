//! Text syntax for rational expressions.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary ("*" unary)*
//! unary   := "-" unary | postfix
//! postfix := primary ("^-1")*
//! primary := number | "i" | var | "inv" "(" expr ")"
//!          | "kron" "(" matrix "," var ")" | "(" expr ")" | matrix
//! matrix  := "[" row ("," row)* "]"
//! row     := "[" entry ("," entry)* "]"
//! entry   := complex | expr
//! complex := ["-"] real [("+" | "-") imag] | ["-"] imag
//! var     := "x" digits | "u" digits
//! ```
//!
//! Matrix literals whose entries are all complex literals are constant
//! coefficients; otherwise the entries must be scalar expressions and the
//! literal is lifted to a single matrix-valued expression.

use faer::{c64, Mat};
use thiserror::Error;

use crate::expr::{lift_matrix, ExprError, ExprMatrix, Node, RationalExpr, Signature, Var, VarKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("shape mismatch at byte {pos}: {detail}")]
    ShapeMismatch { pos: usize, detail: String },
    #[error("unknown variable {var} at byte {pos} for signature ({signature})")]
    UnknownVariable { pos: usize, var: Var, signature: Signature },
    #[error("bad expression file header: {0}")]
    Header(String),
}

/// Expression text together with the variables it may use.
#[derive(Clone, Debug)]
pub struct ExprSource {
    pub text: String,
    pub signature: Signature,
}

impl ExprSource {
    pub fn new(text: impl Into<String>, signature: Signature) -> Self {
        ExprSource { text: text.into(), signature }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num { value: f64, imag: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn syntax(pos: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBrack),
            b']' => Some(Tok::RBrack),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, pos: start });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let value: f64 = text[start..i].parse().map_err(|_| syntax(start, format!("bad number '{}'", &text[start..i])))?;
            let mut imag = false;
            if i < bytes.len() && bytes[i] == b'i' && !bytes.get(i + 1).is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_') {
                imag = true;
                i += 1;
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                return Err(syntax(i, "expected an operator after a number (use '*' for products)"));
            }
            out.push(Token { tok: Tok::Num { value, imag }, pos: start });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(text[start..i].to_string()), pos: start });
            continue;
        }
        let ch = text[start..].chars().next().unwrap_or('?');
        return Err(syntax(start, format!("unexpected character '{ch}'")));
    }
    out.push(Token { tok: Tok::Eof, pos: text.len() });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    at: usize,
    signature: &'a Signature,
}

enum Entry {
    Literal(c64),
    Expr(RationalExpr),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.at + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {what}")))
        }
    }

    fn shape_err(pos: usize, e: ExprError) -> ParseError {
        match e {
            ExprError::ShapeMismatch { detail, .. } => ParseError::ShapeMismatch { pos, detail },
            ExprError::UnknownVariable { var, signature } => ParseError::UnknownVariable { pos, var, signature },
            other => ParseError::ShapeMismatch { pos, detail: other.to_string() },
        }
    }

    fn expr(&mut self) -> Result<RationalExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let pos = self.pos();
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = RationalExpr::sum(lhs, rhs).map_err(|e| Self::shape_err(pos, e))?;
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = RationalExpr::sum(lhs, rhs.neg()).map_err(|e| Self::shape_err(pos, e))?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<RationalExpr, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::Star {
            let pos = self.pos();
            self.bump();
            let rhs = self.unary()?;
            lhs = RationalExpr::product(lhs, rhs).map_err(|e| Self::shape_err(pos, e))?;
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RationalExpr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<RationalExpr, ParseError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::Caret {
            let pos = self.pos();
            self.bump();
            let ok = *self.peek() == Tok::Minus && *self.peek_at(1) == (Tok::Num { value: 1.0, imag: false });
            if !ok {
                return Err(syntax(pos, "only the exponent ^-1 is supported"));
            }
            self.bump();
            self.bump();
            e = RationalExpr::inverse(e).map_err(|err| Self::shape_err(pos, err))?;
        }
        Ok(e)
    }

    fn variable(&mut self) -> Result<Var, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(name) => self.resolve_var(&name, pos)?.ok_or_else(|| syntax(pos, format!("expected a variable, found '{name}'"))),
            _ => Err(syntax(pos, "expected a variable")),
        }
    }

    fn resolve_var(&self, name: &str, pos: usize) -> Result<Option<Var>, ParseError> {
        let (kind, digits) = match name.split_at(1) {
            ("x", d) => (VarKind::SelfAdjoint, d),
            ("u", d) => (VarKind::Unitary, d),
            _ => return Ok(None),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Ok(None);
        }
        let k: usize = digits.parse().map_err(|_| syntax(pos, "variable index out of range"))?;
        if k == 0 {
            return Err(syntax(pos, "variable indices start at 1"));
        }
        let var = Var { kind, index: k - 1 };
        if !self.signature.contains(var) {
            return Err(ParseError::UnknownVariable { pos, var, signature: *self.signature });
        }
        Ok(Some(var))
    }

    fn primary(&mut self) -> Result<RationalExpr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num { value, imag } => {
                self.bump();
                let z = if imag { c64::new(0.0, value) } else { c64::new(value, 0.0) };
                Ok(RationalExpr::scalar(z))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::LBrack => {
                let rows = self.matrix()?;
                build_matrix(rows, pos)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "i" => Ok(RationalExpr::scalar(c64::new(0.0, 1.0))),
                    "inv" => {
                        self.expect(Tok::LParen, "'(' after inv")?;
                        let e = self.expr()?;
                        self.expect(Tok::RParen, "')'")?;
                        RationalExpr::inverse(e).map_err(|err| Self::shape_err(pos, err))
                    }
                    "kron" => {
                        self.expect(Tok::LParen, "'(' after kron")?;
                        let mpos = self.pos();
                        if *self.peek() != Tok::LBrack {
                            return Err(syntax(mpos, "kron expects a constant matrix literal"));
                        }
                        let rows = self.matrix()?;
                        let coeff = constant_matrix(&rows).ok_or_else(|| syntax(mpos, "kron coefficient must be constant"))?;
                        self.expect(Tok::Comma, "',' in kron")?;
                        let var = self.variable()?;
                        self.expect(Tok::RParen, "')'")?;
                        RationalExpr::scaled_var(coeff, var).map_err(|err| Self::shape_err(pos, err))
                    }
                    _ => match self.resolve_var(&name, pos)? {
                        Some(var) => Ok(RationalExpr::var(var)),
                        None => Err(syntax(pos, format!("unknown identifier '{name}'"))),
                    },
                }
            }
            Tok::Eof => Err(syntax(pos, "unexpected end of input")),
            other => Err(syntax(pos, format!("unexpected token {other:?}"))),
        }
    }

    fn matrix(&mut self) -> Result<Vec<Vec<(usize, Entry)>>, ParseError> {
        self.expect(Tok::LBrack, "'['")?;
        let mut rows = Vec::new();
        loop {
            self.expect(Tok::LBrack, "'[' starting a matrix row")?;
            let mut row = Vec::new();
            loop {
                let pos = self.pos();
                row.push((pos, self.entry()?));
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RBrack => {
                        self.bump();
                        break;
                    }
                    _ => return Err(syntax(self.pos(), "expected ',' or ']' in matrix row")),
                }
            }
            rows.push(row);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBrack => {
                    self.bump();
                    break;
                }
                _ => return Err(syntax(self.pos(), "expected ',' or ']' after matrix row")),
            }
        }
        Ok(rows)
    }

    fn entry(&mut self) -> Result<Entry, ParseError> {
        let save = self.at;
        if let Some(z) = self.complex_literal() {
            if matches!(self.peek(), Tok::Comma | Tok::RBrack) {
                return Ok(Entry::Literal(z));
            }
        }
        self.at = save;
        Ok(Entry::Expr(self.expr()?))
    }

    fn signed_part(&mut self) -> Option<(f64, bool)> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let (v, imag) = match self.peek().clone() {
            Tok::Num { value, imag } => (value, imag),
            Tok::Ident(ref s) if s == "i" => (1.0, true),
            _ => return None,
        };
        self.bump();
        Some((if neg { -v } else { v }, imag))
    }

    fn complex_literal(&mut self) -> Option<c64> {
        let (first, first_imag) = self.signed_part()?;
        if first_imag {
            return Some(c64::new(0.0, first));
        }
        let sign = match self.peek() {
            Tok::Plus => 1.0,
            Tok::Minus => -1.0,
            _ => return Some(c64::new(first, 0.0)),
        };
        let save = self.at;
        self.bump();
        let im = match self.peek().clone() {
            Tok::Num { value, imag: true } => value,
            Tok::Ident(ref s) if s == "i" => 1.0,
            _ => {
                self.at = save;
                return Some(c64::new(first, 0.0));
            }
        };
        self.bump();
        Some(c64::new(first, sign * im))
    }
}

fn constant_matrix(rows: &[Vec<(usize, Entry)>]) -> Option<faer::Mat<c64>> {
    let r = rows.len();
    let c = rows.first()?.len();
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    let mut vals = Vec::with_capacity(r * c);
    for row in rows {
        for (_, e) in row {
            match e {
                Entry::Literal(z) => vals.push(*z),
                Entry::Expr(_) => return None,
            }
        }
    }
    Some(Mat::from_fn(r, c, |i, j| vals[i * c + j]))
}

fn build_matrix(rows: Vec<Vec<(usize, Entry)>>, pos: usize) -> Result<RationalExpr, ParseError> {
    let cols = rows[0].len();
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(ParseError::ShapeMismatch { pos, detail: format!("matrix row {i} has a different length") });
    }
    if let Some(m) = constant_matrix(&rows) {
        return RationalExpr::constant(m).map_err(|e| Parser::shape_err(pos, e));
    }
    let grid: Vec<Vec<RationalExpr>> = rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(_, e)| match e {
                    Entry::Literal(z) => RationalExpr::scalar(z),
                    Entry::Expr(e) => e,
                })
                .collect()
        })
        .collect();
    let m = ExprMatrix::new(grid).map_err(|e| Parser::shape_err(pos, e))?;
    Ok(lift_matrix(&m))
}

pub fn parse(src: &ExprSource) -> Result<RationalExpr, ParseError> {
    parse_expr(&src.text, src.signature)
}

pub fn parse_expr(text: &str, signature: Signature) -> Result<RationalExpr, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0, signature: &signature };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    Ok(e)
}

/// Parses a matrix literal of scalar expressions, keeping the grid.
pub fn parse_expr_matrix(text: &str, signature: Signature) -> Result<ExprMatrix, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0, signature: &signature };
    let pos = p.pos();
    if *p.peek() != Tok::LBrack {
        return Err(syntax(pos, "expected a matrix literal"));
    }
    let rows = p.matrix()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    let grid: Vec<Vec<RationalExpr>> = rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(_, e)| match e {
                    Entry::Literal(z) => RationalExpr::scalar(z),
                    Entry::Expr(e) => e,
                })
                .collect()
        })
        .collect();
    ExprMatrix::new(grid).map_err(|e| Parser::shape_err(pos, e))
}

/// Splits an expression file into its signature header and body.
///
/// The first non-blank line that is not a `#` comment must read
/// `signature: d1=<n> d2=<m>`; the remaining non-comment lines form the
/// expression.
pub fn split_expr_file(text: &str) -> Result<(Signature, String), ParseError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| ParseError::Header("empty file".into()))?;
    let rest = header
        .strip_prefix("signature:")
        .ok_or_else(|| ParseError::Header(format!("expected 'signature: d1=<n> d2=<m>', found '{header}'")))?;
    let mut d1 = None;
    let mut d2 = None;
    for part in rest.split_whitespace() {
        let (key, val) = part.split_once('=').ok_or_else(|| ParseError::Header(format!("bad field '{part}'")))?;
        let v: usize = val.parse().map_err(|_| ParseError::Header(format!("bad count '{val}'")))?;
        match key {
            "d1" => d1 = Some(v),
            "d2" => d2 = Some(v),
            _ => return Err(ParseError::Header(format!("unknown field '{key}'"))),
        }
    }
    let (Some(d1), Some(d2)) = (d1, d2) else {
        return Err(ParseError::Header("both d1 and d2 are required".into()));
    };
    let sig = Signature::new(d1, d2).map_err(|e| ParseError::Header(e.to_string()))?;
    let body: Vec<&str> = lines.collect();
    Ok((sig, body.join(" ")))
}

pub fn parse_expr_file(text: &str) -> Result<(Signature, RationalExpr), ParseError> {
    let (sig, body) = split_expr_file(text)?;
    Ok((sig, parse_expr(&body, sig)?))
}

pub fn render_expr_file(signature: Signature, expr: &RationalExpr) -> String {
    format!("signature: {signature}\n{}\n", render(expr))
}

fn fmt_real(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn fmt_complex(z: c64) -> String {
    if z.im == 0.0 {
        fmt_real(z.re)
    } else if z.re == 0.0 {
        format!("{}i", fmt_real(z.im))
    } else if z.im < 0.0 {
        format!("{}-{}i", fmt_real(z.re), fmt_real(-z.im))
    } else {
        format!("{}+{}i", fmt_real(z.re), fmt_real(z.im))
    }
}

fn fmt_matrix(m: &faer::Mat<c64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| fmt_complex(m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn is_unit_scalar(m: &faer::Mat<c64>) -> bool {
    m.nrows() == 1 && m.ncols() == 1 && m[(0, 0)] == c64::new(1.0, 0.0)
}

/// Fully parenthesized canonical text; `parse(render(e)) == e`.
pub fn render(expr: &RationalExpr) -> String {
    match expr.node() {
        Node::Const(a) => fmt_matrix(a),
        Node::ScaledVar { coeff, var } => {
            if is_unit_scalar(coeff) {
                var.to_string()
            } else {
                format!("kron({}, {var})", fmt_matrix(coeff))
            }
        }
        Node::Sum(l, r) => format!("(({}) + ({}))", render(l), render(r)),
        Node::Product(l, r) => format!("(({}) * ({}))", render(l), render(r)),
        Node::Inverse(i) => format!("({})^-1", render(i)),
    }
}

/// Compact rendering of leaves for human-facing output.
pub(crate) fn render_atom(expr: &RationalExpr) -> String {
    match expr.node() {
        Node::Const(a) if a.nrows() == 1 && a.ncols() == 1 => {
            let z = a[(0, 0)];
            let s = fmt_complex(z);
            if z.im != 0.0 && z.re != 0.0 || s.starts_with('-') {
                format!("({s})")
            } else {
                s
            }
        }
        Node::ScaledVar { coeff, var } if coeff.nrows() == 1 && coeff.ncols() == 1 => {
            let z = coeff[(0, 0)];
            if z == c64::new(1.0, 0.0) {
                var.to_string()
            } else if z == c64::new(-1.0, 0.0) {
                format!("(-{var})")
            } else {
                format!("kron({}, {var})", fmt_matrix(coeff))
            }
        }
        _ => render(expr),
    }
}
