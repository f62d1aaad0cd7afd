//! Noncommutative rational expressions, their linearizations, and
//! random-matrix experiments on their spectra.

pub mod cli;
pub mod eval;
pub mod expr;
pub mod harness;
pub mod json;
pub mod linalg;
pub mod linearize;
pub mod parser;
pub mod randmat;
pub mod spectral;

pub use eval::{eval_expr, eval_pencil, pencil_det, MatrixTuple};
pub use expr::{RationalExpr, Signature};
pub use linearize::{linearize, make_selfadjoint_rep, schur_pencil, AffinePencil, FormalLinRep, SaLinRep};
pub use parser::{parse_expr, render};
