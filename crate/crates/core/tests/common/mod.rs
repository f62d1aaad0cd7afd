#![allow(dead_code)]

use std::io::Write;

use faer::c64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ratspec::expr::{RationalExpr, Signature, Var};
use ratspec::linalg;

pub fn sig(d1: usize, d2: usize) -> Signature {
    Signature::new(d1, d2).unwrap()
}

/// Prints straight to stderr so the line survives libtest's capture.
pub fn report(id: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {id}: {detail}");
}

fn coefficient(rng: &mut ChaCha8Rng) -> c64 {
    // Half-integers keep rendered text short and exact.
    let half = |rng: &mut ChaCha8Rng| rng.random_range(-4i32..=4) as f64 / 2.0;
    let re = loop {
        let v = half(rng);
        if v != 0.0 {
            break v;
        }
    };
    let im = if rng.random_bool(0.3) { half(rng) } else { 0.0 };
    c64::new(re, im)
}

fn leaf(rng: &mut ChaCha8Rng, signature: Signature) -> RationalExpr {
    let nvars = signature.d1 + signature.d2;
    let var = |rng: &mut ChaCha8Rng| {
        let j = rng.random_range(0..nvars);
        if j < signature.d1 {
            Var::selfadjoint(j)
        } else {
            Var::unitary(j - signature.d1)
        }
    };
    match rng.random_range(0..10) {
        0 | 1 => RationalExpr::scalar(coefficient(rng)),
        2 | 3 => RationalExpr::scaled_var(linalg::scalar(coefficient(rng)), var(rng)).unwrap(),
        _ => RationalExpr::var(var(rng)),
    }
}

/// Random scalar expression of depth at most `depth` over `signature`.
pub fn random_expr(rng: &mut ChaCha8Rng, signature: Signature, depth: usize) -> RationalExpr {
    if depth <= 1 || rng.random_bool(0.25) {
        return leaf(rng, signature);
    }
    match rng.random_range(0..5) {
        0 | 1 => RationalExpr::sum(random_expr(rng, signature, depth - 1), random_expr(rng, signature, depth - 1)).unwrap(),
        2 | 3 => RationalExpr::product(random_expr(rng, signature, depth - 1), random_expr(rng, signature, depth - 1)).unwrap(),
        _ => RationalExpr::inverse(random_expr(rng, signature, depth - 1)).unwrap(),
    }
}

/// Random signature with `d1, d2 ≤ 2` and at least one variable.
pub fn random_signature(rng: &mut ChaCha8Rng) -> Signature {
    loop {
        let (d1, d2) = (rng.random_range(0..=2), rng.random_range(0..=2));
        if d1 + d2 > 0 {
            return sig(d1, d2);
        }
    }
}
