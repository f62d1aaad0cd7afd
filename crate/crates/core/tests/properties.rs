mod common;

use faer::c64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_expr, sig};
use ratspec::eval::{eval_expr, eval_pencil, DEFAULT_INV_TOL};
use ratspec::expr::{RationalExpr, Signature, Var};
use ratspec::linalg::{self, CMat};
use ratspec::linearize::AffinePencil;
use ratspec::parser::{parse_expr, render};
use ratspec::randmat::{general_complex_tuple, standard_tuple};
use ratspec::spectral::{kolmogorov_distance, CdfQueryable, EmpiricalSpectrum};

const SIG: Signature = Signature { d1: 2, d2: 2 };

fn coeff() -> impl Strategy<Value = c64> {
    let part = prop_oneof![(-8i32..=8).prop_map(|k| k as f64 / 4.0), -1e3f64..1e3];
    (part.clone(), prop_oneof![3 => Just(0.0), 1 => part]).prop_map(|(re, im)| c64::new(re, im))
}

fn var() -> impl Strategy<Value = Var> {
    prop_oneof![(0..2usize).prop_map(Var::selfadjoint), (0..2usize).prop_map(Var::unitary)]
}

fn leaf() -> impl Strategy<Value = RationalExpr> {
    prop_oneof![
        var().prop_map(RationalExpr::var),
        coeff().prop_map(RationalExpr::scalar),
        (coeff(), var()).prop_map(|(c, v)| RationalExpr::scaled_var(linalg::scalar(c), v).unwrap()),
    ]
}

fn expr() -> impl Strategy<Value = RationalExpr> {
    leaf().prop_recursive(6, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| RationalExpr::sum(a, b).unwrap()),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| RationalExpr::product(a, b).unwrap()),
            inner.prop_map(|a| RationalExpr::inverse(a).unwrap()),
        ]
    })
}

fn adjoint(m: &CMat) -> CMat {
    linalg::adjoint(m.as_ref())
}

fn close(a: &CMat, b: &CMat) -> bool {
    linalg::difference_norm(a.as_ref(), b.as_ref()) <= 1e-8 * linalg::frobenius(a.as_ref()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn render_then_parse_is_identity(e in expr()) {
        prop_assume!(e.depth() <= 6);
        let text = render(&e);
        let back = parse_expr(&text, SIG).unwrap();
        prop_assert_eq!(back, e, "{}", text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adjoint_commutes_with_evaluation(seed in 0u64..1_000_000, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_expr(&mut rng, SIG, 4);
        let point = standard_tuple(SIG, n, seed, 0);
        if let Ok(v) = eval_expr(&e, &point, DEFAULT_INV_TOL) {
            let star = eval_expr(&e.formal_adjoint(), &point, DEFAULT_INV_TOL).unwrap();
            prop_assert!(close(&adjoint(&v), &star), "{}", e);
            let twice = eval_expr(&e.formal_adjoint().formal_adjoint(), &point, DEFAULT_INV_TOL).unwrap();
            prop_assert!(close(&v, &twice), "{}", e);
        }
    }

    #[test]
    fn kolmogorov_distance_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 1..40),
        b in prop::collection::vec(-5.0f64..5.0, 1..40),
        c in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let q = |v: &Vec<f64>| CdfQueryable::Empirical(EmpiricalSpectrum::new(v.clone()));
        let (qa, qb, qc) = (q(&a), q(&b), q(&c));
        let ab = kolmogorov_distance(&qa, &qb);
        prop_assert_eq!(ab, kolmogorov_distance(&qb, &qa));
        prop_assert_eq!(kolmogorov_distance(&qa, &qa), 0.0);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!(ab <= kolmogorov_distance(&qa, &qc) + kolmogorov_distance(&qc, &qb) + 1e-12);
    }

    /// A pencil `B·C(x)` with `B` of width `r < k` stays singular at
    /// every point, Hermitian or not.
    #[test]
    fn factored_pencils_vanish_identically(seed in 0u64..1_000_000, k in 2usize..6, n in 1usize..5) {
        let r = 1 + (seed as usize) % (k - 1);
        let s = sig(2, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = CMat::from_fn(k, r, |i, j| c64::new(i as f64 - 2.0 * j as f64, (i * j) as f64));
        let mut right = || {
            let t = general_complex_tuple(sig(1, 0), r.max(k), rand::Rng::random(&mut rng), 0);
            CMat::from_fn(r, k, |i, j| t.xs()[0][(i, j)])
        };
        let coeffs: Vec<CMat> = (0..3).map(|_| &left * right()).collect();
        let pencil = AffinePencil::new(coeffs[0].clone(), coeffs[1..].to_vec(), vec![], false).unwrap();
        let point = general_complex_tuple(s, n, seed, 1);
        let m = eval_pencil(&pencil, &point);
        prop_assert!(linalg::numerical_rank(m.as_ref(), 1e-10) <= r * n);
    }
}
