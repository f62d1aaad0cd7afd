//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line.
//! Run with `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_expr, random_signature, report, sig};
use ratspec::eval::{eval_expr, eval_representation, RepRef, DEFAULT_INV_TOL};
use ratspec::expr::{ExprMatrix, RationalExpr, Signature};
use ratspec::harness::{
    estimate_inner_rank, run_convergence, test_fullness, test_nondegeneracy, ExperimentConfig, Nondegeneracy, Reference,
};
use ratspec::linalg::{self, CMat};
use ratspec::linearize::{linearize, make_selfadjoint_rep, schur_pencil, AffinePencil};
use ratspec::parser::{parse_expr, parse_expr_matrix};
use ratspec::randmat::{rng_for, sample_hermitian_gue, standard_tuple};
use ratspec::spectral::{
    hermitian_eigenvalues, kolmogorov_distance, projection_rank_check, random_projection, rank_cdf_bound_check,
    AnalyticLaw, CdfQueryable,
};

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn relative_residual(exact: &CMat, approx: &CMat) -> f64 {
    let diff = linalg::difference_norm(exact.as_ref(), approx.as_ref());
    diff / linalg::frobenius(exact.as_ref()).max(1.0)
}

/// An in-domain GUE/Haar point at some `N` in `2..=6`, starting from `n0`.
fn domain_point(expr: &RationalExpr, signature: Signature, n0: usize, seed: u64) -> Option<(ratspec::MatrixTuple, CMat)> {
    for step in 0..5 {
        let n = 2 + (n0 + step) % 5;
        for trial in 0..5 {
            let point = standard_tuple(signature, n, seed, trial);
            if let Ok(v) = eval_expr(expr, &point, DEFAULT_INV_TOL) {
                return Some((point, v));
            }
        }
    }
    None
}

#[test]
fn c01_linearization_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut worst_general, mut worst_sa, mut worst_sym) = (0, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut failures = Vec::new();
    let mut attempts = 0;
    while checked < 200 && attempts < 1000 {
        attempts += 1;
        let signature = random_signature(&mut rng);
        let e = random_expr(&mut rng, signature, 5);
        assert!(e.depth() <= 5);
        let Some((point, direct)) = domain_point(&e, signature, checked, attempts as u64) else {
            continue;
        };
        let rep = linearize(&e, signature);
        let sa = make_selfadjoint_rep(&rep).unwrap();
        let general = eval_representation(RepRef::General(&rep), &point, DEFAULT_INV_TOL);
        let hermitian = eval_representation(RepRef::SelfAdjoint(&sa), &point, DEFAULT_INV_TOL);
        let (Some(general), Some(hermitian)) = (general, hermitian) else {
            failures.push(format!("pencil singular on the domain of {e}"));
            continue;
        };
        // w*Q⁻¹w reproduces the Hermitian part ½(R + R*), which is R itself
        // for self-adjoint expressions.
        let half = c64::new(0.5, 0.0);
        let re_part = CMat::from_fn(direct.nrows(), direct.ncols(), |i, j| half * (direct[(i, j)] + direct[(j, i)].conj()));
        let rg = relative_residual(&direct, &general);
        let rs = relative_residual(&re_part, &hermitian);
        worst_general = worst_general.max(rg);
        worst_sa = worst_sa.max(rs);
        if rg > 1e-8 || rs > 1e-8 {
            failures.push(format!("{e} at N={}: {rg:e} / {rs:e}", point.n()));
        }

        // The self-adjoint expression e + e*, checked against R directly.
        let sym = RationalExpr::sum(e.clone(), e.formal_adjoint()).unwrap();
        if let Ok(direct) = eval_expr(&sym, &point, DEFAULT_INV_TOL) {
            let sa = make_selfadjoint_rep(&linearize(&sym, signature)).unwrap();
            match eval_representation(RepRef::SelfAdjoint(&sa), &point, DEFAULT_INV_TOL) {
                Some(v) => {
                    let r = relative_residual(&direct, &v);
                    worst_sym = worst_sym.max(r);
                    if r > 1e-8 {
                        failures.push(format!("{sym}: {r:e}"));
                    }
                }
                None => failures.push(format!("pencil singular on the domain of {sym}")),
            }
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = checked == 200 && failures.is_empty() && within(elapsed, 120);
    report(
        "C1 linearization identities",
        pass,
        &format!(
            "{checked} expressions ({attempts} drawn), max residual uA^-1v {worst_general:.1e}, w*Q^-1w {worst_sa:.1e}, on e+e* {worst_sym:.1e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass, "{failures:#?}");
}

fn real_rows(m: &CMat) -> Vec<Vec<f64>> {
    assert!((0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)].im == 0.0)));
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect()
}

#[test]
fn c02_golden_linearizations() {
    let start = Instant::now();
    let e = parse_expr("x1 + x2^-1", sig(2, 0)).unwrap();
    let rep = linearize(&e, sig(2, 0));
    let p = rep.pencil();
    let pencil: Vec<Vec<String>> = (0..rep.k()).map(|i| (0..rep.k()).map(|j| p.entry_text(i, j)).collect()).collect();
    let general_ok = rep.k() == 3
        && real_rows(rep.u()) == vec![vec![1.0, 0.0, 1.0]]
        && real_rows(rep.v()) == vec![vec![0.0], vec![1.0], vec![1.0]]
        && pencil == [["1", "-x1", "0"], ["0", "1", "0"], ["0", "0", "x2"]];

    let sa = make_selfadjoint_rep(&rep).unwrap();
    let q = sa.pencil();
    let grid: Vec<Vec<String>> = (0..sa.k()).map(|i| (0..sa.k()).map(|j| q.entry_text(i, j)).collect()).collect();
    let expected = [
        ["0", "0", "0", "1", "0", "0"],
        ["0", "0", "0", "-x1", "1", "0"],
        ["0", "0", "0", "0", "0", "x2"],
        ["1", "-x1", "0", "0", "0", "0"],
        ["0", "1", "0", "0", "0", "0"],
        ["0", "0", "x2", "0", "0", "0"],
    ];
    let sa_ok = sa.k() == 6 && real_rows(sa.w()).concat() == vec![0.5, 0.0, 0.5, 0.0, 1.0, 1.0] && grid == expected;
    let elapsed = start.elapsed();
    let pass = general_ok && sa_ok && within(elapsed, 1);
    report(
        "C2 golden linearizations",
        pass,
        &format!("3-dim rep {}, 6-dim self-adjoint rep {}", if general_ok { "exact" } else { "differs" }, if sa_ok { "exact" } else { "differs" }),
    );
    assert!(pass, "{pencil:?}\n{grid:?}");
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn arcsine_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("u1 + u1^-1", sig(0, 1), vec![200, 2000], 1, seed);
    cfg.reference = Reference::Analytic(AnalyticLaw::Arcsine2);
    cfg
}

#[test]
fn c03_arcsine_law() {
    let start = Instant::now();
    let runs: Vec<(f64, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (1..=4)
            .map(|seed| {
                scope.spawn(move || {
                    let r = run_convergence(&arcsine_config(seed)).unwrap();
                    (r.summary(200).and_then(|s| s.mean_ks).unwrap(), r.summary(2000).and_then(|s| s.mean_ks).unwrap())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let (small, large): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();
    let elapsed = start.elapsed();
    let pass = large[0] <= 0.05 && mean(&large) < mean(&small) && within(elapsed, 60);
    report(
        "C3 arcsine law",
        pass,
        &format!(
            "KS at N=2000 {:.4}; mean over 4 seeds {:.4} (N=200) vs {:.4} (N=2000); {:.1}s",
            large[0],
            mean(&small),
            mean(&large),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

fn single_sample_ks(text: &str, signature: Signature, law: AnalyticLaw, n: usize, seed: u64) -> f64 {
    let mut cfg = ExperimentConfig::new(text, signature, vec![n], 1, seed);
    cfg.reference = Reference::Analytic(law);
    let r = run_convergence(&cfg).unwrap();
    r.samples[0].ks.expect("sample in domain")
}

#[test]
fn c04_inverse_semicircle() {
    let start = Instant::now();
    let law = AnalyticLaw::PushforwardInverse { of: Box::new(AnalyticLaw::Semicircle { variance: 1.0 }) };
    let ks = single_sample_ks("x1^-1", sig(1, 0), law, 2000, 11);
    let elapsed = start.elapsed();
    let pass = ks <= 0.05 && within(elapsed, 60);
    report("C4 inverse semicircle", pass, &format!("KS {ks:.4} at N=2000, {:.1}s", elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn c05_sum_then_invert() {
    let start = Instant::now();
    let law = AnalyticLaw::PushforwardInverse { of: Box::new(AnalyticLaw::Semicircle { variance: 2.0 }) };
    let ks = single_sample_ks("(x1 + x2)^-1", sig(2, 0), law, 2000, 12);
    let elapsed = start.elapsed();
    let pass = ks <= 0.05 && within(elapsed, 60);
    report("C5 sum then invert", pass, &format!("KS {ks:.4} at N=2000, {:.1}s", elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn c06_rank_lemmas() {
    let start = Instant::now();
    let n = 20;
    let mut rng = rng_for(606, n, 0, 0);
    let grid: Vec<f64> = (-40..=40).map(|i| i as f64 / 10.0).collect();
    let (mut cdf_violations, mut proj_violations) = (0, 0);
    for trial in 0..500u64 {
        // Perturbations of every rank from 0 to N.
        let x = sample_hermitian_gue(n, 10_000 + trial);
        let r = rng.random_range(0..=n);
        let p = random_projection(n, r, &mut rng);
        let y = &p * sample_hermitian_gue(n, 20_000 + trial) * &p;
        if !rank_cdf_bound_check(&x, &y, &grid).unwrap().ok {
            cdf_violations += 1;
        }

        let r = rng.random_range(0..=n);
        let q = random_projection(n, r, &mut rng);
        let low_rank = &q * sample_hermitian_gue(n, 30_000 + trial) * &q;
        let proj = random_projection(n, rng.random_range(0..=n), &mut rng);
        if !projection_rank_check(&proj, &low_rank, 1e-10) {
            proj_violations += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = cdf_violations == 0 && proj_violations == 0 && within(elapsed, 30);
    report(
        "C6 rank lemmas",
        pass,
        &format!("{cdf_violations} CDF-bound and {proj_violations} projection violations in 500+500 pairs, {:.1}s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

/// Random `k×k` complex matrix with integer entries.
fn random_int(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c64::new(rng.random_range(-3..=3) as f64, rng.random_range(-1..=1) as f64))
}

/// `B·C` with one factor constant and the other affine linear, so the
/// pencil has inner rank at most `r < k`.
fn non_full_pencil(rng: &mut ChaCha8Rng, signature: Signature) -> AffinePencil {
    let k = rng.random_range(2..=6);
    let r = rng.random_range(1..k);
    let nvars = signature.d1 + signature.d2;
    let linear_left = rng.random_bool(0.5);
    let (rows, cols) = if linear_left { (k, r) } else { (r, k) };
    let constant = if linear_left { random_int(rng, r, k) } else { random_int(rng, k, r) };
    let mut coeffs: Vec<CMat> = (0..=nvars).map(|_| random_int(rng, rows, cols)).collect();
    let mut mult = |m: CMat| if linear_left { &m * &constant } else { &constant * &m };
    let a0 = mult(coeffs.remove(0));
    let mut products: Vec<CMat> = coeffs.into_iter().map(&mut mult).collect();
    let unitary = products.split_off(signature.d1);
    AffinePencil::new(a0, products, unitary, false).unwrap()
}

#[test]
fn c07_fullness_classifier() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (mut full_ok, mut full_total, mut attempts) = (0, 0, 0);
    while full_total < 50 && attempts < 500 {
        attempts += 1;
        let signature = random_signature(&mut rng);
        let e = random_expr(&mut rng, signature, 4);
        // The bordered pencil is full exactly when the expression is a
        // nonzero element, witnessed by one invertible evaluation.
        let invertible = (0..5).any(|t| {
            eval_expr(&e, &standard_tuple(signature, 8, 9000 + attempts, t), DEFAULT_INV_TOL)
                .is_ok_and(|v| linalg::relative_sigma_min(v.as_ref()) > 1e-8)
        });
        if !invertible {
            continue;
        }
        let pencil = schur_pencil(&linearize(&e, signature)).unwrap();
        full_total += 1;
        if test_fullness(&pencil, &[8], 5, attempts).is_full() {
            full_ok += 1;
        }
    }
    let mut non_full_ok = 0;
    for i in 0..50 {
        let signature = random_signature(&mut rng);
        let pencil = non_full_pencil(&mut rng, signature);
        if !test_fullness(&pencil, &[8], 5, 5000 + i).is_full() {
            non_full_ok += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = full_total == 50 && full_ok == 50 && non_full_ok == 50 && within(elapsed, 30);
    report(
        "C7 fullness classifier",
        pass,
        &format!("{full_ok}/{full_total} full and {non_full_ok}/50 non-full pencils classified correctly, {:.1}s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn c08_inner_rank_from_zero_atom() {
    let start = Instant::now();
    let m: ExprMatrix = parse_expr_matrix("[[x1, x1], [x1, x1]]", sig(1, 0)).unwrap();
    let est = estimate_inner_rank(&m, sig(1, 0), &[50, 100, 200], &[0.1, 0.05, 0.01], 8).unwrap();
    let fractions: Vec<f64> = est.per_n.iter().map(|r| r.kernel_fraction).collect();
    let elapsed = start.elapsed();
    let pass = fractions.iter().all(|&f| f == 0.5) && est.rho == 1 && within(elapsed, 30);
    report(
        "C8 inner rank",
        pass,
        &format!("zero-eigenvalue fractions {fractions:?} at N=50,100,200; rho = {}", est.rho),
    );
    assert!(pass);
}

#[test]
fn c09_nondegeneracy_scanner() {
    let start = Instant::now();
    let e = parse_expr("(x1*x2 - x2*x1)^-1", sig(2, 0)).unwrap();
    let at_one = test_nondegeneracy(&e, sig(2, 0), &[1], 5, 9);
    let scan = test_nondegeneracy(&e, sig(2, 0), &[1, 2], 5, 9);
    let found = match &scan {
        Nondegeneracy::Found { n: 2, trial, .. } => Some(*trial),
        _ => None,
    };
    let elapsed = start.elapsed();
    let pass = matches!(at_one, Nondegeneracy::NotFound) && found.is_some_and(|t| t < 5) && within(elapsed, 5);
    report(
        "C9 non-degeneracy scanner",
        pass,
        &format!("N=1: {}; first witness at N=2 trial {found:?}", if at_one.witness_dimension().is_none() { "no witness" } else { "witness" }),
    );
    assert!(pass);
}

fn converge_with_threads(config: &Path, out: &Path, threads: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_ratspec"))
        .args(["converge", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RATSPEC_THREADS", threads)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out.join("report.json")).unwrap()
}

#[test]
fn c10_determinism_across_thread_counts() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = arcsine_config(1);
    cfg.samples_per_n = 4;
    let config = dir.path().join("arcsine.json");
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let one = converge_with_threads(&config, &dir.path().join("t1"), "1");
    let four = converge_with_threads(&config, &dir.path().join("t4"), "4");
    let elapsed = start.elapsed();
    let pass = one == four && !one.is_empty() && within(elapsed, 120);
    report(
        "C10 determinism",
        pass,
        &format!("report.json with 1 and 4 threads {} ({} bytes), {:.1}s", if one == four { "identical" } else { "differ" }, one.len(), elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn analytic_references_are_distinct() {
    // Guards the KS checks above against a degenerate reference.
    let a = CdfQueryable::Analytic(AnalyticLaw::Arcsine2);
    let s = CdfQueryable::Analytic(AnalyticLaw::Semicircle { variance: 1.0 });
    assert!(kolmogorov_distance(&a, &s) > 0.05);
    let x = hermitian_eigenvalues(&sample_hermitian_gue(400, 1)).unwrap();
    assert!(kolmogorov_distance(&CdfQueryable::Empirical(x), &a) > 0.05);
}
