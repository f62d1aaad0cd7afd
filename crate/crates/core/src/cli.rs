//! Command-line front end. Exit codes: 0 success, 1 negative verdict,
//! 2 usage or input error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::eval::{self, MatrixTuple, MatrixTupleJson, DEFAULT_INV_TOL};
use crate::expr::{is_selfadjoint_probabilistic, ExprError, RationalExpr, SelfAdjointVerdict, Signature};
use crate::harness::{self, ExperimentConfig, FullnessVerdict, HarnessError, Nondegeneracy, Reference};
use crate::json::to_json_matrix;
use crate::linearize::{linearize_with, make_selfadjoint_rep, schur_pencil, AffinePencil, LinearizeOptions, RepJson};
use crate::parser::{self, parse_expr_matrix, split_expr_file};
use crate::randmat::{sample_tuple_indexed, EnsembleSpec};

#[derive(Parser, Debug)]
#[command(name = "ratspec", version, about = "Noncommutative rational expressions and their random-matrix spectra")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Numerical tolerance (inversion threshold for `eval`, relative
    /// defect for `sa-check`).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory for files (`converge`, `sample`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print a machine-readable JSON report to stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ExprInput {
    /// Expression file with a `signature: d1=<n> d2=<m>` header.
    #[arg(long)]
    expr: Option<PathBuf>,
    /// Inline expression text; needs `--signature`.
    #[arg(long, conflicts_with = "expr", allow_hyphen_values = true)]
    text: Option<String>,
    /// Signature for `--text`, e.g. `d1=2 d2=0` or `2,0`.
    #[arg(long)]
    signature: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse an expression and print its canonical form.
    Parse(ExprInput),
    /// Build a linear representation.
    Linearize {
        #[command(flatten)]
        input: ExprInput,
        /// Build the self-adjoint representation (w, Q) instead.
        #[arg(long)]
        selfadjoint: bool,
        /// Print the bordered pencil [[0, u], [v, A]] instead.
        #[arg(long, conflicts_with = "selfadjoint")]
        schur: bool,
        /// Use the bordered inverse rule for inverses of single terms too.
        #[arg(long)]
        no_atom_shortcut: bool,
    },
    /// Evaluate at a point from a JSON file or at a random point.
    Eval {
        #[command(flatten)]
        input: ExprInput,
        /// Point file `{"N": .., "Xs": [..], "Us": [..]}`.
        #[arg(long, conflicts_with = "n")]
        point: Option<PathBuf>,
        /// Dimension of a random GUE/Haar point.
        #[arg(long = "N")]
        n: Option<usize>,
    },
    /// Draw GUE/Haar tuples.
    Sample {
        #[arg(long)]
        signature: String,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
    /// Run a convergence experiment.
    Converge {
        /// Experiment config (JSON); other options are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        input: ExprInput,
        #[arg(long = "N", value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// `surrogate`, `surrogate:<N>`, `semicircle[:var]`, `arcsine2`,
        /// `inverse_semicircle[:var]`.
        #[arg(long, default_value = "surrogate")]
        reference: String,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Skip the self-adjointness check.
        #[arg(long)]
        force: bool,
    },
    /// Randomized fullness test of a pencil.
    Fullness {
        /// Representation JSON as printed by `linearize --json`.
        #[arg(long)]
        pencil: Option<PathBuf>,
        /// Use the bordered pencil of this expression's representation.
        #[command(flatten)]
        input: ExprInput,
        #[arg(long = "N", value_delimiter = ',', default_value = "1,2,4,8")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Estimate the inner rank of a square matrix of expressions.
    Rank {
        /// File with a signature header and a matrix literal.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long = "N", value_delimiter = ',', default_value = "50,100,200")]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.01")]
        eps: Vec<f64>,
    },
    /// Randomized self-adjointness check.
    SaCheck {
        #[command(flatten)]
        input: ExprInput,
        #[arg(long = "N", default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Search for a point in the domain over increasing dimensions.
    Nondeg {
        #[command(flatten)]
        input: ExprInput,
        #[arg(long = "N", value_delimiter = ',', default_value = "1,2,3,4")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
}

#[derive(Debug)]
enum Outcome {
    Positive,
    Negative,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(Outcome::Positive) => 0,
        Ok(Outcome::Negative) => 1,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

pub fn parse_signature(s: &str) -> Result<Signature, String> {
    let s = s.trim();
    let (d1, d2) = if let Some((a, b)) = s.split_once(',') {
        (a.trim().to_string(), b.trim().to_string())
    } else {
        let mut d1 = None;
        let mut d2 = None;
        for part in s.split_whitespace() {
            match part.split_once('=') {
                Some(("d1", v)) => d1 = Some(v.to_string()),
                Some(("d2", v)) => d2 = Some(v.to_string()),
                _ => return Err(format!("bad signature '{s}'")),
            }
        }
        (d1.unwrap_or_else(|| "0".into()), d2.unwrap_or_else(|| "0".into()))
    };
    let d1: usize = d1.parse().map_err(|_| format!("bad signature '{s}'"))?;
    let d2: usize = d2.parse().map_err(|_| format!("bad signature '{s}'"))?;
    Signature::new(d1, d2).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

impl ExprInput {
    fn is_given(&self) -> bool {
        self.expr.is_some() || self.text.is_some()
    }

    fn source(&self) -> Result<(Signature, String), CliError> {
        match (&self.expr, &self.text) {
            (Some(path), _) => {
                let (sig, body) = split_expr_file(&read(path)?)?;
                Ok((sig, body))
            }
            (None, Some(text)) => {
                let sig = self.signature.as_deref().ok_or_else(|| CliError("--text needs --signature".into()))?;
                Ok((parse_signature(sig)?, text.clone()))
            }
            (None, None) => Err(CliError("give an expression with --expr FILE or --text STR".into())),
        }
    }

    fn load(&self) -> Result<(Signature, RationalExpr), CliError> {
        let (sig, body) = self.source()?;
        Ok((sig, parser::parse_expr(&body, sig)?))
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn print_matrix(name: &str, m: &crate::linalg::CMat) {
    println!("{name} =");
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| parser::fmt_complex(m[(i, j)])).collect();
        println!("  [{}]", row.join(", "));
    }
}

fn print_pencil(p: &AffinePencil) {
    println!("pencil (k = {}) =", p.k());
    for i in 0..p.k() {
        let row: Vec<String> = (0..p.k()).map(|j| p.entry_text(i, j)).collect();
        println!("  [{}]", row.join(", "));
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    crate::linalg::ensure_sequential();
    match &cli.command {
        Command::Parse(input) => {
            let (sig, e) = input.load()?;
            if cli.json {
                print_json(&json!({
                    "signature": sig,
                    "canonical": parser::render(&e),
                    "rows": e.rows(),
                    "cols": e.cols(),
                    "depth": e.depth(),
                    "size": e.size(),
                }));
            } else {
                println!("{}", parser::render(&e));
                println!("shape {}, signature {sig}", e.shape());
            }
            Ok(Outcome::Positive)
        }
        Command::Linearize { input, selfadjoint, schur, no_atom_shortcut } => {
            let (sig, e) = input.load()?;
            let opts = LinearizeOptions { atom_inverse_shortcut: !no_atom_shortcut };
            let rep = linearize_with(&e, sig, opts);
            if *selfadjoint {
                let sa = make_selfadjoint_rep(&rep)?;
                if cli.json {
                    print_json(&sa.to_json());
                } else {
                    print_pencil(sa.pencil());
                    print_matrix("w", sa.w());
                }
            } else if *schur {
                let p = schur_pencil(&rep)?;
                if cli.json {
                    print_json(&RepJson::from_pencil(&p));
                } else {
                    print_pencil(&p);
                }
            } else if cli.json {
                print_json(&rep.to_json());
            } else {
                print_matrix("u", rep.u());
                print_pencil(rep.pencil());
                print_matrix("v", rep.v());
            }
            Ok(Outcome::Positive)
        }
        Command::Eval { input, point, n } => {
            let (sig, e) = input.load()?;
            let point = match (point, n) {
                (Some(path), _) => {
                    let j: MatrixTupleJson = serde_json::from_str(&read(path)?)?;
                    MatrixTuple::from_json(&j)?
                }
                (None, Some(n)) => crate::randmat::standard_tuple(sig, *n, cli.seed, 0),
                (None, None) => return Err(CliError("give --point FILE or --N <dim>".into())),
            };
            match eval::eval_expr(&e, &point, cli.tol.unwrap_or(DEFAULT_INV_TOL)) {
                Ok(v) => {
                    if cli.json {
                        print_json(&json!({ "in_domain": true, "value": to_json_matrix(v.as_ref()) }));
                    } else {
                        print_matrix("value", &v);
                    }
                    Ok(Outcome::Positive)
                }
                Err(eval::EvalError::Domain(f)) => {
                    if cli.json {
                        print_json(&json!({
                            "in_domain": false,
                            "path": f.path.to_string(),
                            "subexpression": f.subexpr,
                            "sigma_min": f.sigma_min,
                        }));
                    } else {
                        println!("{f}");
                    }
                    Ok(Outcome::Negative)
                }
                Err(other) => Err(other.into()),
            }
        }
        Command::Sample { signature, n, samples } => {
            let sig = parse_signature(signature)?;
            if *n == 0 {
                return Err(CliError("--N must be positive".into()));
            }
            let spec = EnsembleSpec::standard(sig, *n, cli.seed);
            let tuples: Vec<MatrixTupleJson> = (0..*samples as u64).map(|s| sample_tuple_indexed(&spec, s).to_json()).collect();
            match &cli.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    for (s, t) in tuples.iter().enumerate() {
                        let path = dir.join(format!("tuple_N{n}_s{s}.json"));
                        fs::write(&path, serde_json::to_string(t)? + "\n")?;
                        if !cli.json {
                            println!("{}", path.display());
                        }
                    }
                    if cli.json {
                        print_json(&json!({ "written": tuples.len() }));
                    }
                }
                None if tuples.len() == 1 => print_json(&tuples[0]),
                None => print_json(&tuples),
            }
            Ok(Outcome::Positive)
        }
        Command::Converge { config, input, n_list, samples, reference, eps, force } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::from_json(&read(path)?)?,
                None => {
                    let (sig, body) = input.source()?;
                    let mut cfg = ExperimentConfig::new(body, sig, n_list.clone(), *samples, cli.seed);
                    cfg.reference = reference.parse::<Reference>()?;
                    if !eps.is_empty() {
                        cfg.eps_list = eps.clone();
                    }
                    cfg.force = *force;
                    cfg
                }
            };
            if let Some(dir) = &cli.out {
                cfg.output_dir = Some(dir.clone());
            }
            let report = match harness::run_convergence(&cfg) {
                Ok(r) => r,
                Err(HarnessError::NotSelfAdjoint(d)) => {
                    eprintln!("expression is not self-adjoint (relative defect {d:e}); use --force to run anyway");
                    return Ok(Outcome::Negative);
                }
                Err(e) => return Err(e.into()),
            };
            if cli.json {
                print!("{}", report.to_json_pretty());
            } else {
                println!("{} against {}", report.expression, report.reference);
                for s in &report.per_n {
                    let ks = s.mean_ks.map_or("-".to_string(), |k| format!("{k:.4}"));
                    let mx = s.max_ks.map_or("-".to_string(), |k| format!("{k:.4}"));
                    println!("N = {:>5}  in domain {:>3}  mean KS {ks}  max KS {mx}", s.n, s.in_domain);
                }
                for w in &report.warnings {
                    println!("warning: {w}");
                }
            }
            Ok(Outcome::Positive)
        }
        Command::Fullness { pencil, input, n_list, trials } => {
            let p = match (pencil, input.is_given()) {
                (Some(path), _) => serde_json::from_str::<RepJson>(&read(path)?)?.pencil()?,
                (None, true) => {
                    let (sig, e) = input.load()?;
                    schur_pencil(&crate::linearize::linearize(&e, sig))?
                }
                (None, false) => return Err(CliError("give --pencil FILE or an expression".into())),
            };
            let verdict = harness::test_fullness(&p, n_list, *trials, cli.seed);
            if cli.json {
                print_json(&verdict);
            } else {
                match &verdict {
                    FullnessVerdict::Full(w) => println!(
                        "full: invertible at N = {} (trial {}), scaled sigma_min {:e}, log|det| {:.6}",
                        w.n, w.trial, w.scaled_sigma_min, w.log_abs_det
                    ),
                    FullnessVerdict::ProbablyNotFull { largest_scaled_sigma_min } => {
                        println!("probably not full: every sample singular (largest scaled sigma_min {largest_scaled_sigma_min:e})")
                    }
                }
            }
            Ok(if verdict.is_full() { Outcome::Positive } else { Outcome::Negative })
        }
        Command::Rank { matrix, n_list, eps } => {
            let (sig, body) = split_expr_file(&read(matrix)?)?;
            let m = parse_expr_matrix(&body, sig)?;
            let est = harness::estimate_inner_rank(&m, sig, n_list, eps, cli.seed)?;
            if cli.json {
                print_json(&est);
            } else {
                for r in &est.per_n {
                    println!("N = {:>5}  zero-eigenvalue fraction {:.6}", r.n, r.kernel_fraction);
                }
                println!("extrapolated atom at 0: {:.6}", est.extrapolated_fraction);
                println!("inner rank estimate: {} of {}", est.rho, est.p);
            }
            Ok(Outcome::Positive)
        }
        Command::SaCheck { input, n, trials } => {
            let (sig, e) = input.load()?;
            let tol = cli.tol.unwrap_or(1e-8);
            let verdict = match is_selfadjoint_probabilistic(&e, sig, *n, *trials, tol, cli.seed) {
                Ok(v) => v,
                Err(ExprError::NoSampleInDomain) => return Err(CliError("no sampled point lies in the domain".into())),
                Err(e) => return Err(e.into()),
            };
            match verdict {
                SelfAdjointVerdict::Yes { successful_trials } => {
                    if cli.json {
                        print_json(&json!({ "selfadjoint": true, "successful_trials": successful_trials }));
                    } else {
                        println!("self-adjoint at all {successful_trials} evaluated samples (probabilistic verdict)");
                    }
                    Ok(Outcome::Positive)
                }
                SelfAdjointVerdict::No { witness, relative_defect } => {
                    if cli.json {
                        print_json(&json!({
                            "selfadjoint": false,
                            "relative_defect": relative_defect,
                            "witness": witness.to_json(),
                        }));
                    } else {
                        println!("not self-adjoint: relative defect {relative_defect:e} at an N = {} sample", witness.n());
                    }
                    Ok(Outcome::Negative)
                }
            }
        }
        Command::Nondeg { input, n_list, trials } => {
            let (sig, e) = input.load()?;
            let result = harness::test_nondegeneracy(&e, sig, n_list, *trials, cli.seed);
            match &result {
                Nondegeneracy::Found { n, trial, witness } => {
                    if cli.json {
                        print_json(&json!({ "found": true, "N": n, "trial": trial, "witness": witness.to_json() }));
                    } else {
                        println!("domain witness at N = {n} (trial {trial})");
                    }
                    Ok(Outcome::Positive)
                }
                Nondegeneracy::NotFound => {
                    if cli.json {
                        print_json(&json!({ "found": false }));
                    } else {
                        println!("no domain witness found for N in {n_list:?}");
                    }
                    Ok(Outcome::Negative)
                }
            }
        }
    }
}
