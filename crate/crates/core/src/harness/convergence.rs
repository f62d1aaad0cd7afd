use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{self, DEFAULT_INV_TOL};
use crate::expr::{is_selfadjoint_probabilistic, RationalExpr, SelfAdjointVerdict};
use crate::linalg;
use crate::linearize::{linearize, make_selfadjoint_rep, SaLinRep};
use crate::parser::{parse_expr, render};
use crate::randmat::{sample_tuple_indexed, EnsembleSpec};
use crate::spectral::{self, atom_fraction, compress_f_eps, CdfQueryable, EmpiricalSpectrum, HermitianEigen};

use super::config::{ExperimentConfig, Reference};
use super::{worker_pool, HarnessError};

const SA_CHECK_N: usize = 4;
const SA_CHECK_TRIALS: usize = 10;
const SA_CHECK_TOL: f64 = 1e-8;
const CDF_TABLE_POINTS: usize = 201;
const SURROGATE_SEED_MASK: u64 = 0x5eed_5eed_5eed_5eed;

/// Eigenvalues closer than this count as equal when comparing the routes.
pub const TWO_ROUTE_RESOLUTION: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoRouteRecord {
    pub eps: f64,
    /// `min |eig(Q)| > eps`, so `f_ε` coincides with inversion.
    pub exact_regime: bool,
    /// Kolmogorov distance at abscissa resolution `TWO_ROUTE_RESOLUTION`.
    pub ks_direct_vs_linearized: f64,
    /// Plain Kolmogorov distance; `1/N` per eigenvalue pair split by rounding.
    pub ks_unresolved: f64,
    pub max_eigenvalue_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub sample: usize,
    pub in_domain: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum_file: Option<String>,
    /// Kolmogorov distance to the reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_abs_pencil_eig: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub two_route: Vec<TwoRouteRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_route_skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub eps: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub in_domain: usize,
    pub all_out_of_domain: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ks: Option<f64>,
    /// Fraction of pooled eigenvalues in `[-eps, eps]`.
    pub atom_at_zero: Vec<AtomRecord>,
    /// With a surrogate reference: KS between pooled spectra at this and
    /// the previous dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_to_previous_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cdf_file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub expression: String,
    pub signature: String,
    pub seed: u64,
    pub reference: String,
    pub surrogate: bool,
    /// `checked` or `forced`.
    pub selfadjoint: String,
    pub samples: Vec<SampleRecord>,
    pub per_n: Vec<DimensionSummary>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn summary(&self, n: usize) -> Option<&DimensionSummary> {
        self.per_n.iter().find(|s| s.n == n)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

struct SampleOutcome {
    record: SampleRecord,
    spectrum: Option<EmpiricalSpectrum>,
}

/// Runs the experiment; writes `report.json` and CSVs when `output_dir`
/// is set. Output is a deterministic function of the config.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    config.validate()?;
    let expr = parse_expr(&config.expression, config.signature)?;
    if !expr.is_square() {
        return Err(HarnessError::NotSquare(expr.shape().to_string()));
    }
    let selfadjoint = if config.force {
        "forced".to_string()
    } else {
        match is_selfadjoint_probabilistic(&expr, config.signature, SA_CHECK_N, SA_CHECK_TRIALS, SA_CHECK_TOL, config.seed)? {
            SelfAdjointVerdict::Yes { .. } => "checked".to_string(),
            SelfAdjointVerdict::No { relative_defect, .. } => return Err(HarnessError::NotSelfAdjoint(relative_defect)),
        }
    };
    let sa = make_selfadjoint_rep(&linearize(&expr, config.signature)).expect("square expression");
    let out_dir = config.output_dir.as_deref();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e.to_string()))?;
    }

    let pool = worker_pool()?;
    let surrogate_run = match config.reference {
        Reference::Surrogate(Some(n)) => {
            // Independent of the main run even when `n` is in `N_list`.
            let mut separate = config.clone();
            separate.seed = config.seed ^ SURROGATE_SEED_MASK;
            let outcome = pool.install(|| run_dimension(&separate, &expr, &sa, n, None, None))?;
            Some(pool_spectra(&outcome))
        }
        _ => None,
    };

    let mut per_dim: Vec<(usize, Vec<SampleOutcome>)> = Vec::new();
    for &n in &config.n_list {
        let reference = match &config.reference {
            Reference::Analytic(l) => Some(CdfQueryable::Analytic(l.clone())),
            Reference::Surrogate(Some(_)) => surrogate_run.clone().map(CdfQueryable::Empirical),
            Reference::Surrogate(None) => None,
        };
        let outcome = pool.install(|| run_dimension(config, &expr, &sa, n, reference.as_ref(), out_dir))?;
        per_dim.push((n, outcome));
    }

    // With the largest run as reference, distances are filled in afterwards.
    if config.reference == Reference::Surrogate(None) {
        let (_, last) = per_dim.last().expect("N_list is non-empty");
        let limit = CdfQueryable::Empirical(pool_spectra(last));
        for (_, outcomes) in per_dim.iter_mut() {
            for o in outcomes.iter_mut() {
                if let Some(s) = &o.spectrum {
                    o.record.ks = Some(spectral::kolmogorov_distance(&CdfQueryable::Empirical(s.clone()), &limit));
                }
            }
        }
    }

    let mut samples = Vec::new();
    let mut per_n = Vec::new();
    let mut warnings = Vec::new();
    let mut previous: Option<EmpiricalSpectrum> = None;
    for (n, outcomes) in per_dim {
        let pooled = pool_spectra(&outcomes);
        let in_domain = outcomes.iter().filter(|o| o.record.in_domain).count();
        if in_domain == 0 {
            warnings.push(format!("AllSamplesOutOfDomain({n})"));
        }
        let ks: Vec<f64> = outcomes.iter().filter_map(|o| o.record.ks).collect();
        let atom_at_zero = config
            .eps_list
            .iter()
            .map(|&eps| AtomRecord { eps, fraction: if pooled.dim() == 0 { 0.0 } else { atom_fraction(&pooled, 0.0, eps) } })
            .collect();
        let ks_to_previous_n = match (&config.reference, &previous) {
            (Reference::Surrogate(_), Some(prev)) if pooled.dim() > 0 => Some(spectral::kolmogorov_distance(
                &CdfQueryable::Empirical(prev.clone()),
                &CdfQueryable::Empirical(pooled.clone()),
            )),
            _ => None,
        };
        let cdf_file = match out_dir {
            Some(dir) if pooled.dim() > 0 => Some(write_cdf_table(dir, n, &pooled)?),
            _ => None,
        };
        per_n.push(DimensionSummary {
            n,
            in_domain,
            all_out_of_domain: in_domain == 0,
            mean_ks: (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64),
            max_ks: ks.iter().copied().reduce(f64::max),
            atom_at_zero,
            ks_to_previous_n,
            cdf_file,
        });
        if pooled.dim() > 0 {
            previous = Some(pooled);
        }
        samples.extend(outcomes.into_iter().map(|o| o.record));
    }

    let report = ConvergenceReport {
        expression: render(&expr),
        signature: config.signature.to_string(),
        seed: config.seed,
        reference: config.reference.label(),
        surrogate: matches!(config.reference, Reference::Surrogate(_)),
        selfadjoint,
        samples,
        per_n,
        warnings,
    };
    if let Some(dir) = out_dir {
        let path = dir.join("report.json");
        fs::write(&path, report.to_json_pretty()).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
    }
    Ok(report)
}

fn pool_spectra(outcomes: &[SampleOutcome]) -> EmpiricalSpectrum {
    EmpiricalSpectrum::new(outcomes.iter().filter_map(|o| o.spectrum.as_ref()).flat_map(|s| s.values().iter().copied()).collect())
}

fn run_dimension(
    config: &ExperimentConfig,
    expr: &RationalExpr,
    sa: &SaLinRep,
    n: usize,
    reference: Option<&CdfQueryable>,
    out_dir: Option<&Path>,
) -> Result<Vec<SampleOutcome>, HarnessError> {
    let spec = EnsembleSpec { signature: config.signature, n, selfadj_models: config.selfadj_models.clone(), seed: config.seed };
    (0..config.samples_per_n)
        .into_par_iter()
        .map(|sample| run_sample(config, expr, sa, &spec, sample, reference, out_dir))
        .collect()
}

fn run_sample(
    config: &ExperimentConfig,
    expr: &RationalExpr,
    sa: &SaLinRep,
    spec: &EnsembleSpec,
    sample: usize,
    reference: Option<&CdfQueryable>,
    out_dir: Option<&Path>,
) -> Result<SampleOutcome, HarnessError> {
    linalg::ensure_sequential();
    let n = spec.n;
    let mut record = SampleRecord {
        n,
        sample,
        in_domain: false,
        domain_failure: None,
        spectrum_file: None,
        ks: None,
        min_abs_pencil_eig: None,
        two_route: Vec::new(),
        two_route_skipped: None,
    };
    let point = sample_tuple_indexed(spec, sample as u64);
    let value = match eval::eval_expr(expr, &point, DEFAULT_INV_TOL) {
        Ok(v) => v,
        Err(e) => {
            record.domain_failure = Some(e.to_string());
            return Ok(SampleOutcome { record, spectrum: None });
        }
    };
    let spectrum = match spectral::hermitian_eigenvalues(&value) {
        Ok(s) => s,
        Err(e) => {
            record.domain_failure = Some(format!("evaluation is not Hermitian: {e}"));
            return Ok(SampleOutcome { record, spectrum: None });
        }
    };
    record.in_domain = true;
    if let Some(r) = reference {
        record.ks = Some(spectral::kolmogorov_distance(&CdfQueryable::Empirical(spectrum.clone()), r));
    }
    if let Some(dir) = out_dir {
        let name = format!("spectrum_N{n}_s{sample}.csv");
        let path = dir.join(&name);
        fs::write(&path, spectrum.to_csv()).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
        record.spectrum_file = Some(name);
    }

    let dim = sa.k() * n;
    if dim > config.two_route_max_dim {
        record.two_route_skipped = Some(format!("kN = {dim} exceeds {}", config.two_route_max_dim));
    } else {
        let q = eval::eval_pencil(sa.pencil(), &point);
        let eig = HermitianEigen::new(&q).map_err(|e| HarnessError::Numerical(e.to_string()))?;
        let w = linalg::kron(sa.w().as_ref(), linalg::identity(n).as_ref());
        let y = eig.project(&w);
        let min_abs = eig.min_abs();
        record.min_abs_pencil_eig = Some(min_abs);
        let direct = CdfQueryable::Empirical(spectrum.clone());
        for &eps in &config.eps_list {
            let m = compress_f_eps(eig.values(), &y, eps);
            let lin = EmpiricalSpectrum::new(linalg::hermitian_eigenvalues(m.as_ref()));
            record.two_route.push(TwoRouteRecord {
                eps,
                exact_regime: min_abs > eps,
                ks_direct_vs_linearized: spectral::kolmogorov_distance_within(&spectrum, &lin, TWO_ROUTE_RESOLUTION),
                max_eigenvalue_gap: spectral::max_sorted_gap(&spectrum, &lin),
                ks_unresolved: spectral::kolmogorov_distance(&direct, &CdfQueryable::Empirical(lin)),
            });
        }
    }
    Ok(SampleOutcome { record, spectrum: Some(spectrum) })
}

fn write_cdf_table(dir: &Path, n: usize, pooled: &EmpiricalSpectrum) -> Result<String, HarnessError> {
    let v = pooled.values();
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let points: Vec<(f64, f64)> = (0..CDF_TABLE_POINTS)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (CDF_TABLE_POINTS - 1) as f64;
            (t, pooled.cdf(t))
        })
        .collect();
    let name = format!("cdf_N{n}.csv");
    let path = dir.join(&name);
    fs::write(&path, spectral::cdf_csv(&points)).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
    Ok(name)
}
