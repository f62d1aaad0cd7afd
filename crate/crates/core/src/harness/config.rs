use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::expr::Signature;
use crate::randmat::SelfAdjointModel;
use crate::spectral::AnalyticLaw;

use super::HarnessError;

/// Largest `kN` for which the linearized route is evaluated.
pub const DEFAULT_TWO_ROUTE_MAX_DIM: usize = 1500;

fn default_eps() -> Vec<f64> {
    vec![0.1, 0.05, 0.01]
}

fn default_two_route_max_dim() -> usize {
    DEFAULT_TWO_ROUTE_MAX_DIM
}

/// What the empirical spectra are compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReference", into = "RawReference")]
pub enum Reference {
    Analytic(AnalyticLaw),
    /// Pooled spectrum at the largest `N` of the run, or of a separate run
    /// at the given dimension.
    Surrogate(Option<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawReference {
    Name(String),
    Law(AnalyticLaw),
}

impl TryFrom<RawReference> for Reference {
    type Error = String;

    fn try_from(raw: RawReference) -> Result<Self, String> {
        match raw {
            RawReference::Law(l) => {
                l.validate()?;
                Ok(Reference::Analytic(l))
            }
            RawReference::Name(s) => s.parse(),
        }
    }
}

impl From<Reference> for RawReference {
    fn from(r: Reference) -> Self {
        match r {
            Reference::Analytic(l) => RawReference::Law(l),
            Reference::Surrogate(None) => RawReference::Name("surrogate".into()),
            Reference::Surrogate(Some(n)) => RawReference::Name(format!("surrogate:{n}")),
        }
    }
}

impl std::str::FromStr for Reference {
    type Err = String;

    /// `surrogate`, `surrogate:<N>`, `semicircle`, `arcsine2`,
    /// `inverse_semicircle`, or `semicircle:<variance>` /
    /// `inverse_semicircle:<variance>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let variance = || -> Result<f64, String> {
            let v = arg.map_or(Ok(1.0), |a| a.parse::<f64>().map_err(|_| format!("bad variance '{a}'")))?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(format!("variance must be positive, got {v}"))
            }
        };
        match name {
            "surrogate" => match arg {
                None => Ok(Reference::Surrogate(None)),
                Some(a) => a
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .map(|n| Reference::Surrogate(Some(n)))
                    .ok_or_else(|| format!("bad surrogate dimension '{a}'")),
            },
            "semicircle" => Ok(Reference::Analytic(AnalyticLaw::Semicircle { variance: variance()? })),
            "inverse_semicircle" => Ok(Reference::Analytic(AnalyticLaw::PushforwardInverse {
                of: Box::new(AnalyticLaw::Semicircle { variance: variance()? }),
            })),
            "arcsine2" if arg.is_none() => Ok(Reference::Analytic(AnalyticLaw::Arcsine2)),
            _ => Err(format!("unknown reference '{s}'")),
        }
    }
}

impl Reference {
    pub fn label(&self) -> String {
        match self {
            Reference::Analytic(l) => serde_json::to_string(l).expect("laws serialize"),
            Reference::Surrogate(None) => "surrogate".into(),
            Reference::Surrogate(Some(n)) => format!("surrogate:{n}"),
        }
    }
}

/// A convergence experiment, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Expression text in the parser grammar.
    pub expression: String,
    pub signature: Signature,
    /// One model per self-adjoint variable; empty means GUE for all.
    #[serde(default)]
    pub selfadj_models: Vec<SelfAdjointModel>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub samples_per_n: usize,
    #[serde(default = "default_eps")]
    pub eps_list: Vec<f64>,
    pub reference: Reference,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Skip the self-adjointness precheck.
    #[serde(default)]
    pub force: bool,
    #[serde(default = "default_two_route_max_dim")]
    pub two_route_max_dim: usize,
}

impl ExperimentConfig {
    pub fn new(expression: impl Into<String>, signature: Signature, n_list: Vec<usize>, samples_per_n: usize, seed: u64) -> Self {
        ExperimentConfig {
            expression: expression.into(),
            signature,
            selfadj_models: Vec::new(),
            n_list,
            samples_per_n,
            eps_list: default_eps(),
            reference: Reference::Surrogate(None),
            seed,
            output_dir: None,
            force: false,
            two_route_max_dim: DEFAULT_TWO_ROUTE_MAX_DIM,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return bad("N_list must be a non-empty list of positive dimensions".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("N_list must be strictly increasing".into());
        }
        if self.samples_per_n == 0 {
            return bad("samples_per_n must be at least 1".into());
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0)) {
            return bad("eps_list entries must be positive".into());
        }
        if !self.selfadj_models.is_empty() && self.selfadj_models.len() != self.signature.d1 {
            return bad(format!("{} self-adjoint models for d1={}", self.selfadj_models.len(), self.signature.d1));
        }
        if self.signature.d1 + self.signature.d2 == 0 {
            return bad("signature needs at least one variable".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
