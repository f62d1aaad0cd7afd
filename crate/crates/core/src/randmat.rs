//! Seeded samplers for Gaussian Hermitian and Haar unitary matrices.
//!
//! Every draw is a pure function of a key `(seed, N, slot, sample)`: the key
//! is the 256-bit ChaCha8 key itself, so streams for different variables or
//! samples never overlap and can be produced in any order or thread.

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eval::MatrixTuple;
use crate::expr::Signature;
use crate::linalg::{self, CMat};

const UNITARY_SLOT_BASE: u64 = 1 << 32;

pub fn rng_for(seed: u64, n: usize, slot: u64, sample: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, n as u64, slot, sample]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// GUE with variance profile `scale/N`: real diagonal `N(0, scale/N)`,
/// off-diagonal real and imaginary parts `N(0, scale/(2N))`.
pub fn gue_from_rng(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> CMat {
    let diag_sd = (scale / n as f64).sqrt();
    let off_sd = (scale / (2.0 * n as f64)).sqrt();
    let mut m = linalg::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c64::new(diag_sd * normal(rng), 0.0);
        for j in i + 1..n {
            let z = c64::new(off_sd * normal(rng), off_sd * normal(rng));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Phase-corrected QR of a complex Ginibre matrix.
pub fn haar_from_rng(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    linalg::ensure_sequential();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = linalg::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            g[(i, j)] = c64::new(s * normal(rng), s * normal(rng));
        }
    }
    let qr = g.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn sample_hermitian_gue(n: usize, seed: u64) -> CMat {
    gue_from_rng(n, 1.0, &mut rng_for(seed, n, 0, 0))
}

pub fn sample_haar_unitary(n: usize, seed: u64) -> CMat {
    haar_from_rng(n, &mut rng_for(seed, n, UNITARY_SLOT_BASE, 0))
}

/// Named eigenvalue laws for Haar-conjugated Hermitian matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SpectrumSampler {
    Semicircle { variance: f64 },
    Uniform { a: f64, b: f64 },
    /// Law of `2cos θ` with θ uniform.
    Arcsine,
}

impl SpectrumSampler {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            // First coordinate of a uniform point in the disk of radius 2σ.
            SpectrumSampler::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt() * rng.random::<f64>().sqrt();
                r * (std::f64::consts::TAU * rng.random::<f64>()).cos()
            }
            SpectrumSampler::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            SpectrumSampler::Arcsine => 2.0 * (std::f64::consts::TAU * rng.random::<f64>()).cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SelfAdjointModel {
    GaussianHermitian {
        #[serde(default = "unit_variance")]
        variance: f64,
    },
    FixedSpectrumHaarConjugated { spectrum: SpectrumSampler },
}

fn unit_variance() -> f64 {
    1.0
}

impl Default for SelfAdjointModel {
    fn default() -> Self {
        SelfAdjointModel::GaussianHermitian { variance: 1.0 }
    }
}

impl SelfAdjointModel {
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> CMat {
        match self {
            SelfAdjointModel::GaussianHermitian { variance } => gue_from_rng(n, *variance, rng),
            SelfAdjointModel::FixedSpectrumHaarConjugated { spectrum } => {
                let v = haar_from_rng(n, rng);
                let lambda: Vec<f64> = (0..n).map(|_| spectrum.draw(rng)).collect();
                let mut vd = v.clone();
                for (j, &l) in lambda.iter().enumerate() {
                    for i in 0..n {
                        vd[(i, j)] *= l;
                    }
                }
                linalg::symmetrize((&vd * v.adjoint()).as_ref())
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            SelfAdjointModel::GaussianHermitian { variance } if !(*variance > 0.0) => {
                Err(format!("variance must be positive, got {variance}"))
            }
            SelfAdjointModel::FixedSpectrumHaarConjugated { spectrum: SpectrumSampler::Semicircle { variance } }
                if !(*variance > 0.0) =>
            {
                Err(format!("variance must be positive, got {variance}"))
            }
            _ => Ok(()),
        }
    }
}

/// Distribution of one random tuple. `selfadj_models` may be empty (all
/// GUE) or list one model per self-adjoint variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub signature: Signature,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub selfadj_models: Vec<SelfAdjointModel>,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn standard(signature: Signature, n: usize, seed: u64) -> Self {
        EnsembleSpec { signature, n, selfadj_models: Vec::new(), seed }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("N must be at least 1".into());
        }
        if !self.selfadj_models.is_empty() && self.selfadj_models.len() != self.signature.d1 {
            return Err(format!(
                "{} self-adjoint models given for d1={}",
                self.selfadj_models.len(),
                self.signature.d1
            ));
        }
        self.selfadj_models.iter().try_for_each(SelfAdjointModel::validate)
    }

    pub fn model(&self, j: usize) -> SelfAdjointModel {
        self.selfadj_models.get(j).cloned().unwrap_or_default()
    }
}

pub fn sample_tuple(spec: &EnsembleSpec) -> MatrixTuple {
    sample_tuple_indexed(spec, 0)
}

/// Sample number `sample` of the ensemble; variables draw from disjoint
/// streams so their matrices are independent.
pub fn sample_tuple_indexed(spec: &EnsembleSpec, sample: u64) -> MatrixTuple {
    let n = spec.n;
    let xs = (0..spec.signature.d1)
        .map(|j| spec.model(j).draw(n, &mut rng_for(spec.seed, n, j as u64, sample)))
        .collect();
    let us = (0..spec.signature.d2)
        .map(|j| haar_from_rng(n, &mut rng_for(spec.seed, n, UNITARY_SLOT_BASE + j as u64, sample)))
        .collect();
    MatrixTuple::general(n, xs, us).expect("sampled matrices have the requested size")
}

/// GUE/Haar tuple used by the probabilistic testers.
pub fn standard_tuple(signature: Signature, n: usize, seed: u64, sample: u64) -> MatrixTuple {
    sample_tuple_indexed(&EnsembleSpec::standard(signature, n, seed), sample)
}

/// I.i.d. complex Gaussian matrices, for probing pencils off the
/// Hermitian/unitary manifold.
pub fn general_complex_tuple(signature: Signature, n: usize, seed: u64, sample: u64) -> MatrixTuple {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let draw = |slot: u64| {
        let mut rng = rng_for(seed, n, slot, sample);
        let mut m = linalg::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = c64::new(s * normal(&mut rng), s * normal(&mut rng));
            }
        }
        m
    };
    let xs = (0..signature.d1).map(|j| draw((2 * UNITARY_SLOT_BASE) + j as u64)).collect();
    let us = (0..signature.d2).map(|j| draw((3 * UNITARY_SLOT_BASE) + j as u64)).collect();
    MatrixTuple::general(n, xs, us).expect("sampled matrices have the requested size")
}
