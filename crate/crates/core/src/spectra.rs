//! Diagonal covariance spectra with a spike/tail block structure.
//!
//! A spectrum is stored in compact form: `k_star` unit eigenvalues, then
//! `p_tilde - k_star` copies of `gamma`, then zeros up to dimension `p`.
//! Nothing downstream materializes a dense diagonal matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact description of a block spectrum, serialized as
/// `{k_star, gamma, p, p_tilde}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub k_star: usize,
    pub gamma: f64,
    pub p: usize,
    pub p_tilde: usize,
}

impl SpectrumSpec {
    pub fn new(k_star: usize, gamma: f64, p: usize, p_tilde: usize) -> Result<Self> {
        let spec = SpectrumSpec {
            k_star,
            gamma,
            p,
            p_tilde,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Full-support spectrum (`p_tilde == p`), the pretraining shape.
    pub fn full(k_star: usize, gamma: f64, p: usize) -> Result<Self> {
        Self::new(k_star, gamma, p, p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidSpectrum(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        if self.gamma > 1.0 {
            return Err(Error::InvalidSpectrum(format!(
                "gamma = {} exceeds the unit spike; eigenvalues would not be non-increasing",
                self.gamma
            )));
        }
        if self.k_star == 0 {
            return Err(Error::InvalidSpectrum("k_star must be at least 1".into()));
        }
        if self.k_star > self.p_tilde {
            return Err(Error::InvalidSpectrum(format!(
                "k_star = {} exceeds p_tilde = {}",
                self.k_star, self.p_tilde
            )));
        }
        if self.p_tilde > self.p {
            return Err(Error::InvalidSpectrum(format!(
                "p_tilde = {} exceeds p = {}",
                self.p_tilde, self.p
            )));
        }
        Ok(())
    }
}

/// Materialize the eigenvalue vector of a block spectrum.
pub fn build_eigenvalues(spec: &SpectrumSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(Spectrum::Block(*spec).to_vec())
}

/// A non-increasing eigenvalue profile: block form, or an explicit list as an
/// escape hatch for non-block shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    Block(SpectrumSpec),
    Explicit { values: Vec<f64>, suffix: Vec<f64> },
}

impl From<SpectrumSpec> for Spectrum {
    fn from(spec: SpectrumSpec) -> Self {
        Spectrum::Block(spec)
    }
}

impl Spectrum {
    pub fn block(spec: SpectrumSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Spectrum::Block(spec))
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpectrum("empty eigenvalue list".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpectrum(
                "eigenvalues must be finite and non-negative".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidSpectrum(
                "eigenvalues must be non-increasing".into(),
            ));
        }
        let mut suffix = vec![0.0; values.len() + 1];
        for i in (0..values.len()).rev() {
            suffix[i] = suffix[i + 1] + values[i];
        }
        Ok(Spectrum::Explicit { values, suffix })
    }

    pub fn dim(&self) -> usize {
        match self {
            Spectrum::Block(s) => s.p,
            Spectrum::Explicit { values, .. } => values.len(),
        }
    }

    /// Eigenvalue at zero-based position `i`.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Spectrum::Block(s) => {
                if i < s.k_star {
                    1.0
                } else if i < s.p_tilde {
                    s.gamma
                } else {
                    0.0
                }
            }
            Spectrum::Explicit { values, .. } => values.get(i).copied().unwrap_or(0.0),
        }
    }

    /// Sum of the eigenvalues at zero-based positions `k..p`, i.e. `Σ_{j>k} λ_j`.
    pub fn tail_sum(&self, k: usize) -> f64 {
        match self {
            Spectrum::Block(s) => {
                let ones = s.k_star.saturating_sub(k) as f64;
                let tail = s.p_tilde.saturating_sub(k.max(s.k_star)) as f64;
                ones + tail * s.gamma
            }
            Spectrum::Explicit { suffix, .. } => suffix.get(k).copied().unwrap_or(0.0),
        }
    }

    pub fn trace(&self) -> f64 {
        self.tail_sum(0)
    }

    /// Number of non-zero eigenvalues.
    pub fn support(&self) -> usize {
        match self {
            Spectrum::Block(s) if s.gamma > 0.0 => s.p_tilde,
            Spectrum::Block(s) => s.k_star,
            Spectrum::Explicit { values, .. } => values.iter().take_while(|v| **v > 0.0).count(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Spectrum::Block(s) => (0..s.p).map(|i| self.value(i)).collect(),
            Spectrum::Explicit { values, .. } => values.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Spectrum> {
        Spectrum::explicit(self.to_vec().into_iter().map(|v| v * factor).collect())
    }
}

/// Effective rank `r_k = Σ_{j>k} λ_j / λ_{k+1}` (one-based eigenvalue indices).
pub fn effective_rank(spectrum: &Spectrum, k: usize) -> Result<f64> {
    if k >= spectrum.dim() {
        return Err(Error::UndefinedRank { k });
    }
    let next = spectrum.value(k);
    if next <= 0.0 {
        return Err(Error::UndefinedRank { k });
    }
    Ok(spectrum.tail_sum(k) / next)
}

/// Critical index `inf { k ≥ 0 : r_k ≥ b·n }`, or `None` when no index with a
/// positive next eigenvalue qualifies. Ties, up to rounding, count as
/// satisfying the bound.
pub fn critical_index(spectrum: &Spectrum, b: f64, n: usize) -> Result<Option<usize>> {
    if b.is_nan() || b <= 0.0 || n == 0 {
        return Err(Error::validation("b, n", "critical index needs b > 0 and n ≥ 1"));
    }
    let threshold = b * n as f64;
    for k in 0..spectrum.dim() {
        if spectrum.value(k) <= 0.0 {
            break;
        }
        if effective_rank(spectrum, k)? >= threshold * (1.0 - TIE_TOLERANCE) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Relative slack under which `r_k` and `b·n` are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Default `b` in the critical-index definition.
pub const DEFAULT_B: f64 = 1.0;
