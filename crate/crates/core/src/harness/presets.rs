//! The four simulation cases and their default grids.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{ConfigFile, ExperimentConfig, MethodName};
use super::sweep::{run_sweep, SweepResult};
use crate::error::{Error, Result};
use crate::spectra::SpectrumSpec;
use crate::synth::{CoordDist, TaskEnvironment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetCase {
    A,
    B,
    C,
    D,
}

/// Which tail level the presets use.
///
/// `Prose` gives the pretraining tail `n^-1.5` and the fine-tuning tail
/// `n^-1` in every case. `Caption` puts the case's listed level on both
/// spectra.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    #[default]
    Prose,
    Caption,
}

pub const DEFAULT_P: usize = 2000;
pub const FULL_P: usize = 10_000;
pub const LAMBDA_TRADEOFF: f64 = 1e-4;
pub const LAMBDA_FT_ONLY: f64 = 1e-7;
/// Ridge levels of the fine-tuned family the trade-off curve is compared against.
pub const FAMILY_LAMBDAS: [f64; 4] = [1e-7, 1e-6, 1e-5, 1e-4];
pub const DEFAULT_REPLICATES: usize = 20;

impl PresetCase {
    pub const ALL: [PresetCase; 4] = [PresetCase::A, PresetCase::B, PresetCase::C, PresetCase::D];

    pub fn label(self) -> &'static str {
        match self {
            PresetCase::A => "a",
            PresetCase::B => "b",
            PresetCase::C => "c",
            PresetCase::D => "d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(PresetCase::A),
            "b" => Ok(PresetCase::B),
            "c" => Ok(PresetCase::C),
            "d" => Ok(PresetCase::D),
            other => Err(Error::validation("preset", format!("unknown case `{other}` (expected a, b, c or d)"))),
        }
    }

    pub fn n(self) -> usize {
        match self {
            PresetCase::A | PresetCase::B => 40,
            PresetCase::C | PresetCase::D => 60,
        }
    }

    pub fn caption_gamma(self) -> f64 {
        match self {
            PresetCase::A => 0.025,
            PresetCase::B => 0.004,
            PresetCase::C => 0.017,
            PresetCase::D => 0.0022,
        }
    }

    /// `(γ_pre, γ_ft)`.
    pub fn gammas(self, mode: GammaMode) -> (f64, f64) {
        let n = self.n() as f64;
        match mode {
            GammaMode::Prose => (n.powf(-1.5), 1.0 / n),
            GammaMode::Caption => (self.caption_gamma(), self.caption_gamma()),
        }
    }
}

impl fmt::Display for PresetCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn tau_grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step).round() as usize;
    (0..=count).map(|i| i as f64 / count as f64).collect()
}

/// Defaults of a case as a config file: the environment plus the trade-off grids.
pub fn preset_defaults(case: PresetCase, full: bool, mode: GammaMode) -> ConfigFile {
    let n = case.n();
    let (gamma_pre, gamma_ft) = case.gammas(mode);
    ConfigFile {
        case: Some(case.label().to_string()),
        preset: Some(case),
        full: Some(full),
        gamma_mode: Some(mode),
        n: Some(n),
        p: Some(if full { FULL_P } else { DEFAULT_P }),
        p_tilde: Some(n),
        k_star: Some(1),
        gamma_pre: Some(gamma_pre),
        gamma_ft: Some(gamma_ft),
        zeta1: Some(1e-4),
        zeta2: Some(1e-2),
        sigma2: Some(1e-2),
        sigma2_tilde: Some(1e-2),
        theta_c_norm: Some(1.0),
        replicates: Some(DEFAULT_REPLICATES),
        lambdas: Some(FAMILY_LAMBDAS.to_vec()),
        ensemble_lambdas: Some(vec![LAMBDA_TRADEOFF]),
        taus: Some(tau_grid(0.05)),
        methods: Some(vec![MethodName::Analytic]),
        ..ConfigFile::default()
    }
}

/// Environment used for the ordering checks: both spectra share `k* = 1`
/// and the tail `1/n`, the fine-tuning spectrum has `p̃ = 2n` nonzero
/// directions, and the noise levels sit inside the regime the ordering
/// results assume.
pub fn theory_environment(n: usize, p: usize) -> Result<TaskEnvironment> {
    let gamma = 1.0 / n as f64;
    let env = TaskEnvironment {
        n,
        n_ft: None,
        spectrum_pre: SpectrumSpec::full(1, gamma, p)?,
        spectrum_ft: SpectrumSpec::new(1, gamma, p, 2 * n)?,
        zeta1: 1e-4,
        zeta2: 0.1,
        sigma2: 0.02,
        sigma2_tilde: 0.1,
        theta_c_norm: 1.0,
        coord_dist: CoordDist::Gaussian,
        xi: Some(0.5),
    };
    env.validate()?;
    Ok(env)
}

/// Run-level knobs applied on top of a case.
#[derive(Debug, Clone, Default)]
pub struct PresetOptions {
    /// Extra keys merged over both runs (seed, replicates, methods, ...).
    pub overrides: ConfigFile,
    pub lambda_tradeoff: Option<f64>,
    pub lambda_ft: Option<f64>,
}

/// The trade-off run and the fine-tuning-only run of one case.
pub fn preset_configs(case: PresetCase, opts: &PresetOptions) -> Result<[ExperimentConfig; 2]> {
    let o = &opts.overrides;
    let base = preset_defaults(case, o.full.unwrap_or(false), o.gamma_mode.unwrap_or_default()).merged(o);
    let lt = opts.lambda_tradeoff.unwrap_or(LAMBDA_TRADEOFF);
    let lf = opts.lambda_ft.unwrap_or(LAMBDA_FT_ONLY);
    let mut family = base.lambdas.clone().unwrap_or_default();
    family.push(lt);
    let tradeoff = ConfigFile {
        lambdas: Some(family),
        ensemble_lambdas: Some(vec![lt]),
        ..base.clone()
    };
    let ft_only = ConfigFile {
        lambdas: Some(vec![lf]),
        ensemble_lambdas: Some(vec![lf]),
        ..base
    };
    Ok([ExperimentConfig::from_file(&tradeoff)?, ExperimentConfig::from_file(&ft_only)?])
}

#[derive(Debug, Clone)]
pub struct PresetRun {
    pub case: PresetCase,
    pub tradeoff: SweepResult,
    pub ft_only: SweepResult,
}

pub fn run_preset(case: PresetCase, opts: &PresetOptions) -> Result<PresetRun> {
    let [t, f] = preset_configs(case, opts)?;
    Ok(PresetRun {
        case,
        tradeoff: run_sweep(&t)?,
        ft_only: run_sweep(&f)?,
    })
}
