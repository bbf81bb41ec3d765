//! Flat JSON experiment configuration.
//!
//! Every key is optional in the file. A `preset` key pulls in that case's
//! environment and grids; explicit keys override them. Without a preset the
//! environment keys `n`, `p`, `p_tilde`, `gamma_pre` and `gamma_ft` are
//! required.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::{preset_defaults, GammaMode, PresetCase};
use crate::error::{Error, Result};
use crate::spectra::SpectrumSpec;
use crate::synth::{CoordDist, TaskEnvironment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Analytic,
    MonteCarlo,
    LemmaApprox,
    Plugin,
    TestSet,
}

impl MethodName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(MethodName::Analytic),
            "monte_carlo" | "mc" => Ok(MethodName::MonteCarlo),
            "lemma_approx" | "lemma" => Ok(MethodName::LemmaApprox),
            "plugin" => Ok(MethodName::Plugin),
            "test_set" => Ok(MethodName::TestSet),
            other => Err(Error::validation("methods", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// On-disk form: one flat object, every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<PresetCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_mode: Option<GammaMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ft: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_tilde: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_pre: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_ft: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_c_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coord_dist: Option<CoordDist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<MethodName>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_theta_c: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ConfigFile {
    /// Keys set in `other` replace those in `self`.
    pub fn merged(mut self, other: &ConfigFile) -> ConfigFile {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            case, preset, full, gamma_mode, n, n_ft, p, p_tilde, k_star, gamma_pre, gamma_ft, zeta1, zeta2,
            sigma2, sigma2_tilde, theta_c_norm, coord_dist, xi, master_seed, replicates, lambdas,
            ensemble_lambdas, taus, methods, mc_draws, test_size, fix_theta_c, jitter, workers, out, format
        );
        self
    }
}

/// Fully resolved sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub case: String,
    pub preset: Option<PresetCase>,
    pub full: bool,
    pub gamma_mode: GammaMode,
    pub env: TaskEnvironment,
    pub master_seed: u64,
    pub replicates: usize,
    /// Ridge levels of the fine-tuned comparison family (0 is the ridgeless estimator).
    pub lambdas: Vec<f64>,
    /// Ridge levels at which ensemble curves are traced.
    pub ensemble_lambdas: Vec<f64>,
    pub taus: Vec<f64>,
    pub methods: Vec<MethodName>,
    pub mc_draws: usize,
    pub test_size: usize,
    pub fix_theta_c: bool,
    pub jitter: bool,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_MASTER_SEED: u64 = 20_240_601;

fn require<T: Clone>(value: &Option<T>, field: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::validation(field, "missing (no preset to default from)"))
}

fn clean_grid(field: &str, grid: Vec<f64>, ok: impl Fn(f64) -> bool, range: &str) -> Result<Vec<f64>> {
    if let Some(bad) = grid.iter().find(|v| !v.is_finite() || !ok(**v)) {
        return Err(Error::validation(field, format!("{bad} outside {range}")));
    }
    let mut g = grid;
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    Ok(g)
}

impl ExperimentConfig {
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let full = file.full.unwrap_or(false);
        let gamma_mode = file.gamma_mode.unwrap_or_default();
        let base = match file.preset {
            Some(case) => preset_defaults(case, full, gamma_mode).merged(file),
            None => file.clone(),
        };
        let n = require(&base.n, "n")?;
        let p = require(&base.p, "p")?;
        let k_star = base.k_star.unwrap_or(1);
        let spectrum_pre = SpectrumSpec::full(k_star, require(&base.gamma_pre, "gamma_pre")?, p)
            .map_err(|e| Error::validation("gamma_pre", e.to_string()))?;
        let spectrum_ft = SpectrumSpec::new(k_star, require(&base.gamma_ft, "gamma_ft")?, p, require(&base.p_tilde, "p_tilde")?)
            .map_err(|e| Error::validation("p_tilde", e.to_string()))?;
        let env = TaskEnvironment {
            n,
            n_ft: base.n_ft,
            spectrum_pre,
            spectrum_ft,
            zeta1: base.zeta1.unwrap_or(1e-4),
            zeta2: base.zeta2.unwrap_or(1e-2),
            sigma2: base.sigma2.unwrap_or(1e-2),
            sigma2_tilde: base.sigma2_tilde.unwrap_or(1e-2),
            theta_c_norm: base.theta_c_norm.unwrap_or(1.0),
            coord_dist: base.coord_dist.unwrap_or_default(),
            xi: base.xi,
        };
        let lambdas = clean_grid("lambdas", base.lambdas.clone().unwrap_or_else(|| vec![0.0]), |v| v >= 0.0, "[0, ∞)")?;
        let ensemble_lambdas = clean_grid(
            "ensemble_lambdas",
            base.ensemble_lambdas.clone().unwrap_or_else(|| lambdas.clone()),
            |v| v >= 0.0,
            "[0, ∞)",
        )?;
        let taus = clean_grid("taus", base.taus.clone().unwrap_or_default(), |v| (0.0..=1.0).contains(&v), "[0, 1]")?;
        let mut methods = base.methods.clone().unwrap_or_else(|| vec![MethodName::Analytic]);
        methods.sort();
        methods.dedup();
        let config = ExperimentConfig {
            case: base
                .case
                .clone()
                .or_else(|| base.preset.map(|c| c.label().to_string()))
                .unwrap_or_else(|| "custom".to_string()),
            preset: base.preset,
            full,
            gamma_mode,
            env,
            master_seed: base.master_seed.unwrap_or(DEFAULT_MASTER_SEED),
            replicates: base.replicates.unwrap_or(20),
            lambdas,
            ensemble_lambdas,
            taus,
            methods,
            mc_draws: base.mc_draws.unwrap_or(2000),
            test_size: base.test_size.unwrap_or(1000),
            fix_theta_c: base.fix_theta_c.unwrap_or(false),
            jitter: base.jitter.unwrap_or(false),
            workers: base.workers,
            out: base.out.clone(),
            format: base.format.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.replicates == 0 {
            return Err(Error::validation("replicates", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::validation("methods", "at least one method is required"));
        }
        if self.mc_draws == 0 {
            return Err(Error::validation("mc_draws", "must be at least 1"));
        }
        if self.test_size == 0 {
            return Err(Error::validation("test_size", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::validation("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// The file form with every key written out; resolving it gives back `self`.
    pub fn to_file(&self) -> ConfigFile {
        let e = &self.env;
        ConfigFile {
            case: Some(self.case.clone()),
            preset: self.preset,
            full: Some(self.full),
            gamma_mode: Some(self.gamma_mode),
            n: Some(e.n),
            n_ft: e.n_ft,
            p: Some(e.p()),
            p_tilde: Some(e.spectrum_ft.p_tilde),
            k_star: Some(e.spectrum_pre.k_star),
            gamma_pre: Some(e.spectrum_pre.gamma),
            gamma_ft: Some(e.spectrum_ft.gamma),
            zeta1: Some(e.zeta1),
            zeta2: Some(e.zeta2),
            sigma2: Some(e.sigma2),
            sigma2_tilde: Some(e.sigma2_tilde),
            theta_c_norm: Some(e.theta_c_norm),
            coord_dist: Some(e.coord_dist),
            xi: e.xi,
            master_seed: Some(self.master_seed),
            replicates: Some(self.replicates),
            lambdas: Some(self.lambdas.clone()),
            ensemble_lambdas: Some(self.ensemble_lambdas.clone()),
            taus: Some(self.taus.clone()),
            methods: Some(self.methods.clone()),
            mc_draws: Some(self.mc_draws),
            test_size: Some(self.test_size),
            fix_theta_c: Some(self.fix_theta_c),
            jitter: Some(self.jitter),
            workers: self.workers,
            out: self.out.clone(),
            format: Some(self.format),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("config serializes")
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ConfigFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_file(&parse_config(&text, path)?)
}

pub fn save_config(config: &ExperimentConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config.to_json() + "\n").map_err(|e| Error::io(path, e))
}
