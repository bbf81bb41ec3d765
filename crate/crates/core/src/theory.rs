//! Optimal ridge level and ensemble weight, derivative sign tests, ordering
//! checks over seeds and the tail-Gram eigenvalue band check.
//!
//! With `s = nλ`, `R = X̃X̃ᵀ + sI`, `M̃ = X̃Σ̃X̃ᵀ` and the traces
//! `T1 = tr(R⁻¹M̃)`, `T2 = tr(R⁻²M̃)`, `T3 = tr(R⁻¹X̃X̃ᵀR⁻¹M̃)`, the objectives
//! and their derivatives are
//!
//! ```text
//! g(τ)  = ζ₂[tr Σ̃ − 2τT1 + τ²T3] + τ²σ̃²T2       g'(τ) = 2τ(ζ₂T3 + σ̃²T2) − 2ζ₂T1
//! J(τ)  = g(τ) + τ²(ζ₂T3 + σ̃²T2)                J'(τ) = 4τ(ζ₂T3 + σ̃²T2) − 2ζ₂T1
//! f(λ)  = g(1)                                   f'(λ) = 2n(ζ₂s − σ̃²) tr(R⁻³M̃)
//! h(λ)  = J(1)                                   h'(λ) = 2n tr(R⁻³[(ζ₂s − 2σ̃²)I − ζ₂X̃X̃ᵀ]M̃)
//! ```
//!
//! `J` and `h` stand for the summed two-task risk with the pretraining
//! covariance replaced by `Σ̃` on the shared support, which is exact when
//! both spectra carry the same tail level.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, SolveOptions};
use crate::linalg::weighted_cross;
use crate::risk::{FtSide, ResolventTraces, RiskEngine, ThetaC};
use crate::rng::{derive_seed, stream, Purpose};
use crate::spectra::{critical_index, effective_rank, Spectrum, SpectrumSpec, DEFAULT_B};
use crate::synth::{sample_design, sample_designs, CoordDist, TaskEnvironment};

/// `λ' = σ̃²/(nζ₂)`.
pub fn lambda_prime(env: &TaskEnvironment) -> Result<f64> {
    if env.zeta2.is_nan() || env.zeta2 <= 0.0 {
        return Err(Error::validation("zeta2", "must be > 0 for λ'"));
    }
    if env.n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    Ok(env.sigma2_tilde / (env.n_finetune() as f64 * env.zeta2))
}

/// A derivative value with the magnitude it should be compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derivative {
    pub value: f64,
    /// Sum of the absolute values of the contributing pieces.
    pub scale: f64,
}

impl Derivative {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.value / self.scale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Fine-tuning risk.
    Ft,
    /// Pretraining plus fine-tuning risk.
    Sum,
}

/// Closed-form theory quantities for one fine-tuning design.
pub struct FtTheory<'a> {
    side: FtSide,
    env: &'a TaskEnvironment,
}

impl<'a> FtTheory<'a> {
    pub fn new(x_tilde: &DMatrix<f64>, env: &'a TaskEnvironment, opts: SolveOptions) -> Result<Self> {
        lambda_prime(env)?;
        Ok(FtTheory {
            side: FtSide::new(x_tilde, env, opts.jitter)?,
            env,
        })
    }

    pub fn lambda_prime(&self) -> Result<f64> {
        lambda_prime(self.env)
    }

    fn n(&self) -> f64 {
        self.side.rows() as f64
    }

    pub fn traces(&self, lambda: f64) -> Result<ResolventTraces> {
        self.side.traces(lambda)
    }

    /// `τ'(λ) = ζ₂T1 / (σ̃²T2 + ζ₂T3)`.
    pub fn tau_prime(&self, lambda: f64) -> Result<f64> {
        let t = self.traces(lambda)?;
        let (z, s) = (self.env.zeta2, self.env.sigma2_tilde);
        Ok(z * t.t1 / (s * t.t2 + z * t.t3))
    }

    pub fn ft_objective(&self, lambda: f64, tau: f64) -> Result<f64> {
        let t = self.traces(lambda)?;
        let (z, s) = (self.env.zeta2, self.env.sigma2_tilde);
        Ok(z * (self.side.trace_ft() - 2.0 * tau * t.t1 + tau * tau * t.t3) + tau * tau * s * t.t2)
    }

    pub fn sum_objective(&self, lambda: f64, tau: f64) -> Result<f64> {
        let t = self.traces(lambda)?;
        let (z, s) = (self.env.zeta2, self.env.sigma2_tilde);
        Ok(self.ft_objective(lambda, tau)? + tau * tau * (z * t.t3 + s * t.t2))
    }

    pub fn objective(&self, objective: Objective, lambda: f64, tau: f64) -> Result<f64> {
        match objective {
            Objective::Ft => self.ft_objective(lambda, tau),
            Objective::Sum => self.sum_objective(lambda, tau),
        }
    }

    /// `f'(λ)`.
    pub fn ft_dlambda(&self, lambda: f64) -> Result<Derivative> {
        let t = self.traces(lambda)?;
        let (z, s, n) = (self.env.zeta2, self.env.sigma2_tilde, self.n());
        Ok(Derivative {
            value: 2.0 * n * (z * t.shift - s) * t.r3,
            scale: 2.0 * n * (z * t.shift + s) * t.r3.abs(),
        })
    }

    /// `h'(λ)`.
    pub fn sum_dlambda(&self, lambda: f64) -> Result<Derivative> {
        let t = self.traces(lambda)?;
        let (z, s, n) = (self.env.zeta2, self.env.sigma2_tilde, self.n());
        Ok(Derivative {
            value: 2.0 * n * ((z * t.shift - 2.0 * s) * t.r3 - z * t.r3g),
            scale: 2.0 * n * ((z * t.shift + 2.0 * s) * t.r3.abs() + z * t.r3g.abs()),
        })
    }

    /// `g'(τ)` or `J'(τ)`.
    pub fn dtau(&self, lambda: f64, tau: f64, objective: Objective) -> Result<Derivative> {
        let t = self.traces(lambda)?;
        let (z, s) = (self.env.zeta2, self.env.sigma2_tilde);
        let curvature = z * t.t3 + s * t.t2;
        let factor = match objective {
            Objective::Ft => 2.0,
            Objective::Sum => 4.0,
        };
        Ok(Derivative {
            value: factor * tau * curvature - 2.0 * z * t.t1,
            scale: (factor * tau * curvature).abs() + 2.0 * z * t.t1.abs(),
        })
    }
}

pub fn tau_prime(x_tilde: &DMatrix<f64>, env: &TaskEnvironment, lambda: f64, opts: SolveOptions) -> Result<f64> {
    FtTheory::new(x_tilde, env, opts)?.tau_prime(lambda)
}

pub fn ft_risk_dlambda(x_tilde: &DMatrix<f64>, env: &TaskEnvironment, lambda: f64, opts: SolveOptions) -> Result<Derivative> {
    FtTheory::new(x_tilde, env, opts)?.ft_dlambda(lambda)
}

pub fn sum_risk_dlambda(x_tilde: &DMatrix<f64>, env: &TaskEnvironment, lambda: f64, opts: SolveOptions) -> Result<Derivative> {
    FtTheory::new(x_tilde, env, opts)?.sum_dlambda(lambda)
}

pub fn ensemble_risk_dtau(
    x_tilde: &DMatrix<f64>,
    env: &TaskEnvironment,
    lambda: f64,
    tau: f64,
    objective: Objective,
    opts: SolveOptions,
) -> Result<Derivative> {
    FtTheory::new(x_tilde, env, opts)?.dtau(lambda, tau, objective)
}

/// Relative slack below which two risks count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Grid argmin of the exact fine-tuning risk over τ ∈ [0, 1]. The risk is a
/// quadratic in τ, so it is evaluated exactly at τ = 0, ½, 1 and
/// interpolated on the grid.
pub fn grid_argmin_tau(engine: &RiskEngine, lambda: f64, step: f64) -> Result<f64> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::validation("step", format!("must lie in (0, 1], got {step}")));
    }
    let at = |tau| engine.analytic(EstimatorKind::Ensemble { lambda, tau }).map(|r| r.l_ft());
    let (f0, fh, f1) = (at(0.0)?, at(0.5)?, at(1.0)?);
    let curve = |t: f64| f0 * (1.0 - t) * (1.0 - 2.0 * t) + fh * 4.0 * t * (1.0 - t) + f1 * t * (2.0 * t - 1.0);
    let count = (1.0 / step).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=count {
        let tau = (i as f64 * step).min(1.0);
        let v = curve(tau);
        if v < best.0 {
            best = (v, tau);
        }
    }
    Ok(best.1)
}

/// Grids for [`verify_theorem_orderings`]. Empty λ lists fall back to the
/// defaults `{λ'/2, λ', 2λ'}`, `{λ'}` and `{0, λ'/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingConfig {
    pub master_seed: u64,
    pub seeds: usize,
    #[serde(default)]
    pub item1_lambdas: Vec<f64>,
    #[serde(default)]
    pub item2_lambdas: Vec<f64>,
    #[serde(default)]
    pub item3_lambdas: Vec<f64>,
    /// Extra τ values; each item also always checks its own threshold τ.
    #[serde(default)]
    pub tau_grid: Vec<f64>,
    /// Step of the τ grid used for the stationarity check; 0 disables it.
    #[serde(default)]
    pub argmin_step: f64,
}

impl OrderingConfig {
    pub fn new(master_seed: u64, seeds: usize) -> Self {
        OrderingConfig {
            master_seed,
            seeds,
            item1_lambdas: Vec::new(),
            item2_lambdas: Vec::new(),
            item3_lambdas: Vec::new(),
            tau_grid: Vec::new(),
            argmin_step: 1e-3,
        }
    }
}

/// One strict chain `a < b (< c)` evaluated on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub item: u8,
    pub lambda: f64,
    pub tau: Option<f64>,
    /// Risks along the chain, left to right.
    pub values: Vec<f64>,
    /// `right − left` for each link.
    pub margins: Vec<f64>,
    pub holds: bool,
    /// A link was within the tie tolerance; excluded from the rates.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub lambda: f64,
    pub tau_prime: f64,
    pub grid_argmin: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOrdering {
    pub index: usize,
    pub seed: u64,
    pub checks: Vec<ChainCheck>,
    pub stationarity: Vec<StationarityCheck>,
}

impl SeedOrdering {
    /// Whether every non-tied check of `item` holds.
    pub fn item_holds(&self, item: u8) -> bool {
        self.checks
            .iter()
            .filter(|c| c.item == item && !c.tie)
            .all(|c| c.holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub env: TaskEnvironment,
    pub config: OrderingConfig,
    pub lambda_prime: f64,
    pub item1_lambdas: Vec<f64>,
    pub item2_lambdas: Vec<f64>,
    pub item3_lambdas: Vec<f64>,
    pub seeds: Vec<SeedOrdering>,
    /// Fraction of seeds on which every check of item 1, 2, 3 holds.
    pub rates: [f64; 3],
    pub ties: usize,
}

impl OrderingReport {
    pub fn holding_seeds(&self, item: u8) -> usize {
        self.seeds.iter().filter(|s| s.item_holds(item)).count()
    }

    pub fn max_stationarity_gap(&self) -> f64 {
        self.seeds
            .iter()
            .flat_map(|s| s.stationarity.iter().map(|c| c.gap))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::validation("report", e.to_string()))
    }

    /// Flat CSV: `seed,item,lambda,tau,holds,tie,margins` with margins
    /// separated by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,item,lambda,tau,holds,tie,margins\n");
        for s in &self.seeds {
            for c in &s.checks {
                let margins: Vec<String> = c.margins.iter().map(|m| m.to_string()).collect();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.index,
                    c.item,
                    c.lambda,
                    c.tau.map(|t| t.to_string()).unwrap_or_default(),
                    c.holds,
                    c.tie,
                    margins.join(";")
                ));
            }
        }
        out
    }
}

fn chain(item: u8, lambda: f64, tau: Option<f64>, values: Vec<f64>) -> ChainCheck {
    let mut margins = Vec::new();
    let mut holds = true;
    let mut tie = false;
    for w in values.windows(2) {
        let margin = w[1] - w[0];
        let scale = w[0].abs().max(w[1].abs());
        if margin.abs() <= TIE_TOLERANCE * scale {
            tie = true;
        } else if margin < 0.0 {
            holds = false;
        }
        margins.push(margin);
    }
    ChainCheck {
        item,
        lambda,
        tau,
        values,
        margins,
        holds: holds && !tie,
        tie,
    }
}

fn check_range(field: &str, values: &[f64], ok: impl Fn(f64) -> bool, range: &str) -> Result<()> {
    match values.iter().find(|v| !ok(**v)) {
        Some(v) => Err(Error::validation(field, format!("{v} outside {range}"))),
        None => Ok(()),
    }
}

/// Evaluate the three ordering chains with exact conditional risks on
/// `config.seeds` independent design draws.
pub fn verify_theorem_orderings(env: &TaskEnvironment, config: &OrderingConfig, opts: SolveOptions) -> Result<OrderingReport> {
    env.validate_for_theory()?;
    if config.seeds == 0 {
        return Err(Error::validation("seeds", "must be at least 1"));
    }
    let lp = lambda_prime(env)?;
    let or_default = |v: &Vec<f64>, d: Vec<f64>| if v.is_empty() { d } else { v.clone() };
    let l1 = or_default(&config.item1_lambdas, vec![lp / 2.0, lp, 2.0 * lp]);
    let l2 = or_default(&config.item2_lambdas, vec![lp]);
    let l3 = or_default(&config.item3_lambdas, vec![0.0, lp / 2.0]);
    let upper = 2.0 * lp * (1.0 + 1e-12);
    check_range("item1_lambdas", &l1, |l| l > 0.0 && l <= upper, "(0, 2λ']")?;
    check_range("item2_lambdas", &l2, |l| l > 0.0 && l <= upper, "(0, 2λ']")?;
    check_range("item3_lambdas", &l3, |l| (0.0..lp).contains(&l), "[0, λ')")?;
    check_range("tau_grid", &config.tau_grid, |t| (0.0..=1.0).contains(&t), "[0, 1]")?;

    let seeds: Vec<Result<SeedOrdering>> = (0..config.seeds)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(config.master_seed, Purpose::Replicate, index as u64);
            let designs = sample_designs(env, seed);
            let engine = RiskEngine::new(&designs, env, &ThetaC::Sphere, opts)?;
            let theory = FtTheory::new(&designs.x_tilde, env, opts)?;
            let risk = |k| engine.analytic(k);
            let base = risk(EstimatorKind::Pretrained)?;
            let ridgeless = risk(EstimatorKind::Ridgeless)?;
            let mut checks = Vec::new();
            for &lambda in &l1 {
                let r = risk(EstimatorKind::Ridge { lambda })?;
                checks.push(chain(1, lambda, None, vec![r.l_ft(), ridgeless.l_ft(), base.l_ft()]));
            }
            for &lambda in &l2 {
                let r = risk(EstimatorKind::Ridge { lambda })?;
                let tp = theory.tau_prime(lambda)?;
                let mut taus = vec![tp / 2.0];
                taus.extend(config.tau_grid.iter().copied().filter(|t| *t >= tp / 2.0));
                for tau in taus {
                    let e = risk(EstimatorKind::Ensemble { lambda, tau })?;
                    checks.push(chain(2, lambda, Some(tau), vec![e.sum(), r.sum(), ridgeless.sum()]));
                }
            }
            let mut stationarity = Vec::new();
            for &lambda in &l3 {
                let r = risk(EstimatorKind::Ridge { lambda })?;
                let tp = theory.tau_prime(lambda)?;
                let mut taus = vec![tp];
                taus.extend(config.tau_grid.iter().copied().filter(|t| *t >= tp));
                for tau in taus {
                    let e = risk(EstimatorKind::Ensemble { lambda, tau })?;
                    checks.push(chain(3, lambda, Some(tau), vec![e.l_ft(), r.l_ft()]));
                }
                if config.argmin_step > 0.0 {
                    let argmin = grid_argmin_tau(&engine, lambda, config.argmin_step)?;
                    stationarity.push(StationarityCheck {
                        lambda,
                        tau_prime: tp,
                        grid_argmin: argmin,
                        gap: (argmin - tp).abs(),
                    });
                }
            }
            Ok(SeedOrdering {
                index,
                seed,
                checks,
                stationarity,
            })
        })
        .collect();
    let seeds: Vec<SeedOrdering> = seeds.into_iter().collect::<Result<_>>()?;
    let count = seeds.len() as f64;
    let rate = |item| seeds.iter().filter(|s| s.item_holds(item)).count() as f64 / count;
    let rates = [rate(1), rate(2), rate(3)];
    let ties = seeds.iter().flat_map(|s| &s.checks).filter(|c| c.tie).count();
    Ok(OrderingReport {
        env: env.clone(),
        config: config.clone(),
        lambda_prime: lp,
        item1_lambdas: l1,
        item2_lambdas: l2,
        item3_lambdas: l3,
        seeds,
        rates,
        ties,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBandReport {
    pub spec: SpectrumSpec,
    pub n: usize,
    /// Index `k` of the tail Gram `A_k`; the critical index when it exists.
    pub k: usize,
    pub critical_index: Option<usize>,
    /// `λ_{k+1}·r_k`, or 0 when undefined.
    pub reference: f64,
    /// `r_k ≥ n`.
    pub regime_ok: bool,
    pub band: (f64, f64),
    pub trials: usize,
    pub passes: usize,
    pub rate: f64,
    /// Smallest `μ_n/reference` and largest `μ_1/reference` seen.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Sample `A_k = Σ_{i>k} λᵢzᵢzᵢᵀ` and count trials whose extreme eigenvalues
/// both fall inside `band · λ_{k+1}r_k`.
pub fn eigen_band_check(
    spec: &SpectrumSpec,
    n: usize,
    trials: usize,
    band: (f64, f64),
    master_seed: u64,
    dist: CoordDist,
) -> Result<EigenBandReport> {
    spec.validate()?;
    if n == 0 || trials == 0 {
        return Err(Error::validation("n, trials", "must be at least 1"));
    }
    if !(band.0 > 0.0 && band.0 <= band.1) {
        return Err(Error::validation("band", "needs 0 < lo ≤ hi"));
    }
    let spectrum = Spectrum::Block(*spec);
    let crit = critical_index(&spectrum, DEFAULT_B, n)?;
    let k = crit.unwrap_or(spec.k_star);
    let (reference, regime_ok) = match effective_rank(&spectrum, k) {
        Ok(r) => (spectrum.value(k) * r, r >= n as f64),
        Err(_) => (0.0, false),
    };
    let support = spectrum.support();
    let ratios: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let x = sample_design(spec, n, dist, &mut stream(master_seed, Purpose::EigenTrial, t));
            let tail = if k < support {
                let cols = x.columns(k, support - k).clone_owned();
                weighted_cross(&cols, &cols, &vec![1.0; support - k], support - k)
            } else {
                DMatrix::zeros(n, n)
            };
            let eig = SymmetricEigen::new(tail).eigenvalues;
            if reference > 0.0 {
                (eig.min() / reference, eig.max() / reference)
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    let inside = |r: f64| r >= band.0 && r <= band.1;
    let passes = if regime_ok {
        ratios.iter().filter(|(lo, hi)| inside(*lo) && inside(*hi)).count()
    } else {
        0
    };
    Ok(EigenBandReport {
        spec: *spec,
        n,
        k,
        critical_index: crit,
        reference,
        regime_ok,
        band,
        trials,
        passes,
        rate: passes as f64 / trials as f64,
        min_ratio: ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}
