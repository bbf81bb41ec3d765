//! Excess risks `L(θ̂) = E_x⋆[(x⋆ᵀθ̂ − x⋆ᵀθ)²] = (θ̂ − θ)ᵀS(θ̂ − θ)` on the
//! pretraining task (`S = Σ`, target `θ`) and the fine-tuning task
//! (`S = Σ̃`, target `θ̃`).
//!
//! # Exact conditional risk
//!
//! Write `G = XXᵀ`, `G̃ = X̃X̃ᵀ`, `R = G̃ + nλI`, `P = XᵀG⁻¹X` and
//! `Q = X̃ᵀR⁻¹X̃`. Every member of the `(τ, λ)` family is
//!
//! ```text
//! θ̂ = (I − τQ)θ̂₁ + τQθ̃ + τX̃ᵀR⁻¹ε̃,     θ̂₁ = Pθ + XᵀG⁻¹ε
//! ```
//!
//! so the error is linear in the independent sources:
//!
//! ```text
//! θ̂ − θ_task = A_c θ_c + A₁α₁ + A₂α₂ + Bε + B̃ε̃
//! A_c = −(I − τQ)(I − P)                         (both tasks)
//! A₁  = (I − τQ)P − I,  A₂ = τQ                  (pretraining task)
//! A₁  = (I − τQ)P,      A₂ = τQ − I              (fine-tuning task)
//! B   = (I − τQ)XᵀG⁻¹,  B̃ = τX̃ᵀR⁻¹
//! ```
//!
//! and the risk is `(‖θ_c‖²/p)tr(A_cᵀSA_c) + ζ₁tr(A₁ᵀSA₁) + ζ₂tr(A₂ᵀSA₂) +
//! σ²tr(BᵀSB) + σ̃²tr(B̃ᵀSB̃)`, the first term being the average over θ_c
//! uniform on its sphere.
//!
//! # Reduction to (n+m)×(n+m) matrices
//!
//! Stack `U = [X; X̃]` and precompute `W = UUᵀ`, `W_S = USUᵀ` and `tr S`.
//! Every operator above has the form `αI + UᵀKU`, and these are closed under
//! products:
//!
//! ```text
//! (αI + UᵀKU)(βI + UᵀLU) = αβI + Uᵀ(αL + βK + KWL)U
//! tr((αI + UᵀKU)ᵀ S (αI + UᵀKU)) = α² tr S + 2α tr(KW_S) + tr(KᵀW_S K W)
//! ```
//!
//! with `P ↦ (0, diag(G⁻¹, 0))` and `Q ↦ (0, diag(0, R⁻¹))`. The noise maps
//! are `UᵀN` for an (n+m)×n or (n+m)×m core `N`, with
//! `(αI + UᵀKU)UᵀN = Uᵀ(αN + KWN)` and `tr(NᵀUSUᵀN) = tr(NᵀW_S N)`. No p×p
//! matrix is ever formed.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, GramCache, InstanceSolver, SolveOptions};
use crate::linalg::{mean_and_se, trace_of_product, weighted_cross, SpdFactor};
use crate::rng::{stream, Purpose};
use crate::spectra::Spectrum;
use crate::synth::{gen_labels, sample_design, sample_parameters, Designs, SampledInstance, TaskEnvironment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pre,
    Ft,
}

impl Task {
    pub const BOTH: [Task; 2] = [Task::Pre, Task::Ft];

    pub fn label(self) -> &'static str {
        match self {
            Task::Pre => "pre",
            Task::Ft => "ft",
        }
    }
}

/// Contribution of each random source to one task's risk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskTerms {
    pub bias_thetac: f64,
    pub term_zeta1: f64,
    pub term_zeta2: f64,
    pub term_sigma: f64,
    pub term_sigma_tilde: f64,
}

impl RiskTerms {
    pub fn total(&self) -> f64 {
        self.bias_thetac + self.term_zeta1 + self.term_zeta2 + self.term_sigma + self.term_sigma_tilde
    }
}

/// How a risk was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Plugin,
    MonteCarlo { draws: usize },
    Analytic,
    LemmaApprox,
    TestSet { size: usize },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::MonteCarlo { .. } => "monte_carlo",
            Method::Analytic => "analytic",
            Method::LemmaApprox => "lemma_approx",
            Method::TestSet { .. } => "test_set",
        }
    }
}

/// One task's risk. `terms` is present for the analytic and approximate
/// methods, `se` for the sampled ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRisk {
    pub value: f64,
    pub se: Option<f64>,
    pub terms: Option<RiskTerms>,
}

impl TaskRisk {
    fn from_terms(terms: RiskTerms) -> Self {
        TaskRisk {
            value: terms.total(),
            se: None,
            terms: Some(terms),
        }
    }

    fn sampled(values: &[f64]) -> Self {
        let (value, se) = mean_and_se(values);
        TaskRisk {
            value,
            se: Some(se),
            terms: None,
        }
    }

    fn point(value: f64) -> Self {
        TaskRisk {
            value,
            se: None,
            terms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub kind: EstimatorKind,
    pub method: Method,
    pub pre: TaskRisk,
    pub ft: TaskRisk,
    /// Set when the pretraining value is a placeholder for a term the
    /// approximation treats as negligible.
    #[serde(default)]
    pub pre_negligible: bool,
    /// Gram jitter applied while evaluating, 0 when none.
    #[serde(default)]
    pub jitter: f64,
}

impl RiskReport {
    pub fn l_pre(&self) -> f64 {
        self.pre.value
    }

    pub fn l_ft(&self) -> f64 {
        self.ft.value
    }

    pub fn task(&self, task: Task) -> &TaskRisk {
        match task {
            Task::Pre => &self.pre,
            Task::Ft => &self.ft,
        }
    }

    pub fn sum(&self) -> f64 {
        self.pre.value + self.ft.value
    }
}

/// How θ_c enters the analytic risk.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum ThetaC {
    /// Average over the sphere of radius `theta_c_norm`.
    #[default]
    Sphere,
    Fixed(DVector<f64>),
}

/// `Σᵢ λᵢ(θ̂ᵢ − θᵢ)²`.
pub fn plugin_excess_risk(theta_hat: &DVector<f64>, theta_true: &DVector<f64>, eigs: &[f64]) -> f64 {
    eigs.iter()
        .zip(theta_hat.iter().zip(theta_true.iter()))
        .filter(|(l, _)| **l != 0.0)
        .map(|(l, (a, b))| l * (a - b) * (a - b))
        .sum()
}

/// Plug-in risks of one weight vector against a realized instance.
pub fn plugin_report(instance: &SampledInstance, env: &TaskEnvironment, weights: &crate::WeightVector) -> RiskReport {
    let pre = plugin_excess_risk(&weights.weights, &instance.theta(), &env.eig_pre());
    let ft = plugin_excess_risk(&weights.weights, &instance.theta_tilde(), &env.eig_ft());
    RiskReport {
        kind: weights.kind(),
        method: Method::Plugin,
        pre: TaskRisk::point(pre),
        ft: TaskRisk::point(ft),
        pre_negligible: false,
        jitter: weights.provenance.jitter,
    }
}

/// `αI + UᵀKU`.
#[derive(Debug, Clone)]
struct Op {
    id: f64,
    core: DMatrix<f64>,
}

impl Op {
    fn mul(&self, other: &Op, w: &DMatrix<f64>) -> Op {
        let core = &other.core * self.id + &self.core * other.id + &self.core * w * &other.core;
        Op {
            id: self.id * other.id,
            core,
        }
    }

    fn shift(mut self, by: f64) -> Op {
        self.id += by;
        self
    }

    /// `tr(AᵀSA)`.
    fn quad_trace(&self, w: &DMatrix<f64>, ws: &DMatrix<f64>, tr_s: f64) -> f64 {
        let a = self.id;
        let k = &self.core;
        let kws = k.transpose() * ws * k;
        a * a * tr_s + 2.0 * a * trace_of_product(k, ws) + trace_of_product(&kws, w)
    }

    /// Core of `A·UᵀN`.
    fn apply(&self, n: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        n * self.id + &self.core * (w * n)
    }
}

fn embed(size: usize, offset: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(size, size);
    out.view_mut((offset, offset), block.shape()).copy_from(block);
    out
}

fn embed_rows(size: usize, offset: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(size, block.ncols());
    out.view_mut((offset, 0), block.shape()).copy_from(block);
    out
}

/// Traces of fine-tuning resolvents at one λ, with `s = nλ`,
/// `R = G̃ + sI`, `M̃ = X̃Σ̃X̃ᵀ` and `M = X̃ΣX̃ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventTraces {
    pub shift: f64,
    /// `tr(R⁻¹M̃)`
    pub t1: f64,
    /// `tr(R⁻²M̃)`
    pub t2: f64,
    /// `tr(R⁻¹G̃R⁻¹M̃)`
    pub t3: f64,
    /// `tr(R⁻³M̃)`
    pub r3: f64,
    /// `tr(R⁻³G̃M̃)`
    pub r3g: f64,
    /// `tr(R⁻¹G̃R⁻¹M)`
    pub pre_zeta2: f64,
    /// `tr(R⁻²M)`
    pub pre_sigma: f64,
    /// `tr(R⁻¹M)`
    pub t1_pre: f64,
    pub jitter: f64,
}

/// Fine-tuning side quantities: `G̃`, `X̃Σ̃X̃ᵀ`, `X̃ΣX̃ᵀ` and `tr Σ̃`.
#[derive(Debug)]
pub struct FtSide {
    gram: GramCache,
    m_ft: DMatrix<f64>,
    m_pre: DMatrix<f64>,
    tr_ft: f64,
    jitter: bool,
}

impl FtSide {
    pub fn new(x_tilde: &DMatrix<f64>, env: &TaskEnvironment, jitter: bool) -> Result<Self> {
        env.validate()?;
        if x_tilde.ncols() != env.p() {
            return Err(Error::Dimension(format!(
                "fine-tune design has {} columns, environment has p = {}",
                x_tilde.ncols(),
                env.p()
            )));
        }
        let ft = Spectrum::Block(env.spectrum_ft);
        let eig_ft = ft.to_vec();
        let eig_pre = env.eig_pre();
        let support = ft.support();
        Ok(FtSide {
            gram: GramCache::new(x_tilde),
            m_ft: weighted_cross(x_tilde, x_tilde, &eig_ft, support),
            m_pre: weighted_cross(x_tilde, x_tilde, &eig_pre, support),
            tr_ft: ft.trace(),
            jitter,
        })
    }

    pub fn rows(&self) -> usize {
        self.gram.rows()
    }

    pub fn trace_ft(&self) -> f64 {
        self.tr_ft
    }

    pub fn factor(&self, lambda: f64) -> Result<Arc<SpdFactor>> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::validation("lambda", format!("must be finite and ≥ 0, got {lambda}")));
        }
        self.gram.factor(self.rows() as f64 * lambda, self.jitter)
    }

    pub fn traces(&self, lambda: f64) -> Result<ResolventTraces> {
        let f = self.factor(lambda)?;
        let g = self.gram.gram();
        let a = f.solve(&self.m_ft); // R⁻¹M̃
        let b = f.solve(&a); // R⁻²M̃
        let c = f.solve(&b); // R⁻³M̃
        let rg = f.solve(g); // R⁻¹G̃
        let ap = f.solve(&self.m_pre);
        let bp = f.solve(&ap);
        Ok(ResolventTraces {
            shift: f.shift,
            t1: a.trace(),
            t2: b.trace(),
            t3: trace_of_product(&rg, &a),
            r3: c.trace(),
            r3g: trace_of_product(&c, g),
            pre_zeta2: trace_of_product(&rg, &ap),
            pre_sigma: bp.trace(),
            t1_pre: ap.trace(),
            jitter: f.jitter,
        })
    }
}

/// Retained-term approximations: only the ζ₂ and σ̃² sources.
///
/// ```text
/// L_ft  ≈ ζ₂[tr Σ̃ − 2τ tr(R⁻¹M̃) + τ² tr(R⁻¹G̃R⁻¹M̃)] + τ²σ̃² tr(R⁻²M̃)
/// L_pre ≈ τ²[ζ₂ tr(R⁻¹G̃R⁻¹M) + σ̃² tr(R⁻²M)]
/// ```
///
/// The pretrained estimator's pretraining risk is reported as negligible (0).
pub fn lemma_from_traces(
    env: &TaskEnvironment,
    tr_ft: f64,
    kind: EstimatorKind,
    tr: Option<&ResolventTraces>,
) -> RiskReport {
    let tau = kind.tau();
    let (ft, pre, jitter) = match tr {
        Some(t) if tau != 0.0 => (
            RiskTerms {
                term_zeta2: env.zeta2 * (tr_ft - 2.0 * tau * t.t1 + tau * tau * t.t3),
                term_sigma_tilde: tau * tau * env.sigma2_tilde * t.t2,
                ..Default::default()
            },
            RiskTerms {
                term_zeta2: tau * tau * env.zeta2 * t.pre_zeta2,
                term_sigma_tilde: tau * tau * env.sigma2_tilde * t.pre_sigma,
                ..Default::default()
            },
            t.jitter,
        ),
        _ => (
            RiskTerms {
                term_zeta2: env.zeta2 * tr_ft,
                ..Default::default()
            },
            RiskTerms::default(),
            0.0,
        ),
    };
    RiskReport {
        kind,
        method: Method::LemmaApprox,
        pre: TaskRisk::from_terms(pre),
        ft: TaskRisk::from_terms(ft),
        pre_negligible: tau == 0.0,
        jitter,
    }
}

pub fn lemma_approx_risk(
    x_tilde: &DMatrix<f64>,
    env: &TaskEnvironment,
    kind: EstimatorKind,
    opts: SolveOptions,
) -> Result<RiskReport> {
    kind.validate(opts.allow_extrapolation)?;
    let side = FtSide::new(x_tilde, env, opts.jitter)?;
    let traces = if kind.tau() != 0.0 {
        Some(side.traces(kind.lambda())?)
    } else {
        None
    };
    Ok(lemma_from_traces(env, side.trace_ft(), kind, traces.as_ref()))
}

struct FixedTheta {
    /// `Uθ_c`
    u: DVector<f64>,
    /// `USθ_c` per task
    us: [DVector<f64>; 2],
    /// `θ_cᵀSθ_c` per task
    quad: [f64; 2],
}

/// Exact conditional risks for one pair of designs, shared across estimator kinds.
pub struct RiskEngine {
    env: TaskEnvironment,
    n: usize,
    m: usize,
    w: DMatrix<f64>,
    ws: [DMatrix<f64>; 2],
    tr_s: [f64; 2],
    g_inv: DMatrix<f64>,
    pre_jitter: f64,
    ft: FtSide,
    opts: SolveOptions,
    fixed: Option<FixedTheta>,
}

impl RiskEngine {
    pub fn new(designs: &Designs, env: &TaskEnvironment, theta_c: &ThetaC, opts: SolveOptions) -> Result<Self> {
        env.validate()?;
        let (x, xt) = (&designs.x, &designs.x_tilde);
        let p = env.p();
        if x.ncols() != p || xt.ncols() != p {
            return Err(Error::Dimension(format!(
                "designs have {} and {} columns, environment has p = {p}",
                x.ncols(),
                xt.ncols()
            )));
        }
        let (n, m) = (x.nrows(), xt.nrows());
        let mut u = DMatrix::zeros(n + m, p);
        u.rows_mut(0, n).copy_from(x);
        u.rows_mut(n, m).copy_from(xt);
        let pre = Spectrum::Block(env.spectrum_pre);
        let ftspec = Spectrum::Block(env.spectrum_ft);
        let eig = [pre.to_vec(), ftspec.to_vec()];
        let w = &u * u.transpose();
        let ws = [
            weighted_cross(&u, &u, &eig[0], pre.support()),
            weighted_cross(&u, &u, &eig[1], ftspec.support()),
        ];
        let g = w.view((0, 0), (n, n)).clone_owned();
        let gf = SpdFactor::new(&g, 0.0, opts.jitter)?;
        let fixed = match theta_c {
            ThetaC::Sphere => None,
            ThetaC::Fixed(v) => {
                if v.len() != p {
                    return Err(Error::Dimension(format!("fixed θ_c has {} entries, expected {p}", v.len())));
                }
                let weighted = |e: &[f64]| DVector::from_fn(p, |i, _| e[i] * v[i]);
                let s0 = weighted(&eig[0]);
                let s1 = weighted(&eig[1]);
                Some(FixedTheta {
                    u: &u * v,
                    quad: [v.dot(&s0), v.dot(&s1)],
                    us: [&u * s0, &u * s1],
                })
            }
        };
        Ok(RiskEngine {
            env: env.clone(),
            n,
            m,
            w,
            ws,
            tr_s: [pre.trace(), ftspec.trace()],
            g_inv: gf.inverse(),
            pre_jitter: gf.jitter,
            ft: FtSide::new(xt, env, opts.jitter)?,
            opts,
            fixed,
        })
    }

    pub fn env(&self) -> &TaskEnvironment {
        &self.env
    }

    pub fn ft_side(&self) -> &FtSide {
        &self.ft
    }

    fn task_index(task: Task) -> usize {
        match task {
            Task::Pre => 0,
            Task::Ft => 1,
        }
    }

    fn bias(&self, ac: &Op, task: Task) -> f64 {
        let t = Self::task_index(task);
        match &self.fixed {
            None => {
                let p = self.env.p() as f64;
                self.env.theta_c_norm.powi(2) / p * ac.quad_trace(&self.w, &self.ws[t], self.tr_s[t])
            }
            Some(f) => {
                // A_cθ_c = αθ_c + UᵀKUθ_c
                let ku = &ac.core * &f.u;
                let a = ac.id;
                a * a * f.quad[t] + 2.0 * a * f.us[t].dot(&ku) + ku.dot(&(&self.ws[t] * &ku))
            }
        }
    }

    /// Exact expected risks on both tasks, conditional on the designs.
    pub fn analytic(&self, kind: EstimatorKind) -> Result<RiskReport> {
        kind.validate(self.opts.allow_extrapolation)?;
        let (n, m) = (self.n, self.m);
        let size = n + m;
        let tau = kind.tau();
        let (kq, r_inv, ft_jitter) = if tau != 0.0 {
            let f = self.ft.factor(kind.lambda())?;
            let r_inv = f.inverse();
            (embed(size, n, &r_inv) * tau, Some(r_inv), f.jitter)
        } else {
            (DMatrix::zeros(size, size), None, 0.0)
        };
        let kp = embed(size, 0, &self.g_inv);
        let w = &self.w;

        let keep = Op { id: 1.0, core: -&kq }; // I − τQ
        let proj = Op { id: 0.0, core: kp.clone() }; // P
        let ac = keep.mul(&Op { id: 1.0, core: -kp }, w);
        let keep_p = keep.mul(&proj, w);
        let q = Op { id: 0.0, core: kq };
        let b = keep.apply(&embed_rows(size, 0, &self.g_inv), w);
        let bt = r_inv.map(|r| embed_rows(size, n, &r) * tau);

        let terms = |task: Task, a1: &Op, a2: &Op| {
            let t = Self::task_index(task);
            let (ws, tr) = (&self.ws[t], self.tr_s[t]);
            RiskTerms {
                bias_thetac: self.bias(&ac, task),
                term_zeta1: self.env.zeta1 * a1.quad_trace(w, ws, tr),
                term_zeta2: self.env.zeta2 * a2.quad_trace(w, ws, tr),
                term_sigma: self.env.sigma2 * trace_of_product(&b.transpose(), &(ws * &b)),
                term_sigma_tilde: bt
                    .as_ref()
                    .map_or(0.0, |bt| self.env.sigma2_tilde * trace_of_product(&bt.transpose(), &(ws * bt))),
            }
        };
        let pre = terms(Task::Pre, &keep_p.clone().shift(-1.0), &q);
        let ft = terms(Task::Ft, &keep_p, &q.clone().shift(-1.0));
        Ok(RiskReport {
            kind,
            method: Method::Analytic,
            pre: TaskRisk::from_terms(pre),
            ft: TaskRisk::from_terms(ft),
            pre_negligible: false,
            jitter: self.pre_jitter.max(ft_jitter),
        })
    }

    pub fn lemma_approx(&self, kind: EstimatorKind) -> Result<RiskReport> {
        kind.validate(self.opts.allow_extrapolation)?;
        let traces = if kind.tau() != 0.0 {
            Some(self.ft.traces(kind.lambda())?)
        } else {
            None
        };
        Ok(lemma_from_traces(&self.env, self.ft.trace_ft(), kind, traces.as_ref()))
    }
}

/// Exact expected risk of one estimator conditional on the designs.
pub fn conditional_expected_risk(
    designs: &Designs,
    env: &TaskEnvironment,
    kind: EstimatorKind,
    opts: SolveOptions,
) -> Result<RiskReport> {
    RiskEngine::new(designs, env, &ThetaC::Sphere, opts)?.analytic(kind)
}

/// Monte-Carlo estimate of the conditional expected risks of several
/// estimator kinds on shared draws of `(θ_c, α₁, α₂, ε, ε̃)`. Draw `d` uses
/// its own derived stream, so the result is independent of scheduling.
pub fn mc_expected_risk(
    designs: &Designs,
    env: &TaskEnvironment,
    kinds: &[EstimatorKind],
    draws: usize,
    seed: u64,
    theta_c: &ThetaC,
    opts: SolveOptions,
) -> Result<Vec<RiskReport>> {
    env.validate()?;
    if draws == 0 {
        return Err(Error::validation("draws", "must be at least 1"));
    }
    for k in kinds {
        k.validate(opts.allow_extrapolation)?;
    }
    let (x, xt) = (&designs.x, &designs.x_tilde);
    let g = SpdFactor::new(&(x * x.transpose()), 0.0, opts.jitter)?;
    let ft = GramCache::new(xt);
    let mut factors: BTreeMap<u64, Arc<SpdFactor>> = BTreeMap::new();
    for k in kinds.iter().filter(|k| k.tau() != 0.0) {
        let lambda = k.lambda();
        if let std::collections::btree_map::Entry::Vacant(e) = factors.entry(lambda.to_bits()) {
            e.insert(ft.factor(xt.nrows() as f64 * lambda, opts.jitter)?);
        }
    }
    let eig_pre = env.eig_pre();
    let eig_ft = env.eig_ft();

    let per_draw: Vec<Result<Vec<(f64, f64)>>> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream(seed, Purpose::McDraw, d);
            let (drawn_c, a1, a2) = sample_parameters(env, &mut rng);
            let theta_c = match theta_c {
                ThetaC::Sphere => drawn_c,
                ThetaC::Fixed(v) => v.clone(),
            };
            let theta = &theta_c + &a1;
            let theta_t = &theta_c + &a2;
            let y = gen_labels(x, &theta, env.sigma2, &mut rng)?;
            let yt = gen_labels(xt, &theta_t, env.sigma2_tilde, &mut rng)?;
            let theta1 = x.tr_mul(&g.solve_vec(&y));
            let resid = &yt - xt * &theta1;
            let mut steps: BTreeMap<u64, DVector<f64>> = BTreeMap::new();
            let mut out = Vec::with_capacity(kinds.len());
            for k in kinds {
                let tau = k.tau();
                let est = if tau == 0.0 {
                    theta1.clone()
                } else {
                    let key = k.lambda().to_bits();
                    let step = steps
                        .entry(key)
                        .or_insert_with(|| xt.tr_mul(&factors[&key].solve_vec(&resid)));
                    &theta1 + &*step * tau
                };
                out.push((
                    plugin_excess_risk(&est, &theta, &eig_pre),
                    plugin_excess_risk(&est, &theta_t, &eig_ft),
                ));
            }
            Ok(out)
        })
        .collect();
    let per_draw: Vec<Vec<(f64, f64)>> = per_draw.into_iter().collect::<Result<_>>()?;

    let jitter = factors.values().map(|f| f.jitter).fold(g.jitter, f64::max);
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let pre: Vec<f64> = per_draw.iter().map(|d| d[i].0).collect();
            let ftv: Vec<f64> = per_draw.iter().map(|d| d[i].1).collect();
            RiskReport {
                kind: *k,
                method: Method::MonteCarlo { draws },
                pre: TaskRisk::sampled(&pre),
                ft: TaskRisk::sampled(&ftv),
                pre_negligible: false,
                jitter,
            }
        })
        .collect())
}

/// Risk measured on a fresh finite test draw of `size` rows per task, for a
/// realized instance.
pub fn test_set_risk(
    instance: &SampledInstance,
    env: &TaskEnvironment,
    kind: EstimatorKind,
    size: usize,
    seed: u64,
    opts: SolveOptions,
) -> Result<RiskReport> {
    if size == 0 {
        return Err(Error::validation("test_size", "must be at least 1"));
    }
    let w = InstanceSolver::new(instance, opts).fit(kind)?;
    let eval = |spec, target: DVector<f64>, index| {
        let xs = sample_design(spec, size, env.coord_dist, &mut stream(seed, Purpose::TestSet, index));
        let r = xs * (&w.weights - target);
        let sq: Vec<f64> = r.iter().map(|v| v * v).collect();
        TaskRisk::sampled(&sq)
    };
    Ok(RiskReport {
        kind,
        method: Method::TestSet { size },
        pre: eval(&env.spectrum_pre, instance.theta(), 0),
        ft: eval(&env.spectrum_ft, instance.theta_tilde(), 1),
        pre_negligible: false,
        jitter: w.provenance.jitter,
    })
}
