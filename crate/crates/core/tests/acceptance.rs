//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//! Lines starting with INFO are diagnostics and never affect the outcome.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use overadapt_core::harness::{
    ft_ordering, mean_curves, pareto_summary, preset_configs, run_preset, run_sweep, theory_environment, write_results,
    ConfigFile, ExperimentConfig, Format, GammaMode, MethodName, PresetCase, PresetOptions, PresetRun, SweepResult,
    DEFAULT_MASTER_SEED, LAMBDA_FT_ONLY,
};
use overadapt_core::risk::{RiskEngine, ThetaC};
use overadapt_core::rng::{derive_seed, Purpose};
use overadapt_core::synth::{check_condition2, sample_designs, sample_instance, Condition2Thresholds};
use overadapt_core::theory::{eigen_band_check, verify_theorem_orderings, FtTheory, Objective, OrderingConfig};
use overadapt_core::{
    ensemble, finetune_ridge, finetune_ridgeless, pretrain_minnorm, CoordDist, EstimatorKind, SolveOptions,
    SpectrumSpec, TaskEnvironment,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const SEED: u64 = DEFAULT_MASTER_SEED;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut ok = 0;
    for i in 0..50u64 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(n + 2..=12);
        let gamma = rng.random_range(0.2..1.0);
        let env = TaskEnvironment {
            n,
            n_ft: None,
            spectrum_pre: SpectrumSpec::full(1, gamma, p).unwrap(),
            spectrum_ft: SpectrumSpec::full(1, gamma, p).unwrap(),
            zeta1: 0.1,
            zeta2: 0.1,
            sigma2: 0.1,
            sigma2_tilde: 0.1,
            theta_c_norm: 1.0,
            coord_dist: CoordDist::Gaussian,
            xi: None,
        };
        let inst = sample_instance(&env, derive_seed(SEED, Purpose::Replicate, i)).unwrap();
        let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
        let tau = rng.random_range(0.0..1.0);
        let (x, y, xt, yt) = (&inst.x, &inst.y, &inst.x_tilde, &inst.y_tilde);

        let o1 = x.clone().pseudo_inverse(1e-12).unwrap() * y;
        let o2 = &o1 + xt.clone().pseudo_inverse(1e-12).unwrap() * (yt - xt * &o1);
        let s = xt.nrows() as f64 * lambda;
        let lhs = xt.transpose() * xt + DMatrix::identity(p, p) * s;
        let ol = lhs.lu().solve(&(xt.transpose() * yt + &o1 * s)).unwrap();
        let oe = &o1 * (1.0 - tau) + &ol * tau;

        let t1 = pretrain_minnorm(x, y, opts()).unwrap();
        let t2 = finetune_ridgeless(&t1, xt, yt, opts()).unwrap();
        let tl = finetune_ridge(&t1, xt, yt, lambda, opts()).unwrap();
        let te = ensemble(&t1, &tl, tau, opts()).unwrap();
        let errs = [
            rel(&t1.weights, &o1),
            rel(&t2.weights, &o2),
            rel(&tl.weights, &ol),
            rel(&te.weights, &oe),
        ];
        let w = errs.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(w);
        if w <= 1e-8 {
            ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok == 50 && secs < 5.0,
        format!("{ok}/50 instances within 1e-8 (worst {worst:.2e}), {secs:.2}s"),
    )
}

fn case_a_env(p: usize) -> TaskEnvironment {
    let overrides = ConfigFile {
        p: Some(p),
        ..Default::default()
    };
    let [cfg, _] = preset_configs(
        PresetCase::A,
        &PresetOptions {
            overrides,
            ..Default::default()
        },
    )
    .unwrap();
    cfg.env
}

struct Limits {
    ok: usize,
    worst: [f64; 3],
}

fn limits_on(env: &TaskEnvironment) -> Limits {
    let mut ok = 0;
    let mut worst = [0.0f64; 3];
    for i in 0..20u64 {
        let inst = sample_instance(env, derive_seed(SEED, Purpose::Replicate, 100 + i)).unwrap();
        let (xt, yt) = (&inst.x_tilde, &inst.y_tilde);
        let t1 = pretrain_minnorm(&inst.x, &inst.y, opts()).unwrap();
        let t2 = finetune_ridgeless(&t1, xt, yt, opts()).unwrap();
        let small = finetune_ridge(&t1, xt, yt, 1e-12, opts()).unwrap();
        let large = finetune_ridge(&t1, xt, yt, 1e12, opts()).unwrap();
        let interp = (xt * &t2.weights - yt).amax() / yt.amax();
        let lo = rel(&small.weights, &t2.weights);
        let hi = rel(&large.weights, &t1.weights);
        for (w, v) in worst.iter_mut().zip([interp, lo, hi]) {
            *w = w.max(v);
        }
        if interp <= 1e-8 && lo <= 1e-6 && hi <= 1e-6 {
            ok += 1;
        }
    }
    Limits { ok, worst }
}

fn describe(l: &Limits) -> String {
    format!(
        "{}/20 instances; worst interpolation {:.1e}, λ→0 {:.1e}, λ→∞ {:.1e}",
        l.ok, l.worst[0], l.worst[1], l.worst[2]
    )
}

/// Run on the ordering environment (p = 2000, n = 40, p̃ = 2n).
fn interpolation_and_limits() -> Outcome {
    let l = limits_on(&theory_environment(40, 2000).unwrap());
    let square = limits_on(&case_a_env(2000));
    println!("INFO  2  square fine-tuning design of case a (p̃ = n): {}", describe(&square));
    outcome(l.ok == 20, describe(&l))
}

fn mc_config(workers: Option<usize>, draws: usize) -> ExperimentConfig {
    ExperimentConfig::from_file(&ConfigFile {
        preset: Some(PresetCase::A),
        lambdas: Some(vec![1e-4]),
        ensemble_lambdas: Some(vec![1e-4]),
        taus: Some(vec![0.5]),
        methods: Some(vec![MethodName::Analytic, MethodName::MonteCarlo]),
        mc_draws: Some(draws),
        workers,
        ..Default::default()
    })
    .unwrap()
}

fn analytic_vs_mc() -> (Outcome, SweepResult) {
    let start = Instant::now();
    let res = run_sweep(&mc_config(None, 2000)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut analytic = HashMap::new();
    for r in res.rows.iter().filter(|r| r.method == "analytic") {
        analytic.insert((r.seed, r.estimator.clone(), r.task), r.value);
    }
    let (mut total, mut inside) = (0, 0);
    let mut worst: f64 = 0.0;
    for r in res.rows.iter().filter(|r| r.method == "monte_carlo") {
        let a = analytic[&(r.seed, r.estimator.clone(), r.task)];
        let z = (r.value - a).abs() / r.se.unwrap();
        worst = worst.max(z);
        total += 1;
        if z <= 3.0 {
            inside += 1;
        }
    }
    let frac = inside as f64 / total as f64;
    (
        outcome(
            total == 160 && res.failures.is_empty() && frac >= 0.95 && secs < 120.0,
            format!("{inside}/{total} points within 3 SE (worst {worst:.2} SE), {secs:.1}s"),
        ),
        res,
    )
}

fn ordering_items() -> [Outcome; 3] {
    let env = theory_environment(40, 2000).unwrap();
    let cond = check_condition2(&env, Condition2Thresholds::default());
    let report = verify_theorem_orderings(&env, &OrderingConfig::new(SEED, 20), opts()).unwrap();
    let seeds = report.seeds.len();
    let cond_note = if cond.passes() { "regime checks pass" } else { "regime checks FAIL" };
    let h = |i| report.holding_seeds(i);
    let gap = report.max_stationarity_gap();
    [
        outcome(
            cond.passes() && h(1) >= 18,
            format!("{}/{seeds} seeds at λ ∈ {{λ'/2, λ', 2λ'}} (λ' = {:.4}); {cond_note}", h(1), report.lambda_prime),
        ),
        outcome(
            cond.passes() && h(3) >= 18 && gap <= 2e-3,
            format!("{}/{seeds} seeds at λ ∈ {{0, λ'/2}}, τ = τ'(λ); max |argmin − τ'| = {gap:.2e}", h(3)),
        ),
        outcome(
            cond.passes() && h(2) >= 18,
            format!("{}/{seeds} seeds at λ = λ', τ = τ'(λ)/2", h(2)),
        ),
    ]
}

fn preset_runs() -> Vec<PresetRun> {
    PresetCase::ALL
        .iter()
        .map(|&c| run_preset(c, &PresetOptions::default()).unwrap())
        .collect()
}

fn simulation_cases(runs: &[PresetRun]) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for run in runs {
        let case = run.case;
        if matches!(case, PresetCase::A | PresetCase::B) {
            let s = pareto_summary(&mean_curves(&run.tradeoff.rows, "analytic"));
            pass &= s.fraction >= 0.8;
            parts.push(format!("{case}: pareto {}/{}", s.undominated, s.ensemble_points));
        }
        let o = ft_ordering(&mean_curves(&run.ft_only.rows, "analytic"), LAMBDA_FT_ONLY).unwrap();
        pass &= o.holds;
        parts.push(format!(
            "{case}: ft ens {:.3e} ridge {:.3e} ridgeless {:.3e} pre {:.3e} {}",
            o.ensemble,
            o.ridge,
            o.ridgeless,
            o.pretrained,
            if o.holds { "ok" } else { "violated" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn simulation_variants() {
    for (label, overrides) in [
        (
            "p̃ = 2n",
            ConfigFile {
                p_tilde: Some(80),
                ..Default::default()
            },
        ),
        (
            "caption tails",
            ConfigFile {
                gamma_mode: Some(GammaMode::Caption),
                ..Default::default()
            },
        ),
    ] {
        let mut parts = Vec::new();
        for case in [PresetCase::A, PresetCase::B] {
            let mut o = overrides.clone();
            if o.p_tilde.is_some() {
                o.p_tilde = Some(2 * case.n());
            }
            let run = run_preset(case, &PresetOptions { overrides: o, ..Default::default() }).unwrap();
            let f = ft_ordering(&mean_curves(&run.ft_only.rows, "analytic"), LAMBDA_FT_ONLY).unwrap();
            let s = pareto_summary(&mean_curves(&run.tradeoff.rows, "analytic"));
            parts.push(format!(
                "{case}: pareto {}/{}, ft ordering {}",
                s.undominated,
                s.ensemble_points,
                if f.holds { "holds" } else { "violated" }
            ));
        }
        println!("INFO  7  variant {label}: {}", parts.join("; "));
    }
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn stationarity() -> Outcome {
    let env = theory_environment(40, 2000).unwrap();
    let retained = TaskEnvironment {
        zeta1: 0.0,
        sigma2: 0.0,
        theta_c_norm: 0.0,
        ..env.clone()
    };
    let mut worst_id: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    let mut id_ok = true;
    for s in 0..5u64 {
        let d = sample_designs(&env, derive_seed(SEED, Purpose::Replicate, 500 + s));
        let th = FtTheory::new(&d.x_tilde, &env, opts()).unwrap();
        let lp = th.lambda_prime().unwrap();
        let tau_gap = (th.tau_prime(lp).unwrap() - 1.0).abs();
        let fp = th.ft_dlambda(lp).unwrap().relative().abs();
        id_ok &= tau_gap <= 1e-10 && fp <= 1e-12;
        worst_id = worst_id.max(tau_gap).max(fp);
        for lambda in [0.0, lp / 2.0, lp] {
            let tp = th.tau_prime(lambda).unwrap();
            let g = th.dtau(lambda, tp, Objective::Ft).unwrap().relative().abs();
            let j = th.dtau(lambda, tp / 2.0, Objective::Sum).unwrap().relative().abs();
            id_ok &= g <= 1e-10 && j <= 1e-10;
            worst_id = worst_id.max(g).max(j);
        }

        let engine = RiskEngine::new(&d, &retained, &ThetaC::Sphere, opts()).unwrap();
        let rt = FtTheory::new(&d.x_tilde, &retained, opts()).unwrap();
        let ridge = |l: f64| engine.analytic(EstimatorKind::Ridge { lambda: l }).unwrap();
        let ens = |l: f64, t: f64| engine.analytic(EstimatorKind::Ensemble { lambda: l, tau: t }).unwrap();
        let r = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        for lambda in [lp / 4.0, lp / 2.0, 2.0 * lp] {
            let h = 1e-3 * lambda;
            worst_fd = worst_fd
                .max(r(central(|l| ridge(l).l_ft(), lambda, h), rt.ft_dlambda(lambda).unwrap().value))
                .max(r(central(|l| ridge(l).sum(), lambda, h), rt.sum_dlambda(lambda).unwrap().value));
        }
        for lambda in [0.0, lp / 2.0] {
            for tau in [0.3, 0.7] {
                worst_fd = worst_fd
                    .max(r(central(|t| ens(lambda, t).l_ft(), tau, 1e-3), rt.dtau(lambda, tau, Objective::Ft).unwrap().value))
                    .max(r(central(|t| ens(lambda, t).sum(), tau, 1e-3), rt.dtau(lambda, tau, Objective::Sum).unwrap().value));
            }
        }
    }
    outcome(
        id_ok && worst_fd <= 1e-4,
        format!("worst identity residual {worst_id:.2e}, worst finite-difference mismatch {worst_fd:.2e} over 5 designs"),
    )
}

fn eigen_band() -> Outcome {
    let spec = SpectrumSpec::full(1, 0.004, 8000).unwrap();
    let r = eigen_band_check(&spec, 40, 200, (1.0 / 3.0, 3.0), SEED, CoordDist::Gaussian).unwrap();
    let r1_ok = r.k == 1 && (7999.0) >= 100.0 * 40.0;
    outcome(
        r1_ok && r.regime_ok && r.rate >= 0.95,
        format!(
            "{}/{} trials in [1/3, 3]·λ₂r₁ (ratios {:.3}..{:.3})",
            r.passes, r.trials, r.min_ratio, r.max_ratio
        ),
    )
}

fn csv_bytes(result: &SweepResult) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_results(&result.rows, &path, Format::Csv).unwrap();
    std::fs::read(path).unwrap()
}

fn determinism(reference_mc: &SweepResult, reference_presets: &[PresetRun]) -> Outcome {
    let mut same = 0;
    let mut total = 0;
    for workers in [1usize, 3] {
        let mut cfg = mc_config(Some(workers), 2000);
        cfg.workers = Some(workers);
        total += 1;
        if csv_bytes(&run_sweep(&cfg).unwrap()) == csv_bytes(reference_mc) {
            same += 1;
        }
        for run in reference_presets {
            let o = PresetOptions {
                overrides: ConfigFile {
                    workers: Some(workers),
                    ..Default::default()
                },
                ..Default::default()
            };
            let again = run_preset(run.case, &o).unwrap();
            for (a, b) in [(&again.tradeoff, &run.tradeoff), (&again.ft_only, &run.ft_only)] {
                total += 1;
                if csv_bytes(a) == csv_bytes(b) {
                    same += 1;
                }
            }
        }
    }
    outcome(same == total, format!("{same}/{total} reruns byte-identical at 1 and 3 workers"))
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |id: u8, name: &'static str, o: Outcome| {
        println!("{}  {id:>2}  {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "oracle equivalence", oracles());
    report(2, "interpolation and limits", interpolation_and_limits());
    let (c3, mc) = analytic_vs_mc();
    report(3, "analytic vs Monte Carlo", c3);
    let [i1, i3, i2] = ordering_items();
    report(4, "ordering item 1", i1);
    report(5, "ordering item 3 and τ' stationarity", i3);
    report(6, "ordering item 2", i2);
    let runs = preset_runs();
    report(7, "simulation cases", simulation_cases(&runs));
    simulation_variants();
    report(8, "stationarity identities and derivatives", stationarity());
    report(9, "tail Gram eigenvalue band", eigen_band());
    report(10, "determinism across worker counts", determinism(&mc, &runs));

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
