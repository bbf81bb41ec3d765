//! Replicated sweeps over estimator points and risk methods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodName};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, InstanceSolver, SolveOptions};
use crate::risk::{mc_expected_risk, plugin_report, test_set_risk, RiskEngine, RiskReport, Task, ThetaC};
use crate::rng::{derive_seed, stream, Purpose};
use crate::synth::{sample_designs, sample_instance_with, sample_sphere};

/// One output record: a single task's risk for one estimator point, method and replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case: String,
    /// Replicate index; the replicate's streams derive from it and the master seed.
    pub seed: u64,
    pub estimator: String,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub task: Task,
    pub method: String,
    pub value: f64,
    pub se: Option<f64>,
    pub bias_thetac: Option<f64>,
    pub term_zeta1: Option<f64>,
    pub term_zeta2: Option<f64>,
    pub term_sigma: Option<f64>,
    pub term_sigma_tilde: Option<f64>,
}

impl ResultRow {
    pub fn from_report(case: &str, replicate: u64, report: &RiskReport) -> [ResultRow; 2] {
        Task::BOTH.map(|task| {
            let r = report.task(task);
            let t = r.terms;
            ResultRow {
                case: case.to_string(),
                seed: replicate,
                estimator: report.kind.label().to_string(),
                lambda: report.kind.lambda_field(),
                tau: report.kind.tau_field(),
                task,
                method: report.method.label().to_string(),
                value: r.value,
                se: r.se.filter(|s| s.is_finite()),
                bias_thetac: t.map(|t| t.bias_thetac),
                term_zeta1: t.map(|t| t.term_zeta1),
                term_zeta2: t.map(|t| t.term_zeta2),
                term_sigma: t.map(|t| t.term_sigma),
                term_sigma_tilde: t.map(|t| t.term_sigma_tilde),
            }
        })
    }
}

/// A replicate/method pair (optionally one estimator) that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: u64,
    pub method: MethodName,
    pub estimator: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
}

/// Estimator points of a sweep in output order: pretrained, ridgeless, the
/// ridge family, then each ensemble curve.
pub fn estimator_points(config: &ExperimentConfig) -> Vec<EstimatorKind> {
    let mut points = vec![EstimatorKind::Pretrained, EstimatorKind::Ridgeless];
    points.extend(
        config
            .lambdas
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&lambda| EstimatorKind::Ridge { lambda }),
    );
    for &lambda in &config.ensemble_lambdas {
        points.extend(config.taus.iter().map(|&tau| EstimatorKind::Ensemble { lambda, tau }));
    }
    points
}

pub fn replicate_seed(config: &ExperimentConfig, replicate: u64) -> u64 {
    derive_seed(config.master_seed, Purpose::Replicate, replicate)
}

fn fixed_theta_c(config: &ExperimentConfig) -> Option<nalgebra::DVector<f64>> {
    config.fix_theta_c.then(|| {
        sample_sphere(
            config.env.p(),
            config.env.theta_c_norm,
            &mut stream(config.master_seed, Purpose::Parameters, u64::MAX),
        )
    })
}

type Outcome = (Vec<ResultRow>, Vec<Failure>);

fn run_replicate(config: &ExperimentConfig, points: &[EstimatorKind], replicate: u64, fixed: Option<&nalgebra::DVector<f64>>) -> Outcome {
    let seed = replicate_seed(config, replicate);
    let env = &config.env;
    let opts = SolveOptions {
        jitter: config.jitter,
        allow_extrapolation: false,
    };
    let theta_c = fixed.map_or(ThetaC::Sphere, |v| ThetaC::Fixed(v.clone()));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let fail = |method, estimator: Option<&EstimatorKind>, e: &Error| Failure {
        replicate,
        method,
        estimator: estimator.map(|k| k.label().to_string()),
        message: e.to_string(),
    };
    let push = |rows: &mut Vec<ResultRow>, report: &RiskReport| {
        rows.extend(ResultRow::from_report(&config.case, replicate, report));
    };

    let designs = sample_designs(env, seed);
    let needs_engine = config
        .methods
        .iter()
        .any(|m| matches!(m, MethodName::Analytic | MethodName::LemmaApprox));
    let engine = if needs_engine {
        Some(RiskEngine::new(&designs, env, &theta_c, opts))
    } else {
        None
    };
    let needs_instance = config
        .methods
        .iter()
        .any(|m| matches!(m, MethodName::Plugin | MethodName::TestSet));
    let instance = if needs_instance {
        Some(sample_instance_with(env, seed, fixed))
    } else {
        None
    };

    for &method in &config.methods {
        match method {
            MethodName::Analytic | MethodName::LemmaApprox => match engine.as_ref().unwrap() {
                Err(e) => failures.push(fail(method, None, e)),
                Ok(engine) => {
                    for k in points {
                        let r = if method == MethodName::Analytic {
                            engine.analytic(*k)
                        } else {
                            engine.lemma_approx(*k)
                        };
                        match r {
                            Ok(report) => push(&mut rows, &report),
                            Err(e) => failures.push(fail(method, Some(k), &e)),
                        }
                    }
                }
            },
            MethodName::MonteCarlo => match mc_expected_risk(&designs, env, points, config.mc_draws, seed, &theta_c, opts) {
                Ok(reports) => reports.iter().for_each(|r| push(&mut rows, r)),
                Err(e) => failures.push(fail(method, None, &e)),
            },
            MethodName::Plugin | MethodName::TestSet => match instance.as_ref().unwrap() {
                Err(e) => failures.push(fail(method, None, e)),
                Ok(inst) => {
                    let solver = InstanceSolver::new(inst, opts);
                    for k in points {
                        let r = if method == MethodName::Plugin {
                            solver.fit(*k).map(|w| plugin_report(inst, env, &w))
                        } else {
                            test_set_risk(inst, env, *k, config.test_size, seed, opts)
                        };
                        match r {
                            Ok(report) => push(&mut rows, &report),
                            Err(e) => failures.push(fail(method, Some(k), &e)),
                        }
                    }
                }
            },
        }
    }
    (rows, failures)
}

/// Evaluate every point, method and replicate of `config`. Replicates run in
/// parallel on `config.workers` threads; the output does not depend on the
/// worker count.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let points = estimator_points(config);
    let fixed = fixed_theta_c(config);
    let work = || -> Vec<Outcome> {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| run_replicate(config, &points, r, fixed.as_ref()))
            .collect()
    };
    let outcomes = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::validation("workers", e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in outcomes {
        rows.extend(r);
        failures.extend(f);
    }
    Ok(SweepResult {
        config: config.clone(),
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ConfigFile;
    use crate::harness::presets::PresetCase;

    fn small(methods: Vec<MethodName>) -> ExperimentConfig {
        ExperimentConfig::from_file(&ConfigFile {
            preset: Some(PresetCase::A),
            p: Some(300),
            replicates: Some(3),
            taus: Some(vec![0.0, 0.5, 1.0]),
            methods: Some(methods),
            mc_draws: Some(50),
            test_size: Some(100),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn points_cover_family() {
        let c = small(vec![MethodName::Analytic]);
        let pts = estimator_points(&c);
        assert_eq!(pts.len(), 2 + 4 + 3);
        assert_eq!(pts[0], EstimatorKind::Pretrained);
        assert_eq!(pts[1], EstimatorKind::Ridgeless);
    }

    #[test]
    fn every_method_yields_paired_rows() {
        let c = small(vec![
            MethodName::Analytic,
            MethodName::MonteCarlo,
            MethodName::LemmaApprox,
            MethodName::Plugin,
            MethodName::TestSet,
        ]);
        let res = run_sweep(&c).unwrap();
        assert!(res.failures.is_empty(), "{:?}", res.failures);
        assert_eq!(res.rows.len(), 3 * 5 * 9 * 2);
        for r in &res.rows {
            assert!(r.value.is_finite() && r.value >= 0.0, "{r:?}");
            assert_eq!(r.se.is_some(), matches!(r.method.as_str(), "monte_carlo" | "test_set"));
            assert_eq!(r.bias_thetac.is_some(), matches!(r.method.as_str(), "analytic" | "lemma_approx"));
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let mut c = small(vec![MethodName::Analytic, MethodName::MonteCarlo]);
        c.workers = Some(1);
        let a = run_sweep(&c).unwrap().rows;
        c.workers = Some(4);
        assert_eq!(run_sweep(&c).unwrap().rows, a);
    }

    #[test]
    fn fixed_theta_c_is_shared() {
        let mut c = small(vec![MethodName::Plugin]);
        c.fix_theta_c = true;
        let fixed = fixed_theta_c(&c).unwrap();
        let i0 = sample_instance_with(&c.env, replicate_seed(&c, 0), Some(&fixed)).unwrap();
        let i1 = sample_instance_with(&c.env, replicate_seed(&c, 1), Some(&fixed)).unwrap();
        assert_eq!(i0.theta_c, i1.theta_c);
        assert!(run_sweep(&c).unwrap().failures.is_empty());
    }

    #[test]
    fn singular_gram_is_recorded_not_fatal() {
        let mut c = small(vec![MethodName::Analytic]);
        c.env.spectrum_ft = crate::SpectrumSpec::new(1, 0.0, c.env.p(), 1).unwrap();
        c.replicates = 1;
        let res = run_sweep(&c).unwrap();
        assert!(!res.failures.is_empty());
    }
}
