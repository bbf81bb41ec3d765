//! `overadapt`: run presets, config-driven sweeps, ordering checks and
//! single risk evaluations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use overadapt_core::harness::{
    self, ft_ordering, load_config, mean_curves, pareto_summary, render_tradeoff_svg, run_preset, run_sweep,
    tau_grid, theory_environment, write_metadata, write_results, ConfigFile, Format, GammaMode, MethodName,
    PlotMode, PresetCase, PresetOptions, SweepResult, DEFAULT_SERIES,
};
use overadapt_core::risk::{plugin_report, RiskEngine, ThetaC};
use overadapt_core::estimators::InstanceSolver;
use overadapt_core::synth::sample_instance;
use overadapt_core::theory::{verify_theorem_orderings, OrderingConfig};
use overadapt_core::{EstimatorKind, SolveOptions};

#[derive(Parser)]
#[command(name = "overadapt", version, about = "Pretrain/fine-tune over-adaptation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trade-off and fine-tuning-only sweeps of one simulation case.
    Preset(PresetArgs),
    /// Run a sweep described by a JSON config file.
    Sweep(SweepArgs),
    /// Check the estimator orderings over a set of seeds.
    Verify(VerifyArgs),
    /// Evaluate one estimator on one replicate and print the report as JSON.
    Risk(RiskArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GammaArg {
    Prose,
    Caption,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Monte-Carlo draws per replicate.
    #[arg(long)]
    mc_draws: Option<usize>,
    /// Comma-separated risk methods (analytic, monte_carlo, lemma_approx, plugin, test_set).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for replicate-level parallelism.
    #[arg(long, env = "OVERADAPT_WORKERS")]
    workers: Option<usize>,
    /// Add a tiny diagonal jitter to near-singular Grams instead of failing.
    #[arg(long)]
    jitter: bool,
}

impl Common {
    fn overrides(&self) -> anyhow::Result<ConfigFile> {
        let methods = match &self.methods {
            Some(m) => Some(m.iter().map(|s| MethodName::parse(s)).collect::<Result<Vec<_>, _>>()?),
            None => None,
        };
        Ok(ConfigFile {
            master_seed: self.seed,
            replicates: self.replicates,
            mc_draws: self.mc_draws,
            methods,
            format: self.format.map(Into::into),
            workers: self.workers,
            jitter: self.jitter.then_some(true),
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct PresetArgs {
    /// Case a, b, c or d.
    case: String,
    #[command(flatten)]
    common: Common,
    /// Ensemble ridge level of the trade-off run.
    #[arg(long)]
    lambda: Option<f64>,
    /// Ridge level of the fine-tuning-only run.
    #[arg(long)]
    lambda_ft: Option<f64>,
    /// Step of the τ grid.
    #[arg(long)]
    tau_grid: Option<f64>,
    /// Use p = 10000 instead of 2000.
    #[arg(long)]
    full: bool,
    #[arg(long, value_enum)]
    gamma_mode: Option<GammaArg>,
    /// Override the fine-tuning support size.
    #[arg(long)]
    p_tilde: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Result file; defaults to the config's `out` or `results.<format>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a trade-off SVG to this path.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Environment from a config file; defaults to the built-in ordering environment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    p: usize,
    #[arg(long, default_value_t = harness::DEFAULT_MASTER_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, env = "OVERADAPT_WORKERS")]
    workers: Option<usize>,
    /// Write the report here (JSON, or CSV when the name ends in .csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long)]
    config: PathBuf,
    /// pretrained, ridgeless_ft, ridge_ft or ensemble.
    #[arg(long)]
    estimator: String,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Replicate index.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// analytic, lemma_approx or plugin.
    #[arg(long, default_value = "analytic")]
    method: String,
    #[arg(long)]
    jitter: bool,
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn save(result: &SweepResult, path: &Path) -> anyhow::Result<()> {
    write_results(&result.rows, path, result.config.format)?;
    write_metadata(result, &path.with_extension("meta.json"))?;
    for f in &result.failures {
        eprintln!(
            "warning: replicate {} {:?} {}: {}",
            f.replicate,
            f.method,
            f.estimator.as_deref().unwrap_or("*"),
            f.message
        );
    }
    Ok(())
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match workers {
        Some(w) => Ok(rayon_pool(w)?.install(f)),
        None => Ok(f()),
    }
}

fn rayon_pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")
}

fn preset(args: PresetArgs) -> anyhow::Result<()> {
    let case = PresetCase::parse(&args.case)?;
    let mut overrides = args.common.overrides()?;
    overrides.full = args.full.then_some(true);
    overrides.gamma_mode = args.gamma_mode.map(|g| match g {
        GammaArg::Prose => GammaMode::Prose,
        GammaArg::Caption => GammaMode::Caption,
    });
    overrides.taus = args.tau_grid.map(tau_grid);
    overrides.p_tilde = args.p_tilde;
    let opts = PresetOptions {
        overrides,
        lambda_tradeoff: args.lambda,
        lambda_ft: args.lambda_ft,
    };
    let run = run_preset(case, &opts)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let e = ext(run.tradeoff.config.format);
    let trade_path = args.out.join(format!("case_{case}_tradeoff.{e}"));
    let ft_path = args.out.join(format!("case_{case}_ft.{e}"));
    save(&run.tradeoff, &trade_path)?;
    save(&run.ft_only, &ft_path)?;

    let trade = mean_curves(&run.tradeoff.rows, "analytic");
    let ft = mean_curves(&run.ft_only.rows, "analytic");
    if !trade.is_empty() {
        let s = pareto_summary(&trade);
        println!(
            "case {case}: {}/{} ensemble points undominated by the fine-tuned family ({:.0}%)",
            s.undominated,
            s.ensemble_points,
            100.0 * s.fraction
        );
        let o = ft_ordering(&ft, run.ft_only.config.ensemble_lambdas[0])?;
        println!(
            "case {case}: L_ft ensemble(τ={}) {:.4e} < ridge {:.4e} < ridgeless {:.4e} < pretrained {:.4e}: {}",
            o.best_tau,
            o.ensemble,
            o.ridge,
            o.ridgeless,
            o.pretrained,
            if o.holds { "holds" } else { "violated" }
        );
        if args.plot {
            render_tradeoff_svg(
                &trade,
                PlotMode::Tradeoff,
                &DEFAULT_SERIES,
                &format!("case {case}: trade-off"),
                &args.out.join(format!("case_{case}_tradeoff.svg")),
            )?;
            render_tradeoff_svg(
                &ft,
                PlotMode::FtOnly,
                &DEFAULT_SERIES,
                &format!("case {case}: fine-tuning risk"),
                &args.out.join(format!("case_{case}_ft.svg")),
            )?;
        }
    } else if args.plot {
        bail!("--plot needs the analytic method");
    }
    println!("wrote {} and {}", trade_path.display(), ft_path.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let base = load_config(&args.config)?;
    let file = base.to_file().merged(&args.common.overrides()?);
    let config = harness::ExperimentConfig::from_file(&file)?;
    let result = run_sweep(&config)?;
    let path = args
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("results.{}", ext(config.format))));
    save(&result, &path)?;
    if let Some(plot) = args.plot {
        let method = if config.methods.contains(&MethodName::Analytic) {
            "analytic"
        } else {
            "monte_carlo"
        };
        let curves = mean_curves(&result.rows, method);
        render_tradeoff_svg(&curves, PlotMode::Tradeoff, &DEFAULT_SERIES, &format!("case {}", config.case), &plot)?;
    }
    println!("wrote {} rows to {}", result.rows.len(), path.display());
    Ok(())
}

fn verify(args: VerifyArgs) -> anyhow::Result<()> {
    let env = match &args.config {
        Some(path) => load_config(path)?.env,
        None => theory_environment(args.n, args.p)?,
    };
    let cfg = OrderingConfig::new(args.seed, args.seeds);
    let report = with_pool(args.workers, || verify_theorem_orderings(&env, &cfg, SolveOptions::default()))??;
    println!("λ' = {:.6e}", report.lambda_prime);
    for item in 1..=3u8 {
        println!(
            "item {item}: holds on {}/{} seeds ({:.0}%)",
            report.holding_seeds(item),
            report.seeds.len(),
            100.0 * report.rates[item as usize - 1]
        );
    }
    println!("max |τ' − grid argmin| = {:.3e}", report.max_stationarity_gap());
    if report.ties > 0 {
        println!("{} comparisons fell within the tie tolerance", report.ties);
    }
    if let Some(out) = args.out {
        let text = if out.extension().is_some_and(|e| e == "csv") {
            report.to_csv()
        } else {
            report.to_json()?
        };
        std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn risk(args: RiskArgs) -> anyhow::Result<()> {
    let config = load_config(&args.config)?;
    let kind = match args.estimator.as_str() {
        "pretrained" => EstimatorKind::Pretrained,
        "ridgeless_ft" | "ridgeless" => EstimatorKind::Ridgeless,
        "ridge_ft" | "ridge" => EstimatorKind::Ridge { lambda: args.lambda },
        "ensemble" => EstimatorKind::Ensemble {
            lambda: args.lambda,
            tau: args.tau,
        },
        other => bail!("unknown estimator `{other}`"),
    };
    let opts = SolveOptions {
        jitter: args.jitter || config.jitter,
        allow_extrapolation: false,
    };
    let seed = harness::replicate_seed(&config, args.replicate);
    let instance = sample_instance(&config.env, seed)?;
    let report = match args.method.as_str() {
        "analytic" | "lemma_approx" => {
            let engine = RiskEngine::new(&instance.designs(), &config.env, &ThetaC::Sphere, opts)?;
            if args.method == "analytic" {
                engine.analytic(kind)?
            } else {
                engine.lemma_approx(kind)?
            }
        }
        "plugin" => plugin_report(&instance, &config.env, &InstanceSolver::new(&instance, opts).fit(kind)?),
        other => bail!("unknown method `{other}`"),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preset(a) => preset(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Risk(a) => risk(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<overadapt_core::Error>()
                .map_or(1, overadapt_core::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
