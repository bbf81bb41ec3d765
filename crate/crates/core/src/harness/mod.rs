//! Experiment configuration, replicated sweeps, presets and output.

mod config;
mod output;
mod plot;
mod presets;
mod sweep;

pub use config::{load_config, parse_config, save_config, ConfigFile, ExperimentConfig, Format, MethodName, DEFAULT_MASTER_SEED};
pub use output::{
    ft_ordering, mean_curves, pareto_summary, read_results, write_metadata, write_results, CurvePoint, FtOrdering,
    ParetoSummary, RunMetadata, CSV_HEADER,
};
pub use plot::{render_tradeoff_svg, tradeoff_svg, PlotMode, DEFAULT_SERIES};
pub use presets::{
    preset_configs, preset_defaults, run_preset, tau_grid, theory_environment, GammaMode, PresetCase, PresetOptions, PresetRun,
    DEFAULT_P, DEFAULT_REPLICATES, FAMILY_LAMBDAS, FULL_P, LAMBDA_FT_ONLY, LAMBDA_TRADEOFF,
};
pub use sweep::{estimator_points, replicate_seed, run_sweep, Failure, ResultRow, SweepResult};
