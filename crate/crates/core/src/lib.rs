//! Numerical laboratory for pretrain → fine-tune over-parameterized linear
//! regression.
//!
//! The crate builds the two-task population model, the four closed-form
//! estimators (min-norm pretraining, ridgeless and ridge fine-tuning, and the
//! weight-space ensemble), evaluates their excess risks exactly, by Monte
//! Carlo and by the retained-term approximations, and checks the ordering
//! results that relate regularization and ensembling to over-adaptation.
//!
//! Module map:
//!
//! - [`spectra`]: block-structured covariance spectra, effective rank, critical index.
//! - [`synth`]: task environments, seeded sampling of parameters, designs and labels.
//! - [`estimators`]: Gram-matrix solvers for the four weight vectors.
//! - [`risk`]: plug-in, exact conditional, Monte-Carlo and approximate excess risks.
//! - [`theory`]: optimal λ and τ, derivative sign tests, ordering and eigen-band checks.
//! - [`harness`]: configuration, presets, sweeps, CSV/JSON output and SVG plots.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod risk;
pub mod rng;
pub mod spectra;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use estimators::{
    ensemble, finetune_ridge, finetune_ridgeless, pretrain_minnorm, EstimatorKind, Provenance,
    SolveOptions, WeightVector,
};
pub use harness::{ExperimentConfig, ResultRow};
pub use risk::{RiskReport, RiskTerms, Task};
pub use spectra::{critical_index, effective_rank, Spectrum, SpectrumSpec};
pub use synth::{CoordDist, Designs, SampledInstance, TaskEnvironment};
pub use theory::OrderingReport;
