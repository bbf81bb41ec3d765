//! Shared fixtures for the benchmarks.

use overadapt_core::harness::{preset_configs, PresetCase, PresetOptions};
use overadapt_core::synth::sample_instance;
use overadapt_core::{SampledInstance, TaskEnvironment};

/// Environment of case `a` at dimension `p`, and its first replicate draw.
pub fn fixture(p: usize) -> (TaskEnvironment, SampledInstance) {
    let [cfg, _] = preset_configs(PresetCase::A, &PresetOptions::default()).expect("preset resolves");
    let mut env = cfg.env;
    env.spectrum_pre.p = p;
    env.spectrum_pre.p_tilde = p;
    env.spectrum_ft.p = p;
    env.spectrum_ft.p_tilde = 2 * env.n;
    let instance = sample_instance(&env, 7).expect("fixture samples");
    (env, instance)
}
