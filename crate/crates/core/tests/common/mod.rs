#![allow(dead_code)]

use std::path::Path;

use trialpulse_core::evalkit::{synth_generate, EffectSpec, SynthConfig, SynthDataset};
use trialpulse_core::pipeline::RunConfig;

/// A synthetic corpus wide enough that every price class has members.
pub fn pipeline_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        n_companies: 30,
        years: 8,
        n_events: 300,
        positive: EffectSpec {
            mean: 0.1,
            std: 0.12,
        },
        negative: EffectSpec {
            mean: -0.2,
            std: 0.1,
        },
        neutral: EffectSpec {
            mean: 0.0,
            std: 0.05,
        },
        ..SynthConfig::new(seed)
    }
}

pub fn write_synth(dir: &Path, config: &SynthConfig) -> SynthDataset {
    let ds = synth_generate(config).expect("synthetic corpus");
    ds.write_dir(dir).expect("write corpus");
    ds
}

/// Run settings small enough for a test: a short GCN schedule and few repeats.
pub fn quick_run(data: &Path, out: &Path, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(data, out, seed);
    c.gcn.hidden = 16;
    c.gcn.epochs = 40;
    c.gcn.learning_rate = 1e-2;
    c.gbdt.n_rounds = 30;
    c.forest_trees = 30;
    c.repeats = 3;
    c.importance_repeats = 2;
    c
}
