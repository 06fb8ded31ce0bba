//! Desk-scale setup used by the examples and the acceptance suite: a small
//! four-class shapes problem that a single CPU core trains in minutes.

use crate::data::{synth_shapes, LabeledDataset, Split, SynthParams};
use crate::error::Result;
use crate::network::ModelSpec;
use crate::training::TrainConfig;

pub const TRAIN: usize = 2000;
pub const TEST: usize = 400;
pub const DATA_SEED: u64 = 1;
/// Sub-model depth.
pub const K: usize = 3;
/// Layers exported from the sub-model.
pub const K_P: usize = 2;
pub const SEEDS: [u64; 3] = [1, 2, 3];

/// Larger, higher-contrast shapes with light background noise.
pub fn synth_params() -> SynthParams {
    SynthParams {
        radius: [0.3, 0.42],
        contrast: [100.0, 125.0],
        noise: 4.0,
        ..SynthParams::default()
    }
}

pub fn model_spec() -> ModelSpec {
    ModelSpec::desk()
}

pub fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        submodel_lr: 0.01,
        prefix_lr: 1e-4,
        tail_lr: 0.005,
        batch_size: 16,
        pretrain_iterations: 3000,
        tune_iterations: 2000,
        decay_interval: 100_000,
        seed,
        log_every: 100,
        ..TrainConfig::default()
    }
}

/// The clean train and test splits.
pub fn datasets() -> Result<(LabeledDataset, LabeledDataset)> {
    let p = synth_params();
    Ok((
        synth_shapes(&p, TRAIN, DATA_SEED, Split::Train)?,
        synth_shapes(&p, TEST, DATA_SEED, Split::Test)?,
    ))
}
