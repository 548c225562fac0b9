#![allow(dead_code)]

use amem_core::model::{ModelConfig, Variant};
use amem_lab::dataset::{generate_split, DatasetSpec, Sample, Split};
use amem_lab::train::TrainConfig;

/// Tiny widths on full-size 64×64 renders.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        image_px: 64,
        ..ModelConfig::tiny()
    }
}

pub fn spec(n_train: usize, n_val: usize, n_test: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        n_train,
        n_val,
        n_test,
        dialogs_per_image: 2,
        base_seed: seed,
        ..DatasetSpec::default()
    }
}

pub fn samples(split: Split, images: usize, seed: u64) -> Vec<Sample> {
    generate_split(&spec(images, images, images, seed), split).unwrap()
}

pub fn train_config(variant: Variant, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        variant,
        eval_threads: Some(1),
        ..TrainConfig::default()
    }
}
