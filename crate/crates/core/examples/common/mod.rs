//! Shared setup for the examples: a quickly trained toy bundle, or one
//! loaded from `SETGAN_BUNDLE` when set.

#![allow(dead_code)]

use std::path::PathBuf;

use setgan::bundle::{image_hash, TrainedBundle};
use setgan::pyramid::{pyramid_from_image, Dims, ImageGrid};
use setgan::synthetic;
use setgan::trainer::{train_pyramid, JobOptions, TrainConfig};

pub fn toy_image() -> ImageGrid {
    synthetic::texture(Dims::new(64, 64), 7)
}

pub fn toy_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations_per_scale: iterations,
        max_dim: 64,
        min_dim: 25,
        ssim_threshold: 1.01,
        seed: 7,
        ..TrainConfig::default()
    }
}

pub fn toy_bundle(iterations: usize) -> TrainedBundle {
    if let Ok(path) = std::env::var("SETGAN_BUNDLE") {
        return TrainedBundle::load(path.as_ref()).expect("SETGAN_BUNDLE is a readable bundle");
    }
    let image = toy_image();
    let config = toy_config(iterations);
    let pyramid = pyramid_from_image(&image, config.max_dim, config.min_dim, config.scale_factor)
        .expect("toy image fits the schedule");
    let result = train_pyramid(&pyramid, &config, JobOptions::default()).expect("toy training");
    TrainedBundle::from_result(&result, "example", image_hash(&image), None).expect("bundle")
}

pub fn out_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/example-out");
    std::fs::create_dir_all(&dir).expect("output directory");
    dir
}
