//! Trains every scale of a procedural texture in parallel and writes the
//! bundle plus per-scale SSIM.
//!
//! cargo run --release --example train_toy -- [iterations]

mod common;

use std::sync::Mutex;

use setgan::bundle::{image_hash, TrainedBundle};
use setgan::pyramid::pyramid_from_image;
use setgan::trainer::{train_pyramid, JobOptions, TrainEvent};

fn main() {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let image = common::toy_image();
    let config = common::toy_config(iterations);
    let pyramid = pyramid_from_image(&image, config.max_dim, config.min_dim, config.scale_factor).unwrap();
    println!("{} scales: {:?}", pyramid.scale_count(), pyramid.schedule.dims);

    let first_rec = Mutex::new(vec![None; pyramid.scale_count()]);
    let on_event = |e: &TrainEvent<'_>| match e {
        TrainEvent::Iteration(r) => {
            first_rec.lock().unwrap()[r.scale].get_or_insert(r.rec_loss);
        }
        TrainEvent::ScaleFinished(f) => {
            let last = f.model.history.last().map_or(f32::NAN, |h| h.rec_loss);
            let first = first_rec.lock().unwrap()[f.model.scale_index].unwrap_or(f32::NAN);
            println!(
                "scale {}: rec {first:.4} -> {last:.4}, ssim {:.3}, {:.1}s",
                f.model.scale_index, f.ssim, f.wall_seconds
            );
        }
        _ => {}
    };
    let result = train_pyramid(
        &pyramid,
        &config,
        JobOptions {
            on_event: Some(&on_event),
            ..JobOptions::default()
        },
    )
    .unwrap();
    for t in [0.0, 0.3, 0.6, 0.9, 1.01] {
        println!("T = {t:<4} -> best scale {}", result.best_scale_for(t));
    }
    let bundle = TrainedBundle::from_result(&result, "train-toy", image_hash(&image), None).unwrap();
    let path = common::out_dir().join("toy.setgan");
    bundle.save(&path).unwrap();
    println!("wrote {} ({:.1}s total)", path.display(), result.wall_seconds);
}
