//! Upsamples the training image by r^k and compares sharpness with plain
//! bilinear upscaling.
//!
//! cargo run --release --example super_resolution

mod common;

use setgan::editor::{laplacian_variance, super_resolution};
use setgan::image_io::save_png;
use setgan::pyramid::{round_dim, upscale, Dims};

fn main() {
    let bundle = common::toy_bundle(60);
    let low = common::toy_image();
    let k = 2;
    let s = bundle.factor().powi(k);
    let sr = super_resolution(&bundle, &low, s, k as usize, 0).unwrap();
    let target = Dims::new(round_dim(low.height as f64 * s), round_dim(low.width as f64 * s));
    let bilinear = upscale(&low, target).unwrap();
    println!("{}x{} -> {}x{} (s = {s:.4})", low.height, low.width, sr.height, sr.width);
    println!("laplacian variance: setgan {:.5}, bilinear {:.5}", laplacian_variance(&sr), laplacian_variance(&bilinear));
    save_png(&sr, &common::out_dir().join("sr.png")).unwrap();
}
