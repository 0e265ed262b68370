//! Turns a flat clip-art into a textured image by injecting it at a coarse
//! scale. Lower injection scales change more.
//!
//! cargo run --release --example paint2image

mod common;

use setgan::editor::paint2image;
use setgan::image_io::save_png;
use setgan::metrics::ssim;
use setgan::pyramid::resample;
use setgan::synthetic;

fn main() {
    let bundle = common::toy_bundle(60);
    let finest = bundle.dims(bundle.scale_count() - 1);
    let clip = synthetic::clipart(finest, 3);
    for at in [1, 2] {
        let y = paint2image(&bundle, &clip, at, 0).unwrap();
        let sim = ssim(&y, &resample(&clip, finest)).unwrap();
        println!("injected at {at}: ssim to clip-art {sim:.3}");
        save_png(&y, &common::out_dir().join(format!("paint_at{at}.png"))).unwrap();
    }
}
