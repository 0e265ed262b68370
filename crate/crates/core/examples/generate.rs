//! Unconditional samples at every output scale, plus a custom aspect ratio.
//!
//! cargo run --release --example generate

mod common;

use setgan::image_io::save_png;
use setgan::inference::{generate, GenerationRequest};
use setgan::pyramid::Dims;

fn main() {
    let bundle = common::toy_bundle(60);
    let out = common::out_dir();
    for k in 0..bundle.scale_count() {
        let y = generate(&bundle, &GenerationRequest::new(k, 1)).unwrap();
        let path = out.join(format!("sample_scale{k}.png"));
        save_png(&y, &path).unwrap();
        println!("scale {k}: {}x{} -> {}", y.height, y.width, path.display());
    }
    let mut wide = GenerationRequest::new(bundle.scale_count() - 1, 1);
    wide.coarsest_dims = Some(Dims::new(25, 50));
    let y = generate(&bundle, &wide).unwrap();
    save_png(&y, &out.join("sample_wide.png")).unwrap();
    println!("wide: {}x{}", y.height, y.width);
}
