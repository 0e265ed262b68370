//! Serializes a bundle, shows the per-scale blob layout and compression.
//!
//! cargo run --release --example bundle_io

mod common;

use setgan::bundle::{compress_bundle, decompress_bundle, TrainedBundle};

fn main() {
    let bundle = common::toy_bundle(20);
    let bytes = bundle.serialize();
    for e in &bundle.manifest.scales {
        println!(
            "scale {}: {} params, {} bytes at +{}, sha256 {}..",
            e.scale_index, e.param_count, e.byte_size, e.offset, &e.sha256[..12]
        );
    }
    let packed = compress_bundle(&bytes);
    println!("{} bytes raw, {} gzip ({:.2}x)", bytes.len(), packed.len(), bytes.len() as f64 / packed.len() as f64);
    let back = TrainedBundle::deserialize(&decompress_bundle(&packed).unwrap()).unwrap();
    assert_eq!(back.serialize(), bytes);
    println!("round trip ok");
}
