//! Prints the scale schedule for a few input sizes.
//!
//! cargo run --example scale_schedule

use setgan::pyramid::{compute_scale_schedule, resized_dims, Dims};

fn main() {
    for input in [Dims::new(256, 256), Dims::new(480, 640), Dims::new(200, 90)] {
        let finest = resized_dims(input, 256);
        let s = compute_scale_schedule(finest, 256, 25, 4.0 / 3.0).unwrap();
        println!("{input} -> {} scales, r = {:.5}", s.scale_count, s.factor);
        let dims: Vec<String> = s.dims.iter().map(|d| d.to_string()).collect();
        println!("  {}", dims.join(" "));
    }
}
