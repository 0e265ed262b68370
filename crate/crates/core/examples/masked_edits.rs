//! Harmonization of a pasted patch and regeneration of an edited region.
//! Pixels outside the dilated mask come back unchanged.
//!
//! cargo run --release --example masked_edits

mod common;

use setgan::editor::{edit, harmonize, harmonize_window, Mask, MASK_DILATION_PX};
use setgan::image_io::save_png;
use setgan::pyramid::Dims;
use setgan::synthetic;

fn main() {
    let bundle = common::toy_bundle(60);
    let bg = common::toy_image();
    let patch = synthetic::clipart(Dims::new(20, 20), 9);
    let (composite, paste_mask) = synthetic::paste(&bg, &patch, 22, 22);
    let mask = Mask::from_grid(&paste_mask);

    let window = harmonize_window(&bundle);
    println!("harmonization scales {}..={}", window.start(), window.end());
    let h = harmonize(&bundle, &composite, &mask, *window.end(), 0).unwrap();
    let region = mask.dilate(MASK_DILATION_PX);
    let changed_outside = (0..bg.plane())
        .filter(|&p| !region.bits[p])
        .any(|p| (0..3).any(|c| h.data[c * bg.plane() + p] != composite.data[c * bg.plane() + p]));
    println!("{} masked px, {} after dilation, outside changed: {changed_outside}", mask.count(), region.count());
    save_png(&h, &common::out_dir().join("harmonized.png")).unwrap();

    let e = edit(&bundle, &composite, &mask, 2, 0).unwrap();
    save_png(&e, &common::out_dir().join("edited.png")).unwrap();
}
