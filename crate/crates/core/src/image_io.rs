//! PNG/JPEG decoding into [`ImageGrid`] and PNG encoding back out.
//!
//! 8-bit values map to `v / 127.5 - 1`; encoding rounds `(v + 1) · 127.5`
//! after clamping to `[-1, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::editor::Mask;
use crate::error::Result;
use crate::pyramid::{Dims, ImageGrid};

pub fn from_rgb8(img: &RgbImage) -> ImageGrid {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageGrid::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            *out.at_mut(c, y as usize, x as usize) = p[c] as f32 / 127.5 - 1.0;
        }
    }
    out
}

fn quantize(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn to_rgb8(grid: &ImageGrid) -> RgbImage {
    RgbImage::from_fn(grid.width as u32, grid.height as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if grid.channels == 1 {
            let v = quantize(grid.at(0, y, x));
            image::Rgb([v, v, v])
        } else {
            image::Rgb([0, 1, 2].map(|c| quantize(grid.at(c, y, x))))
        }
    })
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageGrid> {
    Ok(from_rgb8(&image::load_from_memory(bytes)?.to_rgb8()))
}

pub fn load_image(path: &Path) -> Result<ImageGrid> {
    Ok(from_rgb8(&image::open(path)?.to_rgb8()))
}

pub fn encode_png(grid: &ImageGrid) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    DynamicImage::ImageRgb8(to_rgb8(grid)).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn save_png(grid: &ImageGrid, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(grid)?)?;
    Ok(())
}

/// Any nonzero channel marks the pixel editable.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    Ok(mask_from(image::load_from_memory(bytes)?))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    Ok(mask_from(image::open(path)?))
}

fn mask_from(img: DynamicImage) -> Mask {
    let rgb = img.to_rgb8();
    let dims = Dims::new(rgb.height() as usize, rgb.width() as usize);
    let bits = rgb.pixels().map(|p| p.0.iter().any(|&v| v != 0)).collect();
    Mask { dims, bits }
}

pub fn encode_mask(mask: &Mask) -> Result<Vec<u8>> {
    let img = GrayImage::from_fn(mask.dims.width as u32, mask.dims.height as u32, |x, y| {
        image::Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    let mut buf = Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(img).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn png_round_trip_within_quantization() {
        let img = synthetic::texture(Dims::new(17, 23), 5);
        let back = decode_image(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(Dims::of(&back), Dims::of(&img));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 127.5 + 1e-6);
        }
        // already-quantized grids survive exactly
        assert_eq!(decode_image(&encode_png(&back).unwrap()).unwrap(), back);
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = synthetic::texture(Dims::new(9, 9), 1);
        assert_eq!(encode_png(&img).unwrap(), encode_png(&img).unwrap());
    }

    #[test]
    fn mask_round_trip() {
        let mut m = Mask::empty(Dims::new(6, 7));
        m.bits[3] = true;
        m.bits[20] = true;
        assert_eq!(decode_mask(&encode_mask(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn jpeg_decodes() {
        let img = to_rgb8(&synthetic::texture(Dims::new(16, 16), 2));
        let mut buf = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img).write_to(&mut buf, ImageFormat::Jpeg).unwrap();
        let g = decode_image(buf.get_ref()).unwrap();
        assert_eq!((g.channels, g.height, g.width), (3, 16, 16));
    }

    #[test]
    fn garbage_is_a_codec_error() {
        assert!(matches!(
            decode_image(b"not an image"),
            Err(crate::Error::Codec(_))
        ));
    }
}
