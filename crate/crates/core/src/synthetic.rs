//! Deterministic procedural images for examples, tests and the bench command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pyramid::{Dims, ImageGrid};

/// Binary checkerboard with square cells of `cell` pixels.
pub fn checkerboard(dims: Dims, cell: usize, lo: f32, hi: f32) -> ImageGrid {
    let mut img = ImageGrid::zeros(3, dims.height, dims.width);
    for c in 0..3 {
        for y in 0..dims.height {
            for x in 0..dims.width {
                let odd = ((y / cell) + (x / cell)) % 2 == 1;
                *img.at_mut(c, y, x) = if odd { hi } else { lo };
            }
        }
    }
    img
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// One octave of bilinear-smoothed lattice noise in `[-1, 1]`.
fn value_noise(dims: Dims, period: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gh = (dims.height as f64 / period).ceil() as usize + 2;
    let gw = (dims.width as f64 / period).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; dims.area()];
    for y in 0..dims.height {
        let fy = y as f64 / period;
        let (y0, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..dims.width {
            let fx = x as f64 / period;
            let (x0, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out[y * dims.width + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Colored multi-octave texture with fine detail, values in `[-1, 1]`.
pub fn texture(dims: Dims, seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves = [(16.0, 0.5), (6.0, 0.3), (2.5, 0.2)];
    let palette: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            [
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
            ]
        })
        .collect();
    let fields: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let mut acc = vec![0.0; dims.area()];
            for &(period, amp) in &octaves {
                for (a, v) in acc.iter_mut().zip(value_noise(dims, period, &mut rng)) {
                    *a += amp * v;
                }
            }
            acc
        })
        .collect();
    let mut img = ImageGrid::zeros(3, dims.height, dims.width);
    for c in 0..3 {
        for i in 0..dims.area() {
            let v: f64 = (0..3).map(|k| palette[k][c] * fields[k][i]).sum::<f64>()
                + 0.6 * fields[c][i];
            img.data[c * dims.area() + i] = v.tanh() as f32;
        }
    }
    img
}

/// Flat-colored shapes on a flat background, like a hand-made clip-art.
pub fn clipart(dims: Dims, seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = [-0.2f32, 0.3, -0.5];
    let mut img = ImageGrid::zeros(3, dims.height, dims.width);
    for c in 0..3 {
        img.data[c * dims.area()..(c + 1) * dims.area()].fill(bg[c]);
    }
    for _ in 0..4 {
        let cy = rng.random_range(0.0..dims.height as f64);
        let cx = rng.random_range(0.0..dims.width as f64);
        let r = rng.random_range(0.1..0.25) * dims.min_side() as f64;
        let color = [
            rng.random_range(-1.0f32..1.0),
            rng.random_range(-1.0f32..1.0),
            rng.random_range(-1.0f32..1.0),
        ];
        for y in 0..dims.height {
            for x in 0..dims.width {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                if dy * dy + dx * dx <= r * r {
                    for (c, &col) in color.iter().enumerate() {
                        *img.at_mut(c, y, x) = col;
                    }
                }
            }
        }
    }
    img
}

/// Pastes `patch` into a copy of `background` with its top-left at
/// `(top, left)`; returns the composite and the single-channel paste mask.
pub fn paste(
    background: &ImageGrid,
    patch: &ImageGrid,
    top: usize,
    left: usize,
) -> (ImageGrid, ImageGrid) {
    let mut out = background.clone();
    let mut mask = ImageGrid::zeros(1, background.height, background.width);
    for y in 0..patch.height.min(background.height.saturating_sub(top)) {
        for x in 0..patch.width.min(background.width.saturating_sub(left)) {
            for c in 0..background.channels {
                *out.at_mut(c, top + y, left + x) = patch.at(c, y, x);
            }
            *mask.at_mut(0, top + y, left + x) = 1.0;
        }
    }
    (out, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_deterministic_and_in_range() {
        let a = texture(Dims::new(40, 30), 5);
        assert_eq!(a, texture(Dims::new(40, 30), 5));
        assert_ne!(a, texture(Dims::new(40, 30), 6));
        assert!(a.data.iter().all(|v| (-1.0..=1.0).contains(v)));
        let c = clipart(Dims::new(32, 32), 1);
        assert!(c.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn paste_marks_mask() {
        let bg = ImageGrid::full(3, 8, 8, -1.0);
        let patch = ImageGrid::full(3, 3, 3, 1.0);
        let (out, mask) = paste(&bg, &patch, 6, 6);
        assert_eq!(mask.data.iter().filter(|&&v| v > 0.0).count(), 4);
        assert_eq!(out.at(0, 7, 7), 1.0);
        assert_eq!(out.at(0, 5, 5), -1.0);
    }
}
