//! Scale schedule and image pyramid.
//!
//! Scale 0 is the coarsest level. Every level is resampled directly from the
//! full-resolution source with an antialiased bicubic filter; coarse-to-fine
//! transfer uses bilinear upscaling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// RGB image, channel-major, values in `[-1, 1]`.
pub type ImageGrid = Tensor<f32>;

pub const DEFAULT_MAX_DIM: usize = 256;
pub const DEFAULT_MIN_DIM: usize = 25;
pub const DEFAULT_SCALE_FACTOR: f64 = 4.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn of(t: &ImageGrid) -> Self {
        Self::new(t.height, t.width)
    }

    pub fn min_side(&self) -> usize {
        self.height.min(self.width)
    }

    pub fn max_side(&self) -> usize {
        self.height.max(self.width)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Both sides scaled by `k`, rounded half-up and clamped to at least 1.
    pub fn scaled(&self, k: f64) -> Self {
        Self::new(round_dim(self.height as f64 * k), round_dim(self.width as f64 * k))
    }

    pub fn fits_within(&self, other: &Dims) -> bool {
        self.height <= other.height && self.width <= other.width
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Round-half-up, clamped to ≥ 1.
pub fn round_dim(v: f64) -> usize {
    ((v + 0.5).floor() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub scale_count: usize,
    pub factor: f64,
    /// Per-scale dims, coarsest first.
    pub dims: Vec<Dims>,
    pub min_dim: usize,
    pub max_dim: usize,
}

impl ScaleSchedule {
    pub fn finest(&self) -> Dims {
        *self.dims.last().expect("schedule has at least one scale")
    }

    pub fn coarsest(&self) -> Dims {
        self.dims[0]
    }
}

/// Plans the pyramid for an input of `input` dims.
///
/// The input is resized so its larger side equals `max_dim`. The chain runs
/// from the resized image's shorter side down to `min_dim`; the number of
/// steps is the one whose exact factor lies closest to `r_target`, and the
/// factor is then recomputed so the chain hits both endpoints.
pub fn compute_scale_schedule(
    input: Dims,
    max_dim: usize,
    min_dim: usize,
    r_target: f64,
) -> Result<ScaleSchedule> {
    if min_dim < 1 || max_dim < min_dim {
        return Err(Error::InvalidArgument(format!(
            "need max_dim >= min_dim >= 1, got max_dim={max_dim} min_dim={min_dim}"
        )));
    }
    if !(r_target > 1.0) || !r_target.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be > 1, got {r_target}"
        )));
    }
    if input.height == 0 || input.width == 0 {
        return Err(Error::InvalidArgument("empty input image".into()));
    }
    let final_dims = resized_dims(input, max_dim);
    if final_dims.min_side() < min_dim {
        return Err(Error::ImageTooSmall {
            dims: final_dims,
            min_dim,
        });
    }
    let ratio = final_dims.min_side() as f64 / min_dim as f64;
    let steps = chain_steps(ratio, r_target);
    let factor = if steps == 0 {
        r_target
    } else {
        ratio.powf(1.0 / steps as f64)
    };
    let scale_count = steps + 1;
    let dims = (0..scale_count)
        .map(|i| {
            let k = (scale_count - 1 - i) as i32;
            if k == 0 {
                final_dims
            } else {
                final_dims.scaled(factor.powi(-k))
            }
        })
        .collect();
    Ok(ScaleSchedule {
        scale_count,
        factor,
        dims,
        min_dim,
        max_dim,
    })
}

/// Dims after resizing so the larger side equals `max_dim`.
pub fn resized_dims(input: Dims, max_dim: usize) -> Dims {
    let k = max_dim as f64 / input.max_side() as f64;
    let mut d = input.scaled(k);
    if input.height >= input.width {
        d.height = max_dim;
    } else {
        d.width = max_dim;
    }
    d
}

fn chain_steps(ratio: f64, r_target: f64) -> usize {
    let x = ratio.ln() / r_target.ln();
    let nearest = (x + 0.5).floor();
    if nearest < 1.0 {
        return 0;
    }
    let nearest = nearest as usize;
    let err = |n: usize| (ratio.powf(1.0 / n as f64) - r_target).abs();
    [nearest.saturating_sub(1), nearest, nearest + 1]
        .into_iter()
        .filter(|&n| n >= 1)
        .min_by(|&a, &b| err(a).total_cmp(&err(b)).then(a.cmp(&b)))
        .unwrap()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePyramid {
    pub schedule: ScaleSchedule,
    pub levels: Vec<ImageGrid>,
}

impl ImagePyramid {
    pub fn source(&self) -> &ImageGrid {
        self.levels.last().expect("pyramid is never empty")
    }

    pub fn scale_count(&self) -> usize {
        self.levels.len()
    }

    /// `upscale(X_{i-1})` at the dims of scale `i`; `None` for scale 0.
    pub fn coarse_input(&self, scale: usize) -> Option<ImageGrid> {
        (scale > 0).then(|| {
            upscale(&self.levels[scale - 1], self.schedule.dims[scale])
                .expect("pyramid levels grow monotonically")
        })
    }
}

pub fn build_pyramid(image: &ImageGrid, schedule: &ScaleSchedule) -> Result<ImagePyramid> {
    let got = Dims::of(image);
    if got != schedule.finest() {
        return Err(Error::DimMismatch {
            expected: schedule.finest(),
            got,
        });
    }
    let mut levels: Vec<ImageGrid> = schedule.dims[..schedule.scale_count - 1]
        .iter()
        .map(|&d| resample(image, d))
        .collect();
    levels.push(image.clone());
    Ok(ImagePyramid {
        schedule: schedule.clone(),
        levels,
    })
}

/// Resizes `image` to the schedule's finest dims and builds the pyramid.
pub fn pyramid_from_image(
    image: &ImageGrid,
    max_dim: usize,
    min_dim: usize,
    r_target: f64,
) -> Result<ImagePyramid> {
    let schedule = compute_scale_schedule(Dims::of(image), max_dim, min_dim, r_target)?;
    let source = resample(image, schedule.finest());
    build_pyramid(&source, &schedule)
}

/// Per-scale noise amplitude: 1 at scale 0, then the RMS detail each scale
/// adds on top of the upscaled coarser level.
pub fn noise_amplitudes(pyramid: &ImagePyramid) -> Vec<f32> {
    (0..pyramid.scale_count())
        .map(|i| match pyramid.coarse_input(i) {
            None => 1.0,
            Some(up) => {
                let x = &pyramid.levels[i];
                let mse = up
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    / x.len() as f64;
                mse.sqrt() as f32
            }
        })
        .collect()
}

/// Bilinear upscaling (half-pixel centers, edge clamp) to exactly `target`.
pub fn upscale(image: &ImageGrid, target: Dims) -> Result<ImageGrid> {
    let src = Dims::of(image);
    if !src.fits_within(&target) {
        return Err(Error::InvalidArgument(format!(
            "upscale cannot shrink {src} to {target}"
        )));
    }
    Ok(bilinear(image, target))
}

pub(crate) fn bilinear(image: &ImageGrid, target: Dims) -> ImageGrid {
    if Dims::of(image) == target {
        return image.clone();
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = taps(image.height, target.height);
    let xs = taps(image.width, target.width);
    let mut out = ImageGrid::zeros(image.channels, target.height, target.width);
    for c in 0..image.channels {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = image.at(c, y0, x0) * (1.0 - fx) + image.at(c, y0, x1) * fx;
                let bot = image.at(c, y1, x0) * (1.0 - fx) + image.at(c, y1, x1) * fx;
                *out.at_mut(c, oy, ox) = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Keys cubic convolution kernel, a = -0.5.
fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * A
    } else {
        0.0
    }
}

/// Normalized filter taps `(first_index, weights)` for each output sample.
fn cubic_taps(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let stretch = scale.max(1.0);
    let support = 2.0 * stretch;
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(n_in);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| cubic((j as f64 + 0.5 - center) / stretch))
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            (lo, w)
        })
        .collect()
}

/// Separable antialiased bicubic resampling to `target`, clamped to `[-1, 1]`.
pub fn resample(image: &ImageGrid, target: Dims) -> ImageGrid {
    if Dims::of(image) == target {
        return image.clone();
    }
    let xs = cubic_taps(image.width, target.width);
    let ys = cubic_taps(image.height, target.height);
    let mut out = ImageGrid::zeros(image.channels, target.height, target.width);
    let mut rows = vec![0.0f64; image.height * target.width];
    for c in 0..image.channels {
        for y in 0..image.height {
            for (ox, (lo, w)) in xs.iter().enumerate() {
                rows[y * target.width + ox] = w
                    .iter()
                    .enumerate()
                    .map(|(k, &wk)| wk * image.at(c, y, lo + k) as f64)
                    .sum();
            }
        }
        for (oy, (lo, w)) in ys.iter().enumerate() {
            for ox in 0..target.width {
                let v: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(k, &wk)| wk * rows[(lo + k) * target.width + ox])
                    .sum();
                *out.at_mut(c, oy, ox) = (v as f32).clamp(-1.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(h: usize, w: usize, v: f32) -> ImageGrid {
        ImageGrid::full(3, h, w, v)
    }

    #[test]
    fn paper_geometry_gives_nine_scales() {
        let s = compute_scale_schedule(Dims::new(512, 512), 256, 25, 4.0 / 3.0).unwrap();
        assert_eq!(s.scale_count, 9);
        assert_eq!(s.finest(), Dims::new(256, 256));
        assert_eq!(s.coarsest(), Dims::new(25, 25));
    }

    #[test]
    fn coinciding_endpoints_give_single_scale() {
        let s = compute_scale_schedule(Dims::new(25, 25), 25, 25, 4.0 / 3.0).unwrap();
        assert_eq!(s.scale_count, 1);
        assert_eq!(s.dims, vec![Dims::new(25, 25)]);
    }

    /// Brute force over every step count, scored by distance to the target.
    fn brute_force_steps(ratio: f64, r: f64) -> usize {
        (1..64usize)
            .min_by(|&a, &b| {
                let ea = (ratio.powf(1.0 / a as f64) - r).abs();
                let eb = (ratio.powf(1.0 / b as f64) - r).abs();
                ea.total_cmp(&eb)
            })
            .unwrap()
    }

    #[test]
    fn non_square_schedule_matches_enumeration() {
        let s = compute_scale_schedule(Dims::new(300, 200), 192, 25, 4.0 / 3.0).unwrap();
        assert_eq!(s.finest(), Dims::new(192, 128));
        let ratio = 128.0 / 25.0;
        let steps = brute_force_steps(ratio, 4.0 / 3.0);
        assert_eq!(steps, 6);
        assert_eq!(s.scale_count, steps + 1);
        let r = ratio.powf(1.0 / steps as f64);
        assert!((s.factor - r).abs() < 1e-12);
        // frozen from the rounding rule applied to 192x128 with r = (128/25)^(1/6)
        let want = [
            (37, 25),
            (49, 33),
            (65, 43),
            (85, 57),
            (111, 74),
            (146, 97),
            (192, 128),
        ];
        let got: Vec<_> = s.dims.iter().map(|d| (d.height, d.width)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_too_small_and_bad_arguments() {
        assert!(matches!(
            compute_scale_schedule(Dims::new(10, 100), 100, 25, 4.0 / 3.0),
            Err(Error::ImageTooSmall { .. })
        ));
        assert!(compute_scale_schedule(Dims::new(64, 64), 20, 25, 4.0 / 3.0).is_err());
        assert!(compute_scale_schedule(Dims::new(64, 64), 64, 25, 1.0).is_err());
    }

    #[test]
    fn constant_image_pyramid_is_constant() {
        let s = compute_scale_schedule(Dims::new(64, 48), 64, 25, 4.0 / 3.0).unwrap();
        let img = constant(64, 48, 0.25);
        let p = build_pyramid(&img, &s).unwrap();
        for (lvl, d) in p.levels.iter().zip(&s.dims) {
            assert_eq!(Dims::of(lvl), *d);
            assert!(lvl.data.iter().all(|&v| (v - 0.25).abs() < 1e-6));
        }
    }

    #[test]
    fn single_scale_pyramid_is_source() {
        let s = compute_scale_schedule(Dims::new(25, 25), 25, 25, 4.0 / 3.0).unwrap();
        let img = crate::synthetic::texture(Dims::new(25, 25), 3);
        let p = build_pyramid(&img, &s).unwrap();
        assert_eq!(p.levels, vec![img]);
    }

    #[test]
    fn checkerboard_level_means_match_source() {
        let s = compute_scale_schedule(Dims::new(64, 64), 64, 36, 4.0 / 3.0).unwrap();
        assert_eq!(s.scale_count, 3);
        let img = crate::synthetic::checkerboard(Dims::new(64, 64), 8, -1.0, 1.0);
        let p = build_pyramid(&img, &s).unwrap();
        let src_mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / img.len() as f64;
        for lvl in &p.levels {
            let m = lvl.data.iter().map(|&v| v as f64).sum::<f64>() / lvl.len() as f64;
            assert!((m - src_mean).abs() < 1e-6, "level mean {m} vs {src_mean}");
        }
    }

    #[test]
    fn build_rejects_wrong_dims() {
        let s = compute_scale_schedule(Dims::new(64, 64), 64, 25, 4.0 / 3.0).unwrap();
        assert!(matches!(
            build_pyramid(&constant(60, 64, 0.0), &s),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn upscale_constant_and_identity() {
        let c = constant(2, 2, -0.4);
        let u = upscale(&c, Dims::new(3, 3)).unwrap();
        assert!(u.data.iter().all(|&v| (v + 0.4).abs() < 1e-7));
        let t = crate::synthetic::texture(Dims::new(9, 13), 1);
        assert_eq!(upscale(&t, Dims::new(9, 13)).unwrap(), t);
        assert!(upscale(&t, Dims::new(8, 13)).is_err());
    }

    #[test]
    fn upscale_hand_computed_ramp() {
        // columns [0, 1] on both rows; half-pixel centers give source
        // positions -0.25, 0.25, 0.75, 1.25 → clamped 0, 0.25, 0.75, 1.
        let img = ImageGrid::from_vec(1, 2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        let u = upscale(&img, Dims::new(4, 4)).unwrap();
        for y in 0..4 {
            let row: Vec<f32> = (0..4).map(|x| u.at(0, y, x)).collect();
            assert_eq!(row, vec![0.0, 0.25, 0.75, 1.0]);
        }
    }

    proptest! {
        #[test]
        fn schedule_chain_is_self_consistent(
            h in 25usize..400, w in 25usize..400, max_dim in 25usize..300, r in 1.01f64..2.0
        ) {
            if let Ok(s) = compute_scale_schedule(Dims::new(h, w), max_dim, 25, r) {
                let n = s.scale_count;
                let fin = s.finest();
                prop_assert_eq!(fin.max_side(), max_dim);
                prop_assert_eq!(s.dims[0], fin.scaled(s.factor.powi(-(n as i32 - 1))));
                prop_assert!(s.coarsest().min_side() >= 25);
                prop_assert!(s.coarsest().min_side() <= (25.0 * s.factor).ceil() as usize);
                for pair in s.dims.windows(2) {
                    prop_assert!(pair[0].fits_within(&pair[1]));
                }
            }
        }

        #[test]
        fn schedule_strictly_increasing_for_usual_factors(
            h in 25usize..400, w in 25usize..400, max_dim in 25usize..300, r in 1.2f64..2.0
        ) {
            if let Ok(s) = compute_scale_schedule(Dims::new(h, w), max_dim, 25, r) {
                for pair in s.dims.windows(2) {
                    prop_assert!(pair[0].height < pair[1].height && pair[0].width < pair[1].width);
                }
            }
        }

        #[test]
        fn down_then_up_of_constant_is_identity(v in -1.0f32..1.0, h in 4usize..40, w in 4usize..40) {
            let img = constant(h, w, v);
            let small = resample(&img, Dims::new(h / 2 + 1, w / 2 + 1));
            let back = upscale(&small, Dims::new(h, w)).unwrap();
            prop_assert!(back.data.iter().all(|&x| (x - v).abs() < 1e-6));
        }
    }
}
