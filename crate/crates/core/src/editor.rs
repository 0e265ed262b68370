//! Image-manipulation applications built on injection.

use serde::{Deserialize, Serialize};

use crate::bundle::TrainedBundle;
use crate::error::{Error, Result};
use crate::inference::inject;
use crate::noise::{derive_seed, NoiseMap};
use crate::pyramid::{resample, round_dim, upscale, Dims, ImageGrid};

pub const MASK_DILATION_PX: usize = 8;
/// Allowed relative mismatch between the bundle's `r` and `s^(1/k)`.
pub const SR_FACTOR_TOLERANCE: f64 = 0.01;
pub const PAINT_SCALES: [usize; 2] = [1, 2];
pub const DEFAULT_PAINT_SCALE: usize = 1;
pub const DEFAULT_EDIT_SCALE: usize = 2;
pub const EDIT_SCALE_RANGE: std::ops::RangeInclusive<usize> = 1..=4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    SuperResolution,
    Paint2image,
    Harmonization,
    Editing,
}

impl std::str::FromStr for EditKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "super_resolution" | "sr" => Ok(Self::SuperResolution),
            "paint2image" | "paint" => Ok(Self::Paint2image),
            "harmonization" | "harmonize" | "paste" => Ok(Self::Harmonization),
            "editing" | "edit" => Ok(Self::Editing),
            other => Err(Error::InvalidArgument(format!("unknown edit kind {other:?}"))),
        }
    }
}

/// Editable-region mask; `true` marks pixels the generator may change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub dims: Dims,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.area()],
        }
    }

    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            bits: vec![true; dims.area()],
        }
    }

    /// Positive samples of the first channel are editable.
    pub fn from_grid(grid: &ImageGrid) -> Self {
        Self {
            dims: Dims::of(grid),
            bits: grid.data[..grid.plane()].iter().map(|&v| v > 0.0).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.dims.width + x]
    }

    /// Grows the mask by a disk of `radius` pixels.
    pub fn dilate(&self, radius: usize) -> Self {
        let (h, w) = (self.dims.height as isize, self.dims.width as isize);
        let r = radius as isize;
        let offsets: Vec<(isize, isize)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
            .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
            .collect();
        let mut out = Self::empty(self.dims);
        for y in 0..h {
            for x in 0..w {
                if !self.bits[(y * w + x) as usize] {
                    continue;
                }
                for &(dy, dx) in &offsets {
                    let (yy, xx) = (y + dy, x + dx);
                    if (0..h).contains(&yy) && (0..w).contains(&xx) {
                        out.bits[(yy * w + xx) as usize] = true;
                    }
                }
            }
        }
        out
    }
}

/// `k` passes of {upscale by `s^(1/k)`, refine with the finest generator}.
/// Pass `j` targets `round(input · s^(j/k))`, so the output is exactly
/// `round(s · input)`.
pub fn super_resolution(
    bundle: &TrainedBundle,
    low_res: &ImageGrid,
    s: f64,
    k: usize,
    seed: u64,
) -> Result<ImageGrid> {
    if !(s > 1.0) || k == 0 {
        return Err(Error::InvalidArgument(format!("need s > 1 and k >= 1, got s={s}, k={k}")));
    }
    let required = s.powf(1.0 / k as f64);
    let r = bundle.factor();
    if ((r - required) / required).abs() > SR_FACTOR_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "bundle was trained with r = {r:.4}; s = {s} in k = {k} steps needs r = {required:.4} (within 1%)"
        )));
    }
    let top = bundle
        .finest_available()
        .ok_or(Error::ScaleUnavailable {
            requested: 0,
            available: 0,
        })?;
    if top == 0 {
        return Err(Error::InvalidArgument(
            "super-resolution needs a residual scale above 0".into(),
        ));
    }
    let model = bundle.model(top)?;
    let src = Dims::of(low_res);
    let mut y = low_res.clone();
    for j in 1..=k {
        let f = s.powf(j as f64 / k as f64);
        let d = Dims::new(round_dim(src.height as f64 * f), round_dim(src.width as f64 * f));
        let up = upscale(&y, d)?;
        let noise = NoiseMap::new(d, derive_seed(seed, j as u64), model.noise_amplitude);
        y = model.generate(&noise, Some(&up))?;
    }
    Ok(y)
}

/// Injects a clip-art image at a coarse scale (1 or 2; others are clamped
/// with a warning) and refines to the finest available scale.
pub fn paint2image(
    bundle: &TrainedBundle,
    clipart: &ImageGrid,
    at_scale: usize,
    seed: u64,
) -> Result<ImageGrid> {
    let at = at_scale.clamp(PAINT_SCALES[0], PAINT_SCALES[1]);
    if at != at_scale {
        log::warn!("paint2image scale {at_scale} is outside 1..=2; using {at}");
    }
    let top = bundle.finest_available().unwrap_or(0);
    inject(bundle, clipart, at, top, seed)
}

fn masked_inject(
    bundle: &TrainedBundle,
    image: &ImageGrid,
    mask: &Mask,
    at_scale: usize,
    seed: u64,
) -> Result<ImageGrid> {
    if mask.dims != Dims::of(image) {
        return Err(Error::DimMismatch {
            expected: Dims::of(image),
            got: mask.dims,
        });
    }
    let region = mask.dilate(MASK_DILATION_PX);
    if region.count() == 0 {
        return Ok(image.clone());
    }
    let top = bundle.finest_available().unwrap_or(0);
    let generated = inject(bundle, image, at_scale, top, seed)?;
    let generated = if Dims::of(&generated) == mask.dims {
        generated
    } else {
        resample(&generated, mask.dims)
    };
    let plane = image.plane();
    let mut out = image.clone();
    for c in 0..image.channels {
        for (p, &editable) in region.bits.iter().enumerate() {
            if editable {
                out.data[c * plane + p] = generated.data[c * plane + p];
            }
        }
    }
    Ok(out)
}

/// Allowed harmonization scales: the three finest of the schedule, above 0.
pub fn harmonize_window(bundle: &TrainedBundle) -> std::ops::RangeInclusive<usize> {
    let s = bundle.manifest.schedule.scale_count;
    s.saturating_sub(3).max(1)..=s.saturating_sub(1)
}

/// Blends a pasted object into its background. Pixels outside the mask
/// dilated by [`MASK_DILATION_PX`] are copied from `composite` unchanged.
pub fn harmonize(
    bundle: &TrainedBundle,
    composite: &ImageGrid,
    mask: &Mask,
    at_scale: usize,
    seed: u64,
) -> Result<ImageGrid> {
    let window = harmonize_window(bundle);
    if !window.contains(&at_scale) {
        return Err(Error::InvalidArgument(format!(
            "harmonization scale {at_scale} outside {}..={}",
            window.start(),
            window.end()
        )));
    }
    masked_inject(bundle, composite, mask, at_scale, seed)
}

/// Regenerates a user-edited region at a coarse-to-mid scale (1..=4).
pub fn edit(
    bundle: &TrainedBundle,
    edited: &ImageGrid,
    mask: &Mask,
    at_scale: usize,
    seed: u64,
) -> Result<ImageGrid> {
    if !EDIT_SCALE_RANGE.contains(&at_scale) {
        return Err(Error::InvalidArgument(format!(
            "editing scale {at_scale} outside 1..=4"
        )));
    }
    masked_inject(bundle, edited, mask, at_scale, seed)
}

/// One application run. Unset scales take the per-kind defaults; for
/// super-resolution the caller picks `sr_steps` and the factor follows as
/// `r^k` unless `sr_factor` is given.
#[derive(Clone, Debug, PartialEq)]
pub struct EditRequest {
    pub kind: EditKind,
    pub image: ImageGrid,
    pub mask: Option<Mask>,
    pub at_scale: Option<usize>,
    pub sr_factor: Option<f64>,
    pub sr_steps: Option<usize>,
    pub seed: u64,
}

impl EditRequest {
    pub fn new(kind: EditKind, image: ImageGrid, seed: u64) -> Self {
        Self {
            kind,
            image,
            mask: None,
            at_scale: None,
            sr_factor: None,
            sr_steps: None,
            seed,
        }
    }

    /// Injection scale after defaults: paint 1, harmonization `S - 2`,
    /// editing 2.
    pub fn scale_for(&self, bundle: &TrainedBundle) -> usize {
        self.at_scale.unwrap_or(match self.kind {
            EditKind::Paint2image => DEFAULT_PAINT_SCALE,
            EditKind::Harmonization => {
                let w = harmonize_window(bundle);
                bundle.manifest.schedule.scale_count.saturating_sub(2).clamp(*w.start(), *w.end())
            }
            EditKind::Editing => DEFAULT_EDIT_SCALE,
            EditKind::SuperResolution => bundle.finest_available().unwrap_or(0),
        })
    }
}

pub fn apply(bundle: &TrainedBundle, req: &EditRequest) -> Result<ImageGrid> {
    let need_mask = || {
        req.mask
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("{:?} needs a mask", req.kind)))
    };
    match req.kind {
        EditKind::SuperResolution => {
            let k = req.sr_steps.unwrap_or(1);
            let s = req
                .sr_factor
                .unwrap_or_else(|| bundle.factor().powi(k as i32));
            super_resolution(bundle, &req.image, s, k, req.seed)
        }
        EditKind::Paint2image => paint2image(bundle, &req.image, req.scale_for(bundle), req.seed),
        EditKind::Harmonization => {
            harmonize(bundle, &req.image, &need_mask()?, req.scale_for(bundle), req.seed)
        }
        EditKind::Editing => edit(bundle, &req.image, &need_mask()?, req.scale_for(bundle), req.seed),
    }
}

/// Variance of the 4-neighbour Laplacian of the luminance plane; a
/// sharpness proxy.
pub fn laplacian_variance(img: &ImageGrid) -> f64 {
    let l = crate::metrics::luminance(img);
    let (h, w) = (img.height, img.width);
    if h < 3 || w < 3 {
        return 0.0;
    }
    let mut vals = Vec::with_capacity((h - 2) * (w - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = l[y * w + x];
            vals.push(l[(y - 1) * w + x] + l[(y + 1) * w + x] + l[y * w + x - 1] + l[y * w + x + 1] - 4.0 * c);
        }
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan_models::ScaleModel;
    use crate::inference::inject;
    use crate::pyramid::compute_scale_schedule;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle_with(r_target: f64, side: usize) -> TrainedBundle {
        let sched = compute_scale_schedule(Dims::new(side, side), side, 25, r_target).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let models = (0..sched.scale_count)
            .map(|i| ScaleModel::new(i, 0.1, i as u64, &mut rng))
            .collect();
        TrainedBundle::new("e", "h", sched, 0, 0.8, 1, models, &[]).unwrap()
    }

    #[test]
    fn dilation_is_a_disk() {
        let mut m = Mask::empty(Dims::new(21, 21));
        m.bits[10 * 21 + 10] = true;
        let d = m.dilate(3);
        assert!(d.get(10, 13) && d.get(13, 10) && d.get(12, 12));
        assert!(!d.get(13, 13) && !d.get(10, 14));
        assert_eq!(d.count(), 29);
    }

    #[test]
    fn super_resolution_dims_and_factor_check() {
        let b = bundle_with(4.0 / 3.0, 60);
        let r = b.factor();
        let lr = synthetic::texture(Dims::new(30, 20), 2);
        for k in 1..=3 {
            let s = r.powi(k as i32);
            let y = super_resolution(&b, &lr, s, k, 1).unwrap();
            assert_eq!(Dims::of(&y), Dims::new(round_dim(30.0 * s), round_dim(20.0 * s)));
        }
        assert!(super_resolution(&b, &lr, 4.0, 1, 1).is_err());
    }

    #[test]
    fn masked_apps_contracts() {
        let b = bundle_with(4.0 / 3.0, 60);
        let top = b.scale_count() - 1;
        let dims = b.dims(top);
        let bg = synthetic::texture(dims, 1);
        let (composite, grid) = synthetic::paste(&bg, &synthetic::clipart(Dims::new(12, 12), 2), 20, 20);
        let mask = Mask::from_grid(&grid);
        let at = *harmonize_window(&b).end();
        let empty = harmonize(&b, &composite, &Mask::empty(dims), at, 3).unwrap();
        assert_eq!(empty, composite);
        let full = harmonize(&b, &composite, &Mask::full(dims), at, 3).unwrap();
        assert_eq!(full, inject(&b, &composite, at, top, 3).unwrap());
        let out = harmonize(&b, &composite, &mask, at, 3).unwrap();
        let region = mask.dilate(MASK_DILATION_PX);
        let plane = dims.area();
        for c in 0..3 {
            for p in 0..plane {
                if !region.bits[p] {
                    assert_eq!(out.data[c * plane + p].to_bits(), composite.data[c * plane + p].to_bits());
                }
            }
        }
        assert_ne!(out, composite);
        assert!(edit(&b, &composite, &mask, 5, 3).is_err());
        assert!(harmonize(&b, &composite, &Mask::empty(Dims::new(3, 3)), at, 3).is_err());
    }

    #[test]
    fn paint2image_clamps_scale() {
        let b = bundle_with(4.0 / 3.0, 60);
        let art = synthetic::clipart(Dims::new(40, 40), 1);
        let a = paint2image(&b, &art, 7, 5).unwrap();
        assert_eq!(a, paint2image(&b, &art, 2, 5).unwrap());
        assert_eq!(Dims::of(&a), b.dims(b.scale_count() - 1));
    }

    #[test]
    fn laplacian_variance_of_flat_and_checker() {
        assert_eq!(laplacian_variance(&ImageGrid::full(3, 8, 8, 0.3)), 0.0);
        let c = synthetic::checkerboard(Dims::new(8, 8), 1, -1.0, 1.0);
        assert!(laplacian_variance(&c) > 1.0);
    }
}
