//! Coarse-to-fine generation and mid-pyramid injection.
//!
//! Inference never touches real images: `Y_0 = G_0(Z_0)` and
//! `Y_i = G_i(Z_i, ↑Y_{i-1})`. Noise at scale `i` is seeded by
//! `derive_seed(seed, i)` so truncating a run at scale `k` reproduces the
//! first `k + 1` steps of a longer run exactly.

use serde::{Deserialize, Serialize};

use crate::bundle::TrainedBundle;
use crate::error::{Error, Result};
use crate::noise::{derive_seed, NoiseMap};
use crate::pyramid::{resample, round_dim, upscale, Dims, ImageGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub up_to_scale: usize,
    /// Coarsest noise-map dims; the bundle's trained dims when absent.
    #[serde(default)]
    pub coarsest_dims: Option<Dims>,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip)]
    pub inject: Option<Injection>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub image: ImageGrid,
    pub at_scale: usize,
}

impl GenerationRequest {
    pub fn new(up_to_scale: usize, seed: u64) -> Self {
        Self {
            up_to_scale,
            coarsest_dims: None,
            seed,
            inject: None,
        }
    }
}

/// Per-scale dims of a generation: the bundle's schedule by default, or
/// `round(coarsest · r^i)` per axis for a custom coarsest size.
pub fn generation_dims(bundle: &TrainedBundle, coarsest: Option<Dims>, up_to: usize) -> Vec<Dims> {
    match coarsest {
        None => bundle.manifest.schedule.dims[..=up_to].to_vec(),
        Some(c) => {
            let r = bundle.factor();
            (0..=up_to)
                .map(|i| {
                    let k = r.powi(i as i32);
                    Dims::new(round_dim(c.height as f64 * k), round_dim(c.width as f64 * k))
                })
                .collect()
        }
    }
}

fn check_available(bundle: &TrainedBundle, scale: usize) -> Result<()> {
    if scale >= bundle.scale_count() {
        return Err(Error::ScaleUnavailable {
            requested: scale,
            available: bundle.scale_count(),
        });
    }
    Ok(())
}

fn scale_noise(bundle: &TrainedBundle, scale: usize, dims: Dims, seed: u64) -> Result<NoiseMap> {
    let amp = bundle.model(scale)?.noise_amplitude;
    Ok(NoiseMap::new(dims, derive_seed(seed, scale as u64), amp))
}

/// Refines `y` (an image at any dims) through scales `from..=to`.
fn refine(
    bundle: &TrainedBundle,
    mut y: ImageGrid,
    from: usize,
    to: usize,
    dims: &[Dims],
    seed: u64,
) -> Result<ImageGrid> {
    for (i, &d) in dims.iter().enumerate().take(to + 1).skip(from) {
        let up = if Dims::of(&y) == d { y } else { upscale(&y, d)? };
        let noise = scale_noise(bundle, i, d, seed)?;
        y = bundle.model(i)?.generate(&noise, Some(&up))?;
    }
    Ok(y)
}

pub fn generate(bundle: &TrainedBundle, request: &GenerationRequest) -> Result<ImageGrid> {
    if let Some(inj) = &request.inject {
        return inject(bundle, &inj.image, inj.at_scale, request.up_to_scale, request.seed);
    }
    check_available(bundle, request.up_to_scale)?;
    let dims = generation_dims(bundle, request.coarsest_dims, request.up_to_scale);
    if dims[0].min_side() < crate::gan_models::MIN_DISCRIMINATOR_SIDE {
        return Err(Error::InvalidArgument(format!(
            "coarsest dims {} are below the {}px kernel extent",
            dims[0],
            crate::gan_models::MIN_DISCRIMINATOR_SIDE
        )));
    }
    let z0 = scale_noise(bundle, 0, dims[0], request.seed)?;
    let y0 = bundle.model(0)?.generate(&z0, None)?;
    refine(bundle, y0, 1, request.up_to_scale, &dims, request.seed)
}

/// Resamples `image` to the bundle's dims at `at_scale`, feeds it to
/// `G_{at_scale}` in place of the upscaled coarser output, then refines
/// through `up_to_scale`. Scale 0 takes no image input and is rejected.
pub fn inject(
    bundle: &TrainedBundle,
    image: &ImageGrid,
    at_scale: usize,
    up_to_scale: usize,
    seed: u64,
) -> Result<ImageGrid> {
    if at_scale == 0 {
        return Err(Error::InvalidArgument(
            "injection needs a scale above 0; scale 0 only maps noise".into(),
        ));
    }
    if at_scale > up_to_scale {
        return Err(Error::InvalidArgument(format!(
            "injection scale {at_scale} is above the output scale {up_to_scale}"
        )));
    }
    check_available(bundle, up_to_scale)?;
    if image.channels != 3 {
        return Err(Error::InvalidArgument("injected image must be RGB".into()));
    }
    let dims = generation_dims(bundle, None, up_to_scale);
    let start = resample(image, dims[at_scale]);
    refine(bundle, start, at_scale, up_to_scale, &dims, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan_models::{Generator, ScaleModel};
    use crate::pyramid::compute_scale_schedule;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> TrainedBundle {
        let sched = compute_scale_schedule(Dims::new(60, 60), 60, 25, 4.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let models = (0..sched.scale_count)
            .map(|i| ScaleModel::new(i, 0.2, 50 + i as u64, &mut rng))
            .collect();
        TrainedBundle::new("t", "h", sched, 0, 0.8, 1, models, &[]).unwrap()
    }

    #[test]
    fn default_dims_follow_schedule() {
        let b = bundle();
        let top = b.scale_count() - 1;
        for k in 0..=top {
            let y = generate(&b, &GenerationRequest::new(k, 3)).unwrap();
            assert_eq!(Dims::of(&y), b.dims(k));
            assert!(y.data.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn custom_coarsest_dims_follow_r_chain() {
        let b = bundle();
        let r = b.factor();
        let mut req = GenerationRequest::new(2, 3);
        req.coarsest_dims = Some(Dims::new(25, 40));
        let y = generate(&b, &req).unwrap();
        let want = Dims::new(round_dim(25.0 * r * r), round_dim(40.0 * r * r));
        assert_eq!(Dims::of(&y), want);
    }

    #[test]
    fn deterministic_and_truncation_consistent() {
        let b = bundle();
        let a = generate(&b, &GenerationRequest::new(2, 9)).unwrap();
        assert_eq!(a, generate(&b, &GenerationRequest::new(2, 9)).unwrap());
        assert_ne!(a, generate(&b, &GenerationRequest::new(2, 10)).unwrap());
        let partial = b.prefix(3);
        assert_eq!(a, generate(&partial, &GenerationRequest::new(2, 9)).unwrap());
        assert!(matches!(
            generate(&partial, &GenerationRequest::new(3, 9)),
            Err(Error::ScaleUnavailable { requested: 3, available: 3 })
        ));
    }

    #[test]
    fn injection_at_output_scale_is_one_generator_pass() {
        let mut b = bundle();
        let top = b.scale_count() - 1;
        b.models[top].generator = Generator::zeroed(top);
        let img = synthetic::texture(b.dims(top), 4);
        // a zero residual network copies its (clamped) input
        let y = inject(&b, &img, top, top, 1).unwrap();
        assert_eq!(y, img);
    }

    #[test]
    fn injection_bounds() {
        let b = bundle();
        let img = synthetic::texture(Dims::new(30, 30), 1);
        assert!(inject(&b, &img, 0, 1, 0).is_err());
        assert!(inject(&b, &img, 2, 1, 0).is_err());
        assert!(matches!(
            inject(&b, &img, 1, 99, 0),
            Err(Error::ScaleUnavailable { .. })
        ));
    }
}
