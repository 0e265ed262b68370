//! SSIM and the training losses (WGAN-GP adversarial term, gradient penalty,
//! reconstruction MSE).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::{self, Dual};
use crate::error::{Error, Result};
use crate::gan_models::{Discriminator, ScaleModel};
use crate::nn::ConvNet;
use crate::noise::NoiseMap;
use crate::pyramid::{upscale, Dims, ImageGrid};
use crate::tensor::{Scalar, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of the luminance plane SSIM is computed on.
pub const SSIM_RANGE: f64 = 1.0;
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimReport {
    pub value: f64,
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

/// BT.601 luminance of an image mapped from `[-1, 1]` to `[0, 1]`.
/// Single-channel inputs are mapped without mixing.
pub fn luminance(img: &ImageGrid) -> Vec<f64> {
    let plane = img.plane();
    let to_unit = |v: f32| (v as f64 + 1.0) * 0.5;
    if img.channels == 1 {
        return img.data.iter().map(|&v| to_unit(v)).collect();
    }
    (0..plane)
        .map(|i| {
            (0..3)
                .map(|c| LUMA[c] * to_unit(img.data[c * plane + i]))
                .sum()
        })
        .collect()
}

/// Normalized 1-D Gaussian taps; the window shrinks (odd) for small images.
pub fn gaussian_window(len: usize) -> Vec<f64> {
    let half = (len / 2) as f64;
    let mut w: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

pub fn window_len(dims: Dims) -> usize {
    let m = dims.min_side().min(SSIM_WINDOW);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Valid-mode separable filtering of a `h×w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, &t)| t * plane[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, &t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

pub fn ssim_report(x: &ImageGrid, y: &ImageGrid) -> Result<SsimReport> {
    if x.height != y.height || x.width != y.width || x.channels != y.channels {
        return Err(Error::DimMismatch {
            expected: Dims::of(x),
            got: Dims::of(y),
        });
    }
    let dims = Dims::of(x);
    let (h, w) = (dims.height, dims.width);
    let len = window_len(dims);
    let taps = gaussian_window(len);
    let lx = luminance(x);
    let ly = luminance(y);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_x = filter_valid(&lx, h, w, &taps);
    let mu_y = filter_valid(&ly, h, w, &taps);
    let e_xx = filter_valid(&prod(&lx, &lx), h, w, &taps);
    let e_yy = filter_valid(&prod(&ly, &ly), h, w, &taps);
    let e_xy = filter_valid(&prod(&lx, &ly), h, w, &taps);
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(SsimReport {
        value: total / n as f64,
        window: len,
        sigma: SSIM_SIGMA,
        c1,
        c2,
    })
}

/// Mean SSIM over all valid Gaussian windows of the luminance planes.
pub fn ssim(x: &ImageGrid, y: &ImageGrid) -> Result<f64> {
    Ok(ssim_report(x, y)?.value)
}

/// WGAN losses: `(generator, discriminator)`.
pub fn adversarial_loss(d_real: f64, d_fake: f64, gp: f64, gp_weight: f64) -> (f64, f64) {
    debug_assert!(gp_weight >= 0.0);
    let gen = -d_fake;
    let disc = d_fake - d_real + gp_weight * gp;
    (gen, disc)
}

/// Anything with a scalar output and an input gradient.
pub trait Critic<S: Scalar> {
    fn value_and_input_grad(&self, x: &Tensor<S>) -> Result<(S, Tensor<S>)>;
}

impl<S: Scalar> Critic<S> for Discriminator<S> {
    fn value_and_input_grad(&self, x: &Tensor<S>) -> Result<(S, Tensor<S>)> {
        let (s, dx, _) = self.score_with_grads(x, S::one())?;
        Ok((s, dx))
    }
}

/// Interpolation coefficient drawn uniformly from `[0, 1)` by `mix_seed`.
pub fn mix_epsilon(mix_seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(mix_seed).random::<f64>()
}

pub fn interpolate<S: Scalar>(real: &Tensor<S>, fake: &Tensor<S>, eps: S) -> Tensor<S> {
    real.zip_map(fake, |r, f| eps * r + (S::one() - eps) * f)
}

/// `(‖∇_x D(x̂)‖₂ − 1)²` at `x̂ = ε·real + (1−ε)·fake`.
pub fn gradient_penalty<S: Scalar, C: Critic<S>>(
    critic: &C,
    real: &Tensor<S>,
    fake: &Tensor<S>,
    mix_seed: u64,
) -> Result<S> {
    if !real.same_shape(fake) {
        return Err(Error::DimMismatch {
            expected: Dims::new(real.height, real.width),
            got: Dims::new(fake.height, fake.width),
        });
    }
    let eps = S::lit(mix_epsilon(mix_seed));
    let (_, g) = critic.value_and_input_grad(&interpolate(real, fake, eps))?;
    let n = g.norm() - S::one();
    Ok(n * n)
}

/// Gradient penalty at `point` and its gradient with respect to the
/// discriminator parameters, scaled by `weight`.
///
/// The parameter gradient of `(‖g‖ − 1)²` is `2(‖g‖−1)/‖g‖ · J_θ(g)ᵀ g`. The
/// mixed product `J_θ(g)ᵀ g` is the derivative of `∇_θ D(x̂ + t·g)` at `t = 0`,
/// obtained exactly by running the backward pass on dual numbers.
pub fn penalty_and_param_grad<S: Scalar>(
    disc: &Discriminator<S>,
    point: &Tensor<S>,
    weight: S,
) -> Result<(S, Vec<S>)> {
    let (_, g, _) = disc.score_with_grads(point, S::one())?;
    let norm = g.norm();
    let penalty = (norm - S::one()) * (norm - S::one());
    if norm <= S::lit(1e-12) || weight == S::zero() {
        return Ok((penalty, vec![S::zero(); disc.net.params.len()]));
    }
    let lifted = Discriminator {
        scale_index: disc.scale_index,
        net: ConvNet {
            arch: disc.net.arch.clone(),
            params: dual::lift(&disc.net.params),
        },
    };
    let (_, _, dp) = lifted.score_with_grads(&dual::seed_tangent(point, &g), Dual::lit(1.0))?;
    let coef = weight * S::lit(2.0) * (norm - S::one()) / norm;
    Ok((penalty, dp.iter().map(|d| coef * d.du).collect()))
}

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

/// `‖G_0(z*) − X_0‖²` at scale 0 (fixed noise), `‖G_i(0, ↑X_{i−1}) − X_i‖²`
/// above; mean over pixels and channels. `coarse_real` is `X_{i−1}`, upscaled
/// here to the target dims when needed.
pub fn reconstruction_loss(
    model: &ScaleModel,
    coarse_real: Option<&ImageGrid>,
    target: &ImageGrid,
) -> Result<f64> {
    let dims = Dims::of(target);
    let out = match coarse_real {
        None => model.generate(&model.fixed_noise(dims), None)?,
        Some(c) => {
            let up = upscale(c, dims)?;
            model.generate(&NoiseMap::zeros(dims), Some(&up))?
        }
    };
    Ok(mse(&out, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan_models::Generator;
    use crate::synthetic;

    /// Per-window statistics evaluated directly from the 2-D weight grid,
    /// independent of the separable filtering path.
    fn brute_force_ssim(x: &ImageGrid, y: &ImageGrid) -> f64 {
        let dims = Dims::of(x);
        let k = window_len(dims);
        let g1 = gaussian_window(k);
        let lx = luminance(x);
        let ly = luminance(y);
        let c1 = (0.01f64).powi(2);
        let c2 = (0.03f64).powi(2);
        let mut acc = 0.0;
        let mut count = 0;
        for top in 0..=dims.height - k {
            for left in 0..=dims.width - k {
                let mut mx = 0.0;
                let mut my = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        let w = g1[i] * g1[j];
                        let p = (top + i) * dims.width + left + j;
                        mx += w * lx[p];
                        my += w * ly[p];
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let w = g1[i] * g1[j];
                        let p = (top + i) * dims.width + left + j;
                        vx += w * (lx[p] - mx).powi(2);
                        vy += w * (ly[p] - my).powi(2);
                        cxy += w * (lx[p] - mx) * (ly[p] - my);
                    }
                }
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn ssim_identity_is_one() {
        let x = synthetic::texture(Dims::new(30, 26), 1);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_brute_force_on_random_pairs() {
        for seed in 0..10 {
            let x = NoiseMap::new(Dims::new(16, 16), seed, 0.5).values.map(|v| v.clamp(-1.0, 1.0));
            let y = NoiseMap::new(Dims::new(16, 16), seed + 100, 0.5).values.map(|v| v.clamp(-1.0, 1.0));
            let fast = ssim(&x, &y).unwrap();
            let slow = brute_force_ssim(&x, &y);
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        }
    }

    #[test]
    fn ssim_of_inverted_checkerboard_closed_form() {
        // Luminance is binary (0/1) and y = 1 - x, so for each window with
        // weighted white fraction m: mu_x = m, mu_y = 1 - m,
        // var_x = var_y = m(1 - m), cov = -m(1 - m).
        let dims = Dims::new(16, 16);
        let x = synthetic::checkerboard(dims, 1, -1.0, 1.0);
        let y = x.map(|v| -v);
        let k = window_len(dims);
        let g = gaussian_window(k);
        let (c1, c2) = (1e-4, 9e-4);
        let mut acc = 0.0;
        let mut n = 0;
        for top in 0..=dims.height - k {
            for left in 0..=dims.width - k {
                let mut m = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        if (top + i + left + j) % 2 == 1 {
                            m += g[i] * g[j];
                        }
                    }
                }
                let v = m * (1.0 - m);
                acc += ((2.0 * m * (1.0 - m) + c1) * (-2.0 * v + c2))
                    / ((m * m + (1.0 - m) * (1.0 - m) + c1) * (2.0 * v + c2));
                n += 1;
            }
        }
        let want = acc / n as f64;
        let got = ssim(&x, &y).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!(got < -0.9);
    }

    #[test]
    fn ssim_symmetric_and_checks_dims() {
        let x = synthetic::texture(Dims::new(20, 20), 1);
        let y = synthetic::texture(Dims::new(20, 20), 2);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-9);
        let z = synthetic::texture(Dims::new(20, 21), 2);
        assert!(matches!(ssim(&x, &z), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn ssim_small_images_shrink_window() {
        let x = synthetic::texture(Dims::new(6, 9), 1);
        let r = ssim_report(&x, &x).unwrap();
        assert_eq!(r.window, 5);
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adversarial_loss_cases() {
        assert_eq!(adversarial_loss(1.0, 0.0, 0.0, 0.1).1, -1.0);
        let (_, d) = adversarial_loss(0.0, 0.0, 4.0, 0.1);
        assert!((d - 0.4).abs() < 1e-12);
        assert_eq!(adversarial_loss(0.0, 2.0, 0.0, 0.1).0, -2.0);
    }

    struct Linear(Tensor<f64>);

    impl Critic<f64> for Linear {
        fn value_and_input_grad(&self, x: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
            Ok((self.0.dot(x), self.0.clone()))
        }
    }

    #[test]
    fn linear_critic_penalty_is_analytic() {
        let w = NoiseMap::new(Dims::new(8, 8), 3, 0.2).values.cast::<f64>();
        let real = synthetic::texture(Dims::new(8, 8), 1).cast::<f64>();
        let fake = synthetic::texture(Dims::new(8, 8), 2).cast::<f64>();
        let want = (w.norm() - 1.0).powi(2);
        for seed in 0..5 {
            let p = gradient_penalty(&Linear(w.clone()), &real, &fake, seed).unwrap();
            assert!((p - want).abs() < 1e-12);
        }
        let unit = w.scale(1.0 / w.norm());
        assert!(gradient_penalty(&Linear(unit), &real, &fake, 0).unwrap().abs() < 1e-20);
    }

    #[test]
    fn penalty_param_grad_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d32 = Discriminator::<f32>::new(0, &mut rng);
        let d = Discriminator::<f64> {
            scale_index: 0,
            net: d32.net.cast(),
        };
        let dims = Dims::new(6, 6);
        let point = synthetic::texture(dims, 4).cast::<f64>();
        let (pen, grad) = penalty_and_param_grad(&d, &point, 1.0).unwrap();
        let pen_at = |dd: &Discriminator<f64>| {
            let (_, g, _) = dd.score_with_grads(&point, 1.0).unwrap();
            (g.norm() - 1.0).powi(2)
        };
        assert!((pen - pen_at(&d)).abs() < 1e-15);
        let fd = |i: usize, h: f64| {
            let mut p = d.clone();
            p.net.params[i] += h;
            let mut m = d.clone();
            m.net.params[i] -= h;
            (pen_at(&p) - pen_at(&m)) / (2.0 * h)
        };
        let scale = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let (mut checked, mut kinked) = (0, 0);
        for i in (0..d.net.params.len()).step_by(613) {
            let (coarse, fine) = (fd(i, 1e-5), fd(i, 1e-7));
            // a LeakyReLU kink inside the stencil shows up as step-size dependence
            if (coarse - fine).abs() > 1e-4 * scale {
                kinked += 1;
                continue;
            }
            assert!((fine - grad[i]).abs() < 1e-3 * scale, "param {i}: {fine} vs {}", grad[i]);
            checked += 1;
        }
        assert!(checked > 40 && kinked < 4, "checked {checked}, kinked {kinked}");
    }

    #[test]
    fn reconstruction_loss_of_copying_generator() {
        let dims = Dims::new(12, 12);
        let coarse = synthetic::texture(Dims::new(9, 9), 1);
        let target = synthetic::texture(dims, 2);
        let mut m = ScaleModel::new(1, 0.1, 7, &mut ChaCha8Rng::seed_from_u64(1));
        m.generator = Generator::zeroed(1);
        let up = upscale(&coarse, dims).unwrap();
        let got = reconstruction_loss(&m, Some(&coarse), &target).unwrap();
        assert!((got - mse(&up, &target)).abs() < 1e-12);
        assert_eq!(reconstruction_loss(&m, Some(&target), &target).unwrap(), 0.0);
    }

    #[test]
    fn mse_hand_case() {
        let a = ImageGrid::from_vec(1, 2, 2, vec![0.0, 0.5, -0.5, 1.0]);
        let b = ImageGrid::from_vec(1, 2, 2, vec![0.0, 0.0, 0.5, 0.0]);
        // (0 + 0.25 + 1 + 1) / 4
        assert!((mse(&a, &b) - 0.5625).abs() < 1e-12);
    }
}
