//! Per-scale generator and Markovian discriminator.
//!
//! Both networks are five 3×3 convolution blocks. Blocks 0..4 are
//! `conv -> batch norm -> LeakyReLU(0.2)`. The generator's last block is
//! `conv -> batch norm -> tanh` producing 3 channels; the discriminator's last
//! block is a bare `conv` producing a 1-channel patch score map whose spatial
//! mean is the image score. Width starts at 32 kernels per block and doubles
//! every four scales.
//!
//! For scales above 0 the generator is residual:
//! `out = clamp(coarse + net(coarse + noise), -1, 1)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, BlockSpec, ConvNet, NetArch, ParamSlot, Tape};
use crate::noise::NoiseMap;
use crate::pyramid::{Dims, ImageGrid};
use crate::tensor::{Scalar, Tensor};

pub const BLOCKS: usize = 5;
pub const BASE_CHANNELS: usize = 32;
pub const SCALES_PER_WIDTH_BAND: usize = 4;
pub const INIT_STD: f64 = 0.02;
pub const IMAGE_CHANNELS: usize = 3;
/// Smallest image side the discriminator accepts: one full kernel extent.
pub const MIN_DISCRIMINATOR_SIDE: usize = crate::nn::KERNEL;

pub fn channels_for_scale(scale_index: usize) -> usize {
    BASE_CHANNELS << (scale_index / SCALES_PER_WIDTH_BAND)
}

fn trunk(channels: usize) -> Vec<BlockSpec> {
    let hidden = |cin| BlockSpec {
        in_channels: cin,
        out_channels: channels,
        batch_norm: true,
        activation: Activation::LeakyRelu,
    };
    let mut blocks = vec![hidden(IMAGE_CHANNELS)];
    blocks.extend((1..BLOCKS - 1).map(|_| hidden(channels)));
    blocks
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub scale_index: usize,
    pub channels: usize,
    pub arch: NetArch,
}

impl GeneratorSpec {
    pub fn for_scale(scale_index: usize) -> Self {
        let channels = channels_for_scale(scale_index);
        let mut blocks = trunk(channels);
        blocks.push(BlockSpec {
            in_channels: channels,
            out_channels: IMAGE_CHANNELS,
            batch_norm: true,
            activation: Activation::Tanh,
        });
        Self {
            scale_index,
            channels,
            arch: NetArch::new(blocks),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSpec {
    pub scale_index: usize,
    pub channels: usize,
    pub arch: NetArch,
}

impl DiscriminatorSpec {
    pub fn for_scale(scale_index: usize) -> Self {
        let channels = channels_for_scale(scale_index);
        let mut blocks = trunk(channels);
        blocks.push(BlockSpec {
            in_channels: channels,
            out_channels: 1,
            batch_norm: false,
            activation: Activation::Identity,
        });
        Self {
            scale_index,
            channels,
            arch: NetArch::new(blocks),
        }
    }
}

/// Trainable scalars of `G_i` plus `D_i`.
pub fn param_count(scale_index: usize) -> usize {
    GeneratorSpec::for_scale(scale_index).arch.param_count()
        + DiscriminatorSpec::for_scale(scale_index).arch.param_count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<S> {
    pub scale_index: usize,
    pub net: ConvNet<S>,
}

/// Forward record of a generator pass, consumed by [`Generator::backward`].
pub struct GeneratorTape<S> {
    tape: Tape<S>,
    residual: bool,
    /// Pre-clamp sum for residual scales; gradient flows where it lies in `[-1, 1]`.
    unclamped: Option<Tensor<S>>,
    pub output: Tensor<S>,
}

impl<S: Scalar> Generator<S> {
    pub fn new(scale_index: usize, rng: &mut impl Rng) -> Self {
        Self {
            scale_index,
            net: ConvNet::init_gaussian(GeneratorSpec::for_scale(scale_index).arch, INIT_STD, rng),
        }
    }

    pub fn zeroed(scale_index: usize) -> Self {
        Self {
            scale_index,
            net: ConvNet::zeroed(GeneratorSpec::for_scale(scale_index).arch),
        }
    }

    fn check(&self, noise: &Tensor<S>, coarse: Option<&Tensor<S>>) -> Result<()> {
        if noise.channels != IMAGE_CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "noise must have {IMAGE_CHANNELS} channels, got {}",
                noise.channels
            )));
        }
        match (self.scale_index, coarse) {
            (0, Some(_)) => Err(Error::InvalidArgument(
                "scale 0 is purely generative and takes no coarse input".into(),
            )),
            (i, None) if i > 0 => Err(Error::InvalidArgument(format!(
                "scale {i} needs a coarse input"
            ))),
            (_, Some(c)) if !c.same_shape(noise) => Err(Error::DimMismatch {
                expected: Dims::new(noise.height, noise.width),
                got: Dims::new(c.height, c.width),
            }),
            _ => Ok(()),
        }
    }

    pub fn forward(&self, noise: &Tensor<S>, coarse: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        self.check(noise, coarse)?;
        Ok(match coarse {
            None => self.net.forward(noise),
            Some(c) => {
                let r = self.net.forward(&c.add(noise));
                c.zip_map(&r, |a, b| (a + b).max(-S::one()).min(S::one()))
            }
        })
    }

    pub fn forward_taped(
        &self,
        noise: &Tensor<S>,
        coarse: Option<&Tensor<S>>,
    ) -> Result<GeneratorTape<S>> {
        self.check(noise, coarse)?;
        Ok(match coarse {
            None => {
                let tape = self.net.forward_taped(noise);
                let output = tape.output().clone();
                GeneratorTape {
                    tape,
                    residual: false,
                    unclamped: None,
                    output,
                }
            }
            Some(c) => {
                let tape = self.net.forward_taped(&c.add(noise));
                let sum = c.add(tape.output());
                let output = sum.map(|v| v.max(-S::one()).min(S::one()));
                GeneratorTape {
                    tape,
                    residual: true,
                    unclamped: Some(sum),
                    output,
                }
            }
        })
    }

    /// Parameter gradient of `<grad_out, output>`.
    pub fn backward(&self, tape: &GeneratorTape<S>, grad_out: &Tensor<S>) -> Vec<S> {
        let upstream = if tape.residual {
            let sum = tape.unclamped.as_ref().unwrap();
            grad_out.zip_map(sum, |g, s| {
                if s.abs() <= S::one() {
                    g
                } else {
                    S::zero()
                }
            })
        } else {
            grad_out.clone()
        };
        self.net.backward(&tape.tape, &upstream).1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<S> {
    pub scale_index: usize,
    pub net: ConvNet<S>,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(scale_index: usize, rng: &mut impl Rng) -> Self {
        Self {
            scale_index,
            net: ConvNet::init_gaussian(
                DiscriminatorSpec::for_scale(scale_index).arch,
                INIT_STD,
                rng,
            ),
        }
    }

    pub fn zeroed(scale_index: usize) -> Self {
        Self {
            scale_index,
            net: ConvNet::zeroed(DiscriminatorSpec::for_scale(scale_index).arch),
        }
    }

    fn check(&self, image: &Tensor<S>) -> Result<()> {
        if image.channels != IMAGE_CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "discriminator expects {IMAGE_CHANNELS} channels, got {}",
                image.channels
            )));
        }
        if image.height.min(image.width) < MIN_DISCRIMINATOR_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image {}x{} is smaller than the discriminator minimum side {MIN_DISCRIMINATOR_SIDE}",
                image.height, image.width
            )));
        }
        Ok(())
    }

    /// Patch score map (1 channel, same spatial dims as the input).
    pub fn score_map(&self, image: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(image)?;
        Ok(self.net.forward(image))
    }

    pub fn score(&self, image: &Tensor<S>) -> Result<S> {
        Ok(self.score_map(image)?.mean())
    }

    /// Score plus the gradients of `weight * score` with respect to the input
    /// image and the discriminator parameters.
    pub fn score_with_grads(&self, image: &Tensor<S>, weight: S) -> Result<(S, Tensor<S>, Vec<S>)> {
        self.check(image)?;
        let tape = self.net.forward_taped(image);
        let map = tape.output();
        let score = map.mean();
        let g = weight / S::from_usize(map.len());
        let grad_map = Tensor::full(map.channels, map.height, map.width, g);
        let (dx, dp) = self.net.backward(&tape, &grad_map);
        Ok((score, dx, dp))
    }
}

/// Trained generator/discriminator pair for one scale.
#[derive(Clone, Debug)]
pub struct ScaleModel {
    pub scale_index: usize,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    /// Standard deviation of the scale's input noise.
    pub noise_amplitude: f32,
    /// Seed of the fixed noise used for reconstruction (scale 0) and exit evaluation.
    pub rec_seed: u64,
    /// Per-iteration losses; training telemetry, not part of model identity.
    pub history: Vec<IterationLosses>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationLosses {
    pub iteration: usize,
    pub d_loss: f32,
    pub g_loss: f32,
    pub rec_loss: f32,
    pub lr: f32,
}

/// Model identity is the weights, noise settings and scale index.
impl PartialEq for ScaleModel {
    fn eq(&self, other: &Self) -> bool {
        self.scale_index == other.scale_index
            && self.noise_amplitude.to_bits() == other.noise_amplitude.to_bits()
            && self.rec_seed == other.rec_seed
            && bits_equal(&self.generator.net.params, &other.generator.net.params)
            && bits_equal(&self.discriminator.net.params, &other.discriminator.net.params)
    }
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl ScaleModel {
    pub fn new(scale_index: usize, noise_amplitude: f32, rec_seed: u64, rng: &mut impl Rng) -> Self {
        assert!(noise_amplitude >= 0.0, "noise amplitude must be non-negative");
        let generator = Generator::new(scale_index, rng);
        let discriminator = Discriminator::new(scale_index, rng);
        Self {
            scale_index,
            generator,
            discriminator,
            noise_amplitude,
            rec_seed,
            history: Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.generator.net.params.len() + self.discriminator.net.params.len()
    }

    /// Stable enumeration of every parameter tensor: generator first, then
    /// discriminator, each in block order.
    pub fn named_parameters(&self) -> Vec<(ParamSlot, &[f32])> {
        let g = self.generator.net.arch.layout("generator.");
        let d = self.discriminator.net.arch.layout("discriminator.");
        g.into_iter()
            .map(|s| {
                let v = &self.generator.net.params[s.range()];
                (s, v)
            })
            .chain(d.into_iter().map(|s| {
                let v = &self.discriminator.net.params[s.range()];
                (s, v)
            }))
            .collect()
    }

    /// Flat parameter vector in [`Self::named_parameters`] order.
    pub fn flat_params(&self) -> Vec<f32> {
        let mut v = self.generator.net.params.clone();
        v.extend_from_slice(&self.discriminator.net.params);
        v
    }

    /// Rebuilds a model from a flat parameter vector.
    pub fn from_flat(
        scale_index: usize,
        noise_amplitude: f32,
        rec_seed: u64,
        flat: &[f32],
    ) -> Result<Self> {
        let g_arch = GeneratorSpec::for_scale(scale_index).arch;
        let d_arch = DiscriminatorSpec::for_scale(scale_index).arch;
        let (gn, dn) = (g_arch.param_count(), d_arch.param_count());
        if flat.len() != gn + dn {
            return Err(Error::InvalidArgument(format!(
                "scale {scale_index} expects {} parameters, got {}",
                gn + dn,
                flat.len()
            )));
        }
        Ok(Self {
            scale_index,
            generator: Generator {
                scale_index,
                net: ConvNet {
                    arch: g_arch,
                    params: flat[..gn].to_vec(),
                },
            },
            discriminator: Discriminator {
                scale_index,
                net: ConvNet {
                    arch: d_arch,
                    params: flat[gn..].to_vec(),
                },
            },
            noise_amplitude,
            rec_seed,
            history: Vec::new(),
        })
    }

    /// The scale's fixed noise map at `dims`, amplitude `noise_amplitude`.
    pub fn fixed_noise(&self, dims: Dims) -> NoiseMap {
        NoiseMap::new(dims, self.rec_seed, self.noise_amplitude)
    }

    pub fn generate(&self, noise: &NoiseMap, coarse: Option<&ImageGrid>) -> Result<ImageGrid> {
        self.generator.forward(&noise.values, coarse)
    }
}
