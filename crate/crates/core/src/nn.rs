//! Sequential conv-net engine: `[conv3x3 -> (batch norm) -> activation] * n`
//! with a hand-written backward pass.
//!
//! Parameters live in one flat vector so the optimizer, serializer and the
//! named-parameter enumeration all share a single stable order:
//! for every block `weight [cout, cin, 3, 3]`, `bias [cout]`, then
//! `gamma [cout]`, `beta [cout]` when the block is normalized.
//!
//! Batch statistics are always computed over the spatial extent of the single
//! input image (batch size 1), both while training and at inference.

use serde::{Deserialize, Serialize};

use crate::tensor::{dot, sum, Scalar, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
pub const BN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub batch_norm: bool,
    pub activation: Activation,
}

impl BlockSpec {
    fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * TAPS
    }

    fn param_len(&self) -> usize {
        let norm = if self.batch_norm { 2 * self.out_channels } else { 0 };
        self.weight_len() + self.out_channels + norm
    }
}

/// Name, offset and shape of one parameter tensor in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
struct BlockOffsets {
    weight: usize,
    bias: usize,
    gamma: Option<usize>,
    beta: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub blocks: Vec<BlockSpec>,
}

impl NetArch {
    pub fn new(blocks: Vec<BlockSpec>) -> Self {
        for pair in blocks.windows(2) {
            assert_eq!(
                pair[0].out_channels, pair[1].in_channels,
                "block channel counts must chain"
            );
        }
        Self { blocks }
    }

    pub fn in_channels(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.in_channels)
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.out_channels)
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(BlockSpec::param_len).sum()
    }

    /// Side length of the square input region that influences one output
    /// sample (stride-1 3×3 convolutions stacked).
    pub fn receptive_field(&self) -> usize {
        1 + self.blocks.len() * (KERNEL - 1)
    }

    /// Multiply-accumulates of one forward pass over an `h×w` input.
    pub fn macs(&self, height: usize, width: usize) -> u64 {
        let plane = (height * width) as u64;
        self.blocks
            .iter()
            .map(|b| plane * b.weight_len() as u64)
            .sum()
    }

    fn offsets(&self) -> Vec<BlockOffsets> {
        let mut at = 0;
        self.blocks
            .iter()
            .map(|b| {
                let weight = at;
                let bias = weight + b.weight_len();
                at = bias + b.out_channels;
                let (gamma, beta) = if b.batch_norm {
                    let g = at;
                    at += 2 * b.out_channels;
                    (Some(g), Some(g + b.out_channels))
                } else {
                    (None, None)
                };
                BlockOffsets {
                    weight,
                    bias,
                    gamma,
                    beta,
                }
            })
            .collect()
    }

    /// Stable named enumeration of every parameter tensor.
    pub fn layout(&self, prefix: &str) -> Vec<ParamSlot> {
        let mut out = Vec::new();
        for (i, (b, o)) in self.blocks.iter().zip(self.offsets()).enumerate() {
            out.push(ParamSlot {
                name: format!("{prefix}block{i}.conv.weight"),
                offset: o.weight,
                shape: vec![b.out_channels, b.in_channels, KERNEL, KERNEL],
            });
            out.push(ParamSlot {
                name: format!("{prefix}block{i}.conv.bias"),
                offset: o.bias,
                shape: vec![b.out_channels],
            });
            if let (Some(g), Some(be)) = (o.gamma, o.beta) {
                out.push(ParamSlot {
                    name: format!("{prefix}block{i}.norm.weight"),
                    offset: g,
                    shape: vec![b.out_channels],
                });
                out.push(ParamSlot {
                    name: format!("{prefix}block{i}.norm.bias"),
                    offset: be,
                    shape: vec![b.out_channels],
                });
            }
        }
        out
    }
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape<S> {
    /// `acts[0]` is the network input, `acts[k + 1]` the output of block `k`.
    acts: Vec<Tensor<S>>,
    /// Normalized pre-activations and per-channel inverse std of normed blocks.
    norms: Vec<Option<(Tensor<S>, Vec<S>)>>,
}

impl<S: Scalar> Tape<S> {
    pub fn output(&self) -> &Tensor<S> {
        self.acts.last().expect("tape has at least the input")
    }

    pub fn input(&self) -> &Tensor<S> {
        &self.acts[0]
    }
}

/// A sequential conv-net: architecture plus flat parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNet<S> {
    pub arch: NetArch,
    pub params: Vec<S>,
}

impl<S: Scalar> ConvNet<S> {
    /// Zero weights and biases; batch-norm scale 1, shift 0.
    pub fn zeroed(arch: NetArch) -> Self {
        let mut params = vec![S::zero(); arch.param_count()];
        for o in arch.offsets().iter().zip(&arch.blocks) {
            if let Some(g) = o.0.gamma {
                params[g..g + o.1.out_channels].fill(S::one());
            }
        }
        Self { arch, params }
    }

    /// Zero-mean Gaussian conv kernels with the given std, zero biases,
    /// batch-norm scale 1 and shift 0.
    pub fn init_gaussian(arch: NetArch, std: f64, rng: &mut impl rand::Rng) -> Self {
        use rand_distr::{Distribution, Normal};
        let mut net = Self::zeroed(arch);
        let normal = Normal::new(0.0, std).expect("valid std");
        let offsets = net.arch.offsets();
        for (o, b) in offsets.iter().zip(net.arch.blocks.clone()) {
            for w in &mut net.params[o.weight..o.weight + b.weight_len()] {
                *w = S::lit(normal.sample(rng));
            }
        }
        net
    }

    pub fn cast<T: Scalar>(&self) -> ConvNet<T> {
        ConvNet {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|v| T::lit(v.to_f64()))
                .collect(),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let offsets = self.arch.offsets();
        let mut cur = x.clone();
        for (b, o) in self.arch.blocks.iter().zip(&offsets) {
            let mut y = self.conv(b, o, &cur);
            if b.batch_norm {
                self.norm_in_place(b, o, &mut y);
            }
            activate(b.activation, &mut y);
            cur = y;
        }
        cur
    }

    pub fn forward_taped(&self, x: &Tensor<S>) -> Tape<S> {
        let offsets = self.arch.offsets();
        let mut acts = Vec::with_capacity(self.arch.blocks.len() + 1);
        let mut norms = Vec::with_capacity(self.arch.blocks.len());
        acts.push(x.clone());
        for (b, o) in self.arch.blocks.iter().zip(&offsets) {
            let mut y = self.conv(b, o, acts.last().unwrap());
            if b.batch_norm {
                let (xhat, inv) = self.norm_in_place(b, o, &mut y);
                norms.push(Some((xhat, inv)));
            } else {
                norms.push(None);
            }
            activate(b.activation, &mut y);
            acts.push(y);
        }
        Tape { acts, norms }
    }

    /// Back-propagates `grad_out` (same shape as the network output).
    /// Returns the input gradient and the flat parameter gradient.
    pub fn backward(&self, tape: &Tape<S>, grad_out: &Tensor<S>) -> (Tensor<S>, Vec<S>) {
        let offsets = self.arch.offsets();
        let mut grads = vec![S::zero(); self.params.len()];
        let mut dy = grad_out.clone();
        for k in (0..self.arch.blocks.len()).rev() {
            let b = &self.arch.blocks[k];
            let o = &offsets[k];
            activation_backward(b.activation, &tape.acts[k + 1], &mut dy);
            if let Some((xhat, inv)) = &tape.norms[k] {
                let g = o.gamma.unwrap();
                let be = o.beta.unwrap();
                let gamma = &self.params[g..g + b.out_channels];
                let (dgamma, dbeta) = norm_backward(xhat, inv, gamma, &mut dy);
                grads[g..g + b.out_channels].copy_from_slice(&dgamma);
                grads[be..be + b.out_channels].copy_from_slice(&dbeta);
            }
            dy = self.conv_backward(b, o, &tape.acts[k], &dy, &mut grads);
        }
        (dy, grads)
    }

    fn conv(&self, b: &BlockSpec, o: &BlockOffsets, x: &Tensor<S>) -> Tensor<S> {
        assert_eq!(x.channels, b.in_channels, "conv input channel mismatch");
        let g = PadGeom::of(x);
        let xp = pad(x, &g);
        let mut wide = vec![S::zero(); b.out_channels * g.n];
        let w = &self.params[o.weight..o.weight + b.weight_len()];
        let (cin, cout) = (b.in_channels as isize, b.out_channels);
        for t in 0..TAPS {
            // SAFETY: the tap-shifted view of `xp` ends at index `cin·pp + 1`,
            // inside the two-element tail `pad` allocates; `wide` is `cout × n`.
            unsafe {
                S::gemm_raw(
                    cout,
                    b.in_channels,
                    g.n,
                    S::one(),
                    w.as_ptr().add(t),
                    (cin * TAPS as isize, TAPS as isize),
                    xp.as_ptr().add(g.offset(t)),
                    (g.pp as isize, 1),
                    if t == 0 { S::zero() } else { S::one() },
                    wide.as_mut_ptr(),
                    (g.n as isize, 1),
                );
            }
        }
        let bias = &self.params[o.bias..o.bias + b.out_channels];
        let mut y = Tensor::zeros(cout, g.h, g.w);
        for (c, &bv) in bias.iter().enumerate() {
            for yy in 0..g.h {
                let src = &wide[c * g.n + yy * g.wp..c * g.n + yy * g.wp + g.w];
                let dst = &mut y.data[(c * g.h + yy) * g.w..(c * g.h + yy + 1) * g.w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bv;
                }
            }
        }
        y
    }

    fn conv_backward(
        &self,
        b: &BlockSpec,
        o: &BlockOffsets,
        x: &Tensor<S>,
        dy: &Tensor<S>,
        grads: &mut [S],
    ) -> Tensor<S> {
        let g = PadGeom::of(x);
        let xp = pad(x, &g);
        let (cin, cout) = (b.in_channels, b.out_channels);
        let plane = g.h * g.w;
        for (gb, row) in grads[o.bias..o.bias + cout].iter_mut().zip(dy.data.chunks(plane)) {
            *gb = sum(row);
        }
        // dy in padded-width rows; the two junk columns per row stay zero
        let mut wide = vec![S::zero(); cout * g.n];
        for c in 0..cout {
            for yy in 0..g.h {
                wide[c * g.n + yy * g.wp..c * g.n + yy * g.wp + g.w]
                    .copy_from_slice(&dy.data[(c * g.h + yy) * g.w..(c * g.h + yy + 1) * g.w]);
            }
        }
        let mut dxp = vec![S::zero(); cin * g.pp + 2];
        let w = &self.params[o.weight..o.weight + b.weight_len()];
        let wstr = (cin * TAPS) as isize;
        let dw = &mut grads[o.weight..o.weight + b.weight_len()];
        for t in 0..TAPS {
            let off = g.offset(t);
            // SAFETY: same shifted-view bounds as the forward pass; `dw` and
            // `dxp` are distinct from the read-only operands.
            unsafe {
                S::gemm_raw(
                    cout,
                    g.n,
                    cin,
                    S::one(),
                    wide.as_ptr(),
                    (g.n as isize, 1),
                    xp.as_ptr().add(off),
                    (1, g.pp as isize),
                    S::zero(),
                    dw.as_mut_ptr().add(t),
                    (wstr, TAPS as isize),
                );
                S::gemm_raw(
                    cin,
                    cout,
                    g.n,
                    S::one(),
                    w.as_ptr().add(t),
                    (TAPS as isize, wstr),
                    wide.as_ptr(),
                    (g.n as isize, 1),
                    S::one(),
                    dxp.as_mut_ptr().add(off),
                    (g.pp as isize, 1),
                );
            }
        }
        let mut dx = Tensor::zeros(cin, g.h, g.w);
        for c in 0..cin {
            for yy in 0..g.h {
                let at = c * g.pp + (yy + 1) * g.wp + 1;
                dx.data[(c * g.h + yy) * g.w..(c * g.h + yy + 1) * g.w]
                    .copy_from_slice(&dxp[at..at + g.w]);
            }
        }
        dx
    }

    fn norm_in_place(
        &self,
        b: &BlockSpec,
        o: &BlockOffsets,
        y: &mut Tensor<S>,
    ) -> (Tensor<S>, Vec<S>) {
        let plane = y.plane();
        let n = S::from_usize(plane);
        let eps = S::lit(BN_EPS);
        let gamma = &self.params[o.gamma.unwrap()..o.gamma.unwrap() + b.out_channels];
        let beta = &self.params[o.beta.unwrap()..o.beta.unwrap() + b.out_channels];
        let mut xhat = Tensor::zeros(y.channels, y.height, y.width);
        let mut invs = Vec::with_capacity(y.channels);
        for (c, (row, hrow)) in y
            .data
            .chunks_mut(plane)
            .zip(xhat.data.chunks_mut(plane))
            .enumerate()
        {
            let mean = sum(row) / n;
            row.iter_mut().for_each(|v| *v -= mean);
            let var = dot(row, row) / n;
            let inv = (var + eps).sqrt().recip();
            for (v, h) in row.iter_mut().zip(hrow.iter_mut()) {
                *h = *v * inv;
                *v = gamma[c] * *h + beta[c];
            }
            invs.push(inv);
        }
        (xhat, invs)
    }
}

fn activate<S: Scalar>(act: Activation, y: &mut Tensor<S>) {
    match act {
        Activation::LeakyRelu => {
            let slope = S::lit(LEAKY_SLOPE);
            y.data.iter_mut().for_each(|v| {
                if *v < S::zero() {
                    *v *= slope
                }
            });
        }
        Activation::Tanh => y.data.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Identity => {}
    }
}

fn activation_backward<S: Scalar>(act: Activation, out: &Tensor<S>, dy: &mut Tensor<S>) {
    match act {
        Activation::LeakyRelu => {
            let slope = S::lit(LEAKY_SLOPE);
            for (d, &o) in dy.data.iter_mut().zip(&out.data) {
                if o < S::zero() {
                    *d *= slope;
                }
            }
        }
        Activation::Tanh => {
            for (d, &o) in dy.data.iter_mut().zip(&out.data) {
                *d *= S::one() - o * o;
            }
        }
        Activation::Identity => {}
    }
}

/// Batch-norm backward over one image. Rewrites `dy` into the gradient with
/// respect to the pre-normalization input and returns `(dgamma, dbeta)`.
fn norm_backward<S: Scalar>(
    xhat: &Tensor<S>,
    inv: &[S],
    gamma: &[S],
    dy: &mut Tensor<S>,
) -> (Vec<S>, Vec<S>) {
    let plane = xhat.plane();
    let n = S::from_usize(plane);
    let mut dgamma = Vec::with_capacity(gamma.len());
    let mut dbeta = Vec::with_capacity(gamma.len());
    for (c, (d, h)) in dy
        .data
        .chunks_mut(plane)
        .zip(xhat.data.chunks(plane))
        .enumerate()
    {
        let sum_d = sum(d);
        let sum_dh = dot(d, h);
        dbeta.push(sum_d);
        dgamma.push(sum_dh);
        // dxhat = d * gamma
        let g = gamma[c];
        let scale = g * inv[c] / n;
        for (dv, &hv) in d.iter_mut().zip(h) {
            *dv = scale * (n * *dv - sum_d - hv * sum_dh);
        }
    }
    (dgamma, dbeta)
}

/// Geometry of a zero-padded plane. A same-padded 3×3 convolution becomes
/// nine GEMMs over shifted views of the padded input, each producing rows of
/// width `w + 2` whose last two columns are discarded.
struct PadGeom {
    h: usize,
    w: usize,
    wp: usize,
    /// Padded plane size `(h + 2)(w + 2)`.
    pp: usize,
    /// Length of one shifted view: `h` padded-width rows.
    n: usize,
}

impl PadGeom {
    fn of<S>(x: &Tensor<S>) -> Self {
        let (h, w) = (x.height, x.width);
        let wp = w + 2;
        Self {
            h,
            w,
            wp,
            pp: (h + 2) * wp,
            n: h * wp,
        }
    }

    fn offset(&self, tap: usize) -> usize {
        (tap / KERNEL) * self.wp + tap % KERNEL
    }
}

/// Channel planes with a one-pixel zero border, plus a two-element tail so the
/// last tap's shifted view stays in bounds.
fn pad<S: Scalar>(x: &Tensor<S>, g: &PadGeom) -> Vec<S> {
    let mut xp = vec![S::zero(); x.channels * g.pp + 2];
    for c in 0..x.channels {
        for yy in 0..g.h {
            let at = c * g.pp + (yy + 1) * g.wp + 1;
            xp[at..at + g.w]
                .copy_from_slice(&x.data[(c * g.h + yy) * g.w..(c * g.h + yy + 1) * g.w]);
        }
    }
    xp
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch(last: Activation, norm_last: bool) -> NetArch {
        NetArch::new(vec![
            BlockSpec {
                in_channels: 2,
                out_channels: 3,
                batch_norm: true,
                activation: Activation::LeakyRelu,
            },
            BlockSpec {
                in_channels: 3,
                out_channels: 2,
                batch_norm: norm_last,
                activation: last,
            },
        ])
    }

    fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Direct 3×3 same-padded convolution, written independently of im2col.
    fn direct_conv(x: &Tensor<f64>, w: &[f64], bias: &[f64], cout: usize) -> Tensor<f64> {
        let mut y = Tensor::zeros(cout, x.height, x.width);
        for o in 0..cout {
            for yy in 0..x.height as isize {
                for xx in 0..x.width as isize {
                    let mut acc = bias[o];
                    for c in 0..x.channels {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (yy + ky - 1, xx + kx - 1);
                                if sy < 0 || sx < 0 || sy >= x.height as isize || sx >= x.width as isize {
                                    continue;
                                }
                                let wi = ((o * x.channels + c) * 3 + ky as usize) * 3 + kx as usize;
                                acc += w[wi] * x.at(c, sy as usize, sx as usize);
                            }
                        }
                    }
                    *y.at_mut(o, yy as usize, xx as usize) = acc;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_loop() {
        let arch = NetArch::new(vec![BlockSpec {
            in_channels: 2,
            out_channels: 3,
            batch_norm: false,
            activation: Activation::Identity,
        }]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ConvNet::<f64>::init_gaussian(arch, 0.5, &mut rng);
        for (i, b) in net.params[54..57].iter_mut().enumerate() {
            *b = i as f64 * 0.1;
        }
        let x = random_tensor(2, 5, 7, 2);
        let got = net.forward(&x);
        let want = direct_conv(&x, &net.params[..54], &net.params[54..57], 3);
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn layout_is_contiguous_and_complete() {
        let arch = small_arch(Activation::Tanh, false);
        let slots = arch.layout("g.");
        let mut at = 0;
        for s in &slots {
            assert_eq!(s.offset, at, "{}", s.name);
            at += s.len();
        }
        assert_eq!(at, arch.param_count());
        assert_eq!(slots[0].name, "g.block0.conv.weight");
        assert_eq!(slots.len(), 4 + 2);
    }

    #[test]
    fn zeroed_net_outputs_zero() {
        let net = ConvNet::<f64>::zeroed(small_arch(Activation::Tanh, false));
        let y = net.forward(&random_tensor(2, 6, 6, 3));
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    fn loss_and_grad(net: &ConvNet<f64>, x: &Tensor<f64>, probe: &Tensor<f64>) -> (f64, Tensor<f64>, Vec<f64>) {
        let tape = net.forward_taped(x);
        let loss = tape.output().dot(probe);
        let (dx, dp) = net.backward(&tape, probe);
        (loss, dx, dp)
    }

    #[test]
    fn backward_matches_central_differences() {
        for (act, norm_last) in [
            (Activation::Tanh, false),
            (Activation::Identity, false),
            (Activation::LeakyRelu, true),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let net = ConvNet::<f64>::init_gaussian(small_arch(act, norm_last), 0.4, &mut rng);
            let x = random_tensor(2, 5, 6, 11);
            let probe = random_tensor(2, 5, 6, 12);
            let (_, dx, dp) = loss_and_grad(&net, &x, &probe);
            let h = 1e-6;
            for i in (0..x.len()).step_by(7) {
                let mut xp = x.clone();
                xp.data[i] += h;
                let mut xm = x.clone();
                xm.data[i] -= h;
                let fd = (net.forward(&xp).dot(&probe) - net.forward(&xm).dot(&probe)) / (2.0 * h);
                assert!((fd - dx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()), "dx[{i}] {fd} vs {}", dx.data[i]);
            }
            for i in (0..net.params.len()).step_by(5) {
                let mut np = net.clone();
                np.params[i] += h;
                let mut nm = net.clone();
                nm.params[i] -= h;
                let fd = (np.forward(&x).dot(&probe) - nm.forward(&x).dot(&probe)) / (2.0 * h);
                assert!((fd - dp[i]).abs() < 1e-6 * (1.0 + fd.abs()), "dp[{i}] {fd} vs {}", dp[i]);
            }
        }
    }

    #[test]
    fn taped_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = ConvNet::<f32>::init_gaussian(small_arch(Activation::Tanh, false), 0.3, &mut rng);
        let x = random_tensor(2, 4, 9, 5).cast::<f32>();
        assert_eq!(net.forward(&x), *net.forward_taped(&x).output());
    }

    #[test]
    fn receptive_field_of_five_blocks() {
        let blocks = (0..5)
            .map(|_| BlockSpec {
                in_channels: 1,
                out_channels: 1,
                batch_norm: false,
                activation: Activation::Identity,
            })
            .collect();
        assert_eq!(NetArch::new(blocks).receptive_field(), 11);
    }
}
