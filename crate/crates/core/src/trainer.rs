//! Per-scale WGAN-GP training, the parallel worker pool and the SSIM early exit.
//!
//! Every scale trains against the real upscaled `X_{i-1}`, never against a
//! coarser generator's output, so scales share nothing but the read-only
//! pyramid and can run in any order on any number of workers. Each scale
//! draws from its own RNG stream derived from `(seed, scale)`.

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan_models::{IterationLosses, ScaleModel};
use crate::metrics::{interpolate, penalty_and_param_grad, ssim};
use crate::noise::{derive_seed, rng_for, NoiseMap};
use crate::optim::{Adam, AdamConfig};
use crate::pyramid::{
    noise_amplitudes, pyramid_from_image, upscale, ImageGrid, ImagePyramid, ScaleSchedule,
    DEFAULT_MAX_DIM, DEFAULT_MIN_DIM, DEFAULT_SCALE_FACTOR,
};
use crate::tensor::Tensor;

/// Tag mixed into a scale's stream seed to get its fixed reconstruction seed.
const REC_SEED_TAG: u64 = 0x7265_6373;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations_per_scale: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    pub learning_rate: f64,
    /// First iteration (0-based) trained at the decayed rate.
    pub lr_decay_at: usize,
    pub lr_decay_factor: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub alpha_rec: f64,
    pub gp_weight: f64,
    /// Early-exit SSIM threshold `T`; above 1 never exits.
    pub ssim_threshold: f64,
    pub worker_count: usize,
    pub seed: u64,
    pub max_dim: usize,
    pub min_dim: usize,
    pub scale_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations_per_scale: 2000,
            g_steps: 3,
            d_steps: 3,
            learning_rate: 5e-4,
            lr_decay_at: 1600,
            lr_decay_factor: 0.1,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            alpha_rec: 10.0,
            gp_weight: 0.1,
            ssim_threshold: 0.85,
            worker_count: 4,
            seed: 0,
            max_dim: DEFAULT_MAX_DIM,
            min_dim: DEFAULT_MIN_DIM,
            scale_factor: DEFAULT_SCALE_FACTOR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.g_steps == 0 || self.d_steps == 0 {
            return bad("g_steps and d_steps must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay_factor > 0.0) {
            return bad("learning rate and decay factor must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.alpha_rec >= 0.0) || !(self.gp_weight >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(0.0..=1.01).contains(&self.ssim_threshold) {
            return bad("ssim threshold must lie in [0, 1.01]");
        }
        if self.worker_count == 0 {
            return bad("worker_count must be at least 1");
        }
        if self.min_dim == 0 || self.max_dim < self.min_dim {
            return bad("need max_dim >= min_dim >= 1");
        }
        if !(self.scale_factor > 1.0) {
            return bad("scale_factor must exceed 1");
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        if iteration >= self.lr_decay_at {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::default()
        }
    }
}

/// One line of training telemetry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub scale: usize,
    pub iteration: usize,
    pub d_loss: f32,
    pub g_loss: f32,
    pub rec_loss: f32,
    pub lr: f32,
    pub wall_ms: u64,
}

impl TelemetryRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }
}

pub enum TrainEvent<'a> {
    ScaleStarted { scale: usize, attempt: u32 },
    Iteration(TelemetryRecord),
    ScaleRetried { scale: usize, message: String },
    ScaleFinished(&'a FinishedScale),
    ScaleCancelled { scale: usize },
}

#[derive(Clone, Debug)]
pub struct FinishedScale {
    pub model: ScaleModel,
    pub ssim: f64,
    pub exit: bool,
    pub wall_seconds: f64,
}

/// Hooks for a single scale's loop.
#[derive(Clone, Copy, Default)]
pub struct ScaleControl<'a> {
    pub cancel: Option<&'a AtomicBool>,
    /// Job-wide stop flag, checked alongside `cancel`.
    pub abort: Option<&'a AtomicBool>,
    pub on_iteration: Option<&'a (dyn Fn(&TelemetryRecord) + Sync)>,
}

pub fn scale_seed(seed: u64, scale: usize) -> u64 {
    derive_seed(seed, scale as u64)
}

pub fn rec_seed(seed: u64, scale: usize) -> u64 {
    derive_seed(scale_seed(seed, scale), REC_SEED_TAG)
}

/// Freshly initialized model for `scale`, exactly as training starts from it.
pub fn initial_model(pyramid: &ImagePyramid, scale: usize, config: &TrainConfig) -> ScaleModel {
    let mut rng = rng_for(config.seed, scale as u64);
    let amp = noise_amplitudes(pyramid)[scale];
    ScaleModel::new(scale, amp, rec_seed(config.seed, scale), &mut rng)
}

pub fn train_scale(pyramid: &ImagePyramid, scale: usize, config: &TrainConfig) -> Result<ScaleModel> {
    train_scale_with(pyramid, scale, config, ScaleControl::default())
}

pub fn train_scale_with(
    pyramid: &ImagePyramid,
    scale: usize,
    config: &TrainConfig,
    control: ScaleControl<'_>,
) -> Result<ScaleModel> {
    if scale >= pyramid.scale_count() {
        return Err(Error::ScaleUnavailable {
            requested: scale,
            available: pyramid.scale_count(),
        });
    }
    config.validate()?;
    let mut rng = rng_for(config.seed, scale as u64);
    let amp = noise_amplitudes(pyramid)[scale];
    let mut model = ScaleModel::new(scale, amp, rec_seed(config.seed, scale), &mut rng);
    let real = &pyramid.levels[scale];
    let dims = pyramid.schedule.dims[scale];
    let coarse = pyramid.coarse_input(scale);
    let rec_noise = if scale == 0 {
        model.fixed_noise(dims).values
    } else {
        Tensor::zeros(3, dims.height, dims.width)
    };
    let mut adam_g = Adam::new(model.generator.net.params.len(), config.adam());
    let mut adam_d = Adam::new(model.discriminator.net.params.len(), config.adam());
    let gp_weight = config.gp_weight as f32;
    let alpha = config.alpha_rec as f32;
    let start = Instant::now();

    for it in 0..config.iterations_per_scale {
        let stop = |f: Option<&AtomicBool>| f.is_some_and(|c| c.load(Ordering::Relaxed));
        if stop(control.cancel) || stop(control.abort) {
            return Err(Error::Cancelled { scale });
        }
        let lr = config.lr_at(it);
        let mut d_loss = 0.0f32;
        for _ in 0..config.d_steps {
            let noise = NoiseMap::from_rng(dims, &mut rng, amp, 0);
            let fake = model.generator.forward(&noise.values, coarse.as_ref())?;
            let disc = &model.discriminator;
            let (d_real, _, mut grad) = disc.score_with_grads(real, -1.0)?;
            let (d_fake, _, g_fake) = disc.score_with_grads(&fake, 1.0)?;
            let eps: f32 = rng.random();
            let point = interpolate(real, &fake, eps);
            let (gp, g_gp) = penalty_and_param_grad(disc, &point, gp_weight)?;
            for ((g, a), b) in grad.iter_mut().zip(&g_fake).zip(&g_gp) {
                *g += a + b;
            }
            d_loss = d_fake - d_real + gp_weight * gp;
            adam_d.step(&mut model.discriminator.net.params, &grad, lr);
        }

        let (mut g_loss, mut rec_loss) = (0.0f32, 0.0f32);
        for _ in 0..config.g_steps {
            let noise = NoiseMap::from_rng(dims, &mut rng, amp, 0);
            let tape = model.generator.forward_taped(&noise.values, coarse.as_ref())?;
            let (d_fake, dx, _) = model.discriminator.score_with_grads(&tape.output, -1.0)?;
            let mut grad = model.generator.backward(&tape, &dx);

            let rt = model.generator.forward_taped(&rec_noise, coarse.as_ref())?;
            let n = real.len() as f32;
            let diff = rt.output.sub(real);
            rec_loss = diff.dot(&diff) / n;
            let g_rec = model
                .generator
                .backward(&rt, &diff.scale(2.0 * alpha / n));
            for (g, r) in grad.iter_mut().zip(&g_rec) {
                *g += r;
            }
            g_loss = -d_fake + alpha * rec_loss;
            adam_g.step(&mut model.generator.net.params, &grad, lr);
        }

        for (what, v) in [("d_loss", d_loss), ("g_loss", g_loss), ("rec_loss", rec_loss)] {
            if !v.is_finite() {
                return Err(Error::Divergence {
                    scale,
                    iteration: it,
                    what: format!("{what} = {v}"),
                });
            }
        }
        let losses = IterationLosses {
            iteration: it,
            d_loss,
            g_loss,
            rec_loss,
            lr: lr as f32,
        };
        model.history.push(losses);
        if let Some(f) = control.on_iteration {
            f(&TelemetryRecord {
                scale,
                iteration: it,
                d_loss,
                g_loss,
                rec_loss,
                lr: lr as f32,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
    }
    Ok(model)
}

/// The fixed-noise fake `F_i` of a scale: `G_i(z*, ↑X_{i-1})`.
pub fn fixed_fake(model: &ScaleModel, pyramid: &ImagePyramid) -> Result<ImageGrid> {
    let i = model.scale_index;
    let dims = pyramid.schedule.dims[i];
    model.generate(&model.fixed_noise(dims), pyramid.coarse_input(i).as_ref())
}

/// SSIM between `F_i` upscaled to full resolution and `X`, and whether it
/// meets `threshold` (the SSIM is clamped to `[0, 1]` for the test).
pub fn evaluate_exit(model: &ScaleModel, pyramid: &ImagePyramid, threshold: f64) -> Result<(f64, bool)> {
    let fake = fixed_fake(model, pyramid)?;
    let full = upscale(&fake, pyramid.schedule.finest())?;
    let value = ssim(&full, pyramid.source())?;
    Ok((value, value.clamp(0.0, 1.0) >= threshold))
}

/// Smallest scale whose SSIM meets `threshold`, else the last scale.
pub fn select_best_scale(per_scale_ssim: &[f64], threshold: f64) -> usize {
    per_scale_ssim
        .iter()
        .position(|s| s.clamp(0.0, 1.0) >= threshold)
        .unwrap_or(per_scale_ssim.len().saturating_sub(1))
}

/// Knobs of one training job beyond [`TrainConfig`].
#[derive(Clone, Copy, Default)]
pub struct JobOptions<'a> {
    /// Stop scales above the first one that meets the threshold.
    pub cancel_above_exit: bool,
    pub on_event: Option<&'a (dyn Fn(&TrainEvent<'_>) + Sync)>,
    /// Abort the whole job.
    pub cancel: Option<&'a AtomicBool>,
    /// Test hook: return true to make attempt `attempt` of `scale` panic.
    pub inject_fault: Option<&'a (dyn Fn(usize, u32) -> bool + Sync)>,
}

#[derive(Clone, Debug)]
pub struct TrainingResult {
    pub schedule: ScaleSchedule,
    pub config: TrainConfig,
    /// Contiguous prefix of completed scales.
    pub models: Vec<ScaleModel>,
    pub per_scale_ssim: Vec<f64>,
    pub per_scale_wall_time: Vec<f64>,
    pub best_scale: usize,
    pub wall_seconds: f64,
}

impl TrainingResult {
    pub fn best_scale_for(&self, threshold: f64) -> usize {
        select_best_scale(&self.per_scale_ssim, threshold)
    }
}

/// Resizes `image`, builds its pyramid and trains every scale.
pub fn train_all_parallel(image: &ImageGrid, config: &TrainConfig) -> Result<TrainingResult> {
    config.validate()?;
    let pyramid = pyramid_from_image(image, config.max_dim, config.min_dim, config.scale_factor)?;
    train_pyramid(
        &pyramid,
        config,
        JobOptions {
            cancel_above_exit: true,
            ..JobOptions::default()
        },
    )
}

enum Outcome {
    Done(usize, Box<FinishedScale>),
    Cancelled(usize),
    Failed(usize, String),
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

pub fn train_pyramid(
    pyramid: &ImagePyramid,
    config: &TrainConfig,
    options: JobOptions<'_>,
) -> Result<TrainingResult> {
    config.validate()?;
    let count = pyramid.scale_count();
    let job_start = Instant::now();
    let queue = Mutex::new((0..count).collect::<VecDeque<_>>());
    let flags: Vec<AtomicBool> = (0..count).map(|_| AtomicBool::new(false)).collect();
    let cancel_from = AtomicUsize::new(count);
    let emit = |e: &TrainEvent<'_>| {
        if let Some(f) = options.on_event {
            f(e);
        }
    };
    let on_iteration = |r: &TelemetryRecord| emit(&TrainEvent::Iteration(*r));

    let run_scale = |scale: usize| -> Outcome {
        let mut last = String::new();
        for attempt in 0..2u32 {
            emit(&TrainEvent::ScaleStarted { scale, attempt });
            let started = Instant::now();
            let control = ScaleControl {
                cancel: Some(&flags[scale]),
                abort: options.cancel,
                on_iteration: Some(&on_iteration),
            };
            let run = catch_unwind(AssertUnwindSafe(|| {
                if options.inject_fault.is_some_and(|f| f(scale, attempt)) {
                    panic!("injected fault at scale {scale}, attempt {attempt}");
                }
                let model = train_scale_with(pyramid, scale, config, control)?;
                let (ssim, exit) = evaluate_exit(&model, pyramid, config.ssim_threshold)?;
                Ok::<_, Error>((model, ssim, exit))
            }));
            match run {
                Ok(Ok((model, ssim, exit))) => {
                    return Outcome::Done(
                        scale,
                        Box::new(FinishedScale {
                            model,
                            ssim,
                            exit,
                            wall_seconds: started.elapsed().as_secs_f64(),
                        }),
                    )
                }
                Ok(Err(Error::Cancelled { .. })) => return Outcome::Cancelled(scale),
                Ok(Err(e)) => last = e.to_string(),
                Err(p) => last = panic_message(p),
            }
            if attempt == 0 {
                log::warn!("scale {scale} failed ({last}); retrying once");
                emit(&TrainEvent::ScaleRetried {
                    scale,
                    message: last.clone(),
                });
            }
        }
        Outcome::Failed(scale, last)
    };

    let mut finished: Vec<Option<FinishedScale>> = (0..count).map(|_| None).collect();
    let mut failure: Option<(usize, String)> = None;
    std::thread::scope(|sc| {
        let (tx, rx) = mpsc::channel::<Outcome>();
        for _ in 0..config.worker_count.min(count) {
            let tx = tx.clone();
            let (queue, cancel_from, run_scale) = (&queue, &cancel_from, &run_scale);
            sc.spawn(move || loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some(scale) = next else { break };
                let out = if scale >= cancel_from.load(Ordering::SeqCst) {
                    Outcome::Cancelled(scale)
                } else {
                    run_scale(scale)
                };
                if tx.send(out).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let cancel_above = |from: usize| {
            cancel_from.fetch_min(from, Ordering::SeqCst);
            flags[from.min(count)..].iter().for_each(|f| f.store(true, Ordering::SeqCst));
        };
        for out in rx {
            if options.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                cancel_above(0);
            }
            match out {
                Outcome::Done(scale, fin) => {
                    emit(&TrainEvent::ScaleFinished(&fin));
                    if fin.exit && options.cancel_above_exit {
                        cancel_above(scale + 1);
                    }
                    finished[scale] = Some(*fin);
                }
                Outcome::Cancelled(scale) => emit(&TrainEvent::ScaleCancelled { scale }),
                Outcome::Failed(scale, message) => {
                    cancel_above(0);
                    failure.get_or_insert((scale, message));
                }
            }
        }
    });

    if let Some((scale, message)) = failure {
        let partial = finished.into_iter().flatten().map(|f| f.model).collect();
        return Err(Error::WorkerFailed {
            scale,
            message,
            partial: Box::new(partial),
        });
    }
    if options.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
        let scale = finished.iter().position(Option::is_none).unwrap_or(count);
        return Err(Error::Cancelled { scale });
    }
    let mut prefix: Vec<FinishedScale> = finished.into_iter().map_while(|f| f).collect();
    let ssims: Vec<f64> = prefix.iter().map(|f| f.ssim).collect();
    let best_scale = select_best_scale(&ssims, config.ssim_threshold);
    if options.cancel_above_exit {
        // scales that slipped past the cancellation are not part of a one-shot result
        prefix.truncate(best_scale + 1);
    }
    let per_scale_ssim: Vec<f64> = prefix.iter().map(|f| f.ssim).collect();
    Ok(TrainingResult {
        schedule: pyramid.schedule.clone(),
        config: config.clone(),
        per_scale_wall_time: prefix.iter().map(|f| f.wall_seconds).collect(),
        models: prefix.into_iter().map(|f| f.model).collect(),
        per_scale_ssim,
        best_scale,
        wall_seconds: job_start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::reconstruction_loss;
    use crate::pyramid::{build_pyramid, compute_scale_schedule, Dims};
    use crate::synthetic;

    fn tiny_pyramid() -> ImagePyramid {
        let img = synthetic::texture(Dims::new(20, 20), 3);
        let sched = compute_scale_schedule(Dims::new(20, 20), 20, 12, 4.0 / 3.0).unwrap();
        build_pyramid(&img, &sched).unwrap()
    }

    fn quick(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations_per_scale: iterations,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn defaults_follow_the_published_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.iterations_per_scale, c.g_steps, c.d_steps), (2000, 3, 3));
        assert_eq!((c.learning_rate, c.adam_beta1, c.adam_beta2), (5e-4, 0.5, 0.999));
        assert_eq!((c.alpha_rec, c.gp_weight), (10.0, 0.1));
        assert_eq!((c.max_dim, c.min_dim), (256, 25));
    }

    #[test]
    fn learning_rate_drops_at_1600() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(1599), 0.0005);
        assert!((c.lr_at(1600) - 0.00005).abs() < 1e-18);
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let p = tiny_pyramid();
        let c = quick(0);
        for s in 0..p.scale_count() {
            assert_eq!(train_scale(&p, s, &c).unwrap(), initial_model(&p, s, &c));
        }
    }

    #[test]
    fn history_has_one_entry_per_iteration() {
        let p = tiny_pyramid();
        let m = train_scale(&p, 1, &quick(3)).unwrap();
        assert_eq!(m.history.len(), 3);
        assert!(m.history.iter().all(|h| h.rec_loss.is_finite()));
    }

    #[test]
    fn rejects_out_of_range_scale() {
        let p = tiny_pyramid();
        assert!(matches!(
            train_scale(&p, 9, &quick(1)),
            Err(Error::ScaleUnavailable { .. })
        ));
    }

    #[test]
    fn reconstruction_improves_on_short_run() {
        let p = tiny_pyramid();
        let c = quick(40);
        let init = initial_model(&p, 1, &c);
        let trained = train_scale(&p, 1, &c).unwrap();
        let coarse = Some(&p.levels[0]);
        let before = reconstruction_loss(&init, coarse, &p.levels[1]).unwrap();
        let after = reconstruction_loss(&trained, coarse, &p.levels[1]).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn best_scale_selection() {
        assert_eq!(select_best_scale(&[0.2, 0.5, 0.9], 0.0), 0);
        assert_eq!(select_best_scale(&[0.2, 0.5, 0.9], 0.5), 1);
        assert_eq!(select_best_scale(&[0.2, 0.5, 0.9], 1.01), 2);
        assert_eq!(select_best_scale(&[-0.1, 0.5], 0.0), 0);
    }

    #[test]
    fn worker_fault_is_retried_once() {
        let p = tiny_pyramid();
        let c = TrainConfig {
            ssim_threshold: 1.01,
            ..quick(1)
        };
        let fault = |scale: usize, attempt: u32| scale == 1 && attempt == 0;
        let retried = Mutex::new(Vec::new());
        let on_event = |e: &TrainEvent<'_>| {
            if let TrainEvent::ScaleRetried { scale, .. } = e {
                retried.lock().unwrap().push(*scale);
            }
        };
        let r = train_pyramid(
            &p,
            &c,
            JobOptions {
                inject_fault: Some(&fault),
                on_event: Some(&on_event),
                ..JobOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.models.len(), p.scale_count());
        assert_eq!(*retried.lock().unwrap(), vec![1]);
    }

    #[test]
    fn second_failure_fails_job_with_partial_results() {
        let p = tiny_pyramid();
        let c = TrainConfig {
            worker_count: 1,
            ssim_threshold: 1.01,
            ..quick(1)
        };
        let last = p.scale_count() - 1;
        let fault = move |scale: usize, _| scale == last;
        let err = train_pyramid(
            &p,
            &c,
            JobOptions {
                inject_fault: Some(&fault),
                ..JobOptions::default()
            },
        )
        .unwrap_err();
        match err {
            Error::WorkerFailed { scale, partial, .. } => {
                assert_eq!(scale, last);
                assert_eq!(partial.len(), last);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn threshold_zero_cancels_higher_scales_when_serial() {
        let p = tiny_pyramid();
        let c = TrainConfig {
            worker_count: 1,
            ssim_threshold: 0.0,
            ..quick(1)
        };
        let r = train_pyramid(
            &p,
            &c,
            JobOptions {
                cancel_above_exit: true,
                ..JobOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.best_scale, 0);
        assert_eq!(r.models.len(), 1);
    }

    #[test]
    fn telemetry_lines_are_json() {
        let r = TelemetryRecord {
            scale: 2,
            iteration: 7,
            d_loss: -0.5,
            g_loss: 1.0,
            rec_loss: 0.25,
            lr: 5e-4,
            wall_ms: 12,
        };
        let line = r.to_json_line();
        assert!(!line.contains('\n'));
        let back: TelemetryRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
