//! Power traces and energy-delay product of edge inference.
//!
//! A trace is piecewise constant: each sample's power holds until the next
//! timestamp, and the last one holds to the end of the window.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bundle::TrainedBundle;
use crate::error::{Error, Result};
use crate::gan_models::GeneratorSpec;
use crate::inference::{generate, generation_dims, GenerationRequest};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_seconds: f64,
    pub power_watts: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    File,
    SyntheticModel,
    PlatformSensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerTrace {
    pub samples: Vec<PowerSample>,
    pub source: TraceKind,
}

impl PowerTrace {
    pub fn new(samples: Vec<PowerSample>, source: TraceKind) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty power trace".into()));
        }
        for s in &samples {
            if !(s.power_watts >= 0.0) || !s.t_seconds.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid power sample {s:?}")));
            }
        }
        if samples.windows(2).any(|w| w[1].t_seconds <= w[0].t_seconds) {
            return Err(Error::InvalidArgument(
                "trace timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples, source })
    }

    pub fn constant(watts: f64) -> Self {
        Self {
            samples: vec![PowerSample {
                t_seconds: 0.0,
                power_watts: watts,
            }],
            source: TraceKind::SyntheticModel,
        }
    }

    /// `(duration, power)` pieces covering `[0, t]`.
    fn segments(&self, t: f64) -> Result<Vec<(f64, f64)>> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("duration must be positive, got {t}")));
        }
        if self.samples[0].t_seconds > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "trace starts at {} s and does not cover t = 0",
                self.samples[0].t_seconds
            )));
        }
        let mut out = Vec::with_capacity(self.samples.len());
        for (k, s) in self.samples.iter().enumerate() {
            let start = s.t_seconds.max(0.0);
            if start >= t {
                break;
            }
            let end = self
                .samples
                .get(k + 1)
                .map_or(t, |n| n.t_seconds.min(t));
            if end > start {
                out.push((end - start, s.power_watts));
            }
        }
        Ok(out)
    }

    pub fn energy(&self, t: f64) -> Result<f64> {
        Ok(self.segments(t)?.iter().map(|(dt, p)| dt * p).sum())
    }

    /// Time-weighted mean power over `[0, t]`.
    pub fn average_power(&self, t: f64) -> Result<f64> {
        Ok(self.energy(t)? / t)
    }

    /// The `[start, end]` slice of the trace, shifted to begin at 0.
    pub fn window(&self, start: f64, end: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::InvalidArgument("empty trace window".into()));
        }
        let first = self.samples.first().unwrap();
        let last = self.samples.last().unwrap();
        if first.t_seconds > start || last.t_seconds < start {
            return Err(Error::InvalidArgument(format!(
                "trace [{}, {}] does not cover window start {start}",
                first.t_seconds, last.t_seconds
            )));
        }
        let lead = self
            .samples
            .iter()
            .rposition(|s| s.t_seconds <= start)
            .expect("checked coverage");
        let mut samples = vec![PowerSample {
            t_seconds: 0.0,
            power_watts: self.samples[lead].power_watts,
        }];
        samples.extend(
            self.samples[lead + 1..]
                .iter()
                .take_while(|s| s.t_seconds < end)
                .map(|s| PowerSample {
                    t_seconds: s.t_seconds - start,
                    power_watts: s.power_watts,
                }),
        );
        Self::new(samples, self.source)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let samples = rd
            .deserialize::<PowerSample>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(csv_err)?;
        Self::new(samples, TraceKind::File)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wr = csv::Writer::from_path(path).map_err(csv_err)?;
        for s in &self.samples {
            wr.serialize(s).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("power trace csv: {other:?}")),
    }
}

/// `EDP = P_avg · T²`.
pub fn edp(trace: &PowerTrace, t: f64) -> Result<f64> {
    Ok(trace.average_power(t)? * t * t)
}

/// `Σ P·Δt·T`, the summation form of the same quantity.
pub fn edp_sum_form(trace: &PowerTrace, t: f64) -> Result<f64> {
    Ok(trace.segments(t)?.iter().map(|(dt, p)| p * dt * t).sum())
}

/// Divides by the last entry (the full-scale run).
pub fn normalize_edp(values: &[f64]) -> Vec<f64> {
    match values.last() {
        Some(&full) if full > 0.0 => values.iter().map(|v| v / full).collect(),
        _ => values.to_vec(),
    }
}

/// Power as an idle floor plus a term proportional to the scale's
/// multiply-accumulate count; latency as MACs over a fixed throughput.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPowerModel {
    pub idle_watts: f64,
    pub watts_per_gmac: f64,
    pub gmacs_per_second: f64,
}

impl Default for SyntheticPowerModel {
    fn default() -> Self {
        Self {
            idle_watts: 2.0,
            watts_per_gmac: 0.1,
            gmacs_per_second: 5.0,
        }
    }
}

impl SyntheticPowerModel {
    pub fn scale_power(&self, macs: u64) -> f64 {
        self.idle_watts + self.watts_per_gmac * macs as f64 / 1e9
    }

    pub fn scale_latency(&self, macs: u64) -> f64 {
        macs as f64 / 1e9 / self.gmacs_per_second
    }

    /// Trace of running the scales with `macs` back to back; returns it with
    /// its total duration.
    pub fn trace(&self, macs: &[u64]) -> (PowerTrace, f64) {
        let mut t = 0.0;
        let mut samples = Vec::with_capacity(macs.len());
        for &m in macs {
            samples.push(PowerSample {
                t_seconds: t,
                power_watts: self.scale_power(m),
            });
            t += self.scale_latency(m);
        }
        (
            PowerTrace {
                samples,
                source: TraceKind::SyntheticModel,
            },
            t,
        )
    }
}

/// Default sysfs power node (microwatts), as exposed by hwmon drivers.
pub const DEFAULT_SENSOR_PATH: &str = "/sys/class/hwmon/hwmon0/power1_input";

#[derive(Clone, Debug, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Synthetic(SyntheticPowerModel),
    PlatformSensor { path: PathBuf, interval: Duration },
}

impl TraceSource {
    pub fn sensor_default() -> Self {
        Self::PlatformSensor {
            path: PathBuf::from(DEFAULT_SENSOR_PATH),
            interval: Duration::from_millis(5),
        }
    }
}

fn read_sensor_watts(path: &Path) -> Option<f64> {
    let raw = std::fs::read_to_string(path).ok()?;
    let micro: f64 = raw.trim().parse().ok()?;
    Some(micro / 1e6)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEnergy {
    pub scale: usize,
    /// Duration used for EDP (modeled for the synthetic source).
    pub wall_time: f64,
    pub measured_wall_time: f64,
    pub avg_power: f64,
    pub energy: f64,
    pub edp: f64,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub source: TraceKind,
    pub entries: Vec<ScaleEnergy>,
    pub normalized_edp: Vec<f64>,
}

impl EnergyReport {
    pub fn from_entries(source: TraceKind, entries: Vec<ScaleEnergy>) -> Self {
        let normalized_edp = normalize_edp(&entries.iter().map(|e| e.edp).collect::<Vec<_>>());
        Self {
            source,
            entries,
            normalized_edp,
        }
    }

    /// Report whose EDP column is already normalized.
    pub fn normalized(&self) -> Self {
        let mut entries = self.entries.clone();
        for (e, n) in entries.iter_mut().zip(&self.normalized_edp) {
            e.edp = *n;
        }
        Self::from_entries(self.source, entries)
    }

    /// Relative EDP reduction from scale `from` to scale `to` (e.g. 8 → 7).
    pub fn reduction(&self, from: usize, to: usize) -> Option<f64> {
        let a = self.entries.get(from)?.edp;
        let b = self.entries.get(to)?.edp;
        Some(1.0 - b / a)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("scale,wall_time_s,avg_power_w,energy_j,edp_ws2,normalized_edp,macs\n");
        for (e, n) in self.entries.iter().zip(&self.normalized_edp) {
            s.push_str(&format!(
                "{},{:.6},{:.4},{:.6},{:.6e},{:.6},{}\n",
                e.scale, e.wall_time, e.avg_power, e.energy, e.edp, n, e.macs
            ));
        }
        s
    }
}

/// Generator MACs of each scale for a request's dims.
pub fn generator_macs(bundle: &TrainedBundle, request: &GenerationRequest) -> Vec<u64> {
    generation_dims(bundle, request.coarsest_dims, request.up_to_scale)
        .iter()
        .enumerate()
        .map(|(i, d)| GeneratorSpec::for_scale(i).arch.macs(d.height, d.width))
        .collect()
}

/// Samples a sysfs power node on a background thread while `work` runs.
fn sample_sensor(path: &Path, interval: Duration, work: impl FnOnce()) -> Vec<PowerSample> {
    let stop = AtomicBool::new(false);
    let samples = Mutex::new(Vec::new());
    let start = Instant::now();
    std::thread::scope(|sc| {
        sc.spawn(|| {
            while !stop.load(Ordering::Relaxed) {
                if let Some(w) = read_sensor_watts(path) {
                    samples.lock().unwrap().push(PowerSample {
                        t_seconds: start.elapsed().as_secs_f64(),
                        power_watts: w,
                    });
                }
                std::thread::sleep(interval);
            }
        });
        work();
        stop.store(true, Ordering::Relaxed);
    });
    samples.into_inner().unwrap()
}

/// Runs `generate` for every output scale `0..=request.up_to_scale` and
/// reports per-scale EDP, normalized by the last (full) run.
pub fn profile_generation(
    bundle: &TrainedBundle,
    request: &GenerationRequest,
    source: &TraceSource,
) -> Result<EnergyReport> {
    let macs = generator_macs(bundle, request);
    let mut source = source.clone();
    if let TraceSource::PlatformSensor { path, .. } = &source {
        if read_sensor_watts(path).is_none() {
            log::warn!(
                "power sensor {} unavailable; falling back to the synthetic power model",
                path.display()
            );
            source = TraceSource::Synthetic(SyntheticPowerModel::default());
        }
    }
    let file_trace = match &source {
        TraceSource::File(p) => Some(PowerTrace::read_csv(p)?),
        _ => None,
    };
    let session = Instant::now();
    let mut entries = Vec::with_capacity(macs.len());
    let mut kind = TraceKind::SyntheticModel;
    for k in 0..=request.up_to_scale {
        let req = GenerationRequest {
            up_to_scale: k,
            ..request.clone()
        };
        let start = session.elapsed().as_secs_f64();
        let (trace, t, measured) = match &source {
            TraceSource::Synthetic(model) => {
                let began = Instant::now();
                generate(bundle, &req)?;
                let measured = began.elapsed().as_secs_f64();
                let (trace, t) = model.trace(&macs[..=k]);
                (trace, t, measured)
            }
            TraceSource::File(_) => {
                generate(bundle, &req)?;
                let end = session.elapsed().as_secs_f64();
                let trace = file_trace.as_ref().unwrap().window(start, end)?;
                kind = TraceKind::File;
                (trace, end - start, end - start)
            }
            TraceSource::PlatformSensor { path, interval } => {
                let mut res = Ok(());
                let began = Instant::now();
                let samples = sample_sensor(path, *interval, || {
                    res = generate(bundle, &req).map(|_| ());
                });
                res?;
                let measured = began.elapsed().as_secs_f64();
                let mut samples = samples;
                if samples.is_empty() {
                    return Err(Error::InvalidArgument("power sensor produced no samples".into()));
                }
                samples[0].t_seconds = 0.0;
                kind = TraceKind::PlatformSensor;
                (PowerTrace::new(samples, TraceKind::PlatformSensor)?, measured, measured)
            }
        };
        let avg = trace.average_power(t)?;
        entries.push(ScaleEnergy {
            scale: k,
            wall_time: t,
            measured_wall_time: measured,
            avg_power: avg,
            energy: avg * t,
            edp: edp(&trace, t)?,
            macs: macs[..=k].iter().sum(),
        });
    }
    Ok(EnergyReport::from_entries(kind, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(points: &[(f64, f64)]) -> PowerTrace {
        PowerTrace::new(
            points
                .iter()
                .map(|&(t, p)| PowerSample {
                    t_seconds: t,
                    power_watts: p,
                })
                .collect(),
            TraceKind::File,
        )
        .unwrap()
    }

    #[test]
    fn constant_two_watts_for_three_seconds() {
        assert_eq!(edp(&PowerTrace::constant(2.0), 3.0).unwrap(), 18.0);
    }

    #[test]
    fn two_segment_trace() {
        let t = trace(&[(0.0, 1.0), (1.0, 3.0)]);
        assert_eq!(t.average_power(2.0).unwrap(), 2.0);
        assert_eq!(edp(&t, 2.0).unwrap(), 8.0);
    }

    #[test]
    fn rejects_bad_traces() {
        assert!(PowerTrace::new(vec![], TraceKind::File).is_err());
        let dup = vec![
            PowerSample { t_seconds: 0.0, power_watts: 1.0 },
            PowerSample { t_seconds: 0.0, power_watts: 2.0 },
        ];
        assert!(PowerTrace::new(dup, TraceKind::File).is_err());
        let neg = vec![PowerSample { t_seconds: 0.0, power_watts: -1.0 }];
        assert!(PowerTrace::new(neg, TraceKind::File).is_err());
        assert!(edp(&trace(&[(0.5, 1.0)]), 1.0).is_err());
    }

    #[test]
    fn window_shifts_and_keeps_leading_power() {
        let t = trace(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        let w = t.window(1.5, 2.5).unwrap();
        assert_eq!(w.samples[0].power_watts, 3.0);
        assert!((w.energy(1.0).unwrap() - (0.5 * 3.0 + 0.5 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let t = trace(&[(0.0, 1.5), (0.25, 2.0)]);
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t_seconds,power_watts"));
        assert_eq!(PowerTrace::read_csv(&p).unwrap(), t);
    }

    #[test]
    fn normalization_is_idempotent() {
        let v = normalize_edp(&[1.0, 4.0, 8.0]);
        assert_eq!(v, vec![0.125, 0.5, 1.0]);
        assert_eq!(normalize_edp(&v), v);
    }

    proptest! {
        #[test]
        fn sum_and_product_forms_agree(
            steps in prop::collection::vec((0.01f64..2.0, 0.0f64..10.0), 1..20),
            extra in 0.0f64..1.0,
        ) {
            let mut t = 0.0;
            let mut points = Vec::new();
            for (dt, p) in &steps {
                points.push((t, *p));
                t += dt;
            }
            let total = t + extra;
            let tr = trace(&points);
            let a = edp(&tr, total).unwrap();
            let b = edp_sum_form(&tr, total).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn edp_quadruples_when_time_doubles(p in 0.0f64..50.0, t in 0.01f64..100.0) {
            let c = PowerTrace::constant(p);
            let (a, b) = (edp(&c, 2.0 * t).unwrap(), edp(&c, t).unwrap());
            prop_assert!((a - 4.0 * b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
