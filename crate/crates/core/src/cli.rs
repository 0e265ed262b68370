//! Command-line front end.
//!
//! Settings resolve in three layers: built-in defaults, then flags, then
//! the keys present in a `--config` TOML file.
//!
//! Failures print one JSON line on stderr,
//! `{"error": kind, "message": ..., "exit_code": n}`, and exit with
//! 2 (usage), 3 (training), 4 (protocol) or 5 (I/O).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bundle::{compress_bundle, image_hash, DeliveryMode, TrainedBundle};
use crate::client::{JobClient, SERVER_ENV, TOKEN_ENV};
use crate::edge::{edge_router, EdgeState};
use crate::editor::{self, EditKind, EditRequest};
use crate::error::{Error, Result};
use crate::gan_models::param_count;
use crate::image_io;
use crate::inference::{generate, GenerationRequest, Injection};
use crate::profiler::{profile_generation, SyntheticPowerModel, TraceSource};
use crate::pyramid::{compute_scale_schedule, pyramid_from_image, Dims};
use crate::server::{router, serve_router, JobRegistry};
use crate::trainer::{train_pyramid, JobOptions, TrainConfig, TrainEvent};

#[derive(Debug, Parser)]
#[command(name = "setgan", version, about = "Single-image multi-scale GAN: train, serve, fetch, generate, edit, profile")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a bundle from one image (locally, or on a server with --remote)
    Train(TrainArgs),
    /// Run the job server, or the edge runtime with --edge
    Serve(ServeArgs),
    /// Assemble a bundle from a server job's published scales
    Fetch(FetchArgs),
    /// Generate an image from a bundle
    Generate(GenerateArgs),
    /// Run an editing application
    Edit(EditArgs),
    /// Energy-delay product per output scale
    Profile(ProfileArgs),
    /// Print desk-scale tables: geometry, model sizes, modeled EDP, speedup
    Bench(BenchArgs),
}

/// Flags mirroring [`TrainConfig`]; unset flags keep the default.
#[derive(Debug, Default, Clone, Args)]
pub struct TrainFlags {
    #[arg(long = "iterations")]
    pub iterations_per_scale: Option<usize>,
    #[arg(long)]
    pub g_steps: Option<usize>,
    #[arg(long)]
    pub d_steps: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_decay_at: Option<usize>,
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    #[arg(long = "beta1")]
    pub adam_beta1: Option<f64>,
    #[arg(long = "beta2")]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub alpha_rec: Option<f64>,
    #[arg(long)]
    pub gp_weight: Option<f64>,
    #[arg(long = "threshold")]
    pub ssim_threshold: Option<f64>,
    #[arg(long = "workers")]
    pub worker_count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_dim: Option<usize>,
    #[arg(long)]
    pub min_dim: Option<usize>,
    #[arg(long)]
    pub scale_factor: Option<f64>,
}

impl TrainFlags {
    pub fn apply(&self, c: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            iterations_per_scale, g_steps, d_steps, learning_rate, lr_decay_at, lr_decay_factor,
            adam_beta1, adam_beta2, alpha_rec, gp_weight, ssim_threshold, worker_count, seed,
            max_dim, min_dim, scale_factor
        );
    }
}

/// Defaults, then flags, then the keys of `file`.
pub fn resolve_config(flags: &TrainFlags, file: Option<&Path>) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    flags.apply(&mut config);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)?;
        config = merge_toml(&config, &text)?;
    }
    config.validate()?;
    Ok(config)
}

fn merge_toml(base: &TrainConfig, text: &str) -> Result<TrainConfig> {
    let bad = |e: String| Error::InvalidArgument(format!("config file: {e}"));
    let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    let mut table = toml::Table::try_from(base).map_err(|e| bad(e.to_string()))?;
    for (k, v) in overrides {
        table.insert(k, v);
    }
    table.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))
}

pub fn config_to_toml(config: &TrainConfig) -> String {
    toml::to_string(config).expect("config serializes")
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Bundle path (default: <image stem>.setgan)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration telemetry (default: <out>.telemetry.jsonl)
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    /// Gzip the bundle
    #[arg(long)]
    pub compress: bool,
    /// Write the resolved config as TOML and exit
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
    /// Submit to a server instead of training here
    #[arg(long)]
    pub remote: bool,
    #[arg(long, env = SERVER_ENV)]
    pub server: Option<String>,
    #[arg(long, default_value = "progressive")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Job directory root
    #[arg(long, default_value = "setgan-jobs")]
    pub root: PathBuf,
    /// Serve the edge runtime for this bundle instead of the job server
    #[arg(long)]
    pub edge: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long, env = SERVER_ENV)]
    pub server: String,
    #[arg(long, env = TOKEN_ENV)]
    pub token: String,
    #[arg(long)]
    pub job: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Wait for the job to finish before assembling
    #[arg(long)]
    pub wait: bool,
    /// Print progress events (JSON lines) until the job ends
    #[arg(long)]
    pub follow: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output scale (default: finest available)
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coarsest noise dims as HxW
    #[arg(long, value_parser = parse_dims)]
    pub coarsest: Option<Dims>,
    /// Image to inject in place of the coarser output
    #[arg(long)]
    pub inject: Option<PathBuf>,
    #[arg(long)]
    pub inject_scale: Option<usize>,
    /// Request descriptor (TOML or JSON); flags given here win
    #[arg(long)]
    pub request: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// super_resolution | paint2image | harmonization | editing
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub sr_factor: Option<f64>,
    #[arg(long)]
    pub sr_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// synthetic | sensor | path to a "t_seconds,power_watts" CSV
    #[arg(long, default_value = "synthetic")]
    pub power: String,
    #[arg(long, default_value = crate::profiler::DEFAULT_SENSOR_PATH)]
    pub sensor_path: PathBuf,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON path (printed to stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the plot-ready CSV table instead of JSON
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    pub max_dim: usize,
    #[arg(long, default_value_t = 25)]
    pub min_dim: usize,
    /// Also time a toy training run with 1 and N workers
    #[arg(long)]
    pub train_iterations: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok(Dims::new(p(h)?, p(w)?))
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("output serializes"));
}

fn default_out(image: &Path) -> PathBuf {
    image.with_extension(crate::bundle::FILE_EXTENSION)
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = resolve_config(&a.flags, a.config.as_deref())?;
    if let Some(p) = &a.dump_config {
        std::fs::write(p, config_to_toml(&config))?;
        return Ok(());
    }
    if a.remote {
        let server = a
            .server
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("--remote needs --server or {SERVER_ENV}")))?;
        let mode: DeliveryMode = a.mode.parse()?;
        let ticket = JobClient::new(server)?.submit(&std::fs::read(&a.image)?, &config, mode)?;
        print_json(&ticket);
        return Ok(());
    }
    let image = image_io::load_image(&a.image)?;
    let out = a.out.clone().unwrap_or_else(|| default_out(&a.image));
    let telemetry_path = a
        .telemetry
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.telemetry.jsonl", out.display())));
    let telemetry = Mutex::new(std::io::BufWriter::new(File::create(&telemetry_path)?));
    let on_event = |e: &TrainEvent<'_>| match e {
        TrainEvent::Iteration(r) => {
            let _ = writeln!(telemetry.lock().unwrap(), "{}", r.to_json_line());
        }
        TrainEvent::ScaleFinished(f) => log::info!(
            "scale {} done: ssim {:.4} in {:.1}s",
            f.model.scale_index,
            f.ssim,
            f.wall_seconds
        ),
        _ => {}
    };
    let pyramid = pyramid_from_image(&image, config.max_dim, config.min_dim, config.scale_factor)?;
    let result = train_pyramid(
        &pyramid,
        &config,
        JobOptions {
            cancel_above_exit: true,
            on_event: Some(&on_event),
            ..JobOptions::default()
        },
    )?;
    telemetry.lock().unwrap().flush()?;
    let job_id = uuid::Uuid::new_v4().simple().to_string();
    let bundle = TrainedBundle::from_result(&result, job_id, image_hash(&image), None)?;
    let bytes = bundle.serialize();
    std::fs::write(&out, if a.compress { compress_bundle(&bytes) } else { bytes })?;
    print_json(&serde_json::json!({
        "bundle": out,
        "telemetry": telemetry_path,
        "best_scale": result.best_scale,
        "scales": bundle.scale_count(),
        "per_scale_ssim": result.per_scale_ssim,
        "wall_seconds": result.wall_seconds,
    }));
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let app = match &a.edge {
        Some(path) => edge_router(Arc::new(EdgeState::new(TrainedBundle::load(path)?))),
        None => router(Arc::new(JobRegistry::open(&a.root)?)),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        let stop = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve_router(listener, app, stop).await
    })
}

fn fetch(a: &FetchArgs) -> Result<()> {
    let client = JobClient::new(&a.server)?.with_token(&a.token);
    if a.follow {
        for ev in client.events(&a.job, 0)? {
            print_json(&ev?);
        }
    }
    if a.wait {
        client.wait(&a.job, Duration::from_secs(u64::MAX / 4))?;
    }
    let bundle = client.assemble(&a.job)?;
    bundle.save(&a.out)?;
    print_json(&serde_json::json!({
        "bundle": a.out,
        "scales": bundle.scale_count(),
        "refreshable": bundle.manifest.refreshable(),
    }));
    Ok(())
}

fn read_request(path: &Path) -> Result<GenerationRequest> {
    let text = std::fs::read_to_string(path)?;
    let parsed = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::InvalidArgument(format!("request descriptor: {e}")))
}

fn generate_cmd(a: &GenerateArgs) -> Result<()> {
    let bundle = TrainedBundle::load(&a.bundle)?;
    let finest = bundle.finest_available().unwrap_or(0);
    let mut req = match &a.request {
        Some(p) => read_request(p)?,
        None => GenerationRequest::new(finest, 0),
    };
    if let Some(s) = a.scale {
        req.up_to_scale = s;
    }
    if let Some(s) = a.seed {
        req.seed = s;
    }
    if a.coarsest.is_some() {
        req.coarsest_dims = a.coarsest;
    }
    if let Some(p) = &a.inject {
        req.inject = Some(Injection {
            image: image_io::load_image(p)?,
            at_scale: a.inject_scale.unwrap_or(1),
        });
    }
    image_io::save_png(&generate(&bundle, &req)?, &a.out)
}

fn edit_cmd(a: &EditArgs) -> Result<()> {
    let bundle = TrainedBundle::load(&a.bundle)?;
    let kind: EditKind = a.kind.parse()?;
    let mut req = EditRequest::new(kind, image_io::load_image(&a.image)?, a.seed);
    req.mask = a.mask.as_deref().map(image_io::load_mask).transpose()?;
    req.at_scale = a.scale;
    req.sr_factor = a.sr_factor;
    req.sr_steps = a.sr_steps;
    image_io::save_png(&editor::apply(&bundle, &req)?, &a.out)
}

fn profile(a: &ProfileArgs) -> Result<()> {
    let bundle = TrainedBundle::load(&a.bundle)?;
    let source = match a.power.as_str() {
        "synthetic" => TraceSource::Synthetic(SyntheticPowerModel::default()),
        "sensor" => TraceSource::PlatformSensor {
            path: a.sensor_path.clone(),
            interval: Duration::from_millis(5),
        },
        path => TraceSource::File(PathBuf::from(path)),
    };
    let top = a.scale.or(bundle.finest_available()).unwrap_or(0);
    let report = profile_generation(&bundle, &GenerationRequest::new(top, a.seed), &source)?;
    if a.table {
        print!("{}", report.to_table());
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.out {
        Some(p) => std::fs::write(p, json)?,
        None if !a.table => println!("{json}"),
        None => {}
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let sched = compute_scale_schedule(Dims::new(a.max_dim, a.max_dim), a.max_dim, a.min_dim, 4.0 / 3.0)?;
    println!("# scale geometry: {} scales, r = {:.6}", sched.scale_count, sched.factor);
    println!("scale,height,width,params,blob_bytes,cumulative_bytes");
    let mut cumulative = 0;
    let mut cum = Vec::new();
    for (i, d) in sched.dims.iter().enumerate() {
        let bytes = 4 * param_count(i);
        cumulative += bytes;
        cum.push(cumulative);
        println!("{i},{},{},{},{bytes},{cumulative}", d.height, d.width, param_count(i));
    }
    if cum.len() >= 2 {
        let (a8, a7) = (cum[cum.len() - 1] as f64, cum[cum.len() - 2] as f64);
        println!("# bundle size drop finest -> next: {:.1}%", 100.0 * (1.0 - a7 / a8));
    }

    let power = SyntheticPowerModel::default();
    let macs: Vec<u64> = sched
        .dims
        .iter()
        .enumerate()
        .map(|(i, d)| crate::gan_models::GeneratorSpec::for_scale(i).arch.macs(d.height, d.width))
        .collect();
    let edps: Vec<f64> = (0..macs.len())
        .map(|k| {
            let (trace, t) = power.trace(&macs[..=k]);
            crate::profiler::edp(&trace, t).unwrap_or(0.0)
        })
        .collect();
    println!("# modeled EDP (synthetic power model)");
    println!("scale,latency_s,edp,normalized_edp");
    for (k, (e, n)) in edps.iter().zip(crate::profiler::normalize_edp(&edps)).enumerate() {
        let t: f64 = macs[..=k].iter().map(|&m| power.scale_latency(m)).sum();
        println!("{k},{t:.6},{e:.6e},{n:.6}");
    }

    if let Some(iters) = a.train_iterations {
        let img = crate::synthetic::texture(Dims::new(64, 64), 1);
        let mut times = Vec::new();
        for workers in [1, a.workers] {
            let config = TrainConfig {
                iterations_per_scale: iters,
                worker_count: workers,
                max_dim: 64,
                min_dim: 32,
                ssim_threshold: 1.01,
                ..TrainConfig::default()
            };
            let pyramid = pyramid_from_image(&img, config.max_dim, config.min_dim, config.scale_factor)?;
            let r = train_pyramid(&pyramid, &config, JobOptions::default())?;
            times.push(r.wall_seconds);
        }
        println!("# toy training wall time");
        println!("workers,seconds");
        println!("1,{:.3}", times[0]);
        println!("{},{:.3}", a.workers, times[1]);
        println!("# speedup {:.2}x", times[0] / times[1]);
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Serve(a) => serve(a),
        Command::Fetch(a) => fetch(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Edit(a) => edit_cmd(a),
        Command::Profile(a) => profile(a),
        Command::Bench(a) => bench(a),
    }
}

pub fn error_line(e: &Error) -> String {
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    })
    .to_string()
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_flag_reaches_the_config() {
        let argv = [
            "setgan", "train", "--image", "x.png", "--iterations", "7", "--g-steps", "2",
            "--d-steps", "4", "--lr", "0.001", "--lr-decay-at", "5", "--lr-decay-factor", "0.5",
            "--beta1", "0.4", "--beta2", "0.99", "--alpha-rec", "3", "--gp-weight", "0.2",
            "--threshold", "0.7", "--workers", "2", "--seed", "9", "--max-dim", "128",
            "--min-dim", "20", "--scale-factor", "1.5",
        ];
        let Command::Train(a) = Cli::try_parse_from(argv).unwrap().command else {
            panic!("not train")
        };
        let c = resolve_config(&a.flags, None).unwrap();
        let want = TrainConfig {
            iterations_per_scale: 7,
            g_steps: 2,
            d_steps: 4,
            learning_rate: 0.001,
            lr_decay_at: 5,
            lr_decay_factor: 0.5,
            adam_beta1: 0.4,
            adam_beta2: 0.99,
            alpha_rec: 3.0,
            gp_weight: 0.2,
            ssim_threshold: 0.7,
            worker_count: 2,
            seed: 9,
            max_dim: 128,
            min_dim: 20,
            scale_factor: 1.5,
        };
        assert_eq!(c, want);
        // the mapping round-trips through the config file format
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, config_to_toml(&c)).unwrap();
        assert_eq!(resolve_config(&TrainFlags::default(), Some(&p)).unwrap(), want);
    }

    #[test]
    fn defaults_without_flags() {
        assert_eq!(resolve_config(&TrainFlags::default(), None).unwrap(), TrainConfig::default());
    }

    #[test]
    fn config_file_keys_win_over_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 5\n").unwrap();
        let flags = TrainFlags {
            seed: Some(1),
            worker_count: Some(2),
            ..TrainFlags::default()
        };
        let c = resolve_config(&flags, Some(&p)).unwrap();
        assert_eq!((c.seed, c.worker_count), (5, 2));
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(resolve_config(&flags, Some(&p)).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["setgan", "frobnicate"]), 2);
        assert_eq!(run(["setgan", "generate"]), 2);
    }

    #[test]
    fn missing_bundle_is_io_exit_5() {
        assert_eq!(
            run(["setgan", "generate", "--bundle", "/nonexistent/b.setgan", "--out", "/tmp/x.png"]),
            5
        );
    }

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("25x40").unwrap(), Dims::new(25, 40));
        assert!(parse_dims("25").is_err());
    }
}
