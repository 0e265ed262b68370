//! Training job server.
//!
//! Every job lives in its own directory under `<root>/jobs/<job_id>/`:
//!
//! ```text
//! job.json          id, token hash, mode, config
//! source.png        submitted image
//! status.json       latest JobStatus
//! manifest.json     manifest of the published prefix
//! scale_<i>.bin     published parameter blobs
//! events.jsonl      every event sent to subscribers, in order
//! telemetry.jsonl   per-iteration losses
//! ```
//!
//! A blob is written (to a temporary name, then renamed) before the manifest
//! lists it and before its `scale_ready` event goes out, so readers only ever
//! see a prefix `0..k` of complete, hashed scales.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::convert::Infallible;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::bundle::{image_hash, model_blob, sha256_hex, DeliveryMode, Manifest, TrainedBundle};
use crate::error::{Error, Result};
use crate::gan_models::ScaleModel;
use crate::image_io;
use crate::protocol::{
    ErrorBody, EventRecord, JobState, JobStatus, JobTicket, ScaleState, ScaleStatus, ServerEvent,
    SubmitRequest, SHA256_HEADER,
};
use crate::pyramid::{pyramid_from_image, ImageGrid};
use crate::trainer::{select_best_scale, train_pyramid, JobOptions, TrainConfig, TrainEvent};

/// Iteration progress is broadcast every this many iterations.
pub const PROGRESS_EVERY: usize = 50;
pub const MAX_UPLOAD_BYTES: usize = 64 << 20;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct JobMeta {
    job_id: String,
    token_sha256: String,
    mode: DeliveryMode,
    config: TrainConfig,
}

struct JobInner {
    status: JobStatus,
    /// Published prefix; `None` until the schedule is known.
    bundle: Option<TrainedBundle>,
    /// Finished scales waiting for a lower one (progressive mode).
    pending: BTreeMap<usize, (ScaleModel, f64)>,
    seq: u64,
    log: File,
    telemetry: File,
}

pub struct Job {
    pub id: String,
    dir: PathBuf,
    meta: JobMeta,
    cancel: AtomicBool,
    inner: Mutex<JobInner>,
    tx: broadcast::Sender<EventRecord>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn append(path: &Path) -> Result<File> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

fn blob_path(dir: &Path, scale: usize) -> PathBuf {
    dir.join(format!("scale_{scale}.bin"))
}

impl Job {
    fn create(dir: PathBuf, meta: JobMeta, image: &ImageGrid) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("job.json"), &serde_json::to_vec_pretty(&meta).unwrap())?;
        image_io::save_png(image, &dir.join("source.png"))?;
        let status = JobStatus {
            job_id: meta.job_id.clone(),
            mode: meta.mode,
            state: JobState::Queued,
            scale_count: 0,
            published: 0,
            best_scale: None,
            threshold: meta.config.ssim_threshold,
            scales: vec![],
            error: None,
        };
        let job = Self::with_state(dir, meta, status, None, 0)?;
        job.inner.lock().unwrap().save_status(&job.dir)?;
        Ok(job)
    }

    fn with_state(
        dir: PathBuf,
        meta: JobMeta,
        status: JobStatus,
        bundle: Option<TrainedBundle>,
        seq: u64,
    ) -> Result<Self> {
        let inner = JobInner {
            status,
            bundle,
            pending: BTreeMap::new(),
            seq,
            log: append(&dir.join("events.jsonl"))?,
            telemetry: append(&dir.join("telemetry.jsonl"))?,
        };
        Ok(Self {
            id: meta.job_id.clone(),
            dir,
            meta,
            cancel: AtomicBool::new(false),
            inner: Mutex::new(inner),
            tx: broadcast::channel(1024).0,
        })
    }

    /// Reloads a job directory written by an earlier server process.
    fn load(dir: PathBuf) -> Result<Self> {
        let meta: JobMeta = serde_json::from_slice(&fs::read(dir.join("job.json"))?)
            .map_err(|e| Error::Protocol(format!("job.json: {e}")))?;
        let mut status: JobStatus = serde_json::from_slice(&fs::read(dir.join("status.json"))?)
            .map_err(|e| Error::Protocol(format!("status.json: {e}")))?;
        let bundle = match fs::read(dir.join("manifest.json")) {
            Ok(bytes) => {
                let manifest: Manifest = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Protocol(format!("manifest.json: {e}")))?;
                let blobs = (0..manifest.scales.len())
                    .map(|i| fs::read(blob_path(&dir, i)))
                    .collect::<std::io::Result<Vec<_>>>()?;
                Some(TrainedBundle::from_parts(manifest, &blobs)?)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let seq = read_log(&dir, 0)?.last().map_or(0, |r| r.seq);
        let interrupted = !status.state.is_terminal();
        if interrupted {
            status.state = JobState::Interrupted;
            status.error = Some("server restarted while the job was running".into());
        }
        let job = Self::with_state(dir, meta, status, bundle, seq)?;
        if interrupted {
            let mut inner = job.inner.lock().unwrap();
            inner.save_status(&job.dir)?;
            let msg = inner.status.error.clone().unwrap();
            job.record(&mut inner, ServerEvent::JobFailed { message: msg });
        }
        Ok(job)
    }

    pub fn status(&self) -> JobStatus {
        self.inner.lock().unwrap().status.clone()
    }

    pub fn manifest(&self) -> Option<Manifest> {
        let inner = self.inner.lock().unwrap();
        inner
            .bundle
            .as_ref()
            .filter(|b| b.scale_count() > 0)
            .map(|b| b.manifest.clone())
    }

    fn check_token(&self, token: &str) -> bool {
        sha256_hex(token.as_bytes()) == self.meta.token_sha256
    }

    /// Appends to the event log, then broadcasts. Call with the lock held.
    fn record(&self, inner: &mut JobInner, event: ServerEvent) {
        inner.seq += 1;
        let rec = EventRecord {
            seq: inner.seq,
            event,
        };
        let line = serde_json::to_string(&rec).expect("event serializes");
        if let Err(e) = writeln!(inner.log, "{line}").and_then(|_| inner.log.flush()) {
            log::error!("job {}: event log write failed: {e}", self.id);
        }
        let _ = self.tx.send(rec);
    }

    fn emit(&self, event: ServerEvent) {
        let mut inner = self.inner.lock().unwrap();
        self.record(&mut inner, event);
    }

    /// Events with `seq > since`, read under the lock so the result is a
    /// consistent prefix of the log.
    fn events_since(&self, since: u64) -> Result<Vec<EventRecord>> {
        let _guard = self.inner.lock().unwrap();
        read_log(&self.dir, since)
    }

    fn set_scale(&self, inner: &mut JobInner, scale: usize, state: ScaleState) {
        if let Some(s) = inner.status.scales.get_mut(scale) {
            s.state = state;
        }
        let _ = inner.save_status(&self.dir);
    }

    /// Publishes `models` (the next scales in order) as one batch.
    fn publish(&self, inner: &mut JobInner, models: Vec<(ScaleModel, f64)>) -> Result<()> {
        if models.is_empty() {
            return Ok(());
        }
        let bundle = inner.bundle.as_mut().expect("schedule known before publication");
        let first = bundle.scale_count();
        for (model, ssim) in models {
            write_atomic(&blob_path(&self.dir, model.scale_index), &model_blob(&model))?;
            bundle.push_scale(model, Some(ssim))?;
        }
        let ssims: Vec<f64> = bundle.manifest.scales.iter().filter_map(|e| e.ssim).collect();
        bundle.manifest.best_scale = select_best_scale(&ssims, bundle.manifest.threshold);
        write_atomic(&self.dir.join("manifest.json"), bundle.manifest_json().as_bytes())?;
        let entries = bundle.manifest.scales[first..].to_vec();
        inner.status.published = bundle.scale_count();
        for e in &entries {
            inner.status.scales[e.scale_index].state = ScaleState::Ready;
        }
        inner.save_status(&self.dir)?;
        for e in entries {
            self.record(
                inner,
                ServerEvent::ScaleReady {
                    scale: e.scale_index,
                    sha256: e.sha256,
                    byte_size: e.byte_size,
                },
            );
        }
        Ok(())
    }

    /// Queues a finished scale and publishes every scale that now extends
    /// the contiguous prefix.
    pub fn scale_finished(&self, model: ScaleModel, ssim: f64) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        inner.pending.insert(model.scale_index, (model, ssim));
        let mut next = inner.bundle.as_ref().map_or(0, |b| b.scale_count());
        let mut batch = Vec::new();
        while let Some(entry) = inner.pending.remove(&next) {
            batch.push(entry);
            next += 1;
        }
        self.publish(&mut inner, batch)
    }

    /// Switches the job to running once its schedule is known.
    pub fn start(&self, bundle: TrainedBundle) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let n = bundle.manifest.schedule.scale_count;
        inner.status.state = JobState::Running;
        inner.status.scale_count = n;
        inner.status.scales = (0..n)
            .map(|scale| ScaleStatus {
                scale,
                state: ScaleState::Queued,
                ssim: None,
                wall_seconds: None,
            })
            .collect();
        inner.bundle = Some(bundle);
        inner.save_status(&self.dir)?;
        self.record(
            &mut inner,
            ServerEvent::JobStarted {
                mode: self.meta.mode,
                scale_count: n,
            },
        );
        Ok(())
    }

    pub fn finish(&self, best_scale: usize) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(b) = inner.bundle.as_mut() {
            if b.scale_count() > 0 {
                b.manifest.best_scale = best_scale;
                let json = b.manifest_json();
                write_atomic(&self.dir.join("manifest.json"), json.as_bytes())?;
            }
        }
        inner.status.state = JobState::Completed;
        inner.status.best_scale = Some(best_scale);
        inner.save_status(&self.dir)?;
        let published = inner.status.published;
        self.record(
            &mut inner,
            ServerEvent::JobCompleted {
                best_scale,
                published,
            },
        );
        Ok(())
    }

    pub fn fail(&self, err: &Error) {
        let mut inner = self.inner.lock().unwrap();
        inner.status.state = match err {
            Error::Cancelled { .. } => JobState::Cancelled,
            _ => JobState::Failed,
        };
        inner.status.error = Some(err.to_string());
        let _ = inner.save_status(&self.dir);
        self.record(
            &mut inner,
            ServerEvent::JobFailed {
                message: err.to_string(),
            },
        );
    }

    fn on_train_event(&self, e: &TrainEvent<'_>) {
        let progressive = self.meta.mode == DeliveryMode::Progressive;
        let iterations = self.meta.config.iterations_per_scale;
        match e {
            TrainEvent::ScaleStarted { scale, attempt } => {
                let mut inner = self.inner.lock().unwrap();
                self.set_scale(&mut inner, *scale, ScaleState::Training);
                self.record(
                    &mut inner,
                    ServerEvent::ScaleStarted {
                        scale: *scale,
                        attempt: *attempt,
                    },
                );
            }
            TrainEvent::Iteration(r) => {
                let mut inner = self.inner.lock().unwrap();
                let _ = writeln!(inner.telemetry, "{}", r.to_json_line());
                if r.iteration % PROGRESS_EVERY == 0 || r.iteration + 1 == iterations {
                    self.record(
                        &mut inner,
                        ServerEvent::Progress {
                            scale: r.scale,
                            iteration: r.iteration,
                            d_loss: r.d_loss,
                            g_loss: r.g_loss,
                            rec_loss: r.rec_loss,
                        },
                    );
                }
            }
            TrainEvent::ScaleRetried { scale, message } => self.emit(ServerEvent::ScaleRetried {
                scale: *scale,
                message: message.clone(),
            }),
            TrainEvent::ScaleFinished(f) => {
                let scale = f.model.scale_index;
                {
                    let mut inner = self.inner.lock().unwrap();
                    if let Some(s) = inner.status.scales.get_mut(scale) {
                        s.ssim = Some(f.ssim);
                        s.wall_seconds = Some(f.wall_seconds);
                    }
                    self.set_scale(&mut inner, scale, ScaleState::Trained);
                    self.record(
                        &mut inner,
                        ServerEvent::ScaleFinished {
                            scale,
                            ssim: f.ssim,
                            exit: f.exit,
                            wall_seconds: f.wall_seconds,
                        },
                    );
                }
                if progressive {
                    if let Err(err) = self.scale_finished(f.model.clone(), f.ssim) {
                        log::error!("job {}: publishing scale {scale} failed: {err}", self.id);
                    }
                }
            }
            TrainEvent::ScaleCancelled { scale } => {
                let mut inner = self.inner.lock().unwrap();
                self.set_scale(&mut inner, *scale, ScaleState::Cancelled);
                self.record(&mut inner, ServerEvent::ScaleCancelled { scale: *scale });
            }
        }
    }

    /// Trains the job to completion on the calling thread.
    pub fn run(&self, image: &ImageGrid) {
        if let Err(e) = self.try_run(image) {
            log::warn!("job {} ended: {e}", self.id);
            self.fail(&e);
        }
    }

    fn try_run(&self, image: &ImageGrid) -> Result<()> {
        let config = &self.meta.config;
        let pyramid =
            pyramid_from_image(image, config.max_dim, config.min_dim, config.scale_factor)?;
        self.start(TrainedBundle::new(
            self.id.clone(),
            image_hash(image),
            pyramid.schedule.clone(),
            0,
            config.ssim_threshold,
            config.seed,
            vec![],
            &[],
        )?)?;
        let on_event = |e: &TrainEvent<'_>| self.on_train_event(e);
        let result = train_pyramid(
            &pyramid,
            config,
            JobOptions {
                cancel_above_exit: self.meta.mode == DeliveryMode::ParallelOneshot,
                on_event: Some(&on_event),
                cancel: Some(&self.cancel),
                inject_fault: None,
            },
        )?;
        if self.meta.mode != DeliveryMode::Progressive {
            let batch = result
                .models
                .into_iter()
                .zip(result.per_scale_ssim.iter().copied())
                .collect();
            let mut inner = self.inner.lock().unwrap();
            self.publish(&mut inner, batch)?;
        }
        let published = self.status().published;
        let best = result.best_scale.min(published.saturating_sub(1));
        self.finish(best)
    }

    pub fn request_cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }
}

impl JobInner {
    fn save_status(&self, dir: &Path) -> Result<()> {
        write_atomic(
            &dir.join("status.json"),
            &serde_json::to_vec_pretty(&self.status).unwrap(),
        )
    }
}

fn read_log(dir: &Path, since: u64) -> Result<Vec<EventRecord>> {
    let f = match File::open(dir.join("events.jsonl")) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Protocol(format!("event log: {e}")))?;
        if rec.seq > since {
            out.push(rec);
        }
    }
    Ok(out)
}

/// All jobs known to one server process.
pub struct JobRegistry {
    root: PathBuf,
    jobs: RwLock<HashMap<String, Arc<Job>>>,
}

impl JobRegistry {
    /// Opens `root`, reloading any jobs persisted there.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let jobs_dir = root.join("jobs");
        fs::create_dir_all(&jobs_dir)?;
        let mut jobs = HashMap::new();
        for entry in fs::read_dir(&jobs_dir)? {
            let dir = entry?.path();
            if !dir.join("job.json").exists() {
                continue;
            }
            match Job::load(dir.clone()) {
                Ok(job) => {
                    jobs.insert(job.id.clone(), Arc::new(job));
                }
                Err(e) => log::warn!("skipping job directory {}: {e}", dir.display()),
            }
        }
        Ok(Self {
            root,
            jobs: RwLock::new(jobs),
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.read().unwrap().get(id).cloned()
    }

    /// Creates a job without starting it.
    pub fn create(&self, image: &ImageGrid, mut config: TrainConfig, mode: DeliveryMode) -> Result<(Arc<Job>, JobTicket)> {
        if mode == DeliveryMode::BaselineSerial {
            config.worker_count = 1;
        }
        config.validate()?;
        let job_id = uuid::Uuid::new_v4().simple().to_string();
        let token = uuid::Uuid::new_v4().simple().to_string();
        let meta = JobMeta {
            job_id: job_id.clone(),
            token_sha256: sha256_hex(token.as_bytes()),
            mode,
            config,
        };
        let job = Arc::new(Job::create(self.root.join("jobs").join(&job_id), meta, image)?);
        self.jobs.write().unwrap().insert(job_id.clone(), job.clone());
        Ok((job, JobTicket { job_id, token }))
    }

    /// Creates a job and trains it on a background thread.
    pub fn submit(&self, image: ImageGrid, config: TrainConfig, mode: DeliveryMode) -> Result<JobTicket> {
        let (job, ticket) = self.create(&image, config, mode)?;
        std::thread::Builder::new()
            .name(format!("job-{}", &ticket.job_id[..8]))
            .spawn(move || job.run(&image))?;
        Ok(ticket)
    }
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(code: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self(
            code,
            ErrorBody {
                error: error.into(),
                message: message.into(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e.exit_code() {
            2 => StatusCode::BAD_REQUEST,
            _ if matches!(e, Error::Codec(_)) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(code, e.kind(), e.to_string())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
struct AuthQuery {
    token: Option<String>,
    since: Option<u64>,
}

fn pending() -> Response {
    (StatusCode::ACCEPTED, Json(serde_json::json!({ "status": "pending" }))).into_response()
}

fn authorize(reg: &JobRegistry, id: &str, headers: &HeaderMap, q: &AuthQuery) -> ApiResult<Arc<Job>> {
    let job = reg
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {id}")))?;
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_owned);
    let Some(token) = bearer.or_else(|| q.token.clone()) else {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing job token"));
    };
    if !job.check_token(&token) {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "token does not own this job"));
    }
    Ok(job)
}

async fn submit(State(reg): State<Arc<JobRegistry>>, Json(req): Json<SubmitRequest>) -> ApiResult<Response> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(req.image_base64.as_bytes())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_argument", format!("image_base64: {e}")))?;
    let image = image_io::decode_image(&bytes)?;
    let ticket = reg.submit(image, req.config, req.mode)?;
    Ok((StatusCode::CREATED, Json(ticket)).into_response())
}

async fn status(
    State(reg): State<Arc<JobRegistry>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AuthQuery>,
    headers: HeaderMap,
) -> ApiResult<Json<JobStatus>> {
    Ok(Json(authorize(&reg, &id, &headers, &q)?.status()))
}

async fn cancel(
    State(reg): State<Arc<JobRegistry>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AuthQuery>,
    headers: HeaderMap,
) -> ApiResult<StatusCode> {
    authorize(&reg, &id, &headers, &q)?.request_cancel();
    Ok(StatusCode::ACCEPTED)
}

async fn manifest(
    State(reg): State<Arc<JobRegistry>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AuthQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let job = authorize(&reg, &id, &headers, &q)?;
    Ok(match job.manifest() {
        Some(m) => Json(m).into_response(),
        None => pending(),
    })
}

async fn scale(
    State(reg): State<Arc<JobRegistry>>,
    UrlPath((id, index)): UrlPath<(String, usize)>,
    Query(q): Query<AuthQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let job = authorize(&reg, &id, &headers, &q)?;
    let (entry, st) = {
        let inner = job.inner.lock().unwrap();
        let entry = inner
            .bundle
            .as_ref()
            .and_then(|b| b.manifest.scales.get(index).cloned());
        (entry, inner.status.clone())
    };
    if let Some(entry) = entry {
        let blob = fs::read(blob_path(&job.dir, index)).map_err(Error::from)?;
        return Ok((
            [
                (header::CONTENT_TYPE, "application/octet-stream".to_owned()),
                (header::HeaderName::from_static(SHA256_HEADER), entry.sha256),
            ],
            blob,
        )
            .into_response());
    }
    let will_publish = match st.scales.get(index) {
        Some(s) => !matches!(s.state, ScaleState::Cancelled | ScaleState::Failed) && !st.state.is_terminal(),
        None => st.state == JobState::Queued,
    };
    if will_publish {
        Ok(pending())
    } else {
        Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_scale",
            format!("scale {index} of job {id} will not be published"),
        ))
    }
}

struct Replay {
    job: Arc<Job>,
    backlog: VecDeque<EventRecord>,
    rx: broadcast::Receiver<EventRecord>,
    last: u64,
    done: bool,
}

fn sse_event(r: &EventRecord) -> Event {
    Event::default()
        .id(r.seq.to_string())
        .event(r.event.name())
        .data(serde_json::to_string(r).expect("event serializes"))
}

async fn events(
    State(reg): State<Arc<JobRegistry>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AuthQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = std::result::Result<Event, Infallible>>>> {
    let job = authorize(&reg, &id, &headers, &q)?;
    let since = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .or(q.since)
        .unwrap_or(0);
    // subscribe before reading the log so nothing falls between the two
    let rx = job.tx.subscribe();
    let backlog = job.events_since(since)?.into();
    let state = Replay {
        job,
        backlog,
        rx,
        last: since,
        done: false,
    };
    let stream = futures::stream::unfold(state, |mut s| async move {
        loop {
            if s.done {
                return None;
            }
            if let Some(r) = s.backlog.pop_front() {
                if r.seq <= s.last {
                    continue;
                }
                s.last = r.seq;
                s.done = r.event.is_final();
                return Some((Ok(sse_event(&r)), s));
            }
            match s.rx.recv().await {
                Ok(r) => s.backlog.push_back(r),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let missed = s.job.events_since(s.last).unwrap_or_default();
                    s.backlog.extend(missed);
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(registry: Arc<JobRegistry>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/jobs", post(submit))
        .route("/jobs/{id}", axum::routing::delete(cancel))
        .route("/jobs/{id}/status", get(status))
        .route("/jobs/{id}/manifest", get(manifest))
        .route("/jobs/{id}/scales/{index}", get(scale))
        .route("/jobs/{id}/events", get(events))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(registry)
}

/// Serves `app` until `shutdown` resolves.
pub async fn serve_router(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// A server on its own runtime thread; stops when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn start(app: Router, addr: &str) -> Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new()
            .name(format!("http-{addr}"))
            .spawn(move || {
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(std_listener)
                        .expect("listener registers with the runtime");
                    let stop = async move {
                        let _ = rx.await;
                    };
                    if let Err(e) = serve_router(listener, app, stop).await {
                        log::error!("server on {addr} stopped: {e}");
                    }
                })
            })?;
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Starts the job server over `root`.
    pub fn jobs(root: impl Into<PathBuf>, addr: &str) -> Result<Self> {
        Self::start(router(Arc::new(JobRegistry::open(root)?)), addr)
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
