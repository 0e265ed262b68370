//! Local edge-runtime service: generation and editing over HTTP against a
//! bundle held in memory. This is the endpoint an editing front end talks
//! to; training and delivery stay on the job server.

use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::bundle::{decompress_bundle, Manifest, TrainedBundle};
use crate::editor::{self, EditKind, EditRequest};
use crate::error::{Error, Result};
use crate::image_io;
use crate::inference::{generate, GenerationRequest};
use crate::profiler::{generator_macs, SyntheticPowerModel};
use crate::protocol::ErrorBody;
use crate::pyramid::Dims;

pub struct EdgeState {
    bundle: RwLock<Arc<TrainedBundle>>,
    power: SyntheticPowerModel,
}

impl EdgeState {
    pub fn new(bundle: TrainedBundle) -> Self {
        Self {
            bundle: RwLock::new(Arc::new(bundle)),
            power: SyntheticPowerModel::default(),
        }
    }

    pub fn bundle(&self) -> Arc<TrainedBundle> {
        self.bundle.read().unwrap().clone()
    }

    pub fn replace(&self, bundle: TrainedBundle) {
        *self.bundle.write().unwrap() = Arc::new(bundle);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub manifest: Manifest,
    pub available_scales: usize,
    /// Modeled EDP of generating up to each available scale, relative to
    /// the finest available one.
    pub normalized_edp: Vec<f64>,
    pub paint_scales: Vec<usize>,
    pub default_paint_scale: usize,
    pub harmonize_scales: Vec<usize>,
    pub edit_scales: Vec<usize>,
}

pub fn info(bundle: &TrainedBundle, power: &SyntheticPowerModel) -> EdgeInfo {
    let available = bundle.scale_count();
    let normalized_edp = if available == 0 {
        vec![]
    } else {
        let macs = generator_macs(bundle, &GenerationRequest::new(available - 1, 0));
        let edps: Vec<f64> = (0..available)
            .map(|k| {
                let (trace, t) = power.trace(&macs[..=k]);
                crate::profiler::edp(&trace, t).unwrap_or(0.0)
            })
            .collect();
        crate::profiler::normalize_edp(&edps)
    };
    let within = |r: std::ops::RangeInclusive<usize>| r.filter(|&s| s < available).collect();
    EdgeInfo {
        manifest: bundle.manifest.clone(),
        available_scales: available,
        normalized_edp,
        paint_scales: within(editor::PAINT_SCALES[0]..=editor::PAINT_SCALES[1]),
        default_paint_scale: editor::DEFAULT_PAINT_SCALE,
        harmonize_scales: within(editor::harmonize_window(bundle)),
        edit_scales: within(editor::EDIT_SCALE_RANGE),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateBody {
    pub up_to_scale: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub coarsest_dims: Option<Dims>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EditBody {
    pub kind: EditKind,
    pub image_base64: String,
    pub mask_base64: Option<String>,
    pub at_scale: Option<usize>,
    pub sr_factor: Option<f64>,
    pub sr_steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl EditBody {
    pub fn decode(&self) -> Result<EditRequest> {
        let b64 = |s: &str| {
            base64::engine::general_purpose::STANDARD
                .decode(s.as_bytes())
                .map_err(|e| Error::InvalidArgument(format!("base64: {e}")))
        };
        let image = image_io::decode_image(&b64(&self.image_base64)?)?;
        let mask = match &self.mask_base64 {
            Some(m) => Some(image_io::decode_mask(&b64(m)?)?),
            None => None,
        };
        Ok(EditRequest {
            kind: self.kind,
            image,
            mask,
            at_scale: self.at_scale,
            sr_factor: self.sr_factor,
            sr_steps: self.sr_steps,
            seed: self.seed,
        })
    }
}

struct EdgeError(Error);

impl IntoResponse for EdgeError {
    fn into_response(self) -> Response {
        let code = match self.0.exit_code() {
            2 => StatusCode::BAD_REQUEST,
            5 if matches!(self.0, Error::Codec(_)) => StatusCode::BAD_REQUEST,
            4 => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody {
            error: self.0.kind().into(),
            message: self.0.to_string(),
        };
        (code, Json(body)).into_response()
    }
}

impl From<Error> for EdgeError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T, EdgeError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| EdgeError(Error::Protocol(format!("worker task failed: {e}"))))?
        .map_err(EdgeError)
}

async fn get_info(State(st): State<Arc<EdgeState>>) -> Json<EdgeInfo> {
    Json(info(&st.bundle(), &st.power))
}

async fn post_generate(State(st): State<Arc<EdgeState>>, Json(body): Json<GenerateBody>) -> Result<Response, EdgeError> {
    let bundle = st.bundle();
    let png = blocking(move || {
        let top = body.up_to_scale.or(bundle.finest_available()).unwrap_or(0);
        let req = GenerationRequest {
            up_to_scale: top,
            coarsest_dims: body.coarsest_dims,
            seed: body.seed,
            inject: None,
        };
        image_io::encode_png(&generate(&bundle, &req)?)
    })
    .await?;
    Ok(png_response(png))
}

async fn post_edit(State(st): State<Arc<EdgeState>>, Json(body): Json<EditBody>) -> Result<Response, EdgeError> {
    let bundle = st.bundle();
    let png = blocking(move || image_io::encode_png(&editor::apply(&bundle, &body.decode()?)?)).await?;
    Ok(png_response(png))
}

/// Swaps in a newer (e.g. refreshed) bundle; gzip-compressed bodies are accepted.
async fn put_bundle(State(st): State<Arc<EdgeState>>, body: Bytes) -> Result<Json<EdgeInfo>, EdgeError> {
    let bytes = if body.starts_with(&[0x1f, 0x8b]) {
        decompress_bundle(&body)?
    } else {
        body.to_vec()
    };
    let bundle = TrainedBundle::deserialize(&bytes)?;
    let out = info(&bundle, &st.power);
    st.replace(bundle);
    Ok(Json(out))
}

pub fn edge_router(state: Arc<EdgeState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/edge/info", get(get_info))
        .route("/edge/generate", post(post_generate))
        .route("/edge/edit", post(post_edit))
        .route("/edge/bundle", put(put_bundle))
        .layer(DefaultBodyLimit::max(crate::server::MAX_UPLOAD_BYTES))
        .with_state(state)
}
