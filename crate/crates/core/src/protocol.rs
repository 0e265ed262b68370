//! Wire types shared by the job server and its clients.

use serde::{Deserialize, Serialize};

use crate::bundle::DeliveryMode;
use crate::trainer::TrainConfig;

/// Header carrying a scale blob's SHA-256.
pub const SHA256_HEADER: &str = "x-setgan-sha256";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubmitRequest {
    /// PNG or JPEG bytes, base64 encoded.
    pub image_base64: String,
    #[serde(default)]
    pub config: TrainConfig,
    pub mode: DeliveryMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobTicket {
    pub job_id: String,
    pub token: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Failed,
    Cancelled,
    /// The server stopped while the job was running.
    Interrupted,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, JobState::Queued | JobState::Running)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleState {
    Queued,
    Training,
    /// Finished, waiting for a lower scale before it can be published.
    Trained,
    Ready,
    Cancelled,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStatus {
    pub scale: usize,
    pub state: ScaleState,
    pub ssim: Option<f64>,
    pub wall_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub mode: DeliveryMode,
    pub state: JobState,
    pub scale_count: usize,
    /// Scales `0..published` can be downloaded.
    pub published: usize,
    pub best_scale: Option<usize>,
    pub threshold: f64,
    pub scales: Vec<ScaleStatus>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEvent {
    JobStarted {
        mode: DeliveryMode,
        scale_count: usize,
    },
    ScaleStarted {
        scale: usize,
        attempt: u32,
    },
    Progress {
        scale: usize,
        iteration: usize,
        d_loss: f32,
        g_loss: f32,
        rec_loss: f32,
    },
    ScaleRetried {
        scale: usize,
        message: String,
    },
    ScaleFinished {
        scale: usize,
        ssim: f64,
        exit: bool,
        wall_seconds: f64,
    },
    ScaleCancelled {
        scale: usize,
    },
    ScaleReady {
        scale: usize,
        sha256: String,
        byte_size: usize,
    },
    JobCompleted {
        best_scale: usize,
        published: usize,
    },
    JobFailed {
        message: String,
    },
}

impl ServerEvent {
    pub fn name(&self) -> &'static str {
        match self {
            ServerEvent::JobStarted { .. } => "job_started",
            ServerEvent::ScaleStarted { .. } => "scale_started",
            ServerEvent::Progress { .. } => "progress",
            ServerEvent::ScaleRetried { .. } => "scale_retried",
            ServerEvent::ScaleFinished { .. } => "scale_finished",
            ServerEvent::ScaleCancelled { .. } => "scale_cancelled",
            ServerEvent::ScaleReady { .. } => "scale_ready",
            ServerEvent::JobCompleted { .. } => "job_completed",
            ServerEvent::JobFailed { .. } => "job_failed",
        }
    }

    /// No further events follow this one.
    pub fn is_final(&self) -> bool {
        matches!(self, ServerEvent::JobCompleted { .. } | ServerEvent::JobFailed { .. })
    }
}

/// An event with its position in the job's log (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: ServerEvent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_records_are_flat_json() {
        let r = EventRecord {
            seq: 4,
            event: ServerEvent::ScaleReady {
                scale: 2,
                sha256: "ab".into(),
                byte_size: 16,
            },
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["type"], "scale_ready");
        assert_eq!(v["seq"], 4);
        let back: EventRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn submit_request_fills_config_defaults() {
        let r: SubmitRequest =
            serde_json::from_str(r#"{"image_base64":"","mode":"progressive","config":{"seed":5}}"#)
                .unwrap();
        assert_eq!(r.config.seed, 5);
        assert_eq!(r.config.iterations_per_scale, 2000);
        assert_eq!(r.mode, DeliveryMode::Progressive);
    }
}
