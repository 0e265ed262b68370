//! Blocking client for the job server: submission, progress and bundle
//! assembly from published scales.

use std::io::{BufRead, BufReader};
use std::time::{Duration, Instant};

use base64::Engine;
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use crate::bundle::{model_blob, sha256_hex, DeliveryMode, Manifest, TrainedBundle};
use crate::error::{BundleError, Error, Result};
use crate::protocol::{ErrorBody, EventRecord, JobStatus, JobTicket, SubmitRequest, SHA256_HEADER};
use crate::trainer::TrainConfig;

pub const SERVER_ENV: &str = "SETGAN_SERVER";
pub const TOKEN_ENV: &str = "SETGAN_TOKEN";

fn http_err(e: reqwest::Error) -> Error {
    Error::Protocol(e.to_string())
}

#[derive(Clone, Debug)]
pub struct JobClient {
    base: String,
    token: Option<String>,
    http: Client,
}

/// Result of asking for one scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScaleFetch {
    Ready(Vec<u8>),
    Pending,
}

impl JobClient {
    pub fn new(base: impl Into<String>) -> Result<Self> {
        let http = Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(None)
            .build()
            .map_err(http_err)?;
        Ok(Self {
            base: base.into().trim_end_matches('/').to_owned(),
            token: None,
            http,
        })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    /// Client for a freshly submitted job.
    pub fn for_ticket(&self, ticket: &JobTicket) -> Self {
        self.clone().with_token(ticket.token.clone())
    }

    fn get(&self, path: &str) -> RequestBuilder {
        let rb = self.http.get(format!("{}{path}", self.base));
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    fn check(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let msg = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| format!("{}: {}", b.error, b.message))
            .unwrap_or(text);
        Err(Error::Protocol(format!("server answered {status}: {msg}")))
    }

    fn json<T: DeserializeOwned>(resp: Response) -> Result<T> {
        let bytes = resp.bytes().map_err(http_err)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Protocol(format!("bad response body: {e}")))
    }

    pub fn health(&self) -> Result<()> {
        Self::check(self.get("/health").send().map_err(http_err)?)?;
        Ok(())
    }

    /// Uploads PNG/JPEG bytes and starts training.
    pub fn submit(&self, image: &[u8], config: &TrainConfig, mode: DeliveryMode) -> Result<JobTicket> {
        let body = SubmitRequest {
            image_base64: base64::engine::general_purpose::STANDARD.encode(image),
            config: config.clone(),
            mode,
        };
        let resp = self
            .http
            .post(format!("{}/jobs", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(serde_json::to_vec(&body).expect("request serializes"))
            .send()
            .map_err(http_err)?;
        Self::json(Self::check(resp)?)
    }

    pub fn status(&self, job_id: &str) -> Result<JobStatus> {
        Self::json(Self::check(self.get(&format!("/jobs/{job_id}/status")).send().map_err(http_err)?)?)
    }

    pub fn cancel(&self, job_id: &str) -> Result<()> {
        let mut rb = self.http.delete(format!("{}/jobs/{job_id}", self.base));
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        Self::check(rb.send().map_err(http_err)?)?;
        Ok(())
    }

    /// Manifest of the published prefix; `None` while nothing is published.
    pub fn manifest(&self, job_id: &str) -> Result<Option<Manifest>> {
        let resp = Self::check(self.get(&format!("/jobs/{job_id}/manifest")).send().map_err(http_err)?)?;
        if resp.status() == StatusCode::ACCEPTED {
            return Ok(None);
        }
        Self::json(resp).map(Some)
    }

    /// Downloads one blob and checks it against the hash the server sent.
    pub fn scale_blob(&self, job_id: &str, scale: usize) -> Result<ScaleFetch> {
        let resp = Self::check(
            self.get(&format!("/jobs/{job_id}/scales/{scale}"))
                .send()
                .map_err(http_err)?,
        )?;
        if resp.status() == StatusCode::ACCEPTED {
            return Ok(ScaleFetch::Pending);
        }
        let claimed = resp
            .headers()
            .get(SHA256_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let bytes = resp.bytes().map_err(http_err)?.to_vec();
        if let Some(h) = claimed {
            if h != sha256_hex(&bytes) {
                return Err(BundleError::HashMismatch {
                    what: format!("download of scale {scale}"),
                }
                .into());
            }
        }
        Ok(ScaleFetch::Ready(bytes))
    }

    fn blobs_for(&self, job_id: &str, manifest: &Manifest, from: usize) -> Result<Vec<Vec<u8>>> {
        manifest.scales[from..]
            .iter()
            .map(|e| match self.scale_blob(job_id, e.scale_index)? {
                ScaleFetch::Ready(b) => Ok(b),
                ScaleFetch::Pending => Err(Error::Protocol(format!(
                    "scale {} is listed in the manifest but not downloadable",
                    e.scale_index
                ))),
            })
            .collect()
    }

    /// Builds a bundle from every scale published so far. The result is a
    /// prefix `0..k`; `manifest.refreshable()` says whether more may come.
    pub fn assemble(&self, job_id: &str) -> Result<TrainedBundle> {
        let manifest = self.manifest(job_id)?.ok_or_else(|| Error::NotReady {
            job_id: job_id.to_owned(),
        })?;
        let blobs = self.blobs_for(job_id, &manifest, 0)?;
        TrainedBundle::from_parts(manifest, &blobs)
    }

    /// Extends `bundle` with newly published scales, returning how many
    /// were added. Already-held scales must keep their hashes.
    pub fn refresh(&self, bundle: &mut TrainedBundle) -> Result<usize> {
        let job_id = bundle.manifest.job_id.clone();
        let Some(manifest) = self.manifest(&job_id)? else {
            return Ok(0);
        };
        let have = bundle.scale_count();
        if manifest.scales.len() < have {
            return Err(Error::Protocol("server manifest lost published scales".into()));
        }
        for (old, new) in bundle.manifest.scales.iter().zip(&manifest.scales) {
            if old.sha256 != new.sha256 {
                return Err(BundleError::HashMismatch {
                    what: format!("previously published scale {}", old.scale_index),
                }
                .into());
            }
        }
        let mut blobs: Vec<Vec<u8>> = bundle.models.iter().map(model_blob).collect();
        blobs.extend(self.blobs_for(&job_id, &manifest, have)?);
        let added = manifest.scales.len() - have;
        *bundle = TrainedBundle::from_parts(manifest, &blobs)?;
        Ok(added)
    }

    /// Opens the progress stream, replaying events after `since`.
    pub fn events(&self, job_id: &str, since: u64) -> Result<EventStream> {
        let resp = Self::check(
            self.get(&format!("/jobs/{job_id}/events"))
                .header("last-event-id", since.to_string())
                .send()
                .map_err(http_err)?,
        )?;
        Ok(EventStream {
            reader: Box::new(BufReader::new(resp)),
        })
    }

    /// Polls until the job reaches a terminal state.
    pub fn wait(&self, job_id: &str, timeout: Duration) -> Result<JobStatus> {
        let start = Instant::now();
        loop {
            let st = self.status(job_id)?;
            if st.state.is_terminal() {
                return Ok(st);
            }
            if start.elapsed() > timeout {
                return Err(Error::Protocol(format!("job {job_id} still {:?} after {timeout:?}", st.state)));
            }
            std::thread::sleep(Duration::from_millis(100));
        }
    }
}

/// Server-sent events decoded into [`EventRecord`]s. Ends after the job's
/// final event or when the server closes the stream.
pub struct EventStream {
    reader: Box<dyn BufRead + Send>,
}

impl Iterator for EventStream {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut data = String::new();
        loop {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::Protocol(format!("event stream: {e}")))),
            }
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                if data.is_empty() {
                    continue;
                }
                return Some(
                    serde_json::from_str(&data).map_err(|e| Error::Protocol(format!("bad event: {e}"))),
                );
            }
            if let Some(rest) = line.strip_prefix("data:") {
                if !data.is_empty() {
                    data.push('\n');
                }
                data.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_sse_frames() {
        let raw = ": keep-alive\n\nid: 1\nevent: scale_cancelled\ndata: {\"seq\":1,\"type\":\"scale_cancelled\",\"scale\":3}\n\n";
        let mut s = EventStream {
            reader: Box::new(Cursor::new(raw.as_bytes().to_vec())),
        };
        let r = s.next().unwrap().unwrap();
        assert_eq!(r.seq, 1);
        assert_eq!(r.event, crate::protocol::ServerEvent::ScaleCancelled { scale: 3 });
        assert!(s.next().is_none());
    }
}
