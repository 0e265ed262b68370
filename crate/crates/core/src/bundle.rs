//! Trained bundles: manifest plus per-scale parameter blobs.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "SETGANB\0" | format_version u32 | manifest_len u32 | manifest (JSON)
//! | blob 0 | blob 1 | ...
//! ```
//!
//! A blob is the scale's flat parameter vector (generator then
//! discriminator) as `f32` values. The manifest records each blob's offset
//! within the blob region, its size and its SHA-256.

use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BundleError, Error, Result};
use crate::gan_models::{param_count, ScaleModel};
use crate::pyramid::{Dims, ImageGrid, ScaleSchedule};
use crate::trainer::TrainingResult;

pub const MAGIC: &[u8; 8] = b"SETGANB\0";
pub const FORMAT_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "setgan";
const HEADER_LEN: usize = MAGIC.len() + 4 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryMode {
    BaselineSerial,
    ParallelOneshot,
    Progressive,
}

impl std::str::FromStr for DeliveryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "baseline_serial" | "baseline" | "serial" => Ok(Self::BaselineSerial),
            "parallel_oneshot" | "oneshot" | "parallel" => Ok(Self::ParallelOneshot),
            "progressive" => Ok(Self::Progressive),
            other => Err(Error::InvalidArgument(format!("unknown delivery mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub scale_index: usize,
    pub noise_amplitude: f32,
    pub rec_seed: u64,
    pub param_count: usize,
    pub offset: usize,
    pub byte_size: usize,
    pub sha256: String,
    /// Exit SSIM measured at training time, when known.
    #[serde(default)]
    pub ssim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub job_id: String,
    pub source_image_hash: String,
    pub schedule: ScaleSchedule,
    pub best_scale: usize,
    pub threshold: f64,
    pub seed: u64,
    pub scales: Vec<ScaleEntry>,
}

impl Manifest {
    pub fn scale_count(&self) -> usize {
        self.scales.len()
    }

    /// More scales exist in the schedule than are present here.
    pub fn refreshable(&self) -> bool {
        self.scales.len() < self.schedule.scale_count
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedBundle {
    pub manifest: Manifest,
    pub models: Vec<ScaleModel>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the image's dims and little-endian sample bytes.
pub fn image_hash(image: &ImageGrid) -> String {
    let mut h = Sha256::new();
    for d in [image.channels, image.height, image.width] {
        h.update((d as u64).to_le_bytes());
    }
    for v in &image.data {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn model_blob(model: &ScaleModel) -> Vec<u8> {
    model
        .flat_params()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect()
}

fn entry_for(model: &ScaleModel, offset: usize, ssim: Option<f64>) -> ScaleEntry {
    let blob = model_blob(model);
    ScaleEntry {
        scale_index: model.scale_index,
        noise_amplitude: model.noise_amplitude,
        rec_seed: model.rec_seed,
        param_count: model.param_count(),
        offset,
        byte_size: blob.len(),
        sha256: sha256_hex(&blob),
        ssim,
    }
}

fn decode_blob(entry: &ScaleEntry, blob: &[u8]) -> Result<ScaleModel> {
    if sha256_hex(blob) != entry.sha256 {
        return Err(BundleError::HashMismatch {
            what: format!("scale {}", entry.scale_index),
        }
        .into());
    }
    let flat: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ScaleModel::from_flat(entry.scale_index, entry.noise_amplitude, entry.rec_seed, &flat)
        .map_err(|e| BundleError::Manifest(e.to_string()).into())
}

impl TrainedBundle {
    /// Bundle of `models` (which must be scales `0..k`), with manifest
    /// entries computed from the blobs.
    pub fn new(
        job_id: impl Into<String>,
        source_image_hash: impl Into<String>,
        schedule: ScaleSchedule,
        best_scale: usize,
        threshold: f64,
        seed: u64,
        models: Vec<ScaleModel>,
        ssims: &[f64],
    ) -> Result<Self> {
        let mut offset = 0;
        let mut scales = Vec::with_capacity(models.len());
        for (i, m) in models.iter().enumerate() {
            if m.scale_index != i {
                return Err(Error::InvalidArgument(format!(
                    "bundle scales must form a prefix; found scale {} at position {i}",
                    m.scale_index
                )));
            }
            let e = entry_for(m, offset, ssims.get(i).copied());
            offset += e.byte_size;
            scales.push(e);
        }
        if models.len() > schedule.scale_count {
            return Err(Error::InvalidArgument("more models than scheduled scales".into()));
        }
        Ok(Self {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                job_id: job_id.into(),
                source_image_hash: source_image_hash.into(),
                schedule,
                best_scale,
                threshold,
                seed,
                scales,
            },
            models,
        })
    }

    /// Bundle of the first `count` trained scales of `result` (all of them when `None`).
    pub fn from_result(
        result: &TrainingResult,
        job_id: impl Into<String>,
        source_image_hash: impl Into<String>,
        count: Option<usize>,
    ) -> Result<Self> {
        let n = count.unwrap_or(result.models.len()).min(result.models.len());
        Self::new(
            job_id,
            source_image_hash,
            result.schedule.clone(),
            result.best_scale,
            result.config.ssim_threshold,
            result.config.seed,
            result.models[..n].to_vec(),
            &result.per_scale_ssim,
        )
    }

    pub fn scale_count(&self) -> usize {
        self.models.len()
    }

    pub fn factor(&self) -> f64 {
        self.manifest.schedule.factor
    }

    pub fn dims(&self, scale: usize) -> Dims {
        self.manifest.schedule.dims[scale]
    }

    pub fn finest_available(&self) -> Option<usize> {
        self.models.len().checked_sub(1)
    }

    pub fn model(&self, scale: usize) -> Result<&ScaleModel> {
        self.models.get(scale).ok_or(Error::ScaleUnavailable {
            requested: scale,
            available: self.models.len(),
        })
    }

    /// The same bundle restricted to scales `0..count`.
    pub fn prefix(&self, count: usize) -> Self {
        let n = count.min(self.models.len());
        let mut manifest = self.manifest.clone();
        manifest.scales.truncate(n);
        Self {
            manifest,
            models: self.models[..n].to_vec(),
        }
    }

    /// Appends the next scale, keeping the prefix property.
    pub fn push_scale(&mut self, model: ScaleModel, ssim: Option<f64>) -> Result<()> {
        if model.scale_index != self.models.len() {
            return Err(Error::InvalidArgument(format!(
                "expected scale {}, got {}",
                self.models.len(),
                model.scale_index
            )));
        }
        let offset = self
            .manifest
            .scales
            .last()
            .map_or(0, |e| e.offset + e.byte_size);
        self.manifest.scales.push(entry_for(&model, offset, ssim));
        self.models.push(model);
        Ok(())
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes")
    }

    pub fn serialize(&self) -> Vec<u8> {
        let manifest = self.manifest_json().into_bytes();
        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for m in &self.models {
            out.extend_from_slice(&model_blob(m));
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let truncated = |needed: usize| BundleError::Truncated {
            needed,
            found: bytes.len(),
        };
        if bytes.len() < MAGIC.len() {
            return Err(truncated(HEADER_LEN).into());
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(BundleError::BadMagic.into());
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated(HEADER_LEN).into());
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(BundleError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let mlen = u32_at(12) as usize;
        let blobs_at = HEADER_LEN + mlen;
        if bytes.len() < blobs_at {
            return Err(truncated(blobs_at).into());
        }
        let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..blobs_at])
            .map_err(|e| BundleError::Manifest(e.to_string()))?;
        validate_manifest(&manifest)?;
        let blobs = &bytes[blobs_at..];
        let mut models = Vec::with_capacity(manifest.scales.len());
        for e in &manifest.scales {
            let end = e.offset + e.byte_size;
            if blobs.len() < end {
                return Err(truncated(blobs_at + end).into());
            }
            models.push(decode_blob(e, &blobs[e.offset..end])?);
        }
        Ok(Self { manifest, models })
    }

    /// Rebuilds a bundle from a manifest and separately fetched blobs,
    /// verifying every hash.
    pub fn from_parts(manifest: Manifest, blobs: &[Vec<u8>]) -> Result<Self> {
        validate_manifest(&manifest)?;
        if blobs.len() != manifest.scales.len() {
            return Err(BundleError::Manifest(format!(
                "manifest lists {} scales but {} blobs were supplied",
                manifest.scales.len(),
                blobs.len()
            ))
            .into());
        }
        let models = manifest
            .scales
            .iter()
            .zip(blobs)
            .map(|(e, b)| decode_blob(e, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, models })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(&[0x1f, 0x8b]) {
            return Self::deserialize(&decompress_bundle(&bytes)?);
        }
        Self::deserialize(&bytes)
    }
}

/// Structural checks that do not need the blobs.
pub fn validate_manifest(m: &Manifest) -> Result<()> {
    let bad = |msg: String| -> Result<()> { Err(BundleError::Manifest(msg).into()) };
    if m.format_version != FORMAT_VERSION {
        return Err(BundleError::VersionMismatch {
            found: m.format_version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    if m.schedule.dims.len() != m.schedule.scale_count {
        return bad("schedule dims do not match its scale count".into());
    }
    if m.scales.len() > m.schedule.scale_count {
        return bad("more scales than the schedule holds".into());
    }
    let mut offset = 0;
    for (i, e) in m.scales.iter().enumerate() {
        if e.scale_index != i {
            return bad(format!("scale {} listed at position {i}; scales must form a prefix", e.scale_index));
        }
        if e.param_count != param_count(i) || e.byte_size != 4 * e.param_count {
            return bad(format!("scale {i} size does not match its architecture"));
        }
        if e.offset != offset {
            return bad(format!("scale {i} offset {} should be {offset}", e.offset));
        }
        offset += e.byte_size;
    }
    Ok(())
}

/// Gzip (deflate plus CRC-32 trailer).
pub fn compress_bundle(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

pub fn decompress_bundle(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| BundleError::Corrupt(e.to_string()))?;
    Ok(out)
}
