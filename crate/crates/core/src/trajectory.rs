//! Persistent form of a planned latent walk.
//!
//! A trajectory is a single JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "tool_version": "0.1.0",
//!   "spec": { "d": 128, "num_classes": 1000, "image_size": [128, 128], "truncation": null },
//!   "fps": 30.0,
//!   "audio_sha256": "<64 hex digits>",
//!   "seed": 7,
//!   "alpha_mode": "segment-length",          // only present for the legacy divisor
//!   "keyframes": [ { "slice_index": 0, "z": [...], "category": 417 }, ... ],
//!   "frames": [ { "z": [...], "class_weights": { "417": 1.0 } }, ... ]
//! }
//! ```
//!
//! Reals are written in shortest round-trip form, so reading a written file
//! reproduces every value bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{FramePlan, GeneratorSpec, LatentKeyframe};
use crate::tv::AlphaMode;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("malformed trajectory at `{field}`: {reason}")]
    Malformed { field: String, reason: String },
    #[error("unsupported trajectory format_version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrajectoryError {
    fn malformed(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Malformed {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// The offending field path for `Malformed` errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Malformed { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryMetadata {
    pub seed: u64,
    pub tool_version: String,
    /// Lowercase hex SHA-256 of the source audio file.
    pub audio_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub spec: GeneratorSpec,
    pub fps: f64,
    pub keyframes: Vec<LatentKeyframe>,
    pub plan: FramePlan,
    pub metadata: TrajectoryMetadata,
    pub alpha_mode: AlphaMode,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u64,
    tool_version: String,
    spec: GeneratorSpec,
    fps: f64,
    audio_sha256: String,
    seed: u64,
    #[serde(default, skip_serializing_if = "is_default_mode")]
    alpha_mode: AlphaMode,
    keyframes: Vec<LatentKeyframe>,
    frames: FramePlan,
}

fn is_default_mode(mode: &AlphaMode) -> bool {
    *mode == AlphaMode::default()
}

fn check_latent(field: String, z: &[f64], dim: usize) -> Result<(), TrajectoryError> {
    if z.len() != dim {
        return Err(TrajectoryError::malformed(
            field,
            format!("latent has {} entries, spec.d is {dim}", z.len()),
        ));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(TrajectoryError::malformed(format!("{field}[{i}]"), "not finite"));
    }
    Ok(())
}

impl Trajectory {
    pub fn num_frames(&self) -> usize {
        self.plan.len()
    }

    /// Checks every structural invariant, reporting the first failing field.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let spec = &self.spec;
        if spec.latent_dim == 0 {
            return Err(TrajectoryError::malformed("spec.d", "must be at least 1"));
        }
        if spec.num_classes == 0 {
            return Err(TrajectoryError::malformed("spec.num_classes", "must be at least 1"));
        }
        if spec.image_size.0 == 0 || spec.image_size.1 == 0 {
            return Err(TrajectoryError::malformed("spec.image_size", "dimensions must be at least 1"));
        }
        if let Some(t) = spec.truncation {
            if !(t > 0.0 && t <= 2.0) {
                return Err(TrajectoryError::malformed("spec.truncation", format!("{t} outside (0, 2]")));
            }
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(TrajectoryError::malformed("fps", format!("{} is not positive", self.fps)));
        }
        let digest = &self.metadata.audio_sha256;
        if digest.len() != 64 || !digest.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(TrajectoryError::malformed("audio_sha256", "expected 64 lowercase hex digits"));
        }

        let frames = &self.plan.frames;
        if frames.len() < 2 {
            return Err(TrajectoryError::malformed("frames", format!("{} frames (need at least 2)", frames.len())));
        }
        for (i, frame) in frames.iter().enumerate() {
            check_latent(format!("frames[{i}].z"), &frame.z_mix, spec.latent_dim)?;
            frame
                .class_weights
                .check(spec.num_classes)
                .map_err(|reason| TrajectoryError::malformed(format!("frames[{i}].class_weights"), reason))?;
        }

        let keyframes = &self.keyframes;
        if keyframes.len() < 2 {
            return Err(TrajectoryError::malformed(
                "keyframes",
                format!("{} keyframes (need at least 2)", keyframes.len()),
            ));
        }
        let last_slice = frames.len() - 1;
        for (i, kf) in keyframes.iter().enumerate() {
            check_latent(format!("keyframes[{i}].z"), &kf.z, spec.latent_dim)?;
            if kf.category >= spec.num_classes {
                return Err(TrajectoryError::malformed(
                    format!("keyframes[{i}].category"),
                    format!("{} outside [0, {})", kf.category, spec.num_classes),
                ));
            }
            let expected_ok = match i {
                0 => kf.slice_index == 0,
                _ if i == keyframes.len() - 1 => kf.slice_index == last_slice,
                _ => kf.slice_index > keyframes[i - 1].slice_index && kf.slice_index < last_slice,
            };
            if !expected_ok || (i > 0 && kf.slice_index <= keyframes[i - 1].slice_index) {
                return Err(TrajectoryError::malformed(
                    format!("keyframes[{i}].slice_index"),
                    format!(
                        "{} breaks the strictly increasing 0..={last_slice} keyframe sequence",
                        kf.slice_index
                    ),
                ));
            }
        }

        if self.alpha_mode == AlphaMode::SegmentTotal {
            for kf in keyframes {
                let frame = &frames[kf.slice_index];
                if frame.z_mix != kf.z {
                    return Err(TrajectoryError::malformed(
                        format!("frames[{}].z", kf.slice_index),
                        "boundary frame differs from its keyframe latent",
                    ));
                }
                if frame.class_weights.sole_class() != Some(kf.category) {
                    return Err(TrajectoryError::malformed(
                        format!("frames[{}].class_weights", kf.slice_index),
                        format!("boundary frame is not pure class {}", kf.category),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, TrajectoryError> {
        self.validate()?;
        let doc = Document {
            format_version: FORMAT_VERSION,
            tool_version: self.metadata.tool_version.clone(),
            spec: self.spec.clone(),
            fps: self.fps,
            audio_sha256: self.metadata.audio_sha256.clone(),
            seed: self.metadata.seed,
            alpha_mode: self.alpha_mode,
            keyframes: self.keyframes.clone(),
            frames: self.plan.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| TrajectoryError::malformed("<document>", e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        if text.trim().is_empty() {
            return Err(TrajectoryError::malformed("<document>", "file is empty"));
        }
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| TrajectoryError::malformed("<document>", e.to_string()))?;
        if !value.is_object() {
            return Err(TrajectoryError::malformed("<document>", "expected a JSON object"));
        }
        match value.get("format_version") {
            None => return Err(TrajectoryError::malformed("format_version", "missing")),
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            Some(v) => return Err(TrajectoryError::VersionMismatch { found: v.to_string() }),
        }

        let doc: Document = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<document>".to_string() } else { path };
            TrajectoryError::malformed(field, e.into_inner().to_string())
        })?;
        let traj = Trajectory {
            spec: doc.spec,
            fps: doc.fps,
            keyframes: doc.keyframes,
            plan: doc.frames,
            metadata: TrajectoryMetadata {
                seed: doc.seed,
                tool_version: doc.tool_version,
                audio_sha256: doc.audio_sha256,
            },
            alpha_mode: doc.alpha_mode,
        };
        traj.validate()?;
        Ok(traj)
    }
}

pub fn write_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
    let path = path.as_ref();
    let text = traj.to_json()?;
    std::fs::write(path, text).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, TrajectoryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Trajectory::from_json(&text)
}
