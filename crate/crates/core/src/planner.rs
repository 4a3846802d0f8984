//! Keyframe sampling and per-frame latent/class mixtures.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tv::{AlphaTrack, InflectionSet};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("category {category} at keyframe {keyframe} is outside [0, {num_classes})")]
    InvalidCategory {
        keyframe: usize,
        category: u32,
        num_classes: u32,
    },
    #[error("category pinned at keyframe {index} but only {count} keyframes exist")]
    PinOutOfRange { index: usize, count: usize },
    #[error("misaligned inputs: {0}")]
    MisalignedInputs(String),
}

/// Capabilities of a class-conditional generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(rename = "d")]
    pub latent_dim: usize,
    pub num_classes: u32,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    /// Latent coordinates with larger magnitude are resampled.
    pub truncation: Option<f64>,
}

impl GeneratorSpec {
    pub fn new(
        latent_dim: usize,
        num_classes: u32,
        image_size: (u32, u32),
        truncation: Option<f64>,
    ) -> Result<Self, PlanError> {
        let spec = Self {
            latent_dim,
            num_classes,
            image_size,
            truncation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.latent_dim == 0 {
            return Err(PlanError::InvalidSpec("latent dimension must be at least 1".into()));
        }
        if self.num_classes == 0 {
            return Err(PlanError::InvalidSpec("need at least one class".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(PlanError::InvalidSpec("image size must be at least 1x1".into()));
        }
        if let Some(t) = self.truncation {
            if !(t > 0.0 && t <= 2.0) {
                return Err(PlanError::InvalidSpec(format!(
                    "truncation {t} outside (0, 2]"
                )));
            }
        }
        Ok(())
    }
}

impl Default for GeneratorSpec {
    /// 128-dim latents, 1000 classes, 128x128 images.
    fn default() -> Self {
        Self {
            latent_dim: 128,
            num_classes: 1000,
            image_size: (128, 128),
            truncation: None,
        }
    }
}

/// A latent code and category anchored at an inflection slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentKeyframe {
    pub slice_index: usize,
    pub z: Vec<f64>,
    pub category: u32,
}

/// Convex weights over at most two classes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(BTreeMap<u32, f64>);

impl ClassWeights {
    pub fn single(category: u32) -> Self {
        Self(BTreeMap::from([(category, 1.0)]))
    }

    /// `(1 - alpha)` on `from` plus `alpha` on `to`; zero weights are dropped
    /// and identical categories collapse to one entry.
    pub fn mix(from: u32, to: u32, alpha: f64) -> Self {
        if from == to || alpha >= 1.0 {
            return Self::single(to);
        }
        if alpha <= 0.0 {
            return Self::single(from);
        }
        Self(BTreeMap::from([(from, 1.0 - alpha), (to, alpha)]))
    }

    pub fn from_map(weights: BTreeMap<u32, f64>) -> Self {
        Self(weights)
    }

    pub fn as_map(&self) -> &BTreeMap<u32, f64> {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.0.iter().map(|(&c, &w)| (c, w))
    }

    pub fn sum(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self, category: u32) -> f64 {
        self.0.get(&category).copied().unwrap_or(0.0)
    }

    /// `Some(c)` when all weight sits on class `c`.
    pub fn sole_class(&self) -> Option<u32> {
        match self.0.iter().next() {
            Some((&c, &w)) if self.0.len() == 1 && w == 1.0 => Some(c),
            _ => None,
        }
    }

    /// Checks support size, range and normalization. Returns a description
    /// of the first violation.
    pub fn check(&self, num_classes: u32) -> Result<(), String> {
        if self.0.is_empty() {
            return Err("no class weights".into());
        }
        if self.0.len() > 2 {
            return Err(format!("{} non-zero classes (at most 2 allowed)", self.0.len()));
        }
        for (&c, &w) in &self.0 {
            if c >= num_classes {
                return Err(format!("class {c} outside [0, {num_classes})"));
            }
            if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
                return Err(format!("weight {w} for class {c} outside [0, 1]"));
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("weights sum to {sum}, expected 1"));
        }
        Ok(())
    }
}

/// Generator input for a single video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedFrame {
    #[serde(rename = "z")]
    pub z_mix: Vec<f64>,
    pub class_weights: ClassWeights,
}

/// One planned frame per spectrogram slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FramePlan {
    pub frames: Vec<PlannedFrame>,
}

impl FramePlan {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn sample_coordinate(rng: &mut ChaCha8Rng, truncation: Option<f64>) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        match truncation {
            Some(limit) if v.abs() > limit => continue,
            _ => return v,
        }
    }
}

/// Draws one keyframe per inflection slice from a ChaCha8 stream seeded with
/// `seed`. For each keyframe in order, `d` standard-normal coordinates are
/// drawn, then a uniform category unless `categories[i]` pins one.
pub fn sample_keyframes(
    inflections: &InflectionSet,
    spec: &GeneratorSpec,
    categories: &[Option<u32>],
    seed: u64,
) -> Result<Vec<LatentKeyframe>, PlanError> {
    spec.validate()?;
    let count = inflections.len();
    for (i, pinned) in categories.iter().enumerate() {
        if let Some(category) = *pinned {
            if i >= count {
                return Err(PlanError::PinOutOfRange { index: i, count });
            }
            if category >= spec.num_classes {
                return Err(PlanError::InvalidCategory {
                    keyframe: i,
                    category,
                    num_classes: spec.num_classes,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keyframes = inflections
        .indices()
        .iter()
        .enumerate()
        .map(|(i, &slice_index)| {
            let z = (0..spec.latent_dim)
                .map(|_| sample_coordinate(&mut rng, spec.truncation))
                .collect();
            let category = match categories.get(i).copied().flatten() {
                Some(c) => c,
                None => rng.random_range(0..spec.num_classes),
            };
            LatentKeyframe {
                slice_index,
                z,
                category,
            }
        })
        .collect();
    Ok(keyframes)
}

fn lerp(from: f64, to: f64, alpha: f64) -> f64 {
    let v = (1.0 - alpha) * from + alpha * to;
    v.clamp(from.min(to), from.max(to))
}

fn interpolate(from: &LatentKeyframe, to: &LatentKeyframe, alpha: f64) -> PlannedFrame {
    let z_mix = if alpha <= 0.0 {
        from.z.clone()
    } else if alpha >= 1.0 {
        to.z.clone()
    } else {
        from.z
            .iter()
            .zip(&to.z)
            .map(|(&a, &b)| lerp(a, b, alpha))
            .collect()
    };
    PlannedFrame {
        z_mix,
        class_weights: ClassWeights::mix(from.category, to.category, alpha),
    }
}

/// Frame 0 is keyframe 0; each slice `t` in `(p[i-1], p[i]]` mixes keyframes
/// `i-1` and `i` by `alpha[t]`.
pub fn build_frame_plan(
    keyframes: &[LatentKeyframe],
    alphas: &AlphaTrack,
) -> Result<FramePlan, PlanError> {
    let bounds = alphas.segment_bounds().indices();
    if keyframes.len() != bounds.len() {
        return Err(PlanError::MisalignedInputs(format!(
            "{} keyframes for {} inflection points",
            keyframes.len(),
            bounds.len()
        )));
    }
    if let Some((i, k)) = keyframes
        .iter()
        .enumerate()
        .find(|(i, k)| k.slice_index != bounds[*i])
    {
        return Err(PlanError::MisalignedInputs(format!(
            "keyframe {i} is at slice {} but inflection {i} is slice {}",
            k.slice_index, bounds[i]
        )));
    }
    let dim = keyframes[0].z.len();
    if let Some(i) = keyframes.iter().position(|k| k.z.len() != dim) {
        return Err(PlanError::MisalignedInputs(format!(
            "keyframe {i} has latent length {} (expected {dim})",
            keyframes[i].z.len()
        )));
    }

    let track = alphas.alphas();
    let mut frames = Vec::with_capacity(track.len());
    frames.push(PlannedFrame {
        z_mix: keyframes[0].z.clone(),
        class_weights: ClassWeights::single(keyframes[0].category),
    });
    for (i, pair) in keyframes.windows(2).enumerate() {
        let (start, end) = (bounds[i], bounds[i + 1]);
        for &alpha in &track[start + 1..=end] {
            frames.push(interpolate(&pair[0], &pair[1], alpha));
        }
    }
    Ok(FramePlan { frames })
}
