//! Spectral-change analysis: the TV series, inflection detection, and the
//! per-slice interpolation track.
//!
//! The TV series has one entry per pair of consecutive spectrogram slices,
//! so a spectrogram with `T` slices yields `T - 1` values. Inflection indices
//! and alphas are indexed by slice (`0..T`).

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::Spectrogram;

#[derive(Debug, Error, PartialEq)]
pub enum TvError {
    #[error("invalid TV series: {0}")]
    InvalidSeries(String),
    #[error("invalid detection parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid inflection set: {0}")]
    InvalidInflections(String),
    #[error("inflection set ends at slice {last} but the TV series implies {slices} slices")]
    Mismatch { last: usize, slices: usize },
}

/// Mean absolute change between consecutive spectrogram slices.
#[derive(Debug, Clone, PartialEq)]
pub struct TvSeries {
    values: Vec<f64>,
    normalized: bool,
}

impl TvSeries {
    pub fn new(values: Vec<f64>, normalized: bool) -> Result<Self, TvError> {
        if values.is_empty() {
            return Err(TvError::InvalidSeries("series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(TvError::InvalidSeries(format!(
                "value {i} is negative or not finite"
            )));
        }
        Ok(Self { values, normalized })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of spectrogram slices the series was computed from.
    pub fn num_slices(&self) -> usize {
        self.values.len() + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn compute_tv_series(spec: &Spectrogram, normalize: bool) -> TvSeries {
    let freqs = spec.num_freqs();
    let slices = spec.num_slices();
    let mut values: Vec<f64> = (0..slices - 1)
        .map(|t| {
            let total: f64 = (0..freqs)
                .map(|f| (spec.get(f, t) - spec.get(f, t + 1)).abs())
                .sum();
            total / freqs as f64
        })
        .collect();

    if normalize {
        let max = values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter_mut().for_each(|v| *v /= max);
        }
    }
    TvSeries { values, normalized: normalize }
}

/// Slice indices that bound interpolation segments.
#[derive(Debug, Clone, PartialEq)]
pub struct InflectionSet {
    indices: Vec<usize>,
    rolling_length: usize,
    delta: f64,
}

impl InflectionSet {
    /// Builds a set from explicit indices; the last index fixes `T - 1`.
    pub fn new(indices: Vec<usize>, rolling_length: usize, delta: f64) -> Result<Self, TvError> {
        check_params(rolling_length, delta)?;
        if indices.len() < 2 {
            return Err(TvError::InvalidInflections(
                "need at least the first and last slice".into(),
            ));
        }
        if indices[0] != 0 {
            return Err(TvError::InvalidInflections(format!(
                "first index is {} (expected 0)",
                indices[0]
            )));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(TvError::InvalidInflections(format!(
                "indices not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let last = *indices.last().unwrap();
        let interior = &indices[1..indices.len() - 1];
        if let Some(&bad) = interior
            .iter()
            .find(|&&t| t < rolling_length || t + 1 + rolling_length > last)
        {
            return Err(TvError::InvalidInflections(format!(
                "interior index {bad} outside [{rolling_length}, {}]",
                last as i64 - 1 - rolling_length as i64
            )));
        }
        Ok(Self {
            indices,
            rolling_length,
            delta,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rolling_length(&self) -> usize {
        self.rolling_length
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn last(&self) -> usize {
        *self.indices.last().unwrap()
    }

    pub fn contains(&self, slice: usize) -> bool {
        self.indices.binary_search(&slice).is_ok()
    }

    /// Consecutive `(start, end)` pairs.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.windows(2).map(|w| (w[0], w[1]))
    }
}

fn check_params(rolling_length: usize, delta: f64) -> Result<(), TvError> {
    if rolling_length == 0 {
        return Err(TvError::InvalidParameters("rolling length must be at least 1".into()));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(TvError::InvalidParameters(format!(
            "delta must be a non-negative number, got {delta}"
        )));
    }
    Ok(())
}

/// Marks slice `t` when `tv[t]` sits above (or below) both the mean of the
/// `L` values before it and the mean of the `L` values after it, by more
/// than `delta` on each side. Ties with a window mean never qualify.
///
/// Candidates range over `[L, T-2-L]` so both windows stay inside the
/// series. Slice 0 and slice `T-1` are always included.
pub fn detect_inflection_points(
    tv: &TvSeries,
    rolling_length: usize,
    delta: f64,
) -> Result<InflectionSet, TvError> {
    check_params(rolling_length, delta)?;
    let values = tv.values();
    let n = values.len();
    let l = rolling_length;
    let mut indices = vec![0];

    if n > 2 * l {
        let window_mean = |range: std::ops::Range<usize>| -> f64 {
            values[range].iter().sum::<f64>() / l as f64
        };
        for t in l..=n - 1 - l {
            let prev = window_mean(t - l..t);
            let next = window_mean(t + 1..t + 1 + l);
            let up = values[t] - prev;
            let down = values[t] - next;
            let same_side = (up > 0.0 && down > 0.0) || (up < 0.0 && down < 0.0);
            if same_side && up.abs() > delta && down.abs() > delta {
                indices.push(t);
            }
        }
    }
    indices.push(n);

    Ok(InflectionSet {
        indices,
        rolling_length,
        delta,
    })
}

/// How cumulative TV is scaled inside a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// Divide by the segment's total TV so every segment ends at exactly 1.
    #[default]
    SegmentTotal,
    /// Divide by the segment length in slices, clamped to `[0, 1]`.
    /// Segment ends do not generally reach 1.
    SegmentLength,
}

/// Alphas are snapped to multiples of `2^-ALPHA_GRID_BITS`.
///
/// A ratio of two floating sums shifts in its last bit when every input is
/// multiplied by a common factor; snapping to a coarser grid keeps the track
/// identical under rescaling of the TV series.
pub const ALPHA_GRID_BITS: i32 = 24;

fn snap(alpha: f64) -> f64 {
    let scale = f64::from(1u32 << ALPHA_GRID_BITS);
    ((alpha * scale).round() / scale).clamp(0.0, 1.0)
}

/// Per-slice interpolation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTrack {
    alphas: Vec<f64>,
    segment_bounds: InflectionSet,
    mode: AlphaMode,
}

impl AlphaTrack {
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn segment_bounds(&self) -> &InflectionSet {
        &self.segment_bounds
    }

    pub fn mode(&self) -> AlphaMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Cumulative TV within each segment `(p, q]`, normalized so that
/// `alpha[q] == 1`. Segments with zero total TV ramp linearly.
pub fn compute_alpha_track(
    tv: &TvSeries,
    inflections: &InflectionSet,
) -> Result<AlphaTrack, TvError> {
    compute_alpha_track_with(tv, inflections, AlphaMode::SegmentTotal)
}

pub fn compute_alpha_track_with(
    tv: &TvSeries,
    inflections: &InflectionSet,
    mode: AlphaMode,
) -> Result<AlphaTrack, TvError> {
    let values = tv.values();
    let slices = tv.num_slices();
    if inflections.last() != slices - 1 {
        return Err(TvError::Mismatch {
            last: inflections.last(),
            slices,
        });
    }

    let mut alphas = vec![0.0; slices];
    for (p, q) in inflections.segments() {
        let segment = &values[p..q];
        let width = (q - p) as f64;
        let total: f64 = segment.iter().sum();
        let mut running = 0.0;
        for (offset, v) in segment.iter().enumerate() {
            running += v;
            let t = p + offset + 1;
            let raw = match mode {
                AlphaMode::SegmentTotal if total > 0.0 => running / total,
                AlphaMode::SegmentTotal => (offset + 1) as f64 / width,
                AlphaMode::SegmentLength => running / width,
            };
            alphas[t] = snap(raw);
        }
    }

    Ok(AlphaTrack {
        alphas,
        segment_bounds: inflections.clone(),
        mode,
    })
}

/// Writes the tab-separated analysis table: one row per slice with the TV
/// value leaving that slice (`-` for the final slice), the inflection flag,
/// and the alpha.
pub fn write_analysis_table<W: Write>(
    mut out: W,
    tv: &TvSeries,
    track: &AlphaTrack,
) -> std::io::Result<()> {
    writeln!(out, "# index\ttv\tis_inflection\talpha")?;
    let bounds = track.segment_bounds();
    for (t, alpha) in track.alphas().iter().enumerate() {
        let tv_cell = tv
            .values()
            .get(t)
            .map_or_else(|| "-".to_string(), |v| v.to_string());
        let flag = u8::from(bounds.contains(t));
        writeln!(out, "{t}\t{tv_cell}\t{flag}\t{alpha}")?;
    }
    Ok(())
}
