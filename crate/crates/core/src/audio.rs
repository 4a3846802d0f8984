//! WAV decoding and magnitude spectrograms.
//!
//! Spectrogram slices are spaced `round(sample_rate / fps)` samples apart so
//! that slice `t` and video frame `t` refer to the same instant.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no sample frames")]
    EmptyAudio,
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
    #[error("audio too short: {0}")]
    AudioTooShort(String),
    #[error("invalid spectrogram parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid spectrogram: {0}")]
    InvalidSpectrogram(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Decoded mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidBuffer("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidBuffer(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Reads a RIFF/WAVE file (PCM16 or float32, mono or stereo) into a mono buffer.
///
/// Stereo frames are averaged; 16-bit samples are divided by 32768.
pub fn decode_audio(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::FileNotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) if source.kind() == std::io::ErrorKind::NotFound => {
            AudioError::FileNotFound(path.to_path_buf())
        }
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => AudioError::UnsupportedFormat(other.to_string()),
    })?;

    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedFormat(format!(
            "{channels} channels (expected 1 or 2)"
        )));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (format, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {format:?} samples (expected 16-bit PCM or 32-bit float)"
            )))
        }
    }
    .map_err(|e| AudioError::UnsupportedFormat(e.to_string()))?;

    if interleaved.len() < channels {
        return Err(AudioError::EmptyAudio);
    }

    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|frame| (frame[0] + frame[1]) / 2.0)
            .collect()
    };
    AudioBuffer::new(mono, spec.sample_rate)
}

/// One-sided magnitude spectrogram, stored frequency-major (`F` rows of `T` slices).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    mags: Vec<f64>,
    num_freqs: usize,
    num_slices: usize,
    hop_samples: usize,
    window_samples: usize,
    sample_rate: u32,
}

impl Spectrogram {
    /// Wraps a precomputed magnitude array laid out as `mags[f * num_slices + t]`.
    pub fn from_magnitudes(
        mags: Vec<f64>,
        num_slices: usize,
        window_samples: usize,
        hop_samples: usize,
        sample_rate: u32,
    ) -> Result<Self, AudioError> {
        if window_samples == 0 || !window_samples.is_power_of_two() {
            return Err(AudioError::InvalidSpectrogram(format!(
                "window of {window_samples} samples is not a positive power of two"
            )));
        }
        let num_freqs = window_samples / 2 + 1;
        if num_slices < 2 {
            return Err(AudioError::InvalidSpectrogram(format!(
                "{num_slices} slices (need at least 2)"
            )));
        }
        if mags.len() != num_freqs * num_slices {
            return Err(AudioError::InvalidSpectrogram(format!(
                "expected {num_freqs}x{num_slices} magnitudes, got {}",
                mags.len()
            )));
        }
        if let Some(i) = mags.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(AudioError::InvalidSpectrogram(format!(
                "magnitude {i} is negative or not finite"
            )));
        }
        if hop_samples == 0 || sample_rate == 0 {
            return Err(AudioError::InvalidSpectrogram(
                "hop and sample rate must be positive".into(),
            ));
        }
        Ok(Self {
            mags,
            num_freqs,
            num_slices,
            hop_samples,
            window_samples,
            sample_rate,
        })
    }

    pub fn num_freqs(&self) -> usize {
        self.num_freqs
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    pub fn window_samples(&self) -> usize {
        self.window_samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    pub fn get(&self, freq: usize, slice: usize) -> f64 {
        self.mags[freq * self.num_slices + slice]
    }

    /// Row-major (frequency-major) magnitudes.
    pub fn magnitudes(&self) -> &[f64] {
        &self.mags
    }

    pub fn column(&self, slice: usize) -> Vec<f64> {
        (0..self.num_freqs).map(|f| self.get(f, slice)).collect()
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn hop_for_fps(sample_rate: u32, fps: f64) -> usize {
    (f64::from(sample_rate) / fps).round() as usize
}

pub fn compute_spectrogram(
    audio: &AudioBuffer,
    fps: f64,
    window_samples: usize,
) -> Result<Spectrogram, AudioError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(AudioError::InvalidParameters(format!(
            "fps must be positive, got {fps}"
        )));
    }
    if window_samples == 0 || !window_samples.is_power_of_two() {
        return Err(AudioError::InvalidParameters(format!(
            "window of {window_samples} samples is not a positive power of two"
        )));
    }
    let hop = hop_for_fps(audio.sample_rate, fps);
    if hop == 0 {
        return Err(AudioError::InvalidParameters(format!(
            "fps {fps} exceeds the sample rate {}",
            audio.sample_rate
        )));
    }
    let samples = audio.samples();
    if samples.len() < window_samples {
        return Err(AudioError::AudioTooShort(format!(
            "{} samples is shorter than the {window_samples}-sample window",
            samples.len()
        )));
    }
    let num_slices = (samples.len() - window_samples) / hop + 1;
    if num_slices < 2 {
        return Err(AudioError::AudioTooShort(format!(
            "only {num_slices} spectrogram slice fits in {} samples",
            samples.len()
        )));
    }

    let num_freqs = window_samples / 2 + 1;
    let window = hann_window(window_samples);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_samples);
    let mut buffer = vec![Complex::new(0.0, 0.0); window_samples];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut mags = vec![0.0; num_freqs * num_slices];

    for t in 0..num_slices {
        let start = t * hop;
        for ((slot, &s), &w) in buffer
            .iter_mut()
            .zip(&samples[start..start + window_samples])
            .zip(&window)
        {
            *slot = Complex::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buffer, &mut scratch);
        for (f, bin) in buffer.iter().take(num_freqs).enumerate() {
            mags[f * num_slices + t] = bin.norm();
        }
    }

    Spectrogram::from_magnitudes(mags, num_slices, window_samples, hop, audio.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_wav(path: &Path, spec: hound::WavSpec, write: impl FnOnce(&mut hound::WavWriter<std::io::BufWriter<std::fs::File>>)) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        write(&mut w);
        w.finalize().unwrap();
    }

    fn pcm16(channels: u16) -> hound::WavSpec {
        hound::WavSpec {
            channels,
            sample_rate: 22050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        }
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mono.wav");
        write_wav(&path, pcm16(1), |w| {
            for s in [0i16, 16384, -32768] {
                w.write_sample(s).unwrap();
            }
        });
        let audio = decode_audio(&path).unwrap();
        assert_eq!(audio.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(audio.sample_rate(), 22050);
    }

    #[test]
    fn stereo_float_mixdown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        write_wav(&path, spec, |w| {
            w.write_sample(0.2f32).unwrap();
            w.write_sample(0.4f32).unwrap();
        });
        let audio = decode_audio(&path).unwrap();
        assert_eq!(audio.samples().len(), 1);
        assert!((audio.samples()[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn empty_wav_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav(&path, pcm16(1), |_| {});
        assert!(matches!(decode_audio(&path), Err(AudioError::EmptyAudio)));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            decode_audio("/nonexistent/definitely/not/here.wav"),
            Err(AudioError::FileNotFound(_))
        ));
    }

    #[test]
    fn unsupported_bit_depth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm24.wav");
        let spec = hound::WavSpec {
            bits_per_sample: 24,
            ..pcm16(1)
        };
        write_wav(&path, spec, |w| w.write_sample(5i32).unwrap());
        assert!(matches!(
            decode_audio(&path),
            Err(AudioError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn garbage_file_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.wav");
        std::fs::write(&path, b"definitely not a riff file").unwrap();
        assert!(matches!(
            decode_audio(&path),
            Err(AudioError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn slice_count_for_one_second() {
        let audio = AudioBuffer::new(vec![0.0; 22050], 22050).unwrap();
        let spec = compute_spectrogram(&audio, 30.0, 2048).unwrap();
        assert_eq!(spec.hop_samples(), 735);
        assert_eq!(spec.num_slices(), 28);
        assert_eq!(spec.num_freqs(), 1025);
        assert!(spec.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn dc_energy_lands_in_bin_zero() {
        let n = 1024;
        let audio = AudioBuffer::new(vec![0.5; 4 * n], 8000).unwrap();
        let spec = compute_spectrogram(&audio, 10.0, n).unwrap();
        for t in 0..spec.num_slices() {
            // Periodic Hann sums to n/2 and its first harmonic to n/4.
            assert!((spec.get(0, t) - 0.5 * n as f64 / 2.0).abs() < 1e-9);
            assert!((spec.get(1, t) - 0.5 * n as f64 / 4.0).abs() < 1e-9);
            for f in 2..spec.num_freqs() {
                assert!(spec.get(f, t) < 1e-9, "bin {f} = {}", spec.get(f, t));
            }
        }
    }

    #[test]
    fn too_short_inputs() {
        let audio = AudioBuffer::new(vec![0.1; 100], 8000).unwrap();
        assert!(matches!(
            compute_spectrogram(&audio, 30.0, 128),
            Err(AudioError::AudioTooShort(_))
        ));
        // exactly one slice fits
        let audio = AudioBuffer::new(vec![0.1; 130], 8000).unwrap();
        assert!(matches!(
            compute_spectrogram(&audio, 30.0, 128),
            Err(AudioError::AudioTooShort(_))
        ));
    }

    #[test]
    fn bad_parameters() {
        let audio = AudioBuffer::new(vec![0.1; 10_000], 8000).unwrap();
        assert!(compute_spectrogram(&audio, 0.0, 256).is_err());
        assert!(compute_spectrogram(&audio, f64::NAN, 256).is_err());
        assert!(compute_spectrogram(&audio, 30.0, 300).is_err());
        assert!(compute_spectrogram(&audio, 30.0, 0).is_err());
        assert!(compute_spectrogram(&audio, 1e6, 256).is_err());
    }

    #[test]
    fn buffer_invariants() {
        assert!(matches!(AudioBuffer::new(vec![], 8000), Err(AudioError::EmptyAudio)));
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
        assert!(AudioBuffer::new(vec![0.0, f64::INFINITY], 8000).is_err());
    }

    #[test]
    fn spectrogram_shape_checks() {
        assert!(Spectrogram::from_magnitudes(vec![0.0; 6], 2, 4, 1, 1).is_ok());
        assert!(Spectrogram::from_magnitudes(vec![0.0; 3], 1, 4, 1, 1).is_err());
        assert!(Spectrogram::from_magnitudes(vec![0.0; 5], 2, 4, 1, 1).is_err());
        assert!(Spectrogram::from_magnitudes(vec![-1.0; 6], 2, 4, 1, 1).is_err());
        assert!(Spectrogram::from_magnitudes(vec![0.0; 8], 2, 6, 1, 1).is_err());
    }
}
