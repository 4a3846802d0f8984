#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn write_pcm16(path: &Path, sample_rate: u32, samples: &[f64]) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).unwrap();
    }
    w.finalize().unwrap();
}

/// One second of digital silence at 22050 Hz.
pub fn write_silence(path: &Path) {
    write_pcm16(path, 22050, &vec![0.0; 22050]);
}

pub struct BurstFixture {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// First sample of the noise burst.
    pub burst_start: usize,
}

/// A 440 Hz tone, a short white-noise burst, then an 880 Hz tone.
pub fn tone_burst_tone(sample_rate: u32, seconds: f64, burst_at: f64, burst_len: f64) -> BurstFixture {
    let n = (seconds * f64::from(sample_rate)) as usize;
    let burst_start = (burst_at * f64::from(sample_rate)) as usize;
    let burst_end = burst_start + (burst_len * f64::from(sample_rate)) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(sample_rate);
            if i < burst_start {
                0.4 * (TAU * 440.0 * t).sin()
            } else if i < burst_end {
                rng.random_range(-0.9..0.9)
            } else {
                0.4 * (TAU * 880.0 * t).sin()
            }
        })
        .collect();
    BurstFixture {
        samples,
        sample_rate,
        burst_start,
    }
}

pub fn sha256_file(path: &Path) -> String {
    ganterp::pipeline::sha256_hex(&std::fs::read(path).unwrap())
}
