use std::f64::consts::TAU;

use rustfft::num_complex::Complex;

use super::{BackendError, Concurrency, FrameImage, Generator};
use crate::planner::{ClassWeights, GeneratorSpec};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const SILVER: f64 = 0.414_213_562_373_095_1;
/// Spatial frequencies per axis are drawn from `0..BASIS_FREQS`.
const BASIS_FREQS: usize = 4;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Procedural stand-in for a GAN generator.
///
/// Channel `k` of pixel `(x, y)` in a `W x H` image is
///
/// ```text
/// 0.5 + 0.5 * sin( sum_j z[j] * phi(j, k, x, y) + sum_c w[c] * psi(c) + 2*pi*k/3 )
/// phi(j, k, x, y) = cos(2*pi*(fx(j,k) * x/W + fy(j,k) * y/H) + theta(j,k)) / sqrt(d)
/// fx(j, k) = (j + k) mod 4
/// fy(j, k) = (j / 4 + 2k) mod 4
/// theta(j, k) = 2*pi * frac((1 + j + 7k) * 0.6180339887498949)
/// psi(c) = 2*pi * frac((c + 1) * 0.41421356237309515)
/// ```
///
/// quantized as `round(255 * value)`. Latents enter only through four
/// spatial frequencies per axis, so nearby latents give nearby images.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    spec: GeneratorSpec,
}

impl MockGenerator {
    pub fn new(spec: GeneratorSpec) -> Result<Self, BackendError> {
        spec.validate()
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        Ok(Self { spec })
    }

    pub fn basis_frequencies(j: usize, channel: usize) -> (usize, usize) {
        ((j + channel) % BASIS_FREQS, (j / BASIS_FREQS + 2 * channel) % BASIS_FREQS)
    }

    pub fn basis_phase(j: usize, channel: usize) -> f64 {
        TAU * frac((1 + j + 7 * channel) as f64 * GOLDEN)
    }

    pub fn class_phase(category: u32) -> f64 {
        TAU * frac((f64::from(category) + 1.0) * SILVER)
    }
}

impl Generator for MockGenerator {
    fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::ConcurrentSafe
    }

    fn render(&self, z_mix: &[f64], class_weights: &ClassWeights) -> Result<FrameImage, BackendError> {
        let (width, height) = self.spec.image_size;
        let (w, h) = (width as usize, height as usize);
        let norm = (self.spec.latent_dim as f64).sqrt();
        let class_term: f64 = class_weights
            .iter()
            .map(|(c, weight)| weight * Self::class_phase(c))
            .sum();

        // Group latent coordinates by spatial frequency: per channel the
        // latent sum collapses to BASIS_FREQS^2 complex coefficients.
        let mut coeffs = [[[Complex::new(0.0, 0.0); BASIS_FREQS]; BASIS_FREQS]; 3];
        for (j, &z) in z_mix.iter().enumerate() {
            for (k, channel) in coeffs.iter_mut().enumerate() {
                let (fx, fy) = Self::basis_frequencies(j, k);
                channel[fx][fy] += Complex::from_polar(z / norm, Self::basis_phase(j, k));
            }
        }

        let waves = |n: usize| -> Vec<[Complex<f64>; BASIS_FREQS]> {
            (0..n)
                .map(|p| {
                    std::array::from_fn(|f| Complex::from_polar(1.0, TAU * f as f64 * p as f64 / n as f64))
                })
                .collect()
        };
        let x_waves = waves(w);
        let y_waves = waves(h);

        let mut pixels = Vec::with_capacity(w * h * 3);
        for yw in &y_waves {
            // Fold the vertical waves in once per row.
            let row_coeffs: [[Complex<f64>; BASIS_FREQS]; 3] = std::array::from_fn(|k| {
                std::array::from_fn(|fx| {
                    coeffs[k][fx]
                        .iter()
                        .zip(yw)
                        .fold(Complex::new(0.0, 0.0), |acc, (c, y)| acc + c * y)
                })
            });
            for xw in &x_waves {
                for (k, channel) in row_coeffs.iter().enumerate() {
                    let latent = channel
                        .iter()
                        .zip(xw)
                        .fold(Complex::new(0.0, 0.0), |acc, (c, x)| acc + c * x);
                    let phase = latent.re + class_term + TAU * k as f64 / 3.0;
                    let value = 0.5 + 0.5 * phase.sin();
                    pixels.push((value * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        FrameImage::new(width, height, pixels)
    }
}
