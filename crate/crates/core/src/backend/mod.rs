//! Generator backends and frame rendering.

mod external;
mod mock;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::planner::{ClassWeights, FramePlan, GeneratorSpec};

pub use external::ExternalGenerator;
pub use mock::MockGenerator;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid class weights: {0}")]
    InvalidWeights(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid frame image: {0}")]
    InvalidImage(String),
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png error on {path}: {message}")]
    Png { path: PathBuf, message: String },
    #[error("rendering aborted at frame {frame} after {written} frames were written: {source}")]
    Aborted {
        frame: usize,
        written: usize,
        #[source]
        source: Box<BackendError>,
    },
}

impl BackendError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Row-major RGB8 raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl FrameImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, BackendError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(BackendError::InvalidImage(format!(
                "{width}x{height} image needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn write_png(&self, path: &Path) -> Result<(), BackendError> {
        let file = File::create(path).map_err(|e| BackendError::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| BackendError::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(&self.pixels).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }

    /// Reads an 8-bit RGB or RGBA PNG (alpha is dropped).
    pub fn read_png(path: &Path) -> Result<Self, BackendError> {
        let png_err = |message: String| BackendError::Png {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| BackendError::io(path, e))?;
        let mut reader = png::Decoder::new(std::io::BufReader::new(file))
            .read_info()
            .map_err(|e| png_err(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| png_err("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| png_err(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(png_err(format!("unsupported bit depth {:?}", info.bit_depth)));
        }
        buf.truncate(info.buffer_size());
        let pixels = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|px| [px[0], px[1], px[2]])
                .collect(),
            other => return Err(png_err(format!("unsupported color type {other:?}"))),
        };
        Self::new(info.width, info.height, pixels)
    }
}

/// Whether a backend may render several frames at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    ConcurrentSafe,
    Serialized,
}

/// The image generator `G`.
pub trait Generator: Sync {
    fn spec(&self) -> &GeneratorSpec;

    fn concurrency(&self) -> Concurrency;

    /// Renders one frame. Inputs have already been validated against
    /// [`Generator::spec`]; call [`render_frame`] rather than this directly.
    fn render(&self, z_mix: &[f64], class_weights: &ClassWeights) -> Result<FrameImage, BackendError>;
}

pub fn validate_inputs(
    spec: &GeneratorSpec,
    z_mix: &[f64],
    class_weights: &ClassWeights,
) -> Result<(), BackendError> {
    if z_mix.len() != spec.latent_dim {
        return Err(BackendError::DimensionMismatch(format!(
            "latent has {} entries, backend expects {}",
            z_mix.len(),
            spec.latent_dim
        )));
    }
    if let Some(i) = z_mix.iter().position(|v| !v.is_finite()) {
        return Err(BackendError::DimensionMismatch(format!(
            "latent entry {i} is not finite"
        )));
    }
    class_weights
        .check(spec.num_classes)
        .map_err(BackendError::InvalidWeights)
}

pub fn render_frame<G: Generator + ?Sized>(
    backend: &G,
    z_mix: &[f64],
    class_weights: &ClassWeights,
) -> Result<FrameImage, BackendError> {
    validate_inputs(backend.spec(), z_mix, class_weights)?;
    backend.render(z_mix, class_weights)
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

/// Checks that `dir` exists (creating it if needed) and accepts new files.
pub fn ensure_writable_dir(dir: &Path) -> Result<(), BackendError> {
    std::fs::create_dir_all(dir).map_err(|e| BackendError::io(dir, e))?;
    tempfile::NamedTempFile::new_in(dir)
        .map(drop)
        .map_err(|e| BackendError::io(dir, e))
}

/// Renders every planned frame to `out_dir/frame_%06d.png`.
///
/// Concurrent-safe backends fan out over `parallelism` threads; serialized
/// backends render in index order on the calling thread. The returned paths
/// are ordered by frame index either way.
pub fn render_all<G: Generator + ?Sized>(
    backend: &G,
    plan: &FramePlan,
    out_dir: &Path,
    parallelism: usize,
) -> Result<Vec<PathBuf>, BackendError> {
    if parallelism == 0 {
        return Err(BackendError::InvalidParallelism);
    }
    ensure_writable_dir(out_dir)?;
    for frame in &plan.frames {
        validate_inputs(backend.spec(), &frame.z_mix, &frame.class_weights)?;
    }

    let render_one = |index: usize| -> Result<PathBuf, BackendError> {
        let frame = &plan.frames[index];
        let image = backend.render(&frame.z_mix, &frame.class_weights)?;
        let path = out_dir.join(frame_file_name(index));
        image.write_png(&path)?;
        Ok(path)
    };

    let results: Vec<Result<PathBuf, BackendError>> =
        match (backend.concurrency(), parallelism) {
            (Concurrency::ConcurrentSafe, n) if n > 1 => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
                pool.install(|| (0..plan.len()).into_par_iter().map(render_one).collect())
            }
            _ => {
                let mut out = Vec::with_capacity(plan.len());
                for index in 0..plan.len() {
                    let result = render_one(index);
                    let failed = result.is_err();
                    out.push(result);
                    if failed {
                        break;
                    }
                }
                out
            }
        };

    let written = results.iter().filter(|r| r.is_ok()).count();
    let mut paths = Vec::with_capacity(results.len());
    for (frame, result) in results.into_iter().enumerate() {
        match result {
            Ok(path) => paths.push(path),
            Err(source) => {
                return Err(BackendError::Aborted {
                    frame,
                    written,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(paths)
}
