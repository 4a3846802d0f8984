//! End-to-end orchestration: audio → analysis → plan → trajectory → frames
//! (→ optional video mux).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;

use log::{info, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{compute_spectrogram, decode_audio, AudioError};
use crate::backend::{render_all, BackendError, ExternalGenerator, MockGenerator};
use crate::planner::{build_frame_plan, sample_keyframes, GeneratorSpec, PlanError};
use crate::trajectory::{read_trajectory, write_trajectory, Trajectory, TrajectoryError, TrajectoryMetadata};
use crate::tv::{
    compute_alpha_track_with, compute_tv_series, detect_inflection_points, write_analysis_table,
    AlphaMode, AlphaTrack, InflectionSet, TvError, TvSeries,
};

pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const FRAMES_DIR: &str = "frames";
pub const VIDEO_FILE: &str = "video.mp4";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Decode,
    Spectrogram,
    Analysis,
    Categories,
    Planning,
    Trajectory,
    Render,
    Encode,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Decode => "decode",
            Stage::Spectrogram => "spectrogram",
            Stage::Analysis => "analysis",
            Stage::Categories => "categories",
            Stage::Planning => "planning",
            Stage::Trajectory => "trajectory",
            Stage::Render => "render",
            Stage::Encode => "encode",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum CategoryError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: category {category} outside [0, {num_classes})")]
    InvalidCategory {
        path: PathBuf,
        line: usize,
        category: u32,
        num_classes: u32,
    },
    #[error("category pinned at keyframe {index} but only {count} keyframes exist")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ErrorKind {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Analysis(#[from] TvError),
    #[error(transparent)]
    Categories(#[from] CategoryError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("encoder failed: {0}")]
    EncoderFailed(String),
}

/// A stage failure.
#[derive(Debug, Error)]
#[error("{stage} stage failed: {kind}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub kind: ErrorKind,
}

impl PipelineError {
    fn new(stage: Stage, kind: impl Into<ErrorKind>) -> Self {
        Self {
            stage,
            kind: kind.into(),
        }
    }

    fn io(stage: Stage, path: &Path, source: std::io::Error) -> Self {
        Self::new(
            stage,
            ErrorKind::Io {
                path: path.to_path_buf(),
                source,
            },
        )
    }

    /// Process exit code for this error class.
    ///
    /// | code | class |
    /// |------|-------|
    /// | 2 | invalid configuration or usage |
    /// | 3 | audio decoding / spectrogram |
    /// | 4 | TV analysis |
    /// | 5 | categories file |
    /// | 6 | latent planning |
    /// | 7 | trajectory file |
    /// | 8 | generator backend |
    /// | 9 | filesystem i/o |
    /// | 10 | video encoder |
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config(_) => 2,
            ErrorKind::Audio(_) => 3,
            ErrorKind::Analysis(_) => 4,
            ErrorKind::Categories(_) => 5,
            ErrorKind::Plan(_) => 6,
            ErrorKind::Trajectory(_) => 7,
            ErrorKind::Backend(_) => 8,
            ErrorKind::Io { .. } => 9,
            ErrorKind::EncoderFailed(_) => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSelector {
    Mock,
    External(PathBuf),
}

impl FromStr for BackendSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            _ => match s.strip_prefix("external:") {
                Some(path) if !path.is_empty() => Ok(Self::External(PathBuf::from(path))),
                _ => Err(format!("unknown backend `{s}` (expected `mock` or `external:PATH`)")),
            },
        }
    }
}

impl fmt::Display for BackendSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mock => f.write_str("mock"),
            Self::External(path) => write!(f, "external:{}", path.display()),
        }
    }
}

/// External encoder invocation. Arguments may contain the placeholders
/// `{fps}`, `{frames}`, `{audio}` and `{output}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub program: String,
    pub args: Vec<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::from_template(
            "ffmpeg -y -loglevel error -framerate {fps} -i {frames}/frame_%06d.png -i {audio} \
             -c:v libx264 -pix_fmt yuv420p -c:a aac -shortest {output}",
        )
        .expect("default template is non-empty")
    }
}

impl EncoderConfig {
    /// Splits a whitespace-separated command template.
    pub fn from_template(template: &str) -> Option<Self> {
        let mut parts = template.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(Self {
            program,
            args: parts.collect(),
        })
    }

    pub fn command_args(&self, fps: f64, frames: &Path, audio: &Path, output: &Path) -> Vec<String> {
        self.args
            .iter()
            .map(|arg| {
                arg.replace("{fps}", &fps.to_string())
                    .replace("{frames}", &frames.to_string_lossy())
                    .replace("{audio}", &audio.to_string_lossy())
                    .replace("{output}", &output.to_string_lossy())
            })
            .collect()
    }

    pub fn run(&self, fps: f64, frames: &Path, audio: &Path, output: &Path) -> Result<(), ErrorKind> {
        let result = Command::new(&self.program)
            .args(self.command_args(fps, frames, audio, output))
            .stdin(Stdio::null())
            .output()
            .map_err(|e| ErrorKind::EncoderFailed(format!("failed to start {}: {e}", self.program)))?;
        if !result.status.success() {
            return Err(ErrorKind::EncoderFailed(format!(
                "{} exited with {}: {}",
                self.program,
                result.status,
                String::from_utf8_lossy(&result.stderr).trim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub audio_path: PathBuf,
    pub out_dir: PathBuf,
    pub fps: f64,
    pub window_samples: usize,
    pub rolling_length: usize,
    pub delta: f64,
    pub normalize_tv: bool,
    pub seed: u64,
    pub categories_path: Option<PathBuf>,
    pub backend: BackendSelector,
    /// Latent size, class count, image size and truncation of the generator.
    pub generator: GeneratorSpec,
    pub encode: bool,
    pub encoder: EncoderConfig,
    pub legacy_alpha_division: bool,
    pub dump_analysis: Option<PathBuf>,
    pub parallelism: usize,
}

impl RunConfig {
    pub fn new(audio_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            audio_path: audio_path.into(),
            out_dir: out_dir.into(),
            fps: 30.0,
            window_samples: 2048,
            rolling_length: 30,
            delta: 0.1,
            normalize_tv: true,
            seed: 0,
            categories_path: None,
            backend: BackendSelector::Mock,
            generator: GeneratorSpec::default(),
            encode: false,
            encoder: EncoderConfig::default(),
            legacy_alpha_division: false,
            dump_analysis: None,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }

    pub fn alpha_mode(&self) -> AlphaMode {
        if self.legacy_alpha_division {
            AlphaMode::SegmentLength
        } else {
            AlphaMode::SegmentTotal
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::new(Stage::Config, ErrorKind::Config(msg)));
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        if self.window_samples == 0 || !self.window_samples.is_power_of_two() {
            return fail(format!("window {} is not a positive power of two", self.window_samples));
        }
        if self.rolling_length == 0 {
            return fail("rolling length must be at least 1".into());
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return fail(format!("delta must be non-negative, got {}", self.delta));
        }
        if self.parallelism == 0 {
            return fail("parallelism must be at least 1".into());
        }
        if let Err(e) = self.generator.validate() {
            return fail(e.to_string());
        }
        Ok(())
    }
}

/// Output of the analysis stages.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub num_freqs: usize,
    pub num_slices: usize,
    pub hop_samples: usize,
    pub tv: TvSeries,
    pub inflections: InflectionSet,
    pub alphas: AlphaTrack,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub num_slices: usize,
    pub num_inflections: usize,
    pub frames_written: usize,
    pub trajectory_path: PathBuf,
    pub frames_dir: PathBuf,
    pub video_path: Option<PathBuf>,
}

/// Parses a categories file: one `<keyframe_index> <category_id>` pair per
/// line, `#` starts a comment. Keyframes that are not listed stay `None`.
///
/// With `num_keyframes == None` (count not yet known) indices are not
/// range-checked here; use [`check_pins`] once detection has run.
pub fn load_categories(
    path: &Path,
    num_keyframes: Option<usize>,
    num_classes: u32,
) -> Result<Vec<Option<u32>>, CategoryError> {
    let text = fs::read_to_string(path).map_err(|source| CategoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pins: Vec<Option<u32>> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |message: String| CategoryError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [index, category] = fields[..] else {
            return Err(parse_err(format!(
                "expected `<keyframe_index> <category_id>`, got `{content}`"
            )));
        };
        let index: usize = index
            .parse()
            .map_err(|_| parse_err(format!("bad keyframe index `{index}`")))?;
        let category: u32 = category
            .parse()
            .map_err(|_| parse_err(format!("bad category id `{category}`")))?;
        if category >= num_classes {
            return Err(CategoryError::InvalidCategory {
                path: path.to_path_buf(),
                line,
                category,
                num_classes,
            });
        }
        if let Some(count) = num_keyframes {
            if index >= count {
                return Err(CategoryError::IndexOutOfRange { index, count });
            }
        }
        if pins.len() <= index {
            pins.resize(index + 1, None);
        }
        if pins[index].replace(category).is_some() {
            return Err(parse_err(format!("keyframe {index} is pinned more than once")));
        }
    }
    Ok(pins)
}

/// Fails on any pin at or beyond `num_keyframes`.
pub fn check_pins(pins: &[Option<u32>], num_keyframes: usize) -> Result<(), CategoryError> {
    match pins.iter().enumerate().skip(num_keyframes).find(|(_, p)| p.is_some()) {
        Some((index, _)) => Err(CategoryError::IndexOutOfRange {
            index,
            count: num_keyframes,
        }),
        None => Ok(()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Decode, spectrogram, TV series, inflections and alphas.
pub fn analyze(config: &RunConfig) -> Result<Analysis, PipelineError> {
    config.validate()?;
    let audio = decode_audio(&config.audio_path).map_err(|e| PipelineError::new(Stage::Decode, e))?;
    let spec = compute_spectrogram(&audio, config.fps, config.window_samples)
        .map_err(|e| PipelineError::new(Stage::Spectrogram, e))?;
    let tv = compute_tv_series(&spec, config.normalize_tv);
    let inflections = detect_inflection_points(&tv, config.rolling_length, config.delta)
        .map_err(|e| PipelineError::new(Stage::Analysis, e))?;
    let alphas = compute_alpha_track_with(&tv, &inflections, config.alpha_mode())
        .map_err(|e| PipelineError::new(Stage::Analysis, e))?;
    info!(
        "{} slices (hop {}), {} inflection points",
        spec.num_slices(),
        spec.hop_samples(),
        inflections.len()
    );
    Ok(Analysis {
        num_freqs: spec.num_freqs(),
        num_slices: spec.num_slices(),
        hop_samples: spec.hop_samples(),
        tv,
        inflections,
        alphas,
    })
}

pub fn write_analysis_dump(analysis: &Analysis, path: &Path) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(|e| PipelineError::io(Stage::Analysis, path, e))?;
    write_analysis_table(std::io::BufWriter::new(file), &analysis.tv, &analysis.alphas)
        .map_err(|e| PipelineError::io(Stage::Analysis, path, e))
}

fn clear_stale_frames(dir: &Path) -> Result<(), PipelineError> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(());
    };
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("frame_") && name.ends_with(".png") {
            fs::remove_file(entry.path()).map_err(|e| PipelineError::io(Stage::Render, &entry.path(), e))?;
        }
    }
    Ok(())
}

/// Renders a trajectory (already on disk at `trajectory_path`) into `frames_dir`.
pub fn render_trajectory(
    traj: &Trajectory,
    trajectory_path: &Path,
    frames_dir: &Path,
    backend: &BackendSelector,
    parallelism: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    let render_err = |e: BackendError| PipelineError::new(Stage::Render, e);
    clear_stale_frames(frames_dir)?;
    match backend {
        BackendSelector::Mock => {
            let generator = MockGenerator::new(traj.spec.clone()).map_err(render_err)?;
            render_all(&generator, &traj.plan, frames_dir, parallelism).map_err(render_err)
        }
        BackendSelector::External(program) => {
            let generator =
                ExternalGenerator::new(program, traj.spec.clone(), traj.fps).map_err(render_err)?;
            generator
                .render_trajectory(trajectory_path, frames_dir, traj.num_frames())
                .map_err(render_err)
        }
    }
}

/// Runs every stage and writes `trajectory.json`, `frames/` and optionally
/// `video.mp4` under the output directory.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;

    // Parse pins before the (slow) analysis so file errors surface early.
    let pins = match &config.categories_path {
        Some(path) => load_categories(path, None, config.generator.num_classes)
            .map_err(|e| PipelineError::new(Stage::Categories, e))?,
        None => Vec::new(),
    };

    let analysis = analyze(config)?;
    let audio_bytes =
        fs::read(&config.audio_path).map_err(|e| PipelineError::io(Stage::Decode, &config.audio_path, e))?;

    fs::create_dir_all(&config.out_dir).map_err(|e| PipelineError::io(Stage::Trajectory, &config.out_dir, e))?;
    if let Some(path) = &config.dump_analysis {
        write_analysis_dump(&analysis, path)?;
    }

    check_pins(&pins, analysis.inflections.len()).map_err(|e| {
        warn!("categories file pins more keyframes than were detected");
        PipelineError::new(Stage::Categories, e)
    })?;
    let keyframes = sample_keyframes(&analysis.inflections, &config.generator, &pins, config.seed)
        .map_err(|e| PipelineError::new(Stage::Planning, e))?;
    let plan = build_frame_plan(&keyframes, &analysis.alphas).map_err(|e| PipelineError::new(Stage::Planning, e))?;

    let traj = Trajectory {
        spec: config.generator.clone(),
        fps: config.fps,
        keyframes,
        plan,
        metadata: TrajectoryMetadata {
            seed: config.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            audio_sha256: sha256_hex(&audio_bytes),
        },
        alpha_mode: config.alpha_mode(),
    };
    let trajectory_path = config.out_dir.join(TRAJECTORY_FILE);
    write_trajectory(&traj, &trajectory_path).map_err(|e| PipelineError::new(Stage::Trajectory, e))?;

    let frames_dir = config.out_dir.join(FRAMES_DIR);
    let frames = render_trajectory(&traj, &trajectory_path, &frames_dir, &config.backend, config.parallelism)?;
    info!("wrote {} frames to {}", frames.len(), frames_dir.display());

    let video_path = if config.encode {
        let output = config.out_dir.join(VIDEO_FILE);
        config
            .encoder
            .run(config.fps, &frames_dir, &config.audio_path, &output)
            .map_err(|kind| PipelineError::new(Stage::Encode, kind))?;
        Some(output)
    } else {
        None
    };

    Ok(RunReport {
        num_slices: analysis.num_slices,
        num_inflections: analysis.inflections.len(),
        frames_written: frames.len(),
        trajectory_path,
        frames_dir,
        video_path,
    })
}

/// Reads a trajectory file and renders it without re-running analysis.
pub fn render_existing(
    trajectory_path: &Path,
    out_dir: &Path,
    backend: &BackendSelector,
    parallelism: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    if parallelism == 0 {
        return Err(PipelineError::new(
            Stage::Config,
            ErrorKind::Config("parallelism must be at least 1".into()),
        ));
    }
    let traj = read_trajectory(trajectory_path).map_err(|e| PipelineError::new(Stage::Trajectory, e))?;
    render_trajectory(&traj, trajectory_path, out_dir, backend, parallelism)
}
