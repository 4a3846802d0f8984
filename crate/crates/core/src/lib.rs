//! Audio-driven walks through the input space of a class-conditional image
//! generator.
//!
//! The pipeline decodes a recording, measures how much its magnitude
//! spectrum changes from slice to slice, splits the recording at the slices
//! where that change stands out from its neighborhood, and interpolates
//! between random (or user-chosen) latent keyframes so that visual motion
//! follows spectral motion. One video frame is planned per spectrogram slice.

pub mod audio;
pub mod backend;
pub mod pipeline;
pub mod planner;
pub mod trajectory;
pub mod tv;

pub use audio::{compute_spectrogram, decode_audio, AudioBuffer, AudioError, Spectrogram};
pub use backend::{
    render_all, render_frame, BackendError, Concurrency, ExternalGenerator, FrameImage, Generator,
    MockGenerator,
};
pub use pipeline::{
    analyze, load_categories, run_pipeline, Analysis, BackendSelector, PipelineError, RunConfig,
    RunReport,
};
pub use planner::{
    build_frame_plan, sample_keyframes, ClassWeights, FramePlan, GeneratorSpec, LatentKeyframe,
    PlanError, PlannedFrame,
};
pub use trajectory::{read_trajectory, write_trajectory, Trajectory, TrajectoryError, TrajectoryMetadata};
pub use tv::{
    compute_alpha_track, compute_alpha_track_with, compute_tv_series, detect_inflection_points,
    AlphaMode, AlphaTrack, InflectionSet, TvError, TvSeries,
};
