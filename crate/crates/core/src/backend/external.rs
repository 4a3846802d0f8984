use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use super::{ensure_writable_dir, frame_file_name, BackendError, Concurrency, FrameImage, Generator};
use crate::planner::{ClassWeights, FramePlan, GeneratorSpec, LatentKeyframe, PlannedFrame};
use crate::trajectory::{write_trajectory, Trajectory, TrajectoryMetadata};
use crate::tv::AlphaMode;

/// SHA-256 of the empty input; used for trajectories with no source audio.
const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

/// Delegates rendering to a separate program invoked as
/// `<program> <trajectory.json> <out_dir>`, which must exit 0 after writing
/// exactly one `frame_%06d.png` per trajectory frame.
#[derive(Debug)]
pub struct ExternalGenerator {
    program: PathBuf,
    spec: GeneratorSpec,
    fps: f64,
    in_flight: Mutex<()>,
}

impl ExternalGenerator {
    pub fn new(program: impl Into<PathBuf>, spec: GeneratorSpec, fps: f64) -> Result<Self, BackendError> {
        spec.validate()
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            program: program.into(),
            spec,
            fps,
            in_flight: Mutex::new(()),
        })
    }

    pub fn program(&self) -> &Path {
        &self.program
    }

    /// Runs the external renderer over a trajectory file and checks that it
    /// produced frames `0..expected_frames` and nothing else.
    pub fn render_trajectory(
        &self,
        trajectory: &Path,
        out_dir: &Path,
        expected_frames: usize,
    ) -> Result<Vec<PathBuf>, BackendError> {
        ensure_writable_dir(out_dir)?;
        let _guard = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());

        let output = Command::new(&self.program)
            .arg(trajectory)
            .arg(out_dir)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| {
                BackendError::BackendUnavailable(format!(
                    "failed to start {}: {e}",
                    self.program.display()
                ))
            })?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(BackendError::BackendUnavailable(format!(
                "{} exited with {}: {}",
                self.program.display(),
                output.status,
                stderr.trim()
            )));
        }

        let produced: BTreeSet<String> = std::fs::read_dir(out_dir)
            .map_err(|e| BackendError::Io {
                path: out_dir.to_path_buf(),
                source: e,
            })?
            .filter_map(|entry| entry.ok())
            .map(|entry| entry.file_name().to_string_lossy().into_owned())
            .filter(|name| is_frame_file_name(name))
            .collect();
        let expected: BTreeSet<String> = (0..expected_frames).map(frame_file_name).collect();
        if produced != expected {
            return Err(BackendError::BackendUnavailable(format!(
                "{} produced {} frame files, expected frame_000000.png through {}",
                self.program.display(),
                produced.len(),
                frame_file_name(expected_frames.saturating_sub(1))
            )));
        }
        Ok(expected.into_iter().map(|name| out_dir.join(name)).collect())
    }
}

fn is_frame_file_name(name: &str) -> bool {
    name.strip_prefix("frame_")
        .and_then(|rest| rest.strip_suffix(".png"))
        .is_some_and(|digits| digits.len() >= 6 && digits.bytes().all(|b| b.is_ascii_digit()))
}

impl Generator for ExternalGenerator {
    fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serialized
    }

    /// Renders a single frame by wrapping it in a three-frame trajectory whose
    /// outer frames are pure keyframes of the frame's classes, then reading
    /// back the middle frame.
    fn render(&self, z_mix: &[f64], class_weights: &ClassWeights) -> Result<FrameImage, BackendError> {
        let classes: Vec<u32> = class_weights.iter().map(|(c, _)| c).collect();
        let (first, last) = (classes[0], *classes.last().unwrap());
        let keyframe = |slice_index, category| LatentKeyframe {
            slice_index,
            z: z_mix.to_vec(),
            category,
        };
        let pure = |category| PlannedFrame {
            z_mix: z_mix.to_vec(),
            class_weights: ClassWeights::single(category),
        };
        let traj = Trajectory {
            spec: self.spec.clone(),
            fps: self.fps,
            keyframes: vec![keyframe(0, first), keyframe(2, last)],
            plan: FramePlan {
                frames: vec![
                    pure(first),
                    PlannedFrame {
                        z_mix: z_mix.to_vec(),
                        class_weights: class_weights.clone(),
                    },
                    pure(last),
                ],
            },
            metadata: TrajectoryMetadata {
                seed: 0,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                audio_sha256: EMPTY_SHA256.to_string(),
            },
            alpha_mode: AlphaMode::SegmentTotal,
        };

        let scratch = tempfile::tempdir().map_err(|e| BackendError::Io {
            path: std::env::temp_dir(),
            source: e,
        })?;
        let traj_path = scratch.path().join("frame.json");
        write_trajectory(&traj, &traj_path)
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        let frames_dir = scratch.path().join("frames");
        let paths = self.render_trajectory(&traj_path, &frames_dir, 3)?;
        let image = FrameImage::read_png(&paths[1])?;
        if (image.width(), image.height()) != self.spec.image_size {
            return Err(BackendError::BackendUnavailable(format!(
                "renderer produced a {}x{} frame, spec declares {}x{}",
                image.width(),
                image.height(),
                self.spec.image_size.0,
                self.spec.image_size.1
            )));
        }
        Ok(image)
    }
}
