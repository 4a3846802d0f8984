use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ganterp::pipeline::{analyze, render_existing, run_pipeline, BackendSelector, EncoderConfig, RunConfig};
use ganterp::tv::write_analysis_table;
use ganterp::PipelineError;

#[derive(Debug, Parser)]
#[command(name = "ganterp", version, about = "Audio-driven latent interpolation through a class-conditional generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze audio, plan a trajectory and render its frames.
    Run(RunArgs),
    /// Stop after the alpha track and print the per-slice table.
    Analyze {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Write the table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render an existing trajectory file.
    Render {
        #[arg(long)]
        trajectory: PathBuf,
        /// Frame directory. Defaults to `frames/` next to the trajectory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "mock")]
        backend: BackendSelector,
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long)]
    audio: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// STFT window length in samples.
    #[arg(long, default_value_t = 2048)]
    window: usize,
    #[arg(long, default_value_t = 30)]
    rolling_length: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    no_normalize_tv: bool,
    #[arg(long)]
    legacy_alpha_division: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lines of `<keyframe_index> <category_id>`.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// `mock` or `external:PATH`.
    #[arg(long, default_value = "mock")]
    backend: BackendSelector,
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long, default_value_t = 128)]
    latent_dim: usize,
    #[arg(long, default_value_t = 1000)]
    num_classes: u32,
    /// Frame size as WIDTHxHEIGHT.
    #[arg(long, default_value = "128x128", value_parser = parse_size)]
    image_size: (u32, u32),
    #[arg(long)]
    encode: bool,
    /// Encoder command template; placeholders {fps} {frames} {audio} {output}.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    dump_analysis: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let dim = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad dimension `{v}`: {e}"));
    Ok((dim(w)?, dim(h)?))
}

impl AnalysisArgs {
    fn config(&self, out_dir: PathBuf) -> RunConfig {
        let mut config = RunConfig::new(&self.audio, out_dir);
        config.fps = self.fps;
        config.window_samples = self.window;
        config.rolling_length = self.rolling_length;
        config.delta = self.delta;
        config.normalize_tv = !self.no_normalize_tv;
        config.legacy_alpha_division = self.legacy_alpha_division;
        config
    }
}

enum Failure {
    Pipeline(PipelineError),
    Other(String, u8),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Self::Pipeline(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let mut config = args.analysis.config(args.out);
            config.seed = args.seed;
            config.categories_path = args.categories;
            config.backend = args.backend;
            config.generator.latent_dim = args.latent_dim;
            config.generator.num_classes = args.num_classes;
            config.generator.image_size = args.image_size;
            config.generator.truncation = args.truncation;
            config.encode = args.encode;
            if let Some(template) = args.encoder {
                config.encoder = EncoderConfig::from_template(&template)
                    .ok_or_else(|| Failure::Other("empty encoder template".into(), 2))?;
            }
            config.dump_analysis = args.dump_analysis;
            if let Some(n) = args.parallelism {
                config.parallelism = n;
            }
            let report = run_pipeline(&config)?;
            println!("slices: {}", report.num_slices);
            println!("inflections: {}", report.num_inflections);
            println!("frames: {} in {}", report.frames_written, report.frames_dir.display());
            println!("trajectory: {}", report.trajectory_path.display());
            if let Some(video) = report.video_path {
                println!("video: {}", video.display());
            }
        }
        Command::Analyze { analysis, output } => {
            let config = analysis.config(PathBuf::new());
            let result = analyze(&config)?;
            let written = match output {
                Some(path) => std::fs::File::create(&path).and_then(|f| {
                    let mut w = std::io::BufWriter::new(f);
                    write_analysis_table(&mut w, &result.tv, &result.alphas)?;
                    w.flush()
                }),
                None => {
                    let mut out = std::io::stdout().lock();
                    write_analysis_table(&mut out, &result.tv, &result.alphas)
                }
            };
            written.map_err(|e| Failure::Other(format!("cannot write table: {e}"), 9))?;
        }
        Command::Render {
            trajectory,
            out,
            backend,
            parallelism,
        } => {
            let out = out.unwrap_or_else(|| {
                trajectory
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join(ganterp::pipeline::FRAMES_DIR)
            });
            let parallelism = parallelism.unwrap_or_else(|| RunConfig::new("", "").parallelism);
            let frames = render_existing(&trajectory, &out, &backend, parallelism)?;
            println!("frames: {} in {}", frames.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e.kind);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Other(msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
