//! `nvf`: fit, edit, render and measure neural video fields.
//!
//! Machine-readable output goes to stdout as JSON, progress to stderr.
//! Failures print `{"error":{"kind":..,"message":..}}` on stderr and exit
//! with 2 (usage, configuration, input) or 3 (runtime).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use nvf_core::config::RunConfig;
use nvf_core::editing::field_edit_with_progress;
use nvf_core::field::{load_params, save_params};
use nvf_core::fitting::fit_with_progress;
use nvf_core::render::{
    interpolated_time_samples, load_video, memory_report, psnr, psnr_per_frame, render_video, save_video,
    temporal_consistency, RenderSpec,
};
use nvf_core::{FieldParams, NvfError, VideoTensor};

const EXCHANGE_ENV: &str = "NVF_EXCHANGE_DIR";

#[derive(Parser)]
#[command(name = "nvf", version, about = "Neural video field fitting, editing and rendering")]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a field to a video (frame directory or .y4m).
    Fit {
        video: PathBuf,
        /// Output parameter file.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Propagate an edit into a fitted field.
    Edit {
        params: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, short)]
        config: Option<PathBuf>,
        /// Source video; defaults to the input field rendered at its fitted shape,
        /// which is what chained edits build on.
        #[arg(long)]
        video: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a field to a frame directory or .y4m file.
    Render {
        params: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Number of source frames to sample (defaults to the fitted video's).
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value_t = 24.0)]
        fps: f32,
        /// Novel frames inserted between each pair of source frames.
        #[arg(long, default_value_t = 0)]
        interp: usize,
    },
    /// PSNR and temporal consistency of a video against a reference.
    Metrics { video: PathBuf, reference: PathBuf },
    /// Parameter and workspace memory for several frame counts.
    BenchMem {
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        frames: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, short)]
        config: Option<PathBuf>,
    },
}

struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl From<NvfError> for Failure {
    fn from(e: NvfError) -> Self {
        let code = match e {
            NvfError::Optimizer { .. } | NvfError::Training { .. } | NvfError::Edit { .. } => 3,
            _ => 2,
        };
        Failure { kind: e.kind().to_string(), message: e.to_string(), code }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "usage".into(), message: message.into(), code: 2 }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail(usage(e.to_string().trim_end()));
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
    ExitCode::from(f.code)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        config.set("seed", &seed.to_string())?;
    }
    Ok(config)
}

fn write_report(path: Option<&Path>, report: &Value) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(report).expect("report serializes");
        std::fs::write(path, text).map_err(|e| NvfError::io(path, e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Value, Failure> {
    if cli.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let quiet = cli.quiet;
    match cli.command {
        Command::Fit { video, out, config, seed, report } => {
            let config = load_config(config.as_deref(), seed)?;
            let video = load_video(&video)?;
            let field = config.field_config(video.frames, video.height, video.width)?;
            let fit = config.fit_config()?;
            let mut params = FieldParams::init(&field, config.seed())?;
            let result = fit_with_progress(&mut params, &video, &fit, |it, p| {
                if !quiet {
                    eprintln!("fit: iteration {it}, psnr {p:.2} dB");
                }
            })?;
            save_params(&params, &out)?;
            let value = serde_json::to_value(&result).expect("report serializes");
            write_report(report.as_deref(), &value)?;
            Ok(value)
        }
        Command::Edit { params, out, config, video, seed, report } => {
            let config = load_config(config.as_deref(), seed)?;
            let mut field = load_params(&params)?;
            let video = match video {
                Some(path) => load_video(&path)?,
                None => source_render(&field)?,
            };
            let edit = config.edit_config(video.frames)?;
            let exchange = std::env::var_os(EXCHANGE_ENV).map(PathBuf::from);
            let mut editor = config.editor(exchange)?;
            let interval = edit.eval_interval.max(1);
            let result = field_edit_with_progress(&mut field, &video, editor.as_mut(), &edit, |i, t, loss| {
                if !quiet && (i + 1) % interval == 0 {
                    eprintln!("edit: iteration {}, frame {t}, l1 {loss:.5}", i + 1);
                }
            })?;
            save_params(&field, &out)?;
            let value = serde_json::to_value(&result).expect("report serializes");
            write_report(report.as_deref(), &value)?;
            Ok(value)
        }
        Command::Render { params, out, width, height, frames, fps, interp } => {
            let field = load_params(&params)?;
            let source = field.source;
            let pick = |given: Option<usize>, from_source: Option<usize>, name: &str| {
                given.or(from_source).ok_or_else(|| usage(format!("--{name} is required: the field has no source shape")))
            };
            let width = pick(width, source.map(|s| s.width), "width")?;
            let height = pick(height, source.map(|s| s.height), "height")?;
            let frames = pick(frames, source.map(|s| s.frames), "frames")?;
            if !(fps.is_finite() && fps > 0.0) {
                return Err(usage("--fps must be positive"));
            }
            let spec = RenderSpec { width, height, time_samples: interpolated_time_samples(frames, interp) };
            let mut video = render_video(&field, &spec)?;
            video.fps = fps * (interp + 1) as f32;
            save_video(&video, &out)?;
            Ok(json!({
                "frames": video.frames,
                "height": video.height,
                "width": video.width,
                "fps": video.fps,
                "output": out.display().to_string(),
            }))
        }
        Command::Metrics { video, reference } => {
            let a = load_video(&video)?;
            let b = load_video(&reference)?;
            let tc = |v: &VideoTensor| if v.frames >= 2 { temporal_consistency(v).map(Some) } else { Ok(None) };
            Ok(json!({
                "psnr": psnr(&a, &b)?,
                "psnr_per_frame": psnr_per_frame(&a, &b)?,
                "temporal_consistency": tc(&a)?,
                "temporal_consistency_reference": tc(&b)?,
            }))
        }
        Command::BenchMem { frames, height, width, config } => {
            if frames.is_empty() {
                return Err(usage("--frames needs at least one frame count"));
            }
            let config = load_config(config.as_deref(), None)?;
            let fit = config.fit_config()?;
            let mut reports = Vec::with_capacity(frames.len());
            for &t in &frames {
                if t == 0 {
                    return Err(usage("frame counts must be positive"));
                }
                let field = config.field_config(t, height, width)?;
                let r = memory_report(Some(&field), t, height, width, fit.batch_size, config.seed())?;
                if !quiet {
                    eprintln!("bench-mem: {t} frames, peak workspace {} bytes", r.peak_workspace_bytes);
                }
                reports.push(r);
            }
            Ok(json!({ "reports": reports }))
        }
    }
}

/// The field rendered at the shape it was fitted to.
fn source_render(field: &FieldParams) -> Result<VideoTensor, Failure> {
    let shape = field
        .source
        .ok_or_else(|| usage("--video is required: the field has no source shape"))?;
    Ok(render_video(field, &RenderSpec::frames(shape.width, shape.height, shape.frames))?)
}
