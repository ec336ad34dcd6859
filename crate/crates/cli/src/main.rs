//! `defence`: fence segmentation, occlusion-aware flow and multi-frame
//! de-fencing from the command line.
//!
//! Exit status: 0 success, 1 error, 2 reconstruction did not converge (the
//! partial result is written), 3 no fence pixels found (the reference frame
//! is written unchanged).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{leaf_keys, resolve, PipelineConfig, ALIASES};

#[derive(Parser, Debug)]
#[command(
    name = "defence",
    version,
    about = "Remove fences from short image sequences",
    after_help = "Every configuration key is also a flag with its dotted name, e.g. --fista.max_iters 200.\n\
                  Precedence: defaults < --config file < flags.\n\
                  DEFENCE_THREADS caps the worker threads; RUST_LOG overrides the log level."
)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Shorthand for --fista.lambda.
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<String>,
    /// Shorthand for --segment.stride.
    #[arg(long, global = true, allow_negative_numbers = true)]
    stride: Option<String>,
    /// Shorthand for --segment.tau.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<String>,
    /// Shorthand for --flow.mu.
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<String>,
    /// More log output; repeat for trace.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment fence pixels in single frames.
    Segment(SegmentArgs),
    /// Occlusion-aware optical flow from a frame to the reference.
    Flow(FlowArgs),
    /// Segment, register and fuse a sequence into one fence-free image.
    Run(RunArgs),
    /// Render a synthetic fenced sequence with ground truth.
    Synth(SynthArgs),
    /// Score results against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train the texel joint detector.
    TrainClassifier(TrainArgs),
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Input frames.
    #[arg(required = true)]
    pub frames: Vec<PathBuf>,
    /// Detector model (overrides io.model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory for `<stem>_mask.png` per frame.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Also write alpha, preliminary lattice mask, trimap and detections.
    #[arg(long)]
    pub keep_intermediates: bool,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    /// Reference frame.
    #[arg(long)]
    pub reference: PathBuf,
    /// Frame whose flow to the reference is estimated.
    #[arg(long)]
    pub frame: PathBuf,
    /// Fence mask of the reference; none means nothing is occluded.
    #[arg(long)]
    pub reference_mask: Option<PathBuf>,
    /// Fence mask of the frame.
    #[arg(long)]
    pub frame_mask: Option<PathBuf>,
    /// Output `.flo` file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Input frames in temporal order.
    #[arg(required = true)]
    pub frames: Vec<PathBuf>,
    /// Precomputed fence masks, one per frame, instead of segmentation.
    #[arg(long, num_args = 1..)]
    pub masks: Vec<PathBuf>,
    /// Detector model (overrides io.model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output image (overrides io.output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reference frame index (overrides `reference`).
    #[arg(long)]
    pub reference: Option<usize>,
    /// Write masks, alpha maps, flows and the resolved config; into DIR when
    /// given, else io.intermediates, else next to the output.
    #[arg(long, value_name = "DIR", num_args = 0..=1)]
    pub keep_intermediates: Option<Option<PathBuf>>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene description (JSON); the flags below then do not apply.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    /// Lattice spacing in pixels.
    #[arg(long, default_value_t = 40.0)]
    pub spacing: f64,
    /// Lattice rotation in degrees.
    #[arg(long, default_value_t = 10.0)]
    pub angle: f64,
    /// Per-frame background translation `x,y`; repeat once per frame.
    /// Default: -4,3 then 0,0 then 3,-4.
    #[arg(long = "motion", value_name = "X,Y", allow_hyphen_values = true)]
    pub motions: Vec<String>,
    /// Gaussian noise σ.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Joint detection precision, recall and F against ground-truth joints.
    Detection {
        /// Predicted joints (`x,y` CSV).
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Match radius in pixels.
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        /// JSON result file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pixelwise mask precision, recall and F.
    Mask {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean end-point error between two `.flo` files.
    Flow {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Pixels to leave out.
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PSNR of an image against ground truth.
    Psnr {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Restrict to the set pixels of this mask.
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Scene directories written by `synth` (frames, joints and masks);
    /// synthetic scenes are rendered when none are given.
    #[arg(long = "scene", value_name = "DIR")]
    pub scenes: Vec<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

/// What a successful command reports through the exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
    EmptyMask,
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for (key, default) in flag_keys() {
        cmd = cmd.arg(
            Arg::new(format!("cfg:{key}"))
                .long(key)
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .global(true)
                .help_heading("Configuration keys")
                .help(format!("default: {default}")),
        );
    }
    cmd
}

/// Config leaves exposed as dotted flags. `reference` is left out since
/// `run --reference` sets it and `flow --reference` names a file.
fn flag_keys() -> Vec<(String, serde_json::Value)> {
    leaf_keys()
        .into_iter()
        .filter(|(k, _)| k.contains('.'))
        .collect()
}

fn innermost(m: &ArgMatches) -> &ArgMatches {
    match m.subcommand() {
        Some((_, sub)) => innermost(sub),
        None => m,
    }
}

fn overrides(cli: &Cli, matches: &ArgMatches) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let short = [&cli.lambda, &cli.stride, &cli.tau, &cli.mu];
    for ((_, key), value) in ALIASES.iter().zip(short) {
        if let Some(v) = value {
            out.push((key.to_string(), v.clone()));
        }
    }
    let m = innermost(matches);
    for (key, _) in flag_keys() {
        if let Some(v) = m.get_one::<String>(&format!("cfg:{key}")) {
            out.push((key, v.clone()));
        }
    }
    out
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DEFENCE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("DEFENCE_THREADS={raw:?} is not a count"))?;
    if n == 0 {
        bail!("DEFENCE_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn execute(cli: &Cli, cfg: &PipelineConfig) -> Result<Outcome> {
    match &cli.command {
        Command::Segment(a) => commands::segment(cfg, a),
        Command::Flow(a) => commands::flow(cfg, a),
        Command::Run(a) => commands::run(cfg, a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(e) => commands::eval(e),
        Command::TrainClassifier(a) => commands::train(cfg, a),
    }
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            // help and version go to stdout and succeed; usage errors exit 1
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();

    let result = init_threads()
        .and_then(|_| resolve(cli.config.as_deref(), &overrides(&cli, &matches)))
        .and_then(|cfg| {
            log::info!("configuration: {}", serde_json::to_string(&cfg)?);
            execute(&cli, &cfg)
        });
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Ok(Outcome::EmptyMask) => ExitCode::from(3),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
