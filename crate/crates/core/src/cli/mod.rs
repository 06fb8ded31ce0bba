//! The `advtrain` command line.
//!
//! Every command that takes `--out` writes `resolved-config.toml` and a
//! `MANIFEST` of SHA-256 hashes next to its outputs. The snapshot leaves out
//! the output directory, so the same run written elsewhere hashes the same. Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 numerical divergence.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::Split;
use crate::degrade::DegradeSpec;
use crate::error::Result;
use crate::training::Method;
use crate::video::FusionKind;

pub use config::{ModelConfig, PlanFile, Precision, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "advtrain", version, about = "Robust adverse pre-training for small CNNs")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Global seed
    #[arg(long, global = true, env = "ADVTRAIN_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it, 1 runs sequentially
    #[arg(long, global = true, env = "ADVTRAIN_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic shapes dataset
    Synth(SynthArgs),
    /// Convert CIFAR-10 binary batches to a grayscale dataset directory
    ImportCifar(ImportCifarArgs),
    /// Degrade every split of a dataset
    Degrade(DegradeArgs),
    /// Train a classifier (HQ, LQ, RAP-non-joint, RAP or ARAP)
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Turn a single-frame checkpoint into an early or slow fusion video model
    Fuse(FuseArgs),
    /// Build jittered synthetic videos from still images
    MakeVideos(MakeVideosArgs),
    /// Tune a fused model on video clips
    VideoTrain(VideoTrainArgs),
    /// Clip and video accuracy of a fused model
    VideoEval(VideoEvalArgs),
    /// Transfer ARAP with the four-way comparison table
    Transfer(TransferArgs),
    /// Render the features of a model through a sub-model's reconstruction tail
    Visualize(VisualizeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::ImportCifar(_) => "import-cifar",
            Command::Degrade(_) => "degrade",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Fuse(_) => "fuse",
            Command::MakeVideos(_) => "make-videos",
            Command::VideoTrain(_) => "video-train",
            Command::VideoEval(_) => "video-eval",
            Command::Transfer(_) => "transfer",
            Command::Visualize(_) => "visualize",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output dataset directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Training images
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    /// Test images
    #[arg(long, default_value_t = 400)]
    pub test: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportCifarArgs {
    /// Directory holding data_batch_*.bin and test_batch.bin
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Keep only the first N images of each split
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct DegradeArgs {
    /// Input dataset directory
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Degradation, e.g. `lowres:2|gauss-noise:25`
    #[arg(long)]
    pub spec: DegradeSpec,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// HQ dataset directory; a test split, if present, is scored after training
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Training method: hq, lq, rap-non-joint, rap or arap
    #[arg(long)]
    pub mode: Option<Method>,
    /// Degradation of the training (and test) images
    #[arg(long)]
    pub alpha: Option<DegradeSpec>,
    /// Severer degradation the sub-model learns from (ARAP)
    #[arg(long)]
    pub beta: Option<DegradeSpec>,
    /// Sub-model depth
    #[arg(long)]
    pub k: Option<usize>,
    /// Layers shared by the sub-model and the classifier
    #[arg(long)]
    pub kp: Option<usize>,
    /// Architecture preset (desk, cifar10, msra-cfw, svhn, ytf-frame)
    #[arg(long)]
    pub arch: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint to score
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Split to score
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Degrade the images before scoring
    #[arg(long)]
    pub degrade: Option<DegradeSpec>,
    /// Also write the report and a manifest here
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FuseArgs {
    /// Single-frame checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Fusion construction: early or slow
    #[arg(long)]
    pub kind: FusionKind,
    /// Half-width of the clip; clips hold 2T+1 frames
    #[arg(long = "t", visible_alias = "T")]
    pub t: usize,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeVideosArgs {
    /// Dataset directory of still images
    #[arg(long)]
    pub data: PathBuf,
    /// Split to turn into videos
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Output video directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VideoTrainArgs {
    /// Fused checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Video directory
    #[arg(long)]
    pub videos: PathBuf,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VideoEvalArgs {
    /// Fused checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Video directory
    #[arg(long)]
    pub videos: PathBuf,
    /// Single-frame checkpoint to compare against on constant clips
    #[arg(long)]
    pub single: Option<PathBuf>,
    /// Also write the report and a manifest here
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TransferArgs {
    /// TOML transfer plan
    #[arg(long)]
    pub plan: PathBuf,
    /// Clean source dataset directory
    #[arg(long)]
    pub source: PathBuf,
    /// Degraded target dataset directory (train split for tuning, test split for scoring)
    #[arg(long)]
    pub target: PathBuf,
    /// Also scan this many beta' values downward from the plan's
    #[arg(long)]
    pub sweep: Option<usize>,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VisualizeArgs {
    /// Classifier checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Sub-model checkpoint
    #[arg(long)]
    pub ms_ckpt: PathBuf,
    /// Dataset directory
    #[arg(long)]
    pub images: PathBuf,
    /// Split to draw images from
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Number of images
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Degrade the images first
    #[arg(long)]
    pub degrade: Option<DegradeSpec>,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .resolved(cli.seed, cli.threads)?;
    commands::dispatch(&cli.command, &cfg)
}
