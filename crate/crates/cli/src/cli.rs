use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Preset;

#[derive(Debug, Parser)]
#[command(name = "vru", version, about = "Pedestrian behaviour and trajectory prediction pipeline")]
pub struct Cli {
    /// Seed from which all randomness of the command is derived.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Window annotations into train/val/test sample corpora.
    Build(BuildArgs),
    /// Train VRUNet or the modular baseline.
    Train(TrainArgs),
    /// Report per-task AP and displacement errors.
    Eval(EvalArgs),
    /// Write per-window predictions as JSON lines.
    Predict(PredictArgs),
    /// Assign track ids to per-frame detections.
    Track(TrackArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML generator specification.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes, overriding the specification.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Scene id prefix, overriding the specification.
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory holding `annotations.jsonl` and `masks/`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Vrunet,
    Modular,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `vru build`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Vrunet)]
    pub model: ModelKind,
    /// Output directory for checkpoints and logs.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Total number of epochs, counting those of a resumed run.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Zero the scene embedding.
    #[arg(long)]
    pub ablate_scene: bool,
    /// Continue from a `last.ckpt` written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A VRUNet checkpoint file or a modular model directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Row label; defaults to the model type.
    #[arg(long)]
    pub name: Option<String>,
    /// Write the CSV report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// A VRUNet checkpoint file.
    #[arg(long)]
    pub model: PathBuf,
    /// An annotation directory (with `annotations.jsonl`) or a built dataset.
    #[arg(long)]
    pub input: PathBuf,
    /// Split to read when `input` is a built dataset.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Window stride when windowing annotations.
    #[arg(long, default_value_t = 15)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detections in the annotation format; `person_id` is ignored.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
