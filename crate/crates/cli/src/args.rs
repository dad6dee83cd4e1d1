use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// HF signal classification: synthesis, channel simulation, training and
/// evaluation of a 1D CNN on 4 kHz IQ records.
#[derive(Debug, Parser)]
#[command(name = "hfclass", version)]
pub struct Cli {
    /// Worker threads for generation and evaluation.
    #[arg(long, global = true, env = "HFCLASS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the registered modes.
    Modes,
    /// Build train/val/holdout shards.
    Generate(GenerateArgs),
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a shard and write CSV reports.
    Eval(EvalArgs),
    /// Classify a raw IQ file (interleaved f32 LE at 4 kHz).
    Classify(ClassifyArgs),
    /// Render a spectrogram as a PGM image.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Records per mode, split between train/val/holdout.
    #[arg(long, default_value_t = 500)]
    pub per_mode: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Train, validation and holdout fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.1, 0.0])]
    pub splits: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training shard (.hfds).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation shard (.hfds).
    #[arg(long)]
    pub val: PathBuf,
    /// Checkpoint to write (best validation accuracy).
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to the checkpoint path with `.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// `desk`, `raw-iq`, or a descriptor file.
    #[arg(long, default_value = "desk")]
    pub arch: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 10)]
    pub lr_step: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub shard: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Raw IQ file; each full 4096-sample window is classified.
    #[arg(long)]
    pub iq: PathBuf,
    /// Manifest providing class names; defaults to the built-in registry.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Raw IQ file to render.
    #[arg(long, conflicts_with_all = ["mode", "seed", "preset", "snr", "augment"])]
    pub iq: Option<PathBuf>,
    /// Synthesize this mode instead of reading a file.
    #[arg(long, required_unless_present = "iq")]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channel preset; defaults to identity.
    #[arg(long)]
    pub preset: Option<String>,
    /// SNR in dB; defaults to 25.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
    /// Draw a full random impairment plan from the seed.
    #[arg(long)]
    pub augment: bool,
    /// Output PGM.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rendered 4096-sample record as raw IQ.
    #[arg(long)]
    pub iq_out: Option<PathBuf>,
}
