//! `hsifuse` command-line tool.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 validation.

mod commands;
mod config;
mod dataset;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hsifuse", version, about = "Hyperspectral and multispectral image fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a smooth synthetic ground-truth cube.
    Synth(SynthArgs),
    /// Degrade ground-truth cubes into LR-HSI / HR-MSI / GT patch triples.
    Simulate(SimulateArgs),
    /// Train a fusion model on simulated triples.
    Train(TrainArgs),
    /// Score a checkpoint, or the bicubic baseline, on simulated triples.
    Eval(EvalArgs),
    /// Train and score one model per setting of an ablation axis.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 31)]
    pub bands: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ground-truth cube; may be repeated.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Patch side; a cube smaller than this is used whole.
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    /// Patch stride; defaults to the patch side.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Spectral response table; defaults to synthetic RGB responses.
    #[arg(long)]
    pub srf: Option<PathBuf>,
    /// Seeds the train/test split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out this fraction of patches under `test/`, the rest under `train/`.
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub blur_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub blur_sigma: f64,
    /// Average r×r blocks instead of decimating after the blur.
    #[arg(long)]
    pub block_mean: bool,
}

#[derive(Debug, Args, Clone)]
pub struct TrainFlags {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = ["bicubic"])]
    pub baseline: Option<String>,
    /// Write `profile_<image>.csv` with the spectra at `row,col`.
    #[arg(long, value_parser = parse_position)]
    pub profile: Option<(usize, usize)>,
    /// Write fused cubes as `<image>_pred.cube`.
    #[arg(long)]
    pub save_fused: bool,
    /// Dump this band of each prediction and ground truth as PGM.
    #[arg(long)]
    pub pgm_band: Option<usize>,
    /// Average per-band PSNRs instead of one joint MSE.
    #[arg(long)]
    pub psnr_per_band: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out triples; without it the training triples are scored.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_parser = ["dual_freq", "rel_coord", "weight_mode", "upsampler", "all"])]
    pub axis: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

fn parse_position(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((n(r)?, n(c)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                CliError::Usage(_) => "usage error",
                CliError::Io(_) => "i/o error",
                CliError::Validation(_) => "error",
            };
            eprintln!("hsifuse: {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_parse() {
        assert_eq!(parse_position("3, 4"), Ok((3, 4)));
        assert!(parse_position("3").is_err());
        assert!(parse_position("a,1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
