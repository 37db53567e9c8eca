//! `shpsd`: simulate spherical-array scenes, estimate source and
//! reverberant PSDs, separate sources and score the result.
//!
//! Exit status is 0 on success, 1 for configuration or input errors and 2
//! when the computation itself fails.

mod audio;
mod commands;
mod config;
mod error;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shpsd::estimator::ReverbModel;
use shpsd::pipeline::BenchSignal;

use crate::audio::BitDepth;

#[derive(Debug, Parser)]
#[command(name = "shpsd", version, about = "Spherical-array PSD estimation and source separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene config to a multichannel recording plus ground truth.
    Simulate(SimulateArgs),
    /// Estimate source and reverberant PSDs from a recording.
    Estimate(EstimateArgs),
    /// Beamform toward each source and apply the Wiener post-filter.
    Separate(SeparateArgs),
    /// Score separated signals (and optionally a PSD table) against references.
    Evaluate(EvaluateArgs),
    /// Run the batch SIR experiment over source counts and reverberation times.
    Bench(BenchArgs),
}

/// STFT framing; unset fields fall back to the config file, then to
/// 256-point frames with hop 128 at 8 kHz.
#[derive(Debug, Clone, Default, Args)]
pub struct StftArgs {
    /// Frame length in samples.
    #[arg(long)]
    pub fft_size: Option<usize>,
    /// Frame advance in samples.
    #[arg(long)]
    pub hop: Option<usize>,
    /// Sampling rate in Hz.
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

/// Estimator parameters; unset fields fall back to the config file, then
/// to beta 0.4, V = 2, N = 4 and the full model.
#[derive(Debug, Clone, Default, Args)]
pub struct EstimatorArgs {
    /// EWMA smoothing factor in [0, 1].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Spherical-harmonic order V of the reverberant field.
    #[arg(long)]
    pub reverb_order: Option<usize>,
    /// Spherical-harmonic order N used for estimation.
    #[arg(long)]
    pub order: Option<usize>,
    /// `full` (source and reverberant terms) or `anechoic` (reverberation ignored).
    #[arg(long)]
    pub model: Option<ReverbModel>,
}

/// Where array layout, framing and source directions come from.
#[derive(Debug, Clone, Default, Args)]
pub struct SceneArgs {
    /// Scene config (TOML, or JSON by extension).
    #[arg(long, conflicts_with = "metadata")]
    pub config: Option<PathBuf>,
    /// Metadata JSON written by `simulate`.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Source direction as THETA,PHI in degrees; repeat per source.
    /// Replaces the directions from the config or metadata.
    #[arg(long = "doa", value_parser = config::parse_doa, allow_hyphen_values = true)]
    pub doas: Vec<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the room reverberation time in seconds.
    #[arg(long)]
    pub t60: Option<f64>,
    #[arg(long, value_enum, default_value_t = BitDepth::Float32)]
    pub bit_depth: BitDepth,
    #[command(flatten)]
    pub stft: StftArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Multichannel recording, one channel per microphone.
    #[arg(long)]
    pub input: PathBuf,
    /// PSD table: frame, bin_hz, phi_1..phi_L, gamma_00.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for one `source_<l>_psd.csv` spectrogram per source.
    #[arg(long)]
    pub spectrogram_dir: Option<PathBuf>,
    /// Table of every reverberant term, real and imaginary parts.
    #[arg(long)]
    pub reverb_out: Option<PathBuf>,
    /// Sound-field coefficient dump.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for `separated_<l>.wav`.
    #[arg(long)]
    pub out: PathBuf,
    /// PSD table from `estimate`; estimated jointly when absent.
    #[arg(long)]
    pub psd: Option<PathBuf>,
    /// Also write the unfiltered beamformer outputs as `beamformer_<l>.wav`.
    #[arg(long)]
    pub beamformer: bool,
    /// Directory for one `separated_<l>_power.csv` spectrogram per source.
    #[arg(long)]
    pub spectrogram_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BitDepth::Float32)]
    pub bit_depth: BitDepth,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Separated signals, in source order.
    #[arg(long = "estimate", num_args = 1.., required = true)]
    pub estimates: Vec<PathBuf>,
    /// Reference signals, in the same order.
    #[arg(long = "reference", num_args = 1.., required = true)]
    pub references: Vec<PathBuf>,
    /// Beamformer-only outputs to score alongside.
    #[arg(long = "beamformer", num_args = 1..)]
    pub beamformer: Vec<PathBuf>,
    /// PSD table to score against the references' smoothed periodograms.
    #[arg(long)]
    pub psd: Option<PathBuf>,
    /// Leading frames excluded from the PSD error.
    #[arg(long, default_value_t = 0)]
    pub skip_frames: usize,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Smoothing of the reference periodogram.
    #[arg(long, default_value_t = 0.4)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bench config (TOML, or JSON by extension); defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenes per cell.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seconds of audio per source.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, value_enum)]
    pub signal: Option<SignalKind>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SignalKind {
    SpeechLike,
    WhiteNoise,
}

impl From<SignalKind> for BenchSignal {
    fn from(s: SignalKind) -> Self {
        match s {
            SignalKind::SpeechLike => BenchSignal::SpeechLike,
            SignalKind::WhiteNoise => BenchSignal::WhiteNoise,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Separate(a) => commands::separate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
