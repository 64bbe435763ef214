use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use swar_core::{EndpointParams, FeatureParams, DEFAULT_REJECTION_THRESHOLD};

#[derive(Debug, Parser)]
#[command(name = "swar", version, about = "Isolated-word voice command recognizer")]
pub struct Cli {
    /// Model registry directory.
    #[arg(long, global = true, env = "SWAR_REGISTRY", default_value = "HMMs")]
    pub registry: PathBuf,

    /// Capture sample rate for device input.
    #[arg(long, global = true, default_value_t = 16000)]
    pub rate: u32,

    #[command(flatten)]
    pub endpoint: EndpointArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a word model from one or more recordings and add it to the registry.
    Train(TrainArgs),
    /// Recognize the word spoken in a WAV file.
    Recognize(RecognizeArgs),
    /// Listen continuously and run the command bound to each recognized word.
    Listen(ListenArgs),
    /// Record a sample to a WAV file.
    Record(RecordArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of HMM states (N).
    #[arg(long, short = 'n', value_parser = clap::value_parser!(u32).range(1..=64))]
    pub states: u32,
    /// Feature vector size (D): D - 1 cepstra plus normalized energy.
    #[arg(long, short = 'd', value_parser = clap::value_parser!(u32).range(2..=64))]
    pub dim: u32,
    /// Word label the model is stored under.
    #[arg(long, short = 'w')]
    pub word: String,
    /// Maximum Viterbi re-estimation passes.
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Stop when the relative likelihood gain drops below this.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub variance_floor: f64,
    #[arg(long, default_value_t = 0.01)]
    pub transition_smoothing: f64,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Training recordings (16-bit mono WAV).
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    /// Print every model's per-frame log-likelihood.
    #[arg(long)]
    pub scores: bool,
    /// Per-frame log-likelihood below which the best word is rejected.
    #[arg(long, default_value_t = DEFAULT_REJECTION_THRESHOLD, allow_negative_numbers = true)]
    pub reject_threshold: f64,
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct ListenArgs {
    /// Command table: `word = shell command` lines.
    #[arg(long)]
    pub commands: PathBuf,
    /// `device`, `device:NAME` or `file:PATH`.
    #[arg(long, default_value = "device")]
    pub input_source: InputSource,
    #[arg(long, default_value = "quit")]
    pub quit_word: String,
    #[arg(long, default_value_t = DEFAULT_REJECTION_THRESHOLD, allow_negative_numbers = true)]
    pub reject_threshold: f64,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    pub output: PathBuf,
    /// Maximum recording length.
    #[arg(long, default_value_t = 3.0)]
    pub seconds: f64,
    /// `device`, `device:NAME` or `file:PATH`.
    #[arg(long, default_value = "device")]
    pub input_source: InputSource,
    /// Save without asking.
    #[arg(long, short = 'y')]
    pub yes: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    Device(Option<String>),
    File(PathBuf),
}

impl FromStr for InputSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "device" => Ok(Self::Device(None)),
            Some(("device", name)) if !name.is_empty() => Ok(Self::Device(Some(name.to_string()))),
            Some(("file", path)) if !path.is_empty() => Ok(Self::File(PathBuf::from(path))),
            _ => Err(format!("expected 'device', 'device:NAME' or 'file:PATH', got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Endpointing")]
pub struct EndpointArgs {
    #[arg(long, global = true, default_value_t = 10.0)]
    pub ep_frame_ms: f64,
    #[arg(long, global = true, default_value_t = 10.0)]
    pub ep_shift_ms: f64,
    /// Leading stretch assumed silent for threshold calibration.
    #[arg(long, global = true, default_value_t = 100.0)]
    pub calibration_ms: f64,
    /// Upper energy threshold as a multiple of the calibration energy.
    #[arg(long, global = true, default_value_t = 4.0)]
    pub itu_factor: f64,
    /// Lower energy threshold as a multiple of the calibration energy.
    #[arg(long, global = true, default_value_t = 2.0)]
    pub itl_factor: f64,
    /// Zero-crossing threshold in calibration standard deviations above the mean.
    #[arg(long, global = true, default_value_t = 2.0)]
    pub zcr_factor: f64,
    #[arg(long, global = true, default_value_t = 80.0)]
    pub min_word_ms: f64,
    #[arg(long, global = true, default_value_t = 150.0)]
    pub max_gap_ms: f64,
}

impl EndpointArgs {
    pub fn params(&self) -> EndpointParams {
        EndpointParams {
            frame_len_ms: self.ep_frame_ms,
            frame_shift_ms: self.ep_shift_ms,
            calibration_ms: self.calibration_ms,
            energy_factor_high: self.itu_factor,
            energy_factor_low: self.itl_factor,
            zcr_std_factor: self.zcr_factor,
            min_word_ms: self.min_word_ms,
            max_gap_ms: self.max_gap_ms,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Features")]
pub struct FeatureArgs {
    #[arg(long, default_value_t = 25.0)]
    pub frame_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub shift_ms: f64,
    #[arg(long, default_value_t = 0.97)]
    pub preemphasis: f64,
    #[arg(long, default_value_t = 26)]
    pub mel_filters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub energy_floor: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fmin: f64,
    /// Upper filterbank edge; defaults to half the sample rate.
    #[arg(long)]
    pub fmax: Option<f64>,
}

impl FeatureArgs {
    pub fn params(&self, dim: usize) -> FeatureParams {
        FeatureParams {
            frame_len_ms: self.frame_ms,
            frame_shift_ms: self.shift_ms,
            preemphasis: self.preemphasis,
            n_mel_filters: self.mel_filters,
            n_cepstra: dim - 1,
            energy_floor: self.energy_floor,
            fmin_hz: self.fmin,
            fmax_hz: self.fmax,
        }
    }
}
