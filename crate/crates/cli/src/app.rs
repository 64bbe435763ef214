use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use log::info;
use swar_core::audio::{record_from, DeviceSource};
use swar_core::hmm::train_word_model_with_report;
use swar_core::store::is_valid_word;
use swar_core::{
    extract_features, isolate_word, load_wav, recognize, save_model, save_wav, AudioError, CaptureSource, Decision,
    EndpointError, EndpointParams, FeatureError, FeatureSequence, FileSource, HmmError, ModelRegistry, StoreError,
    TrainingConfig,
};
use thiserror::Error;

use crate::args::{Cli, Command, InputSource, ListenArgs, RecognizeArgs, RecordArgs, TrainArgs};
use crate::daemon::{self, ListenConfig, ListenError};
use crate::table::{CommandTable, TableError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_REJECTED: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Audio { path: PathBuf, source: AudioError },
    #[error("{}: {source}", path.display())]
    Endpoint { path: PathBuf, source: EndpointError },
    #[error("{}: {source}", path.display())]
    Features { path: PathBuf, source: FeatureError },
    #[error("{}: {source}", path.display())]
    Training { path: PathBuf, source: HmmError },
    #[error(transparent)]
    Capture(AudioError),
    #[error(transparent)]
    Model(#[from] HmmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Listen(#[from] ListenError),
    #[error("invalid word label '{0}': use letters, digits, '_' or '-'")]
    InvalidWord(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let endpoint = cli.endpoint.params();
    match &cli.command {
        Command::Train(args) => train(&cli.registry, &endpoint, args),
        Command::Recognize(args) => recognize_file(&cli.registry, &endpoint, args),
        Command::Listen(args) => listen(&cli.registry, cli.rate, &endpoint, args),
        Command::Record(args) => record(cli.rate, args),
    }
}

/// Endpoints `path` and returns the features of its longest word.
fn utterance_features(
    path: &Path,
    endpoint: &EndpointParams,
    params: &swar_core::FeatureParams,
) -> Result<(FeatureSequence, String), CliError> {
    let clip = load_wav(path).map_err(|source| CliError::Audio {
        path: path.into(),
        source,
    })?;
    let (word, segment) = isolate_word(&clip, endpoint).map_err(|source| CliError::Endpoint {
        path: path.into(),
        source,
    })?;
    let rate = clip.sample_rate_hz();
    let span = match segment {
        Some(s) => format!("word at {:.3}-{:.3} s", s.start_s(rate), s.end_s(rate)),
        None => format!("no word boundary found, using all {:.3} s", clip.duration_s()),
    };
    let features = extract_features(&word, params).map_err(|source| CliError::Features {
        path: path.into(),
        source,
    })?;
    Ok((features, span))
}

fn train(root: &Path, endpoint: &EndpointParams, args: &TrainArgs) -> Result<u8, CliError> {
    if !is_valid_word(&args.word) {
        return Err(CliError::InvalidWord(args.word.clone()));
    }
    let dim = args.dim as usize;
    let params = args.features.params(dim);
    let mut registry = ModelRegistry::open(root)?;
    let mut sequences = Vec::with_capacity(args.files.len());
    for path in &args.files {
        let (features, span) = utterance_features(path, endpoint, &params)?;
        println!("{}: {span}, {} frames", path.display(), features.len());
        sequences.push(features);
    }
    let config = TrainingConfig {
        viterbi_iterations: args.iters,
        convergence_epsilon: args.epsilon,
        variance_floor: args.variance_floor,
        transition_smoothing: args.transition_smoothing,
        ..TrainingConfig::new(args.states as usize, dim)
    };
    let (hmm, report) = train_word_model_with_report(&args.word, &sequences, &config).map_err(|e| match e {
        HmmError::TooFewObservations { sequence, .. } => CliError::Training {
            path: args.files[sequence].clone(),
            source: e,
        },
        e => CliError::Model(e),
    })?;
    save_model(&hmm, &params, &mut registry)?;
    println!(
        "trained '{}' (N = {}, D = {dim}) on {} file(s): {} iteration(s), final log-likelihood {:.6}",
        args.word,
        args.states,
        sequences.len(),
        report.iterations,
        report.final_log_likelihood()
    );
    Ok(EXIT_OK)
}

fn recognize_file(root: &Path, endpoint: &EndpointParams, args: &RecognizeArgs) -> Result<u8, CliError> {
    let registry = ModelRegistry::open(root)?;
    let params = registry.feature_params().cloned().ok_or(HmmError::EmptyRegistry)?;
    if registry.is_empty() {
        return Err(HmmError::EmptyRegistry.into());
    }
    let (features, span) = utterance_features(&args.file, endpoint, &params)?;
    info!("{}: {span}, {} frames", args.file.display(), features.len());
    let result = recognize(&registry, &features, args.reject_threshold)?;
    let code = match &result.decision {
        Decision::Accepted { word, .. } => {
            println!("{word}");
            EXIT_OK
        }
        Decision::Rejected => {
            println!("REJECTED");
            EXIT_REJECTED
        }
    };
    if args.scores {
        for (word, score) in result.per_frame_scores() {
            println!("{word}\t{score:.6}");
        }
    }
    Ok(code)
}

fn open_source(input: &InputSource, rate: u32) -> Result<(Box<dyn CaptureSource>, bool), CliError> {
    Ok(match input {
        InputSource::Device(name) => (
            Box::new(DeviceSource::open(name.as_deref(), rate).map_err(CliError::Capture)?),
            true,
        ),
        InputSource::File(path) => (
            Box::new(FileSource::open(path).map_err(|source| CliError::Audio {
                path: path.clone(),
                source,
            })?),
            false,
        ),
    })
}

fn listen(root: &Path, rate: u32, endpoint: &EndpointParams, args: &ListenArgs) -> Result<u8, CliError> {
    let registry = ModelRegistry::open(root)?;
    if registry.is_empty() {
        return Err(HmmError::EmptyRegistry.into());
    }
    let table = CommandTable::load(&args.commands, &args.quit_word)?;
    let (source, live) = open_source(&args.input_source, rate)?;
    let config = ListenConfig {
        endpoint: endpoint.clone(),
        rejection_threshold: args.reject_threshold,
        ..Default::default()
    };
    let outcome = daemon::listen(source, live, &registry, &table, &config)?;
    info!(
        "stopped ({:?}): {} segment(s), {} command(s) run",
        outcome.stop,
        outcome.heard.len(),
        outcome.commands.len()
    );
    Ok(EXIT_OK)
}

/// Asks a yes/no question until answered; end of input counts as no.
pub fn confirm(input: &mut impl BufRead, output: &mut impl Write, question: &str) -> io::Result<bool> {
    loop {
        write!(output, "{question} [y/n] ")?;
        output.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Ok(false);
        }
        match line.trim().to_lowercase().as_str() {
            "y" | "yes" => return Ok(true),
            "n" | "no" => return Ok(false),
            _ => {}
        }
    }
}

fn record(rate: u32, args: &RecordArgs) -> Result<u8, CliError> {
    let (mut source, _) = open_source(&args.input_source, rate)?;
    eprintln!("recording up to {} s ...", args.seconds);
    let clip = record_from(source.as_mut(), args.seconds).map_err(CliError::Capture)?;
    let stdin = io::stdin();
    let keep = args.yes
        || !stdin.is_terminal()
        || confirm(
            &mut stdin.lock(),
            &mut io::stderr(),
            &format!("save {:.2} s to {}?", clip.duration_s(), args.output.display()),
        )?;
    if keep {
        save_wav(&clip, &args.output).map_err(|source| CliError::Audio {
            path: args.output.clone(),
            source,
        })?;
        println!("saved {:.2} s to {}", clip.duration_s(), args.output.display());
    } else {
        println!("discarded");
    }
    Ok(EXIT_OK)
}
