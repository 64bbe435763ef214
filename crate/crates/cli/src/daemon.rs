//! The live listen loop.
//!
//! A producer thread reads ~100 ms chunks from the capture source into a
//! bounded queue. The consumer keeps a rolling window of recent audio, runs
//! endpoint detection on it every hop, and recognizes each word segment once
//! it is followed by enough trailing audio. Accepted words run their bound
//! shell command on a worker thread; the quit word ends the loop.

use std::collections::VecDeque;
use std::io::Read;
#[cfg(unix)]
use std::os::unix::process::CommandExt;
use std::process::{Child, Command as Process, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use swar_core::{
    detect_word_boundaries, extract_features, recognize, AudioClip, AudioError, CaptureSource, Decision, EndpointError,
    EndpointParams, FeatureError, HmmError, ModelRegistry, RecognitionResult, DEFAULT_REJECTION_THRESHOLD,
};
use thiserror::Error;

use crate::table::CommandTable;

#[derive(Debug, Error)]
pub enum ListenError {
    #[error("capture failed: {0}")]
    Capture(#[from] AudioError),
    #[error("endpointing failed: {0}")]
    Endpoint(#[from] EndpointError),
    #[error("feature extraction failed: {0}")]
    Features(#[from] FeatureError),
    #[error("recognition failed: {0}")]
    Recognition(#[from] HmmError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListenConfig {
    pub endpoint: EndpointParams,
    pub rejection_threshold: f64,
    /// Length of the rolling analysis window.
    pub window_s: f64,
    /// Audio accumulated between two endpoint scans.
    pub hop_s: f64,
    /// Audio required after a segment's end before it is recognized.
    pub trailing_ms: f64,
    pub chunk_ms: f64,
    /// Queue capacity in chunks; live capture drops the oldest on overflow.
    pub queue_chunks: usize,
    pub command_timeout: Duration,
}

impl Default for ListenConfig {
    fn default() -> Self {
        Self {
            endpoint: EndpointParams::default(),
            rejection_threshold: DEFAULT_REJECTION_THRESHOLD,
            window_s: 3.0,
            hop_s: 0.5,
            trailing_ms: 200.0,
            chunk_ms: 100.0,
            queue_chunks: 50,
            command_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    QuitWord,
    EndOfStream,
}

/// One recognized (or rejected) segment.
#[derive(Debug, Clone)]
pub struct Heard {
    pub start_s: f64,
    pub end_s: f64,
    pub result: RecognitionResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandStatus {
    Exited(Option<i32>),
    TimedOut,
    SpawnFailed(String),
}

#[derive(Debug, Clone)]
pub struct CommandRun {
    pub word: String,
    pub command: String,
    pub status: CommandStatus,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone)]
pub struct ListenOutcome {
    pub stop: StopReason,
    pub heard: Vec<Heard>,
    pub commands: Vec<CommandRun>,
    pub dropped_chunks: u64,
}

struct QueueState {
    chunks: VecDeque<Vec<f64>>,
    closed: bool,
    error: Option<AudioError>,
    dropped: u64,
}

/// Bounded hand-off between capture and processing.
struct ChunkQueue {
    state: Mutex<QueueState>,
    filled: Condvar,
    drained: Condvar,
    capacity: usize,
}

impl ChunkQueue {
    fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new(QueueState {
                chunks: VecDeque::with_capacity(capacity),
                closed: false,
                error: None,
                dropped: 0,
            }),
            filled: Condvar::new(),
            drained: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, QueueState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Live sources never wait: the oldest chunk is dropped instead.
    /// Replayed sources wait for room.
    fn push(&self, chunk: Vec<f64>, live: bool, stop: &AtomicBool) {
        let mut s = self.lock();
        while s.chunks.len() >= self.capacity {
            if live {
                s.chunks.pop_front();
                s.dropped += 1;
                warn!("audio queue overflow, dropped {} chunk(s) so far", s.dropped);
                break;
            }
            if stop.load(Ordering::Relaxed) {
                return;
            }
            s = self
                .drained
                .wait_timeout(s, Duration::from_millis(50))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        s.chunks.push_back(chunk);
        self.filled.notify_one();
    }

    fn close(&self, error: Option<AudioError>) {
        let mut s = self.lock();
        s.closed = true;
        s.error = error;
        self.filled.notify_all();
    }

    /// Next chunk, or `None` once the producer has finished and the queue is
    /// empty.
    fn pop(&self) -> Result<Option<Vec<f64>>, AudioError> {
        let mut s = self.lock();
        loop {
            if let Some(c) = s.chunks.pop_front() {
                self.drained.notify_one();
                return Ok(Some(c));
            }
            if s.closed {
                return match s.error.take() {
                    Some(e) => Err(e),
                    None => Ok(None),
                };
            }
            s = self.filled.wait(s).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn dropped(&self) -> u64 {
        self.lock().dropped
    }
}

fn produce(source: &mut dyn CaptureSource, queue: &ChunkQueue, chunk_len: usize, live: bool, stop: &AtomicBool) {
    let mut buf = vec![0.0; chunk_len];
    while !stop.load(Ordering::Relaxed) {
        match source.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => queue.push(buf[..n].to_vec(), live, stop),
            Err(e) => {
                queue.close(Some(e));
                return;
            }
        }
    }
    queue.close(None);
}

fn run_command(word: String, command: String, timeout: Duration) -> CommandRun {
    let mut run = CommandRun {
        word,
        command,
        status: CommandStatus::Exited(None),
        stdout: String::new(),
        stderr: String::new(),
    };
    let mut process = Process::new("sh");
    process
        .arg("-c")
        .arg(&run.command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    process.process_group(0);
    let mut child = match process.spawn() {
        Ok(c) => c,
        Err(e) => {
            warn!("'{}': cannot run `{}`: {e}", run.word, run.command);
            run.status = CommandStatus::SpawnFailed(e.to_string());
            return run;
        }
    };
    let drain = |pipe: Option<Box<dyn Read + Send>>| {
        thread::spawn(move || {
            let mut text = String::new();
            if let Some(mut p) = pipe {
                let mut bytes = Vec::new();
                let _ = p.read_to_end(&mut bytes);
                text = String::from_utf8_lossy(&bytes).into_owned();
            }
            text
        })
    };
    let out = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let err = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let deadline = Instant::now() + timeout;
    run.status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break CommandStatus::Exited(status.code()),
            Ok(None) if Instant::now() >= deadline => {
                kill_tree(&mut child);
                break CommandStatus::TimedOut;
            }
            Ok(None) => thread::sleep(Duration::from_millis(20)),
            Err(e) => break CommandStatus::SpawnFailed(e.to_string()),
        }
    };
    run.stdout = out.join().unwrap_or_default();
    run.stderr = err.join().unwrap_or_default();
    match &run.status {
        CommandStatus::Exited(Some(0)) => info!("'{}': `{}` finished", run.word, run.command),
        CommandStatus::TimedOut => warn!("'{}': `{}` killed after {timeout:?}", run.word, run.command),
        s => warn!("'{}': `{}` ended with {s:?}", run.word, run.command),
    }
    if !run.stdout.trim().is_empty() {
        info!("'{}' stdout: {}", run.word, run.stdout.trim_end());
    }
    if !run.stderr.trim().is_empty() {
        info!("'{}' stderr: {}", run.word, run.stderr.trim_end());
    }
    run
}

/// Kills the command and anything it started, which may still hold its
/// output pipes.
fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    let _ = Process::new("kill")
        .args(["-KILL", "--", &format!("-{}", child.id())])
        .stderr(Stdio::null())
        .status();
    let _ = child.kill();
    let _ = child.wait();
}

struct Consumer<'a> {
    registry: &'a ModelRegistry,
    table: &'a CommandTable,
    config: &'a ListenConfig,
    rate: u32,
    window: Vec<f64>,
    /// Absolute index of `window[0]` in the stream.
    window_start: usize,
    heard: Vec<Heard>,
    workers: Vec<JoinHandle<CommandRun>>,
}

enum Step {
    Continue,
    Quit,
}

impl Consumer<'_> {
    fn samples(&self, seconds: f64) -> usize {
        (seconds * f64::from(self.rate)).round() as usize
    }

    fn advance(&mut self, n: usize) {
        let n = n.min(self.window.len());
        self.window.drain(..n);
        self.window_start += n;
    }

    fn push(&mut self, chunk: &[f64]) {
        self.window.extend_from_slice(chunk);
        let max = self.samples(self.config.window_s);
        if self.window.len() > max {
            self.advance(self.window.len() - max);
        }
    }

    fn scan(&mut self, end_of_stream: bool) -> Result<Step, ListenError> {
        if self.window.is_empty() {
            return Ok(Step::Continue);
        }
        let clip = AudioClip::new(self.window.clone(), self.rate)?;
        let segments = match detect_word_boundaries(&clip, &self.config.endpoint) {
            Ok(s) => s,
            Err(EndpointError::CalibrationNotSilent { .. }) => {
                debug!(
                    "window at {:.2} s does not start in silence, skipping a hop",
                    self.time(0)
                );
                self.advance(self.samples(self.config.hop_s));
                return Ok(Step::Continue);
            }
            Err(EndpointError::ClipTooShort { .. }) => return Ok(Step::Continue),
            Err(e) => return Err(e.into()),
        };
        let trailing = self.samples(self.config.trailing_ms / 1000.0);
        let mut consumed = 0;
        for seg in segments {
            if !end_of_stream && seg.end_sample + trailing > self.window.len() {
                break;
            }
            let step = self.handle(&clip, seg.start_sample, seg.end_sample)?;
            consumed = seg.end_sample;
            if let Step::Quit = step {
                return Ok(Step::Quit);
            }
        }
        self.advance(consumed);
        Ok(Step::Continue)
    }

    fn time(&self, index: usize) -> f64 {
        (self.window_start + index) as f64 / f64::from(self.rate)
    }

    fn handle(&mut self, clip: &AudioClip, start: usize, end: usize) -> Result<Step, ListenError> {
        let params = self.registry.feature_params().expect("registry checked non-empty");
        let segment = clip.slice(start, end)?;
        let features = extract_features(&segment, params)?;
        let result = recognize(self.registry, &features, self.config.rejection_threshold)?;
        let (start_s, end_s) = (self.time(start), self.time(end));
        let mut step = Step::Continue;
        match &result.decision {
            Decision::Rejected => {
                let best = result
                    .per_frame_scores()
                    .first()
                    .map(|(_, s)| *s)
                    .unwrap_or(f64::NEG_INFINITY);
                info!("{start_s:.2}-{end_s:.2} s: no match (best {best:.2} per frame), listening again");
            }
            Decision::Accepted { word, log_likelihood } => {
                let per_frame = log_likelihood / result.frames as f64;
                info!("{start_s:.2}-{end_s:.2} s: heard '{word}' ({per_frame:.2} per frame)");
                if self.table.is_quit(word) {
                    step = Step::Quit;
                } else if let Some(command) = self.table.command_for(word) {
                    let (word, command) = (word.clone(), command.to_string());
                    let timeout = self.config.command_timeout;
                    self.workers
                        .push(thread::spawn(move || run_command(word, command, timeout)));
                } else {
                    info!("no command bound to '{word}'");
                }
            }
        }
        self.heard.push(Heard { start_s, end_s, result });
        Ok(step)
    }
}

/// Runs the listen loop until the quit word is recognized or the source
/// ends. `live` selects drop-oldest queueing (device capture) over waiting
/// for the consumer (replayed files).
pub fn listen(
    source: Box<dyn CaptureSource>,
    live: bool,
    registry: &ModelRegistry,
    table: &CommandTable,
    config: &ListenConfig,
) -> Result<ListenOutcome, ListenError> {
    if registry.is_empty() {
        return Err(HmmError::EmptyRegistry.into());
    }
    if !registry.words().any(|w| table.is_quit(w)) {
        warn!(
            "quit word '{}' has no trained model; stop with Ctrl-C",
            table.quit_word()
        );
    }
    for word in table.words() {
        if registry.get(word).is_none() {
            warn!("'{word}' is bound to a command but has no trained model");
        }
    }
    let rate = source.sample_rate_hz();
    let chunk_len = ((config.chunk_ms / 1000.0 * f64::from(rate)).round() as usize).max(1);
    let queue = ChunkQueue::new(config.queue_chunks);
    let stop = AtomicBool::new(false);
    let mut consumer = Consumer {
        registry,
        table,
        config,
        rate,
        window: Vec::new(),
        window_start: 0,
        heard: Vec::new(),
        workers: Vec::new(),
    };
    let hop = consumer.samples(config.hop_s).max(1);

    let result = thread::scope(|scope| {
        let mut source = source;
        let (queue, stop) = (&queue, &stop);
        scope.spawn(move || produce(source.as_mut(), queue, chunk_len, live, stop));
        let mut run = || -> Result<StopReason, ListenError> {
            let mut pending = 0;
            while let Some(chunk) = queue.pop()? {
                pending += chunk.len();
                consumer.push(&chunk);
                if pending >= hop {
                    pending = 0;
                    if let Step::Quit = consumer.scan(false)? {
                        return Ok(StopReason::QuitWord);
                    }
                }
            }
            match consumer.scan(true)? {
                Step::Quit => Ok(StopReason::QuitWord),
                Step::Continue => Ok(StopReason::EndOfStream),
            }
        };
        let r = run();
        stop.store(true, Ordering::Relaxed);
        // unblock a producer waiting for room
        while let Ok(Some(_)) = queue.pop() {}
        r
    });

    let commands = consumer.workers.drain(..).filter_map(|h| h.join().ok()).collect();
    let dropped_chunks = queue.dropped();
    if dropped_chunks > 0 {
        warn!("{dropped_chunks} audio chunk(s) were dropped because processing fell behind");
    }
    Ok(ListenOutcome {
        stop: result?,
        heard: consumer.heard,
        commands,
        dropped_chunks,
    })
}
