//! Mono PCM audio: the `AudioClip` type, 16-bit RIFF/WAVE load and save, and
//! capture sources (sound device or injected file).
//!
//! Samples are stored as `f64` in `[-1, 1]`, obtained by dividing the signed
//! 16-bit value by 32768. Saving quantizes with `clamp(round(s * 32768))`, so
//! `load -> save -> load` is the identity on sample sequences.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::{LazyLock, Mutex};

use thiserror::Error;

/// Sample rates accepted anywhere in the system.
pub const SUPPORTED_RATES: [u32; 5] = [8000, 16000, 22050, 44100, 48000];

/// Rate used for live capture.
pub const CAPTURE_RATE: u32 = 16000;

/// Upper bound for a single `record` call, in seconds.
pub const MAX_RECORD_SECONDS: f64 = 60.0;

const PCM_SCALE: f64 = 32768.0;
const WAVE_FORMAT_PCM: u16 = 1;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV file: {0}")]
    Malformed(String),
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("no capture device available: {0}")]
    NoDevice(String),
    #[error("capture failed: {0}")]
    CaptureFailure(String),
    #[error("I/O failure: {0}")]
    IoFailure(#[from] io::Error),
}

/// A non-empty mono clip with samples in `[-1, 1]` at a supported rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if !SUPPORTED_RATES.contains(&sample_rate_hz) {
            return Err(AudioError::InvalidClip(format!(
                "sample rate {sample_rate_hz} Hz is not one of {SUPPORTED_RATES:?}"
            )));
        }
        if samples.is_empty() {
            return Err(AudioError::InvalidClip("clip has no samples".into()));
        }
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| !(-1.0..=1.0).contains(*s)) {
            return Err(AudioError::InvalidClip(format!(
                "sample {i} = {s} lies outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_pcm16(pcm: &[i16], sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(pcm.iter().map(|&v| f64::from(v) / PCM_SCALE).collect(), sample_rate_hz)
    }

    /// Quantized 16-bit representation used when writing files.
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples.iter().map(|&s| quantize(s)).collect()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Sub-clip over `start..end` sample indices.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, AudioError> {
        if start >= end || end > self.samples.len() {
            return Err(AudioError::InvalidClip(format!(
                "slice {start}..{end} is empty or exceeds clip length {}",
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Multiplies every sample by `factor`; fails if the result leaves `[-1, 1]`.
    pub fn scaled(&self, factor: f64) -> Result<Self, AudioError> {
        Self::new(self.samples.iter().map(|s| s * factor).collect(), self.sample_rate_hz)
    }
}

fn quantize(s: f64) -> i16 {
    (s * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => AudioError::NotFound(path.to_path_buf()),
        _ => AudioError::IoFailure(e),
    })?;
    decode_wav(&bytes)
}

/// Parses an in-memory RIFF/WAVE image. Unknown chunks are skipped; `fmt `
/// must precede `data`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Malformed("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut sample_rate = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => sample_rate = Some(parse_fmt(body)?),
            b"data" => {
                let rate = sample_rate.ok_or_else(|| AudioError::Malformed("data chunk precedes fmt chunk".into()))?;
                let pcm: Vec<i16> = body.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
                if pcm.is_empty() {
                    return Err(AudioError::InvalidClip("data chunk holds no samples".into()));
                }
                return AudioClip::from_pcm16(&pcm, rate);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    Err(AudioError::Malformed(if sample_rate.is_some() {
        "no data chunk".into()
    } else {
        "no fmt chunk".into()
    }))
}

fn parse_fmt(body: &[u8]) -> Result<u32, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Malformed(format!(
            "fmt chunk is {} bytes, expected at least 16",
            body.len()
        )));
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let format_tag = u16_at(0);
    let channels = u16_at(2);
    let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let bits = u16_at(14);
    if format_tag != WAVE_FORMAT_PCM {
        return Err(AudioError::UnsupportedFormat(format!(
            "encoding tag {format_tag:#06x} is not PCM"
        )));
    }
    if channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{channels} channels (only mono is supported)"
        )));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "bit depth {bits} (only 16-bit is supported)"
        )));
    }
    if !SUPPORTED_RATES.contains(&rate) {
        return Err(AudioError::UnsupportedFormat(format!(
            "sample rate {rate} Hz (supported: {SUPPORTED_RATES:?})"
        )));
    }
    Ok(rate)
}

/// Canonical 44-byte-header PCM16 mono image of `clip`.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let pcm = clip.to_pcm16();
    let data_len = (pcm.len() * 2) as u32;
    let rate = clip.sample_rate_hz;
    let mut out = Vec::with_capacity(44 + pcm.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for v in pcm {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    fs::write(path, encode_wav(clip))?;
    Ok(())
}

/// A pull-based stream of mono samples.
pub trait CaptureSource: Send {
    fn sample_rate_hz(&self) -> u32;

    /// Fills `buf` with up to `buf.len()` samples. `Ok(0)` signals end of
    /// stream.
    fn read(&mut self, buf: &mut [f64]) -> Result<usize, AudioError>;
}

/// Replays a clip as if it were captured live; used for hardware-free runs.
#[derive(Debug, Clone)]
pub struct FileSource {
    clip: AudioClip,
    pos: usize,
}

impl FileSource {
    pub fn new(clip: AudioClip) -> Self {
        Self { clip, pos: 0 }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        Ok(Self::new(load_wav(path)?))
    }
}

impl CaptureSource for FileSource {
    fn sample_rate_hz(&self) -> u32 {
        self.clip.sample_rate_hz
    }

    fn read(&mut self, buf: &mut [f64]) -> Result<usize, AudioError> {
        let rest = &self.clip.samples[self.pos..];
        let n = rest.len().min(buf.len());
        buf[..n].copy_from_slice(&rest[..n]);
        self.pos += n;
        Ok(n)
    }
}

static BUSY_DEVICES: LazyLock<Mutex<BTreeSet<String>>> = LazyLock::new(Default::default);

struct DeviceClaim(String);

impl DeviceClaim {
    fn acquire(name: &str) -> Result<Self, AudioError> {
        let mut busy = BUSY_DEVICES.lock().unwrap_or_else(|e| e.into_inner());
        if !busy.insert(name.to_string()) {
            return Err(AudioError::CaptureFailure(format!(
                "device '{name}' is already capturing"
            )));
        }
        Ok(Self(name.to_string()))
    }
}

impl Drop for DeviceClaim {
    fn drop(&mut self) {
        BUSY_DEVICES.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.0);
    }
}

/// Live capture through the OS audio stack (`arecord`), which performs any
/// downmixing and resampling to the requested mono rate.
pub struct DeviceSource {
    child: Child,
    stdout: ChildStdout,
    rate: u32,
    pending: Vec<u8>,
    _claim: DeviceClaim,
}

impl DeviceSource {
    pub fn open(device: Option<&str>, rate: u32) -> Result<Self, AudioError> {
        if !SUPPORTED_RATES.contains(&rate) {
            return Err(AudioError::CaptureFailure(format!(
                "unsupported capture rate {rate} Hz"
            )));
        }
        let name = device.unwrap_or("default");
        let claim = DeviceClaim::acquire(name)?;
        let mut cmd = Command::new("arecord");
        cmd.args(["-q", "-t", "raw", "-f", "S16_LE", "-c", "1", "-r"])
            .arg(rate.to_string())
            .args(["-D", name])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => AudioError::NoDevice("no capture backend (arecord) installed".into()),
            _ => AudioError::NoDevice(format!("cannot start capture on '{name}': {e}")),
        })?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| AudioError::CaptureFailure("capture pipe unavailable".into()))?;
        Ok(Self {
            child,
            stdout,
            rate,
            pending: Vec::new(),
            _claim: claim,
        })
    }
}

impl CaptureSource for DeviceSource {
    fn sample_rate_hz(&self) -> u32 {
        self.rate
    }

    fn read(&mut self, buf: &mut [f64]) -> Result<usize, AudioError> {
        let mut raw = vec![0u8; buf.len() * 2];
        let carried = self.pending.len();
        raw[..carried].copy_from_slice(&self.pending);
        self.pending.clear();
        let mut filled = carried;
        while filled < 2 {
            let n = self.stdout.read(&mut raw[filled..])?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled < 2 {
            return match self.child.try_wait()? {
                Some(status) if !status.success() => {
                    Err(AudioError::NoDevice(format!("capture process exited with {status}")))
                }
                _ => Ok(0),
            };
        }
        let whole = filled / 2 * 2;
        self.pending.extend_from_slice(&raw[whole..filled]);
        for (dst, b) in buf.iter_mut().zip(raw[..whole].chunks_exact(2)) {
            *dst = f64::from(i16::from_le_bytes([b[0], b[1]])) / PCM_SCALE;
        }
        Ok(whole / 2)
    }
}

impl Drop for DeviceSource {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Captures at most `max_duration_s` seconds of 16 kHz mono audio from a
/// sound device (`None` = system default).
pub fn record(max_duration_s: f64, device: Option<&str>) -> Result<AudioClip, AudioError> {
    check_duration(max_duration_s)?;
    let mut source = DeviceSource::open(device, CAPTURE_RATE)?;
    record_from(&mut source, max_duration_s)
}

/// Reads from `source` until `max_duration_s` seconds are collected or the
/// stream ends.
pub fn record_from(source: &mut dyn CaptureSource, max_duration_s: f64) -> Result<AudioClip, AudioError> {
    check_duration(max_duration_s)?;
    let rate = source.sample_rate_hz();
    let limit = (max_duration_s * f64::from(rate)).floor() as usize;
    let mut samples = Vec::with_capacity(limit);
    let mut buf = vec![0.0; (rate as usize / 10).max(1)];
    while samples.len() < limit {
        let want = (limit - samples.len()).min(buf.len());
        let n = source.read(&mut buf[..want])?;
        if n == 0 {
            break;
        }
        samples.extend_from_slice(&buf[..n]);
    }
    if samples.is_empty() {
        return Err(AudioError::CaptureFailure("no audio captured".into()));
    }
    AudioClip::new(samples, rate)
}

fn check_duration(max_duration_s: f64) -> Result<(), AudioError> {
    if !(max_duration_s > 0.0 && max_duration_s <= MAX_RECORD_SECONDS) {
        return Err(AudioError::CaptureFailure(format!(
            "duration {max_duration_s} s outside (0, {MAX_RECORD_SECONDS}]"
        )));
    }
    Ok(())
}
