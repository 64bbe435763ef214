//! Synthetic "spoken words": sequences of multi-tone segments with jittered
//! pitch, timing and level, embedded in white noise. Used to exercise the
//! whole pipeline without recordings.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::AudioClip;

/// One steady stretch of a synthetic word.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneSegment {
    pub freqs_hz: Vec<f64>,
    pub duration_s: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordPattern {
    pub name: String,
    pub segments: Vec<ToneSegment>,
}

/// How a pattern is turned into one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub sample_rate_hz: u32,
    /// Leading and trailing silence, drawn uniformly from these ranges.
    pub lead_s: (f64, f64),
    pub trail_s: (f64, f64),
    /// Peak amplitude of the word part, drawn uniformly.
    pub level: (f64, f64),
    /// Word-to-noise power ratio.
    pub snr_db: f64,
    /// Relative jitter of segment durations and frequencies.
    pub duration_jitter: f64,
    pub pitch_jitter: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16000,
            lead_s: (0.25, 0.4),
            trail_s: (0.25, 0.4),
            level: (0.3, 0.7),
            snr_db: 20.0,
            duration_jitter: 0.15,
            pitch_jitter: 0.03,
        }
    }
}

/// A rendered utterance with its ground-truth word span in samples.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub clip: AudioClip,
    pub word_start: usize,
    pub word_end: usize,
    /// Standard deviation of the added noise.
    pub noise_sd: f64,
}

const FADE_S: f64 = 0.008;

/// `count` distinct three-segment patterns named `word0`, `word1`, ...
pub fn vocabulary(count: usize, rng: &mut impl Rng) -> Vec<WordPattern> {
    (0..count)
        .map(|k| WordPattern {
            name: format!("word{k}"),
            segments: (0..3)
                .map(|_| ToneSegment {
                    freqs_hz: (0..2).map(|_| rng.random_range(250.0..3500.0)).collect(),
                    duration_s: rng.random_range(0.12..0.22),
                    gain: rng.random_range(0.5..1.0),
                })
                .collect(),
        })
        .collect()
}

/// Word part only, peak-normalized to 1.
fn render_word_samples(pattern: &WordPattern, opts: &RenderOptions, rng: &mut impl Rng) -> Vec<f64> {
    let rate = f64::from(opts.sample_rate_hz);
    let fade = (FADE_S * rate) as usize;
    let mut out = Vec::new();
    for seg in &pattern.segments {
        let dur = seg.duration_s * (1.0 + rng.random_range(-opts.duration_jitter..=opts.duration_jitter));
        let n = (dur * rate) as usize;
        let tones: Vec<(f64, f64)> = seg
            .freqs_hz
            .iter()
            .map(|f| {
                let f = f * (1.0 + rng.random_range(-opts.pitch_jitter..=opts.pitch_jitter));
                (f, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let gain = seg.gain * rng.random_range(0.8..1.2) / tones.len() as f64;
        for i in 0..n {
            let t = i as f64 / rate;
            let env = if i < fade {
                0.5 - 0.5 * (PI * i as f64 / fade as f64).cos()
            } else if i + fade >= n {
                0.5 - 0.5 * (PI * (n - 1 - i) as f64 / fade as f64).cos()
            } else {
                1.0
            };
            let s: f64 = tones.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
            out.push(gain * env * s);
        }
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(f64::MIN_POSITIVE);
    out.iter_mut().for_each(|s| *s /= peak);
    out
}

/// Noise + word + noise, with noise at `snr_db` below the word's power.
pub fn render_utterance(pattern: &WordPattern, opts: &RenderOptions, rng: &mut impl Rng) -> Utterance {
    let rate = f64::from(opts.sample_rate_hz);
    let level = rng.random_range(opts.level.0..=opts.level.1);
    let word: Vec<f64> = render_word_samples(pattern, opts, rng)
        .into_iter()
        .map(|s| s * level)
        .collect();
    let power = word.iter().map(|s| s * s).sum::<f64>() / word.len() as f64;
    let noise_sd = (power / 10f64.powf(opts.snr_db / 10.0)).sqrt();
    let lead = (rng.random_range(opts.lead_s.0..=opts.lead_s.1) * rate) as usize;
    let trail = (rng.random_range(opts.trail_s.0..=opts.trail_s.1) * rate) as usize;
    let noise = Normal::new(0.0, noise_sd).expect("finite noise level");
    let mut samples = vec![0.0; lead];
    samples.extend_from_slice(&word);
    samples.resize(lead + word.len() + trail, 0.0);
    for s in &mut samples {
        *s = (*s + noise.sample(rng)).clamp(-1.0, 1.0);
    }
    Utterance {
        clip: AudioClip::new(samples, opts.sample_rate_hz).expect("samples clamped to range"),
        word_start: lead,
        word_end: lead + word.len(),
        noise_sd,
    }
}

/// Gaussian white noise of standard deviation `sd`.
pub fn white_noise(duration_s: f64, sd: f64, sample_rate_hz: u32, rng: &mut impl Rng) -> AudioClip {
    let n = ((duration_s * f64::from(sample_rate_hz)) as usize).max(1);
    let noise = Normal::new(0.0, sd).expect("finite noise level");
    let samples = (0..n).map(|_| noise.sample(rng).clamp(-1.0, 1.0)).collect();
    AudioClip::new(samples, sample_rate_hz).expect("samples clamped to range")
}

/// Concatenates clips of equal rate.
pub fn concat(clips: &[AudioClip]) -> AudioClip {
    let rate = clips[0].sample_rate_hz();
    let samples = clips.iter().flat_map(|c| c.samples().iter().copied()).collect();
    AudioClip::new(samples, rate).expect("concatenation of valid clips")
}
