//! Word endpointing from short-time energy and zero-crossing rate.
//!
//! Thresholds are calibrated from the leading `calibration_ms` of the clip,
//! which is assumed to be silence. The assumption is rejected when that
//! window holds more than 10% of the peak frame energy while also standing
//! `energy_factor_high` times above the clip's 10th-percentile frame energy.
//!
//! Energy opens a region (`>= ITU`) and widens it to the surrounding frames
//! `>= ITL`; runs of high-ZCR frames on either side are then absorbed to
//! catch unvoiced onsets and codas.

use thiserror::Error;

use crate::audio::{AudioClip, AudioError};

/// Calibration energy above this fraction of the clip's peak frame energy
/// means the leading window was not silence.
pub const CALIBRATION_PEAK_RATIO: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("clip of {got} samples is too short (need at least {needed})")]
    ClipTooShort { needed: usize, got: usize },
    #[error("leading calibration window is not silent ({calibration:.3e} vs peak {peak:.3e})")]
    CalibrationNotSilent { calibration: f64, peak: f64 },
    #[error("invalid endpoint parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointParams {
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    pub calibration_ms: f64,
    /// ITU as a multiple of the mean calibration energy.
    pub energy_factor_high: f64,
    /// ITL as a multiple of the mean calibration energy.
    pub energy_factor_low: f64,
    /// IZCT = mean + `zcr_std_factor` * stddev of calibration ZCR.
    pub zcr_std_factor: f64,
    pub min_word_ms: f64,
    pub max_gap_ms: f64,
    /// Longest stretch absorbed on each side by the ZCR rule.
    pub max_zcr_extension_ms: f64,
}

impl Default for EndpointParams {
    fn default() -> Self {
        Self {
            frame_len_ms: 10.0,
            frame_shift_ms: 10.0,
            calibration_ms: 100.0,
            energy_factor_high: 4.0,
            energy_factor_low: 2.0,
            zcr_std_factor: 2.0,
            min_word_ms: 80.0,
            max_gap_ms: 150.0,
            max_zcr_extension_ms: 250.0,
        }
    }
}

impl EndpointParams {
    pub fn validate(&self) -> Result<(), EndpointError> {
        let durations = [
            ("frame_len_ms", self.frame_len_ms),
            ("frame_shift_ms", self.frame_shift_ms),
            ("calibration_ms", self.calibration_ms),
            ("min_word_ms", self.min_word_ms),
            ("max_gap_ms", self.max_gap_ms),
            ("max_zcr_extension_ms", self.max_zcr_extension_ms),
        ];
        for (name, v) in durations {
            if !(v.is_finite() && v > 0.0) {
                return Err(EndpointError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.frame_shift_ms > self.frame_len_ms {
            return Err(EndpointError::InvalidParams(
                "frame_shift_ms must not exceed frame_len_ms".into(),
            ));
        }
        if !(self.energy_factor_low > 0.0 && self.energy_factor_low <= self.energy_factor_high) {
            return Err(EndpointError::InvalidParams(
                "need 0 < energy_factor_low <= energy_factor_high".into(),
            ));
        }
        if !(self.zcr_std_factor.is_finite() && self.zcr_std_factor >= 0.0) {
            return Err(EndpointError::InvalidParams("zcr_std_factor must be >= 0".into()));
        }
        Ok(())
    }

    fn geometry(&self, rate: u32) -> Result<FrameGeometry, EndpointError> {
        self.validate()?;
        let len = ms_to_samples(self.frame_len_ms, rate);
        let shift = ms_to_samples(self.frame_shift_ms, rate);
        if len < 2 {
            return Err(EndpointError::InvalidParams(
                "frame must span at least two samples".into(),
            ));
        }
        Ok(FrameGeometry { len, shift })
    }
}

pub(crate) fn ms_to_samples(ms: f64, rate: u32) -> usize {
    ((ms * f64::from(rate) / 1000.0).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy)]
struct FrameGeometry {
    len: usize,
    shift: usize,
}

impl FrameGeometry {
    fn count(&self, total: usize) -> Result<usize, EndpointError> {
        if total < self.len {
            return Err(EndpointError::ClipTooShort {
                needed: self.len,
                got: total,
            });
        }
        Ok(1 + (total - self.len) / self.shift)
    }

    fn frames<'a>(&self, samples: &'a [f64]) -> Result<impl Iterator<Item = &'a [f64]> + 'a, EndpointError> {
        let n = self.count(samples.len())?;
        let FrameGeometry { len, shift } = *self;
        Ok((0..n).map(move |k| &samples[k * shift..k * shift + len]))
    }
}

/// A detected word: `start_sample..end_sample` (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start_sample: usize,
    pub end_sample: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }

    pub fn start_s(&self, rate: u32) -> f64 {
        self.start_sample as f64 / f64::from(rate)
    }

    pub fn end_s(&self, rate: u32) -> f64 {
        self.end_sample as f64 / f64::from(rate)
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<AudioClip, AudioError> {
        clip.slice(self.start_sample, self.end_sample)
    }
}

/// Mean squared sample value per rectangular frame.
pub fn short_time_energy(clip: &AudioClip, params: &EndpointParams) -> Result<Vec<f64>, EndpointError> {
    let geom = params.geometry(clip.sample_rate_hz())?;
    energies(clip.samples(), geom)
}

fn energies(samples: &[f64], geom: FrameGeometry) -> Result<Vec<f64>, EndpointError> {
    Ok(geom
        .frames(samples)?
        .map(|f| f.iter().map(|s| s * s).sum::<f64>() / f.len() as f64)
        .collect())
}

/// Fraction of adjacent sample pairs with opposite sign, per frame. A zero
/// sample takes the sign of the previous nonzero one; leading zeros count as
/// positive.
pub fn zero_crossing_rate(clip: &AudioClip, params: &EndpointParams) -> Result<Vec<f64>, EndpointError> {
    let geom = params.geometry(clip.sample_rate_hz())?;
    zcrs(clip.samples(), geom)
}

fn zcrs(samples: &[f64], geom: FrameGeometry) -> Result<Vec<f64>, EndpointError> {
    Ok(geom.frames(samples)?.map(frame_zcr).collect())
}

fn frame_zcr(frame: &[f64]) -> f64 {
    let mut positive = true;
    let mut crossings = 0usize;
    for (i, &s) in frame.iter().enumerate() {
        let sign = if s > 0.0 {
            true
        } else if s < 0.0 {
            false
        } else {
            positive
        };
        if i > 0 && sign != positive {
            crossings += 1;
        }
        positive = sign;
    }
    crossings as f64 / (frame.len() - 1) as f64
}

/// Inclusive frame range of a candidate word.
#[derive(Debug, Clone, Copy)]
struct FrameRun {
    first: usize,
    last: usize,
}

/// Locates word segments; the result is sorted, disjoint and every segment
/// lasts at least `min_word_ms`.
pub fn detect_word_boundaries(clip: &AudioClip, params: &EndpointParams) -> Result<Vec<Segment>, EndpointError> {
    let rate = clip.sample_rate_hz();
    let geom = params.geometry(rate)?;
    let total = clip.len();
    let cal_samples = ms_to_samples(params.calibration_ms, rate);
    let min_word = ms_to_samples(params.min_word_ms, rate);
    let needed = (cal_samples + min_word).max(geom.len);
    if total < needed {
        return Err(EndpointError::ClipTooShort { needed, got: total });
    }

    let energy = energies(clip.samples(), geom)?;
    let zcr = zcrs(clip.samples(), geom)?;

    let n_cal = energy
        .iter()
        .enumerate()
        .take_while(|(k, _)| k * geom.shift + geom.len <= cal_samples)
        .count()
        .max(1);
    let silence_energy = mean(&energy[..n_cal]);
    let peak = energy.iter().copied().fold(0.0, f64::max);
    // Stationary noise also has calibration energy close to its peak; only a
    // calibration window that stands above the clip's quiet floor is speech.
    if silence_energy > CALIBRATION_PEAK_RATIO * peak
        && silence_energy >= params.energy_factor_high * quiet_floor(&energy)
    {
        return Err(EndpointError::CalibrationNotSilent {
            calibration: silence_energy,
            peak,
        });
    }
    let itu = params.energy_factor_high * silence_energy;
    let itl = params.energy_factor_low * silence_energy;
    let zcr_mean = mean(&zcr[..n_cal]);
    let zcr_sd = (zcr[..n_cal].iter().map(|z| (z - zcr_mean).powi(2)).sum::<f64>() / n_cal as f64).sqrt();
    let izct = zcr_mean + params.zcr_std_factor * zcr_sd;

    // Strictly positive values are required too, so digital silence never
    // qualifies when the thresholds collapse to zero.
    let above = |v: f64, t: f64| v >= t && v > 0.0;

    let mut runs: Vec<FrameRun> = Vec::new();
    let mut k = 0;
    while k < energy.len() {
        if !above(energy[k], itl) {
            k += 1;
            continue;
        }
        let first = k;
        let mut has_peak = false;
        while k < energy.len() && above(energy[k], itl) {
            has_peak |= above(energy[k], itu);
            k += 1;
        }
        if has_peak {
            runs.push(FrameRun { first, last: k - 1 });
        }
    }

    let max_ext = (params.max_zcr_extension_ms / params.frame_shift_ms).round() as usize;
    for i in 0..runs.len() {
        let floor = if i == 0 { 0 } else { runs[i - 1].last + 1 };
        let mut ext = 0;
        while ext < max_ext && runs[i].first > floor && above(zcr[runs[i].first - 1], izct) {
            runs[i].first -= 1;
            ext += 1;
        }
        let ceil = runs.get(i + 1).map_or(energy.len() - 1, |r| r.first - 1);
        ext = 0;
        while ext < max_ext && runs[i].last < ceil && above(zcr[runs[i].last + 1], izct) {
            runs[i].last += 1;
            ext += 1;
        }
    }

    let max_gap = ms_to_samples(params.max_gap_ms, rate);
    let mut segments: Vec<Segment> = Vec::new();
    for run in runs {
        let seg = Segment {
            start_sample: run.first * geom.shift,
            end_sample: (run.last * geom.shift + geom.len).min(total),
        };
        match segments.last_mut() {
            Some(prev) if seg.start_sample < prev.end_sample + max_gap => {
                prev.end_sample = prev.end_sample.max(seg.end_sample);
            }
            _ => segments.push(seg),
        }
    }
    segments.retain(|s| s.len() >= min_word);
    Ok(segments)
}

/// 10th-percentile frame energy.
fn quiet_floor(energy: &[f64]) -> f64 {
    let mut sorted = energy.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 10]
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// The longest detected segment (earliest on ties), if any.
pub fn longest_segment(segments: &[Segment]) -> Option<Segment> {
    segments
        .iter()
        .copied()
        .reduce(|best, s| if s.len() > best.len() { s } else { best })
}
