//! MFCC front end: pre-emphasis, Hamming-windowed frames, a triangular mel
//! filterbank over the zero-padded power spectrum, orthonormal DCT-II, and a
//! per-utterance normalized log-energy appended to every vector.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::endpoint::ms_to_samples;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip of {got} samples is too short for one {needed}-sample frame")]
    ClipTooShort { needed: usize, got: usize },
    #[error("invalid feature parameters: {0}")]
    InvalidParams(String),
    #[error("feature sequence must not be empty")]
    EmptySequence,
    #[error("feature vector {index} has length {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("feature vector {index} contains a non-finite value")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    pub preemphasis: f64,
    pub n_mel_filters: usize,
    /// Number of cepstra kept, c1..=c_n (c0 is dropped).
    pub n_cepstra: usize,
    pub energy_floor: f64,
    pub fmin_hz: f64,
    /// `None` means the Nyquist frequency of the clip.
    pub fmax_hz: Option<f64>,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            frame_len_ms: 25.0,
            frame_shift_ms: 10.0,
            preemphasis: 0.97,
            n_mel_filters: 26,
            n_cepstra: 12,
            energy_floor: 1e-10,
            fmin_hz: 0.0,
            fmax_hz: None,
        }
    }
}

impl FeatureParams {
    /// Length of every emitted feature vector.
    pub fn dim(&self) -> usize {
        self.n_cepstra + 1
    }

    pub fn fmax_for(&self, sample_rate_hz: u32) -> f64 {
        self.fmax_hz.unwrap_or(f64::from(sample_rate_hz) / 2.0)
    }

    pub fn frame_len(&self, sample_rate_hz: u32) -> usize {
        ms_to_samples(self.frame_len_ms, sample_rate_hz)
    }

    pub fn frame_shift(&self, sample_rate_hz: u32) -> usize {
        ms_to_samples(self.frame_shift_ms, sample_rate_hz)
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidParams(m));
        if !(self.frame_len_ms > 0.0 && self.frame_shift_ms > 0.0) {
            return bad("frame length and shift must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad(format!("preemphasis {} outside [0, 1)", self.preemphasis));
        }
        if !(self.n_cepstra >= 1 && self.n_cepstra < self.n_mel_filters) {
            return bad(format!(
                "need 1 <= n_cepstra ({}) < n_mel_filters ({})",
                self.n_cepstra, self.n_mel_filters
            ));
        }
        if self.energy_floor.is_nan() || self.energy_floor <= 0.0 {
            return bad("energy_floor must be > 0".into());
        }
        let fmax = self.fmax_for(sample_rate_hz);
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax && fmax <= f64::from(sample_rate_hz) / 2.0) {
            return bad(format!("need 0 <= fmin ({}) < fmax ({fmax}) <= Nyquist", self.fmin_hz));
        }
        if self.frame_len(sample_rate_hz) < 2 {
            return bad("frame must span at least two samples".into());
        }
        Ok(())
    }
}

/// One observation: `n_cepstra` MFCCs followed by the normalized log-energy.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// The observation sequence of one utterance: non-empty, uniform length,
/// finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    vectors: Vec<FeatureVector>,
    frame_shift_ms: f64,
}

impl FeatureSequence {
    pub fn new(vectors: Vec<FeatureVector>, frame_shift_ms: f64) -> Result<Self, FeatureError> {
        let dim = vectors.first().ok_or(FeatureError::EmptySequence)?.len();
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(FeatureError::DimensionMismatch {
                    index,
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::NonFinite { index });
            }
        }
        Ok(Self {
            vectors,
            frame_shift_ms,
        })
    }

    /// Builds a sequence from raw rows with the default 10 ms shift.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, FeatureError> {
        Self::new(rows.into_iter().map(FeatureVector).collect(), 10.0)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    /// Always false for a constructed sequence.
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.iter().map(|v| &v[..])
    }
}

impl fmt::Display for FeatureSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} frames x {} dims", self.len(), self.dim())
    }
}

/// Hamming window `0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn frame_count(total: usize, len: usize, shift: usize) -> Result<usize, FeatureError> {
    if total < len {
        return Err(FeatureError::ClipTooShort {
            needed: len,
            got: total,
        });
    }
    Ok(1 + (total - len) / shift)
}

fn preemphasize(samples: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    out.push(samples[0]);
    out.extend(samples.windows(2).map(|w| w[1] - coeff * w[0]));
    out
}

/// Pre-emphasized, Hamming-windowed frames of `clip`.
pub fn frame_signal(clip: &AudioClip, params: &FeatureParams) -> Result<Vec<Vec<f64>>, FeatureError> {
    let rate = clip.sample_rate_hz();
    params.validate(rate)?;
    let len = params.frame_len(rate);
    let shift = params.frame_shift(rate);
    let n = frame_count(clip.len(), len, shift)?;
    let emphasized = preemphasize(clip.samples(), params.preemphasis);
    let window = hamming(len);
    Ok((0..n)
        .map(|k| {
            emphasized[k * shift..k * shift + len]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect())
}

/// Precomputed FFT plan, filterbank and DCT basis for one (params, rate)
/// pair.
pub struct MfccExtractor {
    params: FeatureParams,
    sample_rate_hz: u32,
    frame_len: usize,
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    /// Per filter: first bin index and its weights.
    filters: Vec<(usize, Vec<f64>)>,
    /// Rows c1..=c_n of the orthonormal DCT-II.
    dct: Vec<Vec<f64>>,
}

impl fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("params", &self.params)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .field("fft_len", &self.fft_len)
            .finish()
    }
}

impl MfccExtractor {
    pub fn new(params: &FeatureParams, sample_rate_hz: u32) -> Result<Self, FeatureError> {
        params.validate(sample_rate_hz)?;
        let frame_len = params.frame_len(sample_rate_hz);
        let fft_len = frame_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let filters = mel_filterbank(
            params.n_mel_filters,
            fft_len,
            sample_rate_hz,
            params.fmin_hz,
            params.fmax_for(sample_rate_hz),
        );
        let m = params.n_mel_filters;
        let scale = (2.0 / m as f64).sqrt();
        let dct = (1..=params.n_cepstra)
            .map(|k| {
                (0..m)
                    .map(|j| scale * (PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
                    .collect()
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            sample_rate_hz,
            frame_len,
            fft,
            fft_len,
            filters,
            dct,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// MFCCs c1..=c_n of one windowed frame.
    pub fn compute(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_len)
            .collect();
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..=self.fft_len / 2].iter().map(|c| c.norm_sqr()).collect();
        let mut log_mel: Vec<f64> = self
            .filters
            .iter()
            .map(|(first, weights)| {
                let out: f64 = weights.iter().zip(&power[*first..]).map(|(w, p)| w * p).sum();
                out.max(self.params.energy_floor).ln()
            })
            .collect();
        // rows c1.. are orthogonal to constants; removing the offset makes that exact
        let offset = log_mel[0];
        log_mel.iter_mut().for_each(|y| *y -= offset);
        self.dct
            .iter()
            .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Triangular filters with corners equally spaced on the mel scale; weights
/// are evaluated at each bin's exact frequency `k * rate / fft_len`.
fn mel_filterbank(
    n_filters: usize,
    fft_len: usize,
    sample_rate_hz: u32,
    fmin: f64,
    fmax: f64,
) -> Vec<(usize, Vec<f64>)> {
    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let corners: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate_hz) / fft_len as f64;
    let n_bins = fft_len / 2 + 1;
    corners
        .windows(3)
        .map(|c| {
            let (lo, mid, hi) = (c[0], c[1], c[2]);
            let weights: Vec<(usize, f64)> = (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f >= lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f <= hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            match weights.first() {
                Some(&(first, _)) => {
                    let last = weights.last().unwrap().0;
                    let mut dense = vec![0.0; last - first + 1];
                    for (k, w) in weights {
                        dense[k - first] = w;
                    }
                    (first, dense)
                }
                // filter narrower than one bin: contributes only the floor
                None => (0, Vec::new()),
            }
        })
        .collect()
}

/// MFCCs of a single windowed frame. Builds a fresh extractor; prefer
/// `MfccExtractor` for repeated use.
pub fn mfcc(frame: &[f64], params: &FeatureParams, sample_rate_hz: u32) -> Result<Vec<f64>, FeatureError> {
    let ex = MfccExtractor::new(params, sample_rate_hz)?;
    if frame.len() != ex.frame_len {
        return Err(FeatureError::InvalidParams(format!(
            "frame has {} samples, parameters imply {}",
            frame.len(),
            ex.frame_len
        )));
    }
    Ok(ex.compute(frame))
}

/// Full observation sequence for a clip or segment.
///
/// The energy term is `ln max(E_t, floor) - max_u ln max(E_u, floor)` where
/// `E_t` is the mean square of the raw frame samples, so the loudest frame
/// scores exactly 0.
pub fn extract_features(clip: &AudioClip, params: &FeatureParams) -> Result<FeatureSequence, FeatureError> {
    let rate = clip.sample_rate_hz();
    let ex = MfccExtractor::new(params, rate)?;
    let frames = frame_signal(clip, params)?;
    let len = ex.frame_len;
    let shift = params.frame_shift(rate);
    let samples = clip.samples();
    let log_energy: Vec<f64> = (0..frames.len())
        .map(|k| {
            let raw = &samples[k * shift..k * shift + len];
            let e = raw.iter().map(|s| s * s).sum::<f64>() / len as f64;
            e.max(params.energy_floor).ln()
        })
        .collect();
    let peak = log_energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vectors = frames
        .iter()
        .zip(&log_energy)
        .map(|(frame, &le)| {
            let mut v = ex.compute(frame);
            v.push(le - peak);
            FeatureVector(v)
        })
        .collect();
    FeatureSequence::new(vectors, params.frame_shift_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 16000).unwrap()
    }

    fn random_clip(n: usize, amp: f64, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        clip((0..n).map(|_| rng.random_range(-amp..amp)).collect())
    }

    #[test]
    fn frame_counts() {
        let p = FeatureParams::default();
        assert_eq!(frame_signal(&clip(vec![0.1; 400]), &p).unwrap().len(), 1);
        assert_eq!(frame_signal(&clip(vec![0.1; 560]), &p).unwrap().len(), 2);
        assert!(matches!(
            frame_signal(&clip(vec![0.1; 399]), &p),
            Err(FeatureError::ClipTooShort { needed: 400, got: 399 })
        ));
    }

    #[test]
    fn hamming_endpoints_and_midpoint() {
        let w = hamming(401);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[400] - 0.08).abs() < 1e-15);
        assert!((w[200] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn preemphasis_keeps_first_sample() {
        assert_eq!(preemphasize(&[1.0, 1.0, 0.0], 0.97), vec![1.0, 1.0 - 0.97, -0.97]);
    }

    #[test]
    fn zero_frame_gives_zero_cepstra() {
        let p = FeatureParams::default();
        let c = mfcc(&vec![0.0; 400], &p, 16000).unwrap();
        assert_eq!(c.len(), 12);
        assert!(c.iter().all(|x| x.abs() < 1e-12), "{c:?}");
    }

    #[test]
    fn mfcc_scale_invariant() {
        let p = FeatureParams::default();
        let frames = frame_signal(&random_clip(400, 0.5, 1), &p).unwrap();
        let base = mfcc(&frames[0], &p, 16000).unwrap();
        for a in [0.01, 0.3, 1.7] {
            let scaled: Vec<f64> = frames[0].iter().map(|x| x * a).collect();
            let c = mfcc(&scaled, &p, 16000).unwrap();
            for (x, y) in base.iter().zip(&c) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn thirty_ms_segment_gives_one_13_dim_frame() {
        let seq = extract_features(&random_clip(480, 0.3, 2), &FeatureParams::default()).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.dim(), 13);
        assert_eq!(seq.vectors()[0][12], 0.0);
    }

    #[test]
    fn silent_clip_is_finite() {
        let seq = extract_features(&clip(vec![0.0; 4000]), &FeatureParams::default()).unwrap();
        assert!(seq.iter().flatten().all(|x| x.is_finite()));
        assert!(seq.iter().all(|v| v[12] == 0.0));
    }

    #[test]
    fn filterbank_covers_requested_band() {
        let fb = mel_filterbank(26, 512, 16000, 0.0, 8000.0);
        assert_eq!(fb.len(), 26);
        assert!(fb.iter().all(|(_, w)| !w.is_empty()));
        assert!(fb.iter().flat_map(|(_, w)| w).all(|&w| (0.0..=1.0).contains(&w)));
    }

    #[test]
    fn invalid_params() {
        let p = FeatureParams {
            n_cepstra: 26,
            ..Default::default()
        };
        assert!(p.validate(16000).is_err());
        let p = FeatureParams {
            preemphasis: 1.0,
            ..Default::default()
        };
        assert!(p.validate(16000).is_err());
        let p = FeatureParams {
            fmax_hz: Some(9000.0),
            ..Default::default()
        };
        assert!(p.validate(16000).is_err());
    }

    #[test]
    fn sequence_rejects_ragged_and_empty() {
        assert!(matches!(
            FeatureSequence::from_rows(vec![]),
            Err(FeatureError::EmptySequence)
        ));
        assert!(matches!(
            FeatureSequence::from_rows(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(FeatureError::DimensionMismatch { index: 1, .. })
        ));
        assert!(FeatureSequence::from_rows(vec![vec![f64::NAN]]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn energy_term_peaks_at_zero(seed in any::<u64>(), n in 400usize..3000) {
            let seq = extract_features(&random_clip(n, 0.8, seed), &FeatureParams::default()).unwrap();
            let last: Vec<f64> = seq.iter().map(|v| v[12]).collect();
            prop_assert_eq!(last.iter().filter(|&&e| e == 0.0).count() >= 1, true);
            prop_assert!(last.iter().all(|&e| e <= 0.0));
            prop_assert!(seq.iter().all(|v| v.len() == 13));
        }
    }
}
