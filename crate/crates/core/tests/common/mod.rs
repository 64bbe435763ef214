//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use swar_core::hmm::GaussianState;
use swar_core::WordHmm;

/// `|a - b| <= tol * max(|a|, |b|)`, with equal infinities accepted.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn log_density(state: &GaussianState, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((xi, mean), var) in x.iter().zip(&state.mean).zip(&state.variance) {
        let diff = xi - mean;
        total += -0.5 * (2.0 * PI * var).ln() - 0.5 * diff * diff / var;
    }
    total
}

/// Viterbi and forward log-likelihoods by enumerating every state sequence
/// that starts in state 0 and ends in the last state.
pub fn enumerate_paths(hmm: &WordHmm, obs: &[Vec<f64>]) -> (f64, f64) {
    let n = hmm.states.len();
    let t_len = obs.len();
    let mut best = f64::NEG_INFINITY;
    let mut joint = Vec::new();
    let total = n.pow(t_len as u32);
    for code in 0..total {
        let mut path = Vec::with_capacity(t_len);
        let mut c = code;
        for _ in 0..t_len {
            path.push(c % n);
            c /= n;
        }
        if path[0] != 0 || path[t_len - 1] != n - 1 {
            continue;
        }
        let mut p = hmm.initial[path[0]].ln() + log_density(&hmm.states[path[0]], &obs[0]);
        for t in 1..t_len {
            p += hmm.transitions[path[t - 1]][path[t]].ln() + log_density(&hmm.states[path[t]], &obs[t]);
        }
        if p > best {
            best = p;
        }
        if p > f64::NEG_INFINITY {
            joint.push(p);
        }
    }
    let forward = if joint.is_empty() {
        f64::NEG_INFINITY
    } else {
        let m = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + joint.iter().map(|p| (p - m).exp()).sum::<f64>().ln()
    };
    (best, forward)
}

/// Random left-to-right model. Some self-loops are forced to 0 or 1 so that
/// impossible paths are exercised too.
pub fn random_hmm(rng: &mut impl Rng, n: usize, d: usize) -> WordHmm {
    let mut transitions = vec![vec![0.0; n]; n];
    for i in 0..n {
        if i + 1 == n {
            transitions[i][i] = 1.0;
            continue;
        }
        let stay = match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.05..0.95),
        };
        transitions[i][i] = stay;
        transitions[i][i + 1] = 1.0 - stay;
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let states = (0..n)
        .map(|_| GaussianState {
            mean: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
            variance: (0..d).map(|_| rng.random_range(0.05..4.0)).collect(),
        })
        .collect();
    WordHmm {
        word: "w".into(),
        states,
        transitions,
        initial,
    }
}

pub fn random_rows(rng: &mut impl Rng, t: usize, d: usize) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect()
}

/// Straightforward MFCC of one windowed frame: direct DFT power spectrum
/// over `nfft` points (smallest power of two covering the frame), triangular
/// mel filters, floored natural log, orthonormal DCT-II, coefficients
/// 1..=n_cepstra.
#[allow(clippy::too_many_arguments)]
pub fn reference_mfcc(
    frame: &[f64],
    sample_rate_hz: f64,
    n_filters: usize,
    n_cepstra: usize,
    fmin: f64,
    fmax: f64,
    floor: f64,
) -> Vec<f64> {
    let mut nfft = 1;
    while nfft < frame.len() {
        nfft *= 2;
    }
    let mut power = vec![0.0; nfft / 2 + 1];
    for (k, p) in power.iter_mut().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, x) in frame.iter().enumerate() {
            let angle = -2.0 * PI * ((k * i) % nfft) as f64 / nfft as f64;
            re += x * angle.cos();
            im += x * angle.sin();
        }
        *p = re * re + im * im;
    }

    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv_mel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let step = (mel(fmax) - mel(fmin)) / (n_filters + 1) as f64;
    let edge = |i: usize| inv_mel(mel(fmin) + step * i as f64);

    let mut log_out = vec![0.0; n_filters];
    for (j, out) in log_out.iter_mut().enumerate() {
        let (lo, mid, hi) = (edge(j), edge(j + 1), edge(j + 2));
        let mut acc = 0.0;
        for (k, p) in power.iter().enumerate() {
            let f = k as f64 * sample_rate_hz / nfft as f64;
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            let w = up.min(down);
            if w > 0.0 {
                acc += w * p;
            }
        }
        *out = if acc > floor { acc.ln() } else { floor.ln() };
    }

    (1..=n_cepstra)
        .map(|k| {
            let mut c = 0.0;
            for (j, y) in log_out.iter().enumerate() {
                c += y * (PI * k as f64 * (j as f64 + 0.5) / n_filters as f64).cos();
            }
            c * (2.0 / n_filters as f64).sqrt()
        })
        .collect()
}
