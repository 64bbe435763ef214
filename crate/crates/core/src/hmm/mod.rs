//! Continuous left-to-right word HMMs with diagonal-Gaussian emissions.
//!
//! Every state may loop on itself or step to its successor; decoding paths
//! start in state 0 and must finish in the last state.

mod decode;
mod init;
mod recognize;
mod train;

use std::f64::consts::PI;

use thiserror::Error;

pub use decode::{forward_log_likelihood, viterbi, Alignment};
pub use init::{init_hmm, InitResult};
pub use recognize::{recognize, Decision, RecognitionResult, DEFAULT_REJECTION_THRESHOLD};
pub use train::{train_word_model, train_word_model_with_report, TrainingReport};

/// Row sums and the initial vector must be within this of 1.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("observation sequence is empty")]
    EmptyObservation,
    #[error("training sequence {sequence} has {frames} frames, fewer than the {states} states")]
    TooFewObservations {
        sequence: usize,
        frames: usize,
        states: usize,
    },
    #[error("no training sequences given")]
    NoTrainingData,
    #[error("model registry is empty")]
    EmptyRegistry,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// One emitting state: diagonal Gaussian over `D` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Maximum-likelihood mean and (population) variance of `members`, with
    /// every variance component raised to at least `floor`.
    pub(crate) fn estimate<'a>(members: impl IntoIterator<Item = &'a [f64]>, dim: usize, floor: f64) -> Self {
        let members: Vec<&[f64]> = members.into_iter().collect();
        debug_assert!(!members.is_empty(), "state estimated from no observations");
        let n = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for obs in &members {
            for (m, x) in mean.iter_mut().zip(obs.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; dim];
        for obs in &members {
            for ((v, x), m) in variance.iter_mut().zip(obs.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        variance.iter_mut().for_each(|v| *v = (*v / n).max(floor));
        Self { mean, variance }
    }
}

/// `sum_d -0.5 ln(2 pi var_d) - (x_d - mean_d)^2 / (2 var_d)`.
pub fn log_gaussian(state: &GaussianState, obs: &[f64]) -> Result<f64, HmmError> {
    if obs.len() != state.dim() || state.variance.len() != state.dim() {
        return Err(HmmError::DimensionMismatch {
            expected: state.dim(),
            actual: obs.len(),
        });
    }
    Ok(log_gaussian_unchecked(state, obs))
}

pub(crate) fn log_gaussian_unchecked(state: &GaussianState, obs: &[f64]) -> f64 {
    state
        .mean
        .iter()
        .zip(&state.variance)
        .zip(obs)
        .map(|((m, v), x)| -0.5 * (2.0 * PI * v).ln() - (x - m) * (x - m) / (2.0 * v))
        .sum()
}

/// An N-state left-to-right word model.
#[derive(Debug, Clone, PartialEq)]
pub struct WordHmm {
    pub word: String,
    pub states: Vec<GaussianState>,
    /// Row-stochastic N x N matrix; only `[i][i]` and `[i][i+1]` may be
    /// nonzero.
    pub transitions: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl WordHmm {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, GaussianState::dim)
    }

    /// Checks every structural invariant, naming the first violation.
    pub fn validate(&self) -> Result<(), HmmError> {
        let bad = |m: String| Err(HmmError::InvalidModel(m));
        let n = self.n_states();
        if n == 0 {
            return bad("model has no states".into());
        }
        let dim = self.dim();
        if dim == 0 {
            return bad("model has zero-dimensional states".into());
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.mean.len() != dim || s.variance.len() != dim {
                return bad(format!("state {i} does not have dimension {dim}"));
            }
            if s.mean.iter().any(|x| !x.is_finite()) {
                return bad(format!("state {i} mean is not finite"));
            }
            if s.variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(format!("state {i} variance is not positive and finite"));
            }
        }
        if self.initial.len() != n || self.transitions.len() != n {
            return bad(format!("initial/transition sizes do not match {n} states"));
        }
        if self.initial[0] != 1.0 || self.initial[1..].iter().any(|&p| p != 0.0) {
            return bad("initial distribution must be [1, 0, ...]".into());
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != n {
                return bad(format!("transition row {i} has {} entries", row.len()));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("transition row {i} has an entry outside [0, 1]"));
            }
            if let Some(j) = (0..n).find(|&j| (j < i || j > i + 1) && row[j] != 0.0) {
                return bad(format!("transition {i}->{j} breaks left-to-right topology"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return bad(format!("transition row {i} sums to {sum}"));
            }
        }
        Ok(())
    }
}

/// Parameters of initialization and Viterbi re-estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub n_states: usize,
    pub dim: usize,
    /// Re-estimation passes after initialization; 0 keeps the initial model.
    pub viterbi_iterations: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub convergence_epsilon: f64,
    pub variance_floor: f64,
    /// Pseudo-count added to both legal slots of each transition row.
    pub transition_smoothing: f64,
}

impl TrainingConfig {
    pub fn new(n_states: usize, dim: usize) -> Self {
        Self {
            n_states,
            dim,
            viterbi_iterations: 10,
            convergence_epsilon: 1e-4,
            variance_floor: 1e-3,
            transition_smoothing: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        if self.n_states == 0 || self.dim == 0 {
            return Err(HmmError::InvalidConfig("N and D must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(HmmError::InvalidConfig("variance floor must be > 0".into()));
        }
        if !(self.transition_smoothing >= 0.0 && self.transition_smoothing.is_finite()) {
            return Err(HmmError::InvalidConfig("transition smoothing must be >= 0".into()));
        }
        if self.convergence_epsilon.is_nan() || self.convergence_epsilon < 0.0 {
            return Err(HmmError::InvalidConfig("convergence epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Row-normalized left-to-right transitions from `counts[i][j]` (only the
/// self-loop and forward slots are read). A row with no mass after
/// smoothing splits evenly over its legal slots.
pub(crate) fn transitions_from_counts(counts: &[Vec<f64>], smoothing: f64) -> Vec<Vec<f64>> {
    let n = counts.len();
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i + 1 == n {
                row[i] = 1.0;
                return row;
            }
            let stay = counts[i][i] + smoothing;
            let step = counts[i][i + 1] + smoothing;
            let total = stay + step;
            if total > 0.0 {
                row[i] = stay / total;
                row[i + 1] = step / total;
            } else {
                row[i] = 0.5;
                row[i + 1] = 0.5;
            }
            row
        })
        .collect()
}

pub(crate) fn initial_distribution(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}
