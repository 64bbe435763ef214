use super::{initial_distribution, transitions_from_counts, GaussianState, HmmError, TrainingConfig, WordHmm};
use crate::features::FeatureSequence;

/// Initial model plus the per-frame state labels it was estimated from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitResult {
    pub hmm: WordHmm,
    pub assignment: Vec<usize>,
}

/// Seed frame of each state: `round(i * (T - 1) / (N - 1))`, or frame 0 for
/// a single state. Distinct whenever `T >= N`.
pub(crate) fn seed_indices(frames: usize, states: usize) -> Vec<usize> {
    if states == 1 {
        return vec![0];
    }
    let step = (frames - 1) as f64 / (states - 1) as f64;
    (0..states).map(|i| (i as f64 * step).round() as usize).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Builds the initial model from the first training sequence.
///
/// N equally spaced frames seed the N states. Every other frame goes to the
/// state whose seed frame is nearest in Euclidean distance (lower index on
/// ties). State statistics come from the members; transitions are counted
/// over consecutive labels, smoothed and row-normalized. Label changes that
/// the topology forbids are not counted.
pub fn init_hmm(word: &str, sequence: &FeatureSequence, config: &TrainingConfig) -> Result<InitResult, HmmError> {
    config.validate()?;
    if sequence.dim() != config.dim {
        return Err(HmmError::DimensionMismatch {
            expected: config.dim,
            actual: sequence.dim(),
        });
    }
    let n = config.n_states;
    let t = sequence.len();
    if t < n {
        return Err(HmmError::TooFewObservations {
            sequence: 0,
            frames: t,
            states: n,
        });
    }

    let frames = sequence.vectors();
    let seeds = seed_indices(t, n);
    let assignment: Vec<usize> = (0..t)
        .map(|k| {
            if let Some(state) = seeds.iter().position(|&s| s == k) {
                return state;
            }
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (state, &s) in seeds.iter().enumerate() {
                let d = squared_distance(&frames[k], &frames[s]);
                if d < best_dist {
                    best = state;
                    best_dist = d;
                }
            }
            best
        })
        .collect();

    let states = (0..n)
        .map(|state| {
            let members = assignment
                .iter()
                .zip(frames)
                .filter(|(&a, _)| a == state)
                .map(|(_, f)| &f[..]);
            GaussianState::estimate(members, config.dim, config.variance_floor)
        })
        .collect();

    let mut counts = vec![vec![0.0; n]; n];
    for w in assignment.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    let hmm = WordHmm {
        word: word.to_string(),
        states,
        transitions: transitions_from_counts(&counts, config.transition_smoothing),
        initial: initial_distribution(n),
    };
    Ok(InitResult { hmm, assignment })
}
