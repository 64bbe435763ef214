use log::debug;

use super::{decode::viterbi, init_hmm, transitions_from_counts, GaussianState, HmmError, TrainingConfig, WordHmm};
use crate::features::FeatureSequence;

/// Outcome of training besides the model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Total Viterbi log-likelihood of the initial model followed by that of
    /// every accepted re-estimate. Non-decreasing.
    pub log_likelihoods: Vec<f64>,
    /// Re-estimation passes that produced an accepted model.
    pub iterations: usize,
}

impl TrainingReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_likelihoods
            .last()
            .expect("report always holds the initial score")
    }
}

pub fn train_word_model(
    word: &str,
    sequences: &[FeatureSequence],
    config: &TrainingConfig,
) -> Result<WordHmm, HmmError> {
    train_word_model_with_report(word, sequences, config).map(|(hmm, _)| hmm)
}

/// Initializes from the first sequence, then alternates Viterbi alignment
/// of all sequences with re-estimation of states and transitions.
///
/// Stops after `viterbi_iterations` passes, or once the relative gain in
/// total log-likelihood drops below `convergence_epsilon`. A re-estimate
/// that scores lower than its predecessor is discarded.
pub fn train_word_model_with_report(
    word: &str,
    sequences: &[FeatureSequence],
    config: &TrainingConfig,
) -> Result<(WordHmm, TrainingReport), HmmError> {
    config.validate()?;
    let first = sequences.first().ok_or(HmmError::NoTrainingData)?;
    for (i, seq) in sequences.iter().enumerate() {
        if seq.dim() != config.dim {
            return Err(HmmError::DimensionMismatch {
                expected: config.dim,
                actual: seq.dim(),
            });
        }
        if seq.len() < config.n_states {
            return Err(HmmError::TooFewObservations {
                sequence: i,
                frames: seq.len(),
                states: config.n_states,
            });
        }
    }

    let mut model = init_hmm(word, first, config)?.hmm;
    let (mut paths, mut total) = align_all(&model, sequences)?;
    let mut report = TrainingReport {
        log_likelihoods: vec![total],
        iterations: 0,
    };
    for iteration in 1..=config.viterbi_iterations {
        let candidate = reestimate(&model, sequences, &paths, config);
        let (cand_paths, cand_total) = align_all(&candidate, sequences)?;
        debug!("{word}: iteration {iteration} log-likelihood {cand_total:.6} (was {total:.6})");
        if cand_total.is_nan() || cand_total < total {
            break;
        }
        let gain = (cand_total - total) / total.abs().max(f64::MIN_POSITIVE);
        model = candidate;
        paths = cand_paths;
        total = cand_total;
        report.log_likelihoods.push(total);
        report.iterations = iteration;
        if gain < config.convergence_epsilon {
            break;
        }
    }
    Ok((model, report))
}

fn align_all(model: &WordHmm, sequences: &[FeatureSequence]) -> Result<(Vec<Vec<usize>>, f64), HmmError> {
    let mut paths = Vec::with_capacity(sequences.len());
    let mut total = 0.0;
    for seq in sequences {
        let a = viterbi(model, seq)?;
        total += a.log_likelihood;
        paths.push(a.path);
    }
    Ok((paths, total))
}

/// New state statistics and smoothed transition counts from fixed
/// alignments. Sequences without a legal path contribute nothing; a state
/// that receives no frames keeps its previous Gaussian.
fn reestimate(
    model: &WordHmm,
    sequences: &[FeatureSequence],
    paths: &[Vec<usize>],
    config: &TrainingConfig,
) -> WordHmm {
    let n = model.n_states();
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    let mut counts = vec![vec![0.0; n]; n];
    for (seq, path) in sequences.iter().zip(paths) {
        if path.is_empty() {
            continue;
        }
        for (state, frame) in path.iter().zip(seq.iter()) {
            members[*state].push(frame);
        }
        for w in path.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
    }
    let states = members
        .into_iter()
        .zip(&model.states)
        .map(|(m, old)| {
            if m.is_empty() {
                old.clone()
            } else {
                GaussianState::estimate(m, config.dim, config.variance_floor)
            }
        })
        .collect();
    WordHmm {
        word: model.word.clone(),
        states,
        transitions: transitions_from_counts(&counts, config.transition_smoothing),
        initial: model.initial.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::forward_log_likelihood;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn seq(rows: Vec<Vec<f64>>) -> FeatureSequence {
        FeatureSequence::from_rows(rows).unwrap()
    }

    /// Frames drawn around `centres` in order, `per_state` frames each.
    fn sample_word(rng: &mut ChaCha8Rng, centres: &[Vec<f64>], per_state: usize, sd: f64) -> FeatureSequence {
        let noise = Normal::new(0.0, sd).unwrap();
        let mut rows = Vec::new();
        for c in centres {
            let len = per_state + rng.random_range(0..3);
            for _ in 0..len {
                rows.push(c.iter().map(|m| m + noise.sample(rng)).collect());
            }
        }
        seq(rows)
    }

    #[test]
    fn hand_example_is_a_fixed_point() {
        let s = seq(vec![vec![0.0], vec![0.1], vec![0.9], vec![1.0]]);
        let mut config = TrainingConfig::new(2, 1);
        config.viterbi_iterations = 1;
        let init = init_hmm("w", &s, &config).unwrap();
        let (trained, report) = train_word_model_with_report("w", std::slice::from_ref(&s), &config).unwrap();
        let path = viterbi(&trained, &s).unwrap().path;
        assert_eq!(path, init.assignment);
        assert_eq!(viterbi(&init.hmm, &s).unwrap().path, init.assignment);
        assert!(report.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert_eq!(trained.states[0].mean, vec![0.05]);
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let s = seq(vec![vec![0.0], vec![0.1], vec![0.9], vec![1.0]]);
        let mut config = TrainingConfig::new(2, 1);
        config.viterbi_iterations = 0;
        let trained = train_word_model("w", std::slice::from_ref(&s), &config).unwrap();
        assert_eq!(trained, init_hmm("w", &s, &config).unwrap().hmm);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let centres = vec![vec![0.0, 1.0], vec![3.0, -1.0], vec![-2.0, 2.0]];
        let data: Vec<_> = (0..5).map(|_| sample_word(&mut rng, &centres, 5, 0.5)).collect();
        let config = TrainingConfig::new(3, 2);
        let a = train_word_model("w", &data, &config).unwrap();
        let b = train_word_model("w", &data, &config).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn likelihood_never_decreases_and_invariants_hold() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..6);
            let centres: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect())
                .collect();
            let data: Vec<_> = (0..6).map(|_| sample_word(&mut rng, &centres, 4, 1.0)).collect();
            let mut config = TrainingConfig::new(n, 3);
            config.convergence_epsilon = 0.0;
            let (model, report) = train_word_model_with_report("w", &data, &config).unwrap();
            model.validate().unwrap();
            assert!(
                report.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-9),
                "{report:?}"
            );
            for s in &model.states {
                assert!(s.variance.iter().all(|&v| v >= config.variance_floor));
            }
        }
    }

    #[test]
    fn own_word_scores_higher() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a_centres = vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![0.0, 4.0]];
        let b_centres = vec![vec![-5.0, 3.0], vec![-3.0, -3.0], vec![5.0, 0.0]];
        let train_a: Vec<_> = (0..8).map(|_| sample_word(&mut rng, &a_centres, 5, 0.4)).collect();
        let train_b: Vec<_> = (0..8).map(|_| sample_word(&mut rng, &b_centres, 5, 0.4)).collect();
        let config = TrainingConfig::new(3, 2);
        let ma = train_word_model("a", &train_a, &config).unwrap();
        let mb = train_word_model("b", &train_b, &config).unwrap();
        for _ in 0..10 {
            let ha = sample_word(&mut rng, &a_centres, 5, 0.4);
            let hb = sample_word(&mut rng, &b_centres, 5, 0.4);
            assert!(viterbi(&ma, &ha).unwrap().log_likelihood > viterbi(&mb, &ha).unwrap().log_likelihood);
            assert!(viterbi(&mb, &hb).unwrap().log_likelihood > viterbi(&ma, &hb).unwrap().log_likelihood);
            assert!(forward_log_likelihood(&ma, &ha).unwrap() >= viterbi(&ma, &ha).unwrap().log_likelihood);
        }
    }

    #[test]
    fn every_sequence_must_cover_all_states() {
        let long = seq(vec![vec![0.0]; 5]);
        let short = seq(vec![vec![0.0]; 2]);
        assert!(matches!(
            train_word_model("w", &[long, short], &TrainingConfig::new(3, 1)),
            Err(HmmError::TooFewObservations {
                sequence: 1,
                frames: 2,
                states: 3
            })
        ));
        assert!(matches!(
            train_word_model("w", &[], &TrainingConfig::new(3, 1)),
            Err(HmmError::NoTrainingData)
        ));
    }
}
