use super::{log_gaussian_unchecked, HmmError, WordHmm};
use crate::features::FeatureSequence;

/// Best path and its joint log-likelihood.
///
/// When no legal path exists (fewer frames than states, or a zero
/// transition on every route) the log-likelihood is `-inf` and the path is
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub log_likelihood: f64,
    pub path: Vec<usize>,
}

fn check(hmm: &WordHmm, obs: &FeatureSequence) -> Result<(), HmmError> {
    if obs.is_empty() {
        return Err(HmmError::EmptyObservation);
    }
    if obs.dim() != hmm.dim() {
        return Err(HmmError::DimensionMismatch {
            expected: hmm.dim(),
            actual: obs.dim(),
        });
    }
    Ok(())
}

/// Per-frame, per-state emission log-densities.
fn emissions(hmm: &WordHmm, obs: &FeatureSequence) -> Vec<Vec<f64>> {
    obs.iter()
        .map(|x| hmm.states.iter().map(|s| log_gaussian_unchecked(s, x)).collect())
        .collect()
}

/// Log self-loop and log advance probability of every state.
fn log_transitions(hmm: &WordHmm) -> (Vec<f64>, Vec<f64>) {
    let n = hmm.n_states();
    let stay = (0..n).map(|i| hmm.transitions[i][i].ln()).collect();
    let advance = (0..n)
        .map(|i| {
            if i + 1 < n {
                hmm.transitions[i][i + 1].ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    (stay, advance)
}

/// Most likely state path that starts in state 0 and ends in the last
/// state, computed in log space.
pub fn viterbi(hmm: &WordHmm, obs: &FeatureSequence) -> Result<Alignment, HmmError> {
    check(hmm, obs)?;
    let n = hmm.n_states();
    let t_len = obs.len();
    let emit = emissions(hmm, obs);
    let (stay, advance) = log_transitions(hmm);

    let mut score: Vec<f64> = hmm.initial.iter().zip(&emit[0]).map(|(p, e)| p.ln() + e).collect();
    // came_from_prev[t][j]: whether the best route into j at t advanced from j-1
    let mut came_from_prev = vec![vec![false; n]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            let from_self = score[j] + stay[j];
            let from_prev = if j > 0 {
                score[j - 1] + advance[j - 1]
            } else {
                f64::NEG_INFINITY
            };
            let best = if from_prev > from_self {
                came_from_prev[t][j] = true;
                from_prev
            } else {
                from_self
            };
            next[j] = best + emit[t][j];
        }
        score = next;
    }

    let log_likelihood = score[n - 1];
    if log_likelihood == f64::NEG_INFINITY {
        return Ok(Alignment {
            log_likelihood,
            path: Vec::new(),
        });
    }
    let mut path = vec![0; t_len];
    let mut state = n - 1;
    for t in (0..t_len).rev() {
        path[t] = state;
        if t > 0 && came_from_prev[t][state] {
            state -= 1;
        }
    }
    Ok(Alignment { log_likelihood, path })
}

fn log_add(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Total log-likelihood over every legal path (log-sum-exp recursion).
pub fn forward_log_likelihood(hmm: &WordHmm, obs: &FeatureSequence) -> Result<f64, HmmError> {
    check(hmm, obs)?;
    let n = hmm.n_states();
    let emit = emissions(hmm, obs);
    let (stay, advance) = log_transitions(hmm);
    let mut alpha: Vec<f64> = hmm.initial.iter().zip(&emit[0]).map(|(p, e)| p.ln() + e).collect();
    for e in &emit[1..] {
        alpha = (0..n)
            .map(|j| {
                let from_prev = if j > 0 {
                    alpha[j - 1] + advance[j - 1]
                } else {
                    f64::NEG_INFINITY
                };
                log_add(alpha[j] + stay[j], from_prev) + e[j]
            })
            .collect();
    }
    Ok(alpha[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::GaussianState;

    fn one_d(means: &[f64], transitions: Vec<Vec<f64>>) -> WordHmm {
        let n = means.len();
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        WordHmm {
            word: "w".into(),
            states: means
                .iter()
                .map(|&m| GaussianState {
                    mean: vec![m],
                    variance: vec![1.0],
                })
                .collect(),
            transitions,
            initial,
        }
    }

    fn seq(xs: &[f64]) -> FeatureSequence {
        FeatureSequence::from_rows(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn single_state_is_sum_of_emissions() {
        let hmm = one_d(&[0.5], vec![vec![1.0]]);
        let obs = seq(&[0.0, 1.0, 2.0]);
        let expected: f64 = [0.0, 1.0, 2.0]
            .iter()
            .map(|x: &f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - (x - 0.5).powi(2) / 2.0)
            .sum();
        let a = viterbi(&hmm, &obs).unwrap();
        assert!((a.log_likelihood - expected).abs() < 1e-12);
        assert_eq!(a.path, vec![0, 0, 0]);
        let f = forward_log_likelihood(&hmm, &obs).unwrap();
        assert!((f - a.log_likelihood).abs() < 1e-12);
    }

    #[test]
    fn separable_two_state_switches_at_construction_point() {
        let hmm = one_d(&[0.0, 100.0], vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let obs = seq(&[0.0, 0.0, 0.0, 0.0, 100.0, 100.0, 100.0]);
        assert_eq!(viterbi(&hmm, &obs).unwrap().path, vec![0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn too_short_for_all_states_scores_neg_inf() {
        let hmm = one_d(
            &[0.0, 1.0, 2.0],
            vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0]],
        );
        let a = viterbi(&hmm, &seq(&[0.0, 1.0])).unwrap();
        assert_eq!(a.log_likelihood, f64::NEG_INFINITY);
        assert!(a.path.is_empty());
        assert_eq!(
            forward_log_likelihood(&hmm, &seq(&[0.0, 1.0])).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn errors_for_empty_and_mismatched() {
        let hmm = one_d(&[0.0], vec![vec![1.0]]);
        let two_d = FeatureSequence::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(viterbi(&hmm, &two_d), Err(HmmError::DimensionMismatch { .. })));
        assert!(matches!(
            forward_log_likelihood(&hmm, &two_d),
            Err(HmmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn log_add_handles_infinities() {
        assert_eq!(log_add(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert_eq!(log_add(f64::NEG_INFINITY, 2.0), 2.0);
        assert!((log_add(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
