use std::collections::BTreeMap;

use super::{decode::viterbi, HmmError};
use crate::features::FeatureSequence;
use crate::store::ModelRegistry;

/// Per-frame log-likelihood below which an utterance is rejected.
pub const DEFAULT_REJECTION_THRESHOLD: f64 = -40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Accepted { word: String, log_likelihood: f64 },
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    pub decision: Decision,
    /// Viterbi log-likelihood of every registry word.
    pub scores: BTreeMap<String, f64>,
    /// Number of observation frames scored.
    pub frames: usize,
}

impl RecognitionResult {
    pub fn word(&self) -> Option<&str> {
        match &self.decision {
            Decision::Accepted { word, .. } => Some(word),
            Decision::Rejected => None,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self.decision, Decision::Accepted { .. })
    }

    /// Scores divided by the frame count, best first (ties by word).
    pub fn per_frame_scores(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .scores
            .iter()
            .map(|(w, s)| (w.as_str(), s / self.frames as f64))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Scores `obs` against every model and picks the best word, rejecting it
/// when its per-frame log-likelihood falls below `rejection_threshold`.
/// Ties go to the lexicographically smaller word.
pub fn recognize(
    registry: &ModelRegistry,
    obs: &FeatureSequence,
    rejection_threshold: f64,
) -> Result<RecognitionResult, HmmError> {
    if registry.is_empty() {
        return Err(HmmError::EmptyRegistry);
    }
    if obs.is_empty() {
        return Err(HmmError::EmptyObservation);
    }
    let mut scores = BTreeMap::new();
    let mut best: Option<(&str, f64)> = None;
    // BTreeMap iteration is word-ordered, so strict `>` keeps the smaller word on ties
    for (word, model) in registry.models() {
        let score = viterbi(model, obs)?.log_likelihood;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((word, score));
        }
        scores.insert(word.to_string(), score);
    }
    let (word, score) = best.expect("registry is non-empty");
    let frames = obs.len();
    let decision = if score / frames as f64 >= rejection_threshold {
        Decision::Accepted {
            word: word.to_string(),
            log_likelihood: score,
        }
    } else {
        Decision::Rejected
    };
    Ok(RecognitionResult {
        decision,
        scores,
        frames,
    })
}
