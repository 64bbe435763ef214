//! Shared fixtures for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swar_core::synth::{render_utterance, vocabulary, RenderOptions};
use swar_core::{extract_features, isolate_word, AudioClip, EndpointParams, FeatureParams, FeatureSequence};

pub const SEED: u64 = 0x5a_57_41_52;

/// One rendered utterance per vocabulary word.
pub fn utterances(words: usize, per_word: usize) -> Vec<(String, Vec<AudioClip>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let vocab = vocabulary(words, &mut rng);
    let opts = RenderOptions::default();
    vocab
        .iter()
        .map(|p| {
            let clips = (0..per_word)
                .map(|_| render_utterance(p, &opts, &mut rng).clip)
                .collect();
            (p.name.clone(), clips)
        })
        .collect()
}

/// Endpointed feature sequences with default front-end parameters.
pub fn features(clips: &[AudioClip]) -> Vec<FeatureSequence> {
    clips
        .iter()
        .map(|c| {
            let (word, _) = isolate_word(c, &EndpointParams::default()).expect("valid endpoint params");
            extract_features(&word, &FeatureParams::default()).expect("utterance long enough")
        })
        .collect()
}
