//! Synthetic-vocabulary fixtures shared by the cli test targets.
#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use swar_core::synth::{render_utterance, vocabulary, RenderOptions, WordPattern};
use swar_core::{
    extract_features, isolate_word, save_model, train_word_model, AudioClip, EndpointParams, FeatureParams,
    FeatureSequence, ModelRegistry, TrainingConfig,
};

pub fn features_of(clip: &AudioClip) -> FeatureSequence {
    let (word, _) = isolate_word(clip, &EndpointParams::default()).expect("default endpoint params are valid");
    extract_features(&word, &FeatureParams::default()).expect("utterance spans at least one frame")
}

/// Vocabulary patterns renamed to `names`.
pub fn named_vocabulary(names: &[&str], rng: &mut impl Rng) -> Vec<WordPattern> {
    vocabulary(names.len(), rng)
        .into_iter()
        .zip(names)
        .map(|(mut p, n)| {
            p.name = n.to_string();
            p
        })
        .collect()
}

pub fn render(pattern: &WordPattern, count: usize, rng: &mut impl Rng) -> Vec<AudioClip> {
    let opts = RenderOptions::default();
    (0..count).map(|_| render_utterance(pattern, &opts, rng).clip).collect()
}

/// Trains one model per pattern from `per_word` fresh renderings.
pub fn train_registry(
    vocab: &[WordPattern],
    per_word: usize,
    n_states: usize,
    root: Option<&Path>,
    rng: &mut impl Rng,
) -> ModelRegistry {
    let params = FeatureParams::default();
    let mut registry = match root {
        Some(r) => ModelRegistry::open(r).expect("registry directory usable"),
        None => ModelRegistry::in_memory(params.clone()),
    };
    let config = TrainingConfig::new(n_states, params.dim());
    for pattern in vocab {
        let sequences: Vec<_> = render(pattern, per_word, rng).iter().map(features_of).collect();
        let hmm = train_word_model(&pattern.name, &sequences, &config).expect("training succeeds");
        if root.is_some() {
            save_model(&hmm, &params, &mut registry).expect("model saves");
        } else {
            registry.insert(hmm).expect("uniform dimension");
        }
    }
    registry
}

/// Pieces of a continuous test stream.
pub enum Part<'a> {
    Word(&'a WordPattern),
    Pause(f64),
    /// Loud white noise of the given length and standard deviation.
    Burst(f64, f64),
}

/// Typical background noise level of default renderings of `vocab`.
pub fn background_sd(vocab: &[WordPattern], rng: &mut impl Rng) -> f64 {
    let opts = RenderOptions::default();
    let sds: Vec<f64> = vocab
        .iter()
        .flat_map(|p| {
            (0..4)
                .map(|_| render_utterance(p, &opts, rng).noise_sd)
                .collect::<Vec<_>>()
        })
        .collect();
    sds.iter().sum::<f64>() / sds.len() as f64
}

/// Clean words, pauses and bursts laid end to end over one steady
/// background noise, as a live microphone would hear them.
pub fn stream(parts: &[Part], background_sd: f64, rng: &mut impl Rng) -> AudioClip {
    let clean = RenderOptions {
        lead_s: (0.0, 0.0),
        trail_s: (0.0, 0.0),
        snr_db: 300.0,
        ..Default::default()
    };
    let mut samples = Vec::new();
    for part in parts {
        match part {
            Part::Word(p) => samples.extend_from_slice(render_utterance(p, &clean, rng).clip.samples()),
            Part::Pause(s) => samples.resize(samples.len() + (s * 16000.0) as usize, 0.0),
            Part::Burst(s, sd) => {
                let noise = Normal::new(0.0, *sd).expect("finite level");
                samples.extend((0..(s * 16000.0) as usize).map(|_| noise.sample(rng)));
            }
        }
    }
    let noise = Normal::new(0.0, background_sd).expect("finite level");
    for s in &mut samples {
        *s = (*s + noise.sample(rng)).clamp(-1.0, 1.0);
    }
    AudioClip::new(samples, 16000).expect("clamped samples")
}
