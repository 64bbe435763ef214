//! Isolated-word voice command recognition.
//!
//! The pipeline runs audio through [`endpoint`] (word detection by energy and
//! zero-crossing rate), [`features`] (MFCCs plus normalized energy) and
//! [`hmm`] (one left-to-right Gaussian HMM per word, scored by Viterbi).
//! Trained models live in a [`store`] registry directory.

pub mod audio;
pub mod endpoint;
pub mod features;
pub mod hmm;
pub mod store;
pub mod synth;

pub use audio::{load_wav, save_wav, AudioClip, AudioError, CaptureSource, FileSource};
pub use endpoint::{detect_word_boundaries, EndpointError, EndpointParams, Segment};
pub use features::{extract_features, FeatureError, FeatureParams, FeatureSequence, FeatureVector};
pub use hmm::{
    recognize, train_word_model, viterbi, Decision, HmmError, RecognitionResult, TrainingConfig, WordHmm,
    DEFAULT_REJECTION_THRESHOLD,
};
pub use store::{load_registry, save_model, ModelRegistry, StoreError};

/// Picks the utterance out of a clip: the longest detected word segment, or
/// the whole clip (with `None`) when the leading window is not silence, the
/// clip is too short to calibrate, or nothing is detected.
pub fn isolate_word(clip: &AudioClip, params: &EndpointParams) -> Result<(AudioClip, Option<Segment>), EndpointError> {
    let whole = || Ok((clip.clone(), None));
    match detect_word_boundaries(clip, params) {
        Ok(segments) => match endpoint::longest_segment(&segments) {
            Some(seg) => Ok((seg.extract(clip).expect("segments lie within the clip"), Some(seg))),
            None => whole(),
        },
        Err(EndpointError::CalibrationNotSilent { .. } | EndpointError::ClipTooShort { .. }) => whole(),
        Err(e) => Err(e),
    }
}
