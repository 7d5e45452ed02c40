//! Weakly-labeled, semi-supervised sound event detection.
//!
//! The pipeline: log-mel features ([`features`]) feed CNN taggers with
//! class-wise attention pooling ([`model`]), whose per-class decision
//! surfaces are restricted to frequency-derived subspaces ([`disentangled`]).
//! A coarse-time teacher and a fine-time student co-train on weak plus
//! unlabeled clips ([`trainer`]); frame probabilities are median-smoothed
//! with class-adaptive windows and decoded into timed events ([`inference`]);
//! output is scored with collar-based event, segment and clip measures
//! ([`metrics`]).

pub mod corpus;
pub mod disentangled;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod vocab;

pub use corpus::{
    count_cooccurrence, parse_manifest, parse_strong_labels, parse_weak_labels, weaken,
    ClipRecord, CooccurrenceTable, DetectionEvent, StrongAnnotation, Subset, WeakLabel,
};
pub use disentangled::{DfAssignment, DfConfig};
pub use error::{Error, Result};
pub use features::{extract_logmel, pad_or_trim, resample, FeatureConfig, FeatureMatrix};
pub use model::{
    clip_prediction, frame_prediction, load_checkpoint, save_checkpoint, CheckpointMeta,
    EncoderConfig, ProbabilitySet, SedModel, Variant,
};
pub use vocab::EventVocabulary;
