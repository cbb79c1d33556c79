//! Phoneme boundary detection with learned segmental features: a BiLSTM
//! scores every candidate boundary and segment, and an exact dynamic program
//! finds the best segmentation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod features;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod training;

pub use data::{Corpus, CorpusManifest, Split};
pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureConfig, FeatureStats, FrameMatrix, Waveform};
pub use inference::{brute_force_segment, dp_segment, dp_segment_k};
pub use metrics::{EvalReport, TolerancePolicy};
pub use model::{ModelConfig, ScoreContext, SegmentScorer, SegmentalModel, Segmentation};
pub use training::{fit, EpochLog, LabeledUtterance, LossSet, TrainConfig};
