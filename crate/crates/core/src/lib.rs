//! Mining yes-no questions from dialogue transcripts, harvesting distantly
//! labeled question/answer pairs, building gold/merged/blended training
//! curricula, and training and evaluating an answer-interpretation
//! classifier over the Yes/No/Middle label scheme.
//!
//! The usual flow is
//! [`qid::scan_corpus`] → [`distant::extract_distant_instances`] →
//! [`blend::build_blended_plan`] → [`model::train`] → [`eval::score`].

pub mod blend;
pub mod corpus;
pub mod distant;
pub mod error;
pub mod eval;
pub mod jsonl;
pub mod llm_probe;
pub mod model;
pub mod qid;
pub mod seeding;
pub mod synth;

pub use blend::{BlendConfig, Decay, EpochDataset, MergeConfig, Strategy, TrainingPlan};
pub use corpus::{Corpus, Dialogue, FineLabelMap, Label, Mapped, Turn};
pub use distant::{DistantConfig, Origin, QAInstance, Source};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, EvalReport, KappaResult, McNemarMethod, McNemarResult};
pub use model::{FeatureVector, LinearModel, Prediction, TrainConfig};
pub use qid::{DialogueActConfig, QidMatch, QidMode, QidRuleConfig, QidStats};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;
