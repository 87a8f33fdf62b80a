//! Learning-to-context slope (LCS) toolkit.
//!
//! Contextual relevance `s = p(X|Q;D) − p(X|Q)` measures how much a
//! demonstration D raises the likelihood of the correct output X. Learning
//! gain `t = p(D|Q;X) − p(D|Q)` measures how much the output tells the model
//! about the demonstration. The least-squares slope of t on s over many
//! (instance, demonstration) pairs, the LCS, tracks how effective in-context
//! learning is for a model on a task: a slope at or below 0.2 marks it as
//! ineffective.
//!
//! The crate has three layers:
//! - [`oracle`] checks the identities behind the slope on exact finite
//!   distributions;
//! - [`backend`] estimates likelihoods from a language model, either the
//!   built-in bigram [`backend::ReferenceLm`] or a remote scoring service;
//! - [`analysis`], [`selection`] and [`synthesis`] score, fit and use the slope.
//!
//! With the default `parallel` feature, per-world, per-instance and
//! per-demonstration work runs on rayon. Results are identical either way:
//! every reduction sorts its inputs first.

pub mod analysis;
pub mod backend;
pub mod error;
pub mod measures;
pub mod oracle;
pub mod parallel;
pub mod retrieval;
pub mod selection;
pub mod synthesis;
pub mod types;

pub use analysis::{
    classify, fit_lcs, fit_lcs_with, score_instance, score_instances, Classification, ConditionOrder,
    FitResult, Orientation, ScoringSetup, DEFAULT_THRESHOLD,
};
pub use backend::{LanguageModel, ReferenceLm, RemoteBackend, TemplateSpec, VocabMode};
pub use error::{BackendError, Error, Result};
pub use measures::{contextual_relevance, learning_gain};
pub use types::{Demonstration, LikelihoodProfile, NormalizedLikelihood, Origin, ScoredPoint, TaskInstance};
