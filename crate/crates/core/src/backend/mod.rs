//! Likelihood scoring and generation.
//!
//! A backend reports per-token log-probabilities of a continuation given a
//! rendered context. Only continuation tokens are scored; the context is
//! fully masked. [`score`] turns those into a length-normalized likelihood.

mod reference;
mod remote;

pub use reference::{ReferenceLm, VocabMode, BOUNDARY_TOKEN, UNK_TOKEN};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};
use crate::parallel;
use crate::types::NormalizedLikelihood;

/// Default generation budget.
pub const DEFAULT_MAX_TOKENS: usize = 32768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    #[default]
    PlainConcat,
    ChatMinimal,
}

/// How a (condition, target) pair becomes one string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub name: TemplateKind,
    /// Joins condition and target for `plain_concat`, and the parts of a
    /// compound condition for both kinds.
    pub separator: String,
    /// (user, assistant) markers for `chat_minimal`.
    #[serde(default)]
    pub role_markers: Option<(String, String)>,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        TemplateSpec::plain("\n")
    }
}

impl TemplateSpec {
    pub fn plain(separator: impl Into<String>) -> Self {
        TemplateSpec { name: TemplateKind::PlainConcat, separator: separator.into(), role_markers: None }
    }

    pub fn chat(user: impl Into<String>, assistant: impl Into<String>) -> Self {
        TemplateSpec {
            name: TemplateKind::ChatMinimal,
            separator: "\n".into(),
            role_markers: Some((user.into(), assistant.into())),
        }
    }

    fn markers(&self) -> (&str, &str) {
        match &self.role_markers {
            Some((user, assistant)) => (user, assistant),
            None => ("<user>", "<assistant>"),
        }
    }

    /// Everything that precedes the target in [`render`].
    pub fn prefix(&self, condition: &str) -> String {
        match self.name {
            TemplateKind::PlainConcat => format!("{condition}{}", self.separator),
            TemplateKind::ChatMinimal => {
                let (user, assistant) = self.markers();
                format!("{user}{condition}{assistant}")
            }
        }
    }

    /// Concatenates two conditioning texts into one condition.
    pub fn join(&self, first: &str, second: &str) -> String {
        format!("{first}{}{second}", self.separator)
    }
}

/// Renders a condition and target into the string a model sees.
pub fn render(template: &TemplateSpec, condition: &str, target: &str) -> String {
    let mut out = template.prefix(condition);
    out.push_str(target);
    out
}

/// Request for p̂(target | condition).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringRequest {
    pub condition: String,
    pub target: String,
    pub template: TemplateSpec,
}

impl ScoringRequest {
    pub fn new(condition: impl Into<String>, target: impl Into<String>, template: &TemplateSpec) -> Self {
        ScoringRequest { condition: condition.into(), target: target.into(), template: template.clone() }
    }

    fn describe(&self) -> String {
        format!("p({:?} | {:?})", preview(&self.target), preview(&self.condition))
    }
}

fn preview(text: &str) -> String {
    const MAX: usize = 32;
    if text.chars().count() <= MAX {
        text.to_string()
    } else {
        let head: String = text.chars().take(MAX).collect();
        format!("{head}...")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_tokens: usize, seed: u64) -> Result<Self> {
        if max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be at least 1".into()));
        }
        Ok(GenerationRequest { prompt: prompt.into(), max_tokens, seed })
    }
}

/// A language model that can score continuations and, optionally, generate.
pub trait LanguageModel: Send + Sync {
    /// Log-probabilities of each continuation token given `context`.
    fn continuation_logprobs(&self, context: &str, continuation: &str) -> Result<Vec<f64>, BackendError>;

    fn generate_text(&self, _request: &GenerationRequest) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("generation"))
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn continuation_logprobs(&self, context: &str, continuation: &str) -> Result<Vec<f64>, BackendError> {
        (**self).continuation_logprobs(context, continuation)
    }

    fn generate_text(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate_text(request)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn continuation_logprobs(&self, context: &str, continuation: &str) -> Result<Vec<f64>, BackendError> {
        (**self).continuation_logprobs(context, continuation)
    }

    fn generate_text(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate_text(request)
    }
}

/// Length-normalized p̂(target | condition).
pub fn score<M: LanguageModel + ?Sized>(
    request: &ScoringRequest,
    backend: &M,
) -> Result<NormalizedLikelihood> {
    if request.target.trim().is_empty() {
        return Err(Error::Empty("scoring target"));
    }
    let context = request.template.prefix(&request.condition);
    let logprobs = backend
        .continuation_logprobs(&context, &request.target)
        .map_err(|source| Error::Scoring { context: request.describe(), source })?;
    NormalizedLikelihood::from_logprobs(&logprobs).map_err(|e| Error::Scoring {
        context: request.describe(),
        source: BackendError::Protocol { request: request.describe(), message: e.to_string() },
    })
}

/// Scores independent requests concurrently; results are in request order.
pub fn score_batch<M: LanguageModel + ?Sized>(
    requests: &[ScoringRequest],
    backend: &M,
) -> Result<Vec<NormalizedLikelihood>> {
    parallel::try_map(requests, |r| score(r, backend))
}

pub fn generate<M: LanguageModel + ?Sized>(request: &GenerationRequest, backend: &M) -> Result<String> {
    if request.max_tokens == 0 {
        return Err(Error::InvalidArgument("max_tokens must be at least 1".into()));
    }
    backend.generate_text(request).map_err(|source| Error::Generation {
        context: format!("prompt {:?}", preview(&request.prompt)),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl LanguageModel for Fixed {
        fn continuation_logprobs(&self, _: &str, _: &str) -> Result<Vec<f64>, BackendError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn render_examples() {
        let plain = TemplateSpec::plain("\n");
        assert_eq!(render(&plain, "Q", "A"), "Q\nA");
        assert_eq!(render(&plain, "", "A"), "\nA");
        let chat = TemplateSpec::chat("<user>", "<assistant>");
        assert_eq!(render(&chat, "Q", "A"), "<user>Q<assistant>A");
    }

    #[test]
    fn normalization_examples() {
        let t = TemplateSpec::default();
        let one = score(&ScoringRequest::new("q", "a", &t), &Fixed(vec![0.0])).unwrap();
        assert_eq!(one.value(), 1.0);
        let half = 0.5f64.ln();
        let two = score(&ScoringRequest::new("q", "a b", &t), &Fixed(vec![half, half])).unwrap();
        assert!((two.value() - 0.5).abs() < 1e-15);
        assert_eq!(two.token_count(), 2);
    }

    #[test]
    fn empty_target_rejected() {
        let t = TemplateSpec::default();
        assert_eq!(
            score(&ScoringRequest::new("q", "  ", &t), &Fixed(vec![0.0])),
            Err(Error::Empty("scoring target"))
        );
    }

    #[test]
    fn positive_logprob_is_protocol_error() {
        let t = TemplateSpec::default();
        let err = score(&ScoringRequest::new("q", "a", &t), &Fixed(vec![0.1])).unwrap_err();
        assert!(matches!(err, Error::Scoring { source: BackendError::Protocol { .. }, .. }));
    }

    #[test]
    fn generation_unsupported_by_default() {
        let req = GenerationRequest::new("x", 4, 0).unwrap();
        let err = generate(&req, &Fixed(vec![])).unwrap_err();
        assert!(matches!(err, Error::Generation { source: BackendError::Unsupported(_), .. }));
        assert!(GenerationRequest::new("x", 0, 0).is_err());
    }
}
