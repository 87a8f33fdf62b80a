//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures;

/// One evaluation unit: a question with its reference output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub question: String,
    pub reference_output: String,
    /// Reasoning chain placed before the answer when scoring the output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    /// Human-labeled reasoning kept when `reasoning` has been restyled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_1shot: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_0shot: Option<bool>,
}

impl TaskInstance {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        reference_output: impl Into<String>,
    ) -> Result<Self> {
        let instance = TaskInstance {
            id: id.into(),
            question: question.into(),
            reference_output: reference_output.into(),
            reasoning: None,
            original_reasoning: None,
            correctness_1shot: None,
            correctness_0shot: None,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn with_reasoning(mut self, reasoning: impl Into<String>) -> Self {
        self.reasoning = Some(reasoning.into());
        self
    }

    pub fn with_correctness_1shot(mut self, correct: bool) -> Self {
        self.correctness_1shot = Some(correct);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::Empty("question"));
        }
        if self.reference_output.trim().is_empty() {
            return Err(Error::Empty("reference output"));
        }
        Ok(())
    }

    /// The text scored as X: reasoning (when present) followed by the answer.
    pub fn output_text(&self, separator: &str) -> String {
        match self.reasoning.as_deref().filter(|r| !r.trim().is_empty()) {
            Some(reasoning) => format!("{reasoning}{separator}{}", self.reference_output),
            None => self.reference_output.clone(),
        }
    }
}

/// Where a demonstration came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Labeled,
    Synthetic,
    Paraphrased,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Labeled => "labeled",
            Origin::Synthetic => "synthetic",
            Origin::Paraphrased => "paraphrased",
        }
    }
}

/// A (question, output) exemplar placed in the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub question: String,
    pub output: String,
    #[serde(default)]
    pub origin: Origin,
    /// Externally supplied embedding, used by cosine retrieval when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Demonstration {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        output: impl Into<String>,
        origin: Origin,
    ) -> Result<Self> {
        let demo = Demonstration {
            id: id.into(),
            question: question.into(),
            output: output.into(),
            origin,
            embedding: None,
        };
        demo.validate()?;
        Ok(demo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::Empty("demonstration question"));
        }
        if self.output.trim().is_empty() {
            return Err(Error::Empty("demonstration output"));
        }
        Ok(())
    }

    /// The text scored as D.
    pub fn text(&self, separator: &str) -> String {
        format!("{}{separator}{}", self.question, self.output)
    }
}

/// Length-normalized sequence likelihood: the geometric mean of per-token
/// probabilities of the scored target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLikelihood {
    value: f64,
    token_count: usize,
    sum_logprob: f64,
}

impl NormalizedLikelihood {
    pub fn from_logprobs(logprobs: &[f64]) -> Result<Self> {
        if logprobs.is_empty() {
            return Err(Error::InvalidLikelihood("target has no tokens".into()));
        }
        if let Some(bad) = logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(Error::InvalidLikelihood(format!(
                "token log-probability {bad} is not a finite value <= 0"
            )));
        }
        Self::from_sum(logprobs.iter().sum(), logprobs.len())
    }

    pub fn from_sum(sum_logprob: f64, token_count: usize) -> Result<Self> {
        if token_count == 0 {
            return Err(Error::InvalidLikelihood("token_count must be positive".into()));
        }
        if !sum_logprob.is_finite() || sum_logprob > 0.0 {
            return Err(Error::InvalidLikelihood(format!(
                "sum_logprob {sum_logprob} must be finite and <= 0"
            )));
        }
        let value = libm::exp(sum_logprob / token_count as f64);
        if value <= 0.0 {
            return Err(Error::InvalidLikelihood(format!(
                "normalized likelihood underflows to 0 (sum_logprob {sum_logprob})"
            )));
        }
        Ok(NormalizedLikelihood { value, token_count, sum_logprob })
    }

    /// A single-token likelihood with probability `p`, stored exactly.
    pub fn from_probability(p: f64) -> Result<Self> {
        measures::check_probability("probability", p)?;
        Ok(NormalizedLikelihood { value: p, token_count: 1, sum_logprob: libm::log(p) })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn sum_logprob(&self) -> f64 {
        self.sum_logprob
    }
}

/// The four conditional likelihoods for one (instance, demonstration) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodProfile {
    /// p̂(X|Q)
    pub p_x_q: NormalizedLikelihood,
    /// p̂(X|Q;D)
    pub p_x_qd: NormalizedLikelihood,
    /// p̂(D|Q)
    pub p_d_q: NormalizedLikelihood,
    /// p̂(D|Q;X)
    pub p_d_qx: NormalizedLikelihood,
}

impl LikelihoodProfile {
    pub fn contextual_relevance(&self) -> f64 {
        self.p_x_qd.value() - self.p_x_q.value()
    }

    pub fn learning_gain(&self) -> f64 {
        self.p_d_qx.value() - self.p_d_q.value()
    }
}

/// One datum of the fitted line: s on the x-axis, t on the y-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub instance_id: String,
    pub demo_id: String,
    /// Contextual relevance.
    pub s: f64,
    /// Learning gain.
    pub t: f64,
    pub profile: LikelihoodProfile,
    pub correctness_1shot: Option<bool>,
}

impl ScoredPoint {
    pub fn from_profile(
        instance_id: impl Into<String>,
        demo_id: impl Into<String>,
        profile: LikelihoodProfile,
        correctness_1shot: Option<bool>,
    ) -> Self {
        ScoredPoint {
            instance_id: instance_id.into(),
            demo_id: demo_id.into(),
            s: profile.contextual_relevance(),
            t: profile.learning_gain(),
            profile,
            correctness_1shot,
        }
    }
}
