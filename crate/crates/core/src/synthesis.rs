//! Reasoning paraphrase and synthetic demonstrations.
//!
//! Paraphrasing restyles a human-labeled reasoning chain into the model's own
//! style before scoring, so that learning gain is not inflated by format
//! differences. Synthetic demonstrations let LCS be estimated from questions
//! alone; the resulting slope is expected to understate the labeled one.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    fit_lcs_with, score_instances, FitResult, Orientation, ScoringSetup, DEFAULT_THRESHOLD,
};
use crate::backend::{generate, GenerationRequest, LanguageModel};
use crate::error::{Error, Result};
use crate::parallel;
use crate::selection::preliminary_answer;
use crate::types::{Demonstration, Origin, ScoredPoint, TaskInstance};

pub const DEFAULT_PARAPHRASE_PROMPT: &str = include_str!("../prompts/paraphrase.txt");
pub const DEFAULT_SYNTHESIZE_PROMPT: &str = include_str!("../prompts/synthesize.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Paraphrase,
    Synthesize,
}

impl PromptKind {
    fn required(self) -> &'static [&'static str] {
        match self {
            PromptKind::Paraphrase => &["question", "answer", "reasoning"],
            PromptKind::Synthesize => &["question"],
        }
    }
}

/// Prompt body with `{question}`, `{answer}` and `{reasoning}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    body: String,
}

impl PromptTemplate {
    pub fn new(kind: PromptKind, body: impl Into<String>) -> Result<Self> {
        let body = body.into();
        for placeholder in kind.required() {
            if !body.contains(&format!("{{{placeholder}}}")) {
                return Err(Error::Template {
                    name: format!("{kind:?}").to_lowercase(),
                    placeholder: placeholder.to_string(),
                });
            }
        }
        Ok(PromptTemplate { kind, body })
    }

    pub fn default_paraphrase() -> Self {
        Self::new(PromptKind::Paraphrase, DEFAULT_PARAPHRASE_PROMPT).expect("shipped prompt is valid")
    }

    pub fn default_synthesize() -> Self {
        Self::new(PromptKind::Synthesize, DEFAULT_SYNTHESIZE_PROMPT).expect("shipped prompt is valid")
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn render(&self, question: &str, answer: &str, reasoning: &str) -> String {
        self.body
            .trim_end()
            .replace("{question}", question)
            .replace("{answer}", answer)
            .replace("{reasoning}", reasoning)
    }

    fn expect(&self, kind: PromptKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("expected a {kind:?} prompt, got {:?}", self.kind)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationOptions {
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions { max_tokens: crate::backend::DEFAULT_MAX_TOKENS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParaphraseStatus {
    Restyled,
    /// No reasoning to restyle.
    Unchanged,
    /// Generation failed; the instance passes through unmodified.
    Failed {
        warning: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Paraphrased {
    pub instance: TaskInstance,
    pub status: ParaphraseStatus,
}

/// Restyles the instance's reasoning. Question and reference answer are never
/// touched; the labeled reasoning moves to `original_reasoning`.
///
/// In strict mode a generation failure is an error; otherwise the instance is
/// returned unchanged with a `Failed` status.
pub fn paraphrase<M: LanguageModel + ?Sized>(
    instance: &TaskInstance,
    backend: &M,
    template: &PromptTemplate,
    options: GenerationOptions,
    strict: bool,
) -> Result<Paraphrased> {
    template.expect(PromptKind::Paraphrase)?;
    let Some(reasoning) = instance.reasoning.as_deref().filter(|r| !r.trim().is_empty()) else {
        return Ok(Paraphrased { instance: instance.clone(), status: ParaphraseStatus::Unchanged });
    };
    let prompt = template.render(&instance.question, &instance.reference_output, reasoning);
    let generated = GenerationRequest::new(prompt, options.max_tokens, options.seed)
        .and_then(|req| generate(&req, backend))
        .and_then(|text| {
            let text = text.trim().to_string();
            if text.is_empty() {
                Err(Error::Empty("paraphrased reasoning"))
            } else {
                Ok(text)
            }
        });
    match generated {
        Ok(text) => {
            let mut restyled = instance.clone();
            restyled.original_reasoning = Some(reasoning.to_string());
            restyled.reasoning = Some(text);
            Ok(Paraphrased { instance: restyled, status: ParaphraseStatus::Restyled })
        }
        Err(e) if strict => {
            Err(Error::InvalidArgument(format!("paraphrase of instance {:?} failed: {e}", instance.id)))
        }
        Err(e) => {
            let warning = format!("paraphrase of instance {:?} failed: {e}", instance.id);
            warn!("{warning}");
            Ok(Paraphrased { instance: instance.clone(), status: ParaphraseStatus::Failed { warning } })
        }
    }
}

/// Paraphrases a dataset; order is preserved.
pub fn paraphrase_all<M: LanguageModel + ?Sized>(
    instances: &[TaskInstance],
    backend: &M,
    template: &PromptTemplate,
    options: GenerationOptions,
    strict: bool,
) -> Result<Vec<Paraphrased>> {
    parallel::try_map(instances, |i| paraphrase(i, backend, template, options, strict))
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Generates one synthetic demonstration for `question`. The demonstration
/// keeps the question and takes the generated text as its output.
pub fn synthesize_demo<M: LanguageModel + ?Sized>(
    question: &str,
    backend: &M,
    template: &PromptTemplate,
    options: GenerationOptions,
) -> Result<Demonstration> {
    template.expect(PromptKind::Synthesize)?;
    if question.trim().is_empty() {
        return Err(Error::Empty("question"));
    }
    let request =
        GenerationRequest::new(template.render(question, "", ""), options.max_tokens, options.seed)?;
    let output = generate(&request, backend)?.trim().to_string();
    if output.is_empty() {
        return Err(Error::InvalidArgument(format!("synthesis for question {question:?} produced no text")));
    }
    Demonstration::new(
        format!("syn-{:016x}-{}", fnv1a(question), options.seed),
        question,
        output,
        Origin::Synthetic,
    )
}

/// A fit tagged with where its demonstrations came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedFit {
    pub origin: Origin,
    pub fit: FitResult,
    #[serde(skip)]
    pub points: Vec<ScoredPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub threshold: f64,
    pub orientation: Orientation,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { threshold: DEFAULT_THRESHOLD, orientation: Orientation::GainOnRelevance }
    }
}

/// Fits points that already carry an origin; shared by the labeled and
/// synthetic paths.
pub fn fit_tagged(points: Vec<ScoredPoint>, origin: Origin, options: &FitOptions) -> Result<TaggedFit> {
    let fit = fit_lcs_with(&points, options.threshold, options.orientation)?;
    Ok(TaggedFit { origin, fit, points })
}

/// LCS with reference outputs and labeled demonstrations.
pub fn lcs_with_labels<M: LanguageModel + ?Sized>(
    work: &[(TaskInstance, Vec<Demonstration>)],
    backend: &M,
    setup: &ScoringSetup,
    options: &FitOptions,
) -> Result<TaggedFit> {
    let points = score_instances(work, backend, setup)?;
    fit_tagged(points, Origin::Labeled, options)
}

/// Label-free scoring work: for each `(id, question)`, an instance whose
/// output is the model's preliminary answer X̂, paired with `k` synthetic
/// demonstrations generated with seeds `seed, seed + 1, ...`.
pub fn synthetic_workload<M: LanguageModel + ?Sized>(
    questions: &[(String, String)],
    backend: &M,
    setup: &ScoringSetup,
    template: &PromptTemplate,
    k: usize,
    generation: GenerationOptions,
) -> Result<Vec<(TaskInstance, Vec<Demonstration>)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    template.expect(PromptKind::Synthesize)?;
    parallel::try_map(questions, |(id, question)| {
        let x_hat =
            preliminary_answer(question, backend, &setup.template, generation.max_tokens, generation.seed)?;
        if x_hat.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "instance {id:?}: the model produced no preliminary answer"
            )));
        }
        let demos = (0..k as u64)
            .map(|j| {
                let options = GenerationOptions { seed: generation.seed.wrapping_add(j), ..generation };
                synthesize_demo(question, backend, template, options)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((TaskInstance::new(id.as_str(), question.as_str(), x_hat)?, demos))
    })
}

/// LCS from questions only: the preliminary answer X̂ replaces X and `k`
/// synthetic demonstrations per question replace D.
pub fn lcs_without_labels<M: LanguageModel + ?Sized>(
    questions: &[String],
    backend: &M,
    setup: &ScoringSetup,
    template: &PromptTemplate,
    k: usize,
    generation: GenerationOptions,
    options: &FitOptions,
) -> Result<TaggedFit> {
    if questions.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 questions, got {}", questions.len())));
    }
    let identified: Vec<(String, String)> =
        questions.iter().enumerate().map(|(i, q)| (format!("q{i:05}"), q.clone())).collect();
    let work = synthetic_workload(&identified, backend, setup, template, k, generation)?;
    let points = score_instances(&work, backend, setup)?;
    fit_tagged(points, Origin::Synthetic, options)
}
