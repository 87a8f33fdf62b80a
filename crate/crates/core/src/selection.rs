//! Demonstration selection by learning gain.
//!
//! The model first answers the question zero-shot; that preliminary answer
//! X̂ stands in for the unknown reference output, and each candidate d is
//! ranked by `p̂(d|Q;X̂) − p̂(d|Q)`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::analysis::ScoringSetup;
use crate::backend::{generate, score, GenerationRequest, LanguageModel, ScoringRequest, TemplateSpec};
use crate::error::{Error, Result};
use crate::parallel;
use crate::retrieval::{top_k, CorpusIndex, RetrievalParams};
use crate::types::Demonstration;

pub const DEFAULT_PREFILTER: usize = 50;

/// Zero-shot answer to `question` under `template`.
pub fn preliminary_answer<M: LanguageModel + ?Sized>(
    question: &str,
    backend: &M,
    template: &TemplateSpec,
    max_tokens: usize,
    seed: u64,
) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::Empty("question"));
    }
    let request = GenerationRequest::new(template.prefix(question), max_tokens, seed)?;
    Ok(generate(&request, backend)?.trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedDemo {
    pub demo: Demonstration,
    pub gain: f64,
}

fn by_gain(a: &RankedDemo, b: &RankedDemo) -> Ordering {
    b.gain.total_cmp(&a.gain).then_with(|| a.demo.id.cmp(&b.demo.id))
}

/// Learning gain of every candidate, best first (ties by ascending id).
pub fn rank_by_learning_gain<M: LanguageModel + ?Sized>(
    question: &str,
    x_hat: &str,
    candidates: &[Demonstration],
    backend: &M,
    setup: &ScoringSetup,
) -> Result<Vec<RankedDemo>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate demonstrations"));
    }
    if x_hat.trim().is_empty() {
        return Err(Error::Empty("preliminary answer"));
    }
    let template = &setup.template;
    let with_answer = match setup.order {
        crate::analysis::ConditionOrder::QuestionFirst => template.join(question, x_hat),
        crate::analysis::ConditionOrder::QuestionLast => template.join(x_hat, question),
    };
    let mut ranked = parallel::try_map(candidates, |demo| {
        let text = demo.text(&template.separator);
        let tag = |e: Error| match e {
            Error::Scoring { context, source } => {
                Error::Scoring { context: format!("candidate {:?}: {context}", demo.id), source }
            }
            other => other,
        };
        let informed = score(&ScoringRequest::new(with_answer.as_str(), text.as_str(), template), backend)
            .map_err(tag)?;
        let prior = score(&ScoringRequest::new(question, text.as_str(), template), backend).map_err(tag)?;
        Ok(RankedDemo { demo: demo.clone(), gain: informed.value() - prior.value() })
    })?;
    ranked.sort_by(by_gain);
    Ok(ranked)
}

/// The `k` candidates with the largest learning gain.
pub fn select_by_learning_gain<M: LanguageModel + ?Sized>(
    question: &str,
    x_hat: &str,
    candidates: &[Demonstration],
    backend: &M,
    setup: &ScoringSetup,
    k: usize,
) -> Result<Vec<Demonstration>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut ranked = rank_by_learning_gain(question, x_hat, candidates, backend, setup)?;
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|r| r.demo).collect())
}

/// A demonstration pool indexed for retrieval by demonstration question.
#[derive(Debug, Clone)]
pub struct DemoPool {
    demos: Vec<Demonstration>,
    index: CorpusIndex,
}

impl DemoPool {
    pub fn new(demos: Vec<Demonstration>) -> Result<Self> {
        let index = CorpusIndex::build(demos.iter().map(|d| (d.id.clone(), d.question.as_str())))?;
        let mut pool = DemoPool { demos, index };
        for demo in &pool.demos {
            if let Some(e) = &demo.embedding {
                pool.index.set_embedding(&demo.id, e.clone())?;
            }
        }
        Ok(pool)
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.iter().find(|d| d.id == id)
    }

    /// The `k` most similar demonstrations to `question`.
    pub fn retrieve(&self, question: &str, k: usize, params: &RetrievalParams) -> Result<Vec<Demonstration>> {
        Ok(top_k(question, &self.index, k, params)?
            .into_iter()
            .filter_map(|(id, _)| self.get(&id).cloned())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub k: usize,
    /// Retrieval prefilter size; `None` reranks the whole pool.
    pub prefilter_m: Option<usize>,
    pub retrieval: RetrievalParams,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k: 1,
            prefilter_m: Some(DEFAULT_PREFILTER),
            retrieval: RetrievalParams::default(),
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub question: String,
    pub preliminary_answer: String,
    /// Retrieval candidates in retrieval order.
    pub candidates: Vec<String>,
    pub selected: Vec<RankedDemo>,
}

/// Retrieval top-m, then learning-gain top-k among them.
pub fn select_pipeline<M: LanguageModel + ?Sized>(
    question: &str,
    pool: &DemoPool,
    backend: &M,
    setup: &ScoringSetup,
    config: &SelectionConfig,
) -> Result<Selection> {
    if config.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if pool.is_empty() {
        return Err(Error::Empty("demonstration pool"));
    }
    let m = config.prefilter_m.unwrap_or(pool.len());
    if m < config.k {
        return Err(Error::InvalidArgument(format!("prefilter size {m} is smaller than k = {}", config.k)));
    }
    let candidates = pool.retrieve(question, m.min(pool.len()), &config.retrieval)?;
    let x_hat = preliminary_answer(question, backend, &setup.template, config.max_tokens, config.seed)?;
    let mut ranked = rank_by_learning_gain(question, &x_hat, &candidates, backend, setup)?;
    ranked.truncate(config.k);
    Ok(Selection {
        question: question.to_string(),
        preliminary_answer: x_hat,
        candidates: candidates.into_iter().map(|d| d.id).collect(),
        selected: ranked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ReferenceLm, VocabMode};
    use crate::types::Origin;

    fn demo(id: &str, q: &str, o: &str) -> Demonstration {
        Demonstration::new(id, q, o, Origin::Labeled).unwrap()
    }

    #[test]
    fn preliminary_answer_example() {
        let lm = ReferenceLm::from_corpus("a b a b", 1.0, VocabMode::Closed).unwrap();
        let template = TemplateSpec::plain(" ");
        assert_eq!(preliminary_answer("a", &lm, &template, 1, 0).unwrap(), "b");
        assert_eq!(
            preliminary_answer("a", &lm, &template, 1, 9).unwrap(),
            preliminary_answer("a", &lm, &template, 1, 9).unwrap()
        );
        assert!(preliminary_answer("  ", &lm, &template, 1, 0).is_err());
    }

    #[test]
    fn subset_and_sorted() {
        let lm = ReferenceLm::from_corpus("q1 a1 e f\ng h q2 a2", 1.0, VocabMode::Open).unwrap();
        let setup = ScoringSetup::new(TemplateSpec::plain(" "));
        let cands = vec![demo("c", "e", "f"), demo("a", "g", "h"), demo("b", "q2", "a2")];
        for k in 1..=4 {
            let ranked = rank_by_learning_gain("q1", "a1", &cands, &lm, &setup).unwrap();
            let chosen = select_by_learning_gain("q1", "a1", &cands, &lm, &setup, k).unwrap();
            assert_eq!(chosen.len(), k.min(cands.len()));
            for (c, r) in chosen.iter().zip(&ranked) {
                assert_eq!(c, &r.demo);
            }
            assert!(ranked.windows(2).all(|w| by_gain(&w[0], &w[1]) != Ordering::Greater));
        }
        assert!(select_by_learning_gain("q1", "a1", &cands, &lm, &setup, 0).is_err());
        assert!(select_by_learning_gain("q1", "a1", &[], &lm, &setup, 1).is_err());
    }

    #[test]
    fn positive_gain_beats_zero_gain() {
        // Bigram model, question-first: p̂(d|Q;X̂) depends on X̂'s last token
        // only. "a1" is followed by "e" in the corpus, nothing precedes "zz".
        let lm = ReferenceLm::from_corpus("q1 a1 e f", 1.0, VocabMode::Open).unwrap();
        let setup = ScoringSetup::new(TemplateSpec::plain(" "));
        let cands = vec![demo("a-same", "q1", "a1"), demo("b-good", "e", "f")];
        let ranked = rank_by_learning_gain("q1", "a1", &cands, &lm, &setup).unwrap();
        assert_eq!(ranked[0].demo.id, "b-good");
        assert!(ranked[0].gain > 0.0);
    }
}
