use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{GenerationRequest, LanguageModel};
use crate::error::{BackendError, Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
/// Appended to every corpus line in [`VocabMode::Open`]; greedy generation
/// stops when it is produced.
pub const BOUNDARY_TOKEN: &str = "</s>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VocabMode {
    /// V is exactly the corpus tokens; unseen tokens are an error.
    Closed,
    /// V is the corpus tokens plus `<unk>` and `</s>`; unseen tokens map to `<unk>`.
    #[default]
    Open,
}

/// Whitespace-tokenized bigram model with additive smoothing.
///
/// `p(next | prev) = (count(prev, next) + alpha) / (count(prev, ·) + alpha * |V|)`.
/// The first token of a sequence with no context uses the smoothed unigram
/// distribution `(count(w) + alpha) / (N + alpha * |V|)`. Bigrams never cross
/// corpus lines.
#[derive(Debug, Clone)]
pub struct ReferenceLm {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    bigram_counts: Vec<BTreeMap<usize, u64>>,
    row_totals: Vec<u64>,
    unigram_counts: Vec<u64>,
    unigram_total: u64,
    smoothing_alpha: f64,
    mode: VocabMode,
}

impl ReferenceLm {
    pub fn from_corpus(corpus: &str, smoothing_alpha: f64, mode: VocabMode) -> Result<Self> {
        Self::from_lines(corpus.lines(), smoothing_alpha, mode)
    }

    pub fn from_lines<'a, I>(lines: I, smoothing_alpha: f64, mode: VocabMode) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if !(smoothing_alpha.is_finite() && smoothing_alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing alpha must be positive, got {smoothing_alpha}"
            )));
        }
        let sequences: Vec<Vec<&str>> = lines
            .into_iter()
            .map(|line| {
                let mut tokens: Vec<&str> = line.split_whitespace().collect();
                if mode == VocabMode::Open && !tokens.is_empty() {
                    tokens.push(BOUNDARY_TOKEN);
                }
                tokens
            })
            .filter(|t| !t.is_empty())
            .collect();

        let mut vocab: BTreeSet<&str> = sequences.iter().flatten().copied().collect();
        if mode == VocabMode::Open {
            vocab.insert(UNK_TOKEN);
            vocab.insert(BOUNDARY_TOKEN);
        }
        if vocab.is_empty() {
            return Err(Error::Empty("reference corpus"));
        }
        let vocab: Vec<String> = vocab.into_iter().map(str::to_string).collect();
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

        let mut bigram_counts = vec![BTreeMap::new(); vocab.len()];
        let mut row_totals = vec![0u64; vocab.len()];
        let mut unigram_counts = vec![0u64; vocab.len()];
        for seq in &sequences {
            let ids: Vec<usize> = seq.iter().map(|t| index[*t]).collect();
            for &id in &ids {
                unigram_counts[id] += 1;
            }
            for pair in ids.windows(2) {
                *bigram_counts[pair[0]].entry(pair[1]).or_insert(0) += 1;
                row_totals[pair[0]] += 1;
            }
        }
        let unigram_total = unigram_counts.iter().sum();

        Ok(ReferenceLm {
            vocab,
            index,
            bigram_counts,
            row_totals,
            unigram_counts,
            unigram_total,
            smoothing_alpha,
            mode,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn bigram_count(&self, prev: &str, next: &str) -> u64 {
        match (self.index.get(prev), self.index.get(next)) {
            (Some(&p), Some(&n)) => self.bigram_counts[p].get(&n).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn unigram_count(&self, token: &str) -> u64 {
        self.index.get(token).map(|&i| self.unigram_counts[i]).unwrap_or(0)
    }

    fn token_id(&self, token: &str) -> Result<usize, BackendError> {
        match self.index.get(token) {
            Some(&id) => Ok(id),
            None => match self.mode {
                VocabMode::Open => Ok(self.index[UNK_TOKEN]),
                VocabMode::Closed => Err(BackendError::InvalidRequest(format!(
                    "token {token:?} is not in the closed vocabulary"
                ))),
            },
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<usize>, BackendError> {
        text.split_whitespace().map(|t| self.token_id(t)).collect()
    }

    fn prob_ids(&self, prev: Option<usize>, next: usize) -> f64 {
        let alpha = self.smoothing_alpha;
        let v = self.vocab.len() as f64;
        match prev {
            Some(p) => {
                let c = self.bigram_counts[p].get(&next).copied().unwrap_or(0) as f64;
                (c + alpha) / (self.row_totals[p] as f64 + alpha * v)
            }
            None => (self.unigram_counts[next] as f64 + alpha) / (self.unigram_total as f64 + alpha * v),
        }
    }

    /// Smoothed `p(next | prev)`; `prev = None` means no context.
    pub fn probability(&self, prev: Option<&str>, next: &str) -> Result<f64, BackendError> {
        let prev = prev.map(|p| self.token_id(p)).transpose()?;
        Ok(self.prob_ids(prev, self.token_id(next)?))
    }

    /// The full smoothed distribution following `prev`, in vocab order.
    pub fn row(&self, prev: Option<&str>) -> Result<Vec<f64>, BackendError> {
        let prev = prev.map(|p| self.token_id(p)).transpose()?;
        Ok((0..self.vocab.len()).map(|n| self.prob_ids(prev, n)).collect())
    }
}

impl LanguageModel for ReferenceLm {
    fn continuation_logprobs(&self, context: &str, continuation: &str) -> Result<Vec<f64>, BackendError> {
        let mut prev = self.tokenize(context)?.last().copied();
        let target = self.tokenize(continuation)?;
        Ok(target
            .into_iter()
            .map(|next| {
                let lp = libm::log(self.prob_ids(prev, next));
                prev = Some(next);
                lp
            })
            .collect())
    }

    /// Greedy decoding. Ties go to the earliest token in vocab order. Stops at
    /// `max_tokens`, at `</s>`, or when the last token was never followed by
    /// anything in the corpus.
    fn generate_text(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        if request.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        let boundary = self.index.get(BOUNDARY_TOKEN).copied();
        let mut prev = self.tokenize(&request.prompt)?.last().copied();
        let mut out: Vec<&str> = Vec::new();
        while out.len() < request.max_tokens {
            if let Some(p) = prev {
                if self.row_totals[p] == 0 {
                    break;
                }
            }
            let mut best = 0;
            let mut best_p = f64::NEG_INFINITY;
            for next in 0..self.vocab.len() {
                let p = self.prob_ids(prev, next);
                if p > best_p {
                    best = next;
                    best_p = p;
                }
            }
            if Some(best) == boundary {
                break;
            }
            out.push(&self.vocab[best]);
            prev = Some(best);
        }
        Ok(out.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{generate, score, ScoringRequest, TemplateSpec};

    fn abab() -> ReferenceLm {
        ReferenceLm::from_corpus("a b a b", 1.0, VocabMode::Closed).unwrap()
    }

    #[test]
    fn smoothed_bigram_example() {
        let lm = abab();
        assert_eq!(lm.vocab(), &["a".to_string(), "b".to_string()]);
        assert_eq!(lm.bigram_count("a", "b"), 2);
        assert_eq!(lm.bigram_count("b", "a"), 1);
        let t = TemplateSpec::plain(" ");
        let p = score(&ScoringRequest::new("a", "b", &t), &lm).unwrap();
        assert!((p.value() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn greedy_generation_example() {
        let lm = abab();
        let req = GenerationRequest::new("a", 1, 0).unwrap();
        assert_eq!(generate(&req, &lm).unwrap(), "b");
        assert_eq!(generate(&req, &lm).unwrap(), generate(&req, &lm).unwrap());
        let longer = GenerationRequest::new("a", 3, 0).unwrap();
        assert_eq!(generate(&longer, &lm).unwrap(), "b a b");
    }

    #[test]
    fn rows_sum_to_one() {
        let lm =
            ReferenceLm::from_corpus("the cat sat on the mat\nthe dog sat\na b c a b", 0.5, VocabMode::Open)
                .unwrap();
        let mut contexts: Vec<Option<&str>> = lm.vocab().iter().map(|t| Some(t.as_str())).collect();
        contexts.push(None);
        for c in contexts {
            let sum: f64 = lm.row(c).unwrap().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "context {c:?} sums to {sum}");
        }
    }

    #[test]
    fn closed_vocab_rejects_unknown_open_maps_to_unk() {
        assert!(abab().probability(Some("a"), "zzz").is_err());
        let open = ReferenceLm::from_corpus("a b a b", 1.0, VocabMode::Open).unwrap();
        assert_eq!(
            open.probability(Some("a"), "zzz").unwrap(),
            open.probability(Some("a"), UNK_TOKEN).unwrap()
        );
    }

    #[test]
    fn open_mode_stops_at_boundary() {
        let lm = ReferenceLm::from_corpus("x y z", 1.0, VocabMode::Open).unwrap();
        let req = GenerationRequest::new("x", 100, 0).unwrap();
        assert_eq!(generate(&req, &lm).unwrap(), "y z");
    }

    #[test]
    fn lines_do_not_share_bigrams() {
        let lm = ReferenceLm::from_corpus("a b\nc d", 1.0, VocabMode::Closed).unwrap();
        assert_eq!(lm.bigram_count("b", "c"), 0);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(ReferenceLm::from_corpus("a", 0.0, VocabMode::Closed).is_err());
        assert!(ReferenceLm::from_corpus("", 1.0, VocabMode::Closed).is_err());
    }
}
