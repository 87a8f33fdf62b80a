//! Demonstration-to-question similarity: Okapi BM25, n-gram overlap and
//! term-frequency cosine.
//!
//! Text is lowercased and split on every non-alphanumeric character.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn term_counts(tokens: &[String]) -> BTreeMap<&str, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Bm25,
    Ngram,
    Cosine,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(Method::Bm25),
            "ngram" => Ok(Method::Ngram),
            "cosine" => Ok(Method::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown retrieval method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub method: Method,
    pub k1: f64,
    pub b: f64,
    /// n for n-gram overlap.
    pub ngram: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams { method: Method::Bm25, k1: DEFAULT_K1, b: DEFAULT_B, ngram: 2 }
    }
}

/// Immutable retrieval corpus over the demonstration pool.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    doc_ids: Vec<String>,
    positions: HashMap<String, usize>,
    tokens: Vec<Vec<String>>,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    doc_freq: HashMap<String, usize>,
    embeddings: Vec<Option<Vec<f64>>>,
}

impl CorpusIndex {
    pub fn build<I, S, T>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut index = CorpusIndex {
            doc_ids: Vec::new(),
            positions: HashMap::new(),
            tokens: Vec::new(),
            term_freqs: Vec::new(),
            doc_lengths: Vec::new(),
            avg_doc_length: 0.0,
            doc_freq: HashMap::new(),
            embeddings: Vec::new(),
        };
        for (id, text) in docs {
            let id = id.into();
            if index.positions.insert(id.clone(), index.doc_ids.len()).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate document id {id:?}")));
            }
            let tokens = tokenize(text.as_ref());
            let tf: HashMap<String, u32> =
                term_counts(&tokens).into_iter().map(|(t, c)| (t.to_string(), c)).collect();
            for term in tf.keys() {
                *index.doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            index.doc_lengths.push(tokens.len());
            index.term_freqs.push(tf);
            index.tokens.push(tokens);
            index.doc_ids.push(id);
            index.embeddings.push(None);
        }
        if !index.doc_ids.is_empty() {
            index.avg_doc_length =
                index.doc_lengths.iter().sum::<usize>() as f64 / index.doc_ids.len() as f64;
        }
        Ok(index)
    }

    /// Attaches an externally computed embedding to a document.
    pub fn set_embedding(&mut self, doc_id: &str, embedding: Vec<f64>) -> Result<()> {
        let pos = self.position(doc_id)?;
        self.embeddings[pos] = Some(embedding);
        Ok(())
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_id: &str) -> Result<usize> {
        Ok(self.doc_lengths[self.position(doc_id)?])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    fn position(&self, doc_id: &str) -> Result<usize> {
        self.positions.get(doc_id).copied().ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))
    }

    /// `ln(1 + (N − n_t + 0.5) / (n_t + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let nt = self.doc_freq(term) as f64;
        libm::log(1.0 + (n - nt + 0.5) / (nt + 0.5))
    }

    fn bm25_at(&self, query_terms: &[String], pos: usize, k1: f64, b: f64) -> f64 {
        let len_ratio =
            if self.avg_doc_length > 0.0 { self.doc_lengths[pos] as f64 / self.avg_doc_length } else { 0.0 };
        let norm = k1 * (1.0 - b + b * len_ratio);
        query_terms
            .iter()
            .map(|term| {
                let tf = self.term_freqs[pos].get(term).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    0.0
                } else {
                    self.idf(term) * tf * (k1 + 1.0) / (tf + norm)
                }
            })
            .sum()
    }

    fn score_at(&self, query_tokens: &[String], pos: usize, params: &RetrievalParams) -> f64 {
        match params.method {
            Method::Bm25 => self.bm25_at(query_tokens, pos, params.k1, params.b),
            Method::Ngram => overlap_tokens(query_tokens, &self.tokens[pos], params.ngram),
            Method::Cosine => cosine_tokens(query_tokens, &self.tokens[pos]),
        }
    }
}

/// Okapi BM25 score of one document. Each query token contributes, so a
/// repeated query term counts repeatedly.
pub fn bm25_score(query: &str, doc_id: &str, index: &CorpusIndex, k1: f64, b: f64) -> Result<f64> {
    let pos = index.position(doc_id)?;
    Ok(index.bm25_at(&tokenize(query), pos, k1, b))
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], u32> {
    let mut grams = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *grams.entry(w).or_insert(0) += 1;
        }
    }
    grams
}

fn overlap_tokens(query: &[String], doc: &[String], n: usize) -> f64 {
    let q = ngrams(query, n);
    let d = ngrams(doc, n);
    let total: u32 = q.values().sum();
    let shared: u32 = q.iter().map(|(g, c)| (*c).min(d.get(g).copied().unwrap_or(0))).sum();
    shared as f64 / total.max(1) as f64
}

/// Shared n-gram multiset size over the query's n-gram count.
pub fn ngram_overlap(query: &str, doc: &str, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    Ok(overlap_tokens(&tokenize(query), &tokenize(doc), n))
}

fn cosine_tokens(query: &[String], doc: &[String]) -> f64 {
    let q = term_counts(query);
    let d = term_counts(doc);
    if q.is_empty() || d.is_empty() {
        return 0.0;
    }
    let dot: f64 = q.iter().map(|(t, c)| *c as f64 * d.get(t).copied().unwrap_or(0) as f64).sum();
    let norm = |m: &BTreeMap<&str, u32>| m.values().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt();
    (dot / (norm(&q) * norm(&d))).clamp(0.0, 1.0)
}

/// Cosine of raw term-frequency vectors.
pub fn tf_cosine(query: &str, doc: &str) -> f64 {
    cosine_tokens(&tokenize(query), &tokenize(doc))
}

/// Cosine of two dense vectors; 0 when either is all zeros.
pub fn embedding_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

fn rank(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// The `k` best documents, descending score, ties by ascending doc id.
pub fn top_k(
    query: &str,
    index: &CorpusIndex,
    k: usize,
    params: &RetrievalParams,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if params.method == Method::Ngram && params.ngram == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    let query_tokens = tokenize(query);
    let scored = index
        .doc_ids
        .iter()
        .enumerate()
        .map(|(pos, id)| (id.clone(), index.score_at(&query_tokens, pos, params)))
        .collect();
    Ok(rank(scored, k))
}

/// [`top_k`] over precomputed embeddings. Documents without one are skipped.
pub fn top_k_embedding(query: &[f64], index: &CorpusIndex, k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut scored = Vec::new();
    for (id, emb) in index.doc_ids.iter().zip(&index.embeddings) {
        if let Some(emb) = emb {
            scored.push((id.clone(), embedding_cosine(query, emb)?));
        }
    }
    Ok(rank(scored, k))
}

/// [`top_k`] for many queries at once.
pub fn top_k_batch(
    queries: &[String],
    index: &CorpusIndex,
    k: usize,
    params: &RetrievalParams,
) -> Result<Vec<Vec<(String, f64)>>> {
    parallel::try_map(queries, |q| top_k(q, index, k, params))
}
