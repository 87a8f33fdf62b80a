//! JSONL ingestion for datasets and demonstration pools.
//!
//! Dataset line: `{"id", "question", "answer", "reasoning"?, "correct_1shot"?, "correct_0shot"?}`.
//! Pool line: `{"id", "question", "output", "embedding"?}`.
//! Blank lines are skipped; unknown keys are ignored. Every error names the
//! file and the 1-based line.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use iclslope::{Demonstration, Origin, TaskInstance};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_1shot: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_0shot: Option<bool>,
}

impl DatasetRecord {
    pub fn into_instance(self) -> iclslope::Result<TaskInstance> {
        let mut instance = TaskInstance::new(self.id, self.question, self.answer)?;
        instance.reasoning = self.reasoning;
        instance.original_reasoning = self.original_reasoning;
        instance.correctness_1shot = self.correct_1shot;
        instance.correctness_0shot = self.correct_0shot;
        Ok(instance)
    }

    pub fn from_instance(instance: &TaskInstance) -> Self {
        DatasetRecord {
            id: instance.id.clone(),
            question: instance.question.clone(),
            answer: instance.reference_output.clone(),
            reasoning: instance.reasoning.clone(),
            original_reasoning: instance.original_reasoning.clone(),
            correct_1shot: instance.correctness_1shot,
            correct_0shot: instance.correctness_0shot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub id: String,
    pub question: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl PoolRecord {
    pub fn from_demo(demo: &Demonstration) -> Self {
        PoolRecord {
            id: demo.id.clone(),
            question: demo.question.clone(),
            output: demo.output.clone(),
            embedding: demo.embedding.clone(),
        }
    }
}

/// A parsed line together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Located<T> {
    pub line: usize,
    pub raw: String,
    pub value: T,
}

/// Parses JSONL text, rejecting duplicate ids. `source` names the input in
/// error messages.
pub fn parse_jsonl<T, F>(text: &str, source: &str, id_of: F) -> Result<Vec<Located<T>>>
where
    T: DeserializeOwned,
    F: Fn(&T) -> &str,
{
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(raw).map_err(|e| anyhow!("{source}:{line}: {e}"))?;
        let id = id_of(&value).to_string();
        if let Some(first) = seen.insert(id.clone(), line) {
            bail!("{source}: duplicate id {id:?} at lines {first} and {line}");
        }
        out.push(Located { line, raw: raw.to_string(), value });
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))
}

pub fn parse_dataset(text: &str, source: &str) -> Result<Vec<Located<TaskInstance>>> {
    parse_jsonl::<DatasetRecord, _>(text, source, |r| &r.id)?
        .into_iter()
        .map(|rec| {
            let line = rec.line;
            let value = rec.value.into_instance().map_err(|e| anyhow!("{source}:{line}: {e}"))?;
            Ok(Located { line, raw: rec.raw, value })
        })
        .collect()
}

pub fn parse_pool(text: &str, source: &str) -> Result<Vec<Located<Demonstration>>> {
    parse_jsonl::<PoolRecord, _>(text, source, |r| &r.id)?
        .into_iter()
        .map(|rec| {
            let line = rec.line;
            let PoolRecord { id, question, output, embedding } = rec.value;
            let mut demo = Demonstration::new(id, question, output, Origin::Labeled)
                .map_err(|e| anyhow!("{source}:{line}: {e}"))?;
            if let Some(e) = &embedding {
                if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
                    bail!("{source}:{line}: embedding must be a non-empty list of finite numbers");
                }
            }
            demo.embedding = embedding;
            Ok(Located { line, raw: rec.raw, value: demo })
        })
        .collect()
}

/// One task instance per non-blank line.
pub fn ingest_dataset(path: &Path) -> Result<Vec<TaskInstance>> {
    Ok(parse_dataset(&read(path)?, &path.display().to_string())?.into_iter().map(|l| l.value).collect())
}

/// One demonstration per non-blank line.
pub fn ingest_pool(path: &Path) -> Result<Vec<Demonstration>> {
    Ok(parse_pool(&read(path)?, &path.display().to_string())?.into_iter().map(|l| l.value).collect())
}
