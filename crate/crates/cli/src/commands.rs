//! Subcommand implementations. Each `run_*` function reads its inputs, calls
//! into the library and writes its outputs at the end; the pure parts are
//! exposed separately so they can be driven with any backend.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use iclslope::analysis::{diagnostics, filter_bad_cases};
use iclslope::backend::{LanguageModel, ReferenceLm, RemoteBackend};
use iclslope::oracle::{run_suite, SuiteConfig, SuiteReport};
use iclslope::selection::{select_pipeline, DemoPool, Selection, SelectionConfig};
use iclslope::synthesis::{
    fit_tagged, paraphrase_all, synthetic_workload, FitOptions, GenerationOptions, ParaphraseStatus,
    PromptKind, PromptTemplate,
};
use iclslope::{fit_lcs_with, score_instances, Demonstration, Error, Origin, ScoredPoint, TaskInstance};
use log::{info, warn};
use serde::Serialize;

use crate::config::{BackendConfig, RunConfig, Subset};
use crate::ingest::{self, DatasetRecord, PoolRecord};
use crate::report::{self, Report};

/// Instances paired with their demonstrations.
pub type Work = Vec<(TaskInstance, Vec<Demonstration>)>;

pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const SYNTHETIC_POOL_FILE: &str = "synthetic_pool.jsonl";
pub const PARAPHRASED_FILE: &str = "paraphrased.jsonl";
pub const ORACLE_REPORT_FILE: &str = "oracle_report.json";

/// Instantiates the configured backend.
pub fn build_backend(config: &RunConfig) -> Result<Box<dyn LanguageModel>> {
    match &config.backend {
        BackendConfig::Reference { corpus, alpha, vocab } => {
            let Some(path) = corpus else {
                bail!("the reference backend requires a training corpus (--corpus or `corpus` in the config file)");
            };
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("{}: cannot read corpus", path.display()))?;
            let lm = ReferenceLm::from_corpus(&text, *alpha, *vocab)
                .with_context(|| format!("{}: cannot build reference model", path.display()))?;
            Ok(Box::new(lm))
        }
        BackendConfig::Remote(remote) => Ok(Box::new(RemoteBackend::new(remote.clone())?)),
    }
}

/// Points and report of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Every scored point, before subset filtering.
    pub all_points: Vec<ScoredPoint>,
    /// The points the line was fitted to.
    pub points: Vec<ScoredPoint>,
    pub report: Report,
}

/// Retrieves `shots` demonstrations per instance from `pool`.
pub fn assign_demos(
    config: &RunConfig,
    instances: &[TaskInstance],
    pool: &[Demonstration],
) -> Result<Vec<(TaskInstance, Vec<Demonstration>)>> {
    if pool.len() < config.shots {
        bail!("the pool has {} demonstrations but shots = {}", pool.len(), config.shots);
    }
    let pool = DemoPool::new(pool.to_vec())?;
    instances
        .iter()
        .map(|inst| {
            let demos = pool
                .retrieve(&inst.question, config.shots, &config.retrieval)
                .with_context(|| format!("instance {:?}: retrieval failed", inst.id))?;
            Ok((inst.clone(), demos))
        })
        .collect()
}

/// Scores, filters and fits already-assembled work.
pub fn evaluate_work(
    config: &RunConfig,
    work: &[(TaskInstance, Vec<Demonstration>)],
    backend: &dyn LanguageModel,
    origin: Origin,
) -> Result<Evaluation> {
    if config.subset == Subset::BadCases {
        if let Some((inst, _)) = work.iter().find(|(i, _)| i.correctness_1shot.is_none()) {
            bail!(
                "subset = bad_cases needs correct_1shot on every instance; instance {:?} has none",
                inst.id
            );
        }
    }
    let all_points = score_instances(work, backend, &config.scoring_setup())
        .context("scoring failed; nothing was fitted")?;
    let points = match config.subset {
        Subset::All => all_points.clone(),
        Subset::BadCases => filter_bad_cases(&all_points)?,
    };
    let fit = fit_lcs_with(&points, config.threshold, config.orientation).map_err(|e| match e {
        Error::DegenerateFit(why) => anyhow!("degenerate fit over {} points: {why}", points.len()),
        other => other.into(),
    })?;
    let diag = diagnostics(&points)?;
    let shots = work.iter().map(|(_, d)| d.len()).max().unwrap_or(0);
    let report = Report::new(&fit, &diag, config.subset.as_str(), origin, shots);
    Ok(Evaluation { all_points, points, report })
}

/// The full evaluation: retrieval, scoring, fitting.
pub fn evaluate(
    config: &RunConfig,
    instances: &[TaskInstance],
    pool: &[Demonstration],
    backend: &dyn LanguageModel,
) -> Result<Evaluation> {
    if instances.is_empty() {
        bail!("the dataset is empty");
    }
    let origin = if instances.iter().any(|i| i.original_reasoning.is_some()) {
        Origin::Paraphrased
    } else {
        Origin::Labeled
    };
    let work = assign_demos(config, instances, pool)?;
    evaluate_work(config, &work, backend, origin)
}

pub fn run_evaluate(config: &RunConfig, dataset: &Path, pool: &Path) -> Result<Report> {
    let instances = ingest::ingest_dataset(dataset)?;
    let demos = ingest::ingest_pool(pool)?;
    let backend = build_backend(config)?;
    let eval = evaluate(config, &instances, &demos, backend.as_ref())?;
    let (report_path, points_path) = report::write_outputs(&config.out_dir, &eval.report, &eval.points)?;
    info!("wrote {} and {}", report_path.display(), points_path.display());
    Ok(eval.report)
}

#[derive(Debug, Clone, Serialize)]
struct SelectedDemo<'a> {
    id: &'a str,
    gain: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SelectionLine<'a> {
    id: &'a str,
    question: &'a str,
    preliminary_answer: &'a str,
    candidates: &'a [String],
    selected: Vec<SelectedDemo<'a>>,
}

pub fn select(
    config: &RunConfig,
    instances: &[TaskInstance],
    pool: &[Demonstration],
    backend: &dyn LanguageModel,
) -> Result<Vec<Selection>> {
    let pool = DemoPool::new(pool.to_vec())?;
    let selection = SelectionConfig {
        k: config.k,
        prefilter_m: Some(config.prefilter.max(config.k)),
        retrieval: config.retrieval,
        max_tokens: config.max_tokens,
        seed: config.seed,
    };
    let setup = config.scoring_setup();
    iclslope::parallel::try_map(instances, |inst| {
        select_pipeline(&inst.question, &pool, backend, &setup, &selection)
            .map_err(|e| anyhow!("instance {:?}: {e}", inst.id))
    })
}

pub fn selections_jsonl(instances: &[TaskInstance], selections: &[Selection]) -> String {
    instances
        .iter()
        .zip(selections)
        .map(|(inst, sel)| {
            let line = SelectionLine {
                id: &inst.id,
                question: &sel.question,
                preliminary_answer: &sel.preliminary_answer,
                candidates: &sel.candidates,
                selected: sel
                    .selected
                    .iter()
                    .map(|r| SelectedDemo { id: &r.demo.id, gain: r.gain })
                    .collect(),
            };
            serde_json::to_string(&line).expect("selection serializes") + "\n"
        })
        .collect()
}

pub fn run_select(config: &RunConfig, dataset: &Path, pool: &Path) -> Result<PathBuf> {
    let instances = ingest::ingest_dataset(dataset)?;
    let demos = ingest::ingest_pool(pool)?;
    let backend = build_backend(config)?;
    let selections = select(config, &instances, &demos, backend.as_ref())?;
    let path = config.out_dir.join(SELECTIONS_FILE);
    report::write_text(&path, &selections_jsonl(&instances, &selections))?;
    Ok(path)
}

fn load_prompt(kind: PromptKind, path: Option<&Path>) -> Result<PromptTemplate> {
    match path {
        None => Ok(match kind {
            PromptKind::Paraphrase => PromptTemplate::default_paraphrase(),
            PromptKind::Synthesize => PromptTemplate::default_synthesize(),
        }),
        Some(p) => {
            let body =
                std::fs::read_to_string(p).with_context(|| format!("{}: cannot read prompt", p.display()))?;
            PromptTemplate::new(kind, body).with_context(|| format!("{}: invalid prompt", p.display()))
        }
    }
}

fn generation(config: &RunConfig) -> GenerationOptions {
    GenerationOptions { max_tokens: config.max_tokens, seed: config.seed }
}

/// Synthetic demonstrations for each question, plus the label-free fit when
/// `fit` is set.
pub fn synthesize(
    config: &RunConfig,
    instances: &[TaskInstance],
    backend: &dyn LanguageModel,
    prompt: &PromptTemplate,
    fit: bool,
) -> Result<(Work, Option<Evaluation>)> {
    let questions: Vec<(String, String)> =
        instances.iter().map(|i| (i.id.clone(), i.question.clone())).collect();
    let setup = config.scoring_setup();
    let work = synthetic_workload(&questions, backend, &setup, prompt, config.k, generation(config))?;
    if !fit {
        return Ok((work, None));
    }
    let points = score_instances(&work, backend, &setup).context("scoring failed; nothing was fitted")?;
    let options = FitOptions { threshold: config.threshold, orientation: config.orientation };
    let tagged =
        fit_tagged(points, Origin::Synthetic, &options).map_err(|e| anyhow!("label-free fit: {e}"))?;
    let diag = diagnostics(&tagged.points)?;
    let report = Report::new(&tagged.fit, &diag, Subset::All.as_str(), Origin::Synthetic, config.k);
    Ok((work, Some(Evaluation { all_points: tagged.points.clone(), points: tagged.points, report })))
}

pub fn run_synthesize(
    config: &RunConfig,
    dataset: &Path,
    prompt: Option<&Path>,
    fit: bool,
) -> Result<Option<Report>> {
    let instances = ingest::ingest_dataset(dataset)?;
    let prompt = load_prompt(PromptKind::Synthesize, prompt)?;
    let backend = build_backend(config)?;
    let (work, eval) = synthesize(config, &instances, backend.as_ref(), &prompt, fit)?;
    let mut pool = String::new();
    for demo in work.iter().flat_map(|(_, d)| d) {
        pool.push_str(&serde_json::to_string(&PoolRecord::from_demo(demo))?);
        pool.push('\n');
    }
    report::write_text(&config.out_dir.join(SYNTHETIC_POOL_FILE), &pool)?;
    if let Some(eval) = &eval {
        report::write_outputs(&config.out_dir, &eval.report, &eval.points)?;
    }
    Ok(eval.map(|e| e.report))
}

/// Paraphrased dataset text. Lines whose instance was not restyled are copied
/// byte for byte, so a reasoning-free dataset comes back unchanged.
pub fn paraphrase_text(
    config: &RunConfig,
    text: &str,
    source: &str,
    backend: &dyn LanguageModel,
    prompt: &PromptTemplate,
) -> Result<(String, usize)> {
    let rows = ingest::parse_dataset(text, source)?;
    let instances: Vec<TaskInstance> = rows.iter().map(|r| r.value.clone()).collect();
    let results = paraphrase_all(&instances, backend, prompt, generation(config), config.strict_paraphrase)?;
    let mut replaced = std::collections::HashMap::new();
    let mut failures = 0;
    for (row, result) in rows.iter().zip(&results) {
        match &result.status {
            ParaphraseStatus::Restyled => {
                let record = serde_json::to_string(&DatasetRecord::from_instance(&result.instance))?;
                replaced.insert(row.line, record);
            }
            ParaphraseStatus::Unchanged => {}
            ParaphraseStatus::Failed { warning } => {
                failures += 1;
                warn!("{source}:{}: {warning}", row.line);
            }
        }
    }
    let mut out = String::with_capacity(text.len());
    for (i, segment) in text.split_inclusive('\n').enumerate() {
        match replaced.get(&(i + 1)) {
            Some(record) => {
                out.push_str(record);
                let body = segment.trim_end_matches(['\n', '\r']);
                out.push_str(&segment[body.len()..]);
            }
            None => out.push_str(segment),
        }
    }
    Ok((out, failures))
}

pub fn run_paraphrase(config: &RunConfig, dataset: &Path, prompt: Option<&Path>) -> Result<PathBuf> {
    let text =
        std::fs::read_to_string(dataset).with_context(|| format!("{}: cannot read", dataset.display()))?;
    let prompt = load_prompt(PromptKind::Paraphrase, prompt)?;
    let backend = build_backend(config)?;
    let (out, failures) =
        paraphrase_text(config, &text, &dataset.display().to_string(), backend.as_ref(), &prompt)?;
    if failures > 0 {
        warn!("{failures} instances kept their original reasoning");
    }
    let path = config.out_dir.join(PARAPHRASED_FILE);
    report::write_text(&path, &out)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRun {
    #[serde(flatten)]
    pub suite: SuiteReport,
    pub elapsed_secs: f64,
}

pub fn oracle_verify(worlds: usize, seed: u64) -> Result<OracleRun> {
    let start = Instant::now();
    let suite = run_suite(&SuiteConfig { worlds, seed, ..SuiteConfig::default() })?;
    Ok(OracleRun { suite, elapsed_secs: start.elapsed().as_secs_f64() })
}

pub fn run_oracle_verify(config: &RunConfig, worlds: usize) -> Result<OracleRun> {
    let run = oracle_verify(worlds, config.seed)?;
    let mut text = serde_json::to_string_pretty(&run)?;
    text.push('\n');
    report::write_text(&config.out_dir.join(ORACLE_REPORT_FILE), &text)?;
    Ok(run)
}

/// One line per verifier for the terminal.
pub fn oracle_summary(run: &OracleRun) -> Vec<String> {
    let s = &run.suite;
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    vec![
        format!(
            "{} bayes decomposition: {} triples, max residual {:.3e} (tolerance {:.0e})",
            mark(s.bayes.passed),
            s.bayes.triples,
            s.bayes.max_residual,
            s.bayes.tolerance
        ),
        format!(
            "{} slope identity: {} triples ({} skipped), max residual {:.3e} (tolerance {:.0e})",
            mark(s.slope_identity.passed),
            s.slope_identity.triples,
            s.slope_identity.skipped,
            s.slope_identity.max_residual,
            s.slope_identity.tolerance
        ),
        format!(
            "{} synthetic ratio inequality: {} held, {} violated (max excess {:.3e}), {} premise failures",
            mark(s.ratio_inequality.passed),
            s.ratio_inequality.held,
            s.ratio_inequality.violated,
            s.ratio_inequality.max_violation,
            s.ratio_inequality.premise_failed
        ),
        format!(
            "{} perturbation error bound: {} checked, {} violations, {} premise failures",
            mark(s.error_bound.passed),
            s.error_bound.checked,
            s.error_bound.violations,
            s.error_bound.premise_failed
        ),
    ]
}
