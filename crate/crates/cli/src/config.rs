//! Run configuration. Sources are layered: command-line flags override
//! environment variables, which override the TOML file, which overrides the
//! built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use iclslope::analysis::{ConditionOrder, Orientation, DEFAULT_THRESHOLD};
use iclslope::backend::{RemoteConfig, TemplateSpec, VocabMode, DEFAULT_MAX_TOKENS};
use iclslope::retrieval::{Method, RetrievalParams};
use iclslope::selection::DEFAULT_PREFILTER;
use serde::{Deserialize, Serialize};

pub const ENV_ENDPOINT: &str = "ICLSLOPE_ENDPOINT";
pub const ENV_TOKEN: &str = "ICLSLOPE_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Reference,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    #[default]
    All,
    BadCases,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::BadCases => "bad_cases",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OrientationArg {
    GainOnRelevance,
    RelevanceOnGain,
}

impl From<OrientationArg> for Orientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::GainOnRelevance => Orientation::GainOnRelevance,
            OrientationArg::RelevanceOnGain => Orientation::RelevanceOnGain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Bm25,
    Ngram,
    Cosine,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bm25 => Method::Bm25,
            MethodArg::Ngram => Method::Ngram,
            MethodArg::Cosine => Method::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabArg {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderArg {
    QuestionFirst,
    QuestionLast,
}

/// `[template]` table. Without role markers the template is plain
/// concatenation.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFile {
    pub separator: Option<String>,
    pub user: Option<String>,
    pub assistant: Option<String>,
    pub order: Option<OrderArg>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalFile {
    pub method: Option<MethodArg>,
    pub k: Option<usize>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub ngram: Option<usize>,
    pub prefilter: Option<usize>,
}

/// Contents of the TOML configuration file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub max_in_flight: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub smoothing_alpha: Option<f64>,
    pub vocab: Option<VocabArg>,
    pub shots: Option<usize>,
    pub threshold: Option<f64>,
    pub max_tokens: Option<usize>,
    pub seed: Option<u64>,
    pub strict_paraphrase: Option<bool>,
    pub subset: Option<Subset>,
    pub orientation: Option<OrientationArg>,
    pub out_dir: Option<PathBuf>,
    pub template: Option<TemplateFile>,
    pub retrieval: Option<RetrievalFile>,
}

impl FileConfig {
    /// Parses a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("{}: cannot read config file", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.corpus, &mut config.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Scoring service base URL (remote backend).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Training corpus for the reference bigram model.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Additive smoothing for the reference model.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Demonstrations per instance.
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub retrieval: Option<MethodArg>,
    /// Number of demonstrations to keep (select, synthesize).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Retrieval candidates reranked by learning gain (select).
    #[arg(long, global = true)]
    pub prefilter: Option<usize>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub max_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub subset: Option<Subset>,
    #[arg(long, global = true, value_enum)]
    pub orientation: Option<OrientationArg>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Fail on the first paraphrase error instead of passing the instance through.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Reference { corpus: Option<PathBuf>, alpha: f64, vocab: VocabMode },
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub template: TemplateSpec,
    pub order: ConditionOrder,
    pub shots: usize,
    pub retrieval: RetrievalParams,
    pub k: usize,
    pub prefilter: usize,
    pub threshold: f64,
    pub max_tokens: usize,
    pub seed: u64,
    pub strict_paraphrase: bool,
    pub subset: Subset,
    pub orientation: Orientation,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Layers `flags` over `env` over the config file over defaults.
    pub fn resolve(flags: &CommonArgs, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let env_endpoint = env(ENV_ENDPOINT).filter(|v| !v.is_empty());
        let env_token = env(ENV_TOKEN).filter(|v| !v.is_empty());
        let template_file = file.template.clone().unwrap_or_default();
        let retrieval_file = file.retrieval.clone().unwrap_or_default();

        let kind = flags.backend.or(file.backend).unwrap_or(BackendKind::Reference);
        let backend = match kind {
            BackendKind::Reference => BackendConfig::Reference {
                corpus: flags.corpus.clone().or(file.corpus.clone()),
                alpha: flags.alpha.or(file.smoothing_alpha).unwrap_or(1.0),
                vocab: match file.vocab.unwrap_or(VocabArg::Open) {
                    VocabArg::Open => VocabMode::Open,
                    VocabArg::Closed => VocabMode::Closed,
                },
            },
            BackendKind::Remote => {
                let Some(endpoint) = flags.endpoint.clone().or(env_endpoint).or(file.endpoint.clone()) else {
                    bail!("the remote backend requires an endpoint (--endpoint, {ENV_ENDPOINT} or `endpoint` in the config file)");
                };
                let mut remote = RemoteConfig::new(endpoint);
                remote.token = env_token.or(file.token.clone());
                if let Some(n) = file.max_in_flight {
                    remote.max_in_flight = n;
                }
                if let Some(secs) = file.timeout_secs {
                    remote.timeout = Duration::from_secs(secs);
                }
                BackendConfig::Remote(remote)
            }
        };

        let separator = template_file.separator.clone().unwrap_or_else(|| "\n".to_string());
        let template = match (&template_file.user, &template_file.assistant) {
            (Some(user), Some(assistant)) => {
                let mut t = TemplateSpec::chat(user.clone(), assistant.clone());
                t.separator = separator;
                t
            }
            (None, None) => TemplateSpec::plain(separator),
            _ => bail!("template needs both `user` and `assistant` markers, or neither"),
        };
        let order = match template_file.order.unwrap_or(OrderArg::QuestionFirst) {
            OrderArg::QuestionFirst => ConditionOrder::QuestionFirst,
            OrderArg::QuestionLast => ConditionOrder::QuestionLast,
        };

        let defaults = RetrievalParams::default();
        let retrieval = RetrievalParams {
            method: flags.retrieval.or(retrieval_file.method).map(Method::from).unwrap_or(defaults.method),
            k1: retrieval_file.k1.unwrap_or(defaults.k1),
            b: retrieval_file.b.unwrap_or(defaults.b),
            ngram: retrieval_file.ngram.unwrap_or(defaults.ngram),
        };

        let config = RunConfig {
            backend,
            template,
            order,
            shots: flags.shots.or(file.shots).unwrap_or(1),
            retrieval,
            k: flags.k.or(retrieval_file.k).unwrap_or(1),
            prefilter: flags.prefilter.or(retrieval_file.prefilter).unwrap_or(DEFAULT_PREFILTER),
            threshold: flags.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD),
            max_tokens: flags.max_tokens.or(file.max_tokens).unwrap_or(DEFAULT_MAX_TOKENS),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            strict_paraphrase: flags.strict || file.strict_paraphrase.unwrap_or(false),
            subset: flags.subset.or(file.subset).unwrap_or_default(),
            orientation: flags.orientation.or(file.orientation).map(Orientation::from).unwrap_or_default(),
            out_dir: flags.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            bail!("shots must be at least 1: LCS needs one demonstration per point");
        }
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.max_tokens == 0 {
            bail!("max_tokens must be at least 1");
        }
        if !self.threshold.is_finite() {
            bail!("threshold must be finite, got {}", self.threshold);
        }
        if !(self.retrieval.k1 >= 0.0 && (0.0..=1.0).contains(&self.retrieval.b)) {
            bail!("BM25 needs k1 >= 0 and b in [0, 1]");
        }
        if let BackendConfig::Reference { alpha, .. } = &self.backend {
            if !(alpha.is_finite() && *alpha > 0.0) {
                bail!("smoothing alpha must be positive, got {alpha}");
            }
        }
        Ok(())
    }

    pub fn scoring_setup(&self) -> iclslope::ScoringSetup {
        iclslope::ScoringSetup { template: self.template.clone(), order: self.order }
    }
}

/// Reads the process environment.
pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> =
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&CommonArgs::default(), env_of(&[])).unwrap();
        assert_eq!(c.shots, 1);
        assert_eq!(c.threshold, 0.2);
        assert_eq!(c.max_tokens, 32768);
        assert_eq!(c.subset, Subset::All);
        assert_eq!(c.orientation, Orientation::GainOnRelevance);
        assert_eq!(c.retrieval.method, Method::Bm25);
        assert!(matches!(c.backend, BackendConfig::Reference { .. }));
    }

    #[test]
    fn precedence_flag_env_file_default() {
        let (_dir, path) = write_config(
            "backend = \"remote\"\nendpoint = \"http://file\"\ntoken = \"file-token\"\nshots = 3\nseed = 7\n",
        );
        let mut flags = CommonArgs { config: Some(path), ..CommonArgs::default() };

        let c = RunConfig::resolve(&flags, env_of(&[])).unwrap();
        let BackendConfig::Remote(r) = &c.backend else { panic!() };
        assert_eq!(r.endpoint, "http://file");
        assert_eq!(r.token.as_deref(), Some("file-token"));
        assert_eq!((c.shots, c.seed), (3, 7));

        let env = env_of(&[(ENV_ENDPOINT, "http://env"), (ENV_TOKEN, "env-token")]);
        let c = RunConfig::resolve(&flags, &env).unwrap();
        let BackendConfig::Remote(r) = &c.backend else { panic!() };
        assert_eq!(r.endpoint, "http://env");
        assert_eq!(r.token.as_deref(), Some("env-token"));

        flags.endpoint = Some("http://flag".into());
        flags.shots = Some(2);
        let c = RunConfig::resolve(&flags, &env).unwrap();
        let BackendConfig::Remote(r) = &c.backend else { panic!() };
        assert_eq!(r.endpoint, "http://flag");
        assert_eq!(c.shots, 2);
    }

    #[test]
    fn remote_requires_endpoint() {
        let flags = CommonArgs { backend: Some(BackendKind::Remote), ..CommonArgs::default() };
        let err = RunConfig::resolve(&flags, env_of(&[])).unwrap_err();
        assert!(err.to_string().contains(ENV_ENDPOINT));
    }

    #[test]
    fn rejects_zero_shots_and_unknown_keys() {
        let flags = CommonArgs { shots: Some(0), ..CommonArgs::default() };
        assert!(RunConfig::resolve(&flags, env_of(&[])).is_err());
        let (_dir, path) = write_config("shotz = 1\n");
        let err = RunConfig::resolve(
            &CommonArgs { config: Some(path.clone()), ..CommonArgs::default() },
            env_of(&[]),
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains(&path.display().to_string()));
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let (dir, path) = write_config("corpus = \"corpus.txt\"\n[template]\nseparator = \" \"\n");
        let c = RunConfig::resolve(&CommonArgs { config: Some(path), ..CommonArgs::default() }, env_of(&[]))
            .unwrap();
        let BackendConfig::Reference { corpus, .. } = &c.backend else { panic!() };
        assert_eq!(corpus.as_deref(), Some(dir.path().join("corpus.txt").as_path()));
        assert_eq!(c.template.separator, " ");
    }
}
