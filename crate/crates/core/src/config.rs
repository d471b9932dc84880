//! Run configuration, read from a TOML file with one table per stage.
//!
//! ```toml
//! [corpus]
//! path = "bbc.csv"
//!
//! [generation]
//! provider = "mock"
//!
//! [topics]
//! seed = 7
//!
//! [selection]
//! strategies = "1,2,3,4"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusFormat, LoadOptions};
use crate::embedding::{Embedder, LiveEmbedder, MockEmbedder, DEFAULT_MOCK_DIM};
use crate::generation::{
    Endpoint, Generator, LiveProvider, MockProvider, PromptTemplate, DEFAULT_LABEL_PROMPT, DEFAULT_SUMMARIZE_PROMPT,
};
use crate::metric::DocSource;
use crate::provider::{api_key_from_env, ProviderError, RetryPolicy};
use crate::selection::Strategy;
use crate::store::{hash_parts, PipelineStore};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelOn {
    #[default]
    Summary,
    Raw,
}

impl std::str::FromStr for ModelOn {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "summary" => Ok(Self::Summary),
            "raw" => Ok(Self::Raw),
            other => Err(ConfigError::Invalid(format!(
                "unknown model_on {other:?} (expected summary or raw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
    #[serde(default)]
    pub strip_newsgroup_boilerplate: bool,
    /// Dataset name shown in the comparison table; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}
fn default_generation_model() -> String {
    "gpt-3.5-turbo-instruct".into()
}
fn default_embedding_model() -> String {
    "all-MiniLM-L6-v2".into()
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_dim() -> usize {
    DEFAULT_MOCK_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(default)]
    pub provider: ProviderKind,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_generation_model")]
    pub model: String,
    #[serde(default)]
    pub endpoint: Endpoint,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    #[serde(default)]
    pub provider: ProviderKind,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_embedding_model")]
    pub model: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_sub: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model_on: ModelOn,
    #[serde(default)]
    pub include_outliers: bool,
    /// Use an externally produced topic file instead of clustering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import: Option<PathBuf>,
}

fn default_strategies() -> String {
    "1,2,3,4".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    #[serde(default = "default_strategies")]
    pub strategies: String,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            strategies: default_strategies(),
        }
    }
}

fn default_summarize_prompt() -> String {
    DEFAULT_SUMMARIZE_PROMPT.into()
}
fn default_label_prompt() -> String {
    DEFAULT_LABEL_PROMPT.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsSection {
    #[serde(default = "default_summarize_prompt")]
    pub summarize: String,
    #[serde(default = "default_label_prompt")]
    pub label: String,
}

impl Default for PromptsSection {
    fn default() -> Self {
        Self {
            summarize: default_summarize_prompt(),
            label: default_label_prompt(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    #[serde(default)]
    pub doc_source: DocSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: OutputSection,
}

fn is_default_output(o: &OutputSection) -> bool {
    o.dir.is_none()
}

impl RunConfig {
    /// A mock-provider config for `corpus_path` with all defaults.
    pub fn mock(corpus_path: impl Into<PathBuf>, seed: u64) -> Self {
        let mut c: RunConfig = toml::from_str("[corpus]\npath = \"\"").expect("defaults");
        c.corpus.path = corpus_path.into();
        c.topics.seed = seed;
        c
    }

    pub fn from_toml(raw: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Loads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut c = Self::from_toml(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        self.corpus.path = resolve(&self.corpus.path);
        if let Some(i) = &self.topics.import {
            self.topics.import = Some(resolve(i));
        }
        if let Some(d) = &self.output.dir {
            self.output.dir = Some(resolve(d));
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.corpus.path.as_os_str().is_empty() {
            return bad("corpus.path is required".into());
        }
        self.strategies()?;
        if !(self.generation.temperature >= 0.0 && self.generation.temperature.is_finite()) {
            return bad(format!(
                "generation.temperature must be >= 0, got {}",
                self.generation.temperature
            ));
        }
        if let Some(k) = self.topics.k {
            if k < 2 {
                return bad(format!("topics.k must be at least 2, got {k}"));
            }
        }
        if self.embedding.dim == 0 {
            return bad("embedding.dim must be positive".into());
        }
        self.templates()?;
        Ok(())
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>, ConfigError> {
        Strategy::parse_list(&self.selection.strategies).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn templates(&self) -> Result<(PromptTemplate, PromptTemplate), ConfigError> {
        let s = PromptTemplate::summarize(&self.prompts.summarize).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let l = PromptTemplate::label(&self.prompts.label).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((s, l))
    }

    pub fn corpus_format(&self) -> Result<CorpusFormat, ConfigError> {
        self.corpus
            .format
            .or_else(|| CorpusFormat::infer(&self.corpus.path))
            .ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "cannot infer corpus format of {}; set corpus.format",
                    self.corpus.path.display()
                ))
            })
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            strip_newsgroup_boilerplate: self.corpus.strip_newsgroup_boilerplate,
        }
    }

    pub fn dataset_name(&self) -> String {
        self.corpus.name.clone().unwrap_or_else(|| {
            self.corpus
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".into())
        })
    }

    /// Fails fast when a live provider is configured without an API key.
    pub fn check_credentials(&self) -> Result<(), ConfigError> {
        if self.generation.provider == ProviderKind::Live || self.embedding.provider == ProviderKind::Live {
            api_key_from_env()?;
        }
        Ok(())
    }

    /// The config as recorded in a manifest: the output directory is left
    /// out because the manifest lives inside it.
    pub fn snapshot(&self) -> RunConfig {
        let mut c = self.clone();
        c.output = OutputSection::default();
        c
    }

    /// Per-section hashes over the settings that influence results.
    /// Transport knobs (concurrency, retries, timeouts) are excluded.
    pub fn section_hashes(&self) -> BTreeMap<String, String> {
        let json = |v: serde_json::Value| serde_json::to_string(&v).expect("json");
        let g = &self.generation;
        let e = &self.embedding;
        let mut out = BTreeMap::new();
        out.insert("corpus".into(), json(serde_json::to_value(&self.corpus).expect("json")));
        out.insert(
            "generation".into(),
            json(serde_json::json!({
                "provider": g.provider, "base_url": g.base_url, "model": g.model,
                "endpoint": g.endpoint, "temperature": g.temperature,
            })),
        );
        out.insert(
            "embedding".into(),
            json(serde_json::json!({
                "provider": e.provider, "base_url": e.base_url, "model": e.model, "dim": e.dim,
            })),
        );
        out.insert("topics".into(), json(serde_json::to_value(&self.topics).expect("json")));
        out.insert(
            "selection".into(),
            json(serde_json::to_value(&self.selection).expect("json")),
        );
        out.insert(
            "prompts".into(),
            json(serde_json::to_value(&self.prompts).expect("json")),
        );
        out.insert("metric".into(), json(serde_json::to_value(&self.metric).expect("json")));
        out.into_iter().map(|(k, v)| (k, hash_parts([v]))).collect()
    }

    pub fn generation_fingerprint(&self) -> String {
        self.section_hashes()["generation"].clone()
    }

    pub fn embedding_fingerprint(&self) -> String {
        self.section_hashes()["embedding"].clone()
    }

    pub fn build_generator(&self, store: Option<PipelineStore>) -> Result<Generator, ConfigError> {
        let g = &self.generation;
        let generator = match g.provider {
            ProviderKind::Mock => Generator::new(Arc::new(MockProvider), "mock"),
            ProviderKind::Live => {
                let key = api_key_from_env()?;
                let provider = LiveProvider::new(&g.base_url, key, g.endpoint, Duration::from_secs(g.timeout_secs));
                Generator::new(Arc::new(provider), &g.model)
            }
        };
        let generator = generator
            .with_temperature(g.temperature)
            .with_max_in_flight(g.max_in_flight)
            .with_retry(RetryPolicy {
                max_retries: g.max_retries,
                base_delay: Duration::from_millis(g.backoff_ms),
            });
        Ok(match store {
            Some(s) => generator.with_disk_cache(s),
            None => generator,
        })
    }

    pub fn build_embedder(&self, store: Option<PipelineStore>) -> Result<Embedder, ConfigError> {
        let e = &self.embedding;
        let embedder = match e.provider {
            ProviderKind::Mock => Embedder::new(Arc::new(MockEmbedder::new(e.dim))),
            ProviderKind::Live => {
                let key = api_key_from_env()?;
                Embedder::new(Arc::new(LiveEmbedder::new(
                    &e.base_url,
                    &e.model,
                    key,
                    Duration::from_secs(e.timeout_secs),
                )))
            }
        };
        let embedder = embedder.with_max_in_flight(e.max_in_flight).with_retry(RetryPolicy {
            max_retries: e.max_retries,
            base_delay: Duration::from_millis(e.backoff_ms),
        });
        Ok(match store {
            Some(s) => embedder.with_disk_cache(s),
            None => embedder,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml("[corpus]\npath = \"bbc.csv\"\n").unwrap();
        assert_eq!(c.generation.provider, ProviderKind::Mock);
        assert_eq!(c.generation.temperature, 0.0);
        assert_eq!(c.generation.max_retries, 3);
        assert_eq!(c.strategies().unwrap(), Strategy::ALL);
        assert_eq!(c.corpus_format().unwrap(), CorpusFormat::Csv);
        assert_eq!(c.dataset_name(), "bbc");
        assert_eq!(c.metric.doc_source, DocSource::Raw);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[corpus]\npath = \"a.jsonl\"\n[selection]\nstrategies = \"5\"").is_err());
        assert!(RunConfig::from_toml("[corpus]\npath = \"a.jsonl\"\n[generation]\ntemperature = -1.0").is_err());
        assert!(RunConfig::from_toml("[corpus]\npath = \"a.jsonl\"\n[prompts]\nlabel = \"no slots\"").is_err());
        assert!(RunConfig::from_toml("[corpus]\npath = \"a.jsonl\"\n[bogus]\nx = 1").is_err());
    }

    #[test]
    fn seed_changes_topics_hash_only() {
        let a = RunConfig::mock("c.jsonl", 1);
        let mut b = a.clone();
        b.topics.seed = 2;
        let (ha, hb) = (a.section_hashes(), b.section_hashes());
        let differing: Vec<_> = ha.keys().filter(|k| ha[*k] != hb[*k]).collect();
        assert_eq!(differing, ["topics"]);
        let mut c = a.clone();
        c.generation.max_in_flight = 9;
        assert_eq!(a.section_hashes(), c.section_hashes());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut c = RunConfig::mock("data/c.jsonl", 1);
        c.output.dir = Some("out".into());
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.corpus.path, Path::new("/cfg/data/c.jsonl"));
        assert_eq!(c.output.dir.unwrap(), Path::new("/cfg/out"));
    }
}
