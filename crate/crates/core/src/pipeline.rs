//! End-to-end orchestration:
//! corpus → summarize → topics → subtopics → {select → label → evaluate} per
//! strategy, followed by a comparative report.
//!
//! Each stage's artifact is stored under a key hashed from the stage's
//! inputs (upstream artifact hashes plus the relevant config). A stage is
//! skipped when its entry already exists and nothing upstream of it was
//! recomputed in the same invocation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ModelOn, RunConfig};
use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::embedding::{Embedder, EmbeddingError};
use crate::generation::{Generator, Label, LabelError, Summary};
use crate::metric::{evaluate, ComparisonTable, EvalOptions, MetricError, MetricReport};
use crate::parallel::fan_out;
use crate::provider::ProviderError;
use crate::rng::{topic_seed, Purpose};
use crate::selection::{select, Selection, SelectionError, Strategy};
use crate::store::{hash_parts, sha256_hex, PipelineStore, StoreError};
use crate::topic_model::{
    default_k, default_k_sub, fit_subtopics, fit_topics, import_topics, SubtopicResult, TopicDoc, TopicError,
    TopicModelResult,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORE_DIR: &str = "store";
pub const DEFAULT_OUT_DIR: &str = "tl-out";
const KEY_VERSION: &str = "tl-stage-v1";

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl StageError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            Self::Provider(_)
                | Self::Label(LabelError::Provider(_))
                | Self::Embedding(EmbeddingError::Provider(_))
                | Self::Metric(MetricError::Embedding(EmbeddingError::Provider(_)))
        )
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: StageError,
    },
    #[error("config section [{section}] differs from the one recorded in the manifest")]
    ConfigDrift { section: String },
    #[error("store entry {stage}/{key} does not match the manifest")]
    CorruptStore { stage: String, key: String },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn is_provider_failure(&self) -> bool {
        match self {
            Self::Stage { source, .. } => source.is_provider_failure(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub stage: String,
    pub key: String,
    pub output_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyFailure {
    pub strategy: Strategy,
    pub stage: String,
    pub error: String,
    #[serde(default)]
    pub provider_failure: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub status: RunStatus,
    pub config: RunConfig,
    pub config_hashes: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<StrategyFailure>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&raw).map_err(|e| PipelineError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn record(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// Stages computed in this invocation (the rest came from the store).
    pub executed: Vec<String>,
    pub reports: Vec<MetricReport>,
    pub table: ComparisonTable,
}

#[derive(Serialize)]
struct ComparativeReport<'a> {
    dataset: String,
    reports: &'a [MetricReport],
}

/// Output of a stage, its artifact hash and whether it ran now.
struct Staged<T> {
    value: T,
    hash: String,
    executed: bool,
}

struct Runner<'a> {
    config: &'a RunConfig,
    out_dir: PathBuf,
    store: PipelineStore,
    generator: &'a Generator,
    embedder: &'a Embedder,
    prior: Option<&'a RunManifest>,
    executed: Vec<String>,
    records: Vec<StageRecord>,
    timings: BTreeMap<String, f64>,
}

fn out_dir_of(config: &RunConfig) -> PathBuf {
    config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs the pipeline with providers built from `config`; completions and
/// embeddings are cached inside the output directory's store.
pub fn run(config: &RunConfig) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let out_dir = out_dir_of(config);
    let store = PipelineStore::new(out_dir.join(STORE_DIR));
    let generator = config.build_generator(Some(store.clone()))?;
    let embedder = config.build_embedder(Some(store))?;
    run_in(config, &out_dir, &generator, &embedder, None)
}

/// Runs the pipeline with caller-supplied providers.
pub fn run_with(config: &RunConfig, generator: &Generator, embedder: &Embedder) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    run_in(config, &out_dir_of(config), generator, embedder, None)
}

/// Re-runs a recorded pipeline, skipping every stage whose stored artifact
/// is still valid. `config`, when given, must match the recorded one.
pub fn resume(manifest_path: &Path, config: Option<&RunConfig>) -> Result<RunOutcome, PipelineError> {
    let manifest = RunManifest::read(manifest_path)?;
    let config = check_drift(&manifest, config)?;
    let out_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let store = PipelineStore::new(out_dir.join(STORE_DIR));
    let generator = config.build_generator(Some(store.clone()))?;
    let embedder = config.build_embedder(Some(store))?;
    run_in(&config, &out_dir, &generator, &embedder, Some(&manifest))
}

/// [`resume`] with caller-supplied providers.
pub fn resume_with(
    manifest_path: &Path,
    config: Option<&RunConfig>,
    generator: &Generator,
    embedder: &Embedder,
) -> Result<RunOutcome, PipelineError> {
    let manifest = RunManifest::read(manifest_path)?;
    let config = check_drift(&manifest, config)?;
    let out_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    run_in(&config, &out_dir, generator, embedder, Some(&manifest))
}

fn check_drift(manifest: &RunManifest, config: Option<&RunConfig>) -> Result<RunConfig, PipelineError> {
    let config = config.cloned().unwrap_or_else(|| manifest.config.clone());
    config.validate()?;
    let now = config.section_hashes();
    for (section, hash) in &manifest.config_hashes {
        if now.get(section) != Some(hash) {
            return Err(PipelineError::ConfigDrift {
                section: section.clone(),
            });
        }
    }
    Ok(config)
}

fn run_in(
    config: &RunConfig,
    out_dir: &Path,
    generator: &Generator,
    embedder: &Embedder,
    prior: Option<&RunManifest>,
) -> Result<RunOutcome, PipelineError> {
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut runner = Runner {
        config,
        out_dir: out_dir.to_path_buf(),
        store: PipelineStore::new(out_dir.join(STORE_DIR)),
        generator,
        embedder,
        prior,
        executed: Vec::new(),
        records: Vec::new(),
        timings: BTreeMap::new(),
    };
    match runner.execute() {
        Ok((reports, table, failures)) => {
            let status = if failures.is_empty() {
                RunStatus::Complete
            } else {
                RunStatus::Partial
            };
            let manifest = runner.write_manifest(status, failures)?;
            Ok(RunOutcome {
                manifest,
                manifest_path: out_dir.join(MANIFEST_FILE),
                executed: runner.executed,
                reports,
                table,
            })
        }
        Err(e) => {
            // keep what finished so the run can be resumed
            if let Err(write_err) = runner.write_manifest(RunStatus::Failed, Vec::new()) {
                log::warn!("could not write partial manifest: {write_err}");
            }
            Err(e)
        }
    }
}

fn stage_err(stage: &str) -> impl FnOnce(StageError) -> PipelineError + '_ {
    move |source| PipelineError::Stage {
        stage: stage.to_string(),
        source,
    }
}

impl Runner<'_> {
    fn write_json<T: Serialize + ?Sized>(&self, file: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.out_dir.join(file);
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|source| PipelineError::Io { path, source })
    }

    fn write_manifest(&self, status: RunStatus, failures: Vec<StrategyFailure>) -> Result<RunManifest, PipelineError> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            status,
            config: self.config.snapshot(),
            config_hashes: self.config.section_hashes(),
            stages: self.records.clone(),
            failures,
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        self.write_json("timings.json", &self.timings)?;
        Ok(manifest)
    }

    /// Loads `(dir, key)` from the store or computes and stores it.
    fn stage<T, F>(
        &mut self,
        name: &str,
        dir: &str,
        inputs: &[&str],
        upstream_ran: bool,
        compute: F,
    ) -> Result<Staged<T>, PipelineError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, StageError>,
    {
        let mut parts: Vec<&str> = vec![KEY_VERSION, name];
        parts.extend_from_slice(inputs);
        let key = hash_parts(parts);
        let corrupt = || PipelineError::CorruptStore {
            stage: dir.to_string(),
            key: key.clone(),
        };

        if !upstream_ran {
            let cached = self.store.get(dir, &key).map_err(|e| stage_err(name)(e.into()))?;
            if let Some(bytes) = cached {
                let hash = sha256_hex(&bytes);
                if let Some(rec) = self.prior.and_then(|m| m.record(name)) {
                    if rec.key == key && rec.output_hash != hash {
                        return Err(corrupt());
                    }
                }
                let value: T = serde_json::from_slice(&bytes).map_err(|_| corrupt())?;
                self.records.push(StageRecord {
                    name: name.to_string(),
                    stage: dir.to_string(),
                    key,
                    output_hash: hash.clone(),
                });
                return Ok(Staged {
                    value,
                    hash,
                    executed: false,
                });
            }
        }

        let started = Instant::now();
        let value = compute().map_err(stage_err(name))?;
        let bytes = serde_json::to_vec_pretty(&value).expect("artifact serializes");
        self.store
            .put(dir, &key, &bytes)
            .map_err(|e| stage_err(name)(e.into()))?;
        self.timings.insert(name.to_string(), started.elapsed().as_secs_f64());
        let hash = sha256_hex(&bytes);
        log::info!("stage {name} computed");
        self.executed.push(name.to_string());
        self.records.push(StageRecord {
            name: name.to_string(),
            stage: dir.to_string(),
            key,
            output_hash: hash.clone(),
        });
        Ok(Staged {
            value,
            hash,
            executed: true,
        })
    }

    #[allow(clippy::type_complexity)]
    fn execute(&mut self) -> Result<(Vec<MetricReport>, ComparisonTable, Vec<StrategyFailure>), PipelineError> {
        let config = self.config;
        let seed = config.topics.seed;
        let hashes = config.section_hashes();
        let strategies = config.strategies()?;
        let (summarize_prompt, label_prompt) = config.templates()?;

        // corpus
        let format = config.corpus_format()?;
        let loaded = load_corpus(&config.corpus.path, format, config.load_options())
            .map_err(|e| stage_err("corpus")(e.into()))?;
        let corpus_json = serde_json::to_string(&loaded).expect("corpus serializes");
        let corpus: Staged<Corpus> =
            self.stage("corpus", "corpus", &[&hashes["corpus"], &corpus_json], false, || {
                Ok(loaded)
            })?;
        let corpus_ran = corpus.executed;
        let corpus_hash = corpus.hash.clone();
        let corpus = corpus.value;

        // summarize
        let generator = self.generator;
        let summaries: Staged<Vec<Summary>> = self.stage(
            "summarize",
            "summarize",
            &[&corpus_hash, &hashes["generation"], &summarize_prompt.body],
            corpus_ran,
            || Ok(generator.summarize_all(corpus.documents(), &summarize_prompt)?),
        )?;
        self.write_json("summaries.json", &summaries.value)?;
        let summary_text: BTreeMap<String, String> = summaries
            .value
            .iter()
            .map(|s| (s.doc_id.clone(), s.text.clone()))
            .collect();
        let model_texts: BTreeMap<String, String> = match config.topics.model_on {
            ModelOn::Summary => summary_text.clone(),
            ModelOn::Raw => corpus.text_map(),
        };
        let model_input_hash = match config.topics.model_on {
            ModelOn::Summary => summaries.hash.clone(),
            ModelOn::Raw => corpus_hash.clone(),
        };
        let model_ran = match config.topics.model_on {
            ModelOn::Summary => summaries.executed,
            ModelOn::Raw => corpus_ran,
        };

        // topics
        let embedder = self.embedder;
        let ids: Vec<String> = corpus.ids().map(str::to_string).collect();
        let import_hash = match &config.topics.import {
            Some(p) => sha256_hex(&fs::read(p).map_err(|source| PipelineError::Io {
                path: p.clone(),
                source,
            })?),
            None => String::new(),
        };
        let topics: Staged<TopicModelResult> = self.stage(
            "topics",
            "topics",
            &[&model_input_hash, &hashes["embedding"], &hashes["topics"], &import_hash],
            model_ran,
            || {
                if let Some(path) = &config.topics.import {
                    return Ok(import_topics(path, Some(ids.iter().map(String::as_str)))?);
                }
                let texts: Vec<String> = ids.iter().map(|id| model_texts[id].clone()).collect();
                let vectors = embedder.embed_texts(&texts)?;
                let docs: Vec<TopicDoc> = ids
                    .iter()
                    .zip(&texts)
                    .zip(&vectors)
                    .map(|((id, text), vector)| TopicDoc { id, text, vector })
                    .collect();
                let k = config.topics.k.unwrap_or_else(|| default_k(docs.len()));
                Ok(fit_topics(&docs, k, seed)?)
            },
        )?;
        self.write_json("topics.json", &topics.value)?;
        let topics_ran = topics.executed;
        let topics_hash = topics.hash.clone();
        let topics = topics.value;

        // subtopics, shared by strategies 3 and 4
        let subtopics: Option<Staged<Vec<SubtopicResult>>> = if strategies.iter().any(|s| s.needs_subtopics()) {
            let staged = self.stage(
                "subtopics",
                "subtopics",
                &[&topics_hash, &model_input_hash, &hashes["embedding"], &hashes["topics"]],
                topics_ran || model_ran,
                || {
                    let texts: Vec<String> = ids.iter().map(|id| model_texts[id].clone()).collect();
                    let vectors = embedder.embed_texts(&texts)?;
                    let docs: Vec<TopicDoc> = ids
                        .iter()
                        .zip(&texts)
                        .zip(&vectors)
                        .map(|((id, text), vector)| TopicDoc { id, text, vector })
                        .collect();
                    topics
                        .labelable(config.topics.include_outliers)
                        .map(|t| {
                            let k_sub = config.topics.k_sub.unwrap_or_else(|| default_k_sub(t.doc_ids.len()));
                            fit_subtopics(t, &docs, k_sub, topic_seed(seed, t.id, Purpose::Subtopics))
                                .map_err(StageError::from)
                        })
                        .collect::<Result<Vec<_>, _>>()
                },
            )?;
            self.write_json("subtopics.json", &staged.value)?;
            Some(staged)
        } else {
            None
        };
        let subtopic_map: HashMap<i64, &SubtopicResult> = subtopics
            .as_ref()
            .map(|s| s.value.iter().map(|r| (r.parent_topic_id, r)).collect())
            .unwrap_or_default();
        let subtopics_hash = subtopics.as_ref().map(|s| s.hash.clone()).unwrap_or_default();
        let subtopics_ran = subtopics.as_ref().is_some_and(|s| s.executed);

        let mut reports = Vec::new();
        let mut failures = Vec::new();
        let mut table = ComparisonTable::new();
        let dataset = config.dataset_name();
        let seed_str = seed.to_string();
        let outliers = config.topics.include_outliers.to_string();

        for strategy in strategies {
            let name = strategy.name();
            let select_name = format!("select/{name}");
            let label_name = format!("label/{name}");
            let eval_name = format!("evaluate/{name}");

            let result: Result<MetricReport, PipelineError> = (|| {
                let sub_hash = if strategy.needs_subtopics() {
                    subtopics_hash.as_str()
                } else {
                    ""
                };
                let selections: Staged<Vec<Selection>> = self.stage(
                    &select_name,
                    "select",
                    &[name, &topics_hash, &model_input_hash, sub_hash, &seed_str, &outliers],
                    topics_ran || model_ran || (strategy.needs_subtopics() && subtopics_ran),
                    || {
                        topics
                            .labelable(config.topics.include_outliers)
                            .map(|t| {
                                select(strategy, t, &model_texts, subtopic_map.get(&t.id).copied(), seed)
                                    .map_err(StageError::from)
                            })
                            .collect()
                    },
                )?;
                self.write_json(&format!("selections_{name}.json"), &selections.value)?;

                let labels: Staged<Vec<Label>> = self.stage(
                    &label_name,
                    "label",
                    &[
                        name,
                        &selections.hash,
                        &topics_hash,
                        &summaries.hash,
                        &hashes["generation"],
                        &label_prompt.body,
                    ],
                    selections.executed || summaries.executed,
                    || {
                        let results = fan_out(&selections.value, generator_in_flight(config), |sel| {
                            let topic = topics.topic(sel.topic_id).expect("selection refers to a known topic");
                            let texts: Vec<&str> = sel.doc_ids.iter().map(|d| summary_text[d].as_str()).collect();
                            generator.generate_label(sel.topic_id, &topic.keywords, &texts, &label_prompt, strategy)
                        });
                        results.into_iter().map(|r| r.map_err(StageError::from)).collect()
                    },
                )?;
                self.write_json(&format!("labels_{name}.json"), &labels.value)?;

                let report: Staged<MetricReport> = self.stage(
                    &eval_name,
                    "evaluate",
                    &[
                        name,
                        &labels.hash,
                        &topics_hash,
                        &corpus_hash,
                        &summaries.hash,
                        &hashes["embedding"],
                        &hashes["metric"],
                        &seed_str,
                        &outliers,
                    ],
                    labels.executed || topics_ran || corpus_ran || summaries.executed,
                    || {
                        let opts = EvalOptions {
                            doc_source: config.metric.doc_source,
                            include_outliers: config.topics.include_outliers,
                            seed: Some(seed),
                        };
                        Ok(evaluate(
                            &labels.value,
                            &topics,
                            &corpus,
                            Some(&summaries.value),
                            embedder,
                            opts,
                        )?)
                    },
                )?;
                self.write_json(&format!("report_{name}.json"), &report.value)?;
                Ok(report.value)
            })();

            match result {
                Ok(report) => {
                    table.insert(&dataset, strategy, report.corpus_score);
                    reports.push(report);
                }
                Err(PipelineError::Stage { stage, source }) => {
                    log::error!("strategy {name} failed at {stage}: {source}");
                    failures.push(StrategyFailure {
                        strategy,
                        stage,
                        error: source.to_string(),
                        provider_failure: source.is_provider_failure(),
                    });
                }
                Err(other) => return Err(other),
            }
        }

        self.write_json(
            "report.json",
            &ComparativeReport {
                dataset: dataset.clone(),
                reports: &reports,
            },
        )?;
        let txt = self.out_dir.join("report.txt");
        fs::write(&txt, table.render()).map_err(|source| PipelineError::Io { path: txt, source })?;
        Ok((reports, table, failures))
    }
}

fn generator_in_flight(config: &RunConfig) -> usize {
    config.generation.max_in_flight.max(1)
}
