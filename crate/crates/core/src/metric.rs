//! Label representativeness: the mean cosine similarity between a topic's
//! label embedding and each of its documents' embeddings, averaged over
//! topics with weights proportional to topic size.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embedding::{cosine, Embedder, EmbeddingError, EmbeddingVector};
use crate::generation::{Label, Summary};
use crate::selection::Strategy;
use crate::topic_model::TopicModelResult;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("topic {0} has no label")]
    MissingLabel(i64),
    #[error("topic {0} has more than one label")]
    DuplicateLabel(i64),
    #[error("topic {0} has no documents to score against")]
    NoDocuments(i64),
    #[error("nothing to score: no topics")]
    NoTopics,
    #[error("document {0:?} is not in the corpus")]
    UnknownDocument(String),
    #[error("no summary for document {0:?}; run `tl summarize` and pass --summaries to score against summaries")]
    MissingSummary(String),
    #[error("doc source `summary` needs stored summaries; run `tl summarize` first and pass --summaries <file>")]
    SummariesUnavailable,
    #[error("unknown doc source {0:?} (expected raw or summary)")]
    UnknownDocSource(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocSource {
    #[default]
    Raw,
    Summary,
}

impl FromStr for DocSource {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Self::Raw),
            "summary" => Ok(Self::Summary),
            other => Err(MetricError::UnknownDocSource(other.to_string())),
        }
    }
}

impl fmt::Display for DocSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Summary => "summary",
        })
    }
}

/// Mean of `cosine(label, d)` over the topic's document vectors.
pub fn topic_score(label_vector: &EmbeddingVector, doc_vectors: &[EmbeddingVector]) -> Result<f64, MetricError> {
    if doc_vectors.is_empty() {
        return Err(MetricError::NoTopics);
    }
    let mut sum = 0.0;
    for d in doc_vectors {
        sum += cosine(label_vector, d)?;
    }
    Ok(sum / doc_vectors.len() as f64)
}

/// `Σ nₜ·scoreₜ / Σ nₜ` over `(score, n_docs)` pairs.
pub fn corpus_score(per_topic: &[(f64, usize)]) -> Result<f64, MetricError> {
    if per_topic.is_empty() {
        return Err(MetricError::NoTopics);
    }
    let mut weighted = 0.0;
    let mut total = 0usize;
    for &(score, n) in per_topic {
        weighted += n as f64 * score;
        total += n;
    }
    if total == 0 {
        return Err(MetricError::NoTopics);
    }
    Ok(weighted / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub topic_id: i64,
    pub label: String,
    pub score: f64,
    pub n_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_topic: Vec<TopicScore>,
    pub corpus_score: f64,
    pub embedding_model: String,
    pub doc_source: DocSource,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub doc_source: DocSource,
    pub include_outliers: bool,
    pub seed: Option<u64>,
}

/// Scores `labels` against the documents of each labelable topic.
///
/// Every label and every document is embedded once. With
/// `DocSource::Summary`, `summaries` must cover every scored document.
pub fn evaluate(
    labels: &[Label],
    topics: &TopicModelResult,
    corpus: &Corpus,
    summaries: Option<&[Summary]>,
    embedder: &Embedder,
    opts: EvalOptions,
) -> Result<MetricReport, MetricError> {
    let mut by_topic: BTreeMap<i64, &Label> = BTreeMap::new();
    for l in labels {
        if by_topic.insert(l.topic_id, l).is_some() {
            return Err(MetricError::DuplicateLabel(l.topic_id));
        }
    }
    let scored: Vec<_> = topics.labelable(opts.include_outliers).collect();
    if scored.is_empty() {
        return Err(MetricError::NoTopics);
    }
    for t in &scored {
        if !by_topic.contains_key(&t.id) {
            return Err(MetricError::MissingLabel(t.id));
        }
        if t.doc_ids.is_empty() {
            return Err(MetricError::NoDocuments(t.id));
        }
    }

    let summary_text: Option<HashMap<&str, &str>> =
        summaries.map(|s| s.iter().map(|s| (s.doc_id.as_str(), s.text.as_str())).collect());
    if opts.doc_source == DocSource::Summary && summary_text.is_none() {
        return Err(MetricError::SummariesUnavailable);
    }
    let raw_text: HashMap<&str, &str> = corpus.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    let doc_text = |id: &str| -> Result<String, MetricError> {
        match opts.doc_source {
            DocSource::Raw => raw_text
                .get(id)
                .map(|t| t.to_string())
                .ok_or_else(|| MetricError::UnknownDocument(id.to_string())),
            DocSource::Summary => summary_text
                .as_ref()
                .and_then(|m| m.get(id))
                .map(|t| t.to_string())
                .ok_or_else(|| MetricError::MissingSummary(id.to_string())),
        }
    };

    let mut doc_ids: Vec<&str> = Vec::new();
    let mut doc_texts: Vec<String> = Vec::new();
    for t in &scored {
        for id in &t.doc_ids {
            doc_ids.push(id);
            doc_texts.push(doc_text(id)?);
        }
    }
    let doc_vectors = embedder.embed_texts(&doc_texts)?;
    let vector_of: HashMap<&str, &EmbeddingVector> = doc_ids.iter().copied().zip(&doc_vectors).collect();

    let label_texts: Vec<String> = scored.iter().map(|t| by_topic[&t.id].text.clone()).collect();
    let label_vectors = embedder.embed_texts(&label_texts)?;

    let mut per_topic = Vec::with_capacity(scored.len());
    for (t, label_vec) in scored.iter().zip(&label_vectors) {
        let vectors: Vec<EmbeddingVector> = t.doc_ids.iter().map(|id| vector_of[id.as_str()].clone()).collect();
        per_topic.push(TopicScore {
            topic_id: t.id,
            label: by_topic[&t.id].text.clone(),
            score: topic_score(label_vec, &vectors)?,
            n_docs: t.doc_ids.len(),
        });
    }
    per_topic.sort_by_key(|s| s.topic_id);
    let pairs: Vec<(f64, usize)> = per_topic.iter().map(|s| (s.score, s.n_docs)).collect();
    let strategies: Vec<Strategy> = labels.iter().map(|l| l.strategy).collect();
    let strategy = strategies
        .first()
        .copied()
        .filter(|s| strategies.iter().all(|x| x == s));

    Ok(MetricReport {
        corpus_score: corpus_score(&pairs)?,
        per_topic,
        embedding_model: embedder.model_id().to_string(),
        doc_source: opts.doc_source,
        seed: opts.seed,
        strategy,
    })
}

/// Approach × dataset grid of corpus scores, printed to four decimals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonTable {
    datasets: Vec<String>,
    scores: BTreeMap<Strategy, BTreeMap<String, f64>>,
}

impl ComparisonTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dataset: &str, strategy: Strategy, score: f64) {
        if !self.datasets.iter().any(|d| d == dataset) {
            self.datasets.push(dataset.to_string());
        }
        self.scores
            .entry(strategy)
            .or_default()
            .insert(dataset.to_string(), score);
    }

    pub fn render(&self) -> String {
        let header: Vec<String> = std::iter::once("Approach".to_string())
            .chain(self.datasets.iter().cloned())
            .collect();
        let rows: Vec<Vec<String>> = self
            .scores
            .iter()
            .map(|(strategy, cells)| {
                std::iter::once(format!("{} ({})", strategy.number(), strategy.name()))
                    .chain(
                        self.datasets
                            .iter()
                            .map(|d| cells.get(d).map_or_else(|| "-".to_string(), |s| format!("{s:.4}"))),
                    )
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::from("|");
            for (c, cell) in cells.iter().enumerate() {
                let _ = write!(s, " {:<w$} |", cell, w = widths[c]);
            }
            s.push('\n');
            s
        };
        let mut out = line(&header);
        out.push('|');
        for w in &widths {
            out.push_str(&"-".repeat(w + 2));
            out.push('|');
        }
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
        }
        out
    }
}
