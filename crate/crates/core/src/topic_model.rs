//! Topics over documents: seeded k-means++ clustering of unit embeddings,
//! class-based TF-IDF keywords, per-topic subtopics, and the topic JSON
//! interchange format for assignments produced by external tools.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::rng::corpus_rng;
use crate::text::tokenize;

pub const TOP_KEYWORDS: usize = 10;
pub const OUTLIER_ID: i64 = -1;
pub const MAX_ITERATIONS: usize = 100;
pub const RELATIVE_TOLERANCE: f64 = 1e-6;
pub const MIN_SUBTOPIC_SIZE: usize = 2;
pub const TOKENIZER_DESCRIPTION: &str = "lowercase; split on non-alphanumeric; drop 1-char tokens; english stopwords";

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("k = {k} is larger than the number of documents ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 2 (got {0})")]
    KTooSmall(usize),
    #[error("need at least 2 documents to fit topics (got {0})")]
    TooFewDocuments(usize),
    #[error("input length mismatch: {0}")]
    LengthMismatch(String),
    #[error("class {0} has no tokens")]
    EmptyClass(i64),
    #[error("topic file schema violation: {0}")]
    SchemaViolation(String),
    #[error("topic file references unknown document id {0:?}")]
    UnknownDocId(String),
    #[error("embedding dimensions differ within the input")]
    DimensionMismatch,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: i64,
    pub keywords: Vec<String>,
    pub doc_ids: Vec<String>,
}

impl Topic {
    pub fn is_outlier(&self) -> bool {
        self.id == OUTLIER_ID
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelConfig {
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub tokenizer: String,
    /// Within-cluster sum of squares after each iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Topics plus the document → topic assignment they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopicFile", into = "TopicFile")]
pub struct TopicModelResult {
    topics: Vec<Topic>,
    assignment: BTreeMap<String, i64>,
    outlier_id: Option<i64>,
    config: Option<TopicModelConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicFile {
    topics: Vec<Topic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outlier_id: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TopicModelConfig>,
}

impl TryFrom<TopicFile> for TopicModelResult {
    type Error = TopicError;

    fn try_from(f: TopicFile) -> Result<Self, Self::Error> {
        TopicModelResult::build(f.topics, f.outlier_id, f.config, false)
    }
}

impl From<TopicModelResult> for TopicFile {
    fn from(r: TopicModelResult) -> Self {
        TopicFile {
            topics: r.topics,
            outlier_id: r.outlier_id,
            config: r.config,
        }
    }
}

impl TopicModelResult {
    /// Validates topic structure: unique ids, no id below −1, distinct
    /// keywords and documents, every document in exactly one topic,
    /// non-outlier topics carrying exactly ten keywords.
    pub fn new(
        topics: Vec<Topic>,
        outlier_id: Option<i64>,
        config: Option<TopicModelConfig>,
    ) -> Result<Self, TopicError> {
        Self::build(topics, outlier_id, config, true)
    }

    fn build(
        topics: Vec<Topic>,
        outlier_id: Option<i64>,
        config: Option<TopicModelConfig>,
        strict_keywords: bool,
    ) -> Result<Self, TopicError> {
        let bad = |m: String| Err(TopicError::SchemaViolation(m));
        if topics.is_empty() {
            return bad("no topics".into());
        }
        if let Some(o) = outlier_id {
            if o != OUTLIER_ID {
                return bad(format!("outlier_id must be {OUTLIER_ID}, got {o}"));
            }
        }
        let mut ids = HashSet::new();
        let mut assignment = BTreeMap::new();
        for t in &topics {
            if t.id < OUTLIER_ID {
                return bad(format!("topic id {} is negative", t.id));
            }
            if !ids.insert(t.id) {
                return bad(format!("duplicate topic id {}", t.id));
            }
            if t.doc_ids.is_empty() {
                return bad(format!("topic {} has no documents", t.id));
            }
            if !t.is_outlier() {
                if strict_keywords && t.keywords.len() != TOP_KEYWORDS {
                    return bad(format!(
                        "topic {} has {} keywords, expected {TOP_KEYWORDS}",
                        t.id,
                        t.keywords.len()
                    ));
                }
                let distinct: HashSet<&String> = t.keywords.iter().collect();
                if distinct.len() != t.keywords.len() {
                    return bad(format!("topic {} has repeated keywords", t.id));
                }
            }
            for d in &t.doc_ids {
                if assignment.insert(d.clone(), t.id).is_some() {
                    return bad(format!("document {d:?} assigned more than once"));
                }
            }
        }
        Ok(Self {
            topics,
            assignment,
            outlier_id,
            config,
        })
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn topic(&self, id: i64) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == id)
    }

    /// Topics to label and score: outliers dropped unless `include_outliers`.
    pub fn labelable(&self, include_outliers: bool) -> impl Iterator<Item = &Topic> {
        self.topics.iter().filter(move |t| include_outliers || !t.is_outlier())
    }

    pub fn assignment(&self) -> &BTreeMap<String, i64> {
        &self.assignment
    }

    pub fn config(&self) -> Option<&TopicModelConfig> {
        self.config.as_ref()
    }

    pub fn outlier_id(&self) -> Option<i64> {
        self.outlier_id
    }

    /// Checks the assignment against a corpus: no unknown ids, no
    /// unassigned documents.
    pub fn check_against<'a>(&self, corpus_ids: impl IntoIterator<Item = &'a str>) -> Result<(), TopicError> {
        let corpus: BTreeSet<&str> = corpus_ids.into_iter().collect();
        if let Some(unknown) = self.assignment.keys().find(|d| !corpus.contains(d.as_str())) {
            return Err(TopicError::UnknownDocId(unknown.clone()));
        }
        if let Some(missing) = corpus.iter().find(|d| !self.assignment.contains_key(**d)) {
            return Err(TopicError::SchemaViolation(format!(
                "document {missing:?} is not assigned to any topic"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topics serialize")
    }
}

pub fn export_topics(result: &TopicModelResult, path: &Path) -> Result<(), TopicError> {
    fs::write(path, result.to_json()).map_err(|source| TopicError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a topic file; when `corpus_ids` is given, every referenced id must
/// exist and every corpus document must be assigned.
pub fn import_topics<'a>(
    path: &Path,
    corpus_ids: Option<impl IntoIterator<Item = &'a str>>,
) -> Result<TopicModelResult, TopicError> {
    let raw = fs::read_to_string(path).map_err(|source| TopicError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let result = parse_topics(&raw)?;
    if let Some(ids) = corpus_ids {
        result.check_against(ids)?;
    }
    Ok(result)
}

pub fn parse_topics(raw: &str) -> Result<TopicModelResult, TopicError> {
    let file: TopicFile = serde_json::from_str(raw).map_err(|e| TopicError::SchemaViolation(e.to_string()))?;
    TopicModelResult::new(file.topics, file.outlier_id, file.config)
}

/// c-TF-IDF weight of every vocabulary term in every class:
/// `tf(x, c) · ln(1 + A / f(x))`, with `A` the mean token count per class
/// and `f(x)` the total count of `x` across classes.
pub fn ctfidf_weights(
    class_docs: &BTreeMap<i64, Vec<Vec<String>>>,
) -> Result<BTreeMap<i64, BTreeMap<String, f64>>, TopicError> {
    let mut class_tf: BTreeMap<i64, HashMap<&str, usize>> = BTreeMap::new();
    let mut total_tf: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total_tokens = 0usize;
    for (&class, docs) in class_docs {
        let tf = class_tf.entry(class).or_default();
        let mut n = 0;
        for tok in docs.iter().flatten() {
            *tf.entry(tok.as_str()).or_default() += 1;
            *total_tf.entry(tok.as_str()).or_default() += 1;
            n += 1;
        }
        if n == 0 {
            return Err(TopicError::EmptyClass(class));
        }
        total_tokens += n;
    }
    let avg = total_tokens as f64 / class_docs.len().max(1) as f64;
    Ok(class_tf
        .into_iter()
        .map(|(class, tf)| {
            let weights = total_tf
                .iter()
                .map(|(&term, &f)| {
                    let t = *tf.get(term).unwrap_or(&0) as f64;
                    (term.to_string(), t * (1.0 + avg / f as f64).ln())
                })
                .collect();
            (class, weights)
        })
        .collect())
}

/// Top `top_k` terms per class by c-TF-IDF weight, ties broken
/// lexicographically. Ranking covers the whole vocabulary, so a class with
/// fewer than `top_k` distinct terms is padded with zero-weight terms.
pub fn ctfidf_keywords(
    class_docs: &BTreeMap<i64, Vec<Vec<String>>>,
    top_k: usize,
) -> Result<BTreeMap<i64, Vec<String>>, TopicError> {
    let weights = ctfidf_weights(class_docs)?;
    Ok(weights
        .into_iter()
        .map(|(class, w)| {
            let mut ranked: Vec<(String, f64)> = w.into_iter().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            (class, ranked.into_iter().take(top_k).map(|(t, _)| t).collect())
        })
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    /// Cluster index per point, `0..k_effective`.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances after each iteration.
    pub objective_trace: Vec<f64>,
    /// Fewer clusters than requested when the input has fewer distinct points.
    pub k_effective: usize,
}

/// Seeded k-means++ followed by Lloyd iterations.
///
/// Stops when the relative objective improvement drops below 1e-6 or after
/// 100 iterations. An empty cluster is reseeded with the point farthest from
/// its current centroid. Nearest-centroid ties go to the lowest index.
pub fn kmeans<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R) -> KMeansOutcome {
    let n = points.len();
    assert!(n > 0 && k > 0, "kmeans needs points and k > 0");
    let k = k.min(n);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("positive total implies a candidate");
        centroids.push(points[pick].to_vec());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    let k = centroids.len();

    let mut assignment = vec![0usize; n];
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        // assignment step
        let mut dist = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (best, best_d) = centroids
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, sq_dist(p, ctr)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            assignment[i] = best;
            dist[i] = best_d;
        }

        // empty-cluster repair
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| sizes[assignment[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                sizes[assignment[i]] -= 1;
                assignment[i] = c;
                sizes[c] = 1;
                dist[i] = 0.0;
                centroids[c] = points[i].to_vec();
            }
        }

        // update step
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }

        let objective: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum();
        let prev = trace.last().copied();
        trace.push(objective);
        match prev {
            Some(prev) if prev - objective <= RELATIVE_TOLERANCE * prev => break,
            _ if objective == 0.0 => break,
            _ => {}
        }
    }

    KMeansOutcome {
        assignment,
        centroids,
        objective_trace: trace,
        k_effective: k,
    }
}

/// A document as seen by the topic model.
#[derive(Debug, Clone, Copy)]
pub struct TopicDoc<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub vector: &'a EmbeddingVector,
}

/// `max(2, round(√(N/2)))`, capped at N.
pub fn default_k(n_docs: usize) -> usize {
    (((n_docs as f64) / 2.0).sqrt().round() as usize).max(2).min(n_docs)
}

/// `min(5, max(2, ⌊n/4⌋))`.
pub fn default_k_sub(topic_size: usize) -> usize {
    (topic_size / 4).clamp(2, 5)
}

fn check_dims(docs: &[TopicDoc<'_>]) -> Result<(), TopicError> {
    let d = docs.first().map_or(0, |d| d.vector.dim());
    if docs.iter().any(|x| x.vector.dim() != d) {
        return Err(TopicError::DimensionMismatch);
    }
    Ok(())
}

/// Groups point indices by cluster and orders the groups by size
/// (descending), then by their first member.
fn ordered_groups(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        groups[a].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    groups
}

/// Clusters documents into `k` topics and extracts ten keywords per topic.
///
/// Topic ids run from 0 in order of decreasing size. If every vector is
/// identical a single topic is returned and a warning is recorded.
pub fn fit_topics(docs: &[TopicDoc<'_>], k: usize, seed: u64) -> Result<TopicModelResult, TopicError> {
    let n = docs.len();
    if n < 2 {
        return Err(TopicError::TooFewDocuments(n));
    }
    if k < 2 {
        return Err(TopicError::KTooSmall(k));
    }
    if k > n {
        return Err(TopicError::KTooLarge { k, n });
    }
    check_dims(docs)?;
    let points: Vec<&[f64]> = docs.iter().map(|d| d.vector.values()).collect();
    let mut rng = corpus_rng(seed);
    let outcome = kmeans(&points, k, &mut rng);

    let mut warnings = Vec::new();
    if outcome.k_effective < k {
        let msg = if outcome.k_effective == 1 {
            "all embedding vectors are identical; returning a single topic".to_string()
        } else {
            format!(
                "only {} distinct embedding vectors; returning {} topics instead of {k}",
                outcome.k_effective, outcome.k_effective
            )
        };
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let groups = ordered_groups(&outcome.assignment, outcome.k_effective);
    let class_docs: BTreeMap<i64, Vec<Vec<String>>> = groups
        .iter()
        .enumerate()
        .map(|(t, g)| (t as i64, g.iter().map(|&i| tokenize(docs[i].text)).collect()))
        .collect();
    let keywords = keywords_tolerating_empty(&class_docs, &mut warnings)?;

    let topics = groups
        .iter()
        .enumerate()
        .map(|(t, g)| Topic {
            id: t as i64,
            keywords: keywords.get(&(t as i64)).cloned().unwrap_or_default(),
            doc_ids: g.iter().map(|&i| docs[i].id.to_string()).collect(),
        })
        .collect();
    let config = TopicModelConfig {
        method: "kmeans++".into(),
        k,
        seed,
        tokenizer: TOKENIZER_DESCRIPTION.into(),
        objective_trace: outcome.objective_trace,
        warnings,
    };
    TopicModelResult::build(topics, None, Some(config), false)
}

/// c-TF-IDF over the non-empty classes; classes whose documents contain no
/// content tokens get no keywords.
fn keywords_tolerating_empty(
    class_docs: &BTreeMap<i64, Vec<Vec<String>>>,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<i64, Vec<String>>, TopicError> {
    let non_empty: BTreeMap<i64, Vec<Vec<String>>> = class_docs
        .iter()
        .filter(|(_, docs)| docs.iter().any(|d| !d.is_empty()))
        .map(|(k, v)| (*k, v.clone()))
        .collect();
    for id in class_docs.keys().filter(|id| !non_empty.contains_key(id)) {
        let msg = format!("topic {id} has no content tokens; no keywords extracted");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if non_empty.is_empty() {
        return Ok(BTreeMap::new());
    }
    ctfidf_keywords(&non_empty, TOP_KEYWORDS)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtopic {
    pub id: usize,
    pub doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtopicResult {
    pub parent_topic_id: i64,
    pub subtopics: Vec<Subtopic>,
    pub seed: u64,
}

impl SubtopicResult {
    /// The subtopics partition exactly the given topic's documents.
    pub fn is_partition_of(&self, topic: &Topic) -> bool {
        let mut all: Vec<&String> = self.subtopics.iter().flat_map(|s| &s.doc_ids).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        let mut expected: Vec<&String> = topic.doc_ids.iter().collect();
        expected.sort();
        !self.subtopics.is_empty() && all.len() == n && all == expected
    }
}

/// Splits one topic into subtopics by clustering only its documents.
///
/// Documents are clustered in id order, so the partition does not depend on
/// the order of `docs`. Topics with fewer than `2 · MIN_SUBTOPIC_SIZE`
/// documents come back as a single subtopic.
pub fn fit_subtopics(
    topic: &Topic,
    docs: &[TopicDoc<'_>],
    k_sub: usize,
    seed: u64,
) -> Result<SubtopicResult, TopicError> {
    let by_id: HashMap<&str, &TopicDoc<'_>> = docs.iter().map(|d| (d.id, d)).collect();
    let mut members: Vec<&TopicDoc<'_>> = Vec::with_capacity(topic.doc_ids.len());
    for id in &topic.doc_ids {
        members.push(
            by_id
                .get(id.as_str())
                .ok_or_else(|| TopicError::UnknownDocId(id.clone()))?,
        );
    }
    members.sort_by(|a, b| a.id.cmp(b.id));
    let n = members.len();
    let single = || SubtopicResult {
        parent_topic_id: topic.id,
        subtopics: vec![Subtopic {
            id: 0,
            doc_ids: members.iter().map(|d| d.id.to_string()).collect(),
        }],
        seed,
    };
    if n < 2 * MIN_SUBTOPIC_SIZE || k_sub < 2 {
        return Ok(single());
    }
    let owned: Vec<TopicDoc<'_>> = members.iter().map(|d| **d).collect();
    check_dims(&owned)?;
    let points: Vec<&[f64]> = members.iter().map(|d| d.vector.values()).collect();
    let mut rng = corpus_rng(seed);
    let outcome = kmeans(&points, k_sub.min(n), &mut rng);
    let groups = ordered_groups(&outcome.assignment, outcome.k_effective);
    Ok(SubtopicResult {
        parent_topic_id: topic.id,
        subtopics: groups
            .into_iter()
            .enumerate()
            .map(|(id, g)| Subtopic {
                id,
                doc_ids: g.into_iter().map(|i| members[i].id.to_string()).collect(),
            })
            .collect(),
        seed,
    })
}
