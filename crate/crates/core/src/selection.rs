//! The four strategies that pick at most ten representative summaries per
//! topic for the labeling prompt:
//!
//! 1. `overlap`: documents containing the most top keywords.
//! 2. `centrality`: documents with the largest summed TF-IDF cosine
//!    similarity to the rest of the topic.
//! 3. `dominant_subtopic`: a random sample from the largest subtopic.
//! 4. `diverse`: one random document per subtopic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{sample_indices, topic_rng, Purpose};
use crate::text::{alphanumeric_words, tokenize};
use crate::topic_model::{SubtopicResult, Topic};

pub const MAX_SELECTION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Overlap,
    Centrality,
    DominantSubtopic,
    Diverse,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Overlap,
        Strategy::Centrality,
        Strategy::DominantSubtopic,
        Strategy::Diverse,
    ];

    /// Approach number, 1 through 4.
    pub fn number(self) -> u8 {
        match self {
            Self::Overlap => 1,
            Self::Centrality => 2,
            Self::DominantSubtopic => 3,
            Self::Diverse => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Overlap => "overlap",
            Self::Centrality => "centrality",
            Self::DominantSubtopic => "dominant_subtopic",
            Self::Diverse => "diverse",
        }
    }

    pub fn needs_subtopics(self) -> bool {
        matches!(self, Self::DominantSubtopic | Self::Diverse)
    }

    /// Parses a comma-separated list such as `1,2,4` or `overlap,diverse`.
    /// Duplicates collapse; output is in approach order.
    pub fn parse_list(s: &str) -> Result<Vec<Strategy>, SelectionError> {
        let mut out: Vec<Strategy> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(SelectionError::UnknownStrategy(s.to_string()));
        }
        Ok(out)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| s == st.name() || s == st.number().to_string())
            .ok_or_else(|| SelectionError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error(
        "unknown strategy {0:?}; valid strategies are 1 (overlap), 2 (centrality), 3 (dominant_subtopic), 4 (diverse)"
    )]
    UnknownStrategy(String),
    #[error("no text available for document {0:?}")]
    MissingText(String),
    #[error("topic {0} has no documents")]
    EmptyTopic(i64),
    #[error("strategy {strategy} needs subtopics for topic {topic_id}")]
    MissingSubtopics { strategy: Strategy, topic_id: i64 },
    #[error("subtopics do not partition topic {0}")]
    InvalidSubtopics(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub topic_id: i64,
    pub strategy: Strategy,
    pub doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub seed: u64,
}

/// Row-normalized sparse TF-IDF matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfMatrix {
    /// Per document: `(column, weight)` pairs sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Term → column, columns assigned in lexicographic term order.
    pub vocabulary: BTreeMap<String, usize>,
}

impl TfidfMatrix {
    pub fn dot(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.rows[i], &self.rows[j]);
        let (mut x, mut y, mut acc) = (0, 0, 0.0);
        while x < a.len() && y < b.len() {
            match a[x].0.cmp(&b[y].0) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[x].1 * b[y].1;
                    x += 1;
                    y += 1;
                }
            }
        }
        acc
    }

    /// N×N cosine similarities. Rows are unit length (or zero), so cosine
    /// is the dot product; zero rows give 0 everywhere.
    #[allow(clippy::needless_range_loop)]
    pub fn cosine_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.dot(i, j);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }
}

/// TF-IDF with raw counts and smoothed idf `ln((1+N)/(1+df)) + 1`, rows
/// L2-normalized. Uses the keyword tokenizer.
pub fn build_tfidf(texts: &[&str]) -> TfidfMatrix {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &docs {
        let distinct: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    let vocabulary: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = df
        .values()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    let rows = docs
        .iter()
        .map(|doc| {
            let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
            for t in doc {
                *tf.entry(vocabulary[t]).or_default() += 1;
            }
            let mut row: Vec<(usize, f64)> = tf.into_iter().map(|(c, n)| (c, n as f64 * idf[c])).collect();
            let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, w) in &mut row {
                    *w /= norm;
                }
            }
            row
        })
        .collect();
    TfidfMatrix { rows, vocabulary }
}

fn sorted_members(topic: &Topic) -> Result<Vec<&str>, SelectionError> {
    if topic.doc_ids.is_empty() {
        return Err(SelectionError::EmptyTopic(topic.id));
    }
    let mut ids: Vec<&str> = topic.doc_ids.iter().map(String::as_str).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

fn text_of<'a>(texts: &'a BTreeMap<String, String>, id: &str) -> Result<&'a str, SelectionError> {
    texts
        .get(id)
        .map(String::as_str)
        .ok_or_else(|| SelectionError::MissingText(id.to_string()))
}

/// Strategy 1. Score = number of distinct keywords present in the
/// tokenized summary; ties broken by total keyword occurrences, then by
/// ascending id. A multi-word keyword counts when all its tokens occur.
pub fn select_overlap(topic: &Topic, texts: &BTreeMap<String, String>) -> Result<Selection, SelectionError> {
    let keywords: Vec<Vec<String>> = topic
        .keywords
        .iter()
        .map(|k| alphanumeric_words(k))
        .filter(|k| !k.is_empty())
        .collect();
    let mut scored = Vec::new();
    for id in sorted_members(topic)? {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tok in alphanumeric_words(text_of(texts, id)?) {
            *counts.entry(tok).or_default() += 1;
        }
        let mut seen: HashSet<&[String]> = HashSet::new();
        let (mut distinct, mut occurrences) = (0usize, 0usize);
        for kw in &keywords {
            if !seen.insert(kw.as_slice()) {
                continue;
            }
            let occ = kw.iter().map(|t| *counts.get(t).unwrap_or(&0)).min().unwrap_or(0);
            if occ > 0 {
                distinct += 1;
                occurrences += occ;
            }
        }
        scored.push((id, distinct, occurrences));
    }
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
    scored.truncate(MAX_SELECTION);
    Ok(Selection {
        topic_id: topic.id,
        strategy: Strategy::Overlap,
        doc_ids: scored.iter().map(|s| s.0.to_string()).collect(),
        scores: Some(scored.iter().map(|s| s.1 as f64).collect()),
        seed: 0,
    })
}

/// Strategy 2. Score = row sum of the topic's N×N TF-IDF cosine matrix,
/// self-similarity included; ties by ascending id.
pub fn select_centrality(topic: &Topic, texts: &BTreeMap<String, String>) -> Result<Selection, SelectionError> {
    let ids = sorted_members(topic)?;
    let docs: Vec<&str> = ids.iter().map(|id| text_of(texts, id)).collect::<Result<_, _>>()?;
    let sims = build_tfidf(&docs).cosine_matrix();
    let mut scored: Vec<(&str, f64)> = ids.iter().zip(&sims).map(|(id, row)| (*id, row.iter().sum())).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    scored.truncate(MAX_SELECTION);
    Ok(Selection {
        topic_id: topic.id,
        strategy: Strategy::Centrality,
        doc_ids: scored.iter().map(|s| s.0.to_string()).collect(),
        scores: Some(scored.iter().map(|s| s.1).collect()),
        seed: 0,
    })
}

fn checked_subtopics<'a>(topic: &Topic, subtopics: &'a SubtopicResult) -> Result<&'a SubtopicResult, SelectionError> {
    if subtopics.parent_topic_id != topic.id || !subtopics.is_partition_of(topic) {
        return Err(SelectionError::InvalidSubtopics(topic.id));
    }
    Ok(subtopics)
}

fn sorted(ids: &[String]) -> Vec<&str> {
    let mut v: Vec<&str> = ids.iter().map(String::as_str).collect();
    v.sort_unstable();
    v
}

/// Strategy 3. Uniform sample of up to ten documents from the largest
/// subtopic (ties go to the lowest subtopic id); output sorted by id.
pub fn select_dominant_subtopic(
    topic: &Topic,
    subtopics: &SubtopicResult,
    seed: u64,
) -> Result<Selection, SelectionError> {
    let subtopics = checked_subtopics(topic, subtopics)?;
    let largest = subtopics
        .subtopics
        .iter()
        .max_by(|a, b| a.doc_ids.len().cmp(&b.doc_ids.len()).then(b.id.cmp(&a.id)))
        .ok_or(SelectionError::InvalidSubtopics(topic.id))?;
    let pool = sorted(&largest.doc_ids);
    let mut rng = topic_rng(seed, topic.id, Purpose::DominantSubtopic);
    let mut picked: Vec<String> = sample_indices(&mut rng, pool.len(), MAX_SELECTION)
        .into_iter()
        .map(|i| pool[i].to_string())
        .collect();
    picked.sort();
    Ok(Selection {
        topic_id: topic.id,
        strategy: Strategy::DominantSubtopic,
        doc_ids: picked,
        scores: None,
        seed,
    })
}

/// Strategy 4. One uniformly drawn document per subtopic; with more than
/// ten subtopics, ten documents drawn from the union of all subtopics.
/// Output sorted by id.
pub fn select_diverse(topic: &Topic, subtopics: &SubtopicResult, seed: u64) -> Result<Selection, SelectionError> {
    let subtopics = checked_subtopics(topic, subtopics)?;
    let mut rng = topic_rng(seed, topic.id, Purpose::Diverse);
    let mut picked: Vec<String> = if subtopics.subtopics.len() <= MAX_SELECTION {
        let mut ordered: Vec<_> = subtopics.subtopics.iter().collect();
        ordered.sort_by_key(|s| s.id);
        ordered
            .into_iter()
            .map(|s| {
                let pool = sorted(&s.doc_ids);
                pool[sample_indices(&mut rng, pool.len(), 1)[0]].to_string()
            })
            .collect()
    } else {
        let pool = sorted(&topic.doc_ids);
        sample_indices(&mut rng, pool.len(), MAX_SELECTION)
            .into_iter()
            .map(|i| pool[i].to_string())
            .collect()
    };
    picked.sort();
    Ok(Selection {
        topic_id: topic.id,
        strategy: Strategy::Diverse,
        doc_ids: picked,
        scores: None,
        seed,
    })
}

/// Runs `strategy` for one topic and stamps the run seed on the result.
pub fn select(
    strategy: Strategy,
    topic: &Topic,
    texts: &BTreeMap<String, String>,
    subtopics: Option<&SubtopicResult>,
    seed: u64,
) -> Result<Selection, SelectionError> {
    let need = || SelectionError::MissingSubtopics {
        strategy,
        topic_id: topic.id,
    };
    let mut s = match strategy {
        Strategy::Overlap => select_overlap(topic, texts)?,
        Strategy::Centrality => select_centrality(topic, texts)?,
        Strategy::DominantSubtopic => select_dominant_subtopic(topic, subtopics.ok_or_else(need)?, seed)?,
        Strategy::Diverse => select_diverse(topic, subtopics.ok_or_else(need)?, seed)?,
    };
    s.seed = seed;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topic_model::Subtopic;

    fn topic(ids: &[&str], keywords: &[&str]) -> Topic {
        Topic {
            id: 0,
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            doc_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn texts(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn subs(parts: &[&[&str]]) -> SubtopicResult {
        SubtopicResult {
            parent_topic_id: 0,
            subtopics: parts
                .iter()
                .enumerate()
                .map(|(id, p)| Subtopic {
                    id,
                    doc_ids: p.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
            seed: 0,
        }
    }

    const KW: [&str; 10] = [
        "tax", "nuclear", "export", "gazprom", "yukos", "oil", "court", "russia", "firm", "bill",
    ];

    #[test]
    fn overlap_full_match_first() {
        let t = topic(&["a", "b"], &KW);
        let tx = texts(&[("a", "tax only"), ("b", &KW.join(" "))]);
        let s = select_overlap(&t, &tx).unwrap();
        assert_eq!(s.doc_ids, ["b", "a"]);
        assert_eq!(s.scores.unwrap(), [10.0, 1.0]);
    }

    #[test]
    fn overlap_ranks_by_distinct_count() {
        let t = topic(&["s1", "s2", "s3"], &KW);
        let tx = texts(&[
            ("s1", "tax nuclear export"),
            ("s2", "oil oil oil oil"),
            ("s3", "court russia"),
        ]);
        assert_eq!(select_overlap(&t, &tx).unwrap().doc_ids, ["s1", "s3", "s2"]);
    }

    #[test]
    fn overlap_tie_breaks_on_occurrences_then_id() {
        let t = topic(&["c", "b", "a"], &KW);
        let tx = texts(&[("a", "tax"), ("b", "tax tax"), ("c", "tax")]);
        assert_eq!(select_overlap(&t, &tx).unwrap().doc_ids, ["b", "a", "c"]);
    }

    #[test]
    fn small_topic_selects_all() {
        let t = topic(&["a", "b", "c", "d"], &KW);
        let tx = texts(&[("a", "x"), ("b", "y"), ("c", "z"), ("d", "w")]);
        assert_eq!(select_overlap(&t, &tx).unwrap().doc_ids.len(), 4);
        assert_eq!(select_centrality(&t, &tx).unwrap().doc_ids.len(), 4);
    }

    #[test]
    fn missing_text_reported() {
        let t = topic(&["a"], &KW);
        assert_eq!(
            select_overlap(&t, &BTreeMap::new()).unwrap_err(),
            SelectionError::MissingText("a".into())
        );
    }

    #[test]
    fn tfidf_single_doc_unit_norm_and_shared_idf() {
        let m = build_tfidf(&["alpha beta beta"]);
        let norm: f64 = m.rows[0].iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-15);
        // every term appears in the only document: idf = 1, so weights ∝ raw counts
        let ratio = m.rows[0][1].1 / m.rows[0][0].1;
        assert!((ratio - 2.0).abs() < 1e-15);
    }

    #[test]
    fn centrality_identical_docs_tie_to_lowest_ids() {
        let ids: Vec<String> = (0..12).map(|i| format!("d{i:02}")).collect();
        let idr: Vec<&str> = ids.iter().map(String::as_str).collect();
        let t = topic(&idr, &KW);
        let tx: BTreeMap<String, String> = ids
            .iter()
            .map(|i| (i.clone(), "same summary text".to_string()))
            .collect();
        let s = select_centrality(&t, &tx).unwrap();
        assert_eq!(s.doc_ids, ids[..10].to_vec());
        for score in s.scores.unwrap() {
            assert!((score - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centrality_disjoint_doc_last() {
        let t = topic(&["a", "b", "c", "z"], &KW);
        let tx = texts(&[
            ("a", "oil price rises sharply"),
            ("b", "oil price rises again"),
            ("c", "oil price rises today"),
            ("z", "tennis doping ban"),
        ]);
        let s = select_centrality(&t, &tx).unwrap();
        assert_eq!(s.doc_ids.last().unwrap(), "z");
    }

    #[test]
    fn zero_row_scores_zero() {
        let t = topic(&["a", "b"], &KW);
        let tx = texts(&[("a", "the of and"), ("b", "oil price")]);
        let s = select_centrality(&t, &tx).unwrap();
        assert_eq!(s.doc_ids, ["b", "a"]);
        assert_eq!(s.scores.unwrap()[1], 0.0);
    }

    #[test]
    fn dominant_picks_largest_then_lowest_id() {
        let t = topic(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"], &KW);
        let s = subs(&[&["a", "b", "c", "d", "e"], &["f", "g", "h", "i", "j"]]);
        let sel = select_dominant_subtopic(&t, &s, 3).unwrap();
        assert_eq!(sel.doc_ids, ["a", "b", "c", "d", "e"]);
        let s = subs(&[&["a", "b"], &["c", "d", "e", "f"], &["g", "h", "i", "j"]]);
        let sel = select_dominant_subtopic(&t, &s, 3).unwrap();
        assert_eq!(sel.doc_ids, ["c", "d", "e", "f"]);
    }

    #[test]
    fn diverse_one_per_subtopic() {
        let t = topic(&["a", "b", "c", "d", "e", "f"], &KW);
        let s = subs(&[&["a", "b"], &["c", "d", "e"], &["f"]]);
        let sel = select_diverse(&t, &s, 11).unwrap();
        assert_eq!(sel.doc_ids.len(), 3);
        for part in &s.subtopics {
            assert_eq!(part.doc_ids.iter().filter(|d| sel.doc_ids.contains(d)).count(), 1);
        }
        let one = subs(&[&["a", "b", "c", "d", "e", "f"]]);
        assert_eq!(select_diverse(&t, &one, 11).unwrap().doc_ids.len(), 1);
    }

    #[test]
    fn diverse_overflow_samples_ten() {
        let ids: Vec<String> = (0..24).map(|i| format!("d{i:02}")).collect();
        let idr: Vec<&str> = ids.iter().map(String::as_str).collect();
        let t = topic(&idr, &KW);
        let parts: Vec<Vec<&str>> = idr.chunks(2).map(|c| c.to_vec()).collect();
        let part_refs: Vec<&[&str]> = parts.iter().map(Vec::as_slice).collect();
        let s = subs(&part_refs);
        assert_eq!(s.subtopics.len(), 12);
        let sel = select_diverse(&t, &s, 5).unwrap();
        assert_eq!(sel.doc_ids.len(), 10);
    }

    #[test]
    fn rejects_non_partition() {
        let t = topic(&["a", "b"], &KW);
        assert_eq!(
            select_diverse(&t, &subs(&[&["a"]]), 1).unwrap_err(),
            SelectionError::InvalidSubtopics(0)
        );
        assert!(matches!(
            select(Strategy::Diverse, &t, &BTreeMap::new(), None, 1),
            Err(SelectionError::MissingSubtopics { .. })
        ));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            Strategy::parse_list("2,1,2").unwrap(),
            [Strategy::Overlap, Strategy::Centrality]
        );
        assert_eq!(
            "dominant_subtopic".parse::<Strategy>().unwrap(),
            Strategy::DominantSubtopic
        );
        let err = Strategy::parse_list("5").unwrap_err();
        assert!(err.to_string().contains("1 (overlap)"));
    }
}
