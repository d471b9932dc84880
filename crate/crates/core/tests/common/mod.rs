#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tl_core::{save_corpus, Corpus, CorpusFormat, Document};

pub const VOCABS: [[&str; 12]; 3] = [
    [
        "oil",
        "gas",
        "pipeline",
        "crude",
        "refinery",
        "barrel",
        "drilling",
        "tanker",
        "opec",
        "petroleum",
        "offshore",
        "rig",
    ],
    [
        "goal", "striker", "league", "referee", "stadium", "midfield", "penalty", "keeper", "coach", "football",
        "match", "tackle",
    ],
    [
        "genome", "protein", "enzyme", "cell", "mutation", "dna", "molecule", "bacteria", "antibody", "vaccine",
        "tissue", "virus",
    ],
];

/// `n` documents cycling through the planted vocabularies, each `words`
/// long, drawn with a seeded generator.
pub fn planted_corpus(n: usize, words: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n)
        .map(|i| {
            let vocab = &VOCABS[i % VOCABS.len()];
            let text: Vec<&str> = (0..words).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
            Document {
                id: format!("d{i:03}"),
                text: text.join(" "),
                meta: Default::default(),
            }
        })
        .collect();
    Corpus::new(docs).unwrap()
}

pub fn write_planted(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join("planted.jsonl");
    save_corpus(&planted_corpus(n, 35, seed), &path, CorpusFormat::Jsonl).unwrap();
    path
}

/// A random lowercase word over a small alphabet so collisions happen.
pub fn random_word<R: Rng>(rng: &mut R, alphabet: usize) -> String {
    let len = rng.gen_range(2..=4);
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..alphabet as u8)) as char)
        .collect()
}

pub fn vocabulary<R: Rng>(rng: &mut R, size: usize, alphabet: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < size {
        let w = random_word(rng, alphabet);
        if !out.contains(&w) && !tl_core::text::is_stopword(&w) {
            out.push(w);
        }
    }
    out
}

/// FNV-1a bucket-count embedding, normalized; written independently of
/// the library.
pub fn mock_vector(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let lower = text.to_lowercase();
    for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in word.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        v[(h % dim as u64) as usize] += 1.0;
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine over every (label, document) pair of every topic.
pub fn brute_force_corpus_score(topics: &[(String, Vec<String>)], dim: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (label, docs) in topics {
        let l = mock_vector(label, dim);
        for d in docs {
            sum += naive_cosine(&l, &mock_vector(d, dim));
            n += 1;
        }
    }
    sum / n as f64
}

/// Dense TF-IDF cosine matrix, O(N²·V).
pub fn naive_tfidf_cosine(docs: &[Vec<String>]) -> Vec<Vec<f64>> {
    let mut vocab: Vec<&String> = docs.iter().flatten().collect();
    vocab.sort();
    vocab.dedup();
    let n = docs.len() as f64;
    let dense: Vec<Vec<f64>> = docs
        .iter()
        .map(|doc| {
            vocab
                .iter()
                .map(|term| {
                    let tf = doc.iter().filter(|t| t == term).count() as f64;
                    let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                    tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0)
                })
                .collect()
        })
        .collect();
    let mut m = vec![vec![0.0; docs.len()]; docs.len()];
    for i in 0..docs.len() {
        for j in 0..docs.len() {
            m[i][j] = naive_cosine(&dense[i], &dense[j]);
        }
    }
    m
}

/// Ranks every vocabulary term per class straight from the weight
/// formula `tf · ln(1 + A / f)`.
pub fn brute_force_ctfidf(
    classes: &std::collections::BTreeMap<i64, Vec<Vec<String>>>,
    top_k: usize,
) -> std::collections::BTreeMap<i64, Vec<String>> {
    let all: Vec<&String> = classes.values().flatten().flatten().collect();
    let mut vocab = all.clone();
    vocab.sort();
    vocab.dedup();
    let a = all.len() as f64 / classes.len() as f64;
    classes
        .iter()
        .map(|(&c, docs)| {
            let mut ranked: Vec<(&String, f64)> = vocab
                .iter()
                .map(|&term| {
                    let tf = docs.iter().flatten().filter(|t| *t == term).count() as f64;
                    let f = all.iter().filter(|t| **t == term).count() as f64;
                    (term, tf * (1.0 + a / f).ln())
                })
                .collect();
            ranked.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(y.0)));
            (c, ranked.into_iter().take(top_k).map(|(t, _)| t.clone()).collect())
        })
        .collect()
}

/// Minimum within-cluster sum of squares over every assignment of the
/// points to at most `k` clusters, with the best labelling.
pub fn brute_force_partition(points: &[Vec<f64>], k: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut best = (f64::INFINITY, Vec::new());
    let mut assign = vec![0usize; n];
    loop {
        let sse = sse(points, &assign, k);
        if sse < best.0 - 1e-12 {
            best = (sse, assign.clone());
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            assign[i] += 1;
            if assign[i] < k {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

pub fn sse(points: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(assign)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|p| p.iter().zip(&centroid).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum::<f64>();
    }
    total
}

/// Groups of point indices under `assign`, normalized for comparison.
pub fn groups(assign: &[usize]) -> Vec<Vec<usize>> {
    let mut by: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &a) in assign.iter().enumerate() {
        by.entry(a).or_default().push(i);
    }
    let mut g: Vec<Vec<usize>> = by.into_values().collect();
    g.sort();
    g
}
