mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tl_core::generation::Label;
use tl_core::metric::EvalOptions;
use tl_core::selection::{build_tfidf, select_centrality};
use tl_core::text::tokenize;
use tl_core::topic_model::{ctfidf_keywords, fit_subtopics, fit_topics, kmeans, TopicDoc};
use tl_core::{evaluate, Corpus, Document, Embedder, EmbeddingVector, Strategy, Topic, TopicModelResult};

fn vectors(texts: &[&str]) -> Vec<EmbeddingVector> {
    Embedder::mock(16)
        .embed_texts(&texts.iter().map(|t| t.to_string()).collect::<Vec<_>>())
        .unwrap()
}

fn docs<'a>(ids: &'a [String], texts: &'a [&'a str], vecs: &'a [EmbeddingVector]) -> Vec<TopicDoc<'a>> {
    ids.iter()
        .zip(texts)
        .zip(vecs)
        .map(|((id, text), vector)| TopicDoc { id, text, vector })
        .collect()
}

#[test]
fn mock_embedding_matches_independent_hash() {
    let texts = [
        "Hello, world!",
        "tax nuclear export",
        "a b c d e f g",
        "Ünïcode wörds 42",
    ];
    for (t, v) in texts.iter().zip(vectors(&texts)) {
        let expected = common::mock_vector(t, 16);
        for (a, b) in v.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{t}");
        }
    }
}

#[test]
fn two_separated_groups_are_recovered_and_optimal() {
    let texts = [
        "football match goal striker",
        "football goal striker league",
        "match striker league goal",
        "football league match goal",
        "striker goal football match",
        "bank interest loan credit",
        "credit bank loan market",
        "interest market loan bank",
        "loan credit interest market",
        "bank market credit interest",
    ];
    let vecs = vectors(&texts);
    let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
    let fit = fit_topics(&docs(&ids, &texts, &vecs), 2, 3).unwrap();

    let points: Vec<Vec<f64>> = vecs.iter().map(|v| v.values().to_vec()).collect();
    let (_, best) = common::brute_force_partition(&points, 2);
    assert_eq!(
        common::groups(&best),
        vec![(0..5).collect::<Vec<_>>(), (5..10).collect()]
    );

    let mut found: Vec<Vec<String>> = fit.topics().iter().map(|t| t.doc_ids.clone()).collect();
    found.iter_mut().for_each(|g| g.sort());
    found.sort();
    assert_eq!(found, vec![ids[..5].to_vec(), ids[5..].to_vec()]);
}

#[test]
fn subtopics_six_four_two_match_brute_force() {
    let mut texts: Vec<&str> = Vec::new();
    texts.extend(["alpha beta gamma"; 3]);
    texts.extend(["alpha beta gamma delta"; 3]);
    texts.extend([
        "river lake ocean",
        "river lake ocean sea",
        "river ocean",
        "lake sea ocean",
    ]);
    texts.extend(["volcano magma", "volcano magma lava"]);
    let vecs = vectors(&texts);
    let ids: Vec<String> = (0..12).map(|i| format!("s{i:02}")).collect();
    let topic = Topic {
        id: 0,
        keywords: vec![],
        doc_ids: ids.clone(),
    };
    let sub = fit_subtopics(&topic, &docs(&ids, &texts, &vecs), 3, 5).unwrap();
    assert!(sub.is_partition_of(&topic));

    let points: Vec<Vec<f64>> = vecs.iter().map(|v| v.values().to_vec()).collect();
    let (_, best) = common::brute_force_partition(&points, 3);
    let expected = common::groups(&best);
    assert_eq!(
        expected,
        vec![(0..6).collect::<Vec<_>>(), (6..10).collect(), vec![10, 11]]
    );

    let mut found: Vec<Vec<usize>> = sub
        .subtopics
        .iter()
        .map(|s| s.doc_ids.iter().map(|d| d[1..].parse().unwrap()).collect())
        .collect();
    found.iter_mut().for_each(|g: &mut Vec<usize>| g.sort());
    found.sort();
    assert_eq!(found, expected);
}

#[test]
fn kmeans_objective_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..50 {
        let n = rng.gen_range(3..40);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let k = rng.gen_range(1..=n.min(6));
        let out = kmeans(&refs, k, &mut ChaCha8Rng::seed_from_u64(trial));
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "trial {trial}: {:?}", out.objective_trace);
        }
        let last = *out.objective_trace.last().unwrap();
        assert!((last - common::sse(&pts, &out.assignment, out.k_effective)).abs() < 1e-9);
    }
}

#[test]
fn ctfidf_ranking_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let size = rng.gen_range(3..15);
        let vocab = common::vocabulary(&mut rng, size, 4);
        let mut classes: BTreeMap<i64, Vec<Vec<String>>> = BTreeMap::new();
        for c in 0..rng.gen_range(1..5) {
            let docs = (0..rng.gen_range(1..4))
                .map(|_| {
                    (0..rng.gen_range(1..8))
                        .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                        .collect()
                })
                .collect();
            classes.insert(c, docs);
        }
        assert_eq!(
            ctfidf_keywords(&classes, 10).unwrap(),
            common::brute_force_ctfidf(&classes, 10)
        );
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn tfidf_three_document_example() {
    let m = build_tfidf(&["aa bb", "aa cc", "bb cc"]).cosine_matrix();
    // every pair shares one of two equally weighted terms
    for i in 0..3 {
        assert!((m[i][i] - 1.0).abs() < 1e-12);
        for j in 0..3 {
            if i != j {
                assert!((m[i][j] - 0.5).abs() < 1e-12);
            }
        }
    }
    let topic = Topic {
        id: 0,
        keywords: vec![],
        doc_ids: vec!["x".into(), "y".into(), "z".into()],
    };
    let texts: BTreeMap<String, String> = [("x", "aa bb"), ("y", "aa cc"), ("z", "bb cc")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let s = select_centrality(&topic, &texts).unwrap();
    assert_eq!(s.doc_ids, ["x", "y", "z"]);
    for score in s.scores.unwrap() {
        assert!((score - 2.0).abs() < 1e-12);
    }
}

#[test]
fn tfidf_matches_dense_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let size = rng.gen_range(1..30);
        let vocab = common::vocabulary(&mut rng, size, 5);
        let texts: Vec<String> = (0..rng.gen_range(1..20))
            .map(|_| {
                (0..rng.gen_range(0..12))
                    .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let fast = build_tfidf(&refs).cosine_matrix();
        let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        let slow = common::naive_tfidf_cosine(&tokens);
        for i in 0..texts.len() {
            for j in 0..texts.len() {
                assert!((fast[i][j] - slow[i][j]).abs() < 1e-9);
                assert_eq!(fast[i][j], fast[j][i]);
            }
            if !tokens[i].is_empty() {
                assert!((fast[i][i] - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn two_topic_metric_matches_hand_computation() {
    let corpus = Corpus::new(
        [
            ("a", "oil gas"),
            ("b", "oil price"),
            ("c", "goal match"),
            ("d", "goal league"),
            ("e", "match day"),
        ]
        .iter()
        .map(|(id, text)| Document {
            id: id.to_string(),
            text: text.to_string(),
            meta: Default::default(),
        })
        .collect(),
    )
    .unwrap();
    let topic = |id, docs: &[&str]| Topic {
        id,
        keywords: (0..10).map(|i| format!("k{i}")).collect(),
        doc_ids: docs.iter().map(|d| d.to_string()).collect(),
    };
    let topics = TopicModelResult::new(vec![topic(0, &["c", "d", "e"]), topic(1, &["a", "b"])], None, None).unwrap();
    let label = |topic_id, text: &str| Label {
        topic_id,
        text: text.into(),
        word_count: 2,
        strategy: Strategy::Overlap,
        fallback_used: false,
    };
    let labels = [label(0, "goal match"), label(1, "oil gas")];
    let report = evaluate(
        &labels,
        &topics,
        &corpus,
        None,
        &Embedder::mock(16),
        EvalOptions::default(),
    )
    .unwrap();

    let cos = |a: &str, b: &str| common::naive_cosine(&common::mock_vector(a, 16), &common::mock_vector(b, 16));
    let t0 =
        (cos("goal match", "goal match") + cos("goal match", "goal league") + cos("goal match", "match day")) / 3.0;
    let t1 = (cos("oil gas", "oil gas") + cos("oil gas", "oil price")) / 2.0;
    let expected = (3.0 * t0 + 2.0 * t1) / 5.0;
    assert!((report.per_topic[0].score - t0).abs() < 1e-12);
    assert!((report.per_topic[1].score - t1).abs() < 1e-12);
    assert!((report.corpus_score - expected).abs() < 1e-12);
}
