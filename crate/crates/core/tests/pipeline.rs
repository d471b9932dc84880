mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use tl_core::generation::{Endpoint, LiveProvider};
use tl_core::pipeline::{resume_with, RunStatus, StageError};
use tl_core::{resume, run, run_with, Embedder, Generator, PipelineError, ProviderError, RetryPolicy, RunConfig};

fn config(dir: &Path, seed: u64) -> RunConfig {
    let corpus = common::write_planted(dir, 40, 11);
    let mut c = RunConfig::mock(corpus, seed);
    c.output.dir = Some(dir.join("out"));
    c
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn full_run_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let out = run(&c).unwrap();
    assert_eq!(out.manifest.status, RunStatus::Complete);
    assert_eq!(out.reports.len(), 4);
    let o = dir.path().join("out");
    for s in ["overlap", "centrality", "dominant_subtopic", "diverse"] {
        assert!(o.join(format!("labels_{s}.json")).is_file(), "{s}");
        assert!(o.join(format!("report_{s}.json")).is_file(), "{s}");
    }
    for f in [
        "summaries.json",
        "topics.json",
        "subtopics.json",
        "report.json",
        "report.txt",
        "manifest.json",
    ] {
        assert!(o.join(f).is_file(), "{f}");
    }
    let topics_runs = out.executed.iter().filter(|s| *s == "topics").count();
    assert_eq!(topics_runs, 1);
    for r in &out.reports {
        assert!((0.0..=1.0).contains(&r.corpus_score));
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 7);
    run(&c).unwrap();
    let first = dir.path().join("out");
    c.output.dir = Some(dir.path().join("again"));
    run(&c).unwrap();
    let second = dir.path().join("again");
    for f in [
        "manifest.json",
        "report.json",
        "report.txt",
        "labels_overlap.json",
        "labels_diverse.json",
        "topics.json",
    ] {
        assert_eq!(read(first.join(f)), read(second.join(f)), "{f}");
    }
}

#[test]
fn matches_blessed_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    run(&c).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let out = dir.path().join("out");
    let files = [
        "report.txt",
        "labels_overlap.json",
        "labels_centrality.json",
        "labels_dominant_subtopic.json",
        "labels_diverse.json",
    ];
    if std::env::var_os("TL_BLESS").is_some() {
        fs::create_dir_all(&golden).unwrap();
        for f in files {
            fs::copy(out.join(f), golden.join(f)).unwrap();
        }
    }
    for f in files {
        assert_eq!(
            String::from_utf8(read(out.join(f))).unwrap(),
            String::from_utf8(read(golden.join(f))).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn single_strategy_only_produces_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 7);
    c.selection.strategies = "2".into();
    let out = run(&c).unwrap();
    let o = dir.path().join("out");
    assert!(o.join("selections_centrality.json").is_file());
    assert!(o.join("labels_centrality.json").is_file());
    assert!(o.join("report_centrality.json").is_file());
    for s in ["overlap", "dominant_subtopic", "diverse"] {
        assert!(!o.join(format!("labels_{s}.json")).exists());
        assert!(!o.join(format!("selections_{s}.json")).exists());
    }
    assert!(!o.join("subtopics.json").exists());
    assert_eq!(out.reports.len(), 1);
    assert!(out.table.render().contains("2 (centrality)"));
    assert!(!out.executed.iter().any(|s| s == "subtopics"));
}

#[test]
fn unreachable_provider_fails_in_summarize_and_keeps_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let provider = LiveProvider::new("http://127.0.0.1:9", "k".into(), Endpoint::Chat, Duration::from_secs(2));
    let generator = Generator::new(Arc::new(provider), "remote").with_retry(RetryPolicy {
        max_retries: 3,
        base_delay: Duration::ZERO,
    });
    let embedder = Embedder::mock(16);
    let err = run_with(&c, &generator, &embedder).unwrap_err();
    match &err {
        PipelineError::Stage {
            stage,
            source: StageError::Provider(ProviderError::ProviderUnavailable { attempts, .. }),
        } => {
            assert_eq!(stage, "summarize");
            assert_eq!(*attempts, 4);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.is_provider_failure());
    let store = tl_core::PipelineStore::new(dir.path().join("out/store"));
    assert_eq!(store.stages().unwrap(), vec!["corpus".to_string()]);
}

#[test]
fn resume_of_completed_run_executes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let first = run(&c).unwrap();
    let before = read(&first.manifest_path);
    let again = resume(&first.manifest_path, None).unwrap();
    assert!(again.executed.is_empty(), "{:?}", again.executed);
    assert_eq!(before, read(&again.manifest_path));
}

#[test]
fn resume_after_deleting_labels_reruns_label_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let first = run(&c).unwrap();
    let report = read(dir.path().join("out/report.json"));
    fs::remove_dir_all(dir.path().join("out/store/label")).unwrap();
    let again = resume(&first.manifest_path, None).unwrap();
    let mut executed = again.executed.clone();
    executed.sort();
    let mut expected: Vec<String> = ["overlap", "centrality", "dominant_subtopic", "diverse"]
        .iter()
        .flat_map(|s| [format!("label/{s}"), format!("evaluate/{s}")])
        .collect();
    expected.sort();
    assert_eq!(executed, expected);
    assert_eq!(report, read(dir.path().join("out/report.json")));
}

#[test]
fn resume_with_modified_seed_is_config_drift() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let first = run(&c).unwrap();
    let mut changed = c.clone();
    changed.topics.seed = 8;
    let err = resume(&first.manifest_path, Some(&changed)).unwrap_err();
    assert!(
        matches!(err, PipelineError::ConfigDrift { ref section } if section == "topics"),
        "{err:?}"
    );
}

#[test]
fn resume_detects_tampered_store_entry() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let first = run(&c).unwrap();
    let rec = first.manifest.record("topics").unwrap().clone();
    let path = dir.path().join("out/store/topics").join(format!("{}.json", rec.key));
    let mut bytes = read(&path);
    bytes.push(b' ');
    fs::write(&path, bytes).unwrap();
    let err = resume_with(&first.manifest_path, None, &Generator::mock(), &Embedder::mock(16)).unwrap_err();
    assert!(matches!(err, PipelineError::CorruptStore { .. }), "{err:?}");
}

#[test]
fn failed_run_resumes_from_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), 7);
    let provider = LiveProvider::new("http://127.0.0.1:9", "k".into(), Endpoint::Chat, Duration::from_secs(2));
    let down = Generator::new(Arc::new(provider), "mock").with_retry(RetryPolicy::none());
    run_with(&c, &down, &Embedder::mock(16)).unwrap_err();
    let manifest = dir.path().join("out/manifest.json");
    let again = resume_with(&manifest, None, &Generator::mock(), &Embedder::mock(16)).unwrap();
    assert!(!again.executed.iter().any(|s| s == "corpus"));
    assert!(again.executed.iter().any(|s| s == "summarize"));
    assert_eq!(again.manifest.status, RunStatus::Complete);
}
