use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tl_core::config::ModelOn;
use tl_core::generation::Label;
use tl_core::metric::EvalOptions;
use tl_core::parallel::fan_out;
use tl_core::pipeline::RunOutcome;
use tl_core::rng::{topic_seed, Purpose};
use tl_core::selection::{select as select_docs, Selection};
use tl_core::topic_model::{default_k, default_k_sub, fit_subtopics, fit_topics, import_topics, TopicDoc};
use tl_core::{
    evaluate, load_corpus, resume as resume_run, run as run_pipeline, Corpus, CorpusFormat, LoadOptions, RunConfig,
    Strategy, Summary, TopicModelResult,
};

use crate::exit::{CliError, Status};
use crate::{CorpusArgs, EvalArgs, LabelArgs, ResumeArgs, RunArgs, SelectArgs, SummarizeArgs, TopicsArgs};

type CliResult = Result<Status, CliError>;

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let raw =
        fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::invalid(format!("{} is not a valid {what} file: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::internal(format!("{}: {e}", parent.display())))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

/// Provider and model settings for the single-stage commands: the given
/// config file, or mock providers with default settings.
fn settings(config: Option<&Path>) -> Result<RunConfig, CliError> {
    let c = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::mock("-", 0),
    };
    c.check_credentials()?;
    Ok(c)
}

fn load(args: &CorpusArgs) -> Result<Corpus, CliError> {
    let format = match args.format {
        Some(f) => f,
        None => CorpusFormat::infer(&args.corpus).ok_or_else(|| {
            CliError::invalid(format!(
                "cannot infer the format of {}; pass --format jsonl|csv|txt-dir",
                args.corpus.display()
            ))
        })?,
    };
    let opts = LoadOptions {
        strip_newsgroup_boilerplate: args.strip_newsgroup_boilerplate,
    };
    Ok(load_corpus(&args.corpus, format, opts)?)
}

/// Markdown-style table with left-aligned columns.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let mut s = String::from("|");
        for (c, cell) in cells.into_iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            s.push_str(&format!(" {cell}{} |", " ".repeat(pad)));
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|_| "").collect()).replace(' ', "-"));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn report_outcome(out: &RunOutcome) -> CliResult {
    print!("{}", out.table.render());
    let failures = &out.manifest.failures;
    for f in failures {
        eprintln!("strategy {} failed in {}: {}", f.strategy, f.stage, f.error);
    }
    Ok(match failures.first() {
        None => Status::Ok,
        Some(_) if failures.iter().any(|f| f.provider_failure) => Status::Provider,
        Some(_) => Status::Invalid,
    })
}

pub fn run(args: RunArgs) -> CliResult {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(s) = args.strategy {
        Strategy::parse_list(&s)?;
        config.selection.strategies = s;
    }
    if let Some(seed) = args.seed {
        config.topics.seed = seed;
    }
    if let Some(out) = args.out {
        config.output.dir = Some(out);
    }
    config.validate()?;
    config.check_credentials()?;
    let out = run_pipeline(&config)?;
    report_outcome(&out)
}

pub fn resume(args: ResumeArgs) -> CliResult {
    let config = args.config.as_deref().map(RunConfig::load).transpose()?;
    let recorded = tl_core::RunManifest::read(&args.manifest)?;
    config.as_ref().unwrap_or(&recorded.config).check_credentials()?;
    let out = resume_run(&args.manifest, config.as_ref())?;
    report_outcome(&out)
}

pub fn eval(args: EvalArgs) -> CliResult {
    let settings = settings(args.config.as_deref())?;
    let labels: Vec<Label> = read_json(&args.labels, "labels")?;
    let topics: TopicModelResult = read_json(&args.topics, "topics")?;
    let corpus = load(&args.corpus)?;
    topics.check_against(corpus.ids())?;
    let summaries: Option<Vec<Summary>> = args
        .summaries
        .as_deref()
        .map(|p| read_json(p, "summaries"))
        .transpose()?;
    let embedder = settings.build_embedder(None)?;
    let opts = EvalOptions {
        doc_source: args.doc_source,
        include_outliers: args.include_outliers,
        seed: None,
    };
    let report = evaluate(&labels, &topics, &corpus, summaries.as_deref(), &embedder, opts)?;
    write_json(&args.out, &report)?;
    let rows: Vec<Vec<String>> = report
        .per_topic
        .iter()
        .map(|t| {
            vec![
                t.topic_id.to_string(),
                t.label.clone(),
                t.n_docs.to_string(),
                format!("{:.4}", t.score),
            ]
        })
        .collect();
    print!("{}", table(&["Topic", "Label", "Docs", "Score"], &rows));
    println!("corpus score: {:.4}", report.corpus_score);
    Ok(Status::Ok)
}

pub fn summarize(args: SummarizeArgs) -> CliResult {
    let settings = settings(args.config.as_deref())?;
    let corpus = load(&args.corpus)?;
    let generator = settings.build_generator(None)?;
    let (template, _) = settings.templates()?;
    let summaries = generator.summarize_all(corpus.documents(), &template)?;
    write_json(&args.out, &summaries)?;
    let truncated = summaries.iter().filter(|s| s.truncated).count();
    println!("summarized {} documents ({truncated} truncated)", summaries.len());
    Ok(Status::Ok)
}

fn summary_texts(summaries: &[Summary]) -> BTreeMap<String, String> {
    summaries.iter().map(|s| (s.doc_id.clone(), s.text.clone())).collect()
}

pub fn topics(args: TopicsArgs) -> CliResult {
    let settings = settings(args.config.as_deref())?;
    let corpus = load(&args.corpus)?;
    let seed = args.seed.unwrap_or(settings.topics.seed);
    let result = if let Some(path) = &args.import {
        import_topics(path, Some(corpus.ids()))?
    } else {
        let texts = match args.model_on {
            ModelOn::Raw => corpus.text_map(),
            ModelOn::Summary => {
                let path = args.summaries.as_deref().ok_or_else(|| {
                    CliError::invalid("topics are fitted on summaries by default; pass --summaries <file> (from `tl summarize`) or --model-on raw")
                })?;
                summary_texts(&read_json::<Vec<Summary>>(path, "summaries")?)
            }
        };
        let ids: Vec<&str> = corpus.ids().collect();
        let list: Vec<String> = ids
            .iter()
            .map(|id| {
                texts
                    .get(*id)
                    .cloned()
                    .ok_or_else(|| CliError::invalid(format!("no summary for document {id:?}")))
            })
            .collect::<Result<_, _>>()?;
        let embedder = settings.build_embedder(None)?;
        let vectors = embedder.embed_texts(&list)?;
        let docs: Vec<TopicDoc> = ids
            .iter()
            .zip(&list)
            .zip(&vectors)
            .map(|((id, text), vector)| TopicDoc { id, text, vector })
            .collect();
        let k = args.k.or(settings.topics.k).unwrap_or_else(|| default_k(docs.len()));
        fit_topics(&docs, k, seed)?
    };
    write_json(&args.out, &result)?;
    let rows: Vec<Vec<String>> = result
        .topics()
        .iter()
        .map(|t| vec![t.id.to_string(), t.doc_ids.len().to_string(), t.keywords.join(", ")])
        .collect();
    print!("{}", table(&["Topic", "Docs", "Keywords"], &rows));
    Ok(Status::Ok)
}

pub fn select(args: SelectArgs) -> CliResult {
    let settings = settings(args.config.as_deref())?;
    let strategies = Strategy::parse_list(&args.strategy)?;
    let seed = args.seed.unwrap_or(settings.topics.seed);
    let topics: TopicModelResult = read_json(&args.topics, "topics")?;
    let summaries: Vec<Summary> = read_json(&args.summaries, "summaries")?;
    let texts = summary_texts(&summaries);
    topics.check_against(texts.keys().map(String::as_str))?;

    let mut subtopics = BTreeMap::new();
    if strategies.iter().any(|s| s.needs_subtopics()) {
        let ids: Vec<&String> = texts.keys().collect();
        let list: Vec<String> = texts.values().cloned().collect();
        let vectors = settings.build_embedder(None)?.embed_texts(&list)?;
        let docs: Vec<TopicDoc> = ids
            .iter()
            .zip(&list)
            .zip(&vectors)
            .map(|((id, text), vector)| TopicDoc { id, text, vector })
            .collect();
        for t in topics.labelable(args.include_outliers) {
            let k_sub = args
                .k_sub
                .or(settings.topics.k_sub)
                .unwrap_or_else(|| default_k_sub(t.doc_ids.len()));
            subtopics.insert(
                t.id,
                fit_subtopics(t, &docs, k_sub, topic_seed(seed, t.id, Purpose::Subtopics))?,
            );
        }
    }

    let mut selections: Vec<Selection> = Vec::new();
    for strategy in &strategies {
        for t in topics.labelable(args.include_outliers) {
            selections.push(select_docs(*strategy, t, &texts, subtopics.get(&t.id), seed)?);
        }
    }
    write_json(&args.out, &selections)?;
    let rows: Vec<Vec<String>> = selections
        .iter()
        .map(|s| vec![s.topic_id.to_string(), s.strategy.to_string(), s.doc_ids.join(", ")])
        .collect();
    print!("{}", table(&["Topic", "Strategy", "Documents"], &rows));
    Ok(Status::Ok)
}

pub fn label(args: LabelArgs) -> CliResult {
    let settings = settings(args.config.as_deref())?;
    let selections: Vec<Selection> = read_json(&args.selections, "selections")?;
    let topics: TopicModelResult = read_json(&args.topics, "topics")?;
    let texts = summary_texts(&read_json::<Vec<Summary>>(&args.summaries, "summaries")?);
    let generator = settings.build_generator(None)?;
    let (_, template) = settings.templates()?;

    for s in &selections {
        if topics.topic(s.topic_id).is_none() {
            return Err(CliError::invalid(format!(
                "selection refers to unknown topic {}",
                s.topic_id
            )));
        }
        if let Some(missing) = s.doc_ids.iter().find(|d| !texts.contains_key(*d)) {
            return Err(CliError::invalid(format!(
                "no summary for selected document {missing:?}"
            )));
        }
    }
    let results = fan_out(&selections, settings.generation.max_in_flight, |s| {
        let topic = topics.topic(s.topic_id).expect("checked above");
        let summaries: Vec<&str> = s.doc_ids.iter().map(|d| texts[d].as_str()).collect();
        generator.generate_label(s.topic_id, &topic.keywords, &summaries, &template, s.strategy)
    });
    let labels: Vec<Label> = results.into_iter().collect::<Result<_, _>>()?;
    write_json(&args.out, &labels)?;
    let rows: Vec<Vec<String>> = labels
        .iter()
        .map(|l| {
            let note = if l.fallback_used { "fallback" } else { "" };
            vec![
                l.topic_id.to_string(),
                l.strategy.to_string(),
                l.text.clone(),
                note.to_string(),
            ]
        })
        .collect();
    print!("{}", table(&["Topic", "Strategy", "Label", "Note"], &rows));
    Ok(Status::Ok)
}
