//! Document collections: loading from JSONL, CSV or a directory of `.txt`
//! files, and saving back to the same formats.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("record at line {line} has no id")]
    MissingId { line: usize },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("document {0:?} has no text")]
    EmptyDocument(String),
    #[error("id {0:?} cannot be used as a file name")]
    UnsafeId(String),
    #[error("unknown corpus format {0:?} (expected jsonl, csv or txt-dir)")]
    UnknownFormat(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
    TxtDir,
}

impl CorpusFormat {
    /// Guess from the path: a directory is `txt-dir`, otherwise the extension.
    pub fn infer(path: &Path) -> Option<Self> {
        if path.is_dir() {
            return Some(Self::TxtDir);
        }
        match path.extension()?.to_str()? {
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            "txt-dir" => Ok(Self::TxtDir),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Jsonl => "jsonl",
            Self::Csv => "csv",
            Self::TxtDir => "txt-dir",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Strip Usenet headers, signatures and quoted replies before use.
    #[serde(default)]
    pub strip_newsgroup_boilerplate: bool,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.text.trim().is_empty() {
                return Err(CorpusError::EmptyDocument(doc.id.clone()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    /// id → text lookup.
    pub fn text_map(&self) -> BTreeMap<String, String> {
        self.documents.iter().map(|d| (d.id.clone(), d.text.clone())).collect()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

/// Line endings normalized to `\n`, outer whitespace trimmed. Case is kept.
pub fn normalize_text(raw: &str) -> String {
    raw.replace("\r\n", "\n").replace('\r', "\n").trim().to_string()
}

/// Removes the header block, a trailing `--` signature and quoted reply
/// lines from a newsgroup post.
pub fn strip_newsgroup_boilerplate(text: &str) -> String {
    let body = match text.find("\n\n") {
        Some(pos)
            if text[..pos]
                .lines()
                .all(|l| l.contains(':') || l.starts_with([' ', '\t'])) =>
        {
            &text[pos + 2..]
        }
        _ => text,
    };
    let lines: Vec<&str> = body.lines().collect();
    let end = lines.iter().rposition(|l| l.trim_end() == "--").unwrap_or(lines.len());
    lines[..end]
        .iter()
        .filter(|l| {
            let t = l.trim_start();
            !(t.starts_with('>') || t.starts_with('|') || t.ends_with("writes:") || t.ends_with("wrote:"))
        })
        .copied()
        .collect::<Vec<_>>()
        .join("\n")
}

fn prepare_text(raw: &str, opts: LoadOptions) -> String {
    let text = normalize_text(raw);
    if opts.strip_newsgroup_boilerplate {
        normalize_text(&strip_newsgroup_boilerplate(&text))
    } else {
        text
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: Option<serde_json::Value>,
    text: Option<String>,
    #[serde(default)]
    meta: Option<BTreeMap<String, serde_json::Value>>,
}

fn json_scalar_to_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    let docs = match format {
        CorpusFormat::Jsonl => load_jsonl(path, opts)?,
        CorpusFormat::Csv => load_csv(path, opts)?,
        CorpusFormat::TxtDir => load_txt_dir(path, opts)?,
    };
    Corpus::new(docs)
}

fn load_jsonl(path: &Path, opts: LoadOptions) -> Result<Vec<Document>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let mut docs = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let id = match record.id.as_ref() {
            None | Some(serde_json::Value::Null) => return Err(CorpusError::MissingId { line: line_no }),
            Some(v) => json_scalar_to_string(v).ok_or_else(|| CorpusError::MalformedRecord {
                line: line_no,
                reason: "id must be a string or number".into(),
            })?,
        };
        let text = record.text.ok_or_else(|| CorpusError::MalformedRecord {
            line: line_no,
            reason: "missing \"text\"".into(),
        })?;
        let text = prepare_text(&text, opts);
        if text.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: line_no,
                reason: "empty text".into(),
            });
        }
        let mut meta = Meta::new();
        for (k, v) in record.meta.unwrap_or_default() {
            let v = json_scalar_to_string(&v).ok_or_else(|| CorpusError::MalformedRecord {
                line: line_no,
                reason: format!("meta value for {k:?} must be a scalar"),
            })?;
            meta.insert(k, v);
        }
        docs.push(Document { id, text, meta });
    }
    Ok(docs)
}

fn load_csv(path: &Path, opts: LoadOptions) -> Result<Vec<Document>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    if file.metadata().map_err(io_err(path))?.len() == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let text_col = headers
        .iter()
        .position(|h| h == "text")
        .ok_or_else(|| CorpusError::MalformedRecord {
            line: 1,
            reason: "header has no \"text\" column".into(),
        })?;
    let id_col = headers.iter().position(|h| h == "id");

    let mut docs = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        // header is line 1; rows start at line 2 (multi-line fields aside)
        let line_no = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map(|p| p.line() as usize)
            .unwrap_or(row_idx + 2);
        let record = record.map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let id = match id_col {
            Some(c) => {
                let id = record.get(c).unwrap_or("").trim();
                if id.is_empty() {
                    return Err(CorpusError::MissingId { line: line_no });
                }
                id.to_string()
            }
            None => row_idx.to_string(),
        };
        let text = prepare_text(record.get(text_col).unwrap_or(""), opts);
        if text.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: line_no,
                reason: "empty text".into(),
            });
        }
        let meta = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != text_col && Some(*i) != id_col)
            .filter_map(|(i, h)| {
                let v = record.get(i)?;
                (!v.is_empty()).then(|| (h.to_string(), v.to_string()))
            })
            .collect();
        docs.push(Document { id, text, meta });
    }
    Ok(docs)
}

const TXT_META_FILE: &str = "meta.json";

fn load_txt_dir(path: &Path, opts: LoadOptions) -> Result<Vec<Document>, CorpusError> {
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();

    let meta_path = path.join(TXT_META_FILE);
    let mut metas: BTreeMap<String, Meta> = if meta_path.is_file() {
        let raw = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        serde_json::from_str(&raw).map_err(|e| CorpusError::MalformedRecord {
            line: e.line(),
            reason: format!("{TXT_META_FILE}: {e}"),
        })?
    } else {
        BTreeMap::new()
    };

    let mut docs = Vec::with_capacity(files.len());
    for file in files {
        let id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or(CorpusError::MissingId { line: 0 })?
            .to_string();
        let raw = fs::read(&file).map_err(io_err(&file))?;
        let text = prepare_text(&String::from_utf8_lossy(&raw), opts);
        if text.is_empty() {
            return Err(CorpusError::EmptyDocument(id));
        }
        let meta = metas.remove(&id).unwrap_or_default();
        docs.push(Document { id, text, meta });
    }
    Ok(docs)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    match format {
        CorpusFormat::Jsonl => {
            let mut out = String::new();
            for doc in corpus {
                out.push_str(&serde_json::to_string(doc).expect("document serializes"));
                out.push('\n');
            }
            fs::write(path, out).map_err(io_err(path))
        }
        CorpusFormat::Csv => {
            let meta_keys: BTreeSet<&str> = corpus
                .iter()
                .flat_map(|d| d.meta.keys().map(String::as_str))
                .filter(|k| *k != "id" && *k != "text")
                .collect();
            let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::Io {
                path: path.to_path_buf(),
                source: e.into(),
            })?;
            let csv_err = |e: csv::Error| CorpusError::Io {
                path: path.to_path_buf(),
                source: e.into(),
            };
            let mut header = vec!["id", "text"];
            header.extend(meta_keys.iter().copied());
            writer.write_record(&header).map_err(csv_err)?;
            for doc in corpus {
                let mut row = vec![doc.id.as_str(), doc.text.as_str()];
                row.extend(
                    meta_keys
                        .iter()
                        .map(|k| doc.meta.get(*k).map(String::as_str).unwrap_or("")),
                );
                writer.write_record(&row).map_err(csv_err)?;
            }
            writer.flush().map_err(io_err(path))
        }
        CorpusFormat::TxtDir => {
            fs::create_dir_all(path).map_err(io_err(path))?;
            let mut metas = BTreeMap::new();
            for doc in corpus {
                if doc.id.is_empty() || doc.id.contains(['/', '\\']) || doc.id.starts_with('.') || doc.id == "meta" {
                    return Err(CorpusError::UnsafeId(doc.id.clone()));
                }
                let file = path.join(format!("{}.txt", doc.id));
                fs::write(&file, &doc.text).map_err(io_err(&file))?;
                if !doc.meta.is_empty() {
                    metas.insert(doc.id.clone(), doc.meta.clone());
                }
            }
            if !metas.is_empty() {
                let meta_path = path.join(TXT_META_FILE);
                let raw = serde_json::to_string_pretty(&metas).expect("meta serializes");
                fs::write(&meta_path, raw).map_err(io_err(&meta_path))?;
            }
            Ok(())
        }
    }
}
