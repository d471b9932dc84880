//! LLM text generation: document summaries and topic labels.
//!
//! [`Generator`] wraps a [`TextProvider`] with prompt templating, retries,
//! response caching and output validation. Summaries target 20–40 words;
//! labels must be two to five words or fall back to the top keywords.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::Document;
use crate::parallel::fan_out;
use crate::provider::{HttpClient, ProviderError, RetryPolicy};
use crate::selection::Strategy;
use crate::store::{hash_parts, PipelineStore};
use crate::text::{first_words, word_count};

pub const SUMMARY_MIN_WORDS: usize = 20;
pub const SUMMARY_MAX_WORDS: usize = 40;
pub const LABEL_MIN_WORDS: usize = 2;
pub const LABEL_MAX_WORDS: usize = 5;
/// Words the mock summarizer keeps from the start of a document.
pub const MOCK_SUMMARY_WORDS: usize = 30;
/// Keywords joined into a fallback label.
pub const FALLBACK_KEYWORDS: usize = 3;

pub const DEFAULT_SUMMARIZE_PROMPT: &str = "You are an expert editor. Summarize the following document in 20 to 40 words, capturing its core points and main themes: {document}";
pub const DEFAULT_LABEL_PROMPT: &str = "You are an expert analyst naming topics. Given keywords: {keywords} and representative summaries: {summaries}, output only a topic name of two to five words.";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {name:?} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
    #[error("template {0:?} is empty")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

impl PromptTemplate {
    /// Builds a template and checks that every `required` placeholder occurs.
    pub fn new(name: &str, body: &str, required: &[&str]) -> Result<Self, TemplateError> {
        if body.trim().is_empty() {
            return Err(TemplateError::Empty(name.to_string()));
        }
        for p in required {
            if !body.contains(&format!("{{{p}}}")) {
                return Err(TemplateError::MissingPlaceholder {
                    name: name.to_string(),
                    placeholder: p.to_string(),
                });
            }
        }
        Ok(Self {
            name: name.to_string(),
            body: body.to_string(),
        })
    }

    pub fn summarize(body: &str) -> Result<Self, TemplateError> {
        Self::new("summarize", body, &["document"])
    }

    pub fn label(body: &str) -> Result<Self, TemplateError> {
        Self::new("label", body, &["keywords", "summaries"])
    }

    pub fn default_summarize() -> Self {
        Self::summarize(DEFAULT_SUMMARIZE_PROMPT).expect("default summarize template")
    }

    pub fn default_label() -> Self {
        Self::label(DEFAULT_LABEL_PROMPT).expect("default label template")
    }

    /// Substitutes `{name}` placeholders in a single pass, so values that
    /// themselves contain braces are never re-expanded.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after.find('}').and_then(|close| {
                let name = &after[..close];
                vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
            });
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// What a request is for. Live providers only see the prompt; the mock
/// answers from the structured payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Summarize { document: String },
    Label { keywords: Vec<String> },
    Freeform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_words_hint: usize,
    pub temperature: f64,
    pub model_id: String,
    pub task: Task,
}

pub trait TextProvider: Send + Sync {
    /// Short provider name recorded on summaries, e.g. `mock` or `live`.
    fn name(&self) -> &str;

    fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderError>;
}

/// Pure-function stand-in for an LLM.
///
/// Summaries are the first 30 words of the document; labels are the first
/// three keywords joined by spaces.
#[derive(Debug, Clone, Default)]
pub struct MockProvider;

impl TextProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        Ok(match &request.task {
            Task::Summarize { document } => first_words(document, MOCK_SUMMARY_WORDS),
            Task::Label { keywords } => keywords
                .iter()
                .take(FALLBACK_KEYWORDS)
                .cloned()
                .collect::<Vec<_>>()
                .join(" "),
            Task::Freeform => first_words(&request.prompt, request.max_words_hint.max(1)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    /// `POST /chat/completions`
    #[default]
    Chat,
    /// `POST /completions` (instruct-style models)
    Completions,
}

/// OpenAI-compatible completion endpoint.
#[derive(Debug, Clone)]
pub struct LiveProvider {
    client: HttpClient,
    endpoint: Endpoint,
}

impl LiveProvider {
    pub fn new(base_url: &str, api_key: String, endpoint: Endpoint, timeout: Duration) -> Self {
        Self {
            client: HttpClient::new(base_url, api_key, timeout),
            endpoint,
        }
    }

    fn extract(endpoint: Endpoint, value: &Value) -> Result<String, ProviderError> {
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| ProviderError::InvalidResponse("no choices in response".into()))?;
        let text = match endpoint {
            Endpoint::Chat => choice.pointer("/message/content"),
            Endpoint::Completions => choice.get("text"),
        };
        match text {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Null) | None => Ok(String::new()),
            Some(other) => Err(ProviderError::InvalidResponse(format!("unexpected content {other}"))),
        }
    }
}

impl TextProvider for LiveProvider {
    fn name(&self) -> &str {
        "live"
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        // roughly 1.5 tokens per English word, with slack
        let max_tokens = request.max_words_hint * 2 + 16;
        let (path, body) = match self.endpoint {
            Endpoint::Chat => (
                "chat/completions",
                json!({
                    "model": request.model_id,
                    "messages": [{"role": "user", "content": request.prompt}],
                    "temperature": request.temperature,
                    "max_tokens": max_tokens,
                }),
            ),
            Endpoint::Completions => (
                "completions",
                json!({
                    "model": request.model_id,
                    "prompt": request.prompt,
                    "temperature": request.temperature,
                    "max_tokens": max_tokens,
                }),
            ),
        };
        let value = self.client.post_json(path, &body)?;
        Self::extract(self.endpoint, &value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub doc_id: String,
    pub text: String,
    pub word_count: usize,
    pub provider: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub topic_id: i64,
    pub text: String,
    pub word_count: usize,
    pub strategy: Strategy,
    pub fallback_used: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("topic {0} has no keywords")]
    NoKeywords(i64),
    #[error("topic {0} has no summaries to label from")]
    NoSummaries(i64),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Tidies a raw label completion: first non-empty line, surrounding quotes
/// and markup removed, a leading `Topic:`-style prefix and trailing period
/// dropped, inner whitespace collapsed.
pub fn clean_label(raw: &str) -> String {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let mut s = line;
    for prefix in ["topic name:", "topic label:", "topic:", "label:", "name:"] {
        if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
            s = s[prefix.len()..].trim_start();
            break;
        }
    }
    let s = s
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '“' | '”'))
        .trim()
        .trim_end_matches('.')
        .trim();
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_valid_label(text: &str) -> bool {
    (LABEL_MIN_WORDS..=LABEL_MAX_WORDS).contains(&word_count(text))
}

pub fn fallback_label(keywords: &[String]) -> String {
    keywords
        .iter()
        .take(FALLBACK_KEYWORDS)
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

const DISK_CACHE_STAGE: &str = "completion-cache";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedCompletion {
    text: String,
}

/// Cached, retrying front end over a [`TextProvider`].
pub struct Generator {
    provider: Arc<dyn TextProvider>,
    model_id: String,
    temperature: f64,
    retry: RetryPolicy,
    max_in_flight: usize,
    cache: Mutex<HashMap<String, String>>,
    disk: Option<PipelineStore>,
    provider_calls: AtomicUsize,
}

impl Generator {
    pub fn new(provider: Arc<dyn TextProvider>, model_id: &str) -> Self {
        Self {
            provider,
            model_id: model_id.to_string(),
            temperature: 0.0,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            cache: Mutex::new(HashMap::new()),
            disk: None,
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(MockProvider), "mock")
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        assert!(t >= 0.0 && t.is_finite(), "temperature must be finite and non-negative");
        self.temperature = t;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_disk_cache(mut self, store: PipelineStore) -> Self {
        self.disk = Some(store);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Calls that reached the provider (cache misses, including retries).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn cache_key(model_id: &str, prompt: &str, temperature: f64) -> String {
        hash_parts([
            model_id.as_bytes(),
            prompt.as_bytes(),
            &temperature.to_bits().to_le_bytes(),
        ])
    }

    pub fn request(&self, prompt: String, max_words_hint: usize, task: Task) -> GenerationRequest {
        GenerationRequest {
            prompt,
            max_words_hint,
            temperature: self.temperature,
            model_id: self.model_id.clone(),
            task,
        }
    }

    fn cached(&self, key: &str) -> Option<String> {
        if let Some(hit) = self.cache.lock().expect("completion cache").get(key) {
            return Some(hit.clone());
        }
        let bytes = self.disk.as_ref()?.get(DISK_CACHE_STAGE, key).ok()??;
        let hit: CachedCompletion = serde_json::from_slice(&bytes).ok()?;
        self.cache
            .lock()
            .expect("completion cache")
            .insert(key.to_string(), hit.text.clone());
        Some(hit.text)
    }

    /// Sends `request`, serving repeats from the cache. Empty completions
    /// are errors and are never cached.
    pub fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let key = Self::cache_key(&request.model_id, &request.prompt, request.temperature);
        if let Some(hit) = self.cached(&key) {
            return Ok(hit);
        }
        let text = self.retry.run(|| {
            self.provider_calls.fetch_add(1, Ordering::Relaxed);
            self.provider.complete(request)
        })?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(ProviderError::EmptyCompletion);
        }
        if let Some(store) = &self.disk {
            let bytes = serde_json::to_vec(&CachedCompletion { text: text.clone() }).expect("serializes");
            if let Err(e) = store.put(DISK_CACHE_STAGE, &key, &bytes) {
                log::warn!("completion disk cache write failed: {e}");
            }
        }
        self.cache.lock().expect("completion cache").insert(key, text.clone());
        Ok(text)
    }

    /// Summarizes one document into 20–40 words.
    ///
    /// An over-long answer is retried once with a corrective instruction and
    /// then cut to 40 words. Short answers are kept with a warning.
    pub fn summarize_document(&self, doc: &Document, template: &PromptTemplate) -> Result<Summary, ProviderError> {
        let prompt = template.render(&[("document", &doc.text)]);
        let task = Task::Summarize {
            document: doc.text.clone(),
        };
        let mut text = self.complete(&self.request(prompt.clone(), SUMMARY_MAX_WORDS, task.clone()))?;
        let mut truncated = false;
        if word_count(&text) > SUMMARY_MAX_WORDS {
            let retry_prompt = format!(
                "{prompt}\n\nYour previous summary had {} words. Rewrite it in at most {SUMMARY_MAX_WORDS} words.",
                word_count(&text)
            );
            text = self.complete(&self.request(retry_prompt, SUMMARY_MAX_WORDS, task))?;
            if word_count(&text) > SUMMARY_MAX_WORDS {
                text = first_words(&text, SUMMARY_MAX_WORDS);
                truncated = true;
            }
        }
        let words = word_count(&text);
        if words < SUMMARY_MIN_WORDS {
            log::warn!(
                "summary for {:?} has {words} words (target {SUMMARY_MIN_WORDS}-{SUMMARY_MAX_WORDS})",
                doc.id
            );
        }
        Ok(Summary {
            doc_id: doc.id.clone(),
            text,
            word_count: words,
            provider: self.provider.name().to_string(),
            truncated,
        })
    }

    /// Summarizes every document concurrently; output is in input order.
    pub fn summarize_all(&self, docs: &[Document], template: &PromptTemplate) -> Result<Vec<Summary>, ProviderError> {
        fan_out(docs, self.max_in_flight, |d| self.summarize_document(d, template))
            .into_iter()
            .collect()
    }

    /// Generates a two-to-five-word topic label.
    ///
    /// An invalid answer (wrong length or empty) is retried once with a
    /// corrective suffix; a second invalid answer falls back to the top
    /// three keywords.
    pub fn generate_label(
        &self,
        topic_id: i64,
        keywords: &[String],
        summaries: &[&str],
        template: &PromptTemplate,
        strategy: Strategy,
    ) -> Result<Label, LabelError> {
        if keywords.is_empty() {
            return Err(LabelError::NoKeywords(topic_id));
        }
        if summaries.is_empty() {
            return Err(LabelError::NoSummaries(topic_id));
        }
        let keyword_list = keywords.join(", ");
        let summary_list = summaries
            .iter()
            .map(|s| format!("- {s}"))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = template.render(&[("keywords", &keyword_list), ("summaries", &summary_list)]);
        let task = Task::Label {
            keywords: keywords.to_vec(),
        };

        let first = self.label_attempt(&prompt, &task)?;
        if let Some(text) = first.as_deref().filter(|t| is_valid_label(t)) {
            return Ok(self.accepted(topic_id, text, strategy));
        }
        let retry_prompt = format!(
            "{prompt}\n\nYour previous answer \"{}\" was not a topic name of two to five words. Reply with only a topic name of two to five words.",
            first.as_deref().unwrap_or("")
        );
        let second = self.label_attempt(&retry_prompt, &task)?;
        if let Some(text) = second.as_deref().filter(|t| is_valid_label(t)) {
            return Ok(self.accepted(topic_id, text, strategy));
        }
        let text = fallback_label(keywords);
        log::warn!("topic {topic_id}: label output invalid twice, using keyword fallback {text:?}");
        Ok(Label {
            topic_id,
            word_count: word_count(&text),
            text,
            strategy,
            fallback_used: true,
        })
    }

    fn label_attempt(&self, prompt: &str, task: &Task) -> Result<Option<String>, LabelError> {
        match self.complete(&self.request(prompt.to_string(), LABEL_MAX_WORDS, task.clone())) {
            Ok(raw) => Ok(Some(clean_label(&raw))),
            Err(ProviderError::EmptyCompletion) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn accepted(&self, topic_id: i64, text: &str, strategy: Strategy) -> Label {
        Label {
            topic_id,
            text: text.to_string(),
            word_count: word_count(text),
            strategy,
            fallback_used: false,
        }
    }
}
