//! Topic labeling with language models.
//!
//! Documents are summarized, clustered into topics with c-TF-IDF keywords,
//! reduced to at most ten representative summaries per topic by one of four
//! selection strategies, and named by an LLM. Labels are scored by how
//! close their embedding is to the embeddings of the topic's documents.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod generation;
pub mod metric;
pub mod parallel;
pub mod pipeline;
pub mod provider;
pub mod rng;
pub mod selection;
pub mod store;
pub mod text;
pub mod topic_model;

pub use config::{ConfigError, RunConfig};
pub use corpus::{load_corpus, save_corpus, Corpus, CorpusError, CorpusFormat, Document, LoadOptions};
pub use embedding::{cosine, Embedder, EmbeddingError, EmbeddingProvider, EmbeddingVector, MockEmbedder};
pub use generation::{Generator, Label, MockProvider, PromptTemplate, Summary, TextProvider};
pub use metric::{corpus_score, evaluate, topic_score, DocSource, MetricReport};
pub use pipeline::{resume, run, run_with, PipelineError, RunManifest, RunOutcome};
pub use provider::{ProviderError, RetryPolicy};
pub use selection::{Selection, Strategy};
pub use store::PipelineStore;
pub use topic_model::{Topic, TopicModelResult};
