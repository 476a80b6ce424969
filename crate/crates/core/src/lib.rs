//! Embedded hybrid retrieval: a single-file store, fused lexical and
//! vector search with per-query adaptive weighting, disagreement mining
//! for embedding fine-tuning, and an evaluation harness.

pub mod chunker;
pub mod config;
pub mod digest;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod limits;
pub mod miner;
pub mod observability;
pub mod retrieval;
pub mod store;
pub mod textindex;
pub mod vecindex;

pub use embedder::{EmbedderSpec, Embedding, EmbeddingProvider, TestEmbedder};
pub use error::{Error, Result};
pub use retrieval::{search, FusionConfig, SearchMode, SearchOptions, SearchResponse, SearchResult};
pub use store::{OpenOptions, Store};
