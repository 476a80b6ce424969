//! Input limits validated at API boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LimitError {
    #[error("query is {actual} bytes; limit is {limit}")]
    QueryTooLong { actual: usize, limit: usize },
    #[error("k = {actual} exceeds limit {limit}")]
    KTooLarge { actual: usize, limit: usize },
    #[error("candidate pool {actual} exceeds limit {limit}")]
    PoolTooLarge { actual: usize, limit: usize },
    #[error("document has {actual} chunks; limit is {limit}")]
    TooManyChunks { actual: usize, limit: usize },
    #[error("document is {actual} bytes; limit is {limit}")]
    DocumentTooLarge { actual: usize, limit: usize },
    #[error("batch of {actual} ids exceeds limit {limit}")]
    BatchTooLarge { actual: usize, limit: usize },
    #[error("tag {tag:?} has depth {depth}; limit is {limit}")]
    TagTooDeep { tag: String, depth: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_query_bytes: usize,
    pub max_k: usize,
    pub max_candidate_pool: usize,
    pub max_chunks_per_doc: usize,
    pub max_doc_bytes: usize,
    pub max_batch_ids: usize,
    pub max_tag_depth: usize,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            max_query_bytes: 32 * 1024,
            max_k: 1_000,
            max_candidate_pool: 10_000,
            max_chunks_per_doc: 100_000,
            max_doc_bytes: 64 * 1024 * 1024,
            max_batch_ids: 1_000_000,
            max_tag_depth: 16,
        }
    }
}

fn check(actual: usize, limit: usize, err: fn(usize, usize) -> LimitError) -> Result<(), LimitError> {
    if actual > limit {
        Err(err(actual, limit))
    } else {
        Ok(())
    }
}

impl LimitsConfig {
    pub fn check_query(&self, query: &str) -> Result<(), LimitError> {
        check(query.len(), self.max_query_bytes, |actual, limit| {
            LimitError::QueryTooLong { actual, limit }
        })
    }

    pub fn check_k(&self, k: usize) -> Result<(), LimitError> {
        check(k, self.max_k, |actual, limit| LimitError::KTooLarge { actual, limit })
    }

    pub fn check_pool(&self, pool: usize) -> Result<(), LimitError> {
        check(pool, self.max_candidate_pool, |actual, limit| {
            LimitError::PoolTooLarge { actual, limit }
        })
    }

    pub fn check_document(&self, chunk_count: usize, bytes: usize) -> Result<(), LimitError> {
        check(chunk_count, self.max_chunks_per_doc, |actual, limit| {
            LimitError::TooManyChunks { actual, limit }
        })?;
        check(bytes, self.max_doc_bytes, |actual, limit| {
            LimitError::DocumentTooLarge { actual, limit }
        })
    }

    pub fn check_batch(&self, ids: usize) -> Result<(), LimitError> {
        check(ids, self.max_batch_ids, |actual, limit| {
            LimitError::BatchTooLarge { actual, limit }
        })
    }

    pub fn check_tags(&self, tags: &[String]) -> Result<(), LimitError> {
        for tag in tags {
            let depth = tag.split('/').filter(|s| !s.is_empty()).count();
            if depth > self.max_tag_depth {
                return Err(LimitError::TagTooDeep {
                    tag: tag.clone(),
                    depth,
                    limit: self.max_tag_depth,
                });
            }
        }
        Ok(())
    }
}
