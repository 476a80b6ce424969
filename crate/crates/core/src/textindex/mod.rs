//! Inverted index with Porter stemming and BM25 ranking.
//!
//! The persistent postings live in the store; [`InvertedIndex`] is the
//! in-memory form the store builds lazily for querying. Vocabulary document
//! frequencies (and therefore IDF) are served from the same snapshot, so any
//! write that drops the snapshot also drops the IDF cache.

pub mod porter;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::store::ChunkId;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Lowercases, splits on anything that is not alphanumeric, and stems.
pub fn tokenize_stem(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| porter::stem(&t.to_lowercase()))
        .collect()
}

/// Term frequencies of a chunk's text, in first-occurrence order.
pub fn term_frequencies(text: &str) -> (Vec<(String, u32)>, u32) {
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut length = 0u32;
    for term in tokenize_stem(text) {
        length += 1;
        match slot.get(&term) {
            Some(&i) => order[i].1 += 1,
            None => {
                slot.insert(term.clone(), order.len());
                order.push((term, 1));
            }
        }
    }
    (order, length)
}

/// A keyword query as a disjunction of literal terms.
///
/// Every whitespace-separated word of the raw input is tokenized like
/// document text, so operator-looking input (`AND`, `NOT`, quotes,
/// parentheses, `*`) only ever contributes literal terms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompiledQuery {
    terms: Vec<String>,
}

impl CompiledQuery {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl fmt::Display for CompiledQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            write!(f, "\"{term}\"")?;
        }
        Ok(())
    }
}

pub fn compile_query(raw: &str) -> CompiledQuery {
    let mut terms: Vec<String> = Vec::new();
    for word in raw.split_whitespace() {
        for term in tokenize_stem(word) {
            if !terms.contains(&term) {
                terms.push(term);
            }
        }
    }
    CompiledQuery { terms }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`
pub fn idf(total_chunks: usize, df: usize) -> f64 {
    let n = total_chunks as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub chunk_id: ChunkId,
    pub term_frequency: u32,
}

#[derive(Debug, Default, Clone)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    lengths: HashMap<ChunkId, u32>,
    total_length: u64,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes a chunk; `terms` are its (term, tf) pairs and `length` its
    /// token count.
    pub fn insert(&mut self, chunk_id: ChunkId, terms: &[(String, u32)], length: u32) {
        if self.lengths.insert(chunk_id, length).is_some() {
            panic!("chunk {chunk_id} indexed twice");
        }
        self.total_length += u64::from(length);
        for (term, tf) in terms {
            self.postings.entry(term.clone()).or_default().push(Posting {
                chunk_id,
                term_frequency: *tf,
            });
        }
    }

    /// Adds a single posting; used when loading from storage row by row.
    pub(crate) fn push_posting(&mut self, term: String, posting: Posting) {
        self.postings.entry(term).or_default().push(posting);
    }

    pub(crate) fn set_length(&mut self, chunk_id: ChunkId, length: u32) {
        if let Some(old) = self.lengths.insert(chunk_id, length) {
            self.total_length -= u64::from(old);
        }
        self.total_length += u64::from(length);
    }

    pub fn chunk_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn average_length(&self) -> f64 {
        if self.lengths.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.lengths.len() as f64
        }
    }

    pub fn length(&self, chunk_id: ChunkId) -> Option<u32> {
        self.lengths.get(&chunk_id).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.chunk_count(), self.document_frequency(term))
    }

    /// Mean IDF over the stemmed terms of a raw query; 0 for a query with
    /// no terms.
    pub fn mean_idf(&self, raw_query: &str) -> Result<f64> {
        if self.lengths.is_empty() {
            return Err(Error::EmptyStore);
        }
        let terms = tokenize_stem(raw_query);
        if terms.is_empty() {
            return Ok(0.0);
        }
        let sum: f64 = terms.iter().map(|t| self.idf(t)).sum();
        Ok(sum / terms.len() as f64)
    }

    /// Expected IDF of a term occurrence drawn from the index, i.e. the
    /// df-weighted mean IDF over the vocabulary. Used as the default sigmoid
    /// midpoint for adaptive fusion weights.
    pub fn corpus_mean_idf(&self) -> f64 {
        let n = self.chunk_count();
        let mut weighted = 0.0;
        let mut total = 0usize;
        let mut terms: Vec<(&String, usize)> =
            self.postings.iter().map(|(t, p)| (t, p.len())).collect();
        // HashMap order is randomized; sum in a fixed order.
        terms.sort_unstable();
        for (_, df) in terms {
            weighted += df as f64 * idf(n, df);
            total += df;
        }
        if total == 0 {
            0.0
        } else {
            weighted / total as f64
        }
    }

    /// BM25 top-`n`, descending score, ties by ascending chunk id. Only
    /// chunks matching at least one term appear.
    pub fn bm25_search(&self, query: &CompiledQuery, n: usize) -> Vec<(ChunkId, f64)> {
        if query.is_empty() || n == 0 || self.lengths.is_empty() {
            return Vec::new();
        }
        let avgdl = self.average_length();
        let total = self.chunk_count();
        let mut scores: HashMap<ChunkId, f64> = HashMap::new();
        for term in query.terms() {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let weight = idf(total, postings.len());
            for p in postings {
                let len = f64::from(self.lengths[&p.chunk_id]);
                *scores.entry(p.chunk_id).or_insert(0.0) +=
                    weight * bm25_tf_component(p.term_frequency, len, avgdl);
            }
        }
        let mut ranked: Vec<(ChunkId, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
    }
}

pub(crate) fn bm25_tf_component(tf: u32, len: f64, avgdl: f64) -> f64 {
    let tf = f64::from(tf);
    let norm = if avgdl > 0.0 {
        1.0 - BM25_B + BM25_B * len / avgdl
    } else {
        1.0
    };
    tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
    }

    fn index_of(texts: &[&str]) -> InvertedIndex {
        let mut index = InvertedIndex::new();
        for (i, text) in texts.iter().enumerate() {
            let (terms, len) = term_frequencies(text);
            index.insert(i as ChunkId + 1, &terms, len);
        }
        index
    }

    #[test]
    fn tokenizes_and_stems() {
        assert_eq!(tokenize_stem("Running runs"), vec!["run", "run"]);
        assert!(tokenize_stem("").is_empty());
        assert_eq!(tokenize_stem("FTS5-injection"), vec!["fts5", "inject"]);
    }

    #[test]
    fn operators_compile_to_literal_terms() {
        let q = compile_query(r#"error OR "DROP TABLE""#);
        assert_eq!(q.terms(), ["error", "or", "drop", "tabl"]);
        assert_eq!(q.to_string(), r#""error" OR "or" OR "drop" OR "tabl""#);
        assert_eq!(compile_query("memory").terms(), ["memori"]);
        assert!(compile_query("").is_empty());
        assert!(compile_query("  ( ) * \" ").is_empty());
    }

    #[test]
    fn empty_query_matches_nothing() {
        let index = index_of(&["alpha beta", "gamma"]);
        assert!(index.bm25_search(&compile_query(""), 10).is_empty());
    }

    #[test]
    fn single_matching_chunk_ranks_alone() {
        let index = index_of(&["alpha beta", "gamma delta", "epsilon zeta"]);
        let hits = index.bm25_search(&compile_query("gamma"), 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 2);
    }

    #[test]
    fn identical_text_ties_break_by_chunk_id() {
        let index = index_of(&["shared words here", "shared words here"]);
        let hits = index.bm25_search(&compile_query("shared"), 10);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].1, hits[1].1);
        assert_eq!((hits[0].0, hits[1].0), (1, 2));
    }

    #[test]
    fn bm25_matches_hand_evaluation() {
        // lengths 2, 3, 1 -> avgdl 2; "cat" in chunks 1 (tf 1) and 2 (tf 2).
        let index = index_of(&["cat dog", "cat cat fish", "bird"]);
        let hits = index.bm25_search(&compile_query("cat"), 10);
        let idf_cat = (1.0f64 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5)).ln();
        // chunk 2: tf=2, len=3: 2*2.2 / (2 + 1.2*(0.25 + 0.75*1.5))
        let s2 = idf_cat * (2.0 * 2.2) / (2.0 + 1.2 * (0.25 + 0.75 * 1.5));
        // chunk 1: tf=1, len=2: 2.2 / (1 + 1.2)
        let s1 = idf_cat * 2.2 / (1.0 + 1.2);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0, 2);
        assert_close(hits[0].1, s2, 1e-9);
        assert_close(hits[1].1, s1, 1e-9);
    }

    #[test]
    fn idf_hand_values() {
        let index = index_of(&["common rare", "common", "common"]);
        assert_close(index.idf("common"), 0.133531392624523, 1e-9);
        assert_close(index.mean_idf("common").unwrap(), 0.133531392624523, 1e-9);
        assert_close(index.idf("rare"), 0.980829253011726, 1e-9);
        assert_eq!(index.mean_idf("").unwrap(), 0.0);
        assert!(matches!(InvertedIndex::new().mean_idf("x"), Err(Error::EmptyStore)));
    }
}
