//! Self-supervised training triples from vector/lexical disagreement.
//!
//! A query is run twice through raw fusion (no cutoff, no MMR), once
//! weighted almost entirely toward the vector leg and once toward the
//! lexical leg. Chunks that one weighting puts in its top 5 and the other
//! does not become hard negatives for the query.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{search, FusionConfig, SearchMode, SearchOptions};
use crate::store::{ChunkId, ChunkRecord, Store};
use crate::textindex::{tokenize_stem, InvertedIndex};

pub const VEC_HEAVY: (f64, f64) = (0.95, 0.05);
pub const FTS_HEAVY: (f64, f64) = (0.05, 0.95);
pub const DISAGREEMENT_TOP: usize = 10;
pub const TRIPLE_TOP: usize = 5;
pub const MAX_QUERY_WORDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Favoured by the vector-heavy ranking, missing from the lexical top.
    DenseBlindSpot,
    /// Favoured by the lexical-heavy ranking, missing from the vector top.
    LexicalBlindSpot,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::DenseBlindSpot => Direction::LexicalBlindSpot,
            Direction::LexicalBlindSpot => Direction::DenseBlindSpot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementRecord {
    pub query: String,
    pub vec_heavy_top: Vec<ChunkId>,
    pub fts_heavy_top: Vec<ChunkId>,
    pub disagrees: bool,
}

/// One line of the triples file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisagreementTriple {
    pub query: String,
    pub positive: String,
    #[serde(rename = "negative")]
    pub hard_negative: String,
    pub direction: Direction,
    pub source: String,
}

fn fused_top(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    query: &str,
    weights: (f64, f64),
    top_k: usize,
    cfg: &FusionConfig,
) -> Result<Vec<ChunkId>> {
    let cfg = FusionConfig {
        w_vec: weights.0,
        w_fts: weights.1,
        adaptive: false,
        ..cfg.clone()
    };
    let opts = SearchOptions {
        mode: SearchMode::Hybrid,
        ..SearchOptions::raw_fusion(top_k)
    };
    Ok(search(store, embedder, query, &opts, &cfg)?
        .results
        .iter()
        .map(|r| r.chunk_id)
        .collect())
}

/// Compares vector-heavy and lexical-heavy rankings for one query.
///
/// Triples are only emitted when the two top-`top_k` sets differ. The
/// positive and any chunk with the positive's digest are never negatives.
pub fn mine_disagreement(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    query: &str,
    positive_chunk_id: ChunkId,
    top_k: usize,
    source: &str,
    cfg: &FusionConfig,
) -> Result<(DisagreementRecord, Vec<DisagreementTriple>)> {
    let positive = store.get_chunk(positive_chunk_id)?;
    let vec_top = fused_top(store, embedder, query, VEC_HEAVY, top_k, cfg)?;
    let fts_top = fused_top(store, embedder, query, FTS_HEAVY, top_k, cfg)?;
    let vec_set: HashSet<ChunkId> = vec_top.iter().copied().collect();
    let fts_set: HashSet<ChunkId> = fts_top.iter().copied().collect();
    let record = DisagreementRecord {
        query: query.to_owned(),
        disagrees: vec_set != fts_set,
        vec_heavy_top: vec_top,
        fts_heavy_top: fts_top,
    };
    if !record.disagrees {
        return Ok((record, Vec::new()));
    }

    let head = |v: &[ChunkId]| v.iter().take(TRIPLE_TOP).copied().collect::<Vec<_>>();
    let (vec_head, fts_head) = (head(&record.vec_heavy_top), head(&record.fts_heavy_top));
    let mut wanted: Vec<(ChunkId, Direction)> = Vec::new();
    for &id in &vec_head {
        if !fts_head.contains(&id) {
            wanted.push((id, Direction::DenseBlindSpot));
        }
    }
    for &id in &fts_head {
        if !vec_head.contains(&id) {
            wanted.push((id, Direction::LexicalBlindSpot));
        }
    }
    let ids: Vec<ChunkId> = wanted.iter().map(|&(id, _)| id).collect();
    let lookup = store.get_chunks(&ids)?;
    let by_id: BTreeMap<ChunkId, &ChunkRecord> = lookup.records.iter().map(|r| (r.chunk_id, r)).collect();
    let triples = wanted
        .into_iter()
        .filter_map(|(id, direction)| {
            let negative = by_id.get(&id)?;
            (negative.content_digest != positive.content_digest).then(|| DisagreementTriple {
                query: query.to_owned(),
                positive: positive.text.clone(),
                hard_negative: negative.text.clone(),
                direction,
                source: source.to_owned(),
            })
        })
        .collect();
    Ok((record, triples))
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let boundary = matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace());
        current.push(c);
        let blank_line = c == '\n' && chars.peek() == Some(&'\n');
        if boundary || blank_line {
            let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
            if !s.is_empty() {
                sentences.push(s);
            }
            current.clear();
        }
    }
    let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        sentences.push(s);
    }
    sentences
}

fn cap_words(sentence: &str) -> String {
    sentence
        .split_whitespace()
        .take(MAX_QUERY_WORDS)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Extractive pseudo-queries: the first sentence, then the sentence with
/// the highest mean IDF if it differs. Sentences without indexable terms
/// are skipped; each query is capped at 64 words.
pub fn generate_pseudo_queries(text: &str, index: &InvertedIndex, max_queries: usize) -> Vec<String> {
    let sentences: Vec<String> = split_sentences(text)
        .iter()
        .map(|s| cap_words(s))
        .filter(|s| !tokenize_stem(s).is_empty())
        .collect();
    let Some(first) = sentences.first() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(max_queries.min(2));
    if max_queries == 0 {
        return out;
    }
    out.push(first.clone());
    if max_queries >= 2 {
        let mut best: Option<(f64, &String)> = None;
        for s in &sentences {
            let idf = index.mean_idf(s).unwrap_or(0.0);
            if best.is_none_or(|(b, _)| idf > b) {
                best = Some((idf, s));
            }
        }
        if let Some((_, s)) = best {
            if s != first {
                out.push(s.clone());
            }
        }
    }
    out
}

/// Appends triples as JSON lines, creating the file if needed.
pub fn export_triples(triples: &[DisagreementTriple], path: &Path) -> Result<usize> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    for t in triples {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(triples.len())
}

pub fn read_triples(path: &Path) -> Result<Vec<DisagreementTriple>> {
    let file = std::fs::File::open(path)?;
    let mut triples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        triples.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?,
        );
    }
    Ok(triples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MineOptions {
    pub queries_per_chunk: usize,
    pub top_k: usize,
    /// Stop after this many source chunks (in chunk id order).
    pub max_chunks: Option<usize>,
}

impl Default for MineOptions {
    fn default() -> Self {
        Self {
            queries_per_chunk: 2,
            top_k: DISAGREEMENT_TOP,
            max_chunks: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroupRate {
    pub group: String,
    pub queries: usize,
    pub disagreements: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MineReport {
    pub queries: usize,
    pub disagreements: usize,
    /// Disagreements over all queries pooled together.
    pub aggregate_rate: f64,
    /// Unweighted mean of the per-group rates.
    pub mean_group_rate: f64,
    pub groups: Vec<GroupRate>,
    pub dense_blind_spots: usize,
    pub lexical_blind_spots: usize,
    #[serde(skip)]
    pub triples: Vec<DisagreementTriple>,
}

/// One mining query with its positive chunk and reporting group.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningQuery {
    pub query: String,
    pub positive: ChunkId,
    pub group: String,
    pub source: String,
}

/// Mines a list of (query, positive) pairs and aggregates disagreement
/// rates per group and overall.
pub fn mine_queries(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    queries: &[MiningQuery],
    top_k: usize,
    cfg: &FusionConfig,
) -> Result<MineReport> {
    let mut report = MineReport::default();
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut seen: HashSet<DisagreementTriple> = HashSet::new();
    for q in queries {
        let (record, triples) = mine_disagreement(store, embedder, &q.query, q.positive, top_k, &q.source, cfg)?;
        let g = groups.entry(q.group.clone()).or_default();
        g.0 += 1;
        report.queries += 1;
        if record.disagrees {
            g.1 += 1;
            report.disagreements += 1;
        }
        for t in triples {
            if seen.insert(t.clone()) {
                match t.direction {
                    Direction::DenseBlindSpot => report.dense_blind_spots += 1,
                    Direction::LexicalBlindSpot => report.lexical_blind_spots += 1,
                }
                report.triples.push(t);
            }
        }
    }
    let rate = |d: usize, n: usize| if n == 0 { 0.0 } else { d as f64 / n as f64 };
    report.aggregate_rate = rate(report.disagreements, report.queries);
    report.groups = groups
        .into_iter()
        .map(|(group, (n, d))| GroupRate {
            group,
            queries: n,
            disagreements: d,
            rate: rate(d, n),
        })
        .collect();
    report.mean_group_rate = if report.groups.is_empty() {
        0.0
    } else {
        report.groups.iter().map(|g| g.rate).sum::<f64>() / report.groups.len() as f64
    };
    Ok(report)
}

/// Pseudo-queries from every chunk, each chunk serving as its own
/// positive; groups are collections.
pub fn mine_store(store: &Store, embedder: &dyn EmbeddingProvider, opts: &MineOptions, cfg: &FusionConfig) -> Result<MineReport> {
    let snap = store.snapshot()?;
    if snap.chunk_count() == 0 {
        return Err(Error::EmptyStore);
    }
    let docs: BTreeMap<_, _> = store.documents()?.into_iter().map(|d| (d.doc_id, d)).collect();
    let mut queries = Vec::new();
    let chunks = store.all_chunks()?;
    let take = opts.max_chunks.unwrap_or(chunks.len());
    for chunk in chunks.iter().take(take) {
        let Some(doc) = docs.get(&chunk.doc_id) else { continue };
        for query in generate_pseudo_queries(&chunk.text, &snap.text, opts.queries_per_chunk) {
            queries.push(MiningQuery {
                query,
                positive: chunk.chunk_id,
                group: doc.collection.clone(),
                source: format!("{}#{}", doc.source_uri, chunk.seq),
            });
        }
    }
    mine_queries(store, embedder, &queries, opts.top_k, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textindex::term_frequencies;

    fn index(texts: &[&str]) -> InvertedIndex {
        let mut idx = InvertedIndex::new();
        for (i, t) in texts.iter().enumerate() {
            let (terms, len) = term_frequencies(t);
            idx.insert(i as ChunkId + 1, &terms, len);
        }
        idx
    }

    #[test]
    fn pseudo_queries_first_and_rarest_sentence() {
        let idx = index(&["the cat sat", "the dog ran", "the zebra quagga grazed"]);
        let q = generate_pseudo_queries("The cat sat. The zebra quagga grazed.", &idx, 2);
        assert_eq!(q, vec!["The cat sat.", "The zebra quagga grazed."]);
        let q = generate_pseudo_queries("The zebra quagga grazed. The cat sat.", &idx, 2);
        assert_eq!(q, vec!["The zebra quagga grazed."]);
        assert_eq!(generate_pseudo_queries("One sentence only", &idx, 2).len(), 1);
        assert!(generate_pseudo_queries("... !!", &idx, 2).is_empty());
    }

    #[test]
    fn pseudo_queries_cap_at_64_words() {
        let idx = index(&["w"]);
        let long = vec!["w"; 100].join(" ");
        let q = generate_pseudo_queries(&long, &idx, 1);
        assert_eq!(q[0].split_whitespace().count(), MAX_QUERY_WORDS);
    }

    #[test]
    fn export_appends_and_escapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        assert_eq!(export_triples(&[], &path).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        let t = DisagreementTriple {
            query: "q".into(),
            positive: "line one\nline two".into(),
            hard_negative: "n".into(),
            direction: Direction::LexicalBlindSpot,
            source: "s".into(),
        };
        export_triples(&[t.clone(), t.clone()], &path).unwrap();
        export_triples(std::slice::from_ref(&t), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(r#"{"query":"q","positive":"line one\nline two","negative":"n","direction":"lexical_blind_spot","source":"s"}"#));
        assert_eq!(read_triples(&path).unwrap(), vec![t.clone(), t.clone(), t]);
    }
}
