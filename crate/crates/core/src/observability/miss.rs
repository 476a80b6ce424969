use serde::Serialize;

use crate::embedder::EmbeddingProvider;
use crate::error::Result;
use crate::retrieval::{search, Elimination, FusionConfig, RankedCandidate, SearchMode, SearchOptions};
use crate::store::{ChunkId, DocId, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissVerdict {
    NotInCorpus,
    NoChunkInVectorPool,
    NoChunkInFtsPool,
    EliminatedByCutoff,
    EliminatedByMmr,
    BelowRankK,
    /// The document was returned; nothing to diagnose.
    Retrieved,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageEvidence {
    pub doc_chunks: usize,
    /// Best (rank, distance) of the document's chunks in the vector pool.
    pub vector_pool: Option<(usize, f64)>,
    /// Best (rank, bm25) in the lexical pool.
    pub fts_pool: Option<(usize, f64)>,
    pub vector_pool_size: usize,
    pub fts_pool_size: usize,
    pub fused_rank: Option<usize>,
    pub best_distance: f64,
    pub cutoff_multiplier: f64,
    pub cutoff_threshold: f64,
    pub doc_candidates: Vec<RankedCandidate>,
    pub result_rank: Option<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissReport {
    pub query: String,
    pub expected_doc_id: DocId,
    pub verdict: MissVerdict,
    pub details: Option<StageEvidence>,
    pub suggestions: Vec<String>,
}

fn best_in(pool: &[(ChunkId, f64)], chunks: &[ChunkId]) -> Option<(usize, f64)> {
    pool.iter()
        .enumerate()
        .find(|(_, (id, _))| chunks.contains(id))
        .map(|(i, &(_, s))| (i + 1, s))
}

/// Replays the search without telemetry and names the first pipeline stage
/// that lost `expected_doc_id`.
pub fn miss_analysis(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    query: &str,
    expected_doc_id: DocId,
    opts: &SearchOptions,
    cfg: &FusionConfig,
) -> Result<MissReport> {
    let mut report = MissReport {
        query: query.to_owned(),
        expected_doc_id,
        verdict: MissVerdict::NotInCorpus,
        details: None,
        suggestions: Vec::new(),
    };
    let snap = store.snapshot()?;
    let chunks = snap.chunks_of_doc(expected_doc_id);
    if chunks.is_empty() {
        report
            .suggestions
            .push("document is not in the store; ingest it before searching".into());
        return Ok(report);
    }
    let opts = opts.clone().read_only();
    let response = search(store, embedder, query, &opts, cfg)?;
    let diag = &response.diagnostics;

    let doc_candidates: Vec<RankedCandidate> = diag
        .candidates
        .iter()
        .filter(|c| chunks.contains(&c.chunk_id))
        .cloned()
        .collect();
    let evidence = StageEvidence {
        doc_chunks: chunks.len(),
        vector_pool: best_in(&diag.vec_pool, &chunks),
        fts_pool: best_in(&diag.fts_pool, &chunks),
        vector_pool_size: diag.vec_pool.len(),
        fts_pool_size: diag.fts_pool.len(),
        fused_rank: diag
            .candidates
            .iter()
            .position(|c| chunks.contains(&c.chunk_id))
            .map(|i| i + 1),
        best_distance: diag.best_distance,
        cutoff_multiplier: diag.cutoff_multiplier,
        cutoff_threshold: diag.cutoff_multiplier * diag.best_distance,
        doc_candidates,
        result_rank: response
            .results
            .iter()
            .position(|r| r.doc_id == expected_doc_id)
            .map(|i| i + 1),
        k: opts.k,
    };

    let uses_vec = opts.mode != SearchMode::Fts;
    let uses_fts = opts.mode != SearchMode::Vector;
    if uses_vec && evidence.vector_pool.is_none() {
        report.suggestions.push(format!(
            "no chunk of the document is among the {} nearest vectors; raise candidate_pool or check the embedder",
            evidence.vector_pool_size
        ));
    }
    if uses_fts && evidence.fts_pool.is_none() {
        report
            .suggestions
            .push("no query term matches document vocabulary".into());
    }

    let eliminated_by = |e: Elimination| {
        evidence
            .doc_candidates
            .iter()
            .any(|c| c.elimination == Some(e))
    };
    report.verdict = if evidence.result_rank.is_some() {
        MissVerdict::Retrieved
    } else if evidence.doc_candidates.is_empty() {
        if uses_vec {
            MissVerdict::NoChunkInVectorPool
        } else {
            MissVerdict::NoChunkInFtsPool
        }
    } else if evidence.doc_candidates.iter().all(|c| c.elimination == Some(Elimination::DistanceCutoff)) {
        let distance = evidence
            .doc_candidates
            .iter()
            .filter_map(|c| c.distance)
            .min_by(f64::total_cmp)
            .unwrap_or(f64::NAN);
        report.suggestions.push(format!(
            "query may be long; cutoff multiplier was {} (best distance {:.4}, document distance {:.4}, threshold {:.4})",
            evidence.cutoff_multiplier, evidence.best_distance, distance, evidence.cutoff_threshold
        ));
        MissVerdict::EliminatedByCutoff
    } else if eliminated_by(Elimination::MmrStop) {
        report.suggestions.push(
            "MMR stopped selecting before this document; its chunks scored below the same-document redundancy penalty"
                .into(),
        );
        MissVerdict::EliminatedByMmr
    } else {
        report.suggestions.push(format!(
            "document reached fused rank {} but k is {}; raise k",
            evidence.fused_rank.unwrap_or(0),
            opts.k
        ));
        MissVerdict::BelowRankK
    };
    report.details = Some(evidence);
    Ok(report)
}
