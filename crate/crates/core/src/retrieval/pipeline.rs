use std::collections::HashMap;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::{
    adaptive_weights, distance_cutoff_filter, mmr_dedup, recency_boost, relevance_tier, rrf_fuse,
    select_cutoff_multiplier, Elimination, FusionConfig, MmrCandidate, MmrStop, RankedCandidate,
    RelevanceTier, SearchMode, SearchResult,
};
use crate::embedder::{unit_distance, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::observability::{Stage, StageTiming};
use crate::store::{ChunkId, DocId, SearchEvent, Store};
use crate::textindex::compile_query;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub k: usize,
    pub mode: SearchMode,
    /// Recency boost strength; 0 disables it.
    pub boost: f64,
    /// Write access counts and a search event on return.
    pub record_telemetry: bool,
    pub apply_cutoff: bool,
    pub apply_mmr: bool,
    pub expand: bool,
    /// Clock for recency; defaults to the wall clock.
    pub now: Option<DateTime<Utc>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            k: 10,
            mode: SearchMode::Hybrid,
            boost: 0.0,
            record_telemetry: true,
            apply_cutoff: true,
            apply_mmr: true,
            expand: true,
            now: None,
        }
    }
}

impl SearchOptions {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    /// Plain fused ranking: no cutoff, no MMR, no context, no writes.
    pub fn raw_fusion(k: usize) -> Self {
        Self {
            k,
            record_telemetry: false,
            apply_cutoff: false,
            apply_mmr: false,
            expand: false,
            ..Self::default()
        }
    }

    pub fn read_only(mut self) -> Self {
        self.record_telemetry = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchDiagnostics {
    pub mode: SearchMode,
    pub query_words: usize,
    pub mean_idf: Option<f64>,
    pub sigmoid_midpoint: Option<f64>,
    pub w_vec: f64,
    pub w_fts: f64,
    pub cutoff_multiplier: f64,
    pub best_distance: f64,
    pub tier: RelevanceTier,
    /// Vector leg, ascending distance.
    pub vec_pool: Vec<(ChunkId, f64)>,
    /// Lexical leg, descending BM25.
    pub fts_pool: Vec<(ChunkId, f64)>,
    /// Every fused candidate in fused order, eliminated ones included.
    pub candidates: Vec<RankedCandidate>,
    pub timings: Vec<StageTiming>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResponse {
    pub results: Vec<SearchResult>,
    pub diagnostics: SearchDiagnostics,
    pub event_id: Option<i64>,
}

struct Clock {
    timings: Vec<StageTiming>,
    mark: Instant,
}

impl Clock {
    fn new() -> Self {
        Self {
            timings: Vec::with_capacity(8),
            mark: Instant::now(),
        }
    }

    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage,
            duration_ms: (now - self.mark).as_secs_f64() * 1e3,
        });
        self.mark = now;
    }
}

fn by_score_then_id(a: &(f64, ChunkId), b: &(f64, ChunkId)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Runs the full pipeline:
/// embed, knn and BM25 pools, weights, RRF, distance cutoff, recency boost,
/// MMR, tiering, context expansion.
pub fn search(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    query: &str,
    opts: &SearchOptions,
    cfg: &FusionConfig,
) -> Result<SearchResponse> {
    let started = Instant::now();
    if query.trim().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let limits = store.limits();
    limits.check_query(query)?;
    limits.check_k(opts.k)?;
    limits.check_pool(cfg.candidate_pool)?;
    cfg.validate()?;
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }

    let snap = store.snapshot()?;
    if snap.chunk_count() == 0 {
        return Err(Error::EmptyStore);
    }
    let mut clock = Clock::new();

    let query_vec = embedder.embed_one(query)?;
    if query_vec.dim() != snap.vectors.dim() {
        return Err(Error::DimensionMismatch {
            expected: snap.vectors.dim(),
            actual: query_vec.dim(),
        });
    }
    clock.lap(Stage::Embed);

    let vec_pool = match opts.mode {
        SearchMode::Fts => Vec::new(),
        _ => snap.vectors.knn(&query_vec, cfg.candidate_pool)?,
    };
    clock.lap(Stage::Knn);

    let fts_pool = match opts.mode {
        SearchMode::Vector => Vec::new(),
        _ => snap.text.bm25_search(&compile_query(query), cfg.candidate_pool),
    };
    clock.lap(Stage::Bm25);

    let (mut mean_idf, mut midpoint) = (None, None);
    let (w_vec, w_fts) = match opts.mode {
        SearchMode::Vector => (1.0, 0.0),
        SearchMode::Fts => (0.0, 1.0),
        SearchMode::Hybrid if cfg.adaptive => {
            let m = snap.text.mean_idf(query).unwrap_or(0.0);
            let resolved = FusionConfig {
                sigmoid_midpoint: Some(cfg.sigmoid_midpoint.unwrap_or(snap.corpus_mean_idf)),
                ..cfg.clone()
            };
            mean_idf = Some(m);
            midpoint = resolved.sigmoid_midpoint;
            adaptive_weights(m, &resolved)
        }
        SearchMode::Hybrid => (cfg.w_vec, cfg.w_fts),
    };
    let vec_ids: Vec<ChunkId> = vec_pool.iter().map(|&(id, _)| id).collect();
    let fts_ids: Vec<ChunkId> = fts_pool.iter().map(|&(id, _)| id).collect();
    let mut fused = rrf_fuse(&vec_ids, &fts_ids, w_vec, w_fts, cfg.rrf_k);
    let distances: HashMap<ChunkId, f64> = vec_pool.iter().copied().collect();
    for c in &mut fused {
        c.distance = distances.get(&c.chunk_id).copied();
    }
    let fused_order: Vec<ChunkId> = fused.iter().map(|c| c.chunk_id).collect();
    clock.lap(Stage::Fuse);

    let query_words = query.split_whitespace().count();
    let multiplier = select_cutoff_multiplier(query_words, cfg);
    let (survivors, mut eliminated) = if opts.apply_cutoff {
        distance_cutoff_filter(fused, multiplier)
    } else {
        (fused, Vec::new())
    };
    clock.lap(Stage::Cutoff);

    let now = opts.now.unwrap_or_else(Utc::now);
    let mut scored: Vec<(f64, usize)> = survivors
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let days = snap
                .doc_of(c.chunk_id)
                .and_then(|d| snap.doc_created_at(d))
                .map_or(0.0, |t| ((now - t).num_milliseconds() as f64 / 86_400_000.0).max(0.0));
            (recency_boost(c.rrf_score, days, opts.boost), i)
        })
        .collect();
    scored.sort_by(|a, b| by_score_then_id(&(a.0, survivors[a.1].chunk_id), &(b.0, survivors[b.1].chunk_id)));
    clock.lap(Stage::Boost);

    let (picked, rest_elimination): (Vec<usize>, Elimination) = if opts.apply_mmr {
        let pool: Vec<MmrCandidate> = scored
            .iter()
            .map(|&(score, i)| {
                let id = survivors[i].chunk_id;
                MmrCandidate {
                    chunk_id: id,
                    doc_id: snap.doc_of(id).unwrap_or(-1),
                    score,
                    vector: snap.vectors.vector(id).unwrap_or(&[]),
                }
            })
            .collect();
        let outcome = mmr_dedup(&pool, cfg.mmr_lambda, opts.k);
        let rest = match outcome.stop {
            MmrStop::NegativeMmr => Elimination::MmrStop,
            _ => Elimination::BelowK,
        };
        let mut picked = outcome.selected;
        // selection order can break score order; results are reported by score
        picked.sort_unstable();
        (picked, rest)
    } else {
        ((0..scored.len().min(opts.k)).collect(), Elimination::BelowK)
    };
    let mut chosen = vec![false; scored.len()];
    for &p in &picked {
        chosen[p] = true;
    }
    let mut results: Vec<(f64, RankedCandidate)> = Vec::with_capacity(picked.len());
    for (pos, &(score, i)) in scored.iter().enumerate() {
        let c = survivors[i].clone();
        if chosen[pos] {
            results.push((score, c));
        } else {
            eliminated.push(RankedCandidate {
                elimination: Some(rest_elimination),
                ..c
            });
        }
    }
    clock.lap(Stage::Mmr);

    let best_distance = match opts.mode {
        SearchMode::Fts => results
            .iter()
            .filter_map(|(_, c)| snap.vectors.vector(c.chunk_id))
            .map(|v| unit_distance(query_vec.as_slice(), v))
            .min_by(f64::total_cmp)
            .unwrap_or(2.0),
        _ => vec_pool.first().map_or(2.0, |&(_, d)| d),
    };
    let tier = relevance_tier(best_distance);

    let mut out = Vec::with_capacity(results.len());
    for (score, c) in results {
        let doc_id: DocId = snap.doc_of(c.chunk_id).ok_or(Error::MissingChunk(c.chunk_id))?;
        let context_text = if opts.expand {
            let seq = snap.seq_of(c.chunk_id).unwrap_or(0);
            window_text(store, doc_id, seq, cfg.context_window)?
        } else {
            String::new()
        };
        out.push(SearchResult {
            chunk_id: c.chunk_id,
            doc_id,
            score,
            tier,
            context_text,
            diagnostics: c,
        });
    }
    clock.lap(Stage::Expand);

    let mut candidates: Vec<RankedCandidate> = out.iter().map(|r| r.diagnostics.clone()).collect();
    candidates.extend(eliminated);
    let position: HashMap<ChunkId, usize> = fused_order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    candidates.sort_by_key(|c| position[&c.chunk_id]);

    let mut event_id = None;
    if opts.record_telemetry {
        let ids: Vec<ChunkId> = out.iter().map(|r| r.chunk_id).collect();
        store.record_access(&ids, now)?;
        event_id = Some(store.record_search_event(&SearchEvent {
            query: query.to_owned(),
            best_distance,
            tier,
            result_count: out.len(),
            dismissed: false,
            at: now,
        })?);
    }
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    let obs = store.observability();
    obs.metrics.record_search(total_ms, &clock.timings);
    obs.slow_log.observe(query, total_ms, &clock.timings);

    Ok(SearchResponse {
        results: out,
        diagnostics: SearchDiagnostics {
            mode: opts.mode,
            query_words,
            mean_idf,
            sigmoid_midpoint: midpoint,
            w_vec,
            w_fts,
            cutoff_multiplier: multiplier,
            best_distance,
            tier,
            vec_pool,
            fts_pool,
            candidates,
            timings: clock.timings,
            total_ms,
        },
        event_id,
    })
}

fn window_text(store: &Store, doc_id: DocId, seq: usize, window: usize) -> Result<String> {
    let chunks = store.chunk_window(doc_id, seq.saturating_sub(window), seq + window)?;
    Ok(chunks
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Text of the chunks `seq - window ..= seq + window` around `chunk_id`,
/// clamped to the document, joined by newlines.
pub fn expand_context(store: &Store, chunk_id: ChunkId, window: usize) -> Result<String> {
    let chunk = store.get_chunk(chunk_id)?;
    window_text(store, chunk.doc_id, chunk.seq, window)
}
