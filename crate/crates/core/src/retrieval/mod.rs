//! Hybrid retrieval: fusion, cutoff, dedup, tiering and context expansion.

mod federated;
mod fusion;
mod mmr;
mod pipeline;
mod scoring;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use federated::{federated_search, FederatedHit, FederatedResult, Profile};
pub use fusion::{adaptive_weights, distance_cutoff_filter, rrf_fuse, select_cutoff_multiplier, sigmoid};
pub use mmr::{mmr_dedup, MmrCandidate, MmrOutcome, MmrStop};
pub use pipeline::{expand_context, search, SearchDiagnostics, SearchOptions, SearchResponse};
pub use scoring::{
    frequency_decay_score, maturity_gate, recency_boost, relevance_tier, AccessStats, DEFAULT_SATURATION,
    MATURITY_CAP, MATURITY_THRESHOLD, RECENCY_RATE,
};

use crate::error::{Error, Result};
use crate::store::{ChunkId, DocId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub rrf_k: u32,
    pub w_vec: f64,
    pub w_fts: f64,
    pub adaptive: bool,
    /// `None` uses the corpus mean IDF of the current index snapshot.
    pub sigmoid_midpoint: Option<f64>,
    pub sigmoid_slope: f64,
    pub w_fts_min: f64,
    pub w_fts_max: f64,
    pub cutoff_short: f64,
    pub cutoff_long: f64,
    pub long_query_words: usize,
    pub candidate_pool: usize,
    pub mmr_lambda: f64,
    pub context_window: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            rrf_k: 60,
            w_vec: 0.6,
            w_fts: 0.4,
            adaptive: true,
            sigmoid_midpoint: None,
            sigmoid_slope: 1.0,
            w_fts_min: 0.2,
            w_fts_max: 0.6,
            cutoff_short: 1.15,
            cutoff_long: 5.0,
            long_query_words: 50,
            candidate_pool: 50,
            mmr_lambda: 0.5,
            context_window: 1,
        }
    }
}

impl FusionConfig {
    /// Fixed weights, adaptive weighting off.
    pub fn fixed(w_vec: f64, w_fts: f64) -> Self {
        Self {
            w_vec,
            w_fts,
            adaptive: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        if !self.adaptive && ((self.w_vec + self.w_fts) - 1.0).abs() > 1e-9 {
            return bad("w_vec + w_fts must equal 1 with fixed weights");
        }
        if self.w_vec < 0.0 || self.w_fts < 0.0 {
            return bad("fusion weights must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.w_fts_min) || !(0.0..=1.0).contains(&self.w_fts_max) {
            return bad("w_fts bounds must lie in [0, 1]");
        }
        if self.w_fts_min >= self.w_fts_max {
            return bad("w_fts_min must be below w_fts_max");
        }
        if self.cutoff_short > self.cutoff_long {
            return bad("cutoff_short must not exceed cutoff_long");
        }
        if self.candidate_pool == 0 {
            return bad("candidate_pool must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mmr_lambda) {
            return bad("mmr_lambda must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Vector,
    Fts,
    #[default]
    Hybrid,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Vector => "vector",
            SearchMode::Fts => "fts",
            SearchMode::Hybrid => "hybrid",
        }
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vector" => Ok(SearchMode::Vector),
            "fts" => Ok(SearchMode::Fts),
            "hybrid" => Ok(SearchMode::Hybrid),
            other => Err(Error::InvalidArgument(format!("unknown search mode {other:?}"))),
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceTier {
    High,
    Medium,
    Low,
}

impl RelevanceTier {
    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceTier::High => "high",
            RelevanceTier::Medium => "medium",
            RelevanceTier::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "high" => Some(RelevanceTier::High),
            "medium" => Some(RelevanceTier::Medium),
            "low" => Some(RelevanceTier::Low),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elimination {
    DistanceCutoff,
    MmrStop,
    BelowK,
}

/// A fused candidate as it moves through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub chunk_id: ChunkId,
    pub rank_vec: Option<usize>,
    pub rank_fts: Option<usize>,
    pub distance: Option<f64>,
    pub rrf_score: f64,
    pub elimination: Option<Elimination>,
}

#[derive(Serialize)]
struct CandidateDiagnostics {
    rank_vec: Option<usize>,
    rank_fts: Option<usize>,
    distance: Option<f64>,
    elimination: Option<Elimination>,
}

fn diagnostics_only<S: serde::Serializer>(c: &RankedCandidate, s: S) -> std::result::Result<S::Ok, S::Error> {
    CandidateDiagnostics {
        rank_vec: c.rank_vec,
        rank_fts: c.rank_fts,
        distance: c.distance,
        elimination: c.elimination,
    }
    .serialize(s)
}

/// Final ranked hit. Serializes to
/// `{chunk_id, doc_id, score, tier, context, diagnostics}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub score: f64,
    pub tier: RelevanceTier,
    #[serde(rename = "context")]
    pub context_text: String,
    #[serde(serialize_with = "diagnostics_only")]
    pub diagnostics: RankedCandidate,
}
