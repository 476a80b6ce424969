//! Metrics registry, slow-query log and miss analysis.

mod miss;

use std::collections::VecDeque;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::Serialize;

pub use miss::{miss_analysis, MissReport, MissVerdict, StageEvidence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Embed,
    Knn,
    Bm25,
    Fuse,
    Cutoff,
    Boost,
    Mmr,
    Expand,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Embed,
        Stage::Knn,
        Stage::Bm25,
        Stage::Fuse,
        Stage::Cutoff,
        Stage::Boost,
        Stage::Mmr,
        Stage::Expand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Embed => "embed",
            Stage::Knn => "knn",
            Stage::Bm25 => "bm25",
            Stage::Fuse => "fuse",
            Stage::Cutoff => "cutoff",
            Stage::Boost => "boost",
            Stage::Mmr => "mmr",
            Stage::Expand => "expand",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub duration_ms: f64,
}

/// Upper bounds (ms) of the histogram buckets; a final overflow bucket
/// catches anything slower.
pub const BUCKET_BOUNDS_MS: [f64; 13] = [
    0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts[i]` covers `(bounds[i-1], bounds[i]]`; the last entry is overflow.
    pub counts: Vec<u64>,
    pub total: u64,
    pub sum_ms: f64,
}

impl Default for Histogram {
    fn default() -> Self {
        Self {
            counts: vec![0; BUCKET_BOUNDS_MS.len() + 1],
            total: 0,
            sum_ms: 0.0,
        }
    }
}

impl Histogram {
    fn observe(&mut self, ms: f64) {
        let ms = ms.max(0.0);
        let slot = BUCKET_BOUNDS_MS
            .iter()
            .position(|&b| ms <= b)
            .unwrap_or(BUCKET_BOUNDS_MS.len());
        self.counts[slot] += 1;
        self.total += 1;
        self.sum_ms += ms;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    pub searches: u64,
    pub ingests: u64,
    pub batch_lookups: u64,
    pub search_total: Histogram,
    pub stages: Vec<(Stage, Histogram)>,
}

impl MetricsSnapshot {
    pub fn stage(&self, stage: Stage) -> &Histogram {
        &self.stages[stage.index()].1
    }
}

/// Counters and histograms behind one lock so snapshots are consistent.
#[derive(Debug)]
pub struct Metrics {
    inner: Mutex<MetricsSnapshot>,
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            inner: Mutex::new(MetricsSnapshot {
                stages: Stage::ALL.iter().map(|&s| (s, Histogram::default())).collect(),
                ..MetricsSnapshot::default()
            }),
        }
    }
}

impl Metrics {
    fn with<R>(&self, f: impl FnOnce(&mut MetricsSnapshot) -> R) -> R {
        f(&mut self.inner.lock().expect("metrics lock"))
    }

    pub fn add_ingests(&self, n: u64) {
        self.with(|m| m.ingests += n);
    }

    pub fn add_batch_lookups(&self, n: u64) {
        self.with(|m| m.batch_lookups += n);
    }

    pub fn record_search(&self, total_ms: f64, stages: &[StageTiming]) {
        self.with(|m| {
            m.searches += 1;
            m.search_total.observe(total_ms);
            for t in stages {
                m.stages[t.stage.index()].1.observe(t.duration_ms);
            }
        });
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        self.with(|m| m.clone())
    }
}

pub const SLOW_LOG_CAPACITY: usize = 256;
pub const DEFAULT_SLOW_QUERY_MS: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowQuery {
    pub query: String,
    pub total_ms: f64,
    pub stages: Vec<StageTiming>,
    pub at: DateTime<Utc>,
}

#[derive(Debug)]
struct SlowLogState {
    threshold_ms: f64,
    entries: VecDeque<SlowQuery>,
}

/// Bounded ring of searches slower than a threshold.
#[derive(Debug)]
pub struct SlowQueryLog {
    state: Mutex<SlowLogState>,
}

impl Default for SlowQueryLog {
    fn default() -> Self {
        Self::new(DEFAULT_SLOW_QUERY_MS)
    }
}

impl SlowQueryLog {
    pub fn new(threshold_ms: f64) -> Self {
        Self {
            state: Mutex::new(SlowLogState {
                threshold_ms,
                entries: VecDeque::with_capacity(SLOW_LOG_CAPACITY),
            }),
        }
    }

    pub fn set_threshold(&self, threshold_ms: f64) {
        self.state.lock().expect("slow log lock").threshold_ms = threshold_ms;
    }

    pub fn threshold(&self) -> f64 {
        self.state.lock().expect("slow log lock").threshold_ms
    }

    /// Logs the search if `total_ms >= threshold`. Returns whether it was kept.
    pub fn observe(&self, query: &str, total_ms: f64, stages: &[StageTiming]) -> bool {
        let mut state = self.state.lock().expect("slow log lock");
        if total_ms < state.threshold_ms {
            return false;
        }
        if state.entries.len() == SLOW_LOG_CAPACITY {
            state.entries.pop_front();
        }
        state.entries.push_back(SlowQuery {
            query: query.to_owned(),
            total_ms,
            stages: stages.to_vec(),
            at: Utc::now(),
        });
        true
    }

    /// Entries, oldest first.
    pub fn entries(&self) -> Vec<SlowQuery> {
        self.state
            .lock()
            .expect("slow log lock")
            .entries
            .iter()
            .cloned()
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct Observability {
    pub metrics: Metrics,
    pub slow_log: SlowQueryLog,
}
