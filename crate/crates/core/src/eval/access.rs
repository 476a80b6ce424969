use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::run::{doc_names, pool_docs};
use super::{ndcg_at_k, EvalBundle};
use crate::embedder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{
    frequency_decay_score, maturity_gate, search, AccessStats, FusionConfig, SearchOptions, DEFAULT_SATURATION,
    MATURITY_THRESHOLD,
};
use crate::store::{ChunkId, DocId, Store};

/// Zipf exponent for `frequency_skewed`. With one draw per chunk per round
/// this keeps the max/mean access ratio near 5 on a corpus of ~900 chunks.
pub const ZIPF_EXPONENT: f64 = 0.3;
const RECENT_DAYS: f64 = 14.0;
const AGE_SPAN_DAYS: f64 = 90.0;
const FOCUS_PER_ROUND: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessPattern {
    Uniform,
    RecentFocused,
    FrequencySkewed,
    Mixed,
    BenchmarkFocused,
}

impl AccessPattern {
    pub const ALL: [AccessPattern; 5] = [
        AccessPattern::Uniform,
        AccessPattern::RecentFocused,
        AccessPattern::FrequencySkewed,
        AccessPattern::Mixed,
        AccessPattern::BenchmarkFocused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AccessPattern::Uniform => "uniform",
            AccessPattern::RecentFocused => "recent_focused",
            AccessPattern::FrequencySkewed => "frequency_skewed",
            AccessPattern::Mixed => "mixed",
            AccessPattern::BenchmarkFocused => "benchmark_focused",
        }
    }
}

impl fmt::Display for AccessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AccessPattern::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown access pattern {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessSimulation {
    pub pattern: AccessPattern,
    pub rounds: usize,
    pub seed: u64,
    pub now: DateTime<Utc>,
    /// Target chunks for `benchmark_focused`; empty picks a seeded 10%.
    pub focus: Vec<ChunkId>,
}

impl AccessSimulation {
    pub fn new(pattern: AccessPattern, rounds: usize, seed: u64) -> Self {
        Self {
            pattern,
            rounds,
            seed,
            now: Utc::now(),
            focus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessSummary {
    pub pattern: AccessPattern,
    pub rounds: usize,
    pub chunks: usize,
    pub max: u64,
    pub mean: f64,
    pub max_mean_ratio: f64,
    pub gate: f64,
}

fn zipf_draws(rng: &mut ChaCha8Rng, order: &[usize], draws: usize, counts: &mut [u64], touched: &mut [f64], age: f64) {
    let weights: Vec<f64> = (0..order.len()).map(|i| 1.0 / ((i + 1) as f64).powf(ZIPF_EXPONENT)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    for _ in 0..draws {
        let slot = order[dist.sample(rng)];
        counts[slot] += 1;
        touched[slot] = touched[slot].min(age);
    }
}

/// Resets every chunk's access statistics, then applies `rounds` rounds of
/// the pattern. The outcome depends only on the store's chunk ids and the
/// seed, so repeating a simulation is idempotent.
pub fn simulate_access_pattern(store: &Store, sim: &AccessSimulation) -> Result<AccessSummary> {
    let ids: Vec<ChunkId> = store.all_chunks()?.iter().map(|c| c.chunk_id).collect();
    if ids.is_empty() {
        return Err(Error::EmptyStore);
    }
    let n = ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut counts = vec![0u64; n];
    // days since last access; infinity = never
    let mut touched = vec![f64::INFINITY; n];
    let ages: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..AGE_SPAN_DAYS)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let recent_round = |rng: &mut ChaCha8Rng, counts: &mut [u64], touched: &mut [f64]| {
        for i in 0..n {
            let p = if ages[i] < RECENT_DAYS { 0.8 } else { 0.05 };
            if rng.random_bool(p) {
                counts[i] += 1;
                touched[i] = touched[i].min(ages[i]);
            }
        }
    };

    match sim.pattern {
        AccessPattern::Uniform => {
            for i in 0..n {
                counts[i] = sim.rounds as u64;
                if sim.rounds > 0 {
                    touched[i] = 0.0;
                }
            }
        }
        AccessPattern::RecentFocused => {
            for _ in 0..sim.rounds {
                recent_round(&mut rng, &mut counts, &mut touched);
            }
        }
        AccessPattern::FrequencySkewed => {
            for round in 0..sim.rounds {
                let age = (sim.rounds - 1 - round) as f64;
                zipf_draws(&mut rng, &order, n, &mut counts, &mut touched, age);
            }
        }
        AccessPattern::Mixed => {
            for round in 0..sim.rounds {
                match round % 3 {
                    0 => {
                        for i in 0..n {
                            counts[i] += 1;
                            touched[i] = touched[i].min((sim.rounds - 1 - round) as f64);
                        }
                    }
                    1 => recent_round(&mut rng, &mut counts, &mut touched),
                    _ => {
                        let age = (sim.rounds - 1 - round) as f64;
                        zipf_draws(&mut rng, &order, n, &mut counts, &mut touched, age);
                    }
                }
            }
        }
        AccessPattern::BenchmarkFocused => {
            let focus: HashSet<ChunkId> = if sim.focus.is_empty() {
                order.iter().take(n.div_ceil(10)).map(|&i| ids[i]).collect()
            } else {
                sim.focus.iter().copied().collect()
            };
            for i in 0..n {
                if focus.contains(&ids[i]) {
                    counts[i] = FOCUS_PER_ROUND * sim.rounds as u64;
                    if sim.rounds > 0 {
                        touched[i] = 0.0;
                    }
                } else if sim.rounds > 0 && rng.random_bool(0.5) {
                    counts[i] = 1;
                    touched[i] = ages[i];
                }
            }
        }
    }

    let stats: Vec<(ChunkId, u64, Option<DateTime<Utc>>)> = (0..n)
        .filter(|&i| counts[i] > 0)
        .map(|i| {
            let at = sim.now - Duration::milliseconds((touched[i] * 86_400_000.0) as i64);
            (ids[i], counts[i], Some(at))
        })
        .collect();
    store.reset_access_stats(&stats)?;

    let max = counts.iter().copied().max().unwrap_or(0);
    let mean = counts.iter().sum::<u64>() as f64 / n as f64;
    Ok(AccessSummary {
        pattern: sim.pattern,
        rounds: sim.rounds,
        chunks: n,
        max,
        mean,
        max_mean_ratio: if mean > 0.0 { max as f64 / mean } else { 0.0 },
        gate: maturity_gate(&counts, MATURITY_THRESHOLD),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub a: f64,
    pub b: f64,
    pub decay: f64,
}

/// (a, b) in {(.5,.5), (.7,.3), (.8,.2), (.9,.1)} crossed with decay
/// L in {.03, .05, .07, .10}.
pub const DEFAULT_GRID: [GridConfig; 16] = {
    const AB: [(f64, f64); 4] = [(0.5, 0.5), (0.7, 0.3), (0.8, 0.2), (0.9, 0.1)];
    const L: [f64; 4] = [0.03, 0.05, 0.07, 0.10];
    let mut grid = [GridConfig { a: 0.0, b: 0.0, decay: 0.0 }; 16];
    let mut i = 0;
    while i < 16 {
        grid[i] = GridConfig {
            a: AB[i / 4].0,
            b: AB[i / 4].1,
            decay: L[i % 4],
        };
        i += 1;
    }
    grid
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub pattern: AccessPattern,
    pub config: GridConfig,
    pub ndcg_at_10: f64,
    pub delta: f64,
    /// Maturity gate the pattern's counts would produce; reported, not applied.
    pub gate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub baseline_ndcg_at_10: f64,
    pub queries: usize,
    pub summaries: Vec<AccessSummary>,
    pub rows: Vec<GridRow>,
    pub any_beats_baseline: bool,
}

struct Candidates {
    qid: String,
    /// (chunk, doc, rrf score) in fused order.
    hits: Vec<(ChunkId, DocId, f64)>,
}

/// Re-ranks each query's raw fused pool with the frequency-and-decay
/// scorer under every access simulation and grid config, and reports the
/// NDCG@10 change against the pure-RRF ranking of the same pool. Access
/// statistics are restored afterwards.
pub fn scoring_grid_search(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    bundle: &EvalBundle,
    sims: &[AccessSimulation],
    grid: &[GridConfig],
    cfg: &FusionConfig,
) -> Result<GridReport> {
    let queries = bundle.judged_queries();
    if queries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let names = doc_names(store, None)?;
    let opts = SearchOptions::raw_fusion(cfg.candidate_pool);
    let mut pools = Vec::with_capacity(queries.len());
    for (qid, text) in &queries {
        let response = search(store, embedder, text, &opts, cfg)?;
        pools.push(Candidates {
            qid: qid.to_string(),
            hits: response
                .results
                .iter()
                .map(|r| (r.chunk_id, r.doc_id, r.diagnostics.rrf_score))
                .collect(),
        });
    }
    let ndcg10 = |pool: &Candidates, order: &[usize]| {
        let ranked = pool_docs(order.iter().map(|&i| pool.hits[i].1), &names);
        ndcg_at_k(&ranked, &bundle.qrels_for(&pool.qid), 10)
    };
    let n = pools.len() as f64;
    let baseline = pools
        .iter()
        .map(|p| ndcg10(p, &(0..p.hits.len()).collect::<Vec<_>>()))
        .sum::<f64>()
        / n;

    let original: Vec<(ChunkId, u64, Option<DateTime<Utc>>)> = store
        .all_chunks()?
        .into_iter()
        .filter(|c| c.access_count > 0 || c.last_accessed_at.is_some())
        .map(|c| (c.chunk_id, c.access_count, c.last_accessed_at))
        .collect();

    let mut summaries = Vec::with_capacity(sims.len());
    let mut rows = Vec::with_capacity(sims.len() * grid.len());
    for sim in sims {
        let summary = simulate_access_pattern(store, sim)?;
        let stats: HashMap<ChunkId, AccessStats> = store
            .all_chunks()?
            .into_iter()
            .map(|c| {
                let days_ago = c
                    .last_accessed_at
                    .map_or(0.0, |t| ((sim.now - t).num_milliseconds() as f64 / 86_400_000.0).max(0.0));
                (
                    c.chunk_id,
                    AccessStats {
                        access_count: c.access_count,
                        days_ago,
                    },
                )
            })
            .collect();
        for g in grid {
            let mut total = 0.0;
            for pool in &pools {
                let (lo, hi) = pool
                    .hits
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| (lo.min(h.2), hi.max(h.2)));
                let scores: Vec<f64> = pool
                    .hits
                    .iter()
                    .map(|&(id, _, s)| {
                        let norm = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
                        let st = stats.get(&id).copied().unwrap_or_default();
                        frequency_decay_score(norm, st, g.a, g.b, g.decay, DEFAULT_SATURATION)
                    })
                    .collect();
                let mut order: Vec<usize> = (0..pool.hits.len()).collect();
                order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]));
                total += ndcg10(pool, &order);
            }
            let ndcg = total / n;
            rows.push(GridRow {
                pattern: sim.pattern,
                config: *g,
                ndcg_at_10: ndcg,
                delta: ndcg - baseline,
                gate: summary.gate,
            });
        }
        summaries.push(summary);
    }
    store.reset_access_stats(&original)?;

    Ok(GridReport {
        baseline_ndcg_at_10: baseline,
        queries: pools.len(),
        any_beats_baseline: rows.iter().any(|r| r.delta > 1e-12),
        summaries,
        rows,
    })
}
