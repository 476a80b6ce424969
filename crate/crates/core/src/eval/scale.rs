use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fixtures::distractor_text;
use super::{run_eval, EvalBundle, EvalOptions, LatencyPercentiles};
use crate::embedder::{Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::retrieval::{search, FusionConfig, SearchOptions};
use crate::store::{NewChunk, NewDocument, SourceType, Store};

pub const PAD_COLLECTION: &str = "_scale_pad";
const PAD_BATCH: usize = 2048;
const PAD_WORDS: usize = 8;
const WARMUP_QUERIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleOptions {
    /// Target total chunk counts, padded in ascending order.
    pub sizes: Vec<usize>,
    pub n_queries: usize,
    pub seed: u64,
    pub k: usize,
    pub cfg: FusionConfig,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 50_000],
            n_queries: 100,
            seed: 42,
            k: 10,
            cfg: FusionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow {
    pub n_chunks: usize,
    pub dim: usize,
    pub queries: usize,
    pub latency_ms: LatencyPercentiles,
    pub ndcg_at_10: f64,
    /// What this row was measured on; rows are never merged across runs.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    pub rows: Vec<ScaleRow>,
    /// Largest minus smallest NDCG@10 across rows.
    pub ndcg_drift: f64,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Result<Embedding> {
    Embedding::normalized((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
}

/// Adds `n` single-chunk distractor documents with random unit vectors
/// and `zq`-prefixed text that no fixture vocabulary shares.
fn pad(store: &Store, rng: &mut ChaCha8Rng, start: usize, n: usize, dim: usize) -> Result<()> {
    let mut batch = Vec::with_capacity(PAD_BATCH.min(n));
    for i in start..start + n {
        let text = distractor_text(rng, PAD_WORDS);
        let chunk = NewChunk::prose(text);
        let meta = NewDocument {
            source_type: SourceType::Imported,
            ..NewDocument::new(format!("pad-{i}"), PAD_COLLECTION)
        };
        batch.push((meta, vec![chunk], vec![random_unit(rng, dim)?]));
        if batch.len() == PAD_BATCH {
            store.add_documents_batch(&batch)?;
            batch.clear();
        }
    }
    if !batch.is_empty() {
        store.add_documents_batch(&batch)?;
    }
    Ok(())
}

/// Pads a store already holding `bundle` up to each target size, then
/// re-runs the first `n_queries` judged queries and reports latency
/// percentiles and NDCG@10 per size.
pub fn scale_benchmark(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    bundle: &EvalBundle,
    opts: &ScaleOptions,
) -> Result<ScaleReport> {
    let mut sizes = opts.sizes.clone();
    sizes.sort_unstable();
    if sizes.is_empty() || opts.n_queries == 0 {
        return Err(Error::EmptyInput);
    }
    let mut subset = bundle.clone();
    let keep: Vec<String> = bundle
        .judged_queries()
        .into_iter()
        .take(opts.n_queries)
        .map(|(q, _)| q.to_owned())
        .collect();
    subset.queries.retain(|q, _| keep.contains(q));
    subset.qrels.retain(|q, _| keep.contains(q));

    let dim = embedder.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut padded = store
        .documents()?
        .iter()
        .filter(|d| d.collection == PAD_COLLECTION)
        .count();
    let eval_opts = EvalOptions {
        cfg: opts.cfg.clone(),
        k: opts.k,
        ks: vec![10],
        label: "scale".into(),
        ..EvalOptions::default()
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &target in &sizes {
        let current = store.chunk_count()?;
        if target > current {
            pad(store, &mut rng, padded, target - current, dim)?;
            padded += target - current;
        }
        let n_chunks = store.chunk_count()?;
        let warm = SearchOptions::with_k(opts.k).read_only();
        for (_, text) in subset.judged_queries().into_iter().take(WARMUP_QUERIES) {
            search(store, embedder, text, &warm, &opts.cfg)?;
        }
        let run = run_eval(store, embedder, &subset, &eval_opts)?;
        rows.push(ScaleRow {
            n_chunks,
            dim,
            queries: run.report.queries,
            latency_ms: run.report.latency_ms,
            ndcg_at_10: run.report.ndcg(10),
            provenance: format!(
                "{} fixture docs + {padded} seeded distractors (seed {}), embedder {}",
                bundle.corpus.len(),
                opts.seed,
                embedder.model_id()
            ),
        });
    }
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.ndcg_at_10), hi.max(r.ndcg_at_10))
    });
    Ok(ScaleReport { rows, ndcg_drift: hi - lo })
}
