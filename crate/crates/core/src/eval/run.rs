use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use serde::Serialize;

use super::{mrr, ndcg_at_k, precision_at_k, EvalBundle, LatencyPercentiles};
use crate::chunker::{semantic_chunk, DEFAULT_MAX_TOKENS, DEFAULT_OVERLAP};
use crate::embedder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{search, FusionConfig, SearchMode, SearchOptions, SearchResult};
use crate::store::{DocId, NewChunk, NewDocument, SourceType, Store};

const INGEST_BATCH: usize = 128;

/// Chunks, embeds and stores every corpus document under `collection`,
/// using the BEIR doc id as source uri. Returns the number of documents.
pub fn ingest_bundle(store: &Store, embedder: &dyn EmbeddingProvider, bundle: &EvalBundle, collection: &str) -> Result<usize> {
    let mut batch = Vec::with_capacity(INGEST_BATCH);
    let mut count = 0;
    let docs: Vec<(&String, String)> = bundle.corpus.iter().map(|(id, d)| (id, d.full_text())).collect();
    for (id, text) in docs {
        let spans = match semantic_chunk(&text, DEFAULT_MAX_TOKENS, DEFAULT_OVERLAP) {
            Ok(s) => s,
            Err(Error::EmptyInput) => {
                log::warn!("skipping empty corpus document {id}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let texts: Vec<&str> = spans.iter().map(|s| s.text.as_str()).collect();
        let vectors = embedder.embed(&texts)?;
        let chunks: Vec<NewChunk> = spans.into_iter().map(NewChunk::from).collect();
        let meta = NewDocument {
            source_type: SourceType::Imported,
            ..NewDocument::new(id.clone(), collection)
        };
        batch.push((meta, chunks, vectors));
        if batch.len() == INGEST_BATCH {
            count += store.add_documents_batch(&batch)?.len();
            batch.clear();
        }
    }
    if !batch.is_empty() {
        count += store.add_documents_batch(&batch)?.len();
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub mode: SearchMode,
    pub cfg: FusionConfig,
    /// Chunk results requested per query.
    pub k: usize,
    /// Cutoffs for NDCG@k and P@k.
    pub ks: Vec<usize>,
    pub boost: f64,
    /// Restrict to documents of this collection.
    pub collection: Option<String>,
    pub label: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: SearchMode::Hybrid,
            cfg: FusionConfig::default(),
            k: 10,
            ks: vec![1, 3, 5, 10],
            boost: 0.0,
            collection: None,
            label: "eval".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub label: String,
    pub mode: SearchMode,
    pub queries: usize,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub precision_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub latency_ms: LatencyPercentiles,
}

impl MetricsReport {
    pub fn ndcg(&self, k: usize) -> f64 {
        self.ndcg_at.get(&k).copied().unwrap_or(f64::NAN)
    }

    /// The report without latency, for determinism comparisons.
    pub fn without_latency(&self) -> Self {
        Self {
            latency_ms: LatencyPercentiles::default(),
            ..self.clone()
        }
    }

    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>10}\n", "metric", self.label);
        for (k, v) in &self.ndcg_at {
            out.push_str(&format!("{:<12} {:>10.4}\n", format!("ndcg@{k}"), v));
        }
        for (k, v) in &self.precision_at {
            out.push_str(&format!("{:<12} {:>10.4}\n", format!("p@{k}"), v));
        }
        out.push_str(&format!("{:<12} {:>10.4}\n", "mrr", self.mrr));
        out.push_str(&format!("{:<12} {:>10}\n", "queries", self.queries));
        out.push_str(&format!("{:<12} {:>10.3}\n", "p50 ms", self.latency_ms.p50));
        out.push_str(&format!("{:<12} {:>10.3}\n", "p95 ms", self.latency_ms.p95));
        out.push_str(&format!("{:<12} {:>10.3}\n", "p99 ms", self.latency_ms.p99));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRun {
    pub query_id: String,
    /// BEIR doc ids, best chunk rank per document.
    pub ranked_docs: Vec<String>,
    pub results: Vec<SearchResult>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub per_query: Vec<QueryRun>,
}

pub(crate) fn doc_names(store: &Store, collection: Option<&str>) -> Result<HashMap<DocId, String>> {
    Ok(store
        .documents()?
        .into_iter()
        .filter(|d| collection.is_none_or(|c| d.collection == c))
        .map(|d| (d.doc_id, d.source_uri))
        .collect())
}

/// Max-pools chunk hits to documents, keeping first-seen order.
pub(crate) fn pool_docs(doc_ids: impl IntoIterator<Item = DocId>, names: &HashMap<DocId, String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut ranked = Vec::new();
    for d in doc_ids {
        if let Some(name) = names.get(&d) {
            if seen.insert(d) {
                ranked.push(name.clone());
            }
        }
    }
    ranked
}

/// Searches every judged query (telemetry off) and averages the metrics.
pub fn run_eval(store: &Store, embedder: &dyn EmbeddingProvider, bundle: &EvalBundle, opts: &EvalOptions) -> Result<EvalRun> {
    let queries = bundle.judged_queries();
    if queries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let names = doc_names(store, opts.collection.as_deref())?;
    let search_opts = SearchOptions {
        k: opts.k,
        mode: opts.mode,
        boost: opts.boost,
        ..SearchOptions::default()
    }
    .read_only();

    let mut per_query = Vec::with_capacity(queries.len());
    let mut ndcg: BTreeMap<usize, f64> = opts.ks.iter().map(|&k| (k, 0.0)).collect();
    let mut precision = ndcg.clone();
    let mut mrr_sum = 0.0;
    let mut latencies = Vec::with_capacity(queries.len());
    for (qid, text) in &queries {
        let started = Instant::now();
        let response = search(store, embedder, text, &search_opts, &opts.cfg)?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        latencies.push(latency_ms);
        let ranked_docs = pool_docs(response.results.iter().map(|r| r.doc_id), &names);
        let qrels = bundle.qrels_for(qid);
        for (&k, v) in ndcg.iter_mut() {
            *v += ndcg_at_k(&ranked_docs, &qrels, k);
        }
        for (&k, v) in precision.iter_mut() {
            *v += precision_at_k(&ranked_docs, &qrels, k);
        }
        mrr_sum += mrr(&ranked_docs, &qrels);
        per_query.push(QueryRun {
            query_id: qid.to_string(),
            ranked_docs,
            results: response.results,
            latency_ms,
        });
    }
    let n = queries.len() as f64;
    for v in ndcg.values_mut().chain(precision.values_mut()) {
        *v /= n;
    }
    Ok(EvalRun {
        report: MetricsReport {
            label: opts.label.clone(),
            mode: opts.mode,
            queries: queries.len(),
            ndcg_at: ndcg,
            precision_at: precision,
            mrr: mrr_sum / n,
            latency_ms: LatencyPercentiles::from_samples(&latencies),
        },
        per_query,
    })
}
