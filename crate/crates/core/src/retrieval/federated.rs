use std::collections::HashMap;

use serde::Serialize;

use super::{search, FusionConfig, RelevanceTier, SearchOptions};
use crate::embedder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::store::{ChunkId, DocId, Store};

pub struct Profile<'a> {
    pub name: String,
    pub store: &'a Store,
    pub embedder: &'a dyn EmbeddingProvider,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FederatedHit {
    pub profile: String,
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FederatedResult {
    pub content_digest: String,
    pub score: f64,
    pub tier: RelevanceTier,
    pub context: String,
    pub hits: Vec<FederatedHit>,
}

/// Searches every profile independently and merges by RRF over the
/// per-profile ranks, keyed by content digest. Identical chunk text found
/// in several profiles fuses into one result that accumulates each
/// profile's `1 / (k + rank)` term. Empty profiles are skipped.
pub fn federated_search(
    profiles: &[Profile<'_>],
    query: &str,
    opts: &SearchOptions,
    cfg: &FusionConfig,
) -> Result<Vec<FederatedResult>> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("federated search needs at least one profile".into()));
    }
    let k = f64::from(cfg.rrf_k);
    let mut merged: HashMap<String, FederatedResult> = HashMap::new();
    let mut searched = 0;
    for profile in profiles {
        let response = match search(profile.store, profile.embedder, query, opts, cfg) {
            Ok(r) => r,
            Err(Error::EmptyStore) => continue,
            Err(e) => return Err(e),
        };
        searched += 1;
        let ids: Vec<ChunkId> = response.results.iter().map(|r| r.chunk_id).collect();
        let records = profile.store.get_chunks(&ids)?;
        let digests: HashMap<ChunkId, String> = records
            .records
            .into_iter()
            .map(|r| (r.chunk_id, r.content_digest))
            .collect();
        for (i, result) in response.results.into_iter().enumerate() {
            let digest = digests
                .get(&result.chunk_id)
                .cloned()
                .ok_or(Error::MissingChunk(result.chunk_id))?;
            let entry = merged.entry(digest.clone()).or_insert_with(|| FederatedResult {
                content_digest: digest,
                score: 0.0,
                tier: result.tier,
                context: result.context_text.clone(),
                hits: Vec::new(),
            });
            entry.score += 1.0 / (k + (i + 1) as f64);
            entry.tier = entry.tier.min(result.tier);
            entry.hits.push(FederatedHit {
                profile: profile.name.clone(),
                chunk_id: result.chunk_id,
                doc_id: result.doc_id,
                rank: i + 1,
            });
        }
    }
    if searched == 0 {
        return Err(Error::EmptyStore);
    }
    let mut out: Vec<FederatedResult> = merged.into_values().collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.content_digest.cmp(&b.content_digest)));
    out.truncate(opts.k);
    Ok(out)
}
