use std::collections::HashMap;

use super::{Elimination, FusionConfig, RankedCandidate};
use crate::store::ChunkId;

/// Weighted reciprocal rank fusion over two 1-based ranked lists.
///
/// A chunk missing from one list contributes only the other term. Output is
/// the union, by descending score, ties by ascending chunk id. A repeated id
/// within one list keeps its first (best) rank.
pub fn rrf_fuse(vec_list: &[ChunkId], fts_list: &[ChunkId], w_vec: f64, w_fts: f64, rrf_k: u32) -> Vec<RankedCandidate> {
    let k = f64::from(rrf_k);
    let mut by_id: HashMap<ChunkId, RankedCandidate> = HashMap::with_capacity(vec_list.len() + fts_list.len());
    let blank = |chunk_id| RankedCandidate {
        chunk_id,
        rank_vec: None,
        rank_fts: None,
        distance: None,
        rrf_score: 0.0,
        elimination: None,
    };
    for (i, &id) in vec_list.iter().enumerate() {
        let c = by_id.entry(id).or_insert_with(|| blank(id));
        c.rank_vec.get_or_insert(i + 1);
    }
    for (i, &id) in fts_list.iter().enumerate() {
        let c = by_id.entry(id).or_insert_with(|| blank(id));
        c.rank_fts.get_or_insert(i + 1);
    }
    let mut fused: Vec<RankedCandidate> = by_id
        .into_values()
        .map(|mut c| {
            let v = c.rank_vec.map_or(0.0, |r| w_vec / (k + r as f64));
            let f = c.rank_fts.map_or(0.0, |r| w_fts / (k + r as f64));
            c.rrf_score = v + f;
            c
        })
        .collect();
    fused.sort_by(|a, b| b.rrf_score.total_cmp(&a.rrf_score).then(a.chunk_id.cmp(&b.chunk_id)));
    fused
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-query `(w_vec, w_fts)` from the query's mean IDF. Rare vocabulary
/// shifts weight toward the lexical leg.
pub fn adaptive_weights(mean_idf: f64, cfg: &FusionConfig) -> (f64, f64) {
    let midpoint = cfg.sigmoid_midpoint.unwrap_or(0.0);
    let span = cfg.w_fts_max - cfg.w_fts_min;
    let w_fts = (cfg.w_fts_min + span * sigmoid(cfg.sigmoid_slope * (mean_idf - midpoint)))
        .clamp(cfg.w_fts_min, cfg.w_fts_max);
    (1.0 - w_fts, w_fts)
}

/// Strictly more than `long_query_words` words selects the long cutoff.
pub fn select_cutoff_multiplier(query_word_count: usize, cfg: &FusionConfig) -> f64 {
    if query_word_count > cfg.long_query_words {
        cfg.cutoff_long
    } else {
        cfg.cutoff_short
    }
}

/// Splits candidates into kept and dropped. A candidate is dropped when its
/// distance exceeds `multiplier` times the best distance present;
/// candidates without a distance are always kept. Order is preserved.
pub fn distance_cutoff_filter(candidates: Vec<RankedCandidate>, multiplier: f64) -> (Vec<RankedCandidate>, Vec<RankedCandidate>) {
    let best = candidates
        .iter()
        .filter_map(|c| c.distance)
        .min_by(f64::total_cmp);
    let Some(best) = best else {
        return (candidates, Vec::new());
    };
    let threshold = multiplier * best;
    let (mut kept, mut dropped) = (Vec::with_capacity(candidates.len()), Vec::new());
    for mut c in candidates {
        match c.distance {
            Some(d) if d > threshold => {
                c.elimination = Some(Elimination::DistanceCutoff);
                dropped.push(c);
            }
            _ => kept.push(c),
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_distance(id: ChunkId, d: Option<f64>) -> RankedCandidate {
        RankedCandidate {
            chunk_id: id,
            rank_vec: d.map(|_| 1),
            rank_fts: None,
            distance: d,
            rrf_score: 0.0,
            elimination: None,
        }
    }

    #[test]
    fn hand_evaluated_rrf_scores() {
        let both = rrf_fuse(&[7], &[7], 0.6, 0.4, 60);
        assert!((both[0].rrf_score - 1.0 / 61.0).abs() < 1e-15);
        let vec_only = rrf_fuse(&[7], &[], 0.6, 0.4, 60);
        assert!((vec_only[0].rrf_score - 0.6 / 61.0).abs() < 1e-15);
        assert_eq!(vec_only[0].rank_fts, None);
    }

    #[test]
    fn zero_fts_weight_keeps_vector_order() {
        let fused = rrf_fuse(&[5, 3, 9], &[9, 1], 1.0, 0.0, 60);
        let ids: Vec<_> = fused.iter().map(|c| c.chunk_id).collect();
        assert_eq!(&ids[..3], &[5, 3, 9]);
        assert_eq!(ids[3], 1);
        assert!(rrf_fuse(&[], &[], 0.6, 0.4, 60).is_empty());
    }

    #[test]
    fn adaptive_weight_landmarks() {
        let cfg = FusionConfig {
            sigmoid_midpoint: Some(2.0),
            ..FusionConfig::default()
        };
        let (v, f) = adaptive_weights(2.0, &cfg);
        assert!((f - 0.4).abs() < 1e-12 && (v - 0.6).abs() < 1e-12);
        let (_, f) = adaptive_weights(3.0, &cfg);
        assert!((f - (0.2 + 0.4 * sigmoid(1.0))).abs() < 1e-12);
        assert!((f - 0.4924).abs() < 1e-4);
        let (_, f) = adaptive_weights(1e6, &cfg);
        assert_eq!(f, 0.6);
    }

    #[test]
    fn cutoff_boundaries() {
        let cfg = FusionConfig::default();
        assert_eq!(select_cutoff_multiplier(10, &cfg), 1.15);
        assert_eq!(select_cutoff_multiplier(50, &cfg), 1.15);
        assert_eq!(select_cutoff_multiplier(51, &cfg), 5.0);

        let pool = || vec![with_distance(1, Some(0.50)), with_distance(2, Some(0.58)), with_distance(3, None)];
        let (kept, dropped) = distance_cutoff_filter(pool(), 1.15);
        assert_eq!(kept.iter().map(|c| c.chunk_id).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(dropped[0].elimination, Some(Elimination::DistanceCutoff));
        let (kept, dropped) = distance_cutoff_filter(pool(), 5.0);
        assert_eq!(kept.len(), 3);
        assert!(dropped.is_empty());
    }
}
