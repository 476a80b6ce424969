use crate::embedder::dot;
use crate::store::{ChunkId, DocId};

#[derive(Debug, Clone, Copy)]
pub struct MmrCandidate<'a> {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub score: f64,
    /// Empty when the chunk has no stored vector; it then never counts as
    /// similar to anything.
    pub vector: &'a [f32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmrStop {
    /// Every candidate was selected.
    Exhausted,
    /// `k` results were selected.
    ReachedK,
    /// The best remaining MMR value was negative.
    NegativeMmr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmrOutcome {
    /// Indices into the input, in selection order.
    pub selected: Vec<usize>,
    pub stop: MmrStop,
}

/// Greedy intra-document maximal marginal relevance.
///
/// Scores are min-max normalized over the pool (a constant pool normalizes
/// to 1). The redundancy penalty only counts already-selected chunks of the
/// same document, so chunks of different documents compete on score alone.
/// Selection halts once the best remaining MMR value is negative. Ties go to
/// the lower chunk id.
pub fn mmr_dedup(candidates: &[MmrCandidate<'_>], lambda: f64, k: usize) -> MmrOutcome {
    let (lo, hi) = candidates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c.score), hi.max(c.score))
    });
    let norm: Vec<f64> = candidates
        .iter()
        .map(|c| if hi > lo { (c.score - lo) / (hi - lo) } else { 1.0 })
        .collect();
    // max similarity to a selected same-doc chunk, per candidate
    let mut penalty = vec![0.0f64; candidates.len()];
    let mut taken = vec![false; candidates.len()];
    let mut selected = Vec::with_capacity(k.min(candidates.len()));

    loop {
        if selected.len() == candidates.len() {
            return MmrOutcome { selected, stop: MmrStop::Exhausted };
        }
        if selected.len() >= k {
            return MmrOutcome { selected, stop: MmrStop::ReachedK };
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let value = lambda * norm[i] - (1.0 - lambda) * penalty[i];
            let better = match best {
                None => true,
                Some((j, v)) => value > v || (value == v && c.chunk_id < candidates[j].chunk_id),
            };
            if better {
                best = Some((i, value));
            }
        }
        let (pick, value) = best.expect("unselected candidate exists");
        if value < 0.0 {
            return MmrOutcome { selected, stop: MmrStop::NegativeMmr };
        }
        taken[pick] = true;
        selected.push(pick);
        let chosen = &candidates[pick];
        for (i, c) in candidates.iter().enumerate() {
            if !taken[i] && c.doc_id == chosen.doc_id && c.vector.len() == chosen.vector.len() {
                let sim = f64::from(dot(c.vector, chosen.vector));
                penalty[i] = penalty[i].max(sim);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::Embedding;

    #[test]
    fn distinct_documents_follow_score_order() {
        let v: Vec<Embedding> = (0..4).map(|i| Embedding::basis(8, i)).collect();
        let c: Vec<MmrCandidate> = (0..4)
            .map(|i| MmrCandidate {
                chunk_id: i as ChunkId,
                doc_id: i as DocId,
                score: 1.0 - i as f64 * 0.1,
                vector: v[i].as_slice(),
            })
            .collect();
        let out = mmr_dedup(&c, 0.5, 10);
        assert_eq!(out.selected, vec![0, 1, 2, 3]);
        assert_eq!(out.stop, MmrStop::Exhausted);
        assert_eq!(mmr_dedup(&c, 0.5, 2).stop, MmrStop::ReachedK);
    }

    #[test]
    fn duplicate_below_the_leader_stops_selection() {
        let e = Embedding::basis(8, 0);
        let mk = |id, score| MmrCandidate {
            chunk_id: id,
            doc_id: 1,
            score,
            vector: e.as_slice(),
        };
        // norms 1.0, 0.9, 0.0; the 0.9 duplicate scores 0.45 - 0.5 = -0.05
        let c = [mk(1, 1.0), mk(2, 0.9), mk(3, 0.0)];
        let out = mmr_dedup(&c, 0.5, 5);
        assert_eq!(out.selected, vec![0]);
        assert_eq!(out.stop, MmrStop::NegativeMmr);
    }
}
