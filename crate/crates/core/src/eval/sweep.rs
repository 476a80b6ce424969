use serde::Serialize;

use crate::embedder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Highest F1; the first such threshold in input order wins ties.
    pub best: SweepRow,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion tables for "has relevant content iff best distance <
/// threshold", given best distances of on-topic and off-topic queries.
pub fn sweep_distances(on_topic: &[f64], off_topic: &[f64], thresholds: &[f64]) -> Result<SweepReport> {
    if on_topic.is_empty() || off_topic.is_empty() || thresholds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows: Vec<SweepRow> = thresholds
        .iter()
        .map(|&t| {
            let tp = on_topic.iter().filter(|&&d| d < t).count();
            let fp = off_topic.iter().filter(|&&d| d < t).count();
            let fn_ = on_topic.len() - tp;
            let tn = off_topic.len() - fp;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            SweepRow {
                threshold: t,
                true_positives: tp,
                false_positives: fp,
                true_negatives: tn,
                false_negatives: fn_,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let best = *rows
        .iter()
        .reduce(|best, r| if r.f1 > best.f1 { r } else { best })
        .expect("thresholds non-empty");
    Ok(SweepReport { rows, best })
}

/// Best vector distance of every query against the store, then
/// [`sweep_distances`].
pub fn relevance_sweep(
    store: &Store,
    embedder: &dyn EmbeddingProvider,
    on_topic: &[String],
    off_topic: &[String],
    thresholds: &[f64],
) -> Result<SweepReport> {
    let snap = store.snapshot()?;
    let best = |queries: &[String]| -> Result<Vec<f64>> {
        queries
            .iter()
            .map(|q| {
                let v = embedder.embed_one(q)?;
                Ok(snap.vectors.knn(&v, 1)?[0].1)
            })
            .collect()
    };
    sweep_distances(&best(on_topic)?, &best(off_topic)?, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_confusion() {
        let on = [0.40, 0.90, 0.97];
        let off = [0.93, 0.99, 1.02];
        let report = sweep_distances(&on, &off, &[0.95]).unwrap();
        let row = report.rows[0];
        assert_eq!((row.true_positives, row.false_negatives), (2, 1));
        assert_eq!((row.false_positives, row.true_negatives), (1, 2));
        assert_eq!(row.precision, 2.0 / 3.0);
        assert_eq!(row.recall, 2.0 / 3.0);
        assert!((row.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separable_pools_reach_f1_one() {
        let report = sweep_distances(&[0.2, 0.3], &[0.9, 1.0], &[0.1, 0.5, 0.95]).unwrap();
        assert_eq!(report.best.f1, 1.0);
        assert_eq!(report.best.threshold, 0.5);
        assert!(sweep_distances(&[], &[1.0], &[0.5]).is_err());
    }
}
