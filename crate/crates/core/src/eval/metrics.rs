use serde::Serialize;

use super::QueryQrels;

fn grade(qrels: &QueryQrels, doc: &str) -> u32 {
    qrels.get(doc).copied().unwrap_or(0)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// NDCG@k with gain `2^grade - 1` and `log2(i + 1)` discount. Zero when
/// the query has no positive judgment.
pub fn ndcg_at_k(ranked: &[String], qrels: &QueryQrels, k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(grade(qrels, d)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = qrels.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Fraction of the top `k` slots holding a document with grade > 0.
pub fn precision_at_k(ranked: &[String], qrels: &QueryQrels, k: usize) -> f64 {
    let hits = ranked.iter().take(k).filter(|d| grade(qrels, d) > 0).count();
    hits as f64 / k as f64
}

/// Reciprocal rank of the first document with grade > 0.
pub fn mrr(ranked: &[String], qrels: &QueryQrels) -> f64 {
    ranked
        .iter()
        .position(|d| grade(qrels, d) > 0)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencyPercentiles {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl LatencyPercentiles {
    pub fn from_samples(samples: &[f64]) -> Self {
        Self {
            p50: percentile(samples, 50.0),
            p95: percentile(samples, 95.0),
            p99: percentile(samples, 99.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(pairs: &[(&str, u32)]) -> QueryQrels {
        pairs.iter().map(|&(d, g)| (d.to_owned(), g)).collect()
    }

    fn r(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_computed_ndcg() {
        let qrels = q(&[("a", 1)]);
        assert_eq!(ndcg_at_k(&r(&["a", "b"]), &qrels, 2), 1.0);
        assert_eq!(ndcg_at_k(&r(&["b", "a"]), &qrels, 2), 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&r(&["b", "a"]), &qrels, 2) - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&r(&["b", "c"]), &qrels, 2), 0.0);
        assert_eq!(ndcg_at_k(&r(&["a"]), &q(&[("a", 0)]), 2), 0.0);
    }

    #[test]
    fn precision_and_mrr() {
        let qrels = q(&[("a", 1), ("c", 2)]);
        assert_eq!(precision_at_k(&r(&["a", "b", "c"]), &qrels, 3), 2.0 / 3.0);
        assert_eq!(mrr(&r(&["x", "y", "c"]), &qrels), 1.0 / 3.0);
        assert_eq!(precision_at_k(&r(&["x"]), &qrels, 1), 0.0);
        assert_eq!(mrr(&r(&["x"]), &qrels), 0.0);
    }

    #[test]
    fn nearest_rank_percentiles() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&s, 50.0), 50.0);
        assert_eq!(percentile(&s, 99.0), 99.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
        let p = LatencyPercentiles::from_samples(&[5.0, 1.0, 9.0]);
        assert!(p.p50 <= p.p95 && p.p95 <= p.p99);
    }
}
