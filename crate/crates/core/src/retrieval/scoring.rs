use serde::{Deserialize, Serialize};

use super::RelevanceTier;

pub const RECENCY_RATE: f64 = 0.05;
pub const DEFAULT_SATURATION: u32 = 100;
pub const MATURITY_THRESHOLD: f64 = 8.0;
pub const MATURITY_CAP: f64 = 0.48;

/// `d <= 0.95` high, `d <= 0.98` medium, otherwise low.
pub fn relevance_tier(best_distance: f64) -> RelevanceTier {
    if best_distance <= 0.95 {
        RelevanceTier::High
    } else if best_distance <= 0.98 {
        RelevanceTier::Medium
    } else {
        RelevanceTier::Low
    }
}

/// `score * (1 + B * exp(-0.05 * days_ago))`; `B = 0` is the identity.
pub fn recency_boost(score: f64, days_ago: f64, boost: f64) -> f64 {
    if boost == 0.0 {
        return score;
    }
    score * (1.0 + boost * (-RECENCY_RATE * days_ago.max(0.0)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccessStats {
    pub access_count: u64,
    pub days_ago: f64,
}

/// Frequency-and-decay scorer kept off the default search path; it exists
/// so the evaluation harness can measure it against pure RRF.
///
/// `a * s + b * min(1, ln(1 + f) / ln(1 + S))` with
/// `f = (1 + access_count) * exp(-L * days_ago)`.
pub fn frequency_decay_score(s_rrf_norm: f64, stats: AccessStats, a: f64, b: f64, decay: f64, saturation: u32) -> f64 {
    let f = (1.0 + stats.access_count as f64) * (-decay * stats.days_ago).exp();
    let memory = ((1.0 + f).ln() / (1.0 + f64::from(saturation)).ln()).min(1.0);
    a * s_rrf_norm + b * memory
}

/// Gate on the memory weight: 0 until the access-count max/mean ratio
/// exceeds `threshold`, then rising linearly and capped at 0.48.
pub fn maturity_gate(access_counts: &[u64], threshold: f64) -> f64 {
    if access_counts.is_empty() {
        return 0.0;
    }
    let max = access_counts.iter().copied().max().unwrap_or(0) as f64;
    let mean = access_counts.iter().map(|&c| c as f64).sum::<f64>() / access_counts.len() as f64;
    let ratio = if mean > 0.0 { max / mean } else { 0.0 };
    if ratio <= threshold {
        0.0
    } else {
        ((ratio - threshold) / threshold * MATURITY_CAP).min(MATURITY_CAP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_boundaries_close_on_the_left() {
        let tiers: Vec<_> = [0.50, 0.95, 0.96, 0.98, 0.99].map(relevance_tier).to_vec();
        use RelevanceTier::*;
        assert_eq!(tiers, vec![High, High, Medium, Medium, Low]);
    }

    #[test]
    fn recency_landmarks() {
        assert_eq!(recency_boost(0.37, 3.0, 0.0), 0.37);
        assert!((recency_boost(0.01, 0.0, 0.2) - 0.012).abs() < 1e-15);
        assert!((recency_boost(0.01, 1e6, 0.2) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn frequency_decay_landmarks() {
        let saturated = AccessStats { access_count: 99, days_ago: 0.0 };
        assert!((frequency_decay_score(0.5, saturated, 0.7, 0.3, 0.05, 100) - (0.35 + 0.3)).abs() < 1e-12);
        let cold = AccessStats { access_count: 0, days_ago: 0.0 };
        let memory = frequency_decay_score(0.0, cold, 0.0, 1.0, 0.05, 100);
        assert!((memory - 2f64.ln() / 101f64.ln()).abs() < 1e-12);
        assert!((memory - 0.1502).abs() < 1e-4);
        assert_eq!(frequency_decay_score(0.4, saturated, 0.9, 0.0, 0.05, 100), 0.9 * 0.4);
    }

    #[test]
    fn maturity_gate_landmarks() {
        assert_eq!(maturity_gate(&[1, 1, 1, 1], MATURITY_THRESHOLD), 0.0);
        let mut skewed = vec![1u64; 99];
        skewed.push(100);
        assert_eq!(maturity_gate(&skewed, MATURITY_THRESHOLD), MATURITY_CAP);
        assert_eq!(maturity_gate(&[0, 0, 0], MATURITY_THRESHOLD), 0.0);
        // ratio exactly 5
        assert_eq!(maturity_gate(&[5, 0, 0, 0, 0], MATURITY_THRESHOLD), 0.0);
    }
}
