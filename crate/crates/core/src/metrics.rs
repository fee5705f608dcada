//! Evaluation metrics: un-service counts, the decreased un-service ratio,
//! and KL divergence between bike distributions.

use crate::scalar::Real;
use crate::sim::{EpisodeLog, SimConfig, SimError, Simulator};
use crate::types::PriceAction;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("baseline un-service count is zero")]
    ZeroBaseline,
    #[error("census dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("census totals must be positive")]
    EmptyCensus,
}

/// Decreased un-service ratio in percent:
/// `(UN_baseline − UN_algorithm) / UN_baseline × 100`.
///
/// Negative when the algorithm is worse than the baseline.
pub fn dur(un_baseline: u64, un_algorithm: u64) -> Result<f64, MetricError> {
    if un_baseline == 0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok((un_baseline as f64 - un_algorithm as f64) / un_baseline as f64 * 100.0)
}

/// Additive smoothing applied to zero cells before the divergence.
const KL_EPSILON: f64 = 1e-9;

/// KL divergence `D(begin ‖ end)` in nats between two bike censuses.
///
/// Counts are normalized to distributions; cells where either side is zero
/// get `ε = 1e-9` added on that side, then both are renormalized, so the
/// result is finite and nonnegative.
pub fn kl_divergence<F: Real>(p_begin: &[u32], q_end: &[u32]) -> Result<F, MetricError> {
    if p_begin.len() != q_end.len() {
        return Err(MetricError::DimensionMismatch(p_begin.len(), q_end.len()));
    }
    let p_total: u64 = p_begin.iter().map(|&c| c as u64).sum();
    let q_total: u64 = q_end.iter().map(|&c| c as u64).sum();
    if p_total == 0 || q_total == 0 {
        return Err(MetricError::EmptyCensus);
    }
    let mut p: Vec<f64> = p_begin.iter().map(|&c| c as f64 / p_total as f64).collect();
    let mut q: Vec<f64> = q_end.iter().map(|&c| c as f64 / q_total as f64).collect();
    for i in 0..p.len() {
        if p[i] == 0.0 {
            p[i] = KL_EPSILON;
        }
        if q[i] == 0.0 {
            q[i] = KL_EPSILON;
        }
    }
    let p_sum: f64 = p.iter().sum();
    let q_sum: f64 = q.iter().sum();
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(&q) {
        let pi = pi / p_sum;
        let qi = qi / q_sum;
        kl += pi * (pi / qi).ln();
    }
    Ok(F::from_f64_lit(kl.max(0.0)))
}

/// Un-service events over a completed episode.
pub fn unservice_count(log: &EpisodeLog) -> u64 {
    log.total_unsatisfied()
}

/// Simulate the original system — the all-zero price action on the same
/// config and seed — and return its log. All agents in one comparison share
/// this baseline per (config, seed).
pub fn baseline_run(config: &SimConfig) -> Result<EpisodeLog, SimError> {
    let mut sim = Simulator::new(config.clone())?;
    let zero = PriceAction::zeros(config.grid.len());
    while !sim.is_done() {
        sim.step(&zero)?;
    }
    Ok(sim.log().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dur_matches_definition() {
        assert_eq!(dur(100, 40).unwrap(), 60.0);
        assert_eq!(dur(100, 100).unwrap(), 0.0);
        assert!(dur(100, 150).unwrap() < 0.0);
        assert!(matches!(dur(0, 5), Err(MetricError::ZeroBaseline)));
    }

    #[test]
    fn kl_of_identical_censuses_is_zero() {
        let kl: f64 = kl_divergence(&[3, 5, 2], &[3, 5, 2]).unwrap();
        assert!(kl.abs() < 1e-12);
        // scale-invariant: same distribution, different totals
        let kl: f64 = kl_divergence(&[3, 5, 2], &[6, 10, 4]).unwrap();
        assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn kl_two_region_hand_value() {
        // p = (0.5, 0.5), q = (0.25, 0.75):
        // 0.5·ln(0.5/0.25) + 0.5·ln(0.5/0.75) = 0.5·ln 2 + 0.5·ln(2/3)
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        let kl: f64 = kl_divergence(&[2, 2], &[1, 3]).unwrap();
        assert!((kl - expected).abs() < 1e-9, "kl {kl} vs {expected}");
        assert!((kl - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn kl_handles_zero_cells() {
        let kl: f64 = kl_divergence(&[4, 0], &[2, 2]).unwrap();
        assert!(kl.is_finite() && kl >= 0.0);
        let kl: f64 = kl_divergence(&[2, 2], &[4, 0]).unwrap();
        assert!(kl.is_finite() && kl >= 0.0);
    }

    #[test]
    fn kl_rejects_bad_inputs() {
        assert!(kl_divergence::<f64>(&[1, 2], &[1, 2, 3]).is_err());
        assert!(kl_divergence::<f64>(&[0, 0], &[1, 2]).is_err());
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(p in proptest::collection::vec(0u32..50, 2..12), seed in 0u64..100) {
            prop_assume!(p.iter().sum::<u32>() > 0);
            // derive q from p with a deterministic shuffle-ish tweak
            let mut q = p.clone();
            let shift = (seed as usize) % q.len();
            q.rotate_left(shift);
            q[0] += (seed % 7) as u32;
            prop_assume!(q.iter().sum::<u32>() > 0);
            let kl: f64 = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
        }

        #[test]
        fn dur_is_antitone_in_algorithm_unservice(base in 1u64..1000, a in 0u64..1000, b in 0u64..1000) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(dur(base, lo).unwrap() >= dur(base, hi).unwrap());
        }
    }
}
