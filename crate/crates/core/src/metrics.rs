//! Scale-invariant SDR and permutation-resolved scoring.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// SI-SDR values are clipped to `[-SI_SDR_CAP, SI_SDR_CAP]` dB.
pub const SI_SDR_CAP: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("length mismatch: estimate {estimate}, reference {reference}")]
    LengthMismatch { estimate: usize, reference: usize },
    #[error("{estimates} estimates for {references} references")]
    CountMismatch { estimates: usize, references: usize },
}

/// `10 log10(‖αs‖² / ‖αs - ŝ‖²)` with `α = ⟨ŝ, s⟩ / ‖s‖²`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64, MetricError> {
    if estimate.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            estimate: estimate.len(),
            reference: reference.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(a, b)| a * b).sum();
    let alpha = dot / ref_energy;
    let target = alpha * alpha * ref_energy;
    let err: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, s)| (alpha * s - e).powi(2))
        .sum();
    let db = 10.0 * (target / err).log10();
    Ok(if db.is_nan() {
        -SI_SDR_CAP
    } else {
        db.clamp(-SI_SDR_CAP, SI_SDR_CAP)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub si_sdr: f64,
    pub assigned_reference: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Indexed by estimate.
    pub per_source: Vec<SourceScore>,
    pub mean_si_sdr: f64,
    /// Mean SI-SDR of the unprocessed mixture against the references.
    pub input_si_sdr: Option<f64>,
}

impl MetricReport {
    pub fn improvement(&self) -> Option<f64> {
        self.input_si_sdr.map(|i| self.mean_si_sdr - i)
    }
}

/// Scores every estimate/reference assignment exhaustively and keeps the
/// one with the highest mean SI-SDR (first found on ties).
pub fn permutation_si_sdr(
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
) -> Result<MetricReport, MetricError> {
    if estimates.len() != references.len() || estimates.is_empty() {
        return Err(MetricError::CountMismatch {
            estimates: estimates.len(),
            references: references.len(),
        });
    }
    let n = estimates.len();
    let mut table = vec![0.0; n * n];
    for (i, e) in estimates.iter().enumerate() {
        for (j, r) in references.iter().enumerate() {
            table[i * n + j] = si_sdr(e, r)?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..n).permutations(n) {
        let mean = perm.iter().enumerate().map(|(i, &j)| table[i * n + j]).sum::<f64>() / n as f64;
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, perm));
        }
    }
    let (mean, perm) = best.expect("at least one permutation");
    Ok(MetricReport {
        per_source: perm
            .iter()
            .enumerate()
            .map(|(i, &j)| SourceScore {
                si_sdr: table[i * n + j],
                assigned_reference: j,
            })
            .collect(),
        mean_si_sdr: mean,
        input_si_sdr: None,
    })
}

/// Mean SI-SDR of one mixture channel against every reference.
pub fn input_si_sdr(mixture: &[f64], references: &[Vec<f64>]) -> Result<f64, MetricError> {
    let mut acc = 0.0;
    for r in references {
        acc += si_sdr(mixture, r)?;
    }
    Ok(acc / references.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn perfect_and_scaled_hit_the_cap() {
        let s = noise(100, 1);
        assert_eq!(si_sdr(&s, &s).unwrap(), 100.0);
        let twice: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&twice, &s).unwrap(), 100.0);
    }

    #[test]
    fn orthogonal_noise_at_tenth_power_is_10_db() {
        let s = vec![1.0, 1.0, 0.0, 0.0];
        // ‖s‖² = 2; noise orthogonal with ‖n‖² = 0.2
        let n = [0.0, 0.0, 0.1f64.sqrt(), 0.1f64.sqrt()];
        let e: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + b).collect();
        assert!((si_sdr(&e, &s).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(si_sdr(&[1.0], &[0.0]), Err(MetricError::ZeroReference));
        assert!(si_sdr(&[1.0], &[1.0, 2.0]).is_err());
        assert!(permutation_si_sdr(&[vec![1.0]], &[]).is_err());
    }

    #[test]
    fn swapped_order_recovered() {
        let a = noise(64, 2);
        let b = noise(64, 3);
        let r = permutation_si_sdr(&[b.clone(), a.clone()], &[a, b]).unwrap();
        assert_eq!(r.per_source[0].assigned_reference, 1);
        assert_eq!(r.per_source[1].assigned_reference, 0);
        assert_eq!(r.mean_si_sdr, 100.0);
    }

    #[test]
    fn single_source_reduces_to_si_sdr() {
        let a = noise(50, 4);
        let b = noise(50, 5);
        let r = permutation_si_sdr(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
        assert_eq!(r.mean_si_sdr, si_sdr(&a, &b).unwrap());
    }

    #[test]
    fn matches_brute_force() {
        let refs: Vec<Vec<f64>> = (0..3).map(|i| noise(40, 10 + i)).collect();
        let ests: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let n = noise(40, 20 + i);
                refs[(i as usize + 1) % 3].iter().zip(&n).map(|(a, b)| a + 0.5 * b).collect()
            })
            .collect();
        let r = permutation_si_sdr(&ests, &refs).unwrap();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| si_sdr(&ests[i], &refs[p[i]]).unwrap()).sum::<f64>() / 3.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((r.mean_si_sdr - best).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sign_and_scale_invariant(seed in 0u64..1000, c in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64]) {
            let s = noise(32, seed);
            let e: Vec<f64> = s.iter().zip(noise(32, seed + 7)).map(|(a, b)| a + 0.3 * b).collect();
            let scaled: Vec<f64> = e.iter().map(|v| v * c).collect();
            prop_assert!((si_sdr(&e, &s).unwrap() - si_sdr(&scaled, &s).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn reordering_estimates_keeps_score(seed in 0u64..500) {
            let refs: Vec<Vec<f64>> = (0..3).map(|i| noise(24, seed * 3 + i)).collect();
            let ests: Vec<Vec<f64>> = (0..3).map(|i| noise(24, seed * 3 + 100 + i)).collect();
            let a = permutation_si_sdr(&ests, &refs).unwrap();
            let rev: Vec<Vec<f64>> = ests.iter().rev().cloned().collect();
            let b = permutation_si_sdr(&rev, &refs).unwrap();
            prop_assert!((a.mean_si_sdr - b.mean_si_sdr).abs() < 1e-12);
            for i in 0..3 {
                prop_assert_eq!(a.per_source[i].assigned_reference, b.per_source[2 - i].assigned_reference);
            }
        }
    }
}
