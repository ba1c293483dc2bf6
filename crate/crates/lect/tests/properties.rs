//! Property tests for the numeric core: encoder normalization, energy
//! identities, detector boundary behavior, threshold calibration and the
//! ranking metrics.

use lect::encode::hash_encode;
use lect::energy::{calibrate_tau, energy, Decision, Detector};
use lect::metrics::{auroc, ScoredSet};
use ndarray::Array1;
use proptest::prelude::*;

fn auroc_brute(s: &ScoredSet) -> f64 {
    let mut wins = 0.0;
    let mut total = 0.0;
    for (i, &oi) in s.is_ood.iter().enumerate() {
        if !oi {
            continue;
        }
        for (j, &oj) in s.is_ood.iter().enumerate() {
            if oj {
                continue;
            }
            total += 1.0;
            if s.scores[i] > s.scores[j] {
                wins += 1.0;
            } else if s.scores[i] == s.scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / total
}

proptest! {
    #[test]
    fn hash_encoding_norm_is_zero_or_one(text in ".{0,80}", dim in 1usize..64, seed in 0u64..1000) {
        let v = hash_encode(&text, dim, seed);
        prop_assert_eq!(v.len(), dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n.abs() < 1e-9 || (n - 1.0).abs() < 1e-9, "norm {}", n);
    }

    #[test]
    fn energy_shift_identity(
        logits in prop::collection::vec(-50.0f64..50.0, 1..8),
        c in -20.0f64..20.0,
    ) {
        let z = Array1::from_vec(logits);
        let base = energy(z.view()).unwrap();
        let shifted = energy(z.mapv(|x| x + c).view()).unwrap();
        prop_assert!((shifted - (base - c)).abs() < 1e-9);
    }

    #[test]
    fn energy_bounded_by_max_logit(logits in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        // -max(z) - ln(C) <= E <= -max(z)
        let z = Array1::from_vec(logits);
        let e = energy(z.view()).unwrap();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = z.len() as f64;
        prop_assert!(e <= -max + 1e-12);
        prop_assert!(e >= -max - c.ln() - 1e-12);
    }

    #[test]
    fn boundary_energy_is_ind(tau in -1e12f64..1e12) {
        let det = Detector { tau };
        prop_assert_eq!(det.decide(tau), Decision::Ind);
    }

    #[test]
    fn decisions_are_monotone_in_energy(
        tau in -100.0f64..100.0,
        e in -100.0f64..100.0,
    ) {
        let det = Detector { tau };
        match det.decide(e) {
            Decision::Ind => prop_assert!(e <= tau),
            Decision::Ood => prop_assert!(e > tau),
        }
    }

    #[test]
    fn calibrated_tau_accepts_at_least_tpr(
        energies in prop::collection::vec(-50.0f64..50.0, 1..40),
        tpr in 0.05f64..1.0,
    ) {
        let tau = calibrate_tau(&energies, tpr).unwrap();
        // tau is one of the observed energies
        prop_assert!(energies.iter().any(|&e| e == tau));
        let accepted = energies.iter().filter(|&&e| e <= tau).count() as f64;
        prop_assert!(accepted / energies.len() as f64 >= tpr - 1e-12);
    }

    #[test]
    fn auroc_agrees_with_pairwise_oracle(
        raw in prop::collection::vec((0u8..6, any::<bool>()), 2..12),
    ) {
        let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64).collect();
        let flags: Vec<bool> = raw.iter().map(|&(_, o)| o).collect();
        prop_assume!(flags.iter().any(|&o| o) && flags.iter().any(|&o| !o));
        let s = ScoredSet::new(scores, flags).unwrap();
        prop_assert!((auroc(&s).unwrap() - auroc_brute(&s)).abs() < 1e-12);
    }

    #[test]
    fn auroc_flipping_labels_complements(
        raw in prop::collection::vec((0u8..6, any::<bool>()), 2..12),
    ) {
        let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64).collect();
        let flags: Vec<bool> = raw.iter().map(|&(_, o)| o).collect();
        prop_assume!(flags.iter().any(|&o| o) && flags.iter().any(|&o| !o));
        let s = ScoredSet::new(scores.clone(), flags.clone()).unwrap();
        let flipped = ScoredSet::new(scores, flags.iter().map(|&o| !o).collect()).unwrap();
        prop_assert!((auroc(&s).unwrap() + auroc(&flipped).unwrap() - 1.0).abs() < 1e-12);
    }
}
