//! Energy scores and the thresholded OOD detector. A node's energy is the
//! negative logsumexp of its class logits; low energy means the node looks
//! like training data.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{LectError, Result};

/// Numerically stabilized `-logsumexp(logits)`.
pub fn energy(logits: ArrayView1<f64>) -> Result<f64> {
    if logits.is_empty() {
        return Err(LectError::Metric("energy of empty logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    Ok(-(max + sum.ln()))
}

/// Per-node energies for a whole logits matrix.
pub fn energies(logits: &Array2<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(logits.nrows());
    for (i, row) in logits.rows().into_iter().enumerate() {
        out[i] = energy(row)?;
    }
    Ok(out)
}

/// Gradient of the energy with respect to the logits row:
/// `dE/dz_c = -softmax(z)_c`.
pub fn energy_grad(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Array1<f64> = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp.mapv(|e| -e / sum)
}

/// Energy threshold detector: energy <= tau is IND, energy > tau is OOD.
/// The boundary goes to IND.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Detector {
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Ind,
    Ood,
}

impl Detector {
    pub fn decide(&self, energy: f64) -> Decision {
        if energy <= self.tau {
            Decision::Ind
        } else {
            Decision::Ood
        }
    }
}

/// Per-node decisions for an energy vector.
pub fn detect(energies: &Array1<f64>, detector: &Detector) -> Vec<Decision> {
    energies.iter().map(|&e| detector.decide(e)).collect()
}

/// Calibrate tau as the smallest IND validation energy at which the
/// fraction of IND energies <= tau reaches `target_tpr` (empirical
/// quantile, no interpolation).
pub fn calibrate_tau(ind_val_energies: &[f64], target_tpr: f64) -> Result<f64> {
    if ind_val_energies.is_empty() {
        return Err(LectError::Metric("calibrate_tau on empty energies".into()));
    }
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(LectError::Metric("target_tpr must be in (0, 1]".into()));
    }
    let mut sorted = ind_val_energies.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = ((target_tpr * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[k - 1])
}

/// One row of the energy dump CSV.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyRecord {
    pub node_id: usize,
    pub is_pseudo: bool,
    pub split: String,
    pub energy: f64,
    pub decision: Decision,
}

/// Write the `node_id,is_pseudo,split,energy,decision` CSV dump.
pub fn write_energy_csv(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "node_id,is_pseudo,split,energy,decision")?;
    for r in records {
        let decision = match r.decision {
            Decision::Ind => "ind",
            Decision::Ood => "ood",
        };
        writeln!(f, "{},{},{},{},{}", r.node_id, r.is_pseudo, r.split, r.energy, decision)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_energy_is_minus_ln_c() {
        let e = energy(array![0.0, 0.0, 0.0, 0.0].view()).unwrap();
        assert!((e + 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_class_energy_is_negated_logit() {
        let e = energy(array![2.75].view()).unwrap();
        assert!((e + 2.75).abs() < 1e-15);
    }

    #[test]
    fn dominant_logit_matches_direct_summation() {
        // direct oracle at f64: -ln(e^10 + 2)
        let direct = -((10.0f64.exp() + 2.0).ln());
        let e = energy(array![10.0, 0.0, 0.0].view()).unwrap();
        assert!((e - direct).abs() < 1e-9);
        assert!((e + 10.000090795737467).abs() < 1e-9);
    }

    #[test]
    fn energy_does_not_overflow_on_huge_logits() {
        let e = energy(array![1e300, 1e300].view()).unwrap();
        assert!(e.is_finite());
    }

    #[test]
    fn shift_identity() {
        let z = array![1.0, -2.0, 0.5];
        let base = energy(z.view()).unwrap();
        let shifted = energy(z.mapv(|x| x + 3.25).view()).unwrap();
        assert!((shifted - (base - 3.25)).abs() < 1e-12);
    }

    #[test]
    fn energy_grad_is_negative_softmax() {
        let z = array![1.0, 2.0, 3.0];
        let g = energy_grad(z.view());
        let sum: f64 = z.iter().map(|x| x.exp()).sum();
        for (i, &zi) in z.iter().enumerate() {
            assert!((g[i] + zi.exp() / sum).abs() < 1e-12);
        }
        // rows sum to -1
        assert!((g.sum() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_logits_error() {
        assert!(energy(Array1::<f64>::zeros(0).view()).is_err());
    }

    #[test]
    fn tau_quantiles() {
        assert_eq!(calibrate_tau(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.95).unwrap(), 5.0);
        assert_eq!(
            calibrate_tau(&[1., 2., 3., 4., 5., 6., 7., 8., 9., 10.], 0.9).unwrap(),
            9.0
        );
        assert_eq!(calibrate_tau(&[2.5, 2.5, 2.5], 0.5).unwrap(), 2.5);
        assert!(calibrate_tau(&[], 0.95).is_err());
    }

    #[test]
    fn boundary_goes_to_ind() {
        let det = Detector { tau: 1.5 };
        assert_eq!(det.decide(1.5), Decision::Ind);
        assert_eq!(det.decide(1.5 + 1e-12), Decision::Ood);
    }

    #[test]
    fn infinite_tau_limits() {
        let e = array![-3.0, 0.0, 7.0];
        let all_ind = detect(&e, &Detector { tau: f64::INFINITY });
        assert!(all_ind.iter().all(|d| *d == Decision::Ind));
        let all_ood = detect(&e, &Detector { tau: f64::NEG_INFINITY });
        assert!(all_ood.iter().all(|d| *d == Decision::Ood));
    }

    #[test]
    fn decision_invariant_under_shift() {
        let e = array![-3.0, 0.5, 2.0];
        let base = detect(&e, &Detector { tau: 0.5 });
        let shifted = detect(&e.mapv(|x| x + 10.0), &Detector { tau: 10.5 });
        assert_eq!(base, shifted);
    }
}
