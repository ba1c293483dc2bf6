//! Pair/triplet sampling and the energy-contrastive training objective:
//! supervised cross-entropy plus a linked IND-OOD hinge, a triplet hinge
//! and a mean-energy gap constraint, with exact gradients back to the
//! logits.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{energies, energy_grad};
use crate::error::{LectError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Margin of the linked IND-OOD hinge.
    pub gamma: f64,
    /// Weight of the linked IND-OOD group.
    pub lambda1: f64,
    /// Weight of the triplet loss.
    pub lambda2: f64,
    /// Weight of the mean-energy constraint inside the lambda1 group.
    pub lambda_mean: f64,
    /// Margin of the mean-energy constraint.
    pub gamma_mean: f64,
    pub mean_constraint: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda1: 0.1,
            lambda2: 0.1,
            lambda_mean: 0.01,
            gamma_mean: 1.0,
            mean_constraint: true,
        }
    }
}

/// Uniform sample without replacement from the pseudo edge set, capped at
/// its size. `count = 0` yields the empty set.
pub fn sample_linked_pairs(
    e_o: &[(usize, usize)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    if e_o.is_empty() {
        return Err(LectError::InvalidConfig("no pseudo edges".into()));
    }
    let k = count.min(e_o.len());
    let picked = rand::seq::index::sample(rng, e_o.len(), k);
    Ok(picked.iter().map(|i| e_o[i]).collect())
}

/// Triplets (IND neighbor, IND center, pseudo neighbor): pick a pseudo edge
/// uniformly, then a training-IND neighbor of its center uniformly. Centers
/// with no IND neighbor contribute nothing; `count` is capped at the number
/// of distinct triples and duplicates are rejected.
pub fn sample_triplets(
    ind_edges: &[(usize, usize)],
    train_set: &BTreeSet<usize>,
    e_o: &[(usize, usize)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize, usize)>> {
    let mut ind_neighbors: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in ind_edges {
        if train_set.contains(&a) && train_set.contains(&b) {
            ind_neighbors.entry(a).or_default().push(b);
            ind_neighbors.entry(b).or_default().push(a);
        }
    }
    let eligible: Vec<(usize, usize)> = e_o
        .iter()
        .copied()
        .filter(|&(center, _)| ind_neighbors.contains_key(&center))
        .collect();
    if eligible.is_empty() {
        return Err(LectError::InvalidConfig(
            "no center node has both a training IND neighbor and a pseudo neighbor".into(),
        ));
    }
    let total: usize = eligible.iter().map(|(c, _)| ind_neighbors[c].len()).sum();
    let k = count.min(total);
    let mut out = Vec::with_capacity(k);
    let mut seen = BTreeSet::new();
    while out.len() < k {
        let (center, pseudo) = eligible[rng.random_range(0..eligible.len())];
        let nbrs = &ind_neighbors[&center];
        let ind = nbrs[rng.random_range(0..nbrs.len())];
        if seen.insert((ind, center, pseudo)) {
            out.push((ind, center, pseudo));
        }
    }
    Ok(out)
}

/// Mean hinge `max(0, gamma - (E_pseudo - E_ind))` over linked pairs, with
/// the gradient on the energy vector. Subgradient at the kink is 0.
pub fn loss_ind_ood(
    pairs: &[(usize, usize)],
    energy: &Array1<f64>,
    gamma: f64,
) -> Result<(f64, Array1<f64>)> {
    let mut grad = Array1::zeros(energy.len());
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let m = pairs.len() as f64;
    let mut total = 0.0;
    for &(i, j) in pairs {
        if i >= energy.len() || j >= energy.len() {
            return Err(LectError::DimMismatch(format!("pair ({i}, {j}) outside energy vector")));
        }
        let term = gamma - (energy[j] - energy[i]);
        if term > 0.0 {
            total += term;
            grad[i] += 1.0 / m;
            grad[j] -= 1.0 / m;
        }
    }
    Ok((total / m, grad))
}

/// Hinge on the gap between mean OOD and mean IND energy.
pub fn loss_mean_constraint(
    ind_nodes: &[usize],
    ood_nodes: &[usize],
    energy: &Array1<f64>,
    gamma_mean: f64,
) -> (f64, Array1<f64>) {
    let mut grad = Array1::zeros(energy.len());
    if ind_nodes.is_empty() || ood_nodes.is_empty() {
        return (0.0, grad);
    }
    let n_ind = ind_nodes.len() as f64;
    let n_ood = ood_nodes.len() as f64;
    let mean_ind: f64 = ind_nodes.iter().map(|&i| energy[i]).sum::<f64>() / n_ind;
    let mean_ood: f64 = ood_nodes.iter().map(|&i| energy[i]).sum::<f64>() / n_ood;
    let term = gamma_mean - (mean_ood - mean_ind);
    if term <= 0.0 {
        return (0.0, grad);
    }
    for &i in ind_nodes {
        grad[i] += 1.0 / n_ind;
    }
    for &j in ood_nodes {
        grad[j] -= 1.0 / n_ood;
    }
    (term, grad)
}

/// Mean triplet hinge `max(0, |E_i - E_c| - (E_j - E_c))`; the subgradient
/// of the absolute value at 0 is taken as 0.
pub fn loss_triplet(
    triplets: &[(usize, usize, usize)],
    energy: &Array1<f64>,
) -> Result<(f64, Array1<f64>)> {
    let mut grad = Array1::zeros(energy.len());
    if triplets.is_empty() {
        return Ok((0.0, grad));
    }
    let m = triplets.len() as f64;
    let mut total = 0.0;
    for &(i, c, j) in triplets {
        if i >= energy.len() || c >= energy.len() || j >= energy.len() {
            return Err(LectError::DimMismatch(format!(
                "triplet ({i}, {c}, {j}) outside energy vector"
            )));
        }
        let diff = energy[i] - energy[c];
        let term = diff.abs() - (energy[j] - energy[c]);
        if term > 0.0 {
            total += term;
            let s = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[i] += s / m;
            grad[c] += (1.0 - s) / m;
            grad[j] -= 1.0 / m;
        }
    }
    Ok((total / m, grad))
}

/// Mean cross-entropy over the training nodes, with gradient on the logits
/// matrix (zero rows elsewhere).
pub fn loss_supervised(
    logits: &Array2<f64>,
    train_nodes: &[usize],
    labels: &[u32],
) -> Result<(f64, Array2<f64>)> {
    if train_nodes.len() != labels.len() {
        return Err(LectError::DimMismatch("train nodes vs labels length".into()));
    }
    let mut grad = Array2::zeros(logits.raw_dim());
    if train_nodes.is_empty() {
        return Ok((0.0, grad));
    }
    let c = logits.ncols();
    let n = train_nodes.len() as f64;
    let mut total = 0.0;
    for (&node, &label) in train_nodes.iter().zip(labels) {
        if label as usize >= c {
            return Err(LectError::InvalidConfig(format!(
                "label {label} out of range [0, {c}) at node {node}"
            )));
        }
        let row = logits.row(node);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[label as usize];
        for k in 0..c {
            let p = (row[k] - max).exp() / sum;
            grad[[node, k]] += (p - if k == label as usize { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossComponents {
    pub l_sup: f64,
    pub l_pairs: f64,
    pub l_mean: f64,
    pub l_triplet: f64,
    pub l_total: f64,
}

/// Everything the per-step objective needs besides the logits.
pub struct ObjectiveInputs<'a> {
    pub train_nodes: &'a [usize],
    pub train_labels: &'a [u32],
    pub pairs: &'a [(usize, usize)],
    pub triplets: &'a [(usize, usize, usize)],
    /// Node sets for the mean-energy constraint (train IND vs pseudo OOD).
    pub mean_ind_nodes: &'a [usize],
    pub mean_ood_nodes: &'a [usize],
}

/// The full objective
/// `L_sup + lambda1 * (L_pairs + lambda_mean * L_mean) + lambda2 * L_triplet`
/// and its gradient on the logits. Energy-side gradients are chained
/// through `dE/dz = -softmax(z)`.
pub fn total_objective(
    logits: &Array2<f64>,
    inputs: &ObjectiveInputs,
    weights: &LossWeights,
) -> Result<(LossComponents, Array2<f64>)> {
    let (l_sup, mut grad_logits) =
        loss_supervised(logits, inputs.train_nodes, inputs.train_labels)?;

    let e = energies(logits)?;
    let (l_pairs, g_pairs) = if inputs.pairs.is_empty() {
        (0.0, Array1::zeros(e.len()))
    } else {
        loss_ind_ood(inputs.pairs, &e, weights.gamma)?
    };
    let (l_mean, g_mean) = if weights.mean_constraint {
        loss_mean_constraint(inputs.mean_ind_nodes, inputs.mean_ood_nodes, &e, weights.gamma_mean)
    } else {
        (0.0, Array1::zeros(e.len()))
    };
    let (l_triplet, g_triplet) = if inputs.triplets.is_empty() {
        (0.0, Array1::zeros(e.len()))
    } else {
        loss_triplet(inputs.triplets, &e)?
    };

    for (name, l) in
        [("l_sup", l_sup), ("l_pairs", l_pairs), ("l_mean", l_mean), ("l_triplet", l_triplet)]
    {
        if !l.is_finite() {
            return Err(LectError::NonFinite(format!("loss component {name}")));
        }
    }

    let grad_e = weights.lambda1 * (&g_pairs + &(weights.lambda_mean * &g_mean))
        + weights.lambda2 * &g_triplet;
    for (i, &ge) in grad_e.iter().enumerate() {
        if ge != 0.0 {
            let eg = energy_grad(logits.row(i));
            for k in 0..logits.ncols() {
                grad_logits[[i, k]] += ge * eg[k];
            }
        }
    }

    let l_total = l_sup
        + weights.lambda1 * (l_pairs + weights.lambda_mean * l_mean)
        + weights.lambda2 * l_triplet;
    Ok((LossComponents { l_sup, l_pairs, l_mean, l_triplet, l_total }, grad_logits))
}
