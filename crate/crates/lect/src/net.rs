//! The trainable model: affine projector followed by a two-layer graph
//! convolution with batch normalization, ReLU and dropout, plus exact
//! reverse-mode gradients and an Adam optimizer. All training math is f64.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LectError, Result};
use crate::graph::CsrMatrix;
use crate::seeds;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub proj_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        Self { in_dim, proj_dim: 128, hidden_dim: 64, out_dim, dropout: 0.5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.proj_dim == 0 || self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(LectError::InvalidConfig("model dims must all be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LectError::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Trainable state: projector, two convolution layers, batch-norm affine
/// parameters plus (non-trainable) running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub bn_running_mean: Array1<f64>,
    pub bn_running_var: Array1<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, identity batch norm; seeded.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "init"));
        Ok(Self {
            w_proj: glorot(&mut rng, cfg.in_dim, cfg.proj_dim),
            b_proj: Array1::zeros(cfg.proj_dim),
            w1: glorot(&mut rng, cfg.proj_dim, cfg.hidden_dim),
            b1: Array1::zeros(cfg.hidden_dim),
            w2: glorot(&mut rng, cfg.hidden_dim, cfg.out_dim),
            b2: Array1::zeros(cfg.out_dim),
            bn_gamma: Array1::ones(cfg.hidden_dim),
            bn_beta: Array1::zeros(cfg.hidden_dim),
            bn_running_mean: Array1::zeros(cfg.hidden_dim),
            bn_running_var: Array1::ones(cfg.hidden_dim),
        })
    }

    /// Flatten every trainable scalar (weights, biases, BN affine) into one
    /// vector; used by finite-difference checks and the checkpoint format.
    pub fn flatten_trainable(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w_proj.iter());
        out.extend(self.b_proj.iter());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.bn_gamma.iter());
        out.extend(self.bn_beta.iter());
        out
    }

}

/// Gradients for every trainable tensor.
#[derive(Debug, Clone)]
pub struct Grads {
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
}

impl Grads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w_proj.iter());
        out.extend(self.b_proj.iter());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.bn_gamma.iter());
        out.extend(self.bn_beta.iter());
        out
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Cached activations from one forward pass, sufficient for exact
/// backpropagation through the traced computation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    h: Array2<f64>,
    ah: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
    relu_mask: Array2<f64>,
    dropout_mask: Option<Array2<f64>>,
    ad: Array2<f64>,
}

fn check_finite(name: &str, m: &Array2<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LectError::NonFinite(name.to_string()));
    }
    Ok(())
}

/// One forward pass over the whole graph.
///
/// Train mode uses batch statistics for the normalization and applies
/// inverted dropout from `rng`; eval mode uses running statistics, no
/// dropout, and is a deterministic function of (params, inputs). Running
/// statistics are NOT updated here; see [`update_running_stats`].
pub fn forward(
    params: &ModelParams,
    embeddings: &Array2<f64>,
    adj: &CsrMatrix,
    cfg: &ModelConfig,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<f64>, ForwardTrace)> {
    if embeddings.nrows() != adj.n {
        return Err(LectError::DimMismatch(format!(
            "embeddings rows {} vs adjacency dim {}",
            embeddings.nrows(),
            adj.n
        )));
    }
    if embeddings.ncols() != params.w_proj.nrows() {
        return Err(LectError::DimMismatch(format!(
            "embedding dim {} vs projector input {}",
            embeddings.ncols(),
            params.w_proj.nrows()
        )));
    }
    let n = adj.n;
    let hidden = params.w1.ncols();

    let h_proj = embeddings.dot(&params.w_proj) + &params.b_proj;
    let ah = adj.matmul_dense(&h_proj)?;
    let s1 = ah.dot(&params.w1) + &params.b1;
    check_finite("conv1", &s1)?;

    let (xhat, inv_std, batch_mean, batch_var) = match mode {
        Mode::Train => {
            let mean = s1.mean_axis(Axis(0)).unwrap();
            let var = s1.map_axis(Axis(0), |col| {
                let m = col.mean().unwrap();
                col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64
            });
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = Array2::from_shape_fn((n, hidden), |(i, j)| {
                (s1[[i, j]] - mean[j]) * inv_std[j]
            });
            (xhat, inv_std, mean, var)
        }
        Mode::Eval => {
            let inv_std = params.bn_running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = Array2::from_shape_fn((n, hidden), |(i, j)| {
                (s1[[i, j]] - params.bn_running_mean[j]) * inv_std[j]
            });
            (xhat, inv_std, params.bn_running_mean.clone(), params.bn_running_var.clone())
        }
    };
    let b1_out = Array2::from_shape_fn((n, hidden), |(i, j)| {
        params.bn_gamma[j] * xhat[[i, j]] + params.bn_beta[j]
    });
    check_finite("batch-norm", &b1_out)?;

    let relu_mask = b1_out.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
    let r1 = &b1_out * &relu_mask;

    let (d1, dropout_mask) = match mode {
        Mode::Train if cfg.dropout > 0.0 => {
            let rng = rng.ok_or_else(|| {
                LectError::InvalidConfig("train-mode forward with dropout requires an rng".into())
            })?;
            let keep = 1.0 - cfg.dropout;
            let mask = Array2::from_shape_fn((n, hidden), |_| {
                if rng.random_range(0.0..1.0) < keep { 1.0 / keep } else { 0.0 }
            });
            (&r1 * &mask, Some(mask))
        }
        _ => (r1.clone(), None),
    };

    let ad = adj.matmul_dense(&d1)?;
    let logits = ad.dot(&params.w2) + &params.b2;
    check_finite("logits", &logits)?;

    let trace = ForwardTrace {
        mode,
        h: embeddings.clone(),
        ah,
        xhat,
        inv_std,
        batch_mean,
        batch_var,
        relu_mask,
        dropout_mask,
        ad,
    };
    Ok((logits, trace))
}

/// Exact reverse-mode gradients for the traced forward computation,
/// including the dropout mask actually drawn. Requires a train-mode trace.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    adj: &CsrMatrix,
    grad_logits: &Array2<f64>,
) -> Result<Grads> {
    if trace.mode != Mode::Train {
        return Err(LectError::InvalidConfig("backward requires a train-mode trace".into()));
    }
    if grad_logits.nrows() != adj.n || grad_logits.ncols() != params.w2.ncols() {
        return Err(LectError::DimMismatch("upstream gradient shape".into()));
    }
    let n = adj.n as f64;

    let b2_grad = grad_logits.sum_axis(Axis(0));
    let w2_grad = trace.ad.t().dot(grad_logits);
    let d_ad = grad_logits.dot(&params.w2.t());
    // symmetric adjacency, so A^T x = A x
    let d_d1 = adj.matmul_dense(&d_ad)?;

    let d_r1 = match &trace.dropout_mask {
        Some(mask) => &d_d1 * mask,
        None => d_d1,
    };
    let d_b1out = &d_r1 * &trace.relu_mask;

    let bn_gamma_grad = (&d_b1out * &trace.xhat).sum_axis(Axis(0));
    let bn_beta_grad = d_b1out.sum_axis(Axis(0));

    // batch-norm backward through the batch statistics
    let d_xhat = &d_b1out * &params.bn_gamma;
    let sum_dxhat = d_xhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&d_xhat * &trace.xhat).sum_axis(Axis(0));
    let d_s1 = Array2::from_shape_fn(d_xhat.raw_dim(), |(i, j)| {
        trace.inv_std[j] / n
            * (n * d_xhat[[i, j]] - sum_dxhat[j] - trace.xhat[[i, j]] * sum_dxhat_xhat[j])
    });

    let w1_grad = trace.ah.t().dot(&d_s1);
    let b1_grad = d_s1.sum_axis(Axis(0));
    let d_ah = d_s1.dot(&params.w1.t());
    let d_hproj = adj.matmul_dense(&d_ah)?;

    let w_proj_grad = trace.h.t().dot(&d_hproj);
    let b_proj_grad = d_hproj.sum_axis(Axis(0));

    Ok(Grads {
        w_proj: w_proj_grad,
        b_proj: b_proj_grad,
        w1: w1_grad,
        b1: b1_grad,
        w2: w2_grad,
        b2: b2_grad,
        bn_gamma: bn_gamma_grad,
        bn_beta: bn_beta_grad,
    })
}

/// Fold the trace's batch statistics into the running statistics with
/// momentum [`BN_MOMENTUM`]. Called once per training step, after backward.
pub fn update_running_stats(params: &mut ModelParams, trace: &ForwardTrace) {
    for j in 0..params.bn_running_mean.len() {
        params.bn_running_mean[j] = (1.0 - BN_MOMENTUM) * params.bn_running_mean[j]
            + BN_MOMENTUM * trace.batch_mean[j];
        params.bn_running_var[j] =
            (1.0 - BN_MOMENTUM) * params.bn_running_var[j] + BN_MOMENTUM * trace.batch_var[j];
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.001, weight_decay: 0.0005, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, flattened in `flatten_trainable` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.flatten_trainable().len();
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One Adam step with bias correction and coupled weight decay (decay added
/// to the gradient). BN running statistics are untouched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Grads,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(LectError::NonFinite("gradient".into()));
    }
    let flat_g = grads.flatten();
    let mut flat_p = params.flatten_trainable();
    // biases and BN affine live past the weight tensors in the flat layout;
    // weight decay applies to all trainable scalars (coupled form)
    if flat_g.len() != state.m.len() || flat_g.len() != flat_p.len() {
        return Err(LectError::DimMismatch("adam state size".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..flat_p.len() {
        let g = flat_g[i] + cfg.weight_decay * flat_p[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        flat_p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    set_trainable_flat(params, &flat_p);
    Ok(())
}

/// Overwrite every trainable scalar from a flat vector in
/// `flatten_trainable` order; the inverse of that flattening.
pub fn set_trainable_flat(params: &mut ModelParams, flat: &[f64]) {
    let mut it = flat.iter().copied();
    for x in params.w_proj.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.b_proj.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.w1.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.b1.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.w2.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.b2.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.bn_gamma.iter_mut() {
        *x = it.next().unwrap();
    }
    for x in params.bn_beta.iter_mut() {
        *x = it.next().unwrap();
    }
}
