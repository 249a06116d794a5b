//! Proximal policy optimization on the discrete-action environments.

mod net;
mod train;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;

pub use net::{backward, forward, forward_cached, init_params, layer_shapes, param_count, Cache, LayerShape, MlpParams, HIDDEN, VALUE_INPUT};
pub use train::{
    action_num, best_config, evaluate_greedy, features, full_grid, grid_search, load_checkpoint, obs_dim,
    save_checkpoint, to_env_action, train, train_with, write_curve_csv, write_grid_csv, EpochStats, GridResult, GridRow,
    TrainResult, WINDOW,
};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("observation width {found}, network expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid network dimensions ({obs_dim}, {action_num})")]
    InvalidDims { obs_dim: usize, action_num: usize },
    #[error("non-finite loss at epoch {epoch}: policy {policy}, value {value}, entropy {entropy}")]
    NonFiniteLoss { epoch: usize, policy: f64, value: f64, entropy: f64 },
    #[error("batch fields have different lengths")]
    RaggedBatch,
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// The searched values for each hyperparameter.
pub const LR_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];
pub const GAMMA_GRID: [f64; 3] = [0.99, 0.95, 0.9];
pub const ENT_GRID: [f64; 3] = [0.01, 0.05, 0.1];
pub const REPEAT_GRID: [usize; 2] = [10, 20];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub ent_coef: f64,
    /// Passes over each epoch's batch.
    pub repeat: usize,
    pub clip_eps: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub traj_per_epoch: usize,
    pub minibatch: usize,
    pub max_grad_norm: f64,
    pub step_cap: u32,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 1e-3,
            gamma: 0.99,
            ent_coef: 0.01,
            repeat: 10,
            clip_eps: 0.2,
            lambda: 0.95,
            epochs: 400,
            traj_per_epoch: 50,
            minibatch: 256,
            max_grad_norm: 0.5,
            step_cap: crate::env::DEFAULT_STEP_CAP,
            seed: 0,
        }
    }
}

/// Generalized advantage estimates for one trajectory; `last_value` is the
/// bootstrap value after the final step (0 when it terminated).
pub fn gae(rewards: &[f64], values: &[f64], last_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "rewards and values differ in length");
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let next = if t + 1 < values.len() { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    adv
}

/// Shift and scale to mean 0 and standard deviation 1.
pub fn normalize_advantages(adv: &mut Array1<f64>) {
    let n = adv.len();
    if n == 0 {
        return;
    }
    let mean = adv.sum() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    adv.mapv_inplace(|a| (a - mean) / (std + 1e-8));
}

/// Samples gathered for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub observations: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub values: Array1<f64>,
    pub log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let n = self.len();
        let ok = self.observations.nrows() == n
            && self.rewards.len() == n
            && self.values.len() == n
            && self.log_probs.len() == n
            && self.advantages.len() == n
            && self.returns.len() == n
            && self.advantages.iter().all(|a| a.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PpoError::RaggedBatch)
        }
    }

    pub fn select(&self, idx: &[usize]) -> RolloutBatch {
        RolloutBatch {
            observations: self.observations.select(Axis(0), idx),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            values: self.values.select(Axis(0), idx),
            log_probs: self.log_probs.select(Axis(0), idx),
            advantages: self.advantages.select(Axis(0), idx),
            returns: self.returns.select(Axis(0), idx),
        }
    }
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|z| z - lse);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    /// Policy term with the ratio left unclipped.
    pub policy_unclipped: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

fn loss_parts(params: &MlpParams, batch: &RolloutBatch, cfg: &PpoConfig, want_grad: bool) -> Result<(LossStats, Option<Vec<f64>>), PpoError> {
    let cache = forward_cached(params, batch.observations.view())?;
    let logp = log_softmax(&cache.logits);
    let n = batch.len() as f64;
    let a_num = params.action_num;
    let mut stats = LossStats::default();
    let mut dlogits = Array2::zeros((batch.len(), a_num));
    let mut dvalues = Array1::zeros(batch.len());
    for i in 0..batch.len() {
        let act = batch.actions[i];
        let adv = batch.advantages[i];
        let log_ratio = logp[[i, act]] - batch.log_probs[i];
        let ratio = log_ratio.exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        let unclipped_term = ratio * adv;
        let clipped_term = clipped * adv;
        let active = unclipped_term <= clipped_term;
        stats.policy -= unclipped_term.min(clipped_term) / n;
        stats.policy_unclipped -= unclipped_term / n;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / n;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            stats.clip_frac += 1.0 / n;
        }
        let err = cache.values[i] - batch.returns[i];
        stats.value += 0.5 * err * err / n;
        let probs: Vec<f64> = (0..a_num).map(|j| logp[[i, j]].exp()).collect();
        let h: f64 = -(0..a_num).map(|j| probs[j] * logp[[i, j]]).sum::<f64>();
        stats.entropy += h / n;
        if want_grad {
            for j in 0..a_num {
                let onehot = if j == act { 1.0 } else { 0.0 };
                let mut g = cfg.ent_coef * probs[j] * (logp[[i, j]] + h);
                if active {
                    g -= adv * ratio * (onehot - probs[j]);
                }
                dlogits[[i, j]] = g / n;
            }
            dvalues[i] = err / n;
        }
    }
    stats.total = stats.policy + stats.value - cfg.ent_coef * stats.entropy;
    let grads = want_grad.then(|| backward(params, &cache, &dlogits, &dvalues));
    Ok((stats, grads))
}

/// Clipped-surrogate loss plus value and entropy terms, averaged over the batch.
pub fn loss(params: &MlpParams, batch: &RolloutBatch, cfg: &PpoConfig) -> Result<LossStats, PpoError> {
    Ok(loss_parts(params, batch, cfg, false)?.0)
}

/// The loss and its gradient with respect to every parameter.
pub fn loss_and_grad(params: &MlpParams, batch: &RolloutBatch, cfg: &PpoConfig) -> Result<(LossStats, Vec<f64>), PpoError> {
    let (stats, grads) = loss_parts(params, batch, cfg, true)?;
    Ok((stats, grads.expect("gradient requested")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

fn clip_grad_norm(grads: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        grads.iter_mut().for_each(|g| *g *= scale);
    }
}

/// `repeat` shuffled passes of minibatch Adam steps over `batch`, whose
/// advantages must already be normalized. Returns the stats of the last pass.
pub fn update(
    params: &mut MlpParams,
    adam: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
    epoch: usize,
) -> Result<LossStats, PpoError> {
    batch.validate()?;
    let n = batch.len();
    let mb = cfg.minibatch.max(1).min(n.max(1));
    let mut idx: Vec<usize> = (0..n).collect();
    let mut last = LossStats::default();
    for _ in 0..cfg.repeat {
        idx.shuffle(rng);
        let mut acc = LossStats::default();
        let mut chunks = 0.0;
        for chunk in idx.chunks(mb) {
            let sub = batch.select(chunk);
            let (stats, mut grads) = loss_and_grad(params, &sub, cfg)?;
            if !stats.total.is_finite() {
                return Err(PpoError::NonFiniteLoss {
                    epoch,
                    policy: stats.policy,
                    value: stats.value,
                    entropy: stats.entropy,
                });
            }
            clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(&mut params.data, &grads, cfg.lr);
            acc.total += stats.total;
            acc.policy += stats.policy;
            acc.policy_unclipped += stats.policy_unclipped;
            acc.value += stats.value;
            acc.entropy += stats.entropy;
            acc.approx_kl += stats.approx_kl;
            acc.clip_frac += stats.clip_frac;
            chunks += 1.0;
        }
        if chunks > 0.0 {
            last = LossStats {
                total: acc.total / chunks,
                policy: acc.policy / chunks,
                policy_unclipped: acc.policy_unclipped / chunks,
                value: acc.value / chunks,
                entropy: acc.entropy / chunks,
                approx_kl: acc.approx_kl / chunks,
                clip_frac: acc.clip_frac / chunks,
            };
        }
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_small_cases() {
        assert_eq!(gae(&[1.0], &[0.0], 0.0, 1.0, 1.0), vec![1.0]);
        let r = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, -0.4];
        let a = gae(&r, &v, 0.7, 0.9, 0.0);
        let deltas = [1.0 + 0.9 * 0.1 - 0.3, -2.0 + 0.9 * -0.4 - 0.1, 0.5 + 0.9 * 0.7 + 0.4];
        for (x, d) in a.iter().zip(deltas) {
            assert_eq!(*x, d);
        }
    }

    #[test]
    fn normalized_advantages() {
        let mut a = Array1::from(vec![3.0, -1.0, 4.0, 1.5, 9.0, -2.6]);
        normalize_advantages(&mut a);
        let mean = a.sum() / a.len() as f64;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        assert!(mean.abs() < 1e-10);
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![1.0, -1.0];
        let mut adam = Adam::new(2);
        adam.step(&mut p, &[0.5, -0.5], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
