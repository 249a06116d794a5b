//! Rollout collection, the training loop, grid search and persistence.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    forward, gae, init_params, log_softmax, normalize_advantages, update, Adam, LossStats, MlpParams, PpoConfig,
    PpoError, RolloutBatch, ENT_GRID, GAMMA_GRID, LR_GRID, REPEAT_GRID,
};
use crate::env::{reset, Action, Env, EnvId, Observation};
use crate::evaluation::{aggregate, ThresholdTable};
use crate::seeding::{derive_seed, rng_from_seed, stream};

const BEST_CONFIGS: &str = include_str!("../../assets/ppo_best.csv");
/// Epochs in the moving average used for early stopping and final scores.
pub const WINDOW: usize = 10;
const EVAL_EPISODES: usize = 5;
const EVAL_OFFSET: u64 = 1 << 40;

pub fn obs_dim(env: EnvId) -> usize {
    match env {
        EnvId::Cartpole | EnvId::Taxi => 4,
        EnvId::Blackjack => 3,
        _ => 2,
    }
}

pub fn action_num(env: EnvId) -> usize {
    match env {
        EnvId::Cartpole => 2,
        EnvId::Mountaincar | EnvId::MountaincarContinuous => 3,
        EnvId::Cliffwalking | EnvId::Frozenlake => 4,
        EnvId::Taxi => 6,
        EnvId::Blackjack => 2,
    }
}

/// Scaled observation features. The two most informative come first, since
/// the value trunk reads only the first two.
pub fn features(obs: &Observation) -> Vec<f64> {
    match *obs {
        Observation::CartPole { x, v, theta, omega } => vec![theta / 0.21, omega / 2.0, x / 2.4, v / 2.0],
        Observation::MountainCar { x, v } => vec![(x + 0.3) / 0.9, v / 0.07],
        Observation::CliffWalking { row, col } => vec![(row as f64 - 1.5) / 1.5, (col as f64 - 5.5) / 5.5],
        Observation::Taxi {
            row,
            col,
            passenger,
            destination,
        } => vec![
            (row as f64 - 2.0) / 2.0,
            (col as f64 - 2.0) / 2.0,
            (passenger.index() as f64 - 2.0) / 2.0,
            (destination.index() as f64 - 1.5) / 1.5,
        ],
        Observation::Blackjack {
            player_sum,
            dealer_showing,
            usable_ace,
        } => vec![
            (player_sum as f64 - 12.0) / 9.0,
            (dealer_showing as f64 - 5.5) / 4.5,
            if usable_ace { 1.0 } else { -1.0 },
        ],
        Observation::FrozenLake { cell } => vec![((cell / 4) as f64 - 1.5) / 1.5, ((cell % 4) as f64 - 1.5) / 1.5],
    }
}

/// Network output index to environment action; continuous mountain car uses
/// a three-way throttle.
pub fn to_env_action(env: EnvId, index: usize) -> Action {
    match env {
        EnvId::MountaincarContinuous => Action::Continuous(index as f64 - 1.0),
        _ => Action::Discrete(index),
    }
}

#[derive(Debug, Default)]
struct Buffer {
    feats: Vec<Vec<f64>>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    bootstrap: Option<Vec<f64>>,
}

impl Buffer {
    fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

enum Mode<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
}

fn matrix(rows: &[&Vec<f64>], width: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), width), |(i, j)| rows[i][j])
}

/// Play one episode per seed, all environments stepped in lockstep.
fn run_episodes(params: &MlpParams, env_id: EnvId, seeds: &[u64], cap: u32, mut mode: Mode<'_>) -> Result<Vec<Buffer>, PpoError> {
    let d = params.obs_dim;
    let mut envs: Vec<Env> = Vec::with_capacity(seeds.len());
    let mut current: Vec<Vec<f64>> = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let (e, obs) = reset(env_id, s, cap)?;
        envs.push(e);
        current.push(features(&obs));
    }
    let mut bufs: Vec<Buffer> = seeds.iter().map(|_| Buffer::default()).collect();
    let mut active: Vec<usize> = (0..seeds.len()).collect();
    while !active.is_empty() {
        let rows: Vec<&Vec<f64>> = active.iter().map(|&i| &current[i]).collect();
        let (logits, values) = forward(params, matrix(&rows, d).view())?;
        let logp = log_softmax(&logits);
        let mut still = Vec::with_capacity(active.len());
        for (k, &i) in active.iter().enumerate() {
            let row = logp.row(k);
            let a = match &mut mode {
                Mode::Greedy => row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                    .0,
                Mode::Sample(rng) => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = row.len() - 1;
                    for (j, &lp) in row.iter().enumerate() {
                        acc += lp.exp();
                        if u < acc {
                            pick = j;
                            break;
                        }
                    }
                    pick
                }
            };
            let step = envs[i].step(to_env_action(env_id, a))?;
            let b = &mut bufs[i];
            b.feats.push(std::mem::take(&mut current[i]));
            b.actions.push(a);
            b.log_probs.push(row[a]);
            b.values.push(values[k]);
            b.rewards.push(step.reward);
            current[i] = features(&step.observation);
            if step.done() {
                if step.truncated && !step.terminated {
                    b.bootstrap = Some(current[i].clone());
                }
            } else {
                still.push(i);
            }
        }
        active = still;
    }
    Ok(bufs)
}

fn assemble(params: &MlpParams, bufs: &[Buffer], cfg: &PpoConfig) -> Result<RolloutBatch, PpoError> {
    let boot_rows: Vec<&Vec<f64>> = bufs.iter().filter_map(|b| b.bootstrap.as_ref()).collect();
    let boot_values = if boot_rows.is_empty() {
        Array1::zeros(0)
    } else {
        forward(params, matrix(&boot_rows, params.obs_dim).view())?.1
    };
    let mut boot_iter = boot_values.iter();
    let total: usize = bufs.iter().map(|b| b.actions.len()).sum();
    let mut obs = Vec::with_capacity(total);
    let mut batch = RolloutBatch {
        observations: Array2::zeros((0, params.obs_dim)),
        actions: Vec::with_capacity(total),
        rewards: Vec::with_capacity(total),
        values: Array1::zeros(0),
        log_probs: Array1::zeros(0),
        advantages: Array1::zeros(0),
        returns: Array1::zeros(0),
    };
    let (mut values, mut logps, mut advs, mut rets) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for b in bufs {
        let last = if b.bootstrap.is_some() {
            *boot_iter.next().expect("bootstrap value")
        } else {
            0.0
        };
        let adv = gae(&b.rewards, &b.values, last, cfg.gamma, cfg.lambda);
        for t in 0..b.actions.len() {
            obs.push(&b.feats[t]);
            rets.push(adv[t] + b.values[t]);
        }
        advs.extend(adv);
        values.extend(&b.values);
        logps.extend(&b.log_probs);
        batch.actions.extend(&b.actions);
        batch.rewards.extend(&b.rewards);
    }
    batch.observations = matrix(&obs, params.obs_dim);
    batch.values = Array1::from(values);
    batch.log_probs = Array1::from(logps);
    batch.advantages = Array1::from(advs);
    batch.returns = Array1::from(rets);
    normalize_advantages(&mut batch.advantages);
    batch.validate()?;
    Ok(batch)
}

/// Mean return of the greedy (argmax) policy.
pub fn evaluate_greedy(params: &MlpParams, env: EnvId, episodes: usize, seed: u64, cap: u32) -> Result<f64, PpoError> {
    let seeds: Vec<u64> = (0..episodes as u64)
        .map(|i| derive_seed(seed, stream::PPO, EVAL_OFFSET + i))
        .collect();
    let bufs = run_episodes(params, env, &seeds, cap, Mode::Greedy)?;
    Ok(bufs.iter().map(Buffer::ret).sum::<f64>() / episodes.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_return: f64,
    pub greedy_return: f64,
    pub samples: usize,
    pub loss: LossStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub env: EnvId,
    pub config: PpoConfig,
    pub params: MlpParams,
    pub curve: Vec<EpochStats>,
    pub stopped_early: bool,
}

impl TrainResult {
    /// Mean of the last 10 epoch returns.
    pub fn final_mean(&self) -> f64 {
        let k = self.curve.len().min(WINDOW).max(1);
        self.curve.iter().rev().take(k).map(|e| e.mean_return).sum::<f64>() / k as f64
    }

    pub fn final_greedy(&self) -> f64 {
        self.curve.last().map(|e| e.greedy_return).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Train from scratch: per epoch, sample `traj_per_epoch` episodes, compute
/// advantages and update. Stops once the 10-epoch mean reaches the
/// environment's state-of-the-art threshold.
pub fn train(env: EnvId, cfg: &PpoConfig) -> Result<TrainResult, PpoError> {
    let sota = ThresholdTable::builtin().get(env).map(|t| t.sota).unwrap_or(f64::INFINITY);
    train_with(env, cfg, |curve| {
        curve.len() >= WINDOW && curve[curve.len() - WINDOW..].iter().map(|e| e.mean_return).sum::<f64>() / WINDOW as f64 >= sota
    })
}

/// Like [`train`], with a caller-supplied stopping rule checked after every epoch.
pub fn train_with(env: EnvId, cfg: &PpoConfig, mut stop: impl FnMut(&[EpochStats]) -> bool) -> Result<TrainResult, PpoError> {
    let mut params = init_params(obs_dim(env), action_num(env), derive_seed(cfg.seed, stream::PPO, u64::MAX))?;
    let mut adam = Adam::new(params.count());
    let mut rng = rng_from_seed(derive_seed(cfg.seed, stream::PPO, u64::MAX - 1));
    let mut curve = Vec::with_capacity(cfg.epochs);
    let n = cfg.traj_per_epoch as u64;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        let seeds: Vec<u64> = (0..n)
            .map(|i| derive_seed(cfg.seed, stream::PPO, epoch as u64 * n + i))
            .collect();
        let bufs = run_episodes(&params, env, &seeds, cfg.step_cap, Mode::Sample(&mut rng))?;
        let mean_return = bufs.iter().map(Buffer::ret).sum::<f64>() / bufs.len().max(1) as f64;
        let batch = assemble(&params, &bufs, cfg)?;
        let loss = update(&mut params, &mut adam, &batch, cfg, &mut rng, epoch)?;
        let greedy_return = evaluate_greedy(&params, env, EVAL_EPISODES, cfg.seed, cfg.step_cap)?;
        curve.push(EpochStats {
            epoch,
            mean_return,
            greedy_return,
            samples: batch.len(),
            loss,
        });
        log::debug!("{env} epoch {epoch}: mean {mean_return:.2}, greedy {greedy_return:.2}");
        if stop(&curve) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainResult {
        env,
        config: *cfg,
        params,
        curve,
        stopped_early,
    })
}

/// Every combination of the searched values on top of `base`.
pub fn full_grid(base: &PpoConfig) -> Vec<PpoConfig> {
    let mut out = Vec::with_capacity(54);
    for lr in LR_GRID {
        for gamma in GAMMA_GRID {
            for ent_coef in ENT_GRID {
                for repeat in REPEAT_GRID {
                    out.push(PpoConfig {
                        lr,
                        gamma,
                        ent_coef,
                        repeat,
                        ..*base
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub config: PpoConfig,
    pub finals: Vec<f64>,
    pub greedy: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub best: PpoConfig,
    pub rows: Vec<GridRow>,
}

/// Train each config on each seed; rank configs by median final return.
pub fn grid_search(env: EnvId, grid: &[PpoConfig], seeds: &[u64]) -> Result<GridResult, PpoError> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(PpoError::EmptyGrid);
    }
    let jobs: Vec<(usize, u64)> = (0..grid.len()).flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    let results: Vec<Result<(usize, f64, f64), PpoError>> = jobs
        .par_iter()
        .map(|&(g, seed)| {
            let r = train(env, &PpoConfig { seed, ..grid[g] })?;
            Ok((g, r.final_mean(), r.final_greedy()))
        })
        .collect();
    let mut rows: Vec<GridRow> = grid
        .iter()
        .map(|c| GridRow {
            config: *c,
            finals: Vec::new(),
            greedy: Vec::new(),
            median: f64::NAN,
        })
        .collect();
    for r in results {
        let (g, fin, greedy) = r?;
        rows[g].finals.push(fin);
        rows[g].greedy.push(greedy);
    }
    for row in &mut rows {
        row.median = aggregate(&row.finals).map(|a| a.median).unwrap_or(f64::NAN);
    }
    let best = rows
        .iter()
        .fold(None::<&GridRow>, |best, row| match best {
            Some(b) if b.median >= row.median => Some(b),
            _ => Some(row),
        })
        .expect("non-empty grid")
        .config;
    Ok(GridResult { best, rows })
}

/// The shipped best grid configuration for `env`, if one was recorded.
pub fn best_config(env: EnvId) -> Option<PpoConfig> {
    let mut reader = csv::Reader::from_reader(BEST_CONFIGS.as_bytes());
    for row in reader.deserialize::<(String, f64, f64, f64, usize)>() {
        let (name, lr, gamma, ent_coef, repeat) = row.ok()?;
        if name == env.as_str() {
            return Some(PpoConfig {
                lr,
                gamma,
                ent_coef,
                repeat,
                ..PpoConfig::default()
            });
        }
    }
    None
}

fn csv_err(e: csv::Error) -> PpoError {
    PpoError::Io(std::io::Error::other(e.to_string()))
}

pub fn write_curve_csv(path: &Path, curve: &[EpochStats]) -> Result<(), PpoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "mean_return",
        "greedy_return",
        "samples",
        "loss",
        "policy_loss",
        "value_loss",
        "entropy",
        "approx_kl",
        "clip_frac",
    ])
    .map_err(csv_err)?;
    for e in curve {
        w.write_record([
            e.epoch.to_string(),
            e.mean_return.to_string(),
            e.greedy_return.to_string(),
            e.samples.to_string(),
            e.loss.total.to_string(),
            e.loss.policy.to_string(),
            e.loss.value.to_string(),
            e.loss.entropy.to_string(),
            e.loss.approx_kl.to_string(),
            e.loss.clip_frac.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PpoError::Io(std::io::Error::other(e.to_string())))?;
    crate::fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

pub fn write_grid_csv(path: &Path, result: &GridResult) -> Result<(), PpoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lr", "gamma", "ent_coef", "repeat", "median_final", "finals", "greedy", "best"])
        .map_err(csv_err)?;
    for row in &result.rows {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            row.config.lr.to_string(),
            row.config.gamma.to_string(),
            row.config.ent_coef.to_string(),
            row.config.repeat.to_string(),
            row.median.to_string(),
            join(&row.finals),
            join(&row.greedy),
            (row.config == result.best).to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PpoError::Io(std::io::Error::other(e.to_string())))?;
    crate::fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

const CHECKPOINT_FORMAT: &str = "gymtext-ppo";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    env: EnvId,
    obs_dim: usize,
    action_num: usize,
    config: PpoConfig,
    tensors: Vec<Tensor>,
}

/// Portable JSON checkpoint: shapes and weights of every tensor.
pub fn save_checkpoint(path: &Path, result: &TrainResult) -> Result<(), PpoError> {
    let p = &result.params;
    let mut tensors = Vec::new();
    for l in p.shapes() {
        let w = l.offset..l.offset + l.out * l.inp;
        let b = w.end..w.end + l.out;
        tensors.push(Tensor {
            name: format!("{}.weight", l.name),
            shape: vec![l.out, l.inp],
            data: p.data[w].to_vec(),
        });
        tensors.push(Tensor {
            name: format!("{}.bias", l.name),
            shape: vec![l.out],
            data: p.data[b].to_vec(),
        });
    }
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        env: result.env,
        obs_dim: p.obs_dim,
        action_num: p.action_num,
        config: result.config,
        tensors,
    };
    let text = serde_json::to_string(&ck).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
    crate::fsutil::write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(EnvId, PpoConfig, MlpParams), PpoError> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(PpoError::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
    }
    let mut data = Vec::new();
    for t in &ck.tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(PpoError::Checkpoint(format!("tensor {} has the wrong size", t.name)));
        }
        data.extend_from_slice(&t.data);
    }
    if data.len() != super::param_count(ck.obs_dim, ck.action_num) {
        return Err(PpoError::Checkpoint("parameter count does not match the shapes".into()));
    }
    Ok((
        ck.env,
        ck.config,
        MlpParams {
            obs_dim: ck.obs_dim,
            action_num: ck.action_num,
            data,
        },
    ))
}
