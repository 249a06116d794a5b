//! Exact value iteration over the finite-state environments.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::env::{
    is_cliff, EnvId, Observation, TaxiState, CLIFF_GOAL, DECK, FROZEN_LAKE_MAP, FROZEN_LAKE_SIZE,
};

/// Convergence tolerance on the max-norm Bellman residual.
pub const TOLERANCE: f64 = 1e-10;
/// Action values closer than this are treated as ties (smallest index wins).
const TIE_EPS: f64 = 1e-9;
const MAX_ITERATIONS: usize = 1_000_000;

/// One outcome of taking an action: probability, reward, and the next state
/// (`None` when the episode ends).
type Outcome = (f64, f64, Option<usize>);

struct Mdp {
    /// `transitions[s][a]` lists the outcomes.
    transitions: Vec<Vec<Vec<Outcome>>>,
}

/// A greedy policy with the values it is greedy against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub env: EnvId,
    pub actions: Vec<usize>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl TabularPolicy {
    /// 0-based greedy action for `obs`.
    pub fn action(&self, obs: &Observation) -> Result<usize, PolicyError> {
        let s = state_index(self.env, obs)?;
        Ok(self.actions[s])
    }

    pub fn value(&self, obs: &Observation) -> Result<f64, PolicyError> {
        let s = state_index(self.env, obs)?;
        Ok(self.values[s])
    }
}

/// Map an observation to its state index in the solver's model.
pub fn state_index(env: EnvId, obs: &Observation) -> Result<usize, PolicyError> {
    if !obs.matches(env) {
        return Err(PolicyError::ObservationEnvMismatch(env));
    }
    match *obs {
        Observation::CliffWalking { row, col } => Ok(row as usize * 12 + col as usize),
        Observation::FrozenLake { cell } => Ok(cell as usize),
        Observation::Taxi {
            row,
            col,
            passenger,
            destination,
        } => Ok(TaxiState {
            row,
            col,
            passenger,
            destination,
        }
        .index()),
        Observation::Blackjack {
            player_sum,
            dealer_showing,
            usable_ace,
        } => blackjack_index(player_sum, dealer_showing, usable_ace)
            .ok_or(PolicyError::StateOutOfRange),
        _ => Err(PolicyError::UnsupportedEnv(env)),
    }
}

fn blackjack_index(sum: u8, dealer: u8, usable: bool) -> Option<usize> {
    if !(4..=21).contains(&sum) || !(1..=10).contains(&dealer) {
        return None;
    }
    Some(((sum as usize - 4) * 10 + (dealer as usize - 1)) * 2 + usable as usize)
}

const BLACKJACK_STATES: usize = 18 * 10 * 2;

fn cliff_mdp() -> Mdp {
    let transitions = (0..48)
        .map(|s| {
            let (row, col) = ((s / 12) as u8, (s % 12) as u8);
            (0..4)
                .map(|a| {
                    if (row, col) == CLIFF_GOAL || is_cliff(row, col) {
                        return vec![(1.0, 0.0, None)];
                    }
                    let (r, c, reward, done) = crate::env::cliff_walking_step(row, col, a);
                    let next = if done { None } else { Some(r as usize * 12 + c as usize) };
                    vec![(1.0, reward, next)]
                })
                .collect()
        })
        .collect();
    Mdp { transitions }
}

fn frozen_lake_mdp() -> Mdp {
    let n = FROZEN_LAKE_SIZE * FROZEN_LAKE_SIZE;
    let transitions = (0..n)
        .map(|s| {
            let tile = FROZEN_LAKE_MAP[s / FROZEN_LAKE_SIZE].as_bytes()[s % FROZEN_LAKE_SIZE];
            (0..4)
                .map(|a| {
                    if tile == b'H' || tile == b'G' {
                        return vec![(1.0, 0.0, None)];
                    }
                    crate::env::frozen_lake_slips(a)
                        .iter()
                        .map(|&dir| {
                            let next = crate::env::frozen_lake_move(s as u8, dir);
                            let (reward, done) = crate::env::frozen_lake_outcome(next);
                            (1.0 / 3.0, reward, if done { None } else { Some(next as usize) })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Mdp { transitions }
}

fn taxi_mdp() -> Mdp {
    let transitions = (0..500)
        .map(|s| {
            (0..6)
                .map(|a| {
                    let mut state = TaxiState::from_index(s);
                    let (reward, done) = state.step(a);
                    vec![(1.0, reward, if done { None } else { Some(state.index()) })]
                })
                .collect()
        })
        .collect();
    Mdp { transitions }
}

/// Probability of each dealer final total (17..=21, or 22 for bust) given the
/// dealer's visible card, with the hidden card drawn from the deck.
pub fn dealer_distribution(visible: u8) -> [f64; 23] {
    fn recurse(raw: u8, has_ace: bool, p: f64, out: &mut [f64; 23]) {
        let usable = has_ace && raw + 10 <= 21;
        let total = if usable { raw + 10 } else { raw };
        if total >= 17 {
            out[total.min(22) as usize] += p;
            return;
        }
        for &c in DECK.iter() {
            recurse(raw + c, has_ace || c == 1, p / DECK.len() as f64, out);
        }
    }
    let mut out = [0.0; 23];
    for &hidden in DECK.iter() {
        recurse(
            visible + hidden,
            visible == 1 || hidden == 1,
            1.0 / DECK.len() as f64,
            &mut out,
        );
    }
    out
}

fn blackjack_mdp() -> Mdp {
    let dealer: Vec<[f64; 23]> = (1..=10).map(dealer_distribution).collect();
    let mut transitions = vec![Vec::new(); BLACKJACK_STATES];
    for sum in 4..=21u8 {
        for d in 1..=10u8 {
            for usable in [false, true] {
                let s = blackjack_index(sum, d, usable).expect("in range");
                if usable && sum < 12 {
                    // unreachable: a usable ace means the total is at least 12
                    transitions[s] = vec![vec![(1.0, 0.0, None)]; 2];
                    continue;
                }
                let dist = &dealer[d as usize - 1];
                let stick: Vec<Outcome> = (17..=22usize)
                    .filter(|&t| dist[t] > 0.0)
                    .map(|t| {
                        let reward = if t == 22 || (sum as usize) > t {
                            1.0
                        } else if (sum as usize) < t {
                            -1.0
                        } else {
                            0.0
                        };
                        (dist[t], reward, None)
                    })
                    .collect();
                let raw = if usable { sum - 10 } else { sum };
                let hit: Vec<Outcome> = DECK
                    .iter()
                    .map(|&c| {
                        let p = 1.0 / DECK.len() as f64;
                        let new_raw = raw + c;
                        let has_ace = usable || c == 1;
                        let new_usable = has_ace && new_raw + 10 <= 21;
                        let total = if new_usable { new_raw + 10 } else { new_raw };
                        if total > 21 {
                            (p, -1.0, None)
                        } else {
                            (p, 0.0, blackjack_index(total, d, new_usable))
                        }
                    })
                    .collect();
                transitions[s] = vec![stick, hit];
            }
        }
    }
    Mdp { transitions }
}

fn q_value(outcomes: &[Outcome], values: &[f64]) -> f64 {
    outcomes
        .iter()
        .map(|&(p, r, next)| p * (r + next.map_or(0.0, |n| values[n])))
        .sum()
}

fn greedy(qs: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, q) in qs.enumerate() {
        if q > best.1 + TIE_EPS {
            best = (a, q);
        }
    }
    best
}

fn value_iteration(env: EnvId, mdp: &Mdp) -> TabularPolicy {
    let n = mdp.transitions.len();
    let mut values = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while residual >= TOLERANCE && iterations < MAX_ITERATIONS {
        residual = 0.0;
        for s in 0..n {
            let best = mdp.transitions[s]
                .iter()
                .map(|o| q_value(o, &values))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((best - values[s]).abs());
            values[s] = best;
        }
        iterations += 1;
    }
    let actions = (0..n)
        .map(|s| greedy(mdp.transitions[s].iter().map(|o| q_value(o, &values))).0)
        .collect();
    TabularPolicy {
        env,
        actions,
        values,
        iterations,
        residual,
    }
}

/// Solve `env` exactly. Only the four finite environments are supported.
pub fn solve_tabular(env: EnvId) -> Result<TabularPolicy, PolicyError> {
    let mdp = match env {
        EnvId::Cliffwalking => cliff_mdp(),
        EnvId::Taxi => taxi_mdp(),
        EnvId::Blackjack => blackjack_mdp(),
        EnvId::Frozenlake => frozen_lake_mdp(),
        other => return Err(PolicyError::UnsupportedEnv(other)),
    };
    Ok(value_iteration(env, &mdp))
}

/// Solved policies, computed once per process.
pub fn tabular_policy(env: EnvId) -> Result<&'static TabularPolicy, PolicyError> {
    static CLIFF: OnceLock<TabularPolicy> = OnceLock::new();
    static TAXI: OnceLock<TabularPolicy> = OnceLock::new();
    static BLACKJACK: OnceLock<TabularPolicy> = OnceLock::new();
    static FROZEN: OnceLock<TabularPolicy> = OnceLock::new();
    let cell = match env {
        EnvId::Cliffwalking => &CLIFF,
        EnvId::Taxi => &TAXI,
        EnvId::Blackjack => &BLACKJACK,
        EnvId::Frozenlake => &FROZEN,
        other => return Err(PolicyError::UnsupportedEnv(other)),
    };
    Ok(cell.get_or_init(|| solve_tabular(env).expect("supported env")))
}

/// Whether one more Bellman backup would change any greedy action.
pub fn is_fixed_point(policy: &TabularPolicy) -> bool {
    let mdp = match policy.env {
        EnvId::Cliffwalking => cliff_mdp(),
        EnvId::Taxi => taxi_mdp(),
        EnvId::Blackjack => blackjack_mdp(),
        EnvId::Frozenlake => frozen_lake_mdp(),
        _ => return false,
    };
    let backed: Vec<f64> = (0..mdp.transitions.len())
        .map(|s| {
            mdp.transitions[s]
                .iter()
                .map(|o| q_value(o, &policy.values))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    (0..backed.len()).all(|s| greedy(mdp.transitions[s].iter().map(|o| q_value(o, &backed))).0 == policy.actions[s])
}
