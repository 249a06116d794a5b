//! Seedable re-implementations of the seven supported environments behind a
//! single step/reset interface.
//!
//! Actions are always 0-based here. The 1-based numbering that language
//! agents see is handled by [`crate::grounding`].

mod blackjack;
mod cartpole;
mod cliff_walking;
mod frozen_lake;
mod mountain_car;
mod taxi;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::rng_from_seed;

pub use blackjack::{dealer_play, draw_card, BlackjackState, DECK};
pub use cartpole::{cartpole_failed, cartpole_update, CartPoleState};
pub use cliff_walking::{is_cliff, CLIFF_GOAL, CLIFF_START};
pub use frozen_lake::{FROZEN_LAKE_MAP, FROZEN_LAKE_SIZE};
pub use mountain_car::MountainCarState;
pub use taxi::{taxi_move_allowed, TaxiState, TAXI_LANDMARKS};
pub use trajectory::{Trajectory, Transition};

pub(crate) use cliff_walking::step as cliff_walking_step;
pub(crate) use frozen_lake::{
    move_cell as frozen_lake_move, outcome as frozen_lake_outcome,
    slip_directions as frozen_lake_slips,
};

/// Default per-episode step cap for every environment.
pub const DEFAULT_STEP_CAP: u32 = 200;

/// The closed set of supported environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Cartpole,
    Mountaincar,
    MountaincarContinuous,
    Cliffwalking,
    Taxi,
    Blackjack,
    Frozenlake,
}

impl EnvId {
    pub const ALL: [EnvId; 7] = [
        EnvId::Cartpole,
        EnvId::Mountaincar,
        EnvId::MountaincarContinuous,
        EnvId::Cliffwalking,
        EnvId::Taxi,
        EnvId::Blackjack,
        EnvId::Frozenlake,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Cartpole => "cartpole",
            EnvId::Mountaincar => "mountaincar",
            EnvId::MountaincarContinuous => "mountaincar_continuous",
            EnvId::Cliffwalking => "cliffwalking",
            EnvId::Taxi => "taxi",
            EnvId::Blackjack => "blackjack",
            EnvId::Frozenlake => "frozenlake",
        }
    }

    /// Whether the observation/state space is finite (tabular solvers apply).
    pub fn is_tabular(&self) -> bool {
        matches!(
            self,
            EnvId::Cliffwalking | EnvId::Taxi | EnvId::Blackjack | EnvId::Frozenlake
        )
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        EnvId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

/// Taxi landmark, in map order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Landmark {
    R,
    G,
    Y,
    B,
}

impl Landmark {
    pub const ALL: [Landmark; 4] = [Landmark::R, Landmark::G, Landmark::Y, Landmark::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Landmark> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Landmark::R => 'R',
            Landmark::G => 'G',
            Landmark::Y => 'Y',
            Landmark::B => 'B',
        }
    }
}

/// Where the taxi passenger currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PassengerLoc {
    R,
    G,
    Y,
    B,
    #[serde(rename = "in_taxi")]
    InTaxi,
}

impl PassengerLoc {
    /// 0..=3 for landmarks, 4 for in-taxi.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PassengerLoc> {
        [
            PassengerLoc::R,
            PassengerLoc::G,
            PassengerLoc::Y,
            PassengerLoc::B,
            PassengerLoc::InTaxi,
        ]
        .get(i)
        .copied()
    }

    pub fn landmark(self) -> Option<Landmark> {
        Landmark::from_index(self.index())
    }
}

/// Agent-visible observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Observation {
    /// Cart position (m), cart velocity (m/s), pole angle (rad), angular velocity (rad/s).
    CartPole { x: f64, v: f64, theta: f64, omega: f64 },
    /// Shared by the discrete and continuous mountain car.
    MountainCar { x: f64, v: f64 },
    CliffWalking { row: u8, col: u8 },
    Taxi {
        row: u8,
        col: u8,
        passenger: PassengerLoc,
        destination: Landmark,
    },
    Blackjack {
        player_sum: u8,
        dealer_showing: u8,
        usable_ace: bool,
    },
    FrozenLake { cell: u8 },
}

impl Observation {
    /// Whether this observation variant belongs to `env`.
    pub fn matches(&self, env: EnvId) -> bool {
        matches!(
            (self, env),
            (Observation::CartPole { .. }, EnvId::Cartpole)
                | (Observation::MountainCar { .. }, EnvId::Mountaincar)
                | (Observation::MountainCar { .. }, EnvId::MountaincarContinuous)
                | (Observation::CliffWalking { .. }, EnvId::Cliffwalking)
                | (Observation::Taxi { .. }, EnvId::Taxi)
                | (Observation::Blackjack { .. }, EnvId::Blackjack)
                | (Observation::FrozenLake { .. }, EnvId::Frozenlake)
        )
    }
}

/// A 0-based discrete action or a continuous force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl Action {
    pub fn discrete(self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(i),
            Action::Continuous(_) => None,
        }
    }

    pub fn continuous(self) -> Option<f64> {
        match self {
            Action::Continuous(f) => Some(f),
            Action::Discrete(_) => None,
        }
    }
}

/// Shape of an environment's action space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: f64, high: f64 },
}

impl ActionSpace {
    /// Whether `action` is valid in this space. Continuous actions are valid
    /// whenever finite; they are clamped on use.
    pub fn contains(&self, action: Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(i)) => i < *n,
            (ActionSpace::Continuous { .. }, Action::Continuous(f)) => f.is_finite(),
            _ => false,
        }
    }

    /// 1-based indices as shown to language agents; empty for continuous spaces.
    pub fn one_based(&self) -> Vec<usize> {
        match self {
            ActionSpace::Discrete(n) => (1..=*n).collect(),
            ActionSpace::Continuous { .. } => Vec::new(),
        }
    }
}

pub fn action_space(env: EnvId) -> ActionSpace {
    match env {
        EnvId::Cartpole => ActionSpace::Discrete(2),
        EnvId::Mountaincar => ActionSpace::Discrete(3),
        EnvId::MountaincarContinuous => ActionSpace::Continuous {
            low: -1.0,
            high: 1.0,
        },
        EnvId::Cliffwalking => ActionSpace::Discrete(4),
        EnvId::Taxi => ActionSpace::Discrete(6),
        EnvId::Blackjack => ActionSpace::Discrete(2),
        EnvId::Frozenlake => ActionSpace::Discrete(4),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid action {action:?} for {env}")]
    InvalidAction { env: EnvId, action: Action },
    #[error("step called after the episode ended")]
    SteppedAfterEnd,
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
    #[error("step cap must be at least 1")]
    ZeroStepCap,
}

#[derive(Debug, Clone)]
enum Phys {
    CartPole(CartPoleState),
    MountainCar(MountainCarState),
    MountainCarContinuous(MountainCarState),
    CliffWalking { row: u8, col: u8 },
    Taxi(TaxiState),
    Blackjack(BlackjackState),
    FrozenLake(u8),
}

/// A live environment instance.
///
/// Identical `(seed, action sequence)` pairs always produce identical step
/// results: all randomness comes from the instance's own ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct Env {
    id: EnvId,
    rng: ChaCha8Rng,
    phys: Phys,
    step_count: u32,
    step_cap: u32,
    finished: bool,
}

/// Create an environment and return it with its initial observation.
pub fn reset(env: EnvId, seed: u64, step_cap: u32) -> Result<(Env, Observation), EnvError> {
    let instance = Env::new(env, seed, step_cap)?;
    let obs = instance.observation();
    Ok((instance, obs))
}

impl Env {
    pub fn new(id: EnvId, seed: u64, step_cap: u32) -> Result<Self, EnvError> {
        if step_cap == 0 {
            return Err(EnvError::ZeroStepCap);
        }
        let mut rng = rng_from_seed(seed);
        let phys = match id {
            EnvId::Cartpole => Phys::CartPole(cartpole::initial(&mut rng)),
            EnvId::Mountaincar => Phys::MountainCar(mountain_car::initial(&mut rng)),
            EnvId::MountaincarContinuous => {
                Phys::MountainCarContinuous(mountain_car::initial(&mut rng))
            }
            EnvId::Cliffwalking => Phys::CliffWalking {
                row: CLIFF_START.0,
                col: CLIFF_START.1,
            },
            EnvId::Taxi => Phys::Taxi(taxi::initial(&mut rng)),
            EnvId::Blackjack => Phys::Blackjack(blackjack::initial(&mut rng)),
            EnvId::Frozenlake => Phys::FrozenLake(0),
        };
        Ok(Env {
            id,
            rng,
            phys,
            step_count: 0,
            step_cap,
            finished: false,
        })
    }

    pub fn id(&self) -> EnvId {
        self.id
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn step_cap(&self) -> u32 {
        self.step_cap
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn action_space(&self) -> ActionSpace {
        action_space(self.id)
    }

    pub fn observation(&self) -> Observation {
        match &self.phys {
            Phys::CartPole(s) => Observation::CartPole {
                x: s.x,
                v: s.x_dot,
                theta: s.theta,
                omega: s.theta_dot,
            },
            Phys::MountainCar(s) | Phys::MountainCarContinuous(s) => Observation::MountainCar {
                x: s.position,
                v: s.velocity,
            },
            Phys::CliffWalking { row, col } => Observation::CliffWalking {
                row: *row,
                col: *col,
            },
            Phys::Taxi(s) => s.observation(),
            Phys::Blackjack(s) => s.observation(),
            Phys::FrozenLake(cell) => Observation::FrozenLake { cell: *cell },
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::SteppedAfterEnd);
        }
        let invalid = || EnvError::InvalidAction {
            env: self.id,
            action,
        };
        if !self.action_space().contains(action) {
            return Err(invalid());
        }
        let (reward, terminated) = match (&mut self.phys, action) {
            (Phys::CartPole(s), Action::Discrete(a)) => {
                let force = if a == 1 {
                    cartpole::FORCE_MAG
                } else {
                    -cartpole::FORCE_MAG
                };
                *s = cartpole_update(*s, force);
                (1.0, cartpole_failed(s))
            }
            (Phys::MountainCar(s), Action::Discrete(a)) => {
                *s = s.step_discrete(a);
                (-1.0, s.position >= mountain_car::GOAL_POSITION && s.velocity >= 0.0)
            }
            (Phys::MountainCarContinuous(s), Action::Continuous(force)) => {
                let force = force.clamp(-1.0, 1.0);
                *s = s.step_continuous(force);
                let done = s.position >= mountain_car::CONTINUOUS_GOAL_POSITION && s.velocity >= 0.0;
                let mut reward = -0.1 * force * force;
                if done {
                    reward += 100.0;
                }
                (reward, done)
            }
            (Phys::CliffWalking { row, col }, Action::Discrete(a)) => {
                let (r, c, reward, done) = cliff_walking::step(*row, *col, a);
                *row = r;
                *col = c;
                (reward, done)
            }
            (Phys::Taxi(s), Action::Discrete(a)) => s.step(a),
            (Phys::Blackjack(s), Action::Discrete(a)) => s.step(a, &mut self.rng),
            (Phys::FrozenLake(cell), Action::Discrete(a)) => {
                let (next, reward, done) = frozen_lake::step(*cell, a, &mut self.rng);
                *cell = next;
                (reward, done)
            }
            _ => return Err(invalid()),
        };
        self.step_count += 1;
        let truncated = !terminated && self.step_count >= self.step_cap;
        self.finished = terminated || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_id_round_trips_through_strings() {
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
        }
        assert_eq!("MountainCar-Continuous".parse::<EnvId>().unwrap(), EnvId::MountaincarContinuous);
        assert!("acrobot".parse::<EnvId>().is_err());
    }

    #[test]
    fn action_space_counts() {
        assert_eq!(action_space(EnvId::Cartpole), ActionSpace::Discrete(2));
        assert_eq!(action_space(EnvId::Mountaincar), ActionSpace::Discrete(3));
        assert_eq!(action_space(EnvId::Cliffwalking), ActionSpace::Discrete(4));
        assert_eq!(action_space(EnvId::Taxi), ActionSpace::Discrete(6));
        assert_eq!(action_space(EnvId::Blackjack), ActionSpace::Discrete(2));
        assert_eq!(action_space(EnvId::Frozenlake), ActionSpace::Discrete(4));
        assert_eq!(
            action_space(EnvId::MountaincarContinuous),
            ActionSpace::Continuous { low: -1.0, high: 1.0 }
        );
    }

    #[test]
    fn cliffwalking_starts_at_bottom_left() {
        for seed in 0..10 {
            let (_, obs) = reset(EnvId::Cliffwalking, seed, 200).unwrap();
            assert_eq!(obs, Observation::CliffWalking { row: 3, col: 0 });
        }
    }

    #[test]
    fn cartpole_reset_is_seeded_and_small() {
        let (_, a) = reset(EnvId::Cartpole, 7, 200).unwrap();
        let (_, b) = reset(EnvId::Cartpole, 7, 200).unwrap();
        assert_eq!(a, b);
        if let Observation::CartPole { x, v, theta, omega } = a {
            for f in [x, v, theta, omega] {
                assert!((-0.05..=0.05).contains(&f));
            }
        } else {
            panic!("wrong variant");
        }
    }

    #[test]
    fn mountaincar_reset_range() {
        for seed in 0..50 {
            let (_, obs) = reset(EnvId::Mountaincar, seed, 200).unwrap();
            match obs {
                Observation::MountainCar { x, v } => {
                    assert!((-0.6..=-0.4).contains(&x));
                    assert_eq!(v, 0.0);
                }
                _ => panic!("wrong variant"),
            }
        }
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let (mut env, _) = reset(EnvId::Cartpole, 0, 200).unwrap();
        assert!(matches!(
            env.step(Action::Discrete(2)),
            Err(EnvError::InvalidAction { .. })
        ));
        assert!(matches!(
            env.step(Action::Continuous(0.5)),
            Err(EnvError::InvalidAction { .. })
        ));
        let (mut mcc, _) = reset(EnvId::MountaincarContinuous, 0, 200).unwrap();
        assert!(mcc.step(Action::Discrete(0)).is_err());
        assert!(mcc.step(Action::Continuous(f64::NAN)).is_err());
    }

    #[test]
    fn stepping_after_end_fails() {
        let (mut env, _) = reset(EnvId::Cliffwalking, 0, 1).unwrap();
        let r = env.step(Action::Discrete(0)).unwrap();
        assert!(r.truncated && !r.terminated);
        assert_eq!(env.step(Action::Discrete(0)), Err(EnvError::SteppedAfterEnd));
    }

    #[test]
    fn truncation_exactly_at_cap() {
        let (mut env, _) = reset(EnvId::Mountaincar, 3, 5).unwrap();
        for i in 1..=5 {
            let r = env.step(Action::Discrete(1)).unwrap();
            assert_eq!(r.truncated, i == 5);
            assert!(!r.terminated);
        }
    }

    #[test]
    fn zero_step_cap_rejected() {
        assert_eq!(reset(EnvId::Taxi, 0, 0).unwrap_err(), EnvError::ZeroStepCap);
    }

    #[test]
    fn observation_serde_shape() {
        let obs = Observation::Taxi {
            row: 1,
            col: 2,
            passenger: PassengerLoc::InTaxi,
            destination: Landmark::G,
        };
        let s = serde_json::to_string(&obs).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"taxi","row":1,"col":2,"passenger":"in_taxi","destination":"G"}"#
        );
        let back: Observation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, obs);
        let a: Action = serde_json::from_str("2").unwrap();
        assert_eq!(a, Action::Discrete(2));
        let c: Action = serde_json::from_str(&serde_json::to_string(&Action::Continuous(1.0)).unwrap()).unwrap();
        assert_eq!(c, Action::Continuous(1.0));
    }
}
