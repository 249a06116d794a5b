//! Text grounding: observations, transitions and per-environment
//! descriptions rendered as natural language.
//!
//! Every function here is pure. Action numbers in emitted text are 1-based.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvId, Observation, PassengerLoc, Transition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundingError {
    #[error("observation does not belong to {0}")]
    ObservationEnvMismatch(EnvId),
    #[error("action {action:?} is not valid for {env}")]
    ActionEnvMismatch { env: EnvId, action: Action },
    #[error("transition list is empty")]
    EmptyList,
}

/// The four strings that make up a grounded environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBundle {
    pub game_description: String,
    pub goal_description: String,
    pub action_description: String,
    pub observation_text: String,
}

/// One line per transition, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransitionText {
    pub lines: Vec<String>,
}

impl TransitionText {
    pub fn joined(&self) -> String {
        self.lines.join("\n")
    }
}

macro_rules! env_asset {
    ($env:literal, $kind:literal) => {
        include_str!(concat!("../../assets/grounding/", $env, "/", $kind, ".txt"))
    };
}

macro_rules! per_env {
    ($env:expr, $kind:literal) => {
        match $env {
            EnvId::Cartpole => env_asset!("cartpole", $kind),
            EnvId::Mountaincar => env_asset!("mountaincar", $kind),
            EnvId::MountaincarContinuous => env_asset!("mountaincar_continuous", $kind),
            EnvId::Cliffwalking => env_asset!("cliffwalking", $kind),
            EnvId::Taxi => env_asset!("taxi", $kind),
            EnvId::Blackjack => env_asset!("blackjack", $kind),
            EnvId::Frozenlake => env_asset!("frozenlake", $kind),
        }
    };
}

pub fn describe_game(env: EnvId) -> &'static str {
    per_env!(env, "game")
}

pub fn describe_goal(env: EnvId) -> &'static str {
    per_env!(env, "goal")
}

pub fn describe_action(env: EnvId) -> &'static str {
    per_env!(env, "action")
}

fn direction(value: f64) -> &'static str {
    if value > 0.0 {
        "right"
    } else {
        "left"
    }
}

fn landmark_name(loc: PassengerLoc) -> String {
    match loc.landmark() {
        Some(lm) => format!("location {}", lm.letter()),
        None => "the taxi".to_string(),
    }
}

pub fn translate_observation(env: EnvId, obs: &Observation) -> Result<String, GroundingError> {
    if !obs.matches(env) {
        return Err(GroundingError::ObservationEnvMismatch(env));
    }
    Ok(match *obs {
        Observation::CartPole { x, v, theta, omega } => format!(
            "The cart is positioned at {x:.3}, with a velocity of {:.2} towards the {}. \
             The pole is tilted at {:.2} radians, rotating at {:.2} radians per second towards the {}.",
            v.abs(),
            direction(v),
            theta.abs(),
            omega.abs(),
            direction(omega)
        ),
        Observation::MountainCar { x, v } => format!(
            "The car is positioned at {x:.3}, with a velocity of {:.3} towards the {}.",
            v.abs(),
            direction(v)
        ),
        Observation::CliffWalking { row, col } => {
            format!("The player is at location [{row}, {col}] in the grid world.")
        }
        Observation::Taxi {
            row,
            col,
            passenger,
            destination,
        } => {
            let passenger_text = match passenger {
                PassengerLoc::InTaxi => "The passenger is in the taxi".to_string(),
                other => format!("The passenger is waiting at {}", landmark_name(other)),
            };
            format!(
                "The taxi is at location [{row}, {col}] in the grid world. {passenger_text}, \
                 and the destination is location {}.",
                destination.letter()
            )
        }
        Observation::Blackjack {
            player_sum,
            dealer_showing,
            usable_ace,
        } => format!(
            "The player's current sum is {player_sum}, the dealer is showing {dealer_showing}, \
             and the player has a usable ace: {}.",
            if usable_ace { "yes" } else { "no" }
        ),
        Observation::FrozenLake { cell } => format!(
            "The player is at location [{}, {}] in the frozen lake.",
            cell / 4,
            cell % 4
        ),
    })
}

/// Short verb phrase for a 0-based action, followed by its 1-based number.
pub fn action_text(env: EnvId, action: Action) -> Result<String, GroundingError> {
    let bad = || GroundingError::ActionEnvMismatch { env, action };
    if !crate::env::action_space(env).contains(action) {
        return Err(bad());
    }
    let text = match (env, action) {
        (EnvId::MountaincarContinuous, Action::Continuous(f)) => {
            return Ok(format!("Take Action: Apply force {}.", py_float(f)));
        }
        (_, Action::Continuous(_)) => return Err(bad()),
        (env, Action::Discrete(a)) => {
            let verb = match env {
                EnvId::Cartpole => ["Push left", "Push right"][a],
                EnvId::Mountaincar => {
                    ["Accelerate to the left", "Don't accelerate", "Accelerate to the right"][a]
                }
                EnvId::Cliffwalking => ["Move up", "Move right", "Move down", "Move left"][a],
                EnvId::Taxi => [
                    "Move south",
                    "Move north",
                    "Move east",
                    "Move west",
                    "Pick up the passenger",
                    "Drop off the passenger",
                ][a],
                EnvId::Blackjack => ["Stick", "Hit"][a],
                EnvId::Frozenlake => ["Move left", "Move down", "Move right", "Move up"][a],
                EnvId::MountaincarContinuous => return Err(bad()),
            };
            format!("Take Action: {verb} ({}).", a + 1)
        }
    };
    Ok(text)
}

/// Formats a float the way Python's `repr` does: shortest round-trip digits,
/// always with a decimal point or exponent, exponent padded to two digits.
pub fn py_float(value: f64) -> String {
    if value.is_nan() {
        return "nan".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{value:?}");
    match s.split_once('e') {
        None => s,
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            let mantissa = mantissa.strip_suffix(".0").unwrap_or(mantissa);
            format!("{mantissa}e{sign}{digits:0>2}")
        }
    }
}

pub fn translate_transitions(
    env: EnvId,
    transitions: &[Transition],
    is_current: bool,
) -> Result<TransitionText, GroundingError> {
    let last = transitions.last().ok_or(GroundingError::EmptyList)?;
    if is_current {
        return Ok(TransitionText {
            lines: vec![translate_observation(env, &last.next_obs)?],
        });
    }
    let lines = transitions
        .iter()
        .map(|t| {
            let state = translate_observation(env, &t.obs)?;
            let action = action_text(env, t.action)?;
            let next = translate_observation(env, &t.next_obs)?;
            Ok(format!(
                "{state}.\n {action} \n Result: Reward of {},  \n Transit to {next}",
                py_float(t.reward)
            ))
        })
        .collect::<Result<Vec<_>, GroundingError>>()?;
    Ok(TransitionText { lines })
}

pub fn text_bundle(env: EnvId, obs: &Observation) -> Result<TextBundle, GroundingError> {
    Ok(TextBundle {
        game_description: describe_game(env).to_string(),
        goal_description: describe_goal(env).to_string(),
        action_description: describe_action(env).to_string(),
        observation_text: translate_observation(env, obs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Landmark;

    #[test]
    fn descriptions_are_non_empty_and_one_based() {
        for env in EnvId::ALL {
            assert!(!describe_game(env).is_empty());
            assert!(!describe_goal(env).is_empty());
            let action = describe_action(env);
            assert!(!action.is_empty());
            assert!(!action.contains("'0'"), "{env}");
            assert!(!action.ends_with('\n'));
        }
        assert!(describe_action(EnvId::Cartpole).contains("'1' to push the cart to the left"));
        assert!(describe_action(EnvId::Mountaincar).contains("'1' to accelerate to the left"));
        assert!(describe_action(EnvId::Taxi).contains("'6' to drop off"));
        assert_eq!(
            describe_goal(EnvId::Blackjack),
            "The goal is to beat the dealer by obtaining cards that sum to closer to 21, without going over 21."
        );
    }

    #[test]
    fn observation_examples() {
        let cart = Observation::CartPole { x: 0.05, v: 0.2, theta: -0.1, omega: -0.3 };
        assert_eq!(
            translate_observation(EnvId::Cartpole, &cart).unwrap(),
            "The cart is positioned at 0.050, with a velocity of 0.20 towards the right. The pole is tilted at 0.10 radians, rotating at 0.30 radians per second towards the left."
        );
        let bj = Observation::Blackjack { player_sum: 14, dealer_showing: 10, usable_ace: false };
        assert_eq!(
            translate_observation(EnvId::Blackjack, &bj).unwrap(),
            "The player's current sum is 14, the dealer is showing 10, and the player has a usable ace: no."
        );
        let cliff = Observation::CliffWalking { row: 3, col: 0 };
        assert_eq!(
            translate_observation(EnvId::Cliffwalking, &cliff).unwrap(),
            "The player is at location [3, 0] in the grid world."
        );
        let car = Observation::MountainCar { x: 0.472, v: 0.049 };
        assert_eq!(
            translate_observation(EnvId::Mountaincar, &car).unwrap(),
            "The car is positioned at 0.472, with a velocity of 0.049 towards the right."
        );
        let taxi = Observation::Taxi {
            row: 2,
            col: 1,
            passenger: PassengerLoc::Y,
            destination: Landmark::B,
        };
        assert_eq!(
            translate_observation(EnvId::Taxi, &taxi).unwrap(),
            "The taxi is at location [2, 1] in the grid world. The passenger is waiting at location Y, and the destination is location B."
        );
    }

    #[test]
    fn mismatched_observation_is_rejected() {
        let cliff = Observation::CliffWalking { row: 3, col: 0 };
        assert_eq!(
            translate_observation(EnvId::Taxi, &cliff),
            Err(GroundingError::ObservationEnvMismatch(EnvId::Taxi))
        );
    }

    #[test]
    fn py_float_matches_python_repr() {
        let cases = [
            (1.0, "1.0"),
            (-1.0, "-1.0"),
            (-100.0, "-100.0"),
            (0.1, "0.1"),
            (-0.025, "-0.025"),
            (1e-5, "1e-05"),
            (1.5e-7, "1.5e-07"),
            (1e16, "1e+16"),
            (123456789.125, "123456789.125"),
            (0.0001, "0.0001"),
        ];
        for (v, want) in cases {
            assert_eq!(py_float(v), want, "{v}");
        }
    }

    #[test]
    fn action_text_is_one_based() {
        assert_eq!(
            action_text(EnvId::Cartpole, Action::Discrete(1)).unwrap(),
            "Take Action: Push right (2)."
        );
        assert_eq!(
            action_text(EnvId::Cliffwalking, Action::Discrete(0)).unwrap(),
            "Take Action: Move up (1)."
        );
        assert!(action_text(EnvId::Cartpole, Action::Discrete(2)).is_err());
    }

    #[test]
    fn transitions_render_in_order() {
        let t = |c: u8| Transition {
            obs: Observation::CliffWalking { row: 2, col: c },
            action: Action::Discrete(1),
            reward: -1.0,
            next_obs: Observation::CliffWalking { row: 2, col: c + 1 },
            terminated: false,
            truncated: false,
        };
        let list: Vec<_> = (0..5).map(t).collect();
        let text = translate_transitions(EnvId::Cliffwalking, &list, false).unwrap();
        assert_eq!(text.lines.len(), 5);
        for (i, line) in text.lines.iter().enumerate() {
            assert!(line.starts_with(&format!("The player is at location [2, {i}]")));
        }
        assert_eq!(
            text.lines[0],
            "The player is at location [2, 0] in the grid world..\n Take Action: Move right (2). \n Result: Reward of -1.0,  \n Transit to The player is at location [2, 1] in the grid world."
        );
        let cur = translate_transitions(EnvId::Cliffwalking, &list, true).unwrap();
        assert_eq!(
            cur.lines,
            vec!["The player is at location [2, 5] in the grid world.".to_string()]
        );
        assert_eq!(
            translate_transitions(EnvId::Cliffwalking, &[], false),
            Err(GroundingError::EmptyList)
        );
    }
}
