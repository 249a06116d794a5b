//! JSONL trajectory files: one header object, then one object per transition.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvId, Observation, Trajectory, Transition};

/// Written into the `created` header field. Fixed so regenerated files are
/// byte-identical.
pub const CREATED_BY: &str = concat!("gymtext ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("file has no header")]
    MissingHeader,
    #[error("dataset is for {found}, expected {expected}")]
    EnvMismatch { expected: EnvId, found: EnvId },
    #[error("episode {episode}: stored return {stored} but transitions sum to {computed}")]
    ReturnMismatch { episode: usize, stored: f64, computed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub env: EnvId,
    pub seed: u64,
    pub policy: String,
    pub created: String,
    pub episode_seeds: Vec<u64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row {
    episode: usize,
    t: usize,
    obs: Observation,
    action: Action,
    reward: f64,
    next_obs: Observation,
    terminated: bool,
    truncated: bool,
}

pub fn header_for(env: EnvId, seed: u64, policy: &str, trajectories: &[Trajectory]) -> TrajectoryHeader {
    TrajectoryHeader {
        env,
        seed,
        policy: policy.to_string(),
        created: CREATED_BY.to_string(),
        episode_seeds: trajectories.iter().map(|t| t.seed).collect(),
        returns: trajectories.iter().map(|t| t.undiscounted_return()).collect(),
    }
}

pub fn to_jsonl(header: &TrajectoryHeader, trajectories: &[Trajectory]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for (episode, traj) in trajectories.iter().enumerate() {
        for (t, tr) in traj.transitions.iter().enumerate() {
            let row = Row {
                episode,
                t,
                obs: tr.obs,
                action: tr.action,
                reward: tr.reward,
                next_obs: tr.next_obs,
                terminated: tr.terminated,
                truncated: tr.truncated,
            };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<(TrajectoryHeader, Vec<Trajectory>), DatasetError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines.next().ok_or(DatasetError::MissingHeader)?;
    let header: TrajectoryHeader = serde_json::from_str(htext).map_err(|e| DatasetError::Malformed {
        line: hline + 1,
        message: e.to_string(),
    })?;
    let mut trajectories: Vec<Trajectory> = header
        .episode_seeds
        .iter()
        .map(|&s| Trajectory::new(header.env, s))
        .collect();
    for (i, line) in lines {
        let row: Row = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        let traj = trajectories.get_mut(row.episode).ok_or_else(|| DatasetError::Malformed {
            line: i + 1,
            message: format!("episode {} not declared in header", row.episode),
        })?;
        if row.t != traj.transitions.len() {
            return Err(DatasetError::Malformed {
                line: i + 1,
                message: format!("expected t = {}, found {}", traj.transitions.len(), row.t),
            });
        }
        if !row.obs.matches(header.env) || !row.next_obs.matches(header.env) {
            return Err(DatasetError::Malformed {
                line: i + 1,
                message: format!("observation does not belong to {}", header.env),
            });
        }
        traj.transitions.push(Transition {
            obs: row.obs,
            action: row.action,
            reward: row.reward,
            next_obs: row.next_obs,
            terminated: row.terminated,
            truncated: row.truncated,
        });
    }
    if header.returns.len() != trajectories.len() {
        return Err(DatasetError::Malformed {
            line: hline + 1,
            message: "returns and episode_seeds differ in length".into(),
        });
    }
    for (episode, (traj, &stored)) in trajectories.iter().zip(&header.returns).enumerate() {
        let computed = traj.undiscounted_return();
        if (computed - stored).abs() > 1e-9 {
            return Err(DatasetError::ReturnMismatch {
                episode,
                stored,
                computed,
            });
        }
    }
    Ok((header, trajectories))
}

/// Write atomically: a temporary sibling file is renamed into place.
pub fn write_file(path: &Path, header: &TrajectoryHeader, trajectories: &[Trajectory]) -> Result<(), DatasetError> {
    crate::fsutil::write_atomic(path, to_jsonl(header, trajectories).as_bytes())?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<(TrajectoryHeader, Vec<Trajectory>), DatasetError> {
    parse_jsonl(&fs::read_to_string(path)?)
}
