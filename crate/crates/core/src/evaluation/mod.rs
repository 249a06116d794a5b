//! Scoring: thresholds, normalization, blackjack agreement, aggregation,
//! solvability and report export.

mod charts;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvId, Trajectory};
use crate::policies::{PolicyError, TabularPolicy};

/// Hands per blackjack scoring group.
pub const BLACKJACK_GROUP: usize = 20;

const BUILTIN_THRESHOLDS: &str = include_str!("../../assets/thresholds.csv");

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("expected {expected} episodes, got {found}")]
    WrongEpisodeCount { expected: usize, found: usize },
    #[error("cannot aggregate an empty list")]
    EmptyInput,
    #[error("no thresholds for {0}")]
    MissingThresholds(EnvId),
    #[error("invalid thresholds for {env}: solvable {solvable} must be below sota {sota}")]
    InvalidThresholds { env: String, solvable: f64, sota: f64 },
    #[error("thresholds file: {0}")]
    ThresholdsFormat(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Solvability (`solvable`) and state-of-the-art (`sota`) returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub solvable: f64,
    pub sota: f64,
}

impl Thresholds {
    pub fn new(solvable: f64, sota: f64) -> Option<Self> {
        (solvable < sota).then_some(Thresholds { solvable, sota })
    }
}

/// Thresholds by environment name. Names outside [`EnvId`] are kept so the
/// table can hold reference rows for environments not implemented here.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    entries: BTreeMap<String, Thresholds>,
}

impl ThresholdTable {
    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN_THRESHOLDS).expect("shipped thresholds are valid")
    }

    /// Parse `env,solvable,sota` rows.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut entries = BTreeMap::new();
        for row in reader.deserialize::<(String, f64, f64)>() {
            let (name, solvable, sota) = row.map_err(|e| EvalError::ThresholdsFormat(e.to_string()))?;
            let name = name.trim().to_ascii_lowercase();
            let t = Thresholds::new(solvable, sota).ok_or_else(|| EvalError::InvalidThresholds {
                env: name.clone(),
                solvable,
                sota,
            })?;
            entries.insert(name, t);
        }
        Ok(ThresholdTable { entries })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(&text)
    }

    pub fn get(&self, env: EnvId) -> Result<Thresholds, EvalError> {
        self.by_name(env.as_str()).ok_or(EvalError::MissingThresholds(env))
    }

    pub fn by_name(&self, name: &str) -> Option<Thresholds> {
        self.entries.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Thresholds)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
    Skipped,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
            RunStatus::Skipped => "skipped",
        }
    }
}

/// Outcome of one (agent, env, level, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub agent: String,
    pub env: EnvId,
    pub level: String,
    pub seed: u64,
    /// Per-episode returns; blackjack entries are 20-hand agreement scores.
    pub returns: Vec<f64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
    pub wall_ms: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.status != RunStatus::Completed
    }

    /// The cell's score: the return of its last episode.
    pub fn score(&self) -> Option<f64> {
        if self.failed() {
            return None;
        }
        self.returns.last().copied()
    }
}

/// Sum of rewards.
pub fn undiscounted_return(traj: &Trajectory) -> f64 {
    traj.undiscounted_return()
}

/// Map `r` onto the solvable (0) to sota (1) scale; at or below solvable is -1.
pub fn normalize(r: f64, t: &Thresholds) -> f64 {
    if r > t.solvable {
        (r - t.solvable) / (t.sota - t.solvable)
    } else {
        -1.0
    }
}

/// Number of hands in which every decision matched the oracle.
pub fn blackjack_agreement_score(hands: &[Trajectory], oracle: &TabularPolicy) -> Result<u32, EvalError> {
    if hands.len() != BLACKJACK_GROUP {
        return Err(EvalError::WrongEpisodeCount {
            expected: BLACKJACK_GROUP,
            found: hands.len(),
        });
    }
    let mut score = 0;
    for hand in hands {
        let mut agree = true;
        for tr in &hand.transitions {
            if Some(oracle.action(&tr.obs)?) != tr.action.discrete() {
                agree = false;
                break;
            }
        }
        score += u32::from(agree);
    }
    Ok(score)
}

/// Agreement scores for consecutive groups of 20 hands.
pub fn blackjack_group_scores(hands: &[Trajectory], oracle: &TabularPolicy) -> Result<Vec<u32>, EvalError> {
    if hands.is_empty() || hands.len() % BLACKJACK_GROUP != 0 {
        return Err(EvalError::WrongEpisodeCount {
            expected: BLACKJACK_GROUP * (hands.len() / BLACKJACK_GROUP).max(1),
            found: hands.len(),
        });
    }
    hands
        .chunks(BLACKJACK_GROUP)
        .map(|g| blackjack_agreement_score(g, oracle))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub iqr: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median, interquartile range (linear-interpolation quartiles) and maximum.
pub fn aggregate(values: &[f64]) -> Result<Aggregate, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(Aggregate {
        median,
        iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        max: sorted[n - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvabilityCell {
    pub env: EnvId,
    pub level: String,
    pub agent: String,
    pub seeds: usize,
    pub aggregate: Aggregate,
    pub median_normalized: f64,
    pub solved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolvabilityTable {
    pub cells: Vec<SolvabilityCell>,
    /// Per level, the number of environments solved by at least one agent.
    pub solved_per_level: BTreeMap<String, usize>,
    /// Per agent, the number of environments solved at some level.
    pub solved_per_agent: BTreeMap<String, usize>,
    /// Environments solved by any agent at any level.
    pub solved_envs: Vec<EnvId>,
}

type CellKey = (EnvId, String, String);

fn group_scores(records: &[RunRecord]) -> BTreeMap<CellKey, Vec<f64>> {
    let mut groups: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((r.env, r.level.clone(), r.agent.clone())).or_default();
        if let Some(s) = r.score() {
            entry.push(s);
        }
    }
    groups
}

/// Per (env, level, agent): solved iff the normalized median score is above 0.
pub fn solvability_table(records: &[RunRecord], thresholds: &ThresholdTable) -> Result<SolvabilityTable, EvalError> {
    let mut table = SolvabilityTable::default();
    let mut per_level: BTreeMap<String, Vec<EnvId>> = BTreeMap::new();
    let mut per_agent: BTreeMap<String, Vec<EnvId>> = BTreeMap::new();
    for ((env, level, agent), scores) in group_scores(records) {
        per_level.entry(level.clone()).or_default();
        per_agent.entry(agent.clone()).or_default();
        if scores.is_empty() {
            continue;
        }
        let t = thresholds.get(env)?;
        let aggregate = aggregate(&scores)?;
        let median_normalized = normalize(aggregate.median, &t);
        let solved = median_normalized > 0.0;
        if solved {
            per_level.entry(level.clone()).or_default().push(env);
            per_agent.entry(agent.clone()).or_default().push(env);
            table.solved_envs.push(env);
        }
        table.cells.push(SolvabilityCell {
            env,
            level,
            agent,
            seeds: scores.len(),
            aggregate,
            median_normalized,
            solved,
        });
    }
    let count = |mut v: Vec<EnvId>| {
        v.sort();
        v.dedup();
        v.len()
    };
    table.solved_per_level = per_level.into_iter().map(|(k, v)| (k, count(v))).collect();
    table.solved_per_agent = per_agent.into_iter().map(|(k, v)| (k, count(v))).collect();
    table.solved_envs.sort();
    table.solved_envs.dedup();
    Ok(table)
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{}", (x * 1e6).round() / 1e6)
    } else {
        String::new()
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), EvalError> {
    let io_err = |source: io::Error| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| io_err(io::Error::other(e.to_string()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(io::Error::other(e.to_string())))?;
    crate::fsutil::write_atomic(path, &bytes).map_err(io_err)
}

pub const RESULTS_HEADER: [&str; 14] = [
    "agent",
    "env",
    "level",
    "seed",
    "status",
    "episodes",
    "returns",
    "score",
    "normalized",
    "prompt_tokens",
    "completion_tokens",
    "cost",
    "wall_ms",
    "error",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "env",
    "level",
    "agent",
    "seeds",
    "median",
    "iqr",
    "max",
    "median_normalized",
    "solved",
];

pub const COSTS_HEADER: [&str; 6] = ["scope", "name", "time_s", "cost_usd", "prompt_tokens", "completion_tokens"];

/// Files produced by [`export_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub costs: PathBuf,
    pub radar: PathBuf,
    pub heatmap: PathBuf,
}

/// Write results.csv, summary.csv, costs.csv, radar.svg and heatmap.svg.
pub fn export_report(records: &[RunRecord], thresholds: &ThresholdTable, out_dir: &Path) -> Result<ReportFiles, EvalError> {
    fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.env, &a.level, &a.agent, a.seed).cmp(&(b.env, &b.level, &b.agent, b.seed))
    });

    let mut rows = Vec::with_capacity(sorted.len());
    for r in &sorted {
        let score = r.score();
        let normalized = match score {
            Some(s) => fmt_num(normalize(s, &thresholds.get(r.env)?)),
            None => String::new(),
        };
        rows.push(vec![
            r.agent.clone(),
            r.env.to_string(),
            r.level.clone(),
            r.seed.to_string(),
            r.status.as_str().to_string(),
            r.returns.len().to_string(),
            r.returns.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";"),
            score.map(fmt_num).unwrap_or_default(),
            normalized,
            r.prompt_tokens.to_string(),
            r.completion_tokens.to_string(),
            fmt_num(r.cost),
            r.wall_ms.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    let files = ReportFiles {
        results: out_dir.join("results.csv"),
        summary: out_dir.join("summary.csv"),
        costs: out_dir.join("costs.csv"),
        radar: out_dir.join("radar.svg"),
        heatmap: out_dir.join("heatmap.svg"),
    };
    write_csv(&files.results, &RESULTS_HEADER, rows)?;

    let table = solvability_table(records, thresholds)?;
    let summary_rows = table
        .cells
        .iter()
        .map(|c| {
            vec![
                c.env.to_string(),
                c.level.clone(),
                c.agent.clone(),
                c.seeds.to_string(),
                fmt_num(c.aggregate.median),
                fmt_num(c.aggregate.iqr),
                fmt_num(c.aggregate.max),
                fmt_num(c.median_normalized),
                c.solved.to_string(),
            ]
        })
        .collect();
    write_csv(&files.summary, &SUMMARY_HEADER, summary_rows)?;

    let mut by_env: BTreeMap<String, (u64, f64, u64, u64)> = BTreeMap::new();
    let mut by_agent: BTreeMap<String, (u64, f64, u64, u64)> = BTreeMap::new();
    for r in &sorted {
        for (map, key) in [(&mut by_env, r.env.to_string()), (&mut by_agent, r.agent.clone())] {
            let e = map.entry(key).or_default();
            e.0 += r.wall_ms;
            e.1 += r.cost;
            e.2 += r.prompt_tokens;
            e.3 += r.completion_tokens;
        }
    }
    let mut cost_rows = Vec::new();
    for (scope, map) in [("env", &by_env), ("agent", &by_agent)] {
        for (name, (ms, cost, p, c)) in map {
            cost_rows.push(vec![
                scope.to_string(),
                name.clone(),
                fmt_num(*ms as f64 / 1000.0),
                fmt_num(*cost),
                p.to_string(),
                c.to_string(),
            ]);
        }
    }
    if !sorted.is_empty() {
        let (ms, cost, p, c) = by_env.values().fold((0, 0.0, 0, 0), |acc, e| {
            (acc.0 + e.0, acc.1 + e.1, acc.2 + e.2, acc.3 + e.3)
        });
        cost_rows.push(vec![
            "total".into(),
            "all".into(),
            fmt_num(ms as f64 / 1000.0),
            fmt_num(cost),
            p.to_string(),
            c.to_string(),
        ]);
    }
    write_csv(&files.costs, &COSTS_HEADER, cost_rows)?;

    let write_svg = |path: &Path, svg: String| {
        crate::fsutil::write_atomic(path, svg.as_bytes()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    write_svg(&files.radar, charts::radar(&table))?;
    write_svg(&files.heatmap, charts::heatmap(&table))?;
    Ok(files)
}
