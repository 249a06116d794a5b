//! Experiment grids: configuration, parallel execution, on-disk layout,
//! resume and reporting.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentKind};
use crate::dataset::{header_for, write_file, DatasetError};
use crate::env::{EnvId, DEFAULT_STEP_CAP};
use crate::evaluation::{export_report, EvalError, ReportFiles, RunRecord, RunStatus, ThresholdTable};
use crate::llm::{
    CallTag, ChatBackend, LlmError, LlmGateway, MockBackend, MockScript, OpenAiBackend, TokenBudget, UsageRecord,
    DEFAULT_MODEL,
};
use crate::policies::{generate_dataset, PolicyError, PolicyKind};
use crate::scenario::{default_assets_dir, make_scenario, run_scenario, ScenarioError, ScenarioLevel};

pub const DEFAULT_WORKERS: usize = 4;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_RPM: u32 = 60;

const SNAPSHOT: &str = "config.toml";
const RESOLVED: &str = "resolved.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config differs from the snapshot in {0}")]
    ConfigDrift(PathBuf),
    #[error("{0} is not a run directory (no {SNAPSHOT})")]
    NotARunDir(PathBuf),
    #[error("no records in {0}")]
    EmptyRun(PathBuf),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("JSON error in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    /// Mock script file (JSON), relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Inline mock script; takes precedence over `script`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockScript>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}
fn default_rpm() -> u32 {
    DEFAULT_RPM
}
fn default_cap() -> u32 {
    DEFAULT_STEP_CAP
}
fn default_workers() -> usize {
    DEFAULT_WORKERS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub agents: Vec<AgentKind>,
    pub envs: Vec<EnvId>,
    pub levels: Vec<ScenarioLevel>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_rpm")]
    pub rate_limit_rpm: u32,
    #[serde(default = "default_cap")]
    pub step_cap: u32,
    #[serde(default)]
    pub step_caps: BTreeMap<EnvId, u32>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parse a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<(Self, String), HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        rebase(&mut config.backend.script);
        rebase(&mut config.assets_dir);
        rebase(&mut config.output_dir);
        Ok((config, text))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let empty = |name: &str| HarnessError::Config(format!("`{name}` must not be empty"));
        if self.agents.is_empty() {
            return Err(empty("agents"));
        }
        if self.envs.is_empty() {
            return Err(empty("envs"));
        }
        if self.levels.is_empty() {
            return Err(empty("levels"));
        }
        if self.seeds.is_empty() {
            return Err(empty("seeds"));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("`workers` must be at least 1".into()));
        }
        if self.step_cap == 0 || self.step_caps.values().any(|&c| c == 0) {
            return Err(HarnessError::Config("step caps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_cap_for(&self, env: EnvId) -> u32 {
        self.step_caps.get(&env).copied().unwrap_or(self.step_cap)
    }

    pub fn assets_dir(&self) -> PathBuf {
        self.assets_dir.clone().unwrap_or_else(default_assets_dir)
    }

    /// The run grid in a fixed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &env in &self.envs {
            for &level in &self.levels {
                for &agent in &self.agents {
                    for &seed in &self.seeds {
                        cells.push(Cell { agent, env, level, seed });
                    }
                }
            }
        }
        cells
    }

    fn mock_script(&self) -> Result<MockScript, HarnessError> {
        if let Some(script) = &self.backend.mock {
            return Ok(script.clone());
        }
        if let Some(path) = &self.backend.script {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            return serde_json::from_str(&text).map_err(|source| HarnessError::Json {
                path: path.clone(),
                source,
            });
        }
        Ok(MockScript::Cycle {
            replies: vec!["{\"action\": 1}".into()],
        })
    }
}

/// One (agent, env, level, seed) grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub agent: AgentKind,
    pub env: EnvId,
    pub level: ScenarioLevel,
    pub seed: u64,
}

impl Cell {
    /// File stem used for every artifact of this cell.
    pub fn id(&self) -> String {
        format!("{}__{}__{}__s{}", self.agent, self.env, self.level, self.seed)
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn record(&self, cell: &Cell) -> PathBuf {
        self.root.join("records").join(format!("{}.json", cell.id()))
    }

    pub fn trajectory(&self, cell: &Cell) -> PathBuf {
        self.root.join("trajectories").join(format!("{}.jsonl", cell.id()))
    }

    pub fn transcript(&self, cell: &Cell) -> PathBuf {
        self.root.join("transcripts").join(format!("{}.jsonl", cell.id()))
    }

    pub fn usage(&self, cell: &Cell) -> PathBuf {
        self.root.join("usage").join(format!("{}.jsonl", cell.id()))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    /// Every record in the directory, sorted by file name.
    pub fn records(&self) -> Result<Vec<RunRecord>, HarnessError> {
        let dir = self.root.join("records");
        let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let text = fs::read_to_string(&p).map_err(io_err(&p))?;
                serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: p, source })
            })
            .collect()
    }

    /// Every usage record in the directory.
    pub fn usage_records(&self) -> Result<Vec<UsageRecord>, HarnessError> {
        let dir = self.root.join("usage");
        let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries.filter_map(|e| e.ok().map(|e| e.path())).collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            for line in text.lines().filter(|l| !l.is_empty()) {
                out.push(serde_json::from_str(line).map_err(|source| HarnessError::Json {
                    path: p.clone(),
                    source,
                })?);
            }
        }
        Ok(out)
    }

    fn completed(&self, cell: &Cell) -> bool {
        fs::read_to_string(self.record(cell))
            .ok()
            .and_then(|t| serde_json::from_str::<RunRecord>(&t).ok())
            .is_some_and(|r| r.status == RunStatus::Completed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: usize,
    pub already_complete: usize,
    pub completed: usize,
    pub failed: usize,
    pub skipped: usize,
}

impl RunSummary {
    /// All cells in the grid have completed records.
    pub fn all_completed(&self) -> bool {
        self.failed == 0 && self.skipped == 0
    }
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    crate::fsutil::write_atomic(path, bytes).map_err(io_err(path))
}

struct Shared {
    live: Option<Arc<dyn ChatBackend>>,
    script: MockScript,
    budget: Option<Arc<TokenBudget>>,
}

fn budget_record(cell: &Cell, limit: u64) -> RunRecord {
    RunRecord {
        agent: cell.agent.to_string(),
        env: cell.env,
        level: cell.level.to_string(),
        seed: cell.seed,
        returns: Vec::new(),
        prompt_tokens: 0,
        completion_tokens: 0,
        cost: 0.0,
        wall_ms: 0,
        status: RunStatus::Skipped,
        error: Some(LlmError::BudgetExceeded(limit).to_string()),
    }
}

fn run_cell(config: &ExperimentConfig, dir: &RunDir, shared: &Shared, cell: Cell) -> Result<RunRecord, HarnessError> {
    if let Some(budget) = &shared.budget {
        if budget.exhausted() {
            let record = budget_record(&cell, budget.limit());
            write_record(dir, &cell, &record)?;
            return Ok(record);
        }
    }
    let backend: Arc<dyn ChatBackend> = match &shared.live {
        Some(b) => Arc::clone(b),
        None => Arc::new(MockBackend::new(shared.script.clone())),
    };
    let tag = CallTag {
        agent: cell.agent.to_string(),
        env: cell.env,
        level: cell.level.to_string(),
        seed: cell.seed,
    };
    let mut gw = LlmGateway::new(backend, config.model.clone(), tag);
    if let Some(budget) = &shared.budget {
        gw = gw.with_budget(Arc::clone(budget));
    }
    let record = match make_scenario(cell.level, cell.env, &config.assets_dir(), cell.seed) {
        Ok(mut scenario) => {
            scenario.step_cap = config.step_cap_for(cell.env);
            let mut agent = Agent::new(cell.agent, cell.env, cell.seed);
            let (output, record) = run_scenario(&mut agent, &mut gw, &scenario);
            let trajectories: Vec<_> = output.trajectories().cloned().collect();
            let header = header_for(cell.env, cell.seed, cell.agent.as_str(), &trajectories);
            write_file(&dir.trajectory(&cell), &header, &trajectories)?;
            record
        }
        Err(e) => RunRecord {
            status: RunStatus::Failed,
            error: Some(e.to_string()),
            ..budget_record(&cell, 0)
        },
    };
    write(&dir.transcript(&cell), to_jsonl(gw.transcript()).as_bytes())?;
    write(&dir.usage(&cell), to_jsonl(&gw.ledger().records).as_bytes())?;
    write_record(dir, &cell, &record)?;
    Ok(record)
}

fn write_record(dir: &RunDir, cell: &Cell, record: &RunRecord) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(record).expect("record serializes");
    text.push('\n');
    write(&dir.record(cell), text.as_bytes())
}

fn execute(config: &ExperimentConfig, dir: &RunDir) -> Result<RunSummary, HarnessError> {
    let live: Option<Arc<dyn ChatBackend>> = match config.backend.kind {
        BackendKind::Live => Some(Arc::new(OpenAiBackend::from_env()?.with_rate_limit(config.rate_limit_rpm))),
        BackendKind::Mock => None,
    };
    let shared = Shared {
        live,
        script: config.mock_script()?,
        budget: config.max_tokens.map(|t| Arc::new(TokenBudget::new(t))),
    };
    let cells = config.cells();
    let (done, todo): (Vec<Cell>, Vec<Cell>) = cells.into_iter().partition(|c| dir.completed(c));
    info!("{} cells to run, {} already complete", todo.len(), done.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<Result<RunRecord, HarnessError>> =
        pool.install(|| todo.par_iter().map(|&cell| run_cell(config, dir, &shared, cell)).collect());
    let mut summary = RunSummary {
        executed: todo.len(),
        already_complete: done.len(),
        completed: done.len(),
        ..RunSummary::default()
    };
    for (cell, result) in todo.iter().zip(results) {
        let record = result?;
        match record.status {
            RunStatus::Completed => summary.completed += 1,
            RunStatus::Failed => {
                warn!("{} failed: {}", cell.id(), record.error.as_deref().unwrap_or(""));
                summary.failed += 1
            }
            RunStatus::Skipped => summary.skipped += 1,
        }
    }
    Ok(summary)
}

/// Start a run in `dir`, snapshotting the config text and its resolved form.
pub fn run(config: &ExperimentConfig, config_text: &str, dir: &Path) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let run_dir = RunDir::new(dir);
    let resolved = serde_json::to_string_pretty(config).expect("config serializes");
    let resolved_path = dir.join(RESOLVED);
    match fs::read_to_string(&resolved_path) {
        Ok(existing) if existing != resolved => return Err(HarnessError::ConfigDrift(dir.to_path_buf())),
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            write(&dir.join(SNAPSHOT), config_text.as_bytes())?;
            write(&resolved_path, resolved.as_bytes())?;
        }
        Err(e) => return Err(io_err(&resolved_path)(e)),
    }
    execute(config, &run_dir)
}

/// Load the resolved config a run directory was started with.
pub fn load_snapshot(dir: &Path) -> Result<ExperimentConfig, HarnessError> {
    let path = dir.join(RESOLVED);
    if !dir.join(SNAPSHOT).is_file() || !path.is_file() {
        return Err(HarnessError::NotARunDir(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path, source })
}

/// Finish the cells of `dir` that lack a completed record. When `supplied`
/// is given it must equal the snapshot.
pub fn resume(dir: &Path, supplied: Option<&ExperimentConfig>) -> Result<RunSummary, HarnessError> {
    let snapshot = load_snapshot(dir)?;
    if let Some(config) = supplied {
        let a = serde_json::to_value(config).expect("config serializes");
        let b = serde_json::to_value(&snapshot).expect("config serializes");
        if a != b {
            return Err(HarnessError::ConfigDrift(dir.to_path_buf()));
        }
    }
    execute(&snapshot, &RunDir::new(dir))
}

/// Export the evaluation report of `dir` into `dir/report`.
pub fn report(dir: &Path, thresholds: Option<&Path>) -> Result<ReportFiles, HarnessError> {
    let run_dir = RunDir::new(dir);
    let records = run_dir.records()?;
    if records.is_empty() {
        return Err(HarnessError::EmptyRun(dir.to_path_buf()));
    }
    let table = match thresholds {
        Some(p) => ThresholdTable::load(p)?,
        None => ThresholdTable::builtin(),
    };
    Ok(export_report(&records, &table, &run_dir.report())?)
}

/// Generate a dataset with a reference policy and write it to `out`.
pub fn expert_gen(env: EnvId, policy: PolicyKind, n: usize, seed: u64, step_cap: u32, out: &Path) -> Result<(), HarnessError> {
    let trajectories = generate_dataset(policy, env, n, seed, step_cap)?;
    let header = header_for(env, seed, policy.as_str(), &trajectories);
    write_file(out, &header, &trajectories)?;
    Ok(())
}
