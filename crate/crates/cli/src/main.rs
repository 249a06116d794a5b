//! `gymtext`: run experiment grids, resume them, report, generate datasets
//! and train the PPO baseline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use gymtext_core::env::{EnvId, DEFAULT_STEP_CAP};
use gymtext_core::harness::{self, BackendKind, ExperimentConfig, RunSummary};
use gymtext_core::policies::PolicyKind;
use gymtext_core::ppo::{self, PpoConfig};

#[derive(Parser)]
#[command(name = "gymtext", version, about = "Language agents on text-grounded control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        /// Use seeds 0..k instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finish the incomplete cells of a run directory.
    Resume {
        dir: PathBuf,
        /// Fail unless this config matches the snapshot.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write results, summary, costs and charts for a run directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Generate a trajectory dataset with a reference policy.
    ExpertGen {
        #[arg(long)]
        env: EnvId,
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        step_cap: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the PPO baseline, optionally after a hyperparameter grid search.
    PpoTrain {
        #[arg(long)]
        env: EnvId,
        /// Search the full grid over `--seeds` seeds first.
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        epochs: usize,
        #[arg(long, default_value = "ppo_out")]
        out: PathBuf,
    },
}

fn print_summary(s: &RunSummary) {
    println!(
        "executed {} cells ({} already complete): {} completed, {} failed, {} skipped",
        s.executed, s.already_complete, s.completed, s.failed, s.skipped
    );
}

fn exit_for(s: &RunSummary) -> ExitCode {
    if s.all_completed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            config,
            backend,
            seeds,
            out,
        } => {
            let (mut cfg, text) = ExperimentConfig::load(&config)?;
            if let Some(b) = backend {
                cfg.backend.kind = match b {
                    Backend::Mock => BackendKind::Mock,
                    Backend::Live => BackendKind::Live,
                };
            }
            if let Some(k) = seeds {
                cfg.seeds = (0..k).collect();
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or("no output directory: pass --out or set output_dir")?;
            let summary = harness::run(&cfg, &text, &dir)?;
            print_summary(&summary);
            println!("run directory: {}", dir.display());
            Ok(exit_for(&summary))
        }
        Command::Resume { dir, config } => {
            let supplied = match config {
                Some(p) => Some(ExperimentConfig::load(&p)?.0),
                None => None,
            };
            let summary = harness::resume(&dir, supplied.as_ref())?;
            print_summary(&summary);
            Ok(exit_for(&summary))
        }
        Command::Report { dir, thresholds } => {
            let files = harness::report(&dir, thresholds.as_deref())?;
            for p in [&files.results, &files.summary, &files.costs, &files.radar, &files.heatmap] {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExpertGen {
            env,
            policy,
            n,
            seed,
            step_cap,
            out,
        } => {
            harness::expert_gen(env, policy, n, seed, step_cap, &out)?;
            println!("wrote {n} episodes to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::PpoTrain {
            env,
            grid,
            seeds,
            seed,
            epochs,
            out,
        } => {
            std::fs::create_dir_all(&out)?;
            let base = PpoConfig {
                epochs,
                ..ppo::best_config(env).unwrap_or_default()
            };
            let cfg = if grid {
                let seed_list: Vec<u64> = (0..seeds).collect();
                let result = ppo::grid_search(env, &ppo::full_grid(&base), &seed_list)?;
                let path = out.join(format!("{env}_grid.csv"));
                ppo::write_grid_csv(&path, &result)?;
                println!("{}", path.display());
                result.best
            } else {
                base
            };
            let result = ppo::train(env, &PpoConfig { seed, ..cfg })?;
            let curve = out.join(format!("{env}_curve.csv"));
            let checkpoint = out.join(format!("{env}_ppo.json"));
            ppo::write_curve_csv(&curve, &result.curve)?;
            ppo::save_checkpoint(&checkpoint, &result)?;
            println!(
                "lr {} gamma {} ent_coef {} repeat {}: {} epochs, 10-epoch mean {:.2}, greedy {:.2}",
                cfg.lr,
                cfg.gamma,
                cfg.ent_coef,
                cfg.repeat,
                result.curve.len(),
                result.final_mean(),
                result.final_greedy()
            );
            println!("{}\n{}", curve.display(), checkpoint.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
