//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use gymtext_core::agents::{Agent, AgentKind, KnowledgeEntry};
use gymtext_core::dataset::{header_for, to_jsonl};
use gymtext_core::env::{cartpole_update, reset, Action, CartPoleState, EnvId, Observation, DEFAULT_STEP_CAP};
use gymtext_core::evaluation::{blackjack_agreement_score, normalize, RunStatus, ThresholdTable};
use gymtext_core::grounding::translate_observation;
use gymtext_core::llm::{CallTag, ChatRequest, LlmGateway, MockBackend};
use gymtext_core::policies::{expert_action, generate_dataset, rollout, tabular_policy, PolicyKind};
use gymtext_core::ppo::{self, forward, init_params, log_softmax, loss, loss_and_grad, MlpParams, PpoConfig, RolloutBatch};
use gymtext_core::scenario::{default_assets_dir, load_dataset, make_scenario, run_scenario, ScenarioLevel};
use gymtext_core::seeding::{derive_seed, rng_from_seed};
use ndarray::{Array1, Array2};
use rand::Rng;
use regex::Regex;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cliffwalking_optimality() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for seed in 0..200u64 {
        let t = rollout(EnvId::Cliffwalking, seed, DEFAULT_STEP_CAP, |o| expert_action(EnvId::Cliffwalking, o))
            .map_err(|e| e.to_string())?;
        if t.undiscounted_return() != -13.0 {
            worst.push((seed, t.undiscounted_return()));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst.is_empty() && elapsed < Duration::from_secs(1),
        format!("200 seeds, mismatches {worst:?}, {:.3}s", elapsed.as_secs_f64()),
    )
}

fn threshold_fidelity() -> Outcome {
    let table = ThresholdTable::builtin();
    let expected = [
        ("blackjack", 10.0, 20.0),
        ("cartpole", 40.0, 200.0),
        ("cliffwalking", -200.0, -13.0),
        ("mountaincar_continuous", 0.0, 94.53),
        ("mountaincar", -200.0, -87.0),
        ("acrobot", -200.0, -72.0),
        ("taxi", 0.0, 7.52),
        ("lunarlander", 120.0, 261.0),
    ];
    let mut bad = Vec::new();
    for (name, solvable, sota) in expected {
        match table.by_name(name) {
            Some(t) if t.solvable == solvable && t.sota == sota => {}
            other => bad.push(format!("{name}: {other:?}")),
        }
    }
    let cliff = table.get(EnvId::Cliffwalking).map_err(|e| e.to_string())?;
    let n = normalize(-118.0, &cliff);
    check(
        bad.is_empty() && (n - 0.4385).abs() <= 1e-4,
        format!("8 rows, mismatches {bad:?}; normalize(-118) = {n:.5}"),
    )
}

fn ppo_parameter_count() -> Outcome {
    let p = init_params(2, 3, 0).map_err(|e| e.to_string())?;
    check(p.count() == 8964, format!("{} parameters", p.count()))
}

fn ppo_seeds(env: EnvId, stop: impl Fn(&[ppo::EpochStats]) -> bool + Copy, limit: Duration) -> Result<(usize, Vec<String>, Duration), String> {
    let base = ppo::best_config(env).unwrap_or_default();
    let start = Instant::now();
    let mut passed = 0;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let cfg = PpoConfig { seed, ..base };
        let r = ppo::train_with(env, &cfg, stop).map_err(|e| e.to_string())?;
        let ok = r.stopped_early;
        passed += ok as usize;
        notes.push(format!(
            "s{seed}:{}@{}",
            if ok { "ok" } else { "no" },
            r.curve.len()
        ));
        if start.elapsed() > limit {
            notes.push("time limit".into());
            break;
        }
    }
    Ok((passed, notes, start.elapsed()))
}

fn ppo_cartpole() -> Outcome {
    let limit = Duration::from_secs(30 * 60);
    let stop = |c: &[ppo::EpochStats]| {
        c.len() >= ppo::WINDOW && c[c.len() - ppo::WINDOW..].iter().map(|e| e.mean_return).sum::<f64>() / ppo::WINDOW as f64 >= 195.0
    };
    let (passed, notes, t) = ppo_seeds(EnvId::Cartpole, stop, limit)?;
    check(
        passed >= 3 && t <= limit,
        format!("10-epoch mean >= 195 on {passed}/5 seeds [{}], {:.0}s", notes.join(" "), t.as_secs_f64()),
    )
}

fn ppo_cliffwalking() -> Outcome {
    let limit = Duration::from_secs(30 * 60);
    let stop = |c: &[ppo::EpochStats]| c.last().is_some_and(|e| e.greedy_return == -13.0);
    let (passed, notes, t) = ppo_seeds(EnvId::Cliffwalking, stop, limit)?;
    check(
        passed >= 3,
        format!("greedy -13 on {passed}/5 seeds [{}], {:.0}s", notes.join(" "), t.as_secs_f64()),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut params = init_params(2, 3, 11).map_err(|e| e.to_string())?;
    let head = params.shapes()[4];
    for v in &mut params.data[head.offset..head.offset + head.out * head.inp] {
        *v *= 100.0;
    }
    let batch = fixed_batch(&params, 24);
    let cfg = PpoConfig {
        ent_coef: 0.05,
        ..PpoConfig::default()
    };
    let (_, grad) = loss_and_grad(&params, &batch, &cfg).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.count() {
        let orig = params.data[i];
        params.data[i] = orig + h;
        let up = loss(&params, &batch, &cfg).map_err(|e| e.to_string())?.total;
        params.data[i] = orig - h;
        let down = loss(&params, &batch, &cfg).map_err(|e| e.to_string())?.total;
        params.data[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6));
    }
    let t = start.elapsed();
    check(
        worst < 1e-4 && t < Duration::from_secs(60),
        format!("{} parameters, max relative error {worst:.2e}, {:.1}s", params.count(), t.as_secs_f64()),
    )
}

fn fixed_batch(params: &MlpParams, n: usize) -> RolloutBatch {
    let mut rng = rng_from_seed(5);
    let obs = Array2::from_shape_fn((n, params.obs_dim), |_| rng.gen_range(-1.5..1.5));
    let (logits, values) = forward(params, obs.view()).unwrap();
    let logp = log_softmax(&logits);
    let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..params.action_num)).collect();
    let shifts = [0.0, 0.1, -0.1, 0.5, -0.5];
    let log_probs = Array1::from_shape_fn(n, |i| logp[[i, actions[i]]] - shifts[i % shifts.len()]);
    let mut advantages = Array1::from_shape_fn(n, |_| rng.gen_range(-2.0..2.0));
    ppo::normalize_advantages(&mut advantages);
    RolloutBatch {
        observations: obs,
        actions,
        rewards: vec![0.0; n],
        values,
        log_probs,
        advantages,
        returns: Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0)),
    }
}

fn blackjack_scorer() -> Outcome {
    let oracle = tabular_policy(EnvId::Blackjack).map_err(|e| e.to_string())?;
    let mut low = Vec::new();
    for seed in 0..100u64 {
        let hands = generate_dataset(PolicyKind::TabularOptimal, EnvId::Blackjack, 20, seed, DEFAULT_STEP_CAP)
            .map_err(|e| e.to_string())?;
        let score = blackjack_agreement_score(&hands, oracle).map_err(|e| e.to_string())?;
        if score != 20 {
            low.push((seed, score));
        }
    }
    let hand = |player_sum, dealer_showing| Observation::Blackjack {
        player_sum,
        dealer_showing,
        usable_ace: false,
    };
    // 0 = stick, 1 = hit
    let decisions = [(hand(12, 6), 0), (hand(17, 10), 0), (hand(14, 1), 1)];
    let mut wrong = Vec::new();
    for (obs, want) in decisions {
        let got = oracle.action(&obs).map_err(|e| e.to_string())?;
        if got != want {
            wrong.push(format!("{obs:?} -> {got}"));
        }
    }
    check(
        low.is_empty() && wrong.is_empty(),
        format!("100 seeds self-score 20/20 except {low:?}; quoted decisions wrong: {wrong:?}"),
    )
}

fn env_dynamics() -> Outcome {
    let s = cartpole_update(CartPoleState::default(), 10.0);
    let want = [0.0, 0.19512, 0.0, -0.29268];
    let got = [s.x, s.x_dot, s.theta, s.theta_dot];
    let cart_ok = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-5);

    let mut rng = rng_from_seed(99);
    let mut steps = 0usize;
    let mut violations = 0usize;
    let mut wall_hits = 0usize;
    let mut episode = 0u64;
    while steps < 100_000 {
        let (mut env, _) = reset(EnvId::Mountaincar, derive_seed(99, 0, episode), DEFAULT_STEP_CAP).map_err(|e| e.to_string())?;
        episode += 1;
        let mut last_v = 0.0;
        let mut last_x = -0.5;
        loop {
            // pump energy with the velocity, turn back before the goal, so
            // the car swings into the left wall
            let a = if rng.gen::<f64>() < 0.2 {
                rng.gen_range(0..3)
            } else if last_x > 0.3 || last_v < 0.0 {
                0
            } else {
                2
            };
            let r = env.step(Action::Discrete(a)).map_err(|e| e.to_string())?;
            steps += 1;
            if let Observation::MountainCar { x, v } = r.observation {
                if v.abs() > 0.07 || !(-1.2..=0.6).contains(&x) || (x == -1.2 && v != 0.0) {
                    violations += 1;
                }
                wall_hits += (x == -1.2) as usize;
                last_x = x;
                last_v = v;
            }
            if r.done() || steps >= 100_000 {
                break;
            }
        }
    }

    let n = 100_000u64;
    let mut counts = [0usize; 16];
    for i in 0..n {
        let (mut env, _) = reset(EnvId::Frozenlake, derive_seed(7, 0, i), DEFAULT_STEP_CAP).map_err(|e| e.to_string())?;
        // from the start cell, intended down -> 4, perpendicular left -> 0, right -> 1
        let r = env.step(Action::Discrete(1)).map_err(|e| e.to_string())?;
        if let Observation::FrozenLake { cell } = r.observation {
            counts[cell as usize] += 1;
        }
    }
    let freq: Vec<f64> = [4, 0, 1].iter().map(|&c| counts[c] as f64 / n as f64).collect();
    let slip_ok = freq.iter().all(|f| (f - 1.0 / 3.0).abs() <= 0.01);
    check(
        cart_ok && violations == 0 && wall_hits > 0 && slip_ok,
        format!(
            "cartpole {got:?}; mountaincar {steps} steps, {violations} bound violations, {wall_hits} wall stops; frozenlake intended/left/right {freq:.4?}"
        ),
    )
}

fn translator_golden() -> Outcome {
    #[derive(serde::Deserialize)]
    struct Case {
        state: [String; 4],
        text: String,
    }
    let cases: Vec<Case> =
        serde_json::from_str(include_str!("data/cartpole_golden.json")).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for c in &cases {
        let v: Vec<f64> = c.state.iter().map(|x| x.parse().unwrap()).collect();
        let obs = Observation::CartPole {
            x: v[0],
            v: v[1],
            theta: v[2],
            omega: v[3],
        };
        if translate_observation(EnvId::Cartpole, &obs).map_err(|e| e.to_string())? != c.text {
            mismatches += 1;
        }
    }
    check(cases.len() == 20 && mismatches == 0, format!("{} states, {mismatches} mismatches", cases.len()))
}

fn cliff_state(prompt: &str) -> Option<Observation> {
    let tail = &prompt[prompt.rfind("Current Game State: ")?..];
    let c = Regex::new(r"location \[(\d+), (\d+)\]").unwrap().captures(tail)?;
    Some(Observation::CliffWalking {
        row: c[1].parse().ok()?,
        col: c[2].parse().ok()?,
    })
}

/// Optimal actions for actor prompts; numbered notes for everything else.
fn scripted_mock() -> MockBackend {
    let counter = Arc::new(AtomicUsize::new(0));
    MockBackend::responder(move |req: &ChatRequest| {
        let prompt = req.last_user();
        match cliff_state(prompt) {
            Some(obs) if prompt.contains("Your Next Move") => {
                let a = expert_action(EnvId::Cliffwalking, &obs).unwrap().discrete().unwrap();
                format!("{{\"action\": {}}}", a + 1)
            }
            _ => format!("Note {}: stay on row 2 until the last column.", counter.fetch_add(1, Ordering::SeqCst)),
        }
    })
}

struct Lv3Run {
    trajectories: String,
    transcript: String,
    returns: Vec<f64>,
    knowledge: Vec<KnowledgeEntry>,
    purposes: Vec<String>,
    actor_prompts: Vec<String>,
}

fn lv3_cliff(kind: AgentKind) -> Result<Lv3Run, String> {
    let env = EnvId::Cliffwalking;
    let tag = CallTag {
        agent: kind.to_string(),
        env,
        level: "lv3".into(),
        seed: 0,
    };
    let mut gw = LlmGateway::new(Arc::new(scripted_mock()), "mock", tag);
    let mut agent = Agent::new(kind, env, 0);
    let cfg = make_scenario(ScenarioLevel::Lv3, env, &default_assets_dir(), 0).map_err(|e| e.to_string())?;
    let (out, record) = run_scenario(&mut agent, &mut gw, &cfg);
    if record.status != RunStatus::Completed {
        return Err(format!("{kind}: {:?}", record.error));
    }
    let trajs: Vec<_> = out.trajectories().cloned().collect();
    Ok(Lv3Run {
        trajectories: to_jsonl(&header_for(env, 0, kind.as_str(), &trajs), &trajs),
        transcript: serde_json::to_string(gw.transcript()).map_err(|e| e.to_string())?,
        returns: record.returns,
        knowledge: agent.knowledge().entries.clone(),
        purposes: gw.transcript().iter().map(|e| e.purpose.clone()).collect(),
        actor_prompts: gw
            .transcript()
            .iter()
            .filter(|e| e.purpose == "actor")
            .map(|e| e.messages.last().map(|m| m.content.clone()).unwrap_or_default())
            .collect(),
    })
}

fn mock_end_to_end() -> Outcome {
    let a = lv3_cliff(AgentKind::Exe)?;
    let b = lv3_cliff(AgentKind::Exe)?;
    let experiences = a.knowledge.iter().filter(|e| matches!(e, KnowledgeEntry::Experience { .. })).count();
    let exe_ok = a.returns.len() == 5
        && a.trajectories.lines().count() > 5
        && experiences == 5
        && a.returns.last() == Some(&-13.0)
        && a.trajectories == b.trajectories
        && a.transcript == b.transcript;

    // Reflexion: after each episode one reflection is appended at the end of
    // memory, and the next episode's actor sees all of them in that order.
    let r = lv3_cliff(AgentKind::Reflexion)?;
    let reflections: Vec<&str> = r
        .knowledge
        .iter()
        .filter_map(|e| match e {
            KnowledgeEntry::Reflection { text } => Some(text.as_str()),
            _ => None,
        })
        .collect();
    let note_index = |s: &str| s.strip_prefix("Note ").and_then(|t| t.split(':').next()).and_then(|n| n.parse::<usize>().ok());
    let indices: Vec<Option<usize>> = reflections.iter().map(|s| note_index(s)).collect();
    let increasing = indices.windows(2).all(|w| matches!((w[0], w[1]), (Some(x), Some(y)) if x < y));
    let reflection_calls = r.purposes.iter().filter(|p| *p == "learner_reflection").count();
    let last_prompt = r.actor_prompts.last().cloned().unwrap_or_default();
    let in_order = reflections[..reflections.len().saturating_sub(1)]
        .iter()
        .map(|t| last_prompt.find(t))
        .collect::<Option<Vec<_>>>()
        .is_some_and(|pos| pos.windows(2).all(|w| w[0] < w[1]));
    let reflexion_ok = reflections.len() == 5 && reflection_calls == 5 && increasing && in_order && r.returns.len() == 5;
    check(
        exe_ok && reflexion_ok,
        format!(
            "EXE returns {:?}, experiences {experiences}, rerun identical {}; Reflexion reflections {} appended in order {}, visible in order {in_order}",
            a.returns,
            a.trajectories == b.trajectories && a.transcript == b.transcript,
            reflections.len(),
            increasing
        ),
    )
}

fn scenario_budgets() -> Outcome {
    let dir = default_assets_dir();
    let mut notes = Vec::new();
    let mut ok = true;
    for env in [EnvId::Cliffwalking] {
        for level in ScenarioLevel::ALL {
            let cfg = make_scenario(level, env, &dir, 1).map_err(|e| e.to_string())?;
            let tag = CallTag {
                agent: "exe".into(),
                env,
                level: level.to_string(),
                seed: 1,
            };
            let mut gw = LlmGateway::new(Arc::new(scripted_mock()), "mock", tag);
            let mut agent = Agent::new(AgentKind::Exe, env, 1);
            let (out, record) = run_scenario(&mut agent, &mut gw, &cfg);
            let want = if level == ScenarioLevel::Lv3 { 5 } else { 1 };
            ok &= out.episodes.len() == want && record.returns.len() == want && cfg.episodes == want;
            notes.push(format!("{level}:{}", out.episodes.len()));
        }
    }
    for env in EnvId::ALL {
        for level in [ScenarioLevel::Lv2, ScenarioLevel::Lv4] {
            let cfg = make_scenario(level, env, &dir, 0).map_err(|e| e.to_string())?;
            let n = load_dataset(cfg.dataset.as_ref().unwrap(), env).map_err(|e| e.to_string())?.len();
            ok &= n == 5;
            if n != 5 {
                notes.push(format!("{env} {level} dataset {n}"));
            }
        }
    }
    check(ok, format!("episodes {}; all Lv2/Lv4 datasets hold 5 trajectories: {ok}", notes.join(" ")))
}

fn expert_goal_reaching() -> Outcome {
    let ret = |kind, env, n, seed| -> Result<Vec<f64>, String> {
        Ok(generate_dataset(kind, env, n, seed, DEFAULT_STEP_CAP)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|t| t.undiscounted_return())
            .collect())
    };
    let mc = ret(PolicyKind::ScriptedExpert, EnvId::Mountaincar, 20, 0)?;
    let mcc = ret(PolicyKind::ScriptedExpert, EnvId::MountaincarContinuous, 20, 0)?;
    let taxi = ret(PolicyKind::TabularOptimal, EnvId::Taxi, 100, 0)?;
    let taxi_mean = taxi.iter().sum::<f64>() / taxi.len() as f64;
    let mc_min = mc.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mcc_min, mcc_max) = mcc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    check(
        mc_min > -200.0 && mcc_min >= 0.0 && mcc_min >= 85.0 && mcc_max <= 96.0 && taxi_mean >= 5.0,
        format!("mountaincar min {mc_min}; continuous in [{mcc_min:.2}, {mcc_max:.2}]; taxi mean {taxi_mean:.3} over 100"),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("cliffwalking_optimality", cliffwalking_optimality),
        ("threshold_table_fidelity", threshold_fidelity),
        ("ppo_parameter_count", ppo_parameter_count),
        ("ppo_cartpole", ppo_cartpole),
        ("ppo_cliffwalking", ppo_cliffwalking),
        ("ppo_gradient_check", gradient_check),
        ("blackjack_scorer", blackjack_scorer),
        ("environment_dynamics", env_dynamics),
        ("translator_golden", translator_golden),
        ("mock_end_to_end", mock_end_to_end),
        ("scenario_budgets", scenario_budgets),
        ("expert_goal_reaching", expert_goal_reaching),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
