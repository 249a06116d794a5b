mod common;

use std::fs;

use common::{expert_mock, gateway};
use gymtext_core::agents::{Agent, AgentKind, KnowledgeEntry};
use gymtext_core::dataset::{header_for, to_jsonl};
use gymtext_core::env::{EnvId, Observation, DEFAULT_STEP_CAP};
use gymtext_core::evaluation::RunStatus;
use gymtext_core::llm::{MockBackend, MockScript};
use gymtext_core::policies::{generate_dataset, tabular_policy, PolicyKind};
use gymtext_core::scenario::{
    dataset_path, default_assets_dir, expert_prompt_path, load_dataset, make_scenario, run_offline, run_scenario,
    run_self_guided, run_static, ScenarioError, ScenarioLevel, ScenarioOutput, DATASET_SEED,
};

#[test]
fn lv1_with_optimal_replies_reaches_goal_in_13() {
    let env = EnvId::Cliffwalking;
    for kind in [AgentKind::Naive, AgentKind::Exe] {
        let mut gw = gateway(expert_mock(env), env);
        let mut agent = Agent::new(kind, env, 3);
        let ep = run_static(&mut agent, &mut gw, env, None, 3, DEFAULT_STEP_CAP).unwrap();
        assert_eq!(ep.score, -13.0);
        let first = &gw.transcript().iter().find(|e| e.purpose == "actor").unwrap().messages;
        assert!(!first.last().unwrap().content.contains("Here are examples of expert decisions"));
    }
}

#[test]
fn lv5_prompt_carries_expert_asset() {
    let env = EnvId::Cliffwalking;
    let cfg = make_scenario(ScenarioLevel::Lv5, env, &default_assets_dir(), 1).unwrap();
    let text = fs::read_to_string(cfg.expert_prompt.as_ref().unwrap()).unwrap();
    let mut gw = gateway(expert_mock(env), env);
    let mut agent = Agent::new(AgentKind::Cot, env, 1);
    let (out, record) = run_scenario(&mut agent, &mut gw, &cfg);
    assert_eq!(record.status, RunStatus::Completed, "{:?}", record.error);
    assert_eq!(out.returns(), vec![-13.0]);
    let actor = gw.transcript().iter().find(|e| e.purpose == "actor").unwrap();
    let user = &actor.messages.last().unwrap().content;
    let pos = user.find(&text).expect("expert text verbatim");
    assert!(pos < user.rfind("Current Game State:").unwrap());
}

#[test]
fn offline_loop_absorbs_then_updates_five_times() {
    let env = EnvId::Cliffwalking;
    let data = load_dataset(&dataset_path(&default_assets_dir(), env, PolicyKind::ScriptedExpert), env).unwrap();
    let mut gw = gateway(expert_mock(env), env);
    let mut agent = Agent::new(AgentKind::Exe, env, 2);
    let ep = run_offline(&mut agent, &mut gw, env, &data, 2, DEFAULT_STEP_CAP).unwrap();
    assert_eq!(ep.score, -13.0);
    assert_eq!(agent.updates(), 5);
    let k = &agent.knowledge().entries;
    assert_eq!(k.len(), 6);
    assert!(k[1..].iter().all(|e| matches!(e, KnowledgeEntry::Experience { .. })));
    let purposes: Vec<_> = gw.transcript().iter().map(|e| e.purpose.as_str()).collect();
    let first_actor = purposes.iter().position(|p| *p == "actor").unwrap();
    assert_eq!(purposes[..first_actor].iter().filter(|p| **p == "critic").count(), 5);
    assert_eq!(purposes[first_actor - 1], "learner_suggestion");
    // Evaluation starts from a seed outside the dataset.
    assert!(data.iter().all(|t| t.seed != gymtext_core::scenario::eval_seed(2, 0)));

    let mut agent = Agent::new(AgentKind::Reflexion, env, 2);
    let mut gw = gateway(expert_mock(env), env);
    run_offline(&mut agent, &mut gw, env, &data, 2, DEFAULT_STEP_CAP).unwrap();
    assert_eq!(agent.knowledge().len(), 5);
    assert_eq!(agent.updates(), 5);
}

#[test]
fn shipped_datasets_regenerate_identically() {
    let dir = default_assets_dir();
    for env in EnvId::ALL {
        for policy in [PolicyKind::Random, PolicyKind::ScriptedExpert] {
            let path = dataset_path(&dir, env, policy);
            let trajs = generate_dataset(policy, env, 5, DATASET_SEED, DEFAULT_STEP_CAP).unwrap();
            let text = to_jsonl(&header_for(env, DATASET_SEED, policy.as_str(), &trajs), &trajs);
            assert_eq!(fs::read_to_string(&path).unwrap(), text, "{}", path.display());
        }
    }
}

#[test]
fn make_scenario_resolves_assets() {
    let dir = default_assets_dir();
    let lv4 = make_scenario(ScenarioLevel::Lv4, EnvId::Cliffwalking, &dir, 0).unwrap();
    let data = load_dataset(lv4.dataset.as_ref().unwrap(), EnvId::Cliffwalking).unwrap();
    assert_eq!(data.len(), 5);
    assert!(data.iter().all(|t| t.undiscounted_return() == -13.0));
    assert_eq!(lv4.episodes, 1);

    let lv2 = make_scenario(ScenarioLevel::Lv2, EnvId::Taxi, &dir, 0).unwrap();
    assert!(lv2.dataset.as_ref().unwrap().ends_with("taxi_random.jsonl"));
    assert_eq!(load_dataset(lv2.dataset.as_ref().unwrap(), EnvId::Taxi).unwrap().len(), 5);

    for env in EnvId::ALL {
        assert!(expert_prompt_path(&dir, env).is_file());
        for level in ScenarioLevel::ALL {
            make_scenario(level, env, &dir, 0).unwrap();
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("datasets")).unwrap();
    fs::copy(
        dataset_path(&dir, EnvId::Taxi, PolicyKind::Random),
        dataset_path(tmp.path(), EnvId::Cartpole, PolicyKind::Random),
    )
    .unwrap();
    assert!(matches!(
        make_scenario(ScenarioLevel::Lv2, EnvId::Cartpole, tmp.path(), 0),
        Err(ScenarioError::DatasetEnvMismatch { .. })
    ));
    assert!(matches!(
        make_scenario(ScenarioLevel::Lv4, EnvId::Cartpole, tmp.path(), 0),
        Err(ScenarioError::MissingAsset(_))
    ));
}

#[test]
fn self_guided_grows_knowledge_once_per_episode() {
    let env = EnvId::Cliffwalking;
    for kind in [AgentKind::Exe, AgentKind::Reflexion, AgentKind::Cot] {
        let mut gw = gateway(expert_mock(env), env);
        let mut agent = Agent::new(kind, env, 4);
        let before = agent.knowledge().len();
        let mut out = ScenarioOutput::default();
        run_self_guided(&mut agent, &mut gw, env, 5, 4, DEFAULT_STEP_CAP, &mut out).unwrap();
        assert_eq!(out.episodes.len(), 5);
        assert_eq!(out.returns(), vec![-13.0; 5]);
        assert_eq!(agent.knowledge().len(), before + 5);
        if kind != AgentKind::Exe {
            assert!(agent.knowledge().entries.iter().all(|e| matches!(e, KnowledgeEntry::Reflection { .. })));
        }
        let purposes: Vec<_> = gw.transcript().iter().map(|e| e.purpose.as_str()).collect();
        if kind == AgentKind::Exe {
            assert_eq!(purposes[0], "learner_suggestion");
            assert!(purposes[1] == "actor");
            let first_insight = purposes.iter().position(|p| *p == "learner_insight").unwrap();
            let first_critic = purposes.iter().position(|p| *p == "critic").unwrap();
            assert!(first_critic < first_insight);
        } else {
            assert_eq!(purposes[0], "actor");
        }
    }
}

#[test]
fn lv3_is_reproducible_with_a_script() {
    let env = EnvId::Cliffwalking;
    let run = || {
        let script = MockScript::Cycle {
            replies: vec!["{\"action\": 1}".into(), "2".into(), "I should go right.".into(), "3".into()],
        };
        let mut gw = gateway(MockBackend::new(script), env);
        let mut agent = Agent::new(AgentKind::Exe, env, 9);
        let mut cfg = make_scenario(ScenarioLevel::Lv3, env, &default_assets_dir(), 9).unwrap();
        cfg.step_cap = 30;
        let (out, record) = run_scenario(&mut agent, &mut gw, &cfg);
        assert_eq!(record.status, RunStatus::Completed);
        let trajs: Vec<_> = out.trajectories().cloned().collect();
        (
            serde_json::to_string(gw.transcript()).unwrap(),
            to_jsonl(&header_for(env, 9, "exe", &trajs), &trajs),
            record.returns,
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn blackjack_lv3_scores_groups_of_twenty() {
    let env = EnvId::Blackjack;
    let mut gw = gateway(expert_mock(env), env);
    let mut agent = Agent::new(AgentKind::Cot, env, 5);
    let cfg = make_scenario(ScenarioLevel::Lv3, env, &default_assets_dir(), 5).unwrap();
    let (out, record) = run_scenario(&mut agent, &mut gw, &cfg);
    assert_eq!(record.status, RunStatus::Completed, "{:?}", record.error);
    assert_eq!(record.returns, vec![20.0; 5]);
    assert_eq!(out.trajectories().count(), 100);

    let mut gw = gateway(MockBackend::cycle(["2"]), env);
    let mut agent = Agent::new(AgentKind::Naive, env, 5);
    let cfg = make_scenario(ScenarioLevel::Lv1, env, &default_assets_dir(), 5).unwrap();
    let (out, record) = run_scenario(&mut agent, &mut gw, &cfg);
    assert_eq!(out.trajectories().count(), 20);
    assert!(record.returns[0] < 20.0);
}

#[test]
fn failures_mark_the_record() {
    let env = EnvId::Cliffwalking;
    let mut gw = gateway(MockBackend::sequence(["2"]), env);
    let mut agent = Agent::new(AgentKind::Naive, env, 0);
    let cfg = make_scenario(ScenarioLevel::Lv1, env, &default_assets_dir(), 0).unwrap();
    let (_, record) = run_scenario(&mut agent, &mut gw, &cfg);
    assert_eq!(record.status, RunStatus::Failed);
    assert!(record.error.is_some());
    assert_eq!(record.score(), None);
}

#[test]
fn expert_examples_agree_with_the_solved_policies() {
    let cases = [
        (EnvId::Blackjack, Observation::Blackjack { player_sum: 12, dealer_showing: 6, usable_ace: false }, 0),
        (EnvId::Blackjack, Observation::Blackjack { player_sum: 17, dealer_showing: 10, usable_ace: false }, 0),
        (EnvId::Blackjack, Observation::Blackjack { player_sum: 13, dealer_showing: 10, usable_ace: false }, 1),
        (EnvId::Frozenlake, Observation::FrozenLake { cell: 0 }, 0),
        (EnvId::Frozenlake, Observation::FrozenLake { cell: 10 }, 0),
    ];
    for (env, obs, action) in cases {
        assert_eq!(tabular_policy(env).unwrap().action(&obs).unwrap(), action, "{obs:?}");
    }
}
