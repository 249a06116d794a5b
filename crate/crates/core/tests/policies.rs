use gymtext_core::env::{EnvId, Observation};
use gymtext_core::policies::{expert_action, generate_dataset, rollout, tabular_policy, PolicyKind};
use gymtext_core::seeding::derive_seed;

#[test]
fn frozenlake_policy_value_matches_simulation() {
    let policy = tabular_policy(EnvId::Frozenlake).unwrap();
    let v0 = policy.value(&Observation::FrozenLake { cell: 0 }).unwrap();
    let n = 100_000;
    let mut successes = 0u32;
    for i in 0..n {
        // a long cap so truncation does not bias the estimate
        let t = rollout(EnvId::Frozenlake, derive_seed(77, 0, i), 100_000, |o| expert_action(EnvId::Frozenlake, o)).unwrap();
        if t.undiscounted_return() > 0.0 {
            successes += 1;
        }
    }
    let rate = successes as f64 / n as f64;
    println!("frozenlake: value {v0:.4}, simulated {rate:.4}");
    assert!((rate - v0).abs() < 0.03);
}

#[test]
fn mountaincar_experts_reach_the_goal() {
    let discrete = generate_dataset(PolicyKind::ScriptedExpert, EnvId::Mountaincar, 20, 1, 200).unwrap();
    for t in &discrete {
        assert!(t.undiscounted_return() > -200.0, "{}", t.undiscounted_return());
    }
    let continuous = generate_dataset(PolicyKind::ScriptedExpert, EnvId::MountaincarContinuous, 20, 1, 200).unwrap();
    for t in &continuous {
        let r = t.undiscounted_return();
        assert!((85.0..=96.0).contains(&r), "{r}");
    }
}

#[test]
fn taxi_optimal_mean_return() {
    let runs = generate_dataset(PolicyKind::TabularOptimal, EnvId::Taxi, 100, 5, 200).unwrap();
    let mean = runs.iter().map(|t| t.undiscounted_return()).sum::<f64>() / runs.len() as f64;
    println!("taxi mean return {mean:.3}");
    assert!(mean >= 5.0);
}

#[test]
fn cartpole_expert_balances() {
    let runs = generate_dataset(PolicyKind::ScriptedExpert, EnvId::Cartpole, 5, 3, 200).unwrap();
    for t in runs {
        assert!(t.undiscounted_return() >= 195.0);
    }
}
