use hevtl::cycles::{synthesize_cycle, Profile};
use hevtl::env::{rollout, ActionSelector, Observation};
use hevtl::net::{init_params, squash, MeanPolicy};
use hevtl::oracle::{dp_solve, DpGrid};
use hevtl::ppo::{train, Hyperparams, TrainOptions};
use hevtl::{DrivingCycle, NetLayout, Powertrain};
use rand::{Rng, RngCore, SeedableRng};

struct UniformTorque;

impl ActionSelector<f64> for UniformTorque {
    fn select(&mut self, _obs: &Observation<f64>, rng: &mut dyn RngCore) -> f64 {
        rng.random_range(0.0..=115.0)
    }
}

fn toy_cycle() -> DrivingCycle {
    DrivingCycle::from_speeds("const-10", 1.0, vec![10.0; 100]).unwrap()
}

fn toy_hyper() -> Hyperparams {
    Hyperparams {
        gamma: 0.99,
        reward_scale: 0.01,
        horizon_k: 200,
        minibatch_z: 64,
        n_actors: 2,
        n_epochs: 4,
        n_iterations: 40,
        ..Hyperparams::default()
    }
}

#[test]
fn trained_policy_beats_random_on_toy_cycle() {
    let p = Powertrain::default();
    let c = toy_cycle();
    let h = toy_hyper();
    let mut trend_ok = 0;
    for seed in 1..=5u64 {
        let init = init_params::<f64>(&NetLayout::default(), seed).unwrap();
        let out = train(&h, &p, &[&c], init, seed, &TrainOptions::default()).unwrap();
        let mut policy = MeanPolicy::new(&out.params);
        let trained = rollout(&p, &c, 0.65, &mut policy, 0, 1.0).unwrap().total_reward;
        let random = (0..5)
            .map(|s| rollout(&p, &c, 0.65, &mut UniformTorque, s, 1.0).unwrap().total_reward)
            .sum::<f64>()
            / 5.0;
        assert!(trained >= random, "seed {seed}: trained {trained} vs random {random}");

        // 10-episode moving average at the end against the first iteration,
        // with a band of one standard deviation of the first episodes
        let curve = out.log.episode_rewards();
        let first: Vec<f64> = out
            .log
            .episodes
            .iter()
            .filter(|e| e.iteration == 0)
            .map(|e| e.total_reward)
            .collect();
        let m0 = first.iter().sum::<f64>() / first.len() as f64;
        let sd = (first.iter().map(|r| (r - m0).powi(2)).sum::<f64>() / first.len() as f64).sqrt();
        let tail = &curve[curve.len() - 10..];
        let m_end = tail.iter().sum::<f64>() / 10.0;
        trend_ok += usize::from(m_end >= m0 - sd);
    }
    assert!(trend_ok >= 4, "learning trend held for {trend_ok}/5 seeds");
}

#[test]
fn no_policy_beats_the_dp_cost() {
    let p = Powertrain::default();
    let c = synthesize_cycle(2, 120.0, Profile::Urban).unwrap();
    let j_star = dp_solve(&DpGrid::uniform(&p, 401, 24).unwrap(), &p, &c, 0.65)
        .unwrap()
        .j_star;
    let margin = 0.02 * j_star;
    let mut costs = Vec::new();
    for t in [0.0, 10.0, 40.0, 70.0, 90.0, 115.0] {
        let mut constant = |_: &Observation<f64>| t;
        costs.push(rollout(&p, &c, 0.65, &mut constant, 0, 1.0).unwrap().cost());
    }
    for s in 0..5 {
        costs.push(rollout(&p, &c, 0.65, &mut UniformTorque, s, 1.0).unwrap().cost());
    }
    // SOC-threshold rule
    let mut rule = |o: &Observation<f64>| if o.soc < 0.66 { 90.0 } else { 0.0 };
    costs.push(rollout(&p, &c, 0.65, &mut rule, 0, 1.0).unwrap().cost());
    for cost in costs {
        assert!(cost >= j_star - margin, "policy cost {cost} below J* {j_star}");
    }
}

#[test]
fn sampled_actions_stay_in_bounds() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1_000_000 {
        let mean = rng.random_range(-10.0..10.0);
        let log_std = rng.random_range(-5.0..=2.0);
        let (a, lp): (f64, f64) = squash::sample(mean, log_std, &mut rng);
        assert!((0.0..=115.0).contains(&a) && lp.is_finite());
    }
}
