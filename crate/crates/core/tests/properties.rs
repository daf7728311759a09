use hevtl::cycles::{load_cycle, make_partition, synthesize_cycle, write_cycle, Profile, ACCEL_MAX, SPEED_MAX};
use hevtl::env::{rollout, Env};
use hevtl::powertrain::{
    battery_current, effective_battery_power, power_request, soc_derivative, split_power, terminal_voltage,
};
use hevtl::ppo::{clipped_objective, compute_gae};
use hevtl::{DrivingCycle, Powertrain};
use proptest::prelude::*;

fn params() -> Powertrain {
    Powertrain::default()
}

fn profile() -> impl Strategy<Value = Profile> {
    prop_oneof![Just(Profile::Urban), Just(Profile::Suburban), Just(Profile::Highway)]
}

fn feasible_power() -> impl Strategy<Value = f64> {
    -20_000.0..=20_000.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn terminal_power_identity(p_bat in feasible_power()) {
        let p = params();
        let i = battery_current(&p, p_bat).unwrap();
        let u = terminal_voltage(&p, i);
        let rel = (u * i - p_bat).abs() / p_bat.abs().max(1.0);
        prop_assert!(rel <= 1e-9, "U*I = {} vs {p_bat}", u * i);
        let d = soc_derivative(&p, p_bat).unwrap();
        prop_assert!((d + i / (p.q_cap_ah * 3600.0)).abs() <= 1e-15);
    }

    #[test]
    fn soc_derivative_strictly_decreasing(a in feasible_power(), b in feasible_power()) {
        prop_assume!(a != b);
        let p = params();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(soc_derivative(&p, lo).unwrap() > soc_derivative(&p, hi).unwrap());
    }

    #[test]
    fn split_closes_energy_balance(v in 0.0..=45.0_f64, a in -5.0..=5.0_f64, t_ice in 0.0..=115.0_f64) {
        let p = params();
        let p_req = power_request(&p, v, a).unwrap();
        let s = split_power(&p, p_req, t_ice).unwrap();
        if !s.clamped {
            let delivered = s.p_ice + effective_battery_power(&p, s.p_bat);
            prop_assert!((delivered - p_req).abs() <= 1e-6 * p_req.abs().max(1.0));
        } else {
            prop_assert!(s.p_bat == p.p_bat_min || s.p_bat == p.p_bat_max);
        }
    }

    #[test]
    fn step_reward_nonpositive_and_fuel_monotone(
        v in 0.0..=45.0_f64,
        a in -2.0..=2.0_f64,
        soc in 0.3..=0.9_f64,
        t1 in 0.0..=115.0_f64,
        t2 in 0.0..=115.0_f64,
    ) {
        let p = params();
        let v2 = (v + a).clamp(0.0, SPEED_MAX);
        let c = DrivingCycle::new("p", 1.0, vec![v, v2], vec![(v2 - v).clamp(-ACCEL_MAX, ACCEL_MAX), 0.0]).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let step = |t: f64| {
            let (mut env, _) = Env::reset(&p, &c, soc).unwrap();
            env.step(t).unwrap()
        };
        let (sl, sh) = (step(lo), step(hi));
        prop_assert!(sl.reward <= 0.0 && sh.reward <= 0.0);
        prop_assert_eq!(sl.reward, -(sl.info.fuel_g + sl.info.soc_penalty));
        prop_assert!(sh.info.fuel_g >= sl.info.fuel_g);
    }

    #[test]
    fn zero_battery_power_holds_soc(soc in 0.0..=1.0_f64, steps in 1usize..200) {
        let p = params();
        let d = soc_derivative(&p, 0.0).unwrap();
        let mut s = soc;
        for _ in 0..steps {
            s += d;
        }
        prop_assert_eq!(s, soc);
    }

    #[test]
    fn clipped_never_exceeds_unclipped(r in 0.0..5.0_f64, adv in -10.0..10.0_f64, eps in 0.01..0.5_f64) {
        prop_assert!(clipped_objective(r, adv, eps) <= r * adv);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn synthesized_cycles_obey_bounds(seed in any::<u64>(), duration in 60.0..600.0_f64, prof in profile()) {
        let c = synthesize_cycle(seed, duration, prof).unwrap();
        c.validate().unwrap();
        prop_assert!(c.speed.iter().all(|v| (0.0..=SPEED_MAX).contains(v)));
        prop_assert!(c.accel.iter().all(|a| (-ACCEL_MAX..=ACCEL_MAX).contains(a)));
        for t in 0..c.len() - 1 {
            prop_assert!((c.accel[t] - (c.speed[t + 1] - c.speed[t]) / c.dt).abs() <= 1e-9);
        }
    }

    #[test]
    fn cycle_file_round_trip(seed in any::<u64>(), prof in profile()) {
        let c = synthesize_cycle(seed, 90.0, prof).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("{}.csv", c.id));
        write_cycle(&path, &c).unwrap();
        let back = load_cycle(&path, c.dt).unwrap();
        prop_assert_eq!(&back.speed, &c.speed);
        for (x, y) in back.accel.iter().zip(&c.accel) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn partition_membership_follows_flag(n_all in 4usize..12, n_source in 1usize..4, include in any::<bool>()) {
        let all: Vec<DrivingCycle> = (0..n_all)
            .map(|i| DrivingCycle::from_speeds(format!("c{i}"), 1.0, vec![1.0, 2.0]).unwrap())
            .collect();
        let targets = vec!["c2".to_string()];
        let part = make_partition(&all, n_source, &targets, include).unwrap();
        prop_assert_eq!(part.source.len(), n_source);
        prop_assert_eq!(part.source.contains(&"c2".to_string()), include);
        prop_assert_eq!(part.includes_target_in_source, include);
    }

    #[test]
    fn any_policy_total_reward_nonpositive(seed in any::<u64>(), torque in 0.0..=115.0_f64) {
        let p = params();
        let c = synthesize_cycle(seed, 60.0, Profile::Urban).unwrap();
        let mut policy = |_: &hevtl::env::Observation<f64>| torque;
        let tr = rollout(&p, &c, 0.65, &mut policy, 0, 0.9).unwrap();
        prop_assert!(tr.total_reward <= 0.0);
        prop_assert!(tr.rows.iter().all(|r| (0.0..=1.0).contains(&r.soc)));
    }
}

#[test]
fn highway_is_faster_than_urban_for_100_seeds() {
    let mean = |c: &DrivingCycle| c.speed.iter().sum::<f64>() / c.len() as f64;
    for seed in 0..100 {
        let u = synthesize_cycle(seed, 300.0, Profile::Urban).unwrap();
        let h = synthesize_cycle(seed, 300.0, Profile::Highway).unwrap();
        assert!(mean(&h) > mean(&u), "seed {seed}");
    }
}

#[test]
fn euler_is_exact_between_clamps() {
    let p = params();
    for p_bat in [-15_000.0, -3_000.0, 2_500.0, 12_000.0] {
        let d = soc_derivative(&p, p_bat).unwrap();
        let analytic = 0.65 + d * 100.0;
        let mut coarse = 0.65;
        for _ in 0..100 {
            coarse += d * 1.0;
        }
        let mut fine = 0.65;
        for _ in 0..100_000 {
            fine += d * 1e-3;
        }
        assert!((coarse - analytic).abs() <= 1e-12);
        assert!((coarse - fine).abs() <= 1e-4);
    }
}

/// Direct double-sum advantage estimate, independent of the recursion.
fn gae_direct(r: &[f64], v: &[f64], done: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let k = r.len();
    let next_v = |t: usize| {
        if done[t] {
            0.0
        } else if t + 1 < k {
            v[t + 1]
        } else {
            boot
        }
    };
    (0..k)
        .map(|t| {
            let mut sum = 0.0;
            for i in 0..k - t {
                let j = t + i;
                sum += (gamma * lambda).powi(i as i32) * (r[j] + gamma * next_v(j) - v[j]);
                if done[j] {
                    break;
                }
            }
            sum
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gae_matches_direct_sum(
        len in 16usize..=64,
        seed in any::<u64>(),
        gamma in 0.0..=1.0_f64,
        lambda in 0.0..=1.0_f64,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..1.0)).collect();
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d: Vec<bool> = (0..len).map(|_| rng.random_bool(0.1)).collect();
        let boot = rng.random_range(-3.0..3.0);
        let (adv, targets) = compute_gae(&r, &v, &d, boot, gamma, lambda);
        let want = gae_direct(&r, &v, &d, boot, gamma, lambda);
        for t in 0..len {
            prop_assert!((adv[t] - want[t]).abs() <= 1e-12);
            prop_assert!((targets[t] - (adv[t] + v[t])).abs() <= 1e-12);
        }
    }
}
