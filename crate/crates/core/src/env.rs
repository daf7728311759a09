//! Episodic environment over one driving cycle.
//!
//! State is `(v, a, SOC)`, the action is engine torque, and the reward is the
//! negated instantaneous cost: fuel mass plus the one-sided quadratic SOC
//! penalty below the charge-sustaining reference.

use std::fmt::Write as _;

use rand::RngCore;

use crate::cycles::{DrivingCycle, ACCEL_MAX, SPEED_MAX};
use crate::error::{Error, Result};
use crate::powertrain::{self, PowertrainParams};
use crate::scalar::Real;

pub const OBS_DIM: usize = 3;

/// Half-width of the SOC normalization window around the reference.
const SOC_SCALE: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub v: T,
    pub a: T,
    pub soc: T,
}

impl<T: Real> Observation<T> {
    /// Fixed affine scaling `v/45, a/5, (soc - 0.65)/0.35` so every cycle
    /// presents the network with the same input scale.
    pub fn normalized(&self) -> [T; OBS_DIM] {
        [
            self.v / T::lit(SPEED_MAX),
            self.a / T::lit(ACCEL_MAX),
            (self.soc - T::lit(0.65)) / T::lit(SOC_SCALE),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub fuel_g: T,
    pub soc_penalty: T,
    /// Battery power clamped or SOC clamped at a bound.
    pub clamped: bool,
    /// Torque actually applied after the traction floor.
    pub t_ice: T,
    pub p_req: T,
    pub p_ice: T,
    pub p_bat: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult<T> {
    pub obs: Observation<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
}

/// Transition quantities that depend only on the cycle sample and the torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Transition<T> {
    pub t_ice: T,
    pub p_req: T,
    pub p_ice: T,
    pub p_bat: T,
    pub fuel_gps: T,
    pub soc_rate: T,
    pub bat_clamped: bool,
}

/// Evaluates one step of the powertrain at a fixed `(v, a)`.
///
/// The commanded torque is raised to the traction floor when the battery
/// alone could not cover the demand, so the wheel request is always met
/// while the engine can supply it.
pub(crate) fn transition<T: Real>(params: &PowertrainParams<T>, v: T, a: T, t_ice: T) -> Result<Transition<T>> {
    let t_max = params.torque_max();
    if !(t_ice >= T::zero() && t_ice <= t_max) {
        return Err(Error::domain("engine torque", t_ice.as_f64(), 0.0, t_max.as_f64()));
    }
    let p_req = powertrain::power_request(params, v, a)?;
    let t_applied = t_ice.max(powertrain::torque_floor(params, p_req));
    let op = params.engine.operating_point(t_applied)?;
    let split = powertrain::split_with_engine_power(params, p_req, op.power_w);
    Ok(Transition {
        t_ice: t_applied,
        p_req,
        p_ice: op.power_w,
        p_bat: split.p_bat,
        fuel_gps: op.fuel_gps,
        soc_rate: powertrain::soc_rate_unchecked(params, split.p_bat),
        bat_clamped: split.clamped,
    })
}

/// One-sided quadratic SOC penalty for a step of length `dt`.
pub fn soc_penalty<T: Real>(params: &PowertrainParams<T>, soc: T, dt: T) -> T {
    if soc < params.soc_ref {
        let d = soc - params.soc_ref;
        params.lambda_soc * d * d * dt
    } else {
        T::zero()
    }
}

/// Episode state over a borrowed cycle and parameter set.
#[derive(Debug, Clone)]
pub struct Env<'a, T> {
    params: &'a PowertrainParams<T>,
    cycle: &'a DrivingCycle,
    t: usize,
    soc: T,
    clamp_events: usize,
}

impl<'a, T: Real> Env<'a, T> {
    /// Starts an episode at `t = 0` with the given SOC.
    pub fn reset(params: &'a PowertrainParams<T>, cycle: &'a DrivingCycle, soc0: T) -> Result<(Self, Observation<T>)> {
        if !(soc0 >= params.soc_min && soc0 <= params.soc_max) {
            return Err(Error::domain(
                "initial SOC",
                soc0.as_f64(),
                params.soc_min.as_f64(),
                params.soc_max.as_f64(),
            ));
        }
        let env = Env {
            params,
            cycle,
            t: 0,
            soc: soc0,
            clamp_events: 0,
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn params(&self) -> &'a PowertrainParams<T> {
        self.params
    }

    pub fn cycle(&self) -> &'a DrivingCycle {
        self.cycle
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn soc(&self) -> T {
        self.soc
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cycle.len()
    }

    /// Observation at the current index; after the last step it repeats the
    /// final cycle sample with the terminal SOC.
    pub fn observation(&self) -> Observation<T> {
        let i = self.t.min(self.cycle.len() - 1);
        Observation {
            v: T::lit(self.cycle.speed[i]),
            a: T::lit(self.cycle.accel[i]),
            soc: self.soc,
        }
    }

    pub fn step(&mut self, t_ice: T) -> Result<StepResult<T>> {
        if self.is_done() {
            return Err(Error::Config(format!(
                "step past the end of cycle {} ({} steps)",
                self.cycle.id,
                self.cycle.len()
            )));
        }
        let obs = self.observation();
        let dt = T::lit(self.cycle.dt);
        let tr = transition(self.params, obs.v, obs.a, t_ice)?;
        let raw = self.soc + tr.soc_rate * dt;
        let soc = raw.max(T::zero()).min(T::one());
        let soc_clamped = soc != raw;
        if soc_clamped {
            self.clamp_events += 1;
        }
        let fuel_g = tr.fuel_gps * dt;
        let penalty = soc_penalty(self.params, soc, dt);
        self.soc = soc;
        self.t += 1;
        Ok(StepResult {
            obs: self.observation(),
            reward: -(fuel_g + penalty),
            done: self.is_done(),
            info: StepInfo {
                fuel_g,
                soc_penalty: penalty,
                clamped: tr.bat_clamped || soc_clamped,
                t_ice: tr.t_ice,
                p_req: tr.p_req,
                p_ice: tr.p_ice,
                p_bat: tr.p_bat,
            },
        })
    }
}

/// Anything that maps an observation to a torque command.
pub trait ActionSelector<T> {
    fn select(&mut self, obs: &Observation<T>, rng: &mut dyn RngCore) -> T;
}

impl<T, F> ActionSelector<T> for F
where
    F: FnMut(&Observation<T>) -> T,
{
    fn select(&mut self, obs: &Observation<T>, _rng: &mut dyn RngCore) -> T {
        self(obs)
    }
}

/// Replays a fixed torque sequence; past its end it commands zero torque.
#[derive(Debug, Clone)]
pub struct Replay<T> {
    pub torques: Vec<T>,
    next: usize,
}

impl<T> Replay<T> {
    pub fn new(torques: Vec<T>) -> Self {
        Replay { torques, next: 0 }
    }
}

impl<T: Real> ActionSelector<T> for Replay<T> {
    fn select(&mut self, _obs: &Observation<T>, _rng: &mut dyn RngCore) -> T {
        let t = self.torques.get(self.next).copied().unwrap_or_else(T::zero);
        self.next += 1;
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow<T> {
    pub t: usize,
    pub v: T,
    pub a: T,
    /// SOC at the start of the step.
    pub soc: T,
    pub t_ice: T,
    pub p_req: T,
    pub p_ice: T,
    pub p_bat: T,
    pub fuel_g: T,
    pub reward: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub rows: Vec<TrajectoryRow<T>>,
    /// Undiscounted sum of rewards.
    pub total_reward: T,
    pub discounted_return: T,
    pub fuel_g: T,
    pub terminal_soc: T,
    pub clamp_events: usize,
}

impl<T: Real> Trajectory<T> {
    /// Total cost, the negated total reward.
    pub fn cost(&self) -> T {
        -self.total_reward
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAJECTORY_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t, r.v, r.a, r.soc, r.t_ice, r.p_req, r.p_ice, r.p_bat, r.fuel_g, r.reward
            );
        }
        s
    }
}

pub const TRAJECTORY_HEADER: &str = "t,v,a,soc,t_ice,p_req,p_ice,p_bat,fuel_g,reward";

/// Runs `policy` from the environment's current state to the end of the cycle.
pub fn rollout_from<T: Real>(
    env: &mut Env<'_, T>,
    policy: &mut dyn ActionSelector<T>,
    rng: &mut dyn RngCore,
    gamma: T,
) -> Result<Trajectory<T>> {
    let mut rows = Vec::with_capacity(env.cycle().len().saturating_sub(env.t()));
    let mut total = T::zero();
    let mut discounted = T::zero();
    let mut discount = T::one();
    let mut fuel = T::zero();
    let mut obs = env.observation();
    while !env.is_done() {
        let t = env.t();
        let action = policy.select(&obs, rng);
        let step = env.step(action)?;
        rows.push(TrajectoryRow {
            t,
            v: obs.v,
            a: obs.a,
            soc: obs.soc,
            t_ice: step.info.t_ice,
            p_req: step.info.p_req,
            p_ice: step.info.p_ice,
            p_bat: step.info.p_bat,
            fuel_g: step.info.fuel_g,
            reward: step.reward,
        });
        total += step.reward;
        discounted += discount * step.reward;
        discount *= gamma;
        fuel += step.info.fuel_g;
        obs = step.obs;
    }
    Ok(Trajectory {
        rows,
        total_reward: total,
        discounted_return: discounted,
        fuel_g: fuel,
        terminal_soc: env.soc(),
        clamp_events: env.clamp_events(),
    })
}

/// Full-episode rollout from `soc0`, with a seeded RNG for stochastic policies.
pub fn rollout<T: Real>(
    params: &PowertrainParams<T>,
    cycle: &DrivingCycle,
    soc0: T,
    policy: &mut dyn ActionSelector<T>,
    seed: u64,
    gamma: T,
) -> Result<Trajectory<T>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut env, _) = Env::reset(params, cycle, soc0)?;
    rollout_from(&mut env, policy, &mut rng, gamma)
}
