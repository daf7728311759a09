use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gae::compute_gae;
use crate::cycles::DrivingCycle;
use crate::env::{Env, Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::net::{self, PolicyParams, Workspace};
use crate::powertrain::PowertrainParams;
use crate::scalar::Real;
use crate::seed;

/// One actor's `K` consecutive transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer<T> {
    pub actor: usize,
    /// Normalized network inputs.
    pub obs: Vec<[T; OBS_DIM]>,
    /// Commanded torque as sampled (before the traction floor).
    pub actions: Vec<T>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    pub log_probs: Vec<T>,
    pub dones: Vec<bool>,
    /// Critic value at the state following the last transition.
    pub bootstrap: T,
    pub advantages: Vec<T>,
    pub value_targets: Vec<T>,
}

impl<T: Real> RolloutBuffer<T> {
    fn with_capacity(actor: usize, k: usize) -> Self {
        RolloutBuffer {
            actor,
            obs: Vec::with_capacity(k),
            actions: Vec::with_capacity(k),
            rewards: Vec::with_capacity(k),
            values: Vec::with_capacity(k),
            log_probs: Vec::with_capacity(k),
            dones: Vec::with_capacity(k),
            bootstrap: T::zero(),
            advantages: Vec::new(),
            value_targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills `advantages` and `value_targets` (unnormalized) from rewards
    /// multiplied by `reward_scale`.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64, reward_scale: f64) {
        let k = T::lit(reward_scale);
        let scaled: Vec<T> = self.rewards.iter().map(|r| *r * k).collect();
        let (a, v) = compute_gae(&scaled, &self.values, &self.dones, self.bootstrap, gamma, lambda);
        self.advantages = a;
        self.value_targets = v;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.obs.len(),
            self.actions.len(),
            self.values.len(),
            self.log_probs.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Training {
                iteration: 0,
                reason: format!("actor {} buffer has ragged columns", self.actor),
            });
        }
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        if !finite(&self.log_probs) || !finite(&self.advantages) || !finite(&self.rewards) {
            return Err(Error::NonFinite(format!("rollout buffer of actor {}", self.actor)));
        }
        Ok(())
    }
}

/// A flattened training sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub obs: [T; OBS_DIM],
    pub action: T,
    pub log_prob_old: T,
    pub advantage: T,
    pub value_target: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub iteration: usize,
    /// Global episode index, 0-based, in actor-then-completion order.
    pub episode: usize,
    pub actor: usize,
    pub cycle_id: String,
    pub total_reward: f64,
    pub length: usize,
}

/// Output of one collection round.
#[derive(Debug, Clone)]
pub struct Rollout<T> {
    /// One buffer per actor, in actor-index order.
    pub buffers: Vec<RolloutBuffer<T>>,
    pub episodes: Vec<EpisodeRecord>,
}

impl<T: Real> Rollout<T> {
    pub fn transitions(&self) -> usize {
        self.buffers.iter().map(|b| b.len()).sum()
    }

    /// Concatenates the buffers into samples; GAE must have run.
    pub fn samples(&self) -> Vec<Sample<T>> {
        let mut out = Vec::with_capacity(self.transitions());
        for b in &self.buffers {
            for i in 0..b.len() {
                out.push(Sample {
                    obs: b.obs[i],
                    action: b.actions[i],
                    log_prob_old: b.log_probs[i],
                    advantage: b.advantages[i],
                    value_target: b.value_targets[i],
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Actor<'a, T> {
    env: Env<'a, T>,
    obs: Observation<T>,
    rng: ChaCha8Rng,
    /// Episodes started so far by this actor.
    started: usize,
    cycle: usize,
    reward: T,
    length: usize,
}

/// `M` persistent actors. Episodes carry over between collection rounds; an
/// actor whose episode ends moves to the next cycle of its round-robin
/// schedule: its `k`-th episode runs cycle `(actor + k·M) mod n`.
#[derive(Debug, Clone)]
pub struct Collector<'a, T> {
    params: &'a PowertrainParams<T>,
    cycles: Vec<&'a DrivingCycle>,
    soc0: T,
    actors: Vec<Actor<'a, T>>,
    episodes: usize,
    ws: Workspace<T>,
}

impl<'a, T: Real> Collector<'a, T> {
    pub fn new(
        params: &'a PowertrainParams<T>,
        cycles: &[&'a DrivingCycle],
        n_actors: usize,
        soc0: T,
        layout: &net::NetLayout,
        seed: u64,
    ) -> Result<Self> {
        if cycles.is_empty() {
            return Err(Error::Config("training needs at least one cycle".into()));
        }
        if n_actors == 0 {
            return Err(Error::Config("n_actors must be >= 1".into()));
        }
        let mut actors = Vec::with_capacity(n_actors);
        for i in 0..n_actors {
            let cycle = i % cycles.len();
            let (env, obs) = Env::reset(params, cycles[cycle], soc0)?;
            actors.push(Actor {
                env,
                obs,
                rng: ChaCha8Rng::seed_from_u64(seed::derive(seed, "actor", i as u64)),
                started: 1,
                cycle,
                reward: T::zero(),
                length: 0,
            });
        }
        Ok(Collector {
            params,
            cycles: cycles.to_vec(),
            soc0,
            actors,
            episodes: 0,
            ws: Workspace::new(layout),
        })
    }

    pub fn episodes_completed(&self) -> usize {
        self.episodes
    }

    /// Runs every actor for `k` steps under `policy`.
    pub fn collect(&mut self, policy: &PolicyParams<T>, k: usize, iteration: usize) -> Result<Rollout<T>> {
        let mut buffers = Vec::with_capacity(self.actors.len());
        let mut episodes = Vec::new();
        for i in 0..self.actors.len() {
            let buf = self
                .collect_actor(i, policy, k, iteration, &mut episodes)
                .map_err(|e| Error::Actor {
                    actor: i,
                    source: Box::new(e),
                })?;
            buffers.push(buf);
        }
        Ok(Rollout { buffers, episodes })
    }

    fn collect_actor(
        &mut self,
        i: usize,
        policy: &PolicyParams<T>,
        k: usize,
        iteration: usize,
        episodes: &mut Vec<EpisodeRecord>,
    ) -> Result<RolloutBuffer<T>> {
        let m = self.actors.len();
        let n_cycles = self.cycles.len();
        let mut buf = RolloutBuffer::with_capacity(i, k);
        let actor = &mut self.actors[i];
        for _ in 0..k {
            let x = actor.obs.normalized();
            let out = policy.forward_ws(&mut self.ws, &x)?;
            let (action, log_prob) = net::sample_action(&out, &mut actor.rng);
            let step = actor.env.step(action)?;
            buf.obs.push(x);
            buf.actions.push(action);
            buf.rewards.push(step.reward);
            buf.values.push(out.value);
            buf.log_probs.push(log_prob);
            buf.dones.push(step.done);
            actor.reward += step.reward;
            actor.length += 1;
            actor.obs = step.obs;
            if step.done {
                episodes.push(EpisodeRecord {
                    iteration,
                    episode: self.episodes,
                    actor: i,
                    cycle_id: self.cycles[actor.cycle].id.clone(),
                    total_reward: actor.reward.as_f64(),
                    length: actor.length,
                });
                self.episodes += 1;
                actor.cycle = (i + actor.started * m) % n_cycles;
                actor.started += 1;
                let (env, obs) = Env::reset(self.params, self.cycles[actor.cycle], self.soc0)?;
                actor.env = env;
                actor.obs = obs;
                actor.reward = T::zero();
                actor.length = 0;
            }
        }
        buf.bootstrap = policy.forward_ws(&mut self.ws, &actor.obs.normalized())?.value;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, NetLayout};

    #[test]
    fn spans_episode_boundary() {
        let p = PowertrainParams::<f64>::default();
        let c = DrivingCycle::from_speeds("two", 1.0, vec![5.0, 6.0]).unwrap();
        let layout = NetLayout::default();
        let pol = init_params::<f64>(&layout, 1).unwrap();
        let mut col = Collector::new(&p, &[&c], 1, 0.65, &layout, 9).unwrap();
        let r = col.collect(&pol, 3, 0).unwrap();
        assert_eq!(r.transitions(), 3);
        assert_eq!(r.buffers[0].dones, vec![false, true, false]);
        assert_eq!(r.episodes.len(), 1);
        assert_eq!(r.episodes[0].length, 2);
    }

    #[test]
    fn deterministic_and_consistent_log_probs() {
        let p = PowertrainParams::<f64>::default();
        let c = crate::cycles::synthesize_cycle(2, 120.0, crate::cycles::Profile::Urban).unwrap();
        let layout = NetLayout::default();
        let pol = init_params::<f64>(&layout, 3).unwrap();
        let run = || {
            let mut col = Collector::new(&p, &[&c], 2, 0.65, &layout, 4).unwrap();
            col.collect(&pol, 50, 0).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.buffers, b.buffers);
        assert_eq!(a.transitions(), 100);
        for buf in &a.buffers {
            for i in 0..buf.len() {
                let (lp, _) = pol.log_prob_and_entropy(&buf.obs[i], buf.actions[i]).unwrap();
                assert!((lp - buf.log_probs[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn round_robin_schedule() {
        let p = PowertrainParams::<f64>::default();
        let cs: Vec<DrivingCycle> = (0..3)
            .map(|i| DrivingCycle::from_speeds(format!("c{i}"), 1.0, vec![1.0; 2]).unwrap())
            .collect();
        let refs: Vec<&DrivingCycle> = cs.iter().collect();
        let layout = NetLayout::default();
        let pol = init_params::<f64>(&layout, 1).unwrap();
        let mut col = Collector::new(&p, &refs, 2, 0.65, &layout, 0).unwrap();
        let r = col.collect(&pol, 6, 0).unwrap();
        let ids: Vec<&str> = r.episodes.iter().map(|e| e.cycle_id.as_str()).collect();
        assert_eq!(ids, ["c0", "c2", "c1", "c1", "c0", "c2"]);
    }
}
