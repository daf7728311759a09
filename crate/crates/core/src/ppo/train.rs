use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffer::{Collector, EpisodeRecord, Sample};
use super::gae::normalize_advantages;
use super::loss::{loss_and_grad, LossComponents};
use super::Hyperparams;
use crate::cycles::DrivingCycle;
use crate::error::{Error, Result};
use crate::net::{PolicyParams, Workspace};
use crate::optim::{clip_grad_norm, Adam};
use crate::powertrain::PowertrainParams;
use crate::scalar::Real;
use crate::seed;

pub const EPISODE_LOG_HEADER: &str = "iteration,episode,total_reward,loss,clip_loss,value_loss,entropy,wall_ms";
pub const UPDATE_LOG_HEADER: &str = "iteration,epoch,loss,clip_loss,value_loss,entropy,clip_fraction,grad_norm";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub soc0: f64,
    /// Stop after the iteration in which this many episodes have completed.
    pub max_episodes: Option<usize>,
    /// Wall-clock columns are zero unless enabled, keeping logs reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            soc0: 0.65,
            max_episodes: None,
            record_wall_time: false,
        }
    }
}

/// Per-epoch means over the minibatch updates.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub loss: f64,
    pub clip_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub episodes_completed: usize,
    /// Full-batch loss under the collection snapshot, before any update.
    pub loss: f64,
    pub clip_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// `max |ratio - 1|` before the first update; zero up to rounding.
    pub start_ratio_dev: f64,
    pub ratio_caps: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub iterations: Vec<IterationRecord>,
    pub updates: Vec<UpdateRecord>,
}

impl TrainingLog {
    pub fn episode_rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward).collect()
    }

    pub fn iteration(&self, i: usize) -> Option<&IterationRecord> {
        self.iterations.iter().find(|r| r.iteration == i)
    }

    /// Value loss attached to episode `e`: the pre-update loss of the
    /// iteration in which it completed.
    pub fn episode_value_loss(&self, e: usize) -> Option<f64> {
        let ep = self.episodes.get(e)?;
        self.iteration(ep.iteration).map(|r| r.value_loss)
    }

    /// One row per episode, loss columns from its iteration.
    pub fn episodes_csv(&self) -> String {
        let mut s = String::from(EPISODE_LOG_HEADER);
        s.push('\n');
        for e in &self.episodes {
            let it = self.iteration(e.iteration);
            let f = |g: fn(&IterationRecord) -> f64| it.map(g).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.iteration,
                e.episode,
                e.total_reward,
                f(|r| r.loss),
                f(|r| r.clip_loss),
                f(|r| r.value_loss),
                f(|r| r.entropy),
                f(|r| r.wall_ms)
            );
        }
        s
    }

    pub fn updates_csv(&self) -> String {
        let mut s = String::from(UPDATE_LOG_HEADER);
        s.push('\n');
        for u in &self.updates {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                u.iteration, u.epoch, u.loss, u.clip_loss, u.value_loss, u.entropy, u.clip_fraction, u.grad_norm
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Final parameters, or the last finite snapshot after an abort.
    pub params: PolicyParams<T>,
    pub log: TrainingLog,
    pub iterations_run: usize,
    pub aborted: Option<String>,
}

fn mean_components<T: Real>(acc: &[LossComponents<T>]) -> (f64, f64, f64, f64, f64) {
    let n = acc.len().max(1) as f64;
    let sum = |f: fn(&LossComponents<T>) -> T| acc.iter().map(|c| f(c).as_f64()).sum::<f64>() / n;
    (
        sum(|c| c.loss()),
        sum(|c| c.clip),
        sum(|c| c.value),
        sum(|c| c.entropy),
        sum(|c| c.clip_fraction),
    )
}

/// Trains from `init` on `cycles`. Fully determined by the arguments.
pub fn train<T: Real>(
    hyper: &Hyperparams,
    powertrain: &PowertrainParams<T>,
    cycles: &[&DrivingCycle],
    init: PolicyParams<T>,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome<T>> {
    hyper.validate()?;
    init.validate()?;
    if cycles.is_empty() {
        return Err(Error::Config("training needs at least one source cycle".into()));
    }
    let mut log = TrainingLog::default();
    let mut params = init;
    if hyper.n_iterations == 0 || opts.max_episodes == Some(0) {
        return Ok(TrainOutcome {
            params,
            log,
            iterations_run: 0,
            aborted: None,
        });
    }
    let mut collector = Collector::new(
        powertrain,
        cycles,
        hyper.n_actors,
        T::lit(opts.soc0),
        &params.layout,
        seed::derive(seed, "rollout", 0),
    )?;
    let mut adam = Adam::new(hyper.adam(), params.len());
    let mut shuffle = ChaCha8Rng::seed_from_u64(seed::derive(seed, "shuffle", 0));
    let mut ws = Workspace::new(&params.layout);
    let mut grad = vec![T::zero(); params.len()];
    let mut iterations_run = 0;

    for it in 0..hyper.n_iterations {
        let started = Instant::now();
        if hyper.lr_anneal {
            adam.config.lr = hyper.lr * (1.0 - it as f64 / hyper.n_iterations as f64);
        }
        let mut rollout = collector.collect(&params, hyper.horizon_k, it)?;
        for b in &mut rollout.buffers {
            b.compute_gae(hyper.gamma, hyper.gae_lambda, hyper.reward_scale);
            b.validate()?;
        }
        let mut samples: Vec<Sample<T>> = rollout.samples();
        if hyper.normalize_advantages {
            let mut adv: Vec<T> = samples.iter().map(|s| s.advantage).collect();
            normalize_advantages(&mut adv);
            samples.iter_mut().zip(adv).for_each(|(s, a)| s.advantage = a);
        }
        let pre = loss_and_grad(&params, &mut ws, &samples, hyper, None).map_err(|e| Error::Training {
            iteration: it,
            reason: e.to_string(),
        })?;

        let last_good = params.clone();
        let mut abort: Option<String> = None;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut mb = Vec::with_capacity(hyper.minibatch_z);
        'epochs: for epoch in 0..hyper.n_epochs {
            order.shuffle(&mut shuffle);
            let mut comps = Vec::new();
            let mut norms = 0.0;
            for chunk in order.chunks(hyper.minibatch_z) {
                mb.clear();
                mb.extend(chunk.iter().map(|&i| samples[i]));
                grad.iter_mut().for_each(|g| *g = T::zero());
                let c = match loss_and_grad(&params, &mut ws, &mb, hyper, Some(&mut grad)) {
                    Ok(c) => c,
                    Err(e) => {
                        abort = Some(format!("iteration {it}, epoch {epoch}: {e}"));
                        break 'epochs;
                    }
                };
                let norm = clip_grad_norm(&mut grad, hyper.max_grad_norm);
                if !norm.is_finite() {
                    abort = Some(format!("iteration {it}, epoch {epoch}: non-finite gradient"));
                    break 'epochs;
                }
                norms += norm.as_f64();
                adam.step(&mut params.values, &grad);
                params.project_log_std();
                comps.push(c);
            }
            let (loss, clip, value, entropy, frac) = mean_components(&comps);
            log.updates.push(UpdateRecord {
                iteration: it,
                epoch,
                loss,
                clip_loss: clip,
                value_loss: value,
                entropy,
                clip_fraction: frac,
                grad_norm: norms / comps.len().max(1) as f64,
            });
        }
        if abort.is_none() && params.values.iter().any(|v| !v.is_finite()) {
            abort = Some(format!("iteration {it}: non-finite parameters"));
        }
        log.episodes.extend(rollout.episodes);
        log.iterations.push(IterationRecord {
            iteration: it,
            episodes_completed: collector.episodes_completed(),
            loss: pre.loss().as_f64(),
            clip_loss: pre.clip.as_f64(),
            value_loss: pre.value.as_f64(),
            entropy: pre.entropy.as_f64(),
            start_ratio_dev: pre.max_ratio_dev.as_f64(),
            ratio_caps: pre.ratio_caps,
            wall_ms: if opts.record_wall_time {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
        if let Some(reason) = abort {
            return Ok(TrainOutcome {
                params: last_good,
                log,
                iterations_run: it,
                aborted: Some(reason),
            });
        }
        iterations_run = it + 1;
        if let Some(cap) = opts.max_episodes {
            if collector.episodes_completed() >= cap {
                log.episodes.truncate(cap);
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        iterations_run,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, NetLayout};

    fn small() -> Hyperparams {
        Hyperparams {
            horizon_k: 64,
            minibatch_z: 32,
            n_actors: 2,
            n_epochs: 2,
            n_iterations: 2,
            ..Default::default()
        }
    }

    fn cycle() -> DrivingCycle {
        DrivingCycle::from_speeds("const10", 1.0, vec![10.0; 100]).unwrap()
    }

    #[test]
    fn zero_iterations_returns_init() {
        let p = PowertrainParams::<f64>::default();
        let c = cycle();
        let init = init_params::<f64>(&NetLayout::default(), 1).unwrap();
        let h = Hyperparams {
            n_iterations: 0,
            ..small()
        };
        let out = train(&h, &p, &[&c], init.clone(), 1, &TrainOptions::default()).unwrap();
        assert_eq!(out.params, init);
        assert!(out.log.episodes.is_empty());
    }

    #[test]
    fn zero_lr_keeps_params() {
        let p = PowertrainParams::<f64>::default();
        let c = cycle();
        let init = init_params::<f64>(&NetLayout::default(), 1).unwrap();
        let h = Hyperparams { lr: 0.0, ..small() };
        let out = train(&h, &p, &[&c], init.clone(), 1, &TrainOptions::default()).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.iterations_run, 2);
    }

    #[test]
    fn deterministic_and_ratio_starts_at_one() {
        let p = PowertrainParams::<f64>::default();
        let c = cycle();
        let init = init_params::<f64>(&NetLayout::default(), 2).unwrap();
        let a = train(&small(), &p, &[&c], init.clone(), 7, &TrainOptions::default()).unwrap();
        let b = train(&small(), &p, &[&c], init.clone(), 7, &TrainOptions::default()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.episodes_csv(), b.log.episodes_csv());
        assert_ne!(a.params, init);
        for r in &a.log.iterations {
            assert!(r.start_ratio_dev <= 1e-9);
        }
        assert_eq!(a.log.updates.len(), 4);
        assert!(a.log.episodes_csv().starts_with(EPISODE_LOG_HEADER));
    }

    #[test]
    fn episode_cap_truncates() {
        let p = PowertrainParams::<f64>::default();
        let c = DrivingCycle::from_speeds("short", 1.0, vec![3.0; 20]).unwrap();
        let init = init_params::<f64>(&NetLayout::default(), 2).unwrap();
        let opts = TrainOptions {
            max_episodes: Some(5),
            ..Default::default()
        };
        let h = Hyperparams {
            n_iterations: 50,
            ..small()
        };
        let out = train(&h, &p, &[&c], init, 7, &opts).unwrap();
        assert_eq!(out.log.episodes.len(), 5);
        assert_eq!(out.iterations_run, 1);
    }
}
