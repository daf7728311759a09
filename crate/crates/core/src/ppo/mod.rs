//! Proximal policy optimization with generalized advantage estimation.
//!
//! One iteration collects `K` steps from each of `M` actors under a frozen
//! parameter snapshot, computes advantages per actor segment, normalizes them
//! over the batch, and runs `n_epochs` passes of shuffled minibatch Adam
//! updates on the clipped surrogate with value and entropy terms.

mod buffer;
mod gae;
mod loss;
mod train;

pub use buffer::{Collector, EpisodeRecord, Rollout, RolloutBuffer, Sample};
pub use gae::{compute_gae, normalize_advantages};
pub use loss::{clipped_objective, loss_and_grad, ppo_ratio, total_loss, LossComponents, RATIO_LOG_CAP};
pub use train::{
    train, IterationRecord, TrainOptions, TrainOutcome, TrainingLog, UpdateRecord, EPISODE_LOG_HEADER,
    UPDATE_LOG_HEADER,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub lr: f64,
    /// Decay the learning rate linearly from `lr` towards zero over
    /// `n_iterations`.
    pub lr_anneal: bool,
    pub horizon_k: usize,
    pub minibatch_z: usize,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub n_actors: usize,
    pub n_epochs: usize,
    pub n_iterations: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Multiplier applied to rewards before advantage and value-target
    /// computation. Logged episode rewards stay unscaled.
    pub reward_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.9,
            lr: 0.01,
            lr_anneal: false,
            horizon_k: 512,
            minibatch_z: 64,
            clip_eps: 0.2,
            gae_lambda: 0.92,
            c1: 0.5,
            c2: 0.01,
            n_actors: 4,
            n_epochs: 10,
            n_iterations: 300,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            reward_scale: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("hyper.{field}: {why}")));
        let floats = [
            ("gamma", self.gamma),
            ("lr", self.lr),
            ("clip_eps", self.clip_eps),
            ("gae_lambda", self.gae_lambda),
            ("c1", self.c1),
            ("c2", self.c2),
            ("max_grad_norm", self.max_grad_norm),
            ("reward_scale", self.reward_scale),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in floats {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if self.reward_scale <= 0.0 {
            return bad("reward_scale", "must be > 0");
        }
        if self.clip_eps <= 0.0 {
            return bad("clip_eps", "must be > 0");
        }
        if self.lr < 0.0 || self.c1 < 0.0 || self.c2 < 0.0 || self.max_grad_norm < 0.0 {
            return bad("lr/c1/c2/max_grad_norm", "must be >= 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return bad("adam", "betas must lie in [0, 1) and eps must be > 0");
        }
        for (name, n) in [
            ("horizon_k", self.horizon_k),
            ("minibatch_z", self.minibatch_z),
            ("n_actors", self.n_actors),
            ("n_epochs", self.n_epochs),
        ] {
            if n == 0 {
                return bad(name, "must be >= 1");
            }
        }
        if self.minibatch_z > self.n_actors * self.horizon_k {
            return bad("minibatch_z", "must not exceed n_actors * horizon_k");
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.n_actors * self.horizon_k
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// SHA-256 over every learning hyperparameter. The training budget
    /// (`n_iterations`) is left out, so an expert and a student trained for
    /// different lengths still agree.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("hyperparameters serialize");
        if let Some(map) = v.as_object_mut() {
            map.remove("n_iterations");
        }
        // serde_json maps are sorted, so the text is canonical
        let text = serde_json::to_string(&v).expect("json value serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
