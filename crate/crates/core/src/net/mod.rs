//! Shared-trunk actor-critic network with hand-written backpropagation.
//!
//! Parameters live in one flat vector, laid out per hidden layer as the
//! row-major weight matrix followed by its bias, then the policy-mean head,
//! the value head, and a single state-independent log standard deviation.

mod checkpoint;
pub mod squash;

pub use checkpoint::{load_params, save_params, Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT, FORMAT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const HEAD_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn slope<T: Real>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetLayout {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetLayout {
    fn default() -> Self {
        NetLayout {
            inputs: crate::env::OBS_DIM,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

/// Offsets of one dense layer inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone)]
struct Offsets {
    trunk: Vec<Dense>,
    mean: Dense,
    value: Dense,
    log_std: usize,
    total: usize,
}

impl NetLayout {
    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("network layer sizes must be >= 1".into()));
        }
        Ok(())
    }

    fn offsets(&self) -> Offsets {
        let mut at = 0;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let d = Dense {
                w: at,
                b: at + fan_in * fan_out,
                fan_in,
                fan_out,
            };
            at += fan_in * fan_out + fan_out;
            d
        };
        let mut width = self.inputs;
        let mut trunk = Vec::with_capacity(self.hidden.len());
        for &h in &self.hidden {
            trunk.push(dense(width, h));
            width = h;
        }
        let mean = dense(width, 1);
        let value = dense(width, 1);
        Offsets {
            trunk,
            mean,
            value,
            log_std: at,
            total: at + 1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().total
    }

    /// Width of the trunk output feeding both heads.
    pub fn feature_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams<T> {
    pub layout: NetLayout,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput<T> {
    /// Pre-squash mean.
    pub mean: T,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: T,
    pub value: T,
}

impl<T: Real> PolicyParams<T> {
    pub fn zeros(layout: NetLayout) -> Self {
        let n = layout.param_count();
        PolicyParams {
            layout,
            values: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.values.len() != self.layout.param_count() {
            return Err(Error::Incompatible(format!(
                "{} parameters for a layout that needs {}",
                self.values.len(),
                self.layout.param_count()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(())
    }

    pub fn raw_log_std(&self) -> T {
        self.values[self.values.len() - 1]
    }

    pub fn set_log_std(&mut self, v: T) {
        let n = self.values.len();
        self.values[n - 1] = v;
    }

    /// Index ranges of the two output heads' weights (for inspection).
    pub fn head_weights(&self) -> (&[T], &[T]) {
        let o = self.layout.offsets();
        (&self.values[o.mean.w..o.mean.b], &self.values[o.value.w..o.value.b])
    }

    /// Mutable access to `(weights, bias)` of the value head.
    pub fn value_head_mut(&mut self) -> (&mut [T], &mut T) {
        let o = self.layout.offsets();
        let (w, rest) = self.values[o.value.w..].split_at_mut(o.value.b - o.value.w);
        (w, &mut rest[0])
    }

    /// Mutable access to `(weights, bias)` of the policy-mean head.
    pub fn mean_head_mut(&mut self) -> (&mut [T], &mut T) {
        let o = self.layout.offsets();
        let (w, rest) = self.values[o.mean.w..].split_at_mut(o.mean.b - o.mean.w);
        (w, &mut rest[0])
    }

    /// Clamps the stored log σ into `[LOG_STD_MIN, LOG_STD_MAX]`, so an
    /// update can never park it where the clamp blocks its gradient.
    pub fn project_log_std(&mut self) {
        let v = clamp_log_std(self.raw_log_std());
        self.set_log_std(v);
    }

    pub fn value_bias_index(&self) -> usize {
        self.layout.offsets().value.b
    }

    pub fn log_std_index(&self) -> usize {
        self.values.len() - 1
    }
}

/// Orthogonal-style initialization, deterministic per seed.
///
/// Hidden layers get orthogonal weights with gain √2; both heads get gain
/// 0.01 so the initial policy is close to the squashed standard normal and
/// the initial value estimate is near zero. Biases and log σ start at zero.
pub fn init_params<T: Real>(layout: &NetLayout, seed: u64) -> Result<PolicyParams<T>> {
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PolicyParams::zeros(layout.clone());
    let o = layout.offsets();
    let denses = o
        .trunk
        .iter()
        .map(|d| (*d, HIDDEN_GAIN))
        .chain([(o.mean, HEAD_GAIN), (o.value, HEAD_GAIN)]);
    for (d, gain) in denses {
        let w = orthogonal::<T>(d.fan_out, d.fan_in, gain, &mut rng);
        params.values[d.w..d.b].copy_from_slice(&w);
    }
    Ok(params)
}

/// `rows × cols` matrix with orthonormal rows (or columns when taller than
/// wide), scaled by `gain`. Modified Gram-Schmidt on a Gaussian draw.
fn orthogonal<T: Real>(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let (n_vec, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while vecs.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| f64::standard_normal(rng)).collect();
        for q in &vecs {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let x = if rows <= cols { vecs[r][c] } else { vecs[c][r] };
            out[r * cols + c] = T::lit(gain * x);
        }
    }
    out
}

/// Reusable activation buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    offsets: Offsets,
    /// Post-activation outputs per trunk layer, input first.
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_next: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(layout: &NetLayout) -> Self {
        let offsets = layout.offsets();
        let mut acts = vec![vec![T::zero(); layout.inputs]];
        acts.extend(layout.hidden.iter().map(|&h| vec![T::zero(); h]));
        let widest = layout.hidden.iter().copied().chain([layout.inputs]).max().unwrap_or(1);
        Workspace {
            offsets,
            acts,
            delta: vec![T::zero(); widest],
            delta_next: vec![T::zero(); widest],
        }
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

fn clamp_log_std<T: Real>(raw: T) -> T {
    raw.max(T::lit(LOG_STD_MIN)).min(T::lit(LOG_STD_MAX))
}

impl<T: Real> PolicyParams<T> {
    /// Forward pass through `ws`; leaves activations in place for [`Self::backward_into`].
    pub fn forward_ws(&self, ws: &mut Workspace<T>, obs: &[T]) -> Result<PolicyOutput<T>> {
        if obs.len() != self.layout.inputs {
            return Err(Error::Incompatible(format!(
                "observation of width {} for a network with {} inputs",
                obs.len(),
                self.layout.inputs
            )));
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        let act = self.layout.activation;
        let p = &self.values;
        ws.acts[0].copy_from_slice(obs);
        for (l, d) in ws.offsets.trunk.iter().enumerate() {
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &p[d.w + r * d.fan_in..d.w + (r + 1) * d.fan_in];
                *o = act.apply(dot(row, input) + p[d.b + r]);
            }
        }
        let feat = ws.acts.last().expect("input layer");
        let o = &ws.offsets;
        let mean = dot(&p[o.mean.w..o.mean.b], feat) + p[o.mean.b];
        let value = dot(&p[o.value.w..o.value.b], feat) + p[o.value.b];
        Ok(PolicyOutput {
            mean,
            log_std: clamp_log_std(p[o.log_std]),
            value,
        })
    }

    pub fn forward(&self, obs: &[T]) -> Result<PolicyOutput<T>> {
        let mut ws = Workspace::new(&self.layout);
        self.forward_ws(&mut ws, obs)
    }

    /// Accumulates into `grad` the parameter gradient for output sensitivities
    /// `d_mean`, `d_value` and `d_log_std` (w.r.t. the clamped log σ). Must
    /// follow a [`Self::forward_ws`] on the same workspace.
    pub fn backward_into(&self, ws: &mut Workspace<T>, d_mean: T, d_value: T, d_log_std: T, grad: &mut [T]) {
        let p = &self.values;
        let o = &ws.offsets;
        let act = self.layout.activation;
        let depth = o.trunk.len();
        {
            let feat = &ws.acts[depth];
            for (k, f) in feat.iter().enumerate() {
                grad[o.mean.w + k] += d_mean * *f;
                grad[o.value.w + k] += d_value * *f;
            }
        }
        grad[o.mean.b] += d_mean;
        grad[o.value.b] += d_value;
        let raw = p[o.log_std];
        if raw >= T::lit(LOG_STD_MIN) && raw <= T::lit(LOG_STD_MAX) {
            grad[o.log_std] += d_log_std;
        }
        if depth == 0 {
            return;
        }
        let width = o.mean.fan_in;
        for k in 0..width {
            ws.delta[k] = d_mean * p[o.mean.w + k] + d_value * p[o.value.w + k];
        }
        for l in (0..depth).rev() {
            let d = o.trunk[l];
            let out = &ws.acts[l + 1];
            let input = &ws.acts[l];
            for r in 0..d.fan_out {
                ws.delta[r] = ws.delta[r] * act.slope(out[r]);
            }
            for r in 0..d.fan_out {
                let dz = ws.delta[r];
                if dz == T::zero() {
                    continue;
                }
                let g = &mut grad[d.w + r * d.fan_in..d.w + (r + 1) * d.fan_in];
                for (gi, x) in g.iter_mut().zip(input) {
                    *gi += dz * *x;
                }
                grad[d.b + r] += dz;
            }
            if l > 0 {
                for c in 0..d.fan_in {
                    ws.delta_next[c] = T::zero();
                }
                for r in 0..d.fan_out {
                    let dz = ws.delta[r];
                    let row = &p[d.w + r * d.fan_in..d.w + (r + 1) * d.fan_in];
                    for (acc, w) in ws.delta_next[..d.fan_in].iter_mut().zip(row) {
                        *acc += dz * *w;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_next);
            }
        }
    }

    /// Log-density of `torque` at `obs` and the policy entropy.
    pub fn log_prob_and_entropy(&self, obs: &[T], torque: T) -> Result<(T, T)> {
        let out = self.forward(obs)?;
        Ok((
            squash::log_prob(out.mean, out.log_std, torque),
            squash::entropy(out.log_std),
        ))
    }
}

/// Draws a torque from the policy output; returns `(torque, log_prob)`.
pub fn sample_action<T: Real, R: rand::Rng + ?Sized>(out: &PolicyOutput<T>, rng: &mut R) -> (T, T) {
    squash::sample(out.mean, out.log_std, rng)
}

pub fn deterministic_action<T: Real>(out: &PolicyOutput<T>) -> T {
    squash::mode(out.mean)
}

/// Greedy (mean-action) policy adapter for rollouts.
pub struct MeanPolicy<'a, T> {
    params: &'a PolicyParams<T>,
    ws: Workspace<T>,
}

impl<'a, T: Real> MeanPolicy<'a, T> {
    pub fn new(params: &'a PolicyParams<T>) -> Self {
        MeanPolicy {
            params,
            ws: Workspace::new(&params.layout),
        }
    }
}

impl<T: Real> crate::env::ActionSelector<T> for MeanPolicy<'_, T> {
    fn select(&mut self, obs: &crate::env::Observation<T>, _rng: &mut dyn rand::RngCore) -> T {
        let out = self
            .params
            .forward_ws(&mut self.ws, &obs.normalized())
            .expect("environment observations are finite");
        deterministic_action(&out)
    }
}

/// Stochastic policy adapter for rollouts.
pub struct SampledPolicy<'a, T> {
    params: &'a PolicyParams<T>,
    ws: Workspace<T>,
}

impl<'a, T: Real> SampledPolicy<'a, T> {
    pub fn new(params: &'a PolicyParams<T>) -> Self {
        SampledPolicy {
            params,
            ws: Workspace::new(&params.layout),
        }
    }
}

impl<T: Real> crate::env::ActionSelector<T> for SampledPolicy<'_, T> {
    fn select(&mut self, obs: &crate::env::Observation<T>, rng: &mut dyn rand::RngCore) -> T {
        let out = self
            .params
            .forward_ws(&mut self.ws, &obs.normalized())
            .expect("environment observations are finite");
        sample_action(&out, rng).0
    }
}
