use super::buffer::Sample;
use super::Hyperparams;
use crate::error::{Error, Result};
use crate::net::{squash, PolicyParams, Workspace};
use crate::scalar::Real;

/// Log-ratios above this are capped before exponentiation.
pub const RATIO_LOG_CAP: f64 = 20.0;

/// `exp(new - old)`; the second value reports whether the cap was hit.
pub fn ppo_ratio<T: Real>(log_prob_new: T, log_prob_old: T) -> (T, bool) {
    let d = log_prob_new - log_prob_old;
    let cap = T::lit(RATIO_LOG_CAP);
    if d > cap {
        (cap.exp(), true)
    } else {
        (d.exp(), false)
    }
}

pub fn clipped_objective<T: Real>(ratio: T, advantage: T, clip_eps: T) -> T {
    let lo = T::one() - clip_eps;
    let hi = T::one() + clip_eps;
    let clipped = ratio.max(lo).min(hi);
    (ratio * advantage).min(clipped * advantage)
}

/// Minibatch means of the maximized objective and its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents<T> {
    /// `clip - c1 * value + c2 * entropy`.
    pub objective: T,
    pub clip: T,
    /// Mean squared value error.
    pub value: T,
    pub entropy: T,
    /// Fraction of samples whose ratio left `[1 - eps, 1 + eps]`.
    pub clip_fraction: T,
    /// Largest `|ratio - 1|` in the minibatch.
    pub max_ratio_dev: T,
    pub ratio_caps: usize,
}

impl<T: Real> LossComponents<T> {
    /// The descended quantity, the negated objective.
    pub fn loss(&self) -> T {
        -self.objective
    }
}

/// Evaluates the loss on `batch`. When `grad` is given, the gradient of the
/// negated objective is accumulated into it.
pub fn loss_and_grad<T: Real>(
    params: &PolicyParams<T>,
    ws: &mut Workspace<T>,
    batch: &[Sample<T>],
    hyper: &Hyperparams,
    mut grad: Option<&mut [T]>,
) -> Result<LossComponents<T>> {
    if batch.is_empty() {
        return Err(Error::Config("empty minibatch".into()));
    }
    let n = T::count(batch.len());
    let eps = T::lit(hyper.clip_eps);
    let c1 = T::lit(hyper.c1);
    let c2 = T::lit(hyper.c2);
    let (lo, hi) = (T::one() - eps, T::one() + eps);
    let mut out: LossComponents<T> = LossComponents::default();
    for s in batch {
        let f = params.forward_ws(ws, &s.obs)?;
        let (lp, u) = squash::log_prob_with_preimage(f.mean, f.log_std, s.action);
        let (ratio, capped) = ppo_ratio(lp, s.log_prob_old);
        let a = s.advantage;
        let unclipped = ratio * a;
        let l_clip = clipped_objective(ratio, a, eps);
        let err = f.value - s.value_target;
        let h = squash::entropy(f.log_std);
        out.clip += l_clip;
        out.value += err * err;
        out.entropy += h;
        if ratio < lo || ratio > hi {
            out.clip_fraction += T::one();
        }
        out.max_ratio_dev = out.max_ratio_dev.max((ratio - T::one()).abs());
        out.ratio_caps += capped as usize;
        if let Some(g) = grad.as_deref_mut() {
            // the min picks the unclipped branch exactly when it is not larger
            let d_lp = if !capped && unclipped <= l_clip {
                unclipped
            } else {
                T::zero()
            };
            let (gm, gs) = squash::log_prob_grads(f.mean, f.log_std, u);
            let d_mean = -(d_lp * gm) / n;
            let d_log_std = -(d_lp * gs + c2) / n;
            let d_value = T::lit(2.0) * c1 * err / n;
            params.backward_into(ws, d_mean, d_value, d_log_std, g);
        }
    }
    out.clip = out.clip / n;
    out.value = out.value / n;
    out.entropy = out.entropy / n;
    out.clip_fraction = out.clip_fraction / n;
    out.objective = out.clip - c1 * out.value + c2 * out.entropy;
    if !out.objective.is_finite() {
        let dump: Vec<String> = batch.iter().take(8).map(|s| format!("{:?}", s)).collect();
        return Err(Error::NonFinite(format!(
            "loss over {} samples; first samples: [{}]",
            batch.len(),
            dump.join(", ")
        )));
    }
    Ok(out)
}

pub fn total_loss<T: Real>(
    params: &PolicyParams<T>,
    batch: &[Sample<T>],
    hyper: &Hyperparams,
) -> Result<LossComponents<T>> {
    let mut ws = Workspace::new(&params.layout);
    loss_and_grad(params, &mut ws, batch, hyper, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Activation, NetLayout};
    use rand::{Rng, SeedableRng};

    #[test]
    fn ratio_probes() {
        assert_eq!(ppo_ratio(-1.3_f64, -1.3), (1.0, false));
        assert!((ppo_ratio(2.0_f64.ln(), 0.0).0 - 2.0).abs() < 1e-15);
        assert!((ppo_ratio(-(4.0_f64.ln()), 0.0).0 - 0.25).abs() < 1e-15);
        let (r, capped) = ppo_ratio(1000.0_f64, 0.0);
        assert!(capped && r == 20.0_f64.exp());
    }

    #[test]
    fn clip_probes() {
        assert_eq!(clipped_objective(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_objective(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_objective(1.0, -3.7, 0.2), -3.7);
    }

    fn toy() -> NetLayout {
        NetLayout {
            inputs: 3,
            hidden: vec![4],
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn zero_signal_gives_zero_components() {
        let p = init_params::<f64>(&toy(), 2).unwrap();
        let obs = [0.2, -0.1, 0.3];
        let f = p.forward(&obs).unwrap();
        let action = squash::mode(f.mean);
        let s = Sample {
            obs,
            action,
            log_prob_old: squash::log_prob(f.mean, f.log_std, action),
            advantage: 0.0,
            value_target: f.value,
        };
        let h = Hyperparams {
            c2: 0.0,
            ..Default::default()
        };
        let mut ws = Workspace::new(&p.layout);
        let mut g = vec![0.0; p.len()];
        let c = loss_and_grad(&p, &mut ws, &[s], &h, Some(&mut g)).unwrap();
        assert_eq!((c.objective, c.clip, c.value), (0.0, 0.0, 0.0));
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn reduces_to_mean_clip_objective() {
        let p = init_params::<f64>(&toy(), 3).unwrap();
        let h = Hyperparams {
            c1: 0.0,
            c2: 0.0,
            ..Default::default()
        };
        let batch = [
            Sample {
                obs: [0.1, 0.2, 0.3],
                action: 30.0,
                log_prob_old: -4.0,
                advantage: 1.3,
                value_target: 2.0,
            },
            Sample {
                obs: [-0.4, 0.0, 0.9],
                action: 90.0,
                log_prob_old: -5.5,
                advantage: -0.7,
                value_target: -1.0,
            },
        ];
        let c = total_loss(&p, &batch, &h).unwrap();
        let want: f64 = batch
            .iter()
            .map(|s| {
                let f = p.forward(&s.obs).unwrap();
                let r = (squash::log_prob(f.mean, f.log_std, s.action) - s.log_prob_old).exp();
                clipped_objective(r, s.advantage, 0.2)
            })
            .sum::<f64>()
            / 2.0;
        assert!((c.objective - want).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut p = init_params::<f64>(&toy(), 5).unwrap();
        p.set_log_std(-0.3);
        let h = Hyperparams::default();
        let batch: Vec<Sample<f64>> = (0..6)
            .map(|_| {
                let obs = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let f = p.forward(&obs).unwrap();
                let action = rng.random_range(5.0..110.0);
                let lp = squash::log_prob(f.mean, f.log_std, action);
                Sample {
                    obs,
                    action,
                    log_prob_old: lp + rng.random_range(-0.1..0.1),
                    advantage: rng.random_range(-2.0..2.0),
                    value_target: rng.random_range(-1.0..1.0),
                }
            })
            .collect();
        let mut ws = Workspace::new(&p.layout);
        let mut g = vec![0.0; p.len()];
        loss_and_grad(&p, &mut ws, &batch, &h, Some(&mut g)).unwrap();
        let loss = |q: &PolicyParams<f64>| total_loss(q, &batch, &h).unwrap().loss();
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a.values[i] += 1e-6;
            b.values[i] -= 1e-6;
            let fd = (loss(&a) - loss(&b)) / 2e-6;
            assert!(
                (fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {i}: fd {fd} vs {}",
                g[i]
            );
        }
    }
}
