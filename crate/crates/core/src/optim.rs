//! Adam with global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    /// Fresh optimizer with zero moments for `n` parameters.
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Adam {
            config,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = T::zero());
        self.v.iter_mut().for_each(|x| *x = T::zero());
        self.steps = 0;
    }

    /// Descends along `grad`. A zero learning rate leaves `params` untouched.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.steps += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - b1.powi(self.steps.min(i32::MAX as u64) as i32);
        let bc2 = T::one() - b2.powi(self.steps.min(i32::MAX as u64) as i32);
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            if c.lr != 0.0 {
                let mh = self.m[i] / bc1;
                let vh = self.v[i] / bc2;
                params[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

pub fn l2_norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Real>(grad: &mut [T], max_norm: f64) -> T {
    let norm = l2_norm(grad);
    let cap = T::lit(max_norm);
    if max_norm > 0.0 && norm > cap {
        let s = cap / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first update lr * sign(g)
        let mut opt = Adam::<f64>::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut opt = Adam::<f64>::new(
            AdamConfig {
                lr: 0.0,
                ..Default::default()
            },
            1,
        );
        let mut p = vec![0.3];
        for _ in 0..5 {
            opt.step(&mut p, &[1.0]);
        }
        assert_eq!(p[0], 0.3);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::<f64>::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            1,
        );
        let mut p = vec![4.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn clip_caps_norm() {
        let mut g = vec![3.0_f64, 4.0];
        let n = clip_grad_norm(&mut g, 0.5);
        assert_eq!(n, 5.0);
        assert!((l2_norm(&g) - 0.5).abs() < 1e-12);
        let mut h = vec![0.1, 0.1];
        clip_grad_norm(&mut h, 0.5);
        assert_eq!(h, vec![0.1, 0.1]);
    }
}
