//! Tanh-squashed Gaussian over engine torque.
//!
//! A pre-squash sample `u ~ N(mean, σ²)` maps to `low + (high - low)(1 + tanh u)/2`.
//! Log-densities are taken in torque space and include the Jacobian of the squash.

use rand::Rng;

use crate::scalar::Real;

pub const ACTION_LOW: f64 = 0.0;
pub const ACTION_HIGH: f64 = 115.0;

/// Largest |tanh u| used when inverting the squash at the interval edges.
pub const EDGE: f64 = 1.0 - 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn mid<T: Real>() -> T {
    T::lit(0.5 * (ACTION_LOW + ACTION_HIGH))
}

fn half<T: Real>() -> T {
    T::lit(0.5 * (ACTION_HIGH - ACTION_LOW))
}

pub fn squash<T: Real>(u: T) -> T {
    let a = mid::<T>() + half::<T>() * u.tanh();
    a.max(T::lit(ACTION_LOW)).min(T::lit(ACTION_HIGH))
}

/// Pre-image of a torque with `|tanh u|` clipped to [`EDGE`]; returns `(u, tanh u)`.
pub fn unsquash<T: Real>(torque: T) -> (T, T) {
    let edge = T::lit(EDGE);
    let y = ((torque - mid::<T>()) / half::<T>()).max(-edge).min(edge);
    (y.atanh(), y)
}

/// Log-density of `torque` in torque space, with the pre-image used.
pub fn log_prob_with_preimage<T: Real>(mean: T, log_std: T, torque: T) -> (T, T) {
    let (u, y) = unsquash(torque);
    let z = (u - mean) / log_std.exp();
    let gauss = -T::lit(0.5) * z * z - log_std - T::lit(0.5 * LN_2PI);
    let jac = (half::<T>() * (T::one() - y * y)).ln();
    (gauss - jac, u)
}

pub fn log_prob<T: Real>(mean: T, log_std: T, torque: T) -> T {
    log_prob_with_preimage(mean, log_std, torque).0
}

/// Density in torque space, 1/Nm.
pub fn density<T: Real>(mean: T, log_std: T, torque: T) -> T {
    log_prob(mean, log_std, torque).exp()
}

/// `∂ log p / ∂ mean` and `∂ log p / ∂ log σ` at pre-image `u`.
pub fn log_prob_grads<T: Real>(mean: T, log_std: T, u: T) -> (T, T) {
    let sigma = log_std.exp();
    let z = (u - mean) / sigma;
    (z / sigma, z * z - T::one())
}

/// Entropy of the pre-squash Gaussian, `0.5 ln(2πe σ²)`.
pub fn entropy<T: Real>(log_std: T) -> T {
    T::lit(0.5 * (LN_2PI + 1.0)) + log_std
}

/// Draws a torque and its log-density. The log-density is evaluated from the
/// torque, so it matches a later recomputation bit for bit.
pub fn sample<T: Real, R: Rng + ?Sized>(mean: T, log_std: T, rng: &mut R) -> (T, T) {
    let u = mean + log_std.exp() * T::standard_normal(rng);
    let torque = squash(u);
    (torque, log_prob(mean, log_std, torque))
}

/// The squashed mean, used as the deterministic action.
pub fn mode<T: Real>(mean: T) -> T {
    squash(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_mean_maps_to_midpoint() {
        assert_eq!(mode(0.0_f64), 57.5);
    }

    #[test]
    fn samples_stay_in_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(m, ls) in &[(0.0, 0.0), (8.0, 1.5), (-8.0, 2.0), (0.3, -5.0)] {
            for _ in 0..10_000 {
                let (a, lp): (f64, f64) = sample(m, ls, &mut rng);
                assert!((0.0..=115.0).contains(&a));
                assert!(lp.is_finite());
            }
        }
    }

    #[test]
    fn log_prob_at_mode_closed_form() {
        // u = mean = 0.4, sigma = 1: log N(0; 0, 1) - ln(57.5 (1 - tanh^2 0.4))
        let m = 0.4_f64;
        let a = mode(m);
        let expected = -0.5 * LN_2PI - (57.5 * (1.0 - m.tanh().powi(2))).ln();
        assert!((log_prob(m, 0.0, a) - expected).abs() < 1e-9);
    }

    #[test]
    fn entropy_doubles_sigma_adds_ln2() {
        let h1 = entropy(0.3_f64);
        let h2 = entropy(0.3_f64 + std::f64::consts::LN_2);
        assert!((h2 - h1 - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        // composite Simpson on a substitution-free grid; the density is smooth inside (0, 115)
        for &(m, ls) in &[(0.0, 0.0), (0.7, -0.5), (-1.2, 0.2)] {
            let n = 200_000;
            let h = 115.0 / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let x = (i as f64 * h).clamp(1e-9, 115.0 - 1e-9);
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s += w * density(m, ls, x);
            }
            let total = s * h / 3.0;
            assert!((total - 1.0).abs() < 1e-4, "{total}");
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (m, ls, a) = (0.3_f64, -0.2, 80.0);
        let (u, _) = unsquash(a);
        let (gm, gs) = log_prob_grads(m, ls, u);
        let h = 1e-6;
        let fm = (log_prob(m + h, ls, a) - log_prob(m - h, ls, a)) / (2.0 * h);
        let fs = (log_prob(m, ls + h, a) - log_prob(m, ls - h, a)) / (2.0 * h);
        assert!((gm - fm).abs() < 1e-7);
        assert!((gs - fs).abs() < 1e-7);
    }
}
