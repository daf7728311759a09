use crate::scalar::Real;

/// Advantages and value targets for one contiguous actor segment.
///
/// `bootstrap` is the critic's value at the state after the last step; it is
/// ignored when the last step is terminal. A done flag at `t` zeroes the
/// successor value and stops the backward accumulation, so no information
/// crosses an episode boundary.
pub fn compute_gae<T: Real>(
    rewards: &[T],
    values: &[T],
    dones: &[bool],
    bootstrap: T,
    gamma: f64,
    lambda: f64,
) -> (Vec<T>, Vec<T>) {
    let n = rewards.len();
    assert!(
        values.len() == n && dones.len() == n,
        "segment arrays must have equal length"
    );
    let g = T::lit(gamma);
    let gl = T::lit(gamma * lambda);
    let mut adv = vec![T::zero(); n];
    let mut acc = T::zero();
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let (delta, carry) = if dones[t] {
            (rewards[t] - values[t], T::zero())
        } else {
            (rewards[t] + g * next_value - values[t], gl * acc)
        };
        acc = delta + carry;
        adv[t] = acc;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| *a + *v).collect();
    (adv, targets)
}

/// Shifts and scales to zero mean and unit (population) standard deviation;
/// the deviation is floored at 1e-8.
pub fn normalize_advantages<T: Real>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = T::count(adv.len());
    let mean = adv.iter().copied().sum::<T>() / n;
    let var = adv.iter().map(|a| (*a - mean) * (*a - mean)).sum::<T>() / n;
    let std = var.sqrt().max(T::lit(1e-8));
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
