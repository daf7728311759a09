//! Dynamic-programming benchmark for the same control problem.
//!
//! The cycle fixes speed and acceleration at every step, so the only state is
//! SOC and the transition is deterministic. Backward value iteration runs over
//! SOC nodes with linear interpolation of the successor value; the forward
//! pass then picks, at the true continuous SOC, the torque node minimizing
//! stage cost plus interpolated cost-to-go, and replays the sequence through
//! [`Env`] to report the realized cost.

use std::fmt::Write as _;

use crate::cycles::DrivingCycle;
use crate::env::{self, soc_penalty, Env, Replay, Trajectory};
use crate::error::{Error, Result};
use crate::powertrain::PowertrainParams;
use crate::scalar::Real;

/// Cost added to transitions that fail to evaluate or drive SOC into the
/// hard `[0, 1]` clamp. Finite, so every node keeps a defined value.
pub const INFEASIBLE_COST: f64 = 1.0e6;

pub const DEFAULT_SOC_NODES: usize = 201;
pub const DEFAULT_TORQUE_NODES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct DpGrid<T> {
    pub soc_nodes: Vec<T>,
    pub torque_nodes: Vec<T>,
}

impl<T: Real> DpGrid<T> {
    pub fn new(soc_nodes: Vec<T>, torque_nodes: Vec<T>) -> Result<Self> {
        let g = DpGrid {
            soc_nodes,
            torque_nodes,
        };
        g.validate()?;
        Ok(g)
    }

    /// `n_soc` uniform nodes over `[soc_min, soc_max]`, plus the SOC
    /// reference when it falls between nodes (the penalty has a kink there),
    /// and `n_torque` uniform nodes over `[0, torque_max]`.
    pub fn uniform(params: &PowertrainParams<T>, n_soc: usize, n_torque: usize) -> Result<Self> {
        if n_soc < 2 || n_torque < 2 {
            return Err(Error::Config("a DP grid needs at least 2 nodes per axis".into()));
        }
        let mut soc = linspace(params.soc_min, params.soc_max, n_soc);
        let r = params.soc_ref;
        if r > soc[0] && r < soc[n_soc - 1] && !soc.iter().any(|s| (*s - r).abs() <= T::lit(1e-12)) {
            let at = soc.partition_point(|s| *s < r);
            soc.insert(at, r);
        }
        Self::new(soc, linspace(T::zero(), params.torque_max(), n_torque))
    }

    pub fn default_for(params: &PowertrainParams<T>) -> Result<Self> {
        Self::uniform(params, DEFAULT_SOC_NODES, DEFAULT_TORQUE_NODES)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, nodes) in [("soc_nodes", &self.soc_nodes), ("torque_nodes", &self.torque_nodes)] {
            if nodes.len() < 2 {
                return Err(Error::Config(format!("{name}: at least 2 nodes required")));
            }
            if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "{name}: nodes must be finite and strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn soc_range(&self) -> (T, T) {
        (self.soc_nodes[0], self.soc_nodes[self.soc_nodes.len() - 1])
    }
}

fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let last = T::count(n - 1);
    (0..n)
        .map(|i| {
            let f = T::count(i) / last;
            lo * (T::one() - f) + hi * f
        })
        .collect()
}

/// Piecewise-linear interpolation of `values` at `x`; `x` is clamped to the node range.
pub fn interpolate<T: Real>(nodes: &[T], values: &[T], x: T) -> T {
    let n = nodes.len();
    if x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let j = nodes.partition_point(|v| *v <= x).clamp(1, n - 1);
    let (x0, x1) = (nodes[j - 1], nodes[j]);
    let w = (x - x0) / (x1 - x0);
    values[j - 1] + w * (values[j] - values[j - 1])
}

#[derive(Debug, Clone)]
pub struct DpSolution<T> {
    /// Optimal cost from the initial SOC: one exact Bellman step at `soc0`
    /// over the interpolated cost-to-go table.
    pub j_star: T,
    /// Stage costs summed along the forward pass at the continuous SOC.
    pub forward_cost: T,
    /// Commanded torque per step.
    pub torques: Vec<T>,
    /// Env replay of `torques` from the initial SOC.
    pub trajectory: Trajectory<T>,
}

impl<T: Real> DpSolution<T> {
    pub fn realized_cost(&self) -> T {
        self.trajectory.cost()
    }
}

/// Per-step, per-torque quantities; they do not depend on SOC.
struct Stage<T> {
    fuel_g: Vec<T>,
    dsoc: Vec<T>,
    ok: Vec<bool>,
}

fn stages<T: Real>(params: &PowertrainParams<T>, cycle: &DrivingCycle, grid: &DpGrid<T>) -> Vec<Stage<T>> {
    let dt = T::lit(cycle.dt);
    (0..cycle.len())
        .map(|t| {
            let (v, a) = (T::lit(cycle.speed[t]), T::lit(cycle.accel[t]));
            let mut s = Stage {
                fuel_g: Vec::with_capacity(grid.torque_nodes.len()),
                dsoc: Vec::with_capacity(grid.torque_nodes.len()),
                ok: Vec::with_capacity(grid.torque_nodes.len()),
            };
            for &u in &grid.torque_nodes {
                match env::transition(params, v, a, u) {
                    Ok(tr) => {
                        s.fuel_g.push(tr.fuel_gps * dt);
                        s.dsoc.push(tr.soc_rate * dt);
                        s.ok.push(true);
                    }
                    Err(_) => {
                        s.fuel_g.push(T::zero());
                        s.dsoc.push(T::zero());
                        s.ok.push(false);
                    }
                }
            }
            s
        })
        .collect()
}

/// Stage cost plus interpolated cost-to-go from `soc` with torque node `k`.
fn q_value<T: Real>(
    params: &PowertrainParams<T>,
    grid: &DpGrid<T>,
    stage: &Stage<T>,
    next: &[T],
    dt: T,
    soc: T,
    k: usize,
) -> T {
    let big = T::lit(INFEASIBLE_COST);
    if !stage.ok[k] {
        return big + next[0].max(next[next.len() - 1]);
    }
    // same integration and clamp as the environment; successors outside the
    // node range take the nearest edge value
    let raw = soc + stage.dsoc[k];
    let s1 = raw.max(T::zero()).min(T::one());
    let q = stage.fuel_g[k] + soc_penalty(params, s1, dt) + interpolate(&grid.soc_nodes, next, s1);
    if s1 != raw {
        q + big
    } else {
        q
    }
}

fn argmin<T: Real>(n: usize, mut f: impl FnMut(usize) -> T) -> (usize, T) {
    let mut best = (0, f(0));
    for k in 1..n {
        let q = f(k);
        // strict comparison keeps the lowest torque among ties
        if q < best.1 {
            best = (k, q);
        }
    }
    best
}

/// Solves the cycle from `soc0`. Returns the grid optimum `J*`, the greedy
/// torque sequence and its realized env trajectory.
pub fn dp_solve<T: Real>(
    grid: &DpGrid<T>,
    params: &PowertrainParams<T>,
    cycle: &DrivingCycle,
    soc0: T,
) -> Result<DpSolution<T>> {
    grid.validate()?;
    if cycle.is_empty() {
        return Err(Error::domain("cycle length", 0.0, 1.0, f64::INFINITY));
    }
    let (lo, hi) = grid.soc_range();
    if !(soc0 >= lo && soc0 <= hi) {
        return Err(Error::domain("initial SOC", soc0.as_f64(), lo.as_f64(), hi.as_f64()));
    }
    let n = cycle.len();
    let dt = T::lit(cycle.dt);
    let st = stages(params, cycle, grid);
    let nu = grid.torque_nodes.len();
    // values[t] is the cost-to-go table at step t; values[n] is zero
    let mut values = vec![vec![T::zero(); grid.soc_nodes.len()]; n + 1];
    for t in (0..n).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        for (i, &s) in grid.soc_nodes.iter().enumerate() {
            head[t][i] = argmin(nu, |k| q_value(params, grid, &st[t], next, dt, s, k)).1;
        }
    }
    let mut torques = Vec::with_capacity(n);
    let mut soc = soc0;
    let mut j_star = T::zero();
    let mut forward_cost = T::zero();
    for t in 0..n {
        let (k, q) = argmin(nu, |k| q_value(params, grid, &st[t], &values[t + 1], dt, soc, k));
        if t == 0 {
            j_star = q;
        }
        torques.push(grid.torque_nodes[k]);
        soc = (soc + st[t].dsoc[k]).max(T::zero()).min(T::one());
        forward_cost += st[t].fuel_g[k] + soc_penalty(params, soc, dt);
    }
    let (mut env, _) = Env::reset(params, cycle, soc0)?;
    // the replay ignores randomness; any seeded stream will do
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let trajectory = env::rollout_from(&mut env, &mut Replay::new(torques.clone()), &mut rng, T::one())?;
    Ok(DpSolution {
        j_star,
        forward_cost,
        torques,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineRow {
    pub soc_nodes: usize,
    pub torque_nodes: usize,
    pub j_star: f64,
    pub realized_cost: f64,
}

pub const REFINE_HEADER: &str = "soc_nodes,torque_nodes,j_star,realized_cost";

/// `J*` over an increasing ladder of SOC node counts at a fixed torque grid.
pub fn dp_refine_study<T: Real>(
    cycle: &DrivingCycle,
    params: &PowertrainParams<T>,
    soc0: T,
    ladder: &[usize],
    torque_nodes: usize,
) -> Result<Vec<RefineRow>> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "refinement ladder must be non-empty and increasing".into(),
        ));
    }
    ladder
        .iter()
        .map(|&n| {
            let grid = DpGrid::uniform(params, n, torque_nodes)?;
            let sol = dp_solve(&grid, params, cycle, soc0)?;
            Ok(RefineRow {
                soc_nodes: n,
                torque_nodes,
                j_star: sol.j_star.as_f64(),
                realized_cost: sol.realized_cost().as_f64(),
            })
        })
        .collect()
}

pub fn refine_csv(rows: &[RefineRow]) -> String {
    let mut s = String::from(REFINE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.soc_nodes, r.torque_nodes, r.j_star, r.realized_cost);
    }
    s
}
