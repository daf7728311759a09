//! Driving cycles: ingestion, validation, synthesis and source/target partitioning.
//!
//! A cycle is the exogenous disturbance of the control problem. It is sampled
//! at a fixed period `dt` and carries speed and acceleration of equal length.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_MAX: f64 = 45.0;
pub const ACCEL_MAX: f64 = 5.0;
pub const DEFAULT_DT: f64 = 1.0;

/// Tolerance on a supplied `t` column relative to the configured period.
const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingCycle {
    pub id: String,
    pub dt: f64,
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
}

impl DrivingCycle {
    /// Builds a cycle from speeds alone, deriving acceleration by forward
    /// difference. The final acceleration is zero.
    pub fn from_speeds(id: impl Into<String>, dt: f64, speed: Vec<f64>) -> Result<Self> {
        let accel = forward_difference(&speed, dt);
        Self::new(id, dt, speed, accel)
    }

    pub fn new(id: impl Into<String>, dt: f64, speed: Vec<f64>, accel: Vec<f64>) -> Result<Self> {
        let cycle = DrivingCycle {
            id: id.into(),
            dt,
            speed,
            accel,
        };
        cycle.validate()?;
        Ok(cycle)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "cycle {}: dt must be > 0, got {}",
                self.id, self.dt
            )));
        }
        if self.speed.len() < 2 {
            return Err(Error::Config(format!(
                "cycle {}: needs at least 2 samples, got {}",
                self.id,
                self.speed.len()
            )));
        }
        if self.speed.len() != self.accel.len() {
            return Err(Error::Config(format!(
                "cycle {}: {} speeds but {} accelerations",
                self.id,
                self.speed.len(),
                self.accel.len()
            )));
        }
        check_range(&self.id, "speed", &self.speed, 0.0, SPEED_MAX)?;
        check_range(&self.id, "accel", &self.accel, -ACCEL_MAX, ACCEL_MAX)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    pub fn mean_speed(&self) -> f64 {
        self.speed.iter().sum::<f64>() / self.len() as f64
    }
}

fn check_range(id: &str, field: &'static str, xs: &[f64], lo: f64, hi: f64) -> Result<()> {
    for (index, &value) in xs.iter().enumerate() {
        if !(value >= lo && value <= hi) {
            return Err(Error::CycleBounds {
                cycle: id.to_string(),
                field,
                index,
                value,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

pub fn forward_difference(speed: &[f64], dt: f64) -> Vec<f64> {
    let mut accel: Vec<f64> = speed.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    if !speed.is_empty() {
        accel.push(0.0);
    }
    accel
}

/// Reads a cycle from CSV.
///
/// Accepted layouts: a header `t,speed_mps[,accel_mps2]` followed by one row
/// per sample, or bare rows of a single speed value. When the acceleration
/// column is absent it is derived by forward difference.
pub fn load_cycle(path: &Path, dt: f64) -> Result<DrivingCycle> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    let text = fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".to_string());
    parse_cycle(&id, &text, dt).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    })
}

#[derive(Debug, Clone, Copy)]
enum Columns {
    SpeedOnly,
    TimeSpeed,
    TimeSpeedAccel,
}

/// Parses CSV text; errors carry an empty path which [`load_cycle`] fills in.
pub fn parse_cycle(id: &str, text: &str, dt: f64) -> Result<DrivingCycle> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: Default::default(),
        line,
        msg,
    };
    let mut columns = None;
    let mut speed = Vec::new();
    let mut accel = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if columns.is_none() && fields[0].parse::<f64>().is_err() {
            columns = Some(match fields.as_slice() {
                ["t", "speed_mps"] => Columns::TimeSpeed,
                ["t", "speed_mps", "accel_mps2"] => Columns::TimeSpeedAccel,
                ["speed_mps"] => Columns::SpeedOnly,
                _ => return Err(parse_err(line_no, format!("unrecognized header `{line}`"))),
            });
            continue;
        }
        let cols = *columns.get_or_insert(match fields.len() {
            1 => Columns::SpeedOnly,
            2 => Columns::TimeSpeed,
            _ => Columns::TimeSpeedAccel,
        });
        let expected = match cols {
            Columns::SpeedOnly => 1,
            Columns::TimeSpeed => 2,
            Columns::TimeSpeedAccel => 3,
        };
        if fields.len() != expected {
            return Err(parse_err(
                line_no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("not a number: `{s}`")))
        };
        let (t, v) = match cols {
            Columns::SpeedOnly => (None, num(fields[0])?),
            _ => (Some(num(fields[0])?), num(fields[1])?),
        };
        if let Some(t) = t {
            let expected_t = speed.len() as f64 * dt;
            if (t - expected_t).abs() > TIME_TOL * dt.max(1.0) * (1.0 + expected_t) {
                return Err(parse_err(
                    line_no,
                    format!("time {t} does not match sample period {dt} (expected {expected_t})"),
                ));
            }
        }
        speed.push(v);
        if let Columns::TimeSpeedAccel = cols {
            accel.push(num(fields[2])?);
        }
    }
    let accel = match columns {
        Some(Columns::TimeSpeedAccel) => accel,
        _ => forward_difference(&speed, dt),
    };
    DrivingCycle::new(id, dt, speed, accel)
}

/// Writes `t,speed_mps,accel_mps2` with shortest round-trip float formatting.
pub fn write_cycle(path: &Path, cycle: &DrivingCycle) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    out.write_all(cycle_to_csv(cycle).as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn cycle_to_csv(cycle: &DrivingCycle) -> String {
    let mut s = String::from("t,speed_mps,accel_mps2\n");
    for (i, (v, a)) in cycle.speed.iter().zip(&cycle.accel).enumerate() {
        s.push_str(&format!("{},{},{}\n", i as f64 * cycle.dt, v, a));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Urban,
    Suburban,
    Highway,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "urban" => Ok(Profile::Urban),
            "suburban" => Ok(Profile::Suburban),
            "highway" => Ok(Profile::Highway),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Urban => "urban",
            Profile::Suburban => "suburban",
            Profile::Highway => "highway",
        })
    }
}

/// Parameters of the three-state speed walk for one profile.
struct WalkShape {
    cruise_lo: f64,
    cruise_hi: f64,
    /// Probability that a transient ends in a full stop.
    stop_prob: f64,
    idle_lo: usize,
    idle_hi: usize,
    cruise_lo_s: usize,
    cruise_hi_s: usize,
    accel_lo: f64,
    accel_hi: f64,
    jitter: f64,
}

impl Profile {
    fn shape(self) -> WalkShape {
        match self {
            Profile::Urban => WalkShape {
                cruise_lo: 7.0,
                cruise_hi: 15.0,
                stop_prob: 0.55,
                idle_lo: 5,
                idle_hi: 20,
                cruise_lo_s: 8,
                cruise_hi_s: 30,
                accel_lo: 0.6,
                accel_hi: 1.3,
                jitter: 0.15,
            },
            Profile::Suburban => WalkShape {
                cruise_lo: 13.0,
                cruise_hi: 22.0,
                stop_prob: 0.3,
                idle_lo: 4,
                idle_hi: 15,
                cruise_lo_s: 15,
                cruise_hi_s: 50,
                accel_lo: 0.5,
                accel_hi: 1.1,
                jitter: 0.2,
            },
            Profile::Highway => WalkShape {
                cruise_lo: 24.0,
                cruise_hi: 31.0,
                stop_prob: 0.0,
                idle_lo: 0,
                idle_hi: 0,
                cruise_lo_s: 30,
                cruise_hi_s: 90,
                accel_lo: 0.3,
                accel_hi: 0.8,
                jitter: 0.2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Idle(usize),
    Cruise { target: f64, left: usize },
    Transient { target: f64, rate: f64 },
}

/// Generates a speed trace from a seeded idle/cruise/transient chain.
///
/// Urban and suburban traces start with an idle stop. Speeds are clipped to
/// `[0, 45]` m/s and per-step increments to `±5 m/s²·dt`, so the derived
/// accelerations always satisfy the cycle bounds.
pub fn synthesize_cycle(seed: u64, duration: f64, profile: Profile) -> Result<DrivingCycle> {
    synthesize_cycle_dt(seed, duration, profile, DEFAULT_DT)
}

pub fn synthesize_cycle_dt(seed: u64, duration: f64, profile: Profile, dt: f64) -> Result<DrivingCycle> {
    if !(duration >= 60.0) {
        return Err(Error::Config(format!(
            "synthetic cycle duration must be >= 60 s, got {duration}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    let n = (duration / dt).round() as usize;
    let shape = profile.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ profile_salt(profile));
    let draw_target = |rng: &mut ChaCha8Rng| rng.random_range(shape.cruise_lo..=shape.cruise_hi);
    let draw_rate = |rng: &mut ChaCha8Rng| rng.random_range(shape.accel_lo..=shape.accel_hi);

    let mut phase = if shape.idle_hi > 0 {
        Phase::Idle(rng.random_range(shape.idle_lo.max(3)..=shape.idle_hi))
    } else {
        Phase::Transient {
            target: draw_target(&mut rng),
            rate: draw_rate(&mut rng),
        }
    };
    let mut speed = Vec::with_capacity(n);
    let mut v = 0.0_f64;
    while speed.len() < n {
        speed.push(v);
        let (next_v, next_phase) = match phase {
            Phase::Idle(left) => {
                if left > 1 {
                    (0.0, Phase::Idle(left - 1))
                } else {
                    let target = draw_target(&mut rng);
                    let rate = draw_rate(&mut rng);
                    (v, Phase::Transient { target, rate })
                }
            }
            Phase::Transient { target, rate } => {
                let step = rate * dt;
                if (target - v).abs() <= step {
                    let next = if target <= 0.0 {
                        let idle = rng.random_range(shape.idle_lo.max(1)..=shape.idle_hi.max(1));
                        Phase::Idle(idle)
                    } else {
                        Phase::Cruise {
                            target,
                            left: rng.random_range(shape.cruise_lo_s..=shape.cruise_hi_s),
                        }
                    };
                    (target, next)
                } else {
                    (v + step * (target - v).signum(), phase)
                }
            }
            Phase::Cruise { target, left } => {
                if left > 1 {
                    let noise = shape.jitter * (rng.random::<f64>() * 2.0 - 1.0);
                    let pull = 0.3 * (target - v);
                    (v + (pull + noise) * dt, Phase::Cruise { target, left: left - 1 })
                } else {
                    let stop = rng.random::<f64>() < shape.stop_prob;
                    let target = if stop { 0.0 } else { draw_target(&mut rng) };
                    (
                        v,
                        Phase::Transient {
                            target,
                            rate: draw_rate(&mut rng),
                        },
                    )
                }
            }
        };
        let max_step = ACCEL_MAX * dt;
        v = (v + (next_v - v).clamp(-max_step, max_step)).clamp(0.0, SPEED_MAX);
        phase = next_phase;
    }
    DrivingCycle::from_speeds(format!("{profile}-{seed}"), dt, speed)
}

fn profile_salt(profile: Profile) -> u64 {
    match profile {
        Profile::Urban => 0x75_72_62_61_6e,
        Profile::Suburban => 0x73_75_62_75_72_62,
        Profile::Highway => 0x68_69_67_68_77_61_79,
    }
}

/// A deterministic mixed suite: profiles rotate urban, suburban, highway.
pub fn synthetic_suite(seed: u64, count: usize, duration: f64) -> Result<Vec<DrivingCycle>> {
    const ROTATION: [Profile; 3] = [Profile::Urban, Profile::Suburban, Profile::Highway];
    (0..count)
        .map(|i| synthesize_cycle(seed.wrapping_add(i as u64), duration, ROTATION[i % 3]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclePartition {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub includes_target_in_source: bool,
}

impl CyclePartition {
    /// Resolves ids against `all`, in partition order.
    pub fn source_cycles<'a>(&self, all: &'a [DrivingCycle]) -> Result<Vec<&'a DrivingCycle>> {
        resolve(all, &self.source)
    }

    pub fn target_cycles<'a>(&self, all: &'a [DrivingCycle]) -> Result<Vec<&'a DrivingCycle>> {
        resolve(all, &self.target)
    }
}

fn resolve<'a>(all: &'a [DrivingCycle], ids: &[String]) -> Result<Vec<&'a DrivingCycle>> {
    ids.iter()
        .map(|id| {
            all.iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| Error::Config(format!("unknown cycle id `{id}`")))
        })
        .collect()
}

/// Splits cycles into source and target sets.
///
/// With `include_targets`, the source set holds every target followed by the
/// first non-target cycles of `all` in order; otherwise it holds only
/// non-target cycles.
pub fn make_partition(
    all: &[DrivingCycle],
    n_source: usize,
    target_ids: &[String],
    include_targets: bool,
) -> Result<CyclePartition> {
    if n_source == 0 {
        return Err(Error::Config("n_source must be >= 1".into()));
    }
    if target_ids.is_empty() {
        return Err(Error::Config("at least one target cycle is required".into()));
    }
    if n_source > all.len() {
        return Err(Error::Config(format!(
            "n_source = {n_source} exceeds the {} available cycles",
            all.len()
        )));
    }
    for (i, id) in target_ids.iter().enumerate() {
        if !all.iter().any(|c| &c.id == id) {
            return Err(Error::Config(format!("target `{id}` is not among the cycles")));
        }
        if target_ids[..i].contains(id) {
            return Err(Error::Config(format!("target `{id}` listed twice")));
        }
    }
    let others = all.iter().map(|c| &c.id).filter(|id| !target_ids.contains(id));
    let source: Vec<String> = if include_targets {
        if n_source < target_ids.len() {
            return Err(Error::Config(format!(
                "n_source = {n_source} cannot include all {} targets",
                target_ids.len()
            )));
        }
        target_ids
            .iter()
            .cloned()
            .chain(others.take(n_source - target_ids.len()).cloned())
            .collect()
    } else {
        let source: Vec<String> = others.take(n_source).cloned().collect();
        if source.len() < n_source {
            return Err(Error::Config(format!(
                "only {} non-target cycles available for {n_source} excluded-target sources",
                source.len()
            )));
        }
        source
    };
    Ok(CyclePartition {
        source,
        target: target_ids.to_vec(),
        includes_target_in_source: include_targets,
    })
}
