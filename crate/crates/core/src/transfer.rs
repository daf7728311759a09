//! Expert/student parameter transfer and the experiment harness.
//!
//! An expert is trained from a cold start on source cycles and saved as a
//! checkpoint. A student loads every weight and bias of the expert, starts a
//! fresh optimizer, and continues training on the target cycles under the
//! same learning hyperparameters.
//!
//! Every experiment seed `s` fans out to an expert seed
//! `derive(s, "expert", 0)` and a student seed `derive(s, "student", 0)`.
//! Cold and warm arms of a comparison share the student seed, so their actor
//! streams, cycle schedules and episode budgets coincide.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cycles::{make_partition, CyclePartition, DrivingCycle};
use crate::env::{rollout, Trajectory};
use crate::error::{Error, Result};
use crate::net::{init_params, Checkpoint, CheckpointMeta, MeanPolicy, NetLayout, PolicyParams};
use crate::powertrain::PowertrainParams;
use crate::ppo::{train, Hyperparams, TrainOptions, TrainOutcome, TrainingLog};
use crate::scalar::Real;
use crate::seed;

/// Episodes averaged for the reported starting reward.
pub const INITIAL_WINDOW: usize = 5;

pub const CURVES_HEADER: &str = "experiment,label,seed,mode,episode,total_reward,normalized,value_loss";
pub const FINALS_HEADER: &str = "experiment,label,seed,mode,cycle_id,total_reward,fuel_g,terminal_soc";
pub const SUMMARY_HEADER: &str = "experiment,label,seed,mode,student_seed,iterations,episodes,initial_reward,\
initial_mean,final_mean,episodes_to_threshold,wall_ms_to_threshold,aborted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cold,
    Warm,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Cold => "cold",
            Mode::Warm => "warm",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(Mode::Cold),
            "warm" => Ok(Mode::Warm),
            other => Err(Error::Config(format!("unknown mode `{other}`, expected cold or warm"))),
        }
    }
}

pub fn expert_seed(seed: u64) -> u64 {
    seed::derive(seed, "expert", 0)
}

pub fn student_seed(seed: u64) -> u64 {
    seed::derive(seed, "student", 0)
}

fn init_seed(seed: u64) -> u64 {
    seed::derive(seed, "init", 0)
}

/// Budgets and switches shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub layout: NetLayout,
    pub soc0: f64,
    pub expert_iterations: usize,
    /// Multiply `expert_iterations` by the number of source cycles, so every
    /// source cycle receives the same expected number of episodes.
    pub expert_budget_per_source: bool,
    pub student_iterations: usize,
    /// Episode budget of tl-vs-no-tl runs; training stops once reached.
    pub episodes: usize,
    pub reward_threshold: Option<f64>,
    /// Permit a warm start whose hyperparameter digest differs from the
    /// checkpoint's.
    pub allow_hyper_mismatch: bool,
    pub record_wall_time: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            layout: NetLayout::default(),
            soc0: 0.65,
            expert_iterations: 300,
            expert_budget_per_source: false,
            student_iterations: 50,
            episodes: 100,
            reward_threshold: None,
            allow_hyper_mismatch: false,
            record_wall_time: false,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("protocol.layout: {m}")),
            other => other,
        })?;
        if !(0.0..=1.0).contains(&self.soc0) {
            return Err(Error::Config(format!("protocol.soc0: {} outside [0, 1]", self.soc0)));
        }
        if self.episodes == 0 {
            return Err(Error::Config("protocol.episodes: must be >= 1".into()));
        }
        if let Some(t) = self.reward_threshold {
            if !t.is_finite() {
                return Err(Error::Config("protocol.reward_threshold: must be finite".into()));
            }
        }
        Ok(())
    }

    fn options(&self, max_episodes: Option<usize>) -> TrainOptions {
        TrainOptions {
            soc0: self.soc0,
            max_episodes,
            record_wall_time: self.record_wall_time,
        }
    }

    fn expert_budget(&self, n_source: usize) -> usize {
        if self.expert_budget_per_source {
            self.expert_iterations * n_source
        } else {
            self.expert_iterations
        }
    }
}

/// Trains an expert from a cold start on `source`.
///
/// The budget is `hyper.n_iterations`. The checkpoint records the source ids,
/// the seed and the hyperparameters with their digest.
pub fn train_expert<T: Real>(
    source: &[&DrivingCycle],
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    layout: &NetLayout,
    seed: u64,
    opts: &TrainOptions,
) -> Result<(Checkpoint<T>, TrainingLog)> {
    if source.is_empty() {
        return Err(Error::Config("expert training needs at least one source cycle".into()));
    }
    let init = init_params(layout, init_seed(seed))?;
    let out = train(hyper, powertrain, source, init, seed, opts)?;
    if let Some(reason) = &out.aborted {
        return Err(Error::Training {
            iteration: out.iterations_run,
            reason: format!("expert: {reason}"),
        });
    }
    let meta = CheckpointMeta {
        cycles: source.iter().map(|c| c.id.clone()).collect(),
        seed: Some(seed),
        iterations: out.iterations_run,
        episodes: out.log.episodes.len(),
        hyper_digest: Some(hyper.digest()),
        hyper: Some(serde_json::to_value(hyper)?),
        note: Some("expert".into()),
    };
    Ok((Checkpoint::new(out.params, meta), out.log))
}

/// Checks that `checkpoint` can seed a student with `layout` and `hyper`.
pub fn check_compatible<T: Real>(
    checkpoint: &Checkpoint<T>,
    layout: &NetLayout,
    hyper: &Hyperparams,
    allow_hyper_mismatch: bool,
) -> Result<()> {
    checkpoint.require_layout(layout)?;
    if allow_hyper_mismatch {
        return Ok(());
    }
    let digest = hyper.digest();
    match &checkpoint.meta.hyper_digest {
        Some(d) if *d == digest => Ok(()),
        Some(d) => Err(Error::Incompatible(format!(
            "checkpoint hyperparameter digest {d} differs from the configured {digest}"
        ))),
        None => Err(Error::Incompatible(
            "checkpoint carries no hyperparameter digest".into(),
        )),
    }
}

/// Continues training from every parameter of `checkpoint` on `targets`.
/// Optimizer moments start from zero.
#[allow(clippy::too_many_arguments)]
pub fn warm_start<T: Real>(
    checkpoint: &Checkpoint<T>,
    targets: &[&DrivingCycle],
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    layout: &NetLayout,
    seed: u64,
    opts: &TrainOptions,
    allow_hyper_mismatch: bool,
) -> Result<TrainOutcome<T>> {
    check_compatible(checkpoint, layout, hyper, allow_hyper_mismatch)?;
    train(hyper, powertrain, targets, checkpoint.params.clone(), seed, opts)
}

/// Trains on `targets` from a fresh initialization.
pub fn cold_start<T: Real>(
    targets: &[&DrivingCycle],
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    layout: &NetLayout,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome<T>> {
    let init = init_params(layout, init_seed(seed))?;
    train(hyper, powertrain, targets, init, seed, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleScore {
    pub cycle_id: String,
    pub total_reward: f64,
    pub fuel_g: f64,
    pub terminal_soc: f64,
}

impl CycleScore {
    fn from_trajectory<T: Real>(id: &str, tr: &Trajectory<T>) -> Self {
        CycleScore {
            cycle_id: id.to_string(),
            total_reward: tr.total_reward.as_f64(),
            fuel_g: tr.fuel_g.as_f64(),
            terminal_soc: tr.terminal_soc.as_f64(),
        }
    }
}

/// Deterministic mean-action rollout on each cycle.
pub fn evaluate<T: Real>(
    params: &PolicyParams<T>,
    cycles: &[&DrivingCycle],
    powertrain: &PowertrainParams<T>,
    soc0: f64,
) -> Result<Vec<CycleScore>> {
    cycles
        .iter()
        .map(|c| {
            let mut policy = MeanPolicy::new(params);
            let tr = rollout(powertrain, c, T::lit(soc0), &mut policy, 0, T::one())?;
            Ok(CycleScore::from_trajectory(&c.id, &tr))
        })
        .collect()
}

/// Divides each curve's best (largest) value by every entry, so the best
/// entry maps to 1. Rewards are costs negated, hence non-positive; a best
/// value of zero maps zero entries to 1 and the rest to 0.
pub fn normalize_curve(curve: &[f64]) -> Vec<f64> {
    let best = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    curve
        .iter()
        .map(|&r| {
            if best == 0.0 {
                if r == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                best / r
            }
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// One training run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub mode: Mode,
    pub student_seed: u64,
    pub source_ids: Vec<String>,
    pub iterations: usize,
    /// Per-episode total reward in completion order.
    pub curve: Vec<f64>,
    /// Value loss of the iteration each episode finished in.
    pub value_loss: Vec<f64>,
    pub finals: Vec<CycleScore>,
    pub episodes_to_threshold: Option<usize>,
    pub wall_ms_to_threshold: Option<f64>,
    pub aborted: Option<String>,
}

impl RunRecord {
    fn new<T: Real>(
        label: String,
        seed: u64,
        mode: Mode,
        source_ids: Vec<String>,
        out: &TrainOutcome<T>,
        finals: Vec<CycleScore>,
        threshold: Option<f64>,
    ) -> Self {
        let log = &out.log;
        let curve = log.episode_rewards();
        let value_loss = (0..curve.len())
            .map(|e| log.episode_value_loss(e).unwrap_or(f64::NAN))
            .collect();
        let hit = threshold.and_then(|t| curve.iter().position(|&r| r >= t));
        let wall = hit.map(|e| {
            let it = log.episodes[e].iteration;
            log.iterations
                .iter()
                .filter(|r| r.iteration <= it)
                .map(|r| r.wall_ms)
                .sum()
        });
        RunRecord {
            label,
            seed,
            mode,
            student_seed: student_seed(seed),
            source_ids,
            iterations: out.iterations_run,
            curve,
            value_loss,
            finals,
            episodes_to_threshold: hit.map(|e| e + 1),
            wall_ms_to_threshold: wall,
            aborted: out.aborted.clone(),
        }
    }

    pub fn initial_reward(&self) -> Option<f64> {
        self.curve.first().copied()
    }

    /// Mean reward over the first `n` episodes (fewer if the curve is short).
    pub fn initial_mean(&self, n: usize) -> Option<f64> {
        let k = n.min(self.curve.len());
        (k > 0).then(|| self.curve[..k].iter().sum::<f64>() / k as f64)
    }

    /// Mean deterministic reward over the evaluated target cycles.
    pub fn final_mean(&self) -> Option<f64> {
        let n = self.finals.len();
        (n > 0).then(|| self.finals.iter().map(|f| f.total_reward).sum::<f64>() / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub runs: Vec<RunRecord>,
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(header: &str, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl ExperimentReport {
    pub fn run(&self, label: &str, seed: u64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.label == label && r.seed == seed)
    }

    /// Requires one run per `(label, seed)` pair.
    pub fn check_complete(&self, labels: &[String], seeds: &[u64]) -> Result<()> {
        for l in labels {
            for s in seeds {
                let n = self.runs.iter().filter(|r| &r.label == l && r.seed == *s).count();
                if n != 1 {
                    return Err(Error::Config(format!(
                        "{}: expected one run for ({l}, seed {s}), found {n}",
                        self.experiment
                    )));
                }
            }
        }
        Ok(())
    }

    /// Labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.label) {
                out.push(r.label.clone());
            }
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.runs {
            let norm = normalize_curve(&r.curve);
            for (e, (&reward, &n)) in r.curve.iter().zip(&norm).enumerate() {
                rows.push(vec![
                    self.experiment.clone(),
                    r.label.clone(),
                    r.seed.to_string(),
                    r.mode.to_string(),
                    (e + 1).to_string(),
                    reward.to_string(),
                    n.to_string(),
                    r.value_loss[e].to_string(),
                ]);
            }
        }
        write_csv(CURVES_HEADER, rows)
    }

    pub fn finals_csv(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.runs {
            for f in &r.finals {
                rows.push(vec![
                    self.experiment.clone(),
                    r.label.clone(),
                    r.seed.to_string(),
                    r.mode.to_string(),
                    f.cycle_id.clone(),
                    f.total_reward.to_string(),
                    f.fuel_g.to_string(),
                    f.terminal_soc.to_string(),
                ]);
            }
        }
        write_csv(FINALS_HEADER, rows)
    }

    pub fn summary_csv(&self) -> String {
        let rows = self
            .runs
            .iter()
            .map(|r| {
                vec![
                    self.experiment.clone(),
                    r.label.clone(),
                    r.seed.to_string(),
                    r.mode.to_string(),
                    r.student_seed.to_string(),
                    r.iterations.to_string(),
                    r.curve.len().to_string(),
                    opt(r.initial_reward()),
                    opt(r.initial_mean(INITIAL_WINDOW)),
                    opt(r.final_mean()),
                    opt(r.episodes_to_threshold),
                    opt(r.wall_ms_to_threshold),
                    r.aborted.clone().unwrap_or_default(),
                ]
            })
            .collect();
        write_csv(SUMMARY_HEADER, rows)
    }
}

/// One arm of a transfer experiment over a fixed partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferExperiment {
    pub partition: CyclePartition,
    pub hyper: Hyperparams,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub expert_checkpoint: Option<PathBuf>,
}

impl TransferExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds: at least one seed is required".into()));
        }
        if self.mode == Mode::Warm && self.expert_checkpoint.is_none() {
            return Err(Error::Config(
                "experiment.expert_checkpoint: required in warm mode".into(),
            ));
        }
        if self.partition.target.is_empty() {
            return Err(Error::Config(
                "partition.targets: at least one target is required".into(),
            ));
        }
        self.hyper.validate()
    }

    /// Trains a student per seed on the partition's targets; warm runs start
    /// from the configured checkpoint.
    pub fn run<T: Real>(
        &self,
        all: &[DrivingCycle],
        powertrain: &PowertrainParams<T>,
        protocol: &Protocol,
    ) -> Result<(ExperimentReport, Vec<PolicyParams<T>>)> {
        self.validate()?;
        protocol.validate()?;
        let targets = self.partition.target_cycles(all)?;
        let checkpoint = match (&self.mode, &self.expert_checkpoint) {
            (Mode::Warm, Some(path)) => Some(Checkpoint::<T>::load(path, &protocol.layout)?),
            _ => None,
        };
        let opts = protocol.options(None);
        let mut runs = Vec::new();
        let mut params = Vec::new();
        for &s in &self.seeds {
            let ss = student_seed(s);
            let out = match &checkpoint {
                Some(ck) => warm_start(
                    ck,
                    &targets,
                    powertrain,
                    &self.hyper,
                    &protocol.layout,
                    ss,
                    &opts,
                    protocol.allow_hyper_mismatch,
                ),
                None => cold_start(&targets, powertrain, &self.hyper, &protocol.layout, ss, &opts),
            }
            .map_err(|e| e.context(format!("transfer seed {s}")))?;
            let finals = evaluate(&out.params, &targets, powertrain, protocol.soc0)?;
            let sources = checkpoint.as_ref().map(|c| c.meta.cycles.clone()).unwrap_or_default();
            runs.push(RunRecord::new(
                self.mode.to_string(),
                s,
                self.mode,
                sources,
                &out,
                finals,
                protocol.reward_threshold,
            ));
            params.push(out.params);
        }
        let report = ExperimentReport {
            experiment: "transfer".into(),
            runs,
        };
        Ok((report, params))
    }
}

fn expert_hyper(hyper: &Hyperparams, iterations: usize) -> Hyperparams {
    Hyperparams {
        n_iterations: iterations,
        ..hyper.clone()
    }
}

/// Expert on `source`, then student on `targets`, both seeded from `seed`.
fn expert_then_student<T: Real>(
    source: &[&DrivingCycle],
    targets: &[&DrivingCycle],
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    seed: u64,
    protocol: &Protocol,
) -> Result<(Checkpoint<T>, TrainOutcome<T>)> {
    let eh = expert_hyper(hyper, protocol.expert_budget(source.len()));
    let (ck, _) = train_expert(
        source,
        powertrain,
        &eh,
        &protocol.layout,
        expert_seed(seed),
        &protocol.options(None),
    )?;
    let sh = expert_hyper(hyper, protocol.student_iterations);
    let out = warm_start(
        &ck,
        targets,
        powertrain,
        &sh,
        &protocol.layout,
        student_seed(seed),
        &protocol.options(None),
        protocol.allow_hyper_mismatch,
    )?;
    Ok((ck, out))
}

/// Source-count ablation: for each count an expert on that many source
/// cycles (targets included), warm-started on the targets.
pub fn run_ablation_source_count<T: Real>(
    all: &[DrivingCycle],
    counts: &[usize],
    target_ids: &[String],
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    seeds: &[u64],
    protocol: &Protocol,
) -> Result<ExperimentReport> {
    protocol.validate()?;
    if counts.is_empty() || seeds.is_empty() {
        return Err(Error::Config("source-count ablation needs counts and seeds".into()));
    }
    let partitions = counts
        .iter()
        .map(|&n| make_partition(all, n, target_ids, true))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    for (&n, part) in counts.iter().zip(&partitions) {
        let source = part.source_cycles(all)?;
        let targets = part.target_cycles(all)?;
        for &s in seeds {
            let (_, out) = expert_then_student(&source, &targets, powertrain, hyper, s, protocol)
                .map_err(|e| e.context(format!("source-count {n}, seed {s}")))?;
            let finals = evaluate(&out.params, &targets, powertrain, protocol.soc0)?;
            runs.push(RunRecord::new(
                format!("sources={n}"),
                s,
                Mode::Warm,
                part.source.clone(),
                &out,
                finals,
                protocol.reward_threshold,
            ));
        }
    }
    Ok(ExperimentReport {
        experiment: "source-count".into(),
        runs,
    })
}

/// Target-inclusion ablation: paired experts on `n_source` cycles with and
/// without the targets, each warm-started on the targets.
pub fn run_ablation_target_inclusion<T: Real>(
    all: &[DrivingCycle],
    n_source: usize,
    target_ids: &[String],
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    seeds: &[u64],
    protocol: &Protocol,
) -> Result<ExperimentReport> {
    protocol.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("target-inclusion ablation needs seeds".into()));
    }
    let arms = [
        ("include", make_partition(all, n_source, target_ids, true)?),
        ("exclude", make_partition(all, n_source, target_ids, false)?),
    ];
    let mut runs = Vec::new();
    for &s in seeds {
        for (label, part) in &arms {
            let source = part.source_cycles(all)?;
            let targets = part.target_cycles(all)?;
            let (_, out) = expert_then_student(&source, &targets, powertrain, hyper, s, protocol)
                .map_err(|e| e.context(format!("target-inclusion {label}, seed {s}")))?;
            let finals = evaluate(&out.params, &targets, powertrain, protocol.soc0)?;
            runs.push(RunRecord::new(
                label.to_string(),
                s,
                Mode::Warm,
                part.source.clone(),
                &out,
                finals,
                protocol.reward_threshold,
            ));
        }
    }
    Ok(ExperimentReport {
        experiment: "target-inclusion".into(),
        runs,
    })
}

/// Cold and warm runs on `targets` per seed with a shared student seed and
/// an episode budget of `protocol.episodes`.
pub fn run_tl_vs_no_tl<T: Real>(
    targets: &[&DrivingCycle],
    checkpoint: &Checkpoint<T>,
    powertrain: &PowertrainParams<T>,
    hyper: &Hyperparams,
    seeds: &[u64],
    protocol: &Protocol,
) -> Result<ExperimentReport> {
    protocol.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("tl comparison needs seeds".into()));
    }
    if targets.is_empty() {
        return Err(Error::Config("tl comparison needs target cycles".into()));
    }
    check_compatible(checkpoint, &protocol.layout, hyper, protocol.allow_hyper_mismatch)?;
    // the episode cap ends both runs
    let h = expert_hyper(hyper, usize::MAX);
    let opts = protocol.options(Some(protocol.episodes));
    let mut runs = Vec::new();
    for &s in seeds {
        let ss = student_seed(s);
        let cold = cold_start(targets, powertrain, &h, &protocol.layout, ss, &opts)
            .map_err(|e| e.context(format!("tl cold, seed {s}")))?;
        let warm = warm_start(
            checkpoint,
            targets,
            powertrain,
            &h,
            &protocol.layout,
            ss,
            &opts,
            protocol.allow_hyper_mismatch,
        )
        .map_err(|e| e.context(format!("tl warm, seed {s}")))?;
        for (mode, out) in [(Mode::Cold, cold), (Mode::Warm, warm)] {
            let finals = evaluate(&out.params, targets, powertrain, protocol.soc0)?;
            let sources = match mode {
                Mode::Cold => Vec::new(),
                Mode::Warm => checkpoint.meta.cycles.clone(),
            };
            runs.push(RunRecord::new(
                mode.to_string(),
                s,
                mode,
                sources,
                &out,
                finals,
                protocol.reward_threshold,
            ));
        }
    }
    Ok(ExperimentReport {
        experiment: "tl".into(),
        runs,
    })
}
