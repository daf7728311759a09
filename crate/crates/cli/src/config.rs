//! TOML run configuration. Every field has a default, so an empty file is a
//! valid configuration that trains on a synthetic suite.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/a"
//!
//! [powertrain]          # vehicle and battery constants
//! mass_kg = 1325.0
//!
//! [hyper]               # PPO hyperparameters
//! gamma = 0.9
//!
//! [protocol]            # experiment budgets and network layout
//! expert_iterations = 300
//! [protocol.layout]
//! hidden = [64, 64]
//!
//! [cycles]
//! files = ["cycles/a.csv"]
//! dt = 1.0
//! [cycles.synthetic]
//! count = 8
//! duration = 300.0
//! seed = 1
//!
//! [partition]
//! n_source = 5
//! targets = ["urban-1"]
//! include_targets = true
//!
//! [experiment]
//! seeds = [1, 2, 3, 4, 5]
//! mode = "warm"
//! counts = [2, 4, 8]
//!
//! [oracle]
//! soc_nodes = 201
//! torque_nodes = 24
//! ladder = [101, 201, 401, 801]
//! ```

use std::path::{Path, PathBuf};

use hevtl::cycles::{load_cycle, make_partition, synthetic_suite, CyclePartition, DEFAULT_DT};
use hevtl::oracle::{DEFAULT_SOC_NODES, DEFAULT_TORQUE_NODES};
use hevtl::transfer::{Mode, Protocol};
use hevtl::{DrivingCycle, Error, Hyperparams, Powertrain};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const OUTPUT_DIR_ENV: &str = "HEVTL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub powertrain: Powertrain,
    pub hyper: Hyperparams,
    pub protocol: Protocol,
    pub cycles: CycleConfig,
    pub partition: PartitionConfig,
    pub experiment: ExperimentConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("hevtl-out"),
            powertrain: Powertrain::default(),
            hyper: Hyperparams::default(),
            protocol: Protocol::default(),
            cycles: CycleConfig::default(),
            partition: PartitionConfig::default(),
            experiment: ExperimentConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleConfig {
    pub files: Vec<PathBuf>,
    /// Sample period for files without a time column.
    pub dt: f64,
    pub synthetic: SyntheticConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            files: Vec::new(),
            dt: DEFAULT_DT,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Synthetic cycles appended after the files; 0 disables the suite.
    pub count: usize,
    pub duration: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            count: 8,
            duration: 300.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub n_source: usize,
    /// Target cycle ids; empty selects the first loaded cycle.
    pub targets: Vec<String>,
    pub include_targets: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            n_source: 5,
            targets: Vec::new(),
            include_targets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub expert_checkpoint: Option<PathBuf>,
    /// Source counts of the source-count ablation.
    pub counts: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![1, 2, 3, 4, 5],
            mode: Mode::Warm,
            expert_checkpoint: None,
            counts: vec![2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub soc_nodes: usize,
    pub torque_nodes: usize,
    pub ladder: Vec<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            soc_nodes: DEFAULT_SOC_NODES,
            torque_nodes: DEFAULT_TORQUE_NODES,
            ladder: vec![101, 201, 401, 801],
        }
    }
}

fn config_err(field: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {why}"))
}

/// Prefixes configuration errors from a nested validator with `section`.
fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::Config(m) if m.starts_with(&format!("{section}.")) => Error::Config(m),
        Error::Config(m) => Error::Config(format!("{section}.{m}")),
        other => other.context(section),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        // relative cycle paths resolve against the config file
        if let Some(dir) = path.parent() {
            for f in &mut cfg.cycles.files {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.powertrain.validate()?;
        self.hyper.validate()?;
        self.protocol.validate()?;
        if !(self.cycles.dt > 0.0) {
            return Err(config_err("cycles.dt", "must be > 0"));
        }
        if self.cycles.files.is_empty() && self.cycles.synthetic.count == 0 {
            return Err(config_err("cycles", "no cycle files and no synthetic cycles"));
        }
        if self.cycles.synthetic.count > 0 && !(self.cycles.synthetic.duration >= 60.0) {
            return Err(config_err("cycles.synthetic.duration", "must be >= 60 s"));
        }
        for (i, f) in self.cycles.files.iter().enumerate() {
            if !f.is_file() {
                return Err(config_err(
                    &format!("cycles.files[{i}]"),
                    format!("{} does not exist", f.display()),
                ));
            }
        }
        if self.partition.n_source == 0 {
            return Err(config_err("partition.n_source", "must be >= 1"));
        }
        if self.experiment.seeds.is_empty() {
            return Err(config_err("experiment.seeds", "at least one seed is required"));
        }
        if self.experiment.counts.is_empty() || self.experiment.counts.contains(&0) {
            return Err(config_err("experiment.counts", "must be non-empty and positive"));
        }
        if self.oracle.soc_nodes < 2 || self.oracle.torque_nodes < 2 {
            return Err(config_err("oracle", "soc_nodes and torque_nodes must be >= 2"));
        }
        if self.oracle.ladder.is_empty() || self.oracle.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("oracle.ladder", "must be non-empty and strictly increasing"));
        }
        Ok(())
    }

    /// Loads the cycle files in order, then the synthetic suite.
    pub fn load_cycles(&self) -> Result<Vec<DrivingCycle>, Error> {
        let mut out = Vec::new();
        for f in &self.cycles.files {
            out.push(load_cycle(f, self.cycles.dt)?);
        }
        let s = &self.cycles.synthetic;
        if s.count > 0 {
            out.extend(synthetic_suite(s.seed, s.count, s.duration)?);
        }
        for (i, c) in out.iter().enumerate() {
            if out[..i].iter().any(|o| o.id == c.id) {
                return Err(config_err("cycles", format!("duplicate cycle id `{}`", c.id)));
            }
        }
        Ok(out)
    }

    pub fn target_ids(&self, cycles: &[DrivingCycle]) -> Result<Vec<String>, Error> {
        if !self.partition.targets.is_empty() {
            return Ok(self.partition.targets.clone());
        }
        cycles
            .first()
            .map(|c| vec![c.id.clone()])
            .ok_or_else(|| config_err("partition.targets", "no cycles to choose a target from"))
    }

    pub fn partition(&self, cycles: &[DrivingCycle]) -> Result<CyclePartition, Error> {
        let targets = self.target_ids(cycles)?;
        make_partition(
            cycles,
            self.partition.n_source,
            &targets,
            self.partition.include_targets,
        )
        .map_err(|e| in_section("partition", e))
    }

    /// SHA-256 of the canonical JSON form; the output directory is excluded.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        let text = serde_json::to_string(&v).expect("json value serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Command-line flag, then the environment variable, then the config.
pub fn resolve_output_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone(),
    }
}
