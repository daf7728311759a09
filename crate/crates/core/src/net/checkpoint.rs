//! Checkpoint files: the unit of policy transfer.
//!
//! JSON with the layout descriptor, the flat parameter vector and training
//! provenance. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetLayout, PolicyParams};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_FORMAT: &str = "hevtl-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    /// Ids of the cycles the parameters were trained on, in schedule order.
    pub cycles: Vec<String>,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub episodes: usize,
    /// Digest of the learning hyperparameters; see `ppo::Hyperparams::digest`.
    pub hyper_digest: Option<String>,
    pub hyper: Option<serde_json::Value>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub format_version: u32,
    pub scalar: String,
    pub params: PolicyParams<T>,
    pub meta: CheckpointMeta,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(params: PolicyParams<T>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: FORMAT_VERSION,
            scalar: T::NAME.to_string(),
            params,
            meta,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks format, version, scalar type and internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("not valid JSON: {e}")))?;
        let format = raw.get("format").and_then(|v| v.as_str());
        if format != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Format(format!(
                "expected format `{CHECKPOINT_FORMAT}`, found {format:?}"
            )));
        }
        let version = raw.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(Error::Format(format!("unsupported format version {version:?}")));
        }
        let scalar = raw.get("scalar").and_then(|v| v.as_str());
        if scalar != Some(T::NAME) {
            return Err(Error::Incompatible(format!(
                "checkpoint scalar {scalar:?} does not match {}",
                T::NAME
            )));
        }
        let ck: Checkpoint<T> = serde_json::from_value(raw).map_err(|e| Error::Format(e.to_string()))?;
        ck.params.validate().map_err(|e| match e {
            Error::NonFinite(m) => Error::Format(format!("non-finite {m}")),
            Error::Incompatible(m) => Error::Format(m),
            other => other,
        })?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Loads a checkpoint and requires its layout to equal `expected`.
    pub fn load(path: &Path, expected: &NetLayout) -> Result<Self> {
        let ck = Self::from_json(&std::fs::read_to_string(path)?)?;
        ck.require_layout(expected)?;
        Ok(ck)
    }

    pub fn require_layout(&self, expected: &NetLayout) -> Result<()> {
        if &self.params.layout != expected {
            return Err(Error::Incompatible(format!(
                "checkpoint layout {:?} differs from the configured {:?}",
                self.params.layout, expected
            )));
        }
        Ok(())
    }
}

pub fn save_params<T: Real>(path: &Path, params: &PolicyParams<T>, meta: CheckpointMeta) -> Result<()> {
    Checkpoint::new(params.clone(), meta).save(path)
}

pub fn load_params<T: Real>(path: &Path, expected: &NetLayout) -> Result<PolicyParams<T>> {
    Checkpoint::<T>::load(path, expected).map(|c| c.params)
}
