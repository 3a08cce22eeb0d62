//! Versioned text checkpoint of a trained regressor, the action statistics of
//! its training set (needed to normalize COR at rollout) and the effective
//! configuration that produced it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sril_core::policy::{RegressorModel, Standardizer};
use sril_core::types::ActionStats;

use crate::FormatError;

pub const FORMAT: &str = "sril-ckpt";
pub const VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RegressorModel,
    pub stats: ActionStats,
    /// Task the training demos came from.
    pub task: String,
    /// Effective configuration (flags and defaults) of the training run.
    pub config: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    format: String,
    version: u64,
    task: String,
    config: BTreeMap<String, String>,
    stats: StatsRecord,
    model: ModelRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsRecord {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    obs_dim: usize,
    joints: usize,
    grippers: usize,
    hidden: usize,
    k: usize,
    absolute: Vec<bool>,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

pub fn encode_checkpoint(c: &Checkpoint) -> String {
    let m = &c.model;
    let record = Record {
        format: FORMAT.into(),
        version: VERSION,
        task: c.task.clone(),
        config: c.config.clone(),
        stats: StatsRecord {
            mu: c.stats.mu.clone(),
            sigma: c.stats.sigma.clone(),
        },
        model: ModelRecord {
            obs_dim: m.obs_dim,
            joints: m.joints,
            grippers: m.grippers,
            hidden: m.hidden,
            k: m.k,
            absolute: m.absolute.clone(),
            x_mean: m.x_norm.mean.clone(),
            x_std: m.x_norm.std.clone(),
            y_mean: m.y_norm.mean.clone(),
            y_std: m.y_norm.std.clone(),
            w1: m.w1.clone(),
            b1: m.b1.clone(),
            w2: m.w2.clone(),
            b2: m.b2.clone(),
        },
    };
    let mut s = serde_json::to_string(&record).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn decode_checkpoint(text: &str) -> Result<Checkpoint, FormatError> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| FormatError::Malformed {
        line: e.line(),
        path: "<checkpoint>".into(),
        message: e.to_string(),
    })?;
    match raw.get("format").and_then(|v| v.as_str()) {
        Some(FORMAT) => {}
        other => {
            return Err(FormatError::Format {
                expected: FORMAT,
                found: other.unwrap_or("<missing>").to_string(),
            })
        }
    }
    match raw.get("version") {
        Some(v) if v.as_u64() == Some(VERSION) => {}
        other => {
            return Err(FormatError::Version {
                expected: VERSION,
                found: other.map_or("<missing>".into(), |v| v.to_string()),
            })
        }
    }
    let r: Record = serde_path_to_error::deserialize(raw).map_err(|e| FormatError::Malformed {
        line: 1,
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })?;
    let m = r.model;
    let model = RegressorModel {
        obs_dim: m.obs_dim,
        joints: m.joints,
        grippers: m.grippers,
        hidden: m.hidden,
        k: m.k,
        absolute: m.absolute,
        w1: m.w1,
        b1: m.b1,
        w2: m.w2,
        b2: m.b2,
        x_norm: Standardizer {
            mean: m.x_mean,
            std: m.x_std,
        },
        y_norm: Standardizer {
            mean: m.y_mean,
            std: m.y_std,
        },
    };
    let invalid = |message: String| FormatError::Invalid { line: 1, message };
    model.validate().map_err(|e| invalid(e.to_string()))?;
    if model.k == 0 {
        return Err(invalid("K must be positive".into()));
    }
    if r.stats.mu.len() != model.joints || r.stats.sigma.len() != model.joints {
        return Err(invalid(format!(
            "action stats have {} / {} entries, model has J = {}",
            r.stats.mu.len(),
            r.stats.sigma.len(),
            model.joints
        )));
    }
    Ok(Checkpoint {
        model,
        stats: ActionStats {
            mu: r.stats.mu,
            sigma: r.stats.sigma,
        },
        task: r.task,
        config: r.config,
    })
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let text = crate::read_text(path)?;
    decode_checkpoint(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> anyhow::Result<()> {
    crate::write_text(path, &encode_checkpoint(c))
}
