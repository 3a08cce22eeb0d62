//! The in-memory operations behind each subcommand. The CLI adds argument
//! parsing and file I/O on top; tests and the acceptance target call these
//! directly.

use std::collections::BTreeMap;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use sril_core::downsample::{downsample_dataset, DownsampleConfig};
use sril_core::policy::{train_regressor, TrainConfig, TrainOutcome};
use sril_core::sim::{generate_demo, GRIPPER_JOINTS};
use sril_core::types::{compute_action_stats, Dataset};

use crate::checkpoint::Checkpoint;
use crate::taskcfg::{parse_task_config, task_config_pairs, TaskConfig};

/// Flat effective configuration embedded in every output file.
pub type ConfigMap = BTreeMap<String, String>;

/// Prefix of the task configuration keys in dataset meta and checkpoint config.
pub const TASK_PREFIX: &str = "task.";

/// Stores a task configuration under `task.*` keys.
pub fn insert_task_config(map: &mut ConfigMap, cfg: &TaskConfig) {
    for (k, v) in task_config_pairs(cfg) {
        map.insert(format!("{TASK_PREFIX}{k}"), v);
    }
}

/// Recovers the task configuration stored by [`insert_task_config`], if any.
pub fn task_config_from_map(map: &ConfigMap) -> anyhow::Result<Option<TaskConfig>> {
    let body: String = map
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(TASK_PREFIX).map(|k| format!("{k} = {v}\n")))
        .collect();
    if body.is_empty() {
        return Ok(None);
    }
    let cfg = parse_task_config(&body).context("stored task configuration is invalid")?;
    Ok(Some(cfg))
}

/// Expert demonstrations for seeds `seed .. seed + n`.
pub fn gen_demos(cfg: &TaskConfig, n: usize, seed: u64) -> anyhow::Result<Dataset> {
    if n == 0 {
        bail!("n must be positive");
    }
    let last = seed
        .checked_add(n as u64 - 1)
        .context("seed range overflows u64")?;
    let seeds: Vec<u64> = (seed..=last).collect();
    let trajectories = seeds
        .par_iter()
        .map(|&s| generate_demo(&cfg.task, &cfg.expert, s).map(|d| d.trajectory))
        .collect::<sril_core::Result<Vec<_>>>()?;
    let mut meta = ConfigMap::new();
    meta.insert("generator".into(), "gen-demos".into());
    meta.insert("n".into(), n.to_string());
    meta.insert("seed".into(), seed.to_string());
    meta.insert(
        "gripper_joints".into(),
        GRIPPER_JOINTS.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(","),
    );
    insert_task_config(&mut meta, cfg);
    Ok(Dataset { trajectories, meta })
}

/// Per-trajectory line of the downsampling report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryDownsampling {
    pub id: String,
    pub frames: usize,
    pub retained: usize,
    pub retained_fraction: f64,
    /// Mean gap between consecutive retained frames (1 when fewer than two
    /// frames are retained).
    pub mean_stride: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DownsampleReport {
    pub trajectories: Vec<TrajectoryDownsampling>,
    /// `(stride, count)` over every pair of consecutive retained frames; the
    /// counts sum to `retained_frames - trajectories`.
    pub stride_histogram: Vec<(usize, usize)>,
    pub total_frames: usize,
    pub retained_frames: usize,
    pub retained_fraction: f64,
}

pub fn downsample(ds: &Dataset, cfg: &DownsampleConfig) -> anyhow::Result<(Dataset, DownsampleReport)> {
    let (out, parts) = downsample_dataset(ds, cfg)?;
    let mut histogram = BTreeMap::<usize, usize>::new();
    let mut rows = Vec::with_capacity(parts.len());
    for (src, part) in ds.trajectories.iter().zip(&parts) {
        let gaps: Vec<usize> = part.indices.windows(2).map(|w| w[1] - w[0]).collect();
        for &g in &gaps {
            *histogram.entry(g).or_default() += 1;
        }
        rows.push(TrajectoryDownsampling {
            id: src.id.clone(),
            frames: src.len(),
            retained: part.indices.len(),
            retained_fraction: part.retained_fraction(src.len()),
            mean_stride: if gaps.is_empty() {
                1.0
            } else {
                gaps.iter().sum::<usize>() as f64 / gaps.len() as f64
            },
        });
    }
    let total_frames = ds.total_frames();
    let retained_frames = out.total_frames();
    let report = DownsampleReport {
        trajectories: rows,
        stride_histogram: histogram.into_iter().collect(),
        total_frames,
        retained_frames,
        retained_fraction: retained_frames as f64 / total_frames as f64,
    };
    Ok((out, report))
}

/// Gripper joints listed in the dataset meta (`gripper_joints = "2,5"`).
pub fn meta_gripper_joints(meta: &ConfigMap) -> anyhow::Result<Vec<usize>> {
    match meta.get("gripper_joints") {
        None => Ok(Vec::new()),
        Some(s) if s.trim().is_empty() => Ok(Vec::new()),
        Some(s) => s
            .split(',')
            .map(|j| j.trim().parse::<usize>().with_context(|| format!("bad gripper_joints entry `{j}`")))
            .collect(),
    }
}

/// Flat view of a training configuration.
pub fn train_config_pairs(cfg: &TrainConfig) -> Vec<(String, String)> {
    vec![
        ("train.hidden".into(), cfg.hidden.to_string()),
        ("train.epochs".into(), cfg.epochs.to_string()),
        ("train.learning_rate".into(), format!("{}", cfg.learning_rate)),
        ("train.batch_size".into(), cfg.batch_size.to_string()),
        ("train.seed".into(), cfg.seed.to_string()),
        ("train.k".into(), cfg.k.to_string()),
        (
            "train.absolute_joints".into(),
            cfg.absolute_joints.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("train.qvel_noise_std".into(), format!("{}", cfg.qvel_noise_std)),
    ]
}

/// Trains a regressor and packages it with the dataset's action statistics.
/// The checkpoint config is the dataset meta plus the `train.*` keys.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> anyhow::Result<(Checkpoint, TrainOutcome)> {
    let outcome = train_regressor(ds, cfg)?;
    let stats = compute_action_stats(ds)?;
    let mut config = ds.meta.clone();
    config.extend(train_config_pairs(cfg));
    let task = ds
        .meta
        .get("task.task")
        .cloned()
        .unwrap_or_else(|| "unknown".into());
    let ckpt = Checkpoint {
        model: outcome.model.clone(),
        stats,
        task,
        config,
    };
    Ok((ckpt, outcome))
}
