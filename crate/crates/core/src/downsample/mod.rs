//! Importance-driven downsampling of demonstration trajectories.
//!
//! Joint-speed and end-effector-force magnitudes are normalized per channel and
//! mixed into a scalar importance series, which is low-pass filtered and turned
//! into a per-timestep stride: `stride(t) = floor(M * filtered(t)) + 1` with
//! `M = f_d / f_m`. Frames are then picked by walking a cursor through the
//! stride schedule.

mod filter;

pub use filter::{butterworth_lowpass, Biquad, Butterworth, FilterConfig, Filtered};

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{floor, mean, pop_std};
use crate::types::{Dataset, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    MinMax,
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Each trajectory gets its own importance series.
    #[default]
    PerTrajectory,
    /// One series averaged over all trajectories, truncated to the shortest.
    AlignedMean,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpamConfig {
    /// One weight per joint-velocity channel followed by one per gripper force
    /// channel. `None` means uniform `1 / (J + G)`.
    pub weights: Option<Vec<f64>>,
    pub normalization: Normalization,
    pub aggregation: Aggregation,
}

impl SpamConfig {
    /// Weight vector for `channels` channels, validated.
    pub fn resolved_weights(&self, channels: usize) -> Result<Vec<f64>> {
        match &self.weights {
            None => Ok(vec![1.0 / channels as f64; channels]),
            Some(w) => {
                if w.len() != channels {
                    return Err(Error::dim("SPAM weights", channels, w.len()));
                }
                if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Config("SPAM weights must be non-negative".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    /// Source sampling frequency (Hz).
    pub f_d: f64,
    /// Target minimum sampling frequency (Hz).
    pub f_m: f64,
}

impl SampleConfig {
    pub fn new(f_d: f64, f_m: f64) -> Result<Self> {
        if !(f_d.is_finite() && f_d > 0.0 && f_m.is_finite() && f_m > 0.0 && f_m <= f_d) {
            return Err(Error::Config(format!(
                "need 0 < f_m <= f_d, got f_m = {f_m}, f_d = {f_d}"
            )));
        }
        Ok(SampleConfig { f_d, f_m })
    }

    /// Temporal scaling factor `f_d / f_m`.
    pub fn scale(&self) -> f64 {
        self.f_d / self.f_m
    }
}

/// Default minimum sampling frequency (Hz).
pub const DEFAULT_F_M: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DownsampleConfig {
    pub spam: SpamConfig,
    pub filter: FilterConfig,
    /// Target minimum sampling frequency; the source rate comes from the data.
    pub f_m: f64,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        DownsampleConfig {
            spam: SpamConfig::default(),
            filter: FilterConfig::default(),
            f_m: DEFAULT_F_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSeries {
    pub raw: Vec<f64>,
    /// Low-passed and clamped to `[0, 1]`.
    pub filtered: Vec<f64>,
    /// The series was too short to filter and `filtered` is the clamped raw series.
    pub unfiltered: bool,
}

/// Normalizes each channel over its own samples. Degenerate channels (zero
/// range or zero deviation) become all zeros.
pub fn normalize_channels(channels: &[Vec<f64>], mode: Normalization) -> Vec<Vec<f64>> {
    channels
        .iter()
        .map(|ch| match mode {
            Normalization::MinMax => {
                let lo = ch.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = hi - lo;
                if range > 0.0 {
                    ch.iter().map(|x| (x - lo) / range).collect()
                } else {
                    vec![0.0; ch.len()]
                }
            }
            Normalization::ZScore => {
                let mu = mean(ch);
                let sd = pop_std(ch);
                if sd > 0.0 {
                    ch.iter().map(|x| (x - mu) / sd).collect()
                } else {
                    vec![0.0; ch.len()]
                }
            }
        })
        .collect()
}

/// Raw importance over a set of trajectories averaged timestep by timestep
/// (truncated to the shortest). A single trajectory is the per-trajectory case.
pub fn compute_spam(trajs: &[&Trajectory], cfg: &SpamConfig) -> Result<Vec<f64>> {
    let first = trajs.first().ok_or(Error::EmptyDataset)?;
    let len = trajs.iter().map(|t| t.len()).min().unwrap_or(0);
    if len == 0 {
        return Err(Error::EmptyTrajectory);
    }
    let j = first.joints();
    let g = first.grippers();
    for t in trajs {
        if t.joints() != j {
            return Err(Error::dim("J", j, t.joints()));
        }
        if t.grippers() != g {
            return Err(Error::dim("G", g, t.grippers()));
        }
    }
    let weights = cfg.resolved_weights(j + g)?;
    let n = trajs.len() as f64;
    let mut channels = vec![vec![0.0; len]; j + g];
    for traj in trajs {
        for (t, fr) in traj.frames[..len].iter().enumerate() {
            if fr.state.qvel.len() != j || fr.state.eeft.len() != g {
                return Err(Error::InvalidTrajectory(format!(
                    "{}: inconsistent state dimensions at frame {t}",
                    traj.id
                )));
            }
            let mags = fr.state.qvel.iter().chain(&fr.state.eeft).map(|x| x.abs());
            for (ch, m) in channels.iter_mut().zip(mags) {
                ch[t] += m / n;
            }
        }
    }
    let normalized = normalize_channels(&channels, cfg.normalization);
    Ok((0..len)
        .map(|t| {
            normalized
                .iter()
                .zip(&weights)
                .map(|(ch, w)| w * ch[t])
                .sum()
        })
        .collect())
}

/// `floor(M * f) + 1` per timestep, with `f` clamped to `[0, 1]`.
pub fn stride_schedule(filtered: &[f64], scale: f64) -> Vec<usize> {
    filtered
        .iter()
        .map(|f| floor(scale * f.clamp(0.0, 1.0)) as usize + 1)
        .collect()
}

/// Cursor walk through the stride schedule: start at 0, advance by the stride
/// found at the current index, stop past the end. The final index `len - 1`
/// is always appended.
pub fn select_indices(strides: &[usize], len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut k = 0;
    while k < len {
        out.push(k);
        k += strides.get(k).copied().unwrap_or(1).max(1);
    }
    if out.last() != Some(&(len - 1)) {
        out.push(len - 1);
    }
    out
}

/// Downsampled trajectory together with the intermediate series that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsampled {
    pub trajectory: Trajectory,
    pub importance: ImportanceSeries,
    pub strides: Vec<usize>,
    pub indices: Vec<usize>,
}

impl Downsampled {
    pub fn retained_fraction(&self, original_len: usize) -> f64 {
        self.indices.len() as f64 / original_len as f64
    }
}

fn importance(trajs: &[&Trajectory], cfg: &DownsampleConfig, fs: f64) -> Result<ImportanceSeries> {
    let raw = compute_spam(trajs, &cfg.spam)?;
    let filtered = butterworth_lowpass(&raw, &cfg.filter, fs)?;
    Ok(ImportanceSeries {
        filtered: filtered.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        raw,
        unfiltered: filtered.unfiltered,
    })
}

fn pick(traj: &Trajectory, imp: ImportanceSeries, sample: &SampleConfig) -> Downsampled {
    let len = imp.filtered.len();
    let strides = stride_schedule(&imp.filtered, sample.scale());
    let indices = select_indices(&strides, len);
    let trajectory = Trajectory {
        id: format!("{}#ds", traj.id),
        fs_hz: traj.fs_hz,
        layout: traj.layout.clone(),
        frames: indices.iter().map(|&i| traj.frames[i].clone()).collect(),
    };
    Downsampled {
        trajectory,
        importance: imp,
        strides,
        indices,
    }
}

fn sample_config(traj: &Trajectory, cfg: &DownsampleConfig) -> Result<SampleConfig> {
    cfg.filter.validate(traj.fs_hz)?;
    SampleConfig::new(traj.fs_hz, cfg.f_m)
}

/// Downsamples one trajectory with its own importance series.
pub fn downsample_trajectory(traj: &Trajectory, cfg: &DownsampleConfig) -> Result<Downsampled> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let sample = sample_config(traj, cfg)?;
    let imp = importance(&[traj], cfg, traj.fs_hz)?;
    Ok(pick(traj, imp, &sample))
}

/// Downsamples every trajectory of a dataset. The result's meta carries the
/// source meta plus the effective configuration under `downsample.*` keys.
pub fn downsample_dataset(ds: &Dataset, cfg: &DownsampleConfig) -> Result<(Dataset, Vec<Downsampled>)> {
    let first = ds.trajectories.first().ok_or(Error::EmptyDataset)?;
    let parts = match cfg.spam.aggregation {
        Aggregation::PerTrajectory => ds
            .trajectories
            .iter()
            .map(|t| downsample_trajectory(t, cfg))
            .collect::<Result<Vec<_>>>()?,
        Aggregation::AlignedMean => {
            let sample = sample_config(first, cfg)?;
            let refs: Vec<&Trajectory> = ds.trajectories.iter().collect();
            let shared = importance(&refs, cfg, first.fs_hz)?;
            let len = shared.raw.len();
            ds.trajectories
                .iter()
                .map(|t| {
                    let truncated = Trajectory {
                        frames: t.frames[..len].to_vec(),
                        ..t.clone()
                    };
                    pick(&truncated, shared.clone(), &sample)
                })
                .collect()
        }
    };
    let mut meta = ds.meta.clone();
    for (k, v) in config_meta(cfg, first.fs_hz) {
        meta.insert(k.to_string(), v);
    }
    let out = Dataset {
        trajectories: parts.iter().map(|p| p.trajectory.clone()).collect(),
        meta,
    };
    Ok((out, parts))
}

/// Flat key/value view of a downsampling configuration.
pub fn config_meta(cfg: &DownsampleConfig, f_d: f64) -> Vec<(&'static str, alloc::string::String)> {
    let weights = match &cfg.spam.weights {
        None => "uniform".to_string(),
        Some(w) => w
            .iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(","),
    };
    vec![
        ("downsample.weights", weights),
        (
            "downsample.normalization",
            match cfg.spam.normalization {
                Normalization::MinMax => "min_max",
                Normalization::ZScore => "z_score",
            }
            .to_string(),
        ),
        (
            "downsample.aggregation",
            match cfg.spam.aggregation {
                Aggregation::PerTrajectory => "per_trajectory",
                Aggregation::AlignedMean => "aligned_mean",
            }
            .to_string(),
        ),
        ("downsample.filter_order", format!("{}", cfg.filter.order)),
        ("downsample.cutoff_hz", format!("{}", cfg.filter.cutoff_hz)),
        ("downsample.zero_phase", format!("{}", cfg.filter.zero_phase)),
        ("downsample.f_d", format!("{f_d}")),
        ("downsample.f_m", format!("{}", cfg.f_m)),
    ]
}
