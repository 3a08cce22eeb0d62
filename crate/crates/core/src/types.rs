//! Trajectories, datasets and the per-joint action statistics derived from them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::math::sqrt;
use crate::{Error, Result};

/// Proprioceptive state of the robot at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SensoryState {
    /// Joint positions (radians), length J.
    pub qpos: Vec<f64>,
    /// Joint velocities (radians/s), length J.
    pub qvel: Vec<f64>,
    /// End-effector force proxies, one per gripper.
    pub eeft: Vec<f64>,
}

/// Commanded joint targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub target_pos: Vec<f64>,
    pub target_vel: Vec<f64>,
}

impl Action {
    pub fn new(target_pos: Vec<f64>, target_vel: Vec<f64>) -> Self {
        Action {
            target_pos,
            target_vel,
        }
    }

    pub fn joints(&self) -> usize {
        self.target_pos.len()
    }
}

/// One named slice of an observation feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Ordered description of the observation features, shared by every frame
/// of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObsLayout {
    pub entries: Vec<LayoutEntry>,
}

impl ObsLayout {
    /// Builds a contiguous layout from `(name, len)` pairs.
    pub fn from_lengths<'a>(parts: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let mut offset = 0;
        let entries = parts
            .into_iter()
            .map(|(name, len)| {
                let e = LayoutEntry {
                    name: name.to_string(),
                    offset,
                    len,
                };
                offset += len;
                e
            })
            .collect();
        ObsLayout { entries }
    }

    /// Sum of entry lengths.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Low-dimensional observation features laid out per the trajectory's [`ObsLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: u64,
    pub obs: Observation,
    pub state: SensoryState,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub fs_hz: f64,
    pub layout: ObsLayout,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Joint count J taken from the first frame.
    pub fn joints(&self) -> usize {
        self.frames.first().map_or(0, |f| f.state.qpos.len())
    }

    /// Gripper count G taken from the first frame.
    pub fn grippers(&self) -> usize {
        self.frames.first().map_or(0, |f| f.state.eeft.len())
    }
}

/// Provenance record: string key/value pairs in sorted order.
pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub meta: Meta,
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Checks the dataset-level invariants and every trajectory.
    pub fn validate(&self) -> Result<()> {
        let first = self.trajectories.first().ok_or(Error::EmptyDataset)?;
        for traj in &self.trajectories {
            let violations = validate_trajectory(traj);
            if let Some(v) = violations.first() {
                return Err(Error::InvalidTrajectory(format!("{}: {}", traj.id, v)));
            }
            if traj.joints() != first.joints() {
                return Err(Error::dim("J", first.joints(), traj.joints()));
            }
            if traj.grippers() != first.grippers() {
                return Err(Error::dim("G", first.grippers(), traj.grippers()));
            }
            if traj.layout != first.layout {
                return Err(Error::InvalidTrajectory(format!(
                    "{}: observation layout differs from {}",
                    traj.id, first.id
                )));
            }
            if traj.fs_hz != first.fs_hz {
                return Err(Error::InvalidTrajectory(format!(
                    "{}: fs_hz {} differs from {}",
                    traj.id, traj.fs_hz, first.fs_hz
                )));
            }
        }
        Ok(())
    }
}

/// A single broken invariant found by [`validate_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Frame index, when the violation is tied to one frame.
    pub frame: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(i) => write!(f, "{} at index {}", self.message, i),
            None => f.write_str(&self.message),
        }
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Collects every violated trajectory invariant. Never fails.
pub fn validate_trajectory(traj: &Trajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, field: &'static str, message: String| {
        out.push(Violation {
            frame,
            field,
            message,
        })
    };

    if !(traj.fs_hz.is_finite() && traj.fs_hz > 0.0) {
        push(None, "fs_hz", format!("fs_hz must be positive, got {}", traj.fs_hz));
    }
    let obs_len = traj.layout.total_len();
    for e in &traj.layout.entries {
        if e.offset + e.len > obs_len {
            push(None, "layout", format!("layout entry {} exceeds feature length", e.name));
        }
    }
    let Some(first) = traj.frames.first() else {
        push(None, "frames", "empty trajectory".to_string());
        return out;
    };
    let j = first.state.qpos.len();
    let g = first.state.eeft.len();
    if j == 0 {
        push(Some(0), "qpos", "qpos must be non-empty".to_string());
    }
    if g == 0 {
        push(Some(0), "eeft", "eeft must have at least one gripper".to_string());
    }

    let mut prev_t: Option<u64> = None;
    for (i, fr) in traj.frames.iter().enumerate() {
        let s = &fr.state;
        let a = &fr.action;
        if s.qpos.len() != j {
            push(Some(i), "qpos", format!("qpos length mismatch ({} vs {})", s.qpos.len(), j));
        }
        if s.qvel.len() != s.qpos.len() {
            push(
                Some(i),
                "qvel",
                format!("qvel length mismatch ({} vs qpos {})", s.qvel.len(), s.qpos.len()),
            );
        }
        if s.eeft.len() != g {
            push(Some(i), "eeft", format!("eeft length mismatch ({} vs {})", s.eeft.len(), g));
        }
        if a.target_pos.len() != j {
            push(
                Some(i),
                "action_pos",
                format!("action_pos length mismatch ({} vs {})", a.target_pos.len(), j),
            );
        }
        if a.target_vel.len() != j {
            push(
                Some(i),
                "action_vel",
                format!("action_vel length mismatch ({} vs {})", a.target_vel.len(), j),
            );
        }
        if fr.obs.features.len() != obs_len {
            push(
                Some(i),
                "obs",
                format!("obs length mismatch ({} vs layout {})", fr.obs.features.len(), obs_len),
            );
        }
        let finite = all_finite(&s.qpos)
            && all_finite(&s.qvel)
            && all_finite(&s.eeft)
            && all_finite(&a.target_pos)
            && all_finite(&a.target_vel)
            && all_finite(&fr.obs.features);
        if !finite {
            push(Some(i), "values", "non-finite value".to_string());
        }
        if let Some(p) = prev_t {
            if fr.t <= p {
                push(Some(i), "t", "non-increasing t".to_string());
            }
        }
        prev_t = Some(fr.t);
    }
    out
}

/// Per-joint mean and population standard deviation of action target positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ActionStats {
    pub fn joints(&self) -> usize {
        self.mu.len()
    }
}

/// Pools every frame of every trajectory in `ds`.
pub fn compute_action_stats(ds: &Dataset) -> Result<ActionStats> {
    let frames = || ds.trajectories.iter().flat_map(|t| t.frames.iter());
    let first = frames().next().ok_or(Error::EmptyDataset)?;
    let j = first.action.target_pos.len();
    let mut sum = alloc::vec![0.0; j];
    let mut n = 0usize;
    for fr in frames() {
        if fr.action.target_pos.len() != j {
            return Err(Error::dim("J", j, fr.action.target_pos.len()));
        }
        for (s, x) in sum.iter_mut().zip(&fr.action.target_pos) {
            *s += x;
        }
        n += 1;
    }
    let mu: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut sq = alloc::vec![0.0; j];
    for fr in frames() {
        for ((s, x), m) in sq.iter_mut().zip(&fr.action.target_pos).zip(&mu) {
            *s += (x - m) * (x - m);
        }
    }
    let sigma = sq.iter().map(|s| sqrt(s / n as f64)).collect();
    Ok(ActionStats { mu, sigma })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn well_formed_trajectory_has_no_violations() {
        let traj = trajectory("a", &[0.0, 1.0, 2.0]);
        assert!(validate_trajectory(&traj).is_empty());
    }

    #[test]
    fn qvel_length_mismatch_is_reported_once() {
        let mut traj = trajectory("a", &[0.0, 1.0, 2.0]);
        for f in &mut traj.frames {
            f.state.qpos = vec![0.0; 14];
            f.state.qvel = vec![0.0; 14];
            f.action = Action::new(vec![0.0; 14], vec![0.0; 14]);
        }
        traj.frames[1].state.qvel = vec![0.0; 13];
        let v = validate_trajectory(&traj);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("qvel length mismatch"));
        assert_eq!(v[0].frame, Some(1));
    }

    #[test]
    fn non_increasing_t_names_the_index() {
        let mut traj = trajectory("a", &[0.0, 1.0, 2.0]);
        traj.frames[1].t = 2;
        traj.frames[2].t = 1;
        let v = validate_trajectory(&traj);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "non-increasing t at index 2");
    }

    #[test]
    fn empty_and_non_finite_are_violations() {
        let mut traj = trajectory("a", &[0.0]);
        traj.frames[0].state.qpos[0] = f64::NAN;
        assert_eq!(validate_trajectory(&traj).len(), 1);
        traj.frames.clear();
        assert_eq!(validate_trajectory(&traj).len(), 1);
    }

    #[test]
    fn action_stats_hand_case() {
        let ds = Dataset {
            trajectories: vec![trajectory("a", &[1.0, 3.0])],
            meta: Meta::new(),
        };
        let s = compute_action_stats(&ds).unwrap();
        assert_eq!(s.mu, vec![2.0]);
        assert_eq!(s.sigma, vec![1.0]);
    }

    #[test]
    fn constant_actions_have_zero_sigma() {
        let ds = Dataset {
            trajectories: vec![trajectory("a", &[0.7; 5])],
            meta: Meta::new(),
        };
        let s = compute_action_stats(&ds).unwrap();
        assert_eq!(s.sigma, vec![0.0]);
    }

    #[test]
    fn split_and_merged_trajectories_give_identical_stats() {
        let xs = [0.1, -2.0, 3.5, 0.25, 7.0];
        let merged = Dataset {
            trajectories: vec![trajectory("m", &xs)],
            meta: Meta::new(),
        };
        let split = Dataset {
            trajectories: vec![trajectory("a", &xs[..2]), trajectory("b", &xs[2..])],
            meta: Meta::new(),
        };
        assert_eq!(
            compute_action_stats(&merged).unwrap(),
            compute_action_stats(&split).unwrap()
        );
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert_eq!(
            compute_action_stats(&Dataset::default()),
            Err(Error::EmptyDataset)
        );
    }
}
