//! Dual-arm kinematic world: task definitions, the step function and scoring.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::arm::ArmModel;
use crate::math::{dist2, tanh};
use crate::types::{Action, ObsLayout, SensoryState};
use crate::{Error, Result};

pub const RIGHT: usize = 0;
pub const LEFT: usize = 1;
/// Two revolute joints and one gripper per arm.
pub const DOF_PER_ARM: usize = 3;
pub const JOINTS: usize = 2 * DOF_PER_ARM;
pub const GRIPPERS: usize = 2;

/// Resting height of an object's center on the table (m).
/// Indices of the gripper joints within the action/qpos vector.
pub const GRIPPER_JOINTS: [usize; GRIPPERS] = [DOF_PER_ARM - 1, 2 * DOF_PER_ARM - 1];
pub const TABLE_Y: f64 = 0.02;
/// Length scale of the saturating `ee_near` observation features.
pub const NEAR_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Right arm grasps and lifts the cube, hands it to the left arm, which
    /// carries it to the goal.
    CubeTransfer,
    /// Right arm picks the cube, left arm picks the box; the cube is dropped
    /// into the box and the box is put back where it started.
    BimanualRestore,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::CubeTransfer => "cube_transfer",
            TaskKind::BimanualRestore => "bimanual_restore",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cube_transfer" => Ok(TaskKind::CubeTransfer),
            "bimanual_restore" => Ok(TaskKind::BimanualRestore),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }

    pub fn subgoals(self) -> &'static [&'static str] {
        match self {
            TaskKind::CubeTransfer => &["grasp", "lift", "transfer", "place"],
            TaskKind::BimanualRestore => &["grasp_cube", "grasp_box", "lift", "place", "restore"],
        }
    }

    pub fn objects(self) -> usize {
        match self {
            TaskKind::CubeTransfer => 1,
            TaskKind::BimanualRestore => 2,
        }
    }
}

/// Everything that defines a task instance family: arm geometry, nominal
/// object placement, randomization and success tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub arms: [ArmModel; 2],
    /// Start joint configuration per arm.
    pub home: [[f64; 2]; 2],
    pub fs_hz: f64,
    /// Nominal object start positions.
    pub objects: Vec<[f64; 2]>,
    /// Side of the start randomization box along the table (m).
    pub randomization: f64,
    /// Cube transfer: fixed drop-off point. Restore: ignored, the box start is the goal.
    pub goal: [f64; 2],
    /// Success tolerance (m).
    pub tolerance: f64,
    /// Maximum end-effector to object distance at which a closing gripper grasps (m).
    pub grasp_radius: f64,
    /// Height an object must exceed for the lift subgoal (m).
    pub lift_height: f64,
    /// Gripper force proxy per unit of gripper closure while holding (N).
    pub spring: f64,
    /// Standard deviation of the observed object positions (m).
    pub obs_noise: f64,
    /// Cube transfer handoff pad on the table; restore meeting point of the box.
    pub meet: [f64; 2],
    /// Cube transfer: where the left arm waits until the cube is lifted.
    pub standby: [f64; 2],
    /// Offset of the cube slot from the box center.
    pub slot: [f64; 2],
    pub step_limit: usize,
}

impl TaskSpec {
    pub fn cube_transfer() -> Self {
        let right = ArmModel::new([0.30, 0.30], PI, [0.30, 0.25]);
        let left = ArmModel::new([-0.30, 0.30], 0.0, [0.30, 0.25]);
        TaskSpec {
            kind: TaskKind::CubeTransfer,
            home: [home_pose(&right, [0.08, 0.72]), home_pose(&left, [-0.08, 0.72])],
            arms: [right, left],
            fs_hz: 50.0,
            objects: vec![[0.15, TABLE_Y]],
            randomization: 0.1,
            goal: [-0.20, 0.12],
            tolerance: 0.02,
            grasp_radius: 0.011,
            lift_height: 0.1,
            spring: 10.0,
            obs_noise: 0.012,
            meet: [0.0, TABLE_Y],
            standby: [-0.12, 0.50],
            slot: [0.0, 0.03],
            step_limit: 1500,
        }
    }

    pub fn bimanual_restore() -> Self {
        TaskSpec {
            kind: TaskKind::BimanualRestore,
            objects: vec![[0.15, TABLE_Y], [-0.15, TABLE_Y]],
            meet: [-0.02, 0.20],
            step_limit: 2500,
            ..TaskSpec::cube_transfer()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match TaskKind::from_name(name)? {
            TaskKind::CubeTransfer => TaskSpec::cube_transfer(),
            TaskKind::BimanualRestore => TaskSpec::bimanual_restore(),
        })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs_hz
    }

    pub fn validate(&self) -> Result<()> {
        for arm in &self.arms {
            arm.validate()?;
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("success tolerance must be positive".into()));
        }
        if !(self.fs_hz > 0.0) {
            return Err(Error::Config("fs_hz must be positive".into()));
        }
        if self.objects.len() != self.kind.objects() {
            return Err(Error::dim("objects", self.kind.objects(), self.objects.len()));
        }
        let reachable = |arm: &ArmModel, p: [f64; 2]| arm.inverse(p).ok().is_some();
        for o in &self.objects {
            for dx in [-self.randomization / 2.0, self.randomization / 2.0] {
                let p = [o[0] + dx, o[1]];
                if !self.arms.iter().any(|a| reachable(a, p)) {
                    return Err(Error::Config("object start out of reach".into()));
                }
            }
        }
        Ok(())
    }

    /// Observation layout shared by every frame of this task.
    pub fn layout(&self) -> ObsLayout {
        match self.kind {
            TaskKind::CubeTransfer => ObsLayout::from_lengths([
                ("cube", 2),
                ("goal", 2),
                ("held", 2),
                ("progress", 4),
                ("ee_rel", 4),
                ("ee_near", 4),
            ]),
            TaskKind::BimanualRestore => ObsLayout::from_lengths([
                ("cube", 2),
                ("box", 2),
                ("goal", 2),
                ("held", 4),
                ("inside", 1),
                ("progress", 5),
                ("ee_rel", 8),
                ("ee_near", 8),
            ]),
        }
    }
}

fn home_pose(arm: &ArmModel, p: [f64; 2]) -> [f64; 2] {
    arm.inverse(p).ok().unwrap_or([0.0, 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmState {
    pub q: [f64; 2],
    pub qd: [f64; 2],
    /// 0 open, 1 closed.
    pub grip: f64,
    pub grip_vel: f64,
}

/// Who holds an object, in grasp order; the first holder carries it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Attachment {
    pub holders: Vec<usize>,
    /// Container object index when resting inside another object.
    pub inside: Option<usize>,
}

impl Attachment {
    pub fn held_by(&self, arm: usize) -> bool {
        self.holders.contains(&arm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub arms: [ArmState; 2],
    pub objects: Vec<[f64; 2]>,
    pub attachments: Vec<Attachment>,
    pub goal: [f64; 2],
    /// Latched subgoal flags in the order of [`TaskKind::subgoals`].
    pub progress: Vec<bool>,
    pub tick: u64,
}

impl WorldState {
    /// Start state with objects placed at `object_starts`.
    pub fn initial(task: &TaskSpec, object_starts: Vec<[f64; 2]>) -> Self {
        let goal = match task.kind {
            TaskKind::CubeTransfer => task.goal,
            TaskKind::BimanualRestore => object_starts[1],
        };
        let n = object_starts.len();
        WorldState {
            arms: [0, 1].map(|a| ArmState {
                q: task.home[a],
                ..ArmState::default()
            }),
            objects: object_starts,
            attachments: vec![Attachment::default(); n],
            goal,
            progress: vec![false; task.kind.subgoals().len()],
            tick: 0,
        }
    }

    pub fn ee(&self, task: &TaskSpec, arm: usize) -> [f64; 2] {
        task.arms[arm].points(self.arms[arm].q).1
    }

    pub fn holds_any(&self, arm: usize) -> bool {
        self.attachments.iter().any(|a| a.held_by(arm))
    }

    pub fn sensory_state(&self, task: &TaskSpec) -> SensoryState {
        let mut qpos = Vec::with_capacity(JOINTS);
        let mut qvel = Vec::with_capacity(JOINTS);
        for arm in &self.arms {
            qpos.extend_from_slice(&[arm.q[0], arm.q[1], arm.grip]);
            qvel.extend_from_slice(&[arm.qd[0], arm.qd[1], arm.grip_vel]);
        }
        let eeft = (0..GRIPPERS)
            .map(|a| {
                if self.holds_any(a) {
                    task.spring * self.arms[a].grip
                } else {
                    0.0
                }
            })
            .collect();
        SensoryState { qpos, qvel, eeft }
    }

    /// Observation features; `noise` is added to object positions in order.
    pub fn features(&self, task: &TaskSpec, noise: &[[f64; 2]]) -> Vec<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let mut f = Vec::with_capacity(task.layout().total_len());
        for (i, o) in self.objects.iter().enumerate() {
            let n = noise.get(i).copied().unwrap_or([0.0, 0.0]);
            f.extend_from_slice(&[o[0] + n[0], o[1] + n[1]]);
        }
        f.extend_from_slice(&self.goal);
        for att in &self.attachments {
            f.push(flag(att.held_by(RIGHT)));
            f.push(flag(att.held_by(LEFT)));
        }
        if task.kind == TaskKind::BimanualRestore {
            f.push(flag(self.attachments[0].inside == Some(1)));
        }
        f.extend(self.progress.iter().map(|&p| flag(p)));
        // Object position relative to each end effector, so a policy does not
        // have to learn forward kinematics to locate targets.
        for (i, o) in self.objects.iter().enumerate() {
            let n = noise.get(i).copied().unwrap_or([0.0, 0.0]);
            for arm in [RIGHT, LEFT] {
                let e = self.ee(task, arm);
                f.extend_from_slice(&[o[0] + n[0] - e[0], o[1] + n[1] - e[1]]);
            }
        }
        // The same offsets squashed at a few centimetres: fine resolution close
        // to a target, where grasp precision is decided.
        let rel = f.len() - 4 * self.objects.len();
        for i in rel..f.len() {
            f.push(tanh(f[i] / NEAR_SCALE));
        }
        f
    }

    /// Rebuilds a world from what a policy sees. Object positions come from the
    /// (possibly noisy) features; when both grippers hold an object the right
    /// one is taken as the carrier.
    pub fn from_observation(task: &TaskSpec, features: &[f64], state: &SensoryState) -> Result<Self> {
        let layout = task.layout();
        if features.len() != layout.total_len() {
            return Err(Error::dim("obs", layout.total_len(), features.len()));
        }
        if state.qpos.len() != JOINTS {
            return Err(Error::dim("J", JOINTS, state.qpos.len()));
        }
        if state.qvel.len() != JOINTS {
            return Err(Error::dim("J", JOINTS, state.qvel.len()));
        }
        let n = task.kind.objects();
        let objects: Vec<[f64; 2]> = (0..n).map(|i| [features[2 * i], features[2 * i + 1]]).collect();
        let mut at = 2 * n;
        let goal = [features[at], features[at + 1]];
        at += 2;
        let mut attachments = Vec::with_capacity(n);
        for _ in 0..n {
            let mut holders = Vec::new();
            if features[at] > 0.5 {
                holders.push(RIGHT);
            }
            if features[at + 1] > 0.5 {
                holders.push(LEFT);
            }
            attachments.push(Attachment {
                holders,
                inside: None,
            });
            at += 2;
        }
        if task.kind == TaskKind::BimanualRestore {
            if features[at] > 0.5 {
                attachments[0].inside = Some(1);
            }
            at += 1;
        }
        let progress = features[at..at + task.kind.subgoals().len()]
            .iter()
            .map(|&x| x > 0.5)
            .collect();
        let arms = [0, 1].map(|a| {
            let o = a * DOF_PER_ARM;
            ArmState {
                q: [state.qpos[o], state.qpos[o + 1]],
                qd: [state.qvel[o], state.qvel[o + 1]],
                grip: state.qpos[o + 2],
                grip_vel: state.qvel[o + 2],
            }
        });
        Ok(WorldState {
            arms,
            objects,
            attachments,
            goal,
            progress,
            tick: 0,
        })
    }
}

fn step_toward(x: f64, target: f64, max_step: f64) -> f64 {
    x + (target - x).clamp(-max_step, max_step)
}

/// Advances the world by one control period. Joints servo toward the action's
/// target positions, rate-limited per joint; gripper values crossing 0.5 grasp
/// or release objects; carried objects follow their carrier.
pub fn env_step(world: &WorldState, task: &TaskSpec, action: &Action) -> Result<WorldState> {
    if action.target_pos.len() != JOINTS {
        return Err(Error::dim("J", JOINTS, action.target_pos.len()));
    }
    let dt = task.dt();
    let mut next = world.clone();
    next.tick += 1;

    for (a, arm) in next.arms.iter_mut().enumerate() {
        let model = &task.arms[a];
        let o = a * DOF_PER_ARM;
        let target = model.clamp_joints([action.target_pos[o], action.target_pos[o + 1]]);
        let max_step = model.max_joint_speed * dt;
        let q_old = arm.q;
        arm.q = model.clamp_joints([
            step_toward(q_old[0], target[0], max_step),
            step_toward(q_old[1], target[1], max_step),
        ]);
        arm.qd = [(arm.q[0] - q_old[0]) / dt, (arm.q[1] - q_old[1]) / dt];
        let g_old = arm.grip;
        let g_target = action.target_pos[o + 2].clamp(0.0, 1.0);
        arm.grip = step_toward(g_old, g_target, model.max_grip_speed * dt).clamp(0.0, 1.0);
        arm.grip_vel = (arm.grip - g_old) / dt;
    }

    for a in 0..GRIPPERS {
        let before = world.arms[a].grip;
        let after = next.arms[a].grip;
        if before < 0.5 && after >= 0.5 {
            let ee = next.ee(task, a);
            let candidate = next
                .objects
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let att = &next.attachments[*i];
                    !att.held_by(a) && att.inside.is_none()
                })
                .map(|(i, p)| (i, dist2(ee, *p)))
                .filter(|(_, d)| *d <= task.grasp_radius)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((i, _)) = candidate {
                next.attachments[i].holders.push(a);
            }
        } else if before >= 0.5 && after < 0.5 {
            for i in 0..next.objects.len() {
                let att = &mut next.attachments[i];
                if !att.held_by(a) {
                    continue;
                }
                att.holders.retain(|&h| h != a);
                if att.holders.is_empty() {
                    settle(&mut next, task, i);
                }
            }
        }
    }

    for i in 0..next.objects.len() {
        if let Some(&carrier) = next.attachments[i].holders.first() {
            next.objects[i] = next.ee(task, carrier);
        }
    }
    for i in 0..next.objects.len() {
        if let Some(c) = next.attachments[i].inside {
            let base = next.objects[c];
            next.objects[i] = [base[0] + task.slot[0], base[1] + task.slot[1]];
        }
    }
    update_progress(&mut next, task);
    Ok(next)
}

/// A released cube close enough to the box slot drops into the box.
fn settle(world: &mut WorldState, task: &TaskSpec, i: usize) {
    if task.kind != TaskKind::BimanualRestore || i != 0 {
        return;
    }
    let b = world.objects[1];
    let slot = [b[0] + task.slot[0], b[1] + task.slot[1]];
    if dist2(world.objects[0], slot) <= task.tolerance {
        world.attachments[0].inside = Some(1);
    }
}

fn update_progress(w: &mut WorldState, task: &TaskSpec) {
    let lifted = |w: &WorldState, i: usize| {
        !w.attachments[i].holders.is_empty() && w.objects[i][1] > task.lift_height
    };
    match task.kind {
        TaskKind::CubeTransfer => {
            let att = &w.attachments[0];
            let p = [
                att.held_by(RIGHT),
                w.progress[0] && lifted(w, 0),
                w.progress[1] && att.holders == [LEFT],
                w.progress[2] && att.held_by(LEFT) && dist2(w.objects[0], w.goal) <= task.tolerance,
            ];
            for (flag, now) in w.progress.iter_mut().zip(p) {
                *flag |= now;
            }
        }
        TaskKind::BimanualRestore => {
            let p = [
                w.attachments[0].held_by(RIGHT),
                w.attachments[1].held_by(LEFT),
                w.progress[0] && w.progress[1] && lifted(w, 0) && lifted(w, 1),
                w.progress[2] && w.attachments[0].inside == Some(1),
                w.progress[3]
                    && w.attachments[0].inside == Some(1)
                    && w.attachments[1].holders.is_empty()
                    && dist2(w.objects[1], w.goal) <= task.tolerance,
            ];
            for (flag, now) in w.progress.iter_mut().zip(p) {
                *flag |= now;
            }
        }
    }
}

/// Latched subgoal flags and overall success.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Score {
    pub flags: Vec<bool>,
    pub success: bool,
}

pub fn score(world: &WorldState) -> Score {
    Score {
        flags: world.progress.clone(),
        success: !world.progress.is_empty() && world.progress.iter().all(|&f| f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold_action(w: &WorldState) -> Action {
        let s = w.sensory_state(&TaskSpec::cube_transfer());
        Action::new(s.qpos, vec![0.0; JOINTS])
    }

    #[test]
    fn holding_pose_only_advances_tick() {
        let task = TaskSpec::cube_transfer();
        let w = WorldState::initial(&task, task.objects.clone());
        let next = env_step(&w, &task, &hold_action(&w)).unwrap();
        assert_eq!(next.tick, 1);
        assert_eq!(next.arms, w.arms);
        assert_eq!(next.objects, w.objects);
    }

    #[test]
    fn far_target_moves_by_rate_limit() {
        let mut task = TaskSpec::cube_transfer();
        task.arms[RIGHT].max_joint_speed = 1.0;
        let w = WorldState::initial(&task, task.objects.clone());
        let mut a = hold_action(&w);
        a.target_pos[0] += 1.0;
        let next = env_step(&w, &task, &a).unwrap();
        assert!((next.arms[RIGHT].q[0] - w.arms[RIGHT].q[0] - 0.02).abs() < 1e-12);
        assert!((next.arms[RIGHT].qd[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn closing_far_from_objects_grasps_nothing() {
        let task = TaskSpec::cube_transfer();
        let mut w = WorldState::initial(&task, task.objects.clone());
        for _ in 0..20 {
            let mut a = hold_action(&w);
            a.target_pos[2] = 1.0;
            w = env_step(&w, &task, &a).unwrap();
        }
        assert!(w.arms[RIGHT].grip >= 0.5);
        assert!(w.attachments[0].holders.is_empty());
        assert!(!score(&w).flags[0]);
    }

    #[test]
    fn wrong_action_dimension() {
        let task = TaskSpec::cube_transfer();
        let w = WorldState::initial(&task, task.objects.clone());
        let a = Action::new(vec![0.0; 4], vec![0.0; 4]);
        assert_eq!(env_step(&w, &task, &a), Err(Error::dim("J", 6, 4)));
    }

    #[test]
    fn observation_round_trip() {
        for task in [TaskSpec::cube_transfer(), TaskSpec::bimanual_restore()] {
            let mut w = WorldState::initial(&task, task.objects.clone());
            w.attachments[0].holders = vec![RIGHT];
            w.progress[0] = true;
            let f = w.features(&task, &[]);
            assert_eq!(f.len(), task.layout().total_len());
            let back = WorldState::from_observation(&task, &f, &w.sensory_state(&task)).unwrap();
            assert_eq!(back.attachments, w.attachments);
            assert_eq!(back.progress, w.progress);
            assert_eq!(back.objects, w.objects);
            assert_eq!(back.arms, w.arms);
        }
    }

    #[test]
    fn ee_near_saturates_the_relative_offsets() {
        for task in [TaskSpec::cube_transfer(), TaskSpec::bimanual_restore()] {
            let layout = task.layout();
            let rel = layout.get("ee_rel").unwrap().clone();
            let near = layout.get("ee_near").unwrap().clone();
            assert_eq!(near.len, rel.len);
            assert_eq!(near.len, 4 * task.objects.len());
            let w = WorldState::initial(&task, task.objects.clone());
            let f = w.features(&task, &[]);
            for i in 0..rel.len {
                let expect = tanh(f[rel.offset + i] / NEAR_SCALE);
                assert_eq!(f[near.offset + i], expect);
                assert!(expect.abs() < 1.0);
            }
        }
    }

    #[test]
    fn tasks_are_valid_and_named() {
        for name in ["cube_transfer", "bimanual_restore"] {
            let t = TaskSpec::by_name(name).unwrap();
            t.validate().unwrap();
            assert_eq!(t.kind.name(), name);
        }
        assert!(matches!(TaskSpec::by_name("stack"), Err(Error::UnknownTask(_))));
    }

    #[test]
    fn initial_state_scores_nothing() {
        let task = TaskSpec::cube_transfer();
        let w = WorldState::initial(&task, task.objects.clone());
        let s = score(&w);
        assert_eq!(s.flags, vec![false; 4]);
        assert!(!s.success);
    }
}
