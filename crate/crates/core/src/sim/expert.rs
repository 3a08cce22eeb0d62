//! Scripted waypoint expert with trapezoidal velocity profiles.
//!
//! The expert is a function of the world state only, so it can be rebuilt from
//! what a policy observes. Long moves between waypoints are fast joint-space
//! transits; the final centimetres towards a grasp or a placement are slow
//! straight Cartesian approaches. Those two speed regimes are what the
//! downsampler is supposed to tell apart.

use alloc::vec::Vec;

use super::arm::ArmModel;
use super::world::{env_step, ArmState, TaskKind, TaskSpec, WorldState, DOF_PER_ARM, JOINTS, LEFT, RIGHT};
use crate::math::{dist2, sqrt};
use crate::types::Action;

/// What an arm is doing; also used to label demonstration frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Hold,
    Transit,
    Lift,
    Approach,
    /// Slow straight move of a held object onto its target.
    Place,
    Grasp,
    Release,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Hold => "hold",
            Phase::Transit => "transit",
            Phase::Lift => "lift",
            Phase::Approach => "approach",
            Phase::Place => "place",
            Phase::Grasp => "grasp",
            Phase::Release => "release",
        }
    }

    /// Label priority when the two arms disagree: gripper events, then slow
    /// approaches, lifts, transits and finally holding.
    fn priority(self) -> u8 {
        match self {
            Phase::Grasp | Phase::Release => 4,
            Phase::Approach | Phase::Place => 3,
            Phase::Lift => 2,
            Phase::Transit => 1,
            Phase::Hold => 0,
        }
    }

    pub fn dominant(a: Phase, b: Phase) -> Phase {
        if b.priority() > a.priority() {
            b
        } else {
            a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertParams {
    /// Joint-space transit speed (rad/s) and acceleration (rad/s²).
    pub transit_speed: f64,
    pub transit_accel: f64,
    /// Cartesian approach speed (m/s) and acceleration (m/s²).
    pub approach_speed: f64,
    pub approach_accel: f64,
    /// Cartesian lift speed (m/s).
    pub lift_speed: f64,
    /// Length of the straight approach corridor (m).
    pub hover: f64,
    /// Height lifted objects are raised to (m).
    pub lift_top: f64,
    /// End-effector to target distance at which the gripper is actuated (m).
    pub close_tol: f64,
    /// Distance at which a waypoint counts as reached (m).
    pub arrive_tol: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        ExpertParams {
            transit_speed: 0.6,
            transit_accel: 3.0,
            approach_speed: 0.03,
            approach_accel: 0.1,
            lift_speed: 0.08,
            hover: 0.08,
            lift_top: 0.16,
            close_tol: 0.002,
            arrive_tol: 0.003,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Motion {
    /// Joint-space trapezoid to a configuration.
    Joint([f64; 2]),
    /// Straight end-effector line to a point with a speed cap.
    Line([f64; 2], f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ArmCommand {
    motion: Motion,
    grip: f64,
    phase: Phase,
}

fn ik_or(model: &ArmModel, p: [f64; 2], fallback: [f64; 2]) -> [f64; 2] {
    model.inverse(p).ok().unwrap_or(fallback)
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

struct Ctx<'a> {
    w: &'a WorldState,
    task: &'a TaskSpec,
    p: &'a ExpertParams,
}

impl Ctx<'_> {
    fn ee(&self, arm: usize) -> [f64; 2] {
        self.w.ee(self.task, arm)
    }

    fn hold(&self, arm: usize, grip: f64) -> ArmCommand {
        ArmCommand {
            motion: Motion::Joint(self.w.arms[arm].q),
            grip,
            phase: Phase::Hold,
        }
    }

    fn transit(&self, arm: usize, p: [f64; 2], grip: f64) -> ArmCommand {
        let q = ik_or(&self.task.arms[arm], p, self.w.arms[arm].q);
        self.transit_q(arm, q, grip)
    }

    fn transit_q(&self, arm: usize, q: [f64; 2], grip: f64) -> ArmCommand {
        let s = &self.w.arms[arm];
        let still = s.qd.iter().all(|v| v.abs() < 1e-9);
        let there = (0..2).all(|i| (q[i] - s.q[i]).abs() < 1e-9);
        ArmCommand {
            motion: Motion::Joint(q),
            grip,
            phase: if still && there { Phase::Hold } else { Phase::Transit },
        }
    }

    /// Move to the start of a straight corridor ending at `target`, run the
    /// corridor slowly, then close the gripper on arrival.
    fn grasp(&self, arm: usize, target: [f64; 2], offset: [f64; 2]) -> ArmCommand {
        let ee = self.ee(arm);
        let d = dist2(ee, target);
        let grip = self.w.arms[arm].grip;
        if d <= self.p.close_tol || (grip > 0.05 && d <= self.task.grasp_radius) {
            return ArmCommand {
                motion: Motion::Line(target, self.p.approach_speed),
                grip: 1.0,
                phase: Phase::Grasp,
            };
        }
        let pre = add(target, offset);
        if on_corridor(ee, target, pre) {
            return ArmCommand {
                motion: Motion::Line(target, self.p.approach_speed),
                grip: 0.0,
                phase: Phase::Approach,
            };
        }
        self.transit(arm, pre, 0.0)
    }

    /// Put a held object down at `target` along a corridor, opening on arrival.
    fn place(&self, arm: usize, held: [f64; 2], target: [f64; 2], offset: [f64; 2]) -> ArmCommand {
        if dist2(held, target) <= self.p.close_tol {
            return ArmCommand {
                motion: Motion::Line(target, self.p.approach_speed),
                grip: 0.0,
                phase: Phase::Release,
            };
        }
        let pre = add(target, offset);
        if on_corridor(held, target, pre) {
            return ArmCommand {
                motion: Motion::Line(target, self.p.approach_speed),
                grip: 1.0,
                phase: Phase::Place,
            };
        }
        self.transit(arm, pre, 1.0)
    }

    fn lift(&self, arm: usize) -> ArmCommand {
        let ee = self.ee(arm);
        let top = [ee[0], self.p.lift_top];
        if ee[1] >= self.p.lift_top - 1e-9 {
            return self.hold(arm, 1.0);
        }
        ArmCommand {
            motion: Motion::Line(top, self.p.lift_speed),
            grip: 1.0,
            phase: Phase::Lift,
        }
    }
}

/// True when `p` lies within 1 cm of the segment from `target` to `pre`
/// (slightly extended at both ends).
fn on_corridor(p: [f64; 2], target: [f64; 2], pre: [f64; 2]) -> bool {
    let u = [pre[0] - target[0], pre[1] - target[1]];
    let len2 = u[0] * u[0] + u[1] * u[1];
    if len2 == 0.0 {
        return true;
    }
    let rel = [p[0] - target[0], p[1] - target[1]];
    let s = (rel[0] * u[0] + rel[1] * u[1]) / len2;
    let perp = (rel[0] * u[1] - rel[1] * u[0]).abs() / sqrt(len2);
    (-0.1..=1.05).contains(&s) && perp <= 0.01
}

/// The right arm picks the cube up and sets it down on the handoff pad while
/// the left arm moves beside the pad. The right arm keeps still while the left
/// approaches from the side and grasps, then goes home as the left lifts the
/// cube and carries it to the goal.
fn cube_transfer(c: &Ctx) -> [ArmCommand; 2] {
    let w = c.w;
    let task = c.task;
    let cube = w.objects[0];
    let att = &w.attachments[0];
    let (hr, hl) = (att.held_by(RIGHT), att.held_by(LEFT));
    let pad = task.meet;
    let up = [0.0, c.p.hover];
    let side = [-c.p.hover, 0.0];
    let right = if !w.progress[0] {
        c.grasp(RIGHT, cube, up)
    } else if hr && !w.progress[1] {
        c.lift(RIGHT)
    } else if hr {
        c.place(RIGHT, cube, pad, up)
    } else if !hl && !w.progress[2] {
        c.hold(RIGHT, 0.0)
    } else {
        c.transit_q(RIGHT, task.home[RIGHT], 0.0)
    };
    let left = if hl {
        if cube[1] < task.lift_height && dist2(cube, pad) < c.p.hover {
            c.lift(LEFT)
        } else {
            c.transit(LEFT, w.goal, 1.0)
        }
    } else if w.progress[2] {
        c.transit_q(LEFT, task.home[LEFT], 0.0)
    } else if w.progress[1] && !hr {
        c.grasp(LEFT, cube, side)
    } else if w.progress[1] {
        c.transit(LEFT, add(pad, side), 0.0)
    } else {
        c.transit(LEFT, task.standby, 0.0)
    };
    [right, left]
}

fn bimanual_restore(c: &Ctx) -> [ArmCommand; 2] {
    let w = c.w;
    let task = c.task;
    let (cube, bx) = (w.objects[0], w.objects[1]);
    let inside = w.attachments[0].inside == Some(1);
    let cube_r = w.attachments[0].held_by(RIGHT);
    let box_l = w.attachments[1].held_by(LEFT);
    let up = [0.0, c.p.hover];
    let slot = add(bx, task.slot);
    let box_at_meet = dist2(bx, task.meet) <= c.p.arrive_tol && w.arms[LEFT].qd.iter().all(|v| v.abs() < 1e-6);

    let right = if inside {
        c.transit_q(RIGHT, task.home[RIGHT], 0.0)
    } else if !cube_r {
        c.grasp(RIGHT, cube, up)
    } else if !w.progress[2] {
        c.lift(RIGHT)
    } else if box_at_meet {
        c.place(RIGHT, cube, slot, up)
    } else {
        c.transit(RIGHT, add(add(task.meet, task.slot), up), 1.0)
    };
    let left = if !box_l {
        if inside {
            c.transit_q(LEFT, task.home[LEFT], 0.0)
        } else {
            c.grasp(LEFT, bx, up)
        }
    } else if !w.progress[2] {
        c.lift(LEFT)
    } else if !inside {
        c.transit(LEFT, task.meet, 1.0)
    } else {
        c.place(LEFT, bx, w.goal, up)
    };
    [right, left]
}

/// One joint of a trapezoidal profile: returns the next position and velocity.
fn trapezoid(q: f64, qd: f64, goal: f64, vmax: f64, accel: f64, dt: f64) -> (f64, f64) {
    let d = goal - q;
    if d.abs() < 1e-12 && qd.abs() < accel * dt {
        return (goal, 0.0);
    }
    let v_des = d.signum() * vmax.min(sqrt(2.0 * accel * d.abs()));
    let v = qd + (v_des - qd).clamp(-accel * dt, accel * dt);
    let next = q + v * dt;
    if (goal - next) * d <= 0.0 {
        (goal, (goal - q) / dt)
    } else {
        (next, v)
    }
}

fn step_arm(model: &ArmModel, s: &ArmState, cmd: &ArmCommand, p: &ExpertParams, dt: f64) -> [f64; 2] {
    match cmd.motion {
        Motion::Joint(goal) => {
            let mut q = [0.0; 2];
            for i in 0..2 {
                q[i] = trapezoid(s.q[i], s.qd[i], goal[i], p.transit_speed, p.transit_accel, dt).0;
            }
            q
        }
        Motion::Line(target, vmax) => {
            let ee = model.points(s.q).1;
            let d = dist2(ee, target);
            if d < 1e-12 {
                return s.q;
            }
            let u = [(target[0] - ee[0]) / d, (target[1] - ee[1]) / d];
            let v = model.ee_velocity(s.q, s.qd);
            let speed = (v[0] * u[0] + v[1] * u[1]).max(0.0);
            let want = vmax.min(sqrt(2.0 * p.approach_accel * d));
            let a = p.approach_accel * dt;
            let speed = speed + (want - speed).clamp(-a, a);
            let step = (speed * dt).min(d);
            ik_or(model, [ee[0] + u[0] * step, ee[1] + u[1] * step], s.q)
        }
    }
}

/// The expert's next action and the phase label of the current state.
pub fn expert_action(world: &WorldState, task: &TaskSpec, params: &ExpertParams) -> (Action, Phase) {
    let ctx = Ctx {
        w: world,
        task,
        p: params,
    };
    let cmds = match task.kind {
        TaskKind::CubeTransfer => cube_transfer(&ctx),
        TaskKind::BimanualRestore => bimanual_restore(&ctx),
    };
    let dt = task.dt();
    let mut pos = Vec::with_capacity(JOINTS);
    let mut vel = Vec::with_capacity(JOINTS);
    for (a, cmd) in cmds.iter().enumerate() {
        let s = &world.arms[a];
        let model = &task.arms[a];
        let q = step_arm(model, s, cmd, params, dt);
        let g_step = model.max_grip_speed * dt;
        let g = s.grip + (cmd.grip - s.grip).clamp(-g_step, g_step);
        pos.extend_from_slice(&[q[0], q[1], g]);
        vel.extend_from_slice(&[(q[0] - s.q[0]) / dt, (q[1] - s.q[1]) / dt, (g - s.grip) / dt]);
    }
    debug_assert_eq!(pos.len(), 2 * DOF_PER_ARM);
    (Action::new(pos, vel), Phase::dominant(cmds[0].phase, cmds[1].phase))
}

/// Rolls the expert forward on a copy of `world` for `k` steps and returns the
/// actions it took.
pub fn expert_chunk(world: &WorldState, task: &TaskSpec, params: &ExpertParams, k: usize) -> Vec<Action> {
    let mut w = world.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let (a, _) = expert_action(&w, task, params);
        match env_step(&w, task, &a) {
            Ok(next) => w = next,
            Err(_) => {
                out.push(a);
                continue;
            }
        }
        out.push(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_reaches_goal_without_exceeding_limits() {
        let (mut q, mut v) = (0.0, 0.0);
        let mut peak: f64 = 0.0;
        for _ in 0..500 {
            let (nq, nv) = trapezoid(q, v, 1.0, 0.6, 1.5, 0.02);
            peak = peak.max(nv.abs());
            q = nq;
            v = nv;
        }
        assert_eq!(q, 1.0);
        assert_eq!(v, 0.0);
        assert!(peak <= 0.6 + 1e-12);
    }

    #[test]
    fn corridor_membership() {
        assert!(on_corridor([0.0, 0.05], [0.0, 0.0], [0.0, 0.08]));
        assert!(!on_corridor([0.02, 0.05], [0.0, 0.0], [0.0, 0.08]));
        assert!(!on_corridor([0.0, 0.2], [0.0, 0.0], [0.0, 0.08]));
    }

    #[test]
    fn phase_priority() {
        assert_eq!(Phase::dominant(Phase::Transit, Phase::Approach), Phase::Approach);
        assert_eq!(Phase::dominant(Phase::Grasp, Phase::Approach), Phase::Grasp);
        assert_eq!(Phase::dominant(Phase::Hold, Phase::Lift), Phase::Lift);
    }
}
