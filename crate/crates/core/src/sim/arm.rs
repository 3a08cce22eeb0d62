//! Planar two-link arm kinematics.

use core::f64::consts::PI;

use crate::math::{dist2, sqrt};
use crate::{Error, Result};

/// Geometry and actuation limits of one planar arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmModel {
    /// Shoulder position (m).
    pub base: [f64; 2],
    /// Mounting orientation added to the shoulder angle (rad).
    pub base_angle: f64,
    /// Upper and lower link lengths (m).
    pub links: [f64; 2],
    /// `[lo, hi]` per revolute joint (rad).
    pub joint_limits: [[f64; 2]; 2],
    /// Per-joint rate limit (rad/s).
    pub max_joint_speed: f64,
    /// Gripper rate limit (1/s); the gripper value lives in `[0, 1]`.
    pub max_grip_speed: f64,
}

impl ArmModel {
    pub fn new(base: [f64; 2], base_angle: f64, links: [f64; 2]) -> Self {
        ArmModel {
            base,
            base_angle,
            links,
            joint_limits: [[-PI, PI], [-PI, PI]],
            max_joint_speed: 1.5,
            max_grip_speed: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.links[0] > 0.0 && self.links[1] > 0.0) {
            return Err(Error::Config("link lengths must be positive".into()));
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::Config("joint limits need lo < hi".into()));
        }
        if !(self.max_joint_speed > 0.0 && self.max_grip_speed > 0.0) {
            return Err(Error::Config("rate limits must be positive".into()));
        }
        Ok(())
    }

    pub fn reach(&self) -> (f64, f64) {
        let [l1, l2] = self.links;
        ((l1 - l2).abs(), l1 + l2)
    }

    pub fn clamp_joints(&self, q: [f64; 2]) -> [f64; 2] {
        [
            q[0].clamp(self.joint_limits[0][0], self.joint_limits[0][1]),
            q[1].clamp(self.joint_limits[1][0], self.joint_limits[1][1]),
        ]
    }

    fn check_limits(&self, q: [f64; 2]) -> Result<()> {
        for (i, (&a, [lo, hi])) in q.iter().zip(self.joint_limits).enumerate() {
            if !(a >= lo && a <= hi) {
                return Err(Error::JointLimit {
                    joint: i,
                    angle: a,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Elbow and end-effector positions without a limit check.
    pub fn points(&self, q: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let [l1, l2] = self.links;
        let a1 = self.base_angle + q[0];
        let a2 = a1 + q[1];
        let elbow = [
            self.base[0] + l1 * libm::cos(a1),
            self.base[1] + l1 * libm::sin(a1),
        ];
        let ee = [elbow[0] + l2 * libm::cos(a2), elbow[1] + l2 * libm::sin(a2)];
        (elbow, ee)
    }

    /// End-effector position; errors when a joint is outside its limits.
    pub fn forward(&self, q: [f64; 2]) -> Result<[f64; 2]> {
        self.check_limits(q)?;
        Ok(self.points(q).1)
    }

    /// Analytic solution on the elbow-down branch (the elbow below the other
    /// candidate; ties go to the positive elbow angle).
    pub fn inverse(&self, target: [f64; 2]) -> IkSolution {
        let [l1, l2] = self.links;
        let dx = target[0] - self.base[0];
        let dy = target[1] - self.base[1];
        let r = sqrt(dx * dx + dy * dy);
        let (min, max) = self.reach();
        const SLACK: f64 = 1e-12;
        if r > max + SLACK || r < min - SLACK {
            return IkSolution::Unreachable {
                distance: r,
                min,
                max,
            };
        }
        let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
        let bend = libm::acos(c2);
        let heading = libm::atan2(dy, dx);
        let solve = |q2: f64| {
            let q1 = heading - libm::atan2(l2 * libm::sin(q2), l1 + l2 * libm::cos(q2));
            [wrap_angle(q1 - self.base_angle), q2]
        };
        let pos = solve(bend);
        let neg = solve(-bend);
        let elbow_y = |q: [f64; 2]| self.points(q).0[1];
        let q = if elbow_y(neg) < elbow_y(pos) - 1e-12 {
            neg
        } else {
            pos
        };
        IkSolution::Reached(q)
    }

    /// Cartesian end-effector velocity implied by joint velocity `qd` at `q`.
    pub fn ee_velocity(&self, q: [f64; 2], qd: [f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.links;
        let a1 = self.base_angle + q[0];
        let a2 = a1 + q[1];
        let (s1, c1) = (libm::sin(a1), libm::cos(a1));
        let (s12, c12) = (libm::sin(a2), libm::cos(a2));
        [
            -l1 * s1 * qd[0] - l2 * s12 * (qd[0] + qd[1]),
            l1 * c1 * qd[0] + l2 * c12 * (qd[0] + qd[1]),
        ]
    }

    pub fn distance_to(&self, q: [f64; 2], p: [f64; 2]) -> f64 {
        dist2(self.points(q).1, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IkSolution {
    Reached([f64; 2]),
    Unreachable { distance: f64, min: f64, max: f64 },
}

impl IkSolution {
    pub fn ok(self) -> Option<[f64; 2]> {
        match self {
            IkSolution::Reached(q) => Some(q),
            IkSolution::Unreachable { .. } => None,
        }
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    libm::atan2(libm::sin(a), libm::cos(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arm() -> ArmModel {
        ArmModel::new([0.0, 0.0], 0.0, [0.3, 0.2])
    }

    fn close(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    #[test]
    fn straight_arm() {
        assert!(close(arm().forward([0.0, 0.0]).unwrap(), [0.5, 0.0], 1e-15));
        assert!(close(arm().forward([PI / 2.0, 0.0]).unwrap(), [0.0, 0.5], 1e-15));
    }

    #[test]
    fn out_of_limit_angle_is_an_error() {
        assert!(matches!(
            arm().forward([0.0, 3.5]),
            Err(Error::JointLimit { joint: 1, .. })
        ));
    }

    #[test]
    fn boundary_reach_and_unreachable() {
        let q = arm().inverse([0.5, 0.0]).ok().unwrap();
        assert!(close(q, [0.0, 0.0], 1e-7));
        assert!(matches!(arm().inverse([0.6, 0.0]), IkSolution::Unreachable { .. }));
        assert!(matches!(arm().inverse([0.05, 0.0]), IkSolution::Unreachable { .. }));
    }

    #[test]
    fn elbow_down_branch() {
        let a = arm();
        let q = a.inverse([0.3, 0.1]).ok().unwrap();
        let (elbow, _) = a.points(q);
        let other = [q[0] + 2.0 * libm::atan2(0.2 * libm::sin(q[1]), 0.3 + 0.2 * libm::cos(q[1])), -q[1]];
        assert!(elbow[1] <= a.points(other).0[1] + 1e-12);
    }

    #[test]
    fn mirrored_mount() {
        let a = ArmModel::new([0.3, 0.3], PI, [0.3, 0.25]);
        assert!(close(a.forward([0.0, 0.0]).unwrap(), [-0.25, 0.3], 1e-12));
        let q = a.inverse([0.15, 0.02]).ok().unwrap();
        assert!(close(a.forward(q).unwrap(), [0.15, 0.02], 1e-9));
    }

    #[test]
    fn ee_velocity_matches_finite_difference() {
        let a = ArmModel::new([0.1, 0.2], 0.4, [0.3, 0.25]);
        let q = [0.3, -0.9];
        let qd = [0.7, -0.2];
        let h = 1e-6;
        let p1 = a.points([q[0] + qd[0] * h, q[1] + qd[1] * h]).1;
        let p0 = a.points([q[0] - qd[0] * h, q[1] - qd[1] * h]).1;
        let fd = [(p1[0] - p0[0]) / (2.0 * h), (p1[1] - p0[1]) / (2.0 * h)];
        assert!(close(a.ee_velocity(q, qd), fd, 1e-8));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn fk_of_ik_is_identity(r in 0.1001f64..0.4999, phi in -PI..PI, base_angle in -PI..PI) {
            let a = ArmModel::new([0.2, -0.1], base_angle, [0.3, 0.2]);
            let p = [0.2 + r * libm::cos(phi), -0.1 + r * libm::sin(phi)];
            let q = a.inverse(p).ok().unwrap();
            let back = a.forward(q).unwrap();
            prop_assert!(close(back, p, 1e-9));
        }
    }
}
