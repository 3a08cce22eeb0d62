//! Planar dual-arm kinematic simulator, the two benchmark tasks and a
//! scripted expert that produces demonstrations.

mod arm;
mod episode;
mod expert;
mod world;

pub use arm::{wrap_angle, ArmModel, IkSolution};
pub use episode::{generate_demo, Demo, SimEpisode};
pub use expert::{expert_action, expert_chunk, ExpertParams, Phase};
pub use world::{
    env_step, score, ArmState, Attachment, Score, TaskKind, TaskSpec, WorldState, DOF_PER_ARM, GRIPPERS, GRIPPER_JOINTS,
    JOINTS, LEFT, RIGHT, TABLE_Y,
};
