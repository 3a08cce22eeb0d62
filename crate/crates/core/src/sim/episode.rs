//! Seeded episodes: randomized object placement, noisy observations and
//! demonstration recording.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::expert::{expert_action, ExpertParams, Phase};
use super::world::{env_step, score, TaskSpec, WorldState};
use crate::types::{Action, Frame, Observation, SensoryState, Trajectory};
use crate::{Error, Result};

/// One seeded task instance. The seed fixes the object start positions and
/// the observation noise, which is drawn per tick so that it does not depend
/// on how often the world is observed.
#[derive(Debug, Clone)]
pub struct SimEpisode {
    pub task: TaskSpec,
    pub world: WorldState,
    pub seed: u64,
}

impl SimEpisode {
    pub fn new(task: TaskSpec, seed: u64) -> Result<Self> {
        task.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = task.randomization / 2.0;
        let starts = task
            .objects
            .iter()
            .map(|o| [o[0] + rng.random_range(-half..=half), o[1]])
            .collect();
        let world = WorldState::initial(&task, starts);
        Ok(SimEpisode { task, world, seed })
    }

    /// Observation features (object positions perturbed by the seeded noise)
    /// and the exact proprioceptive state.
    pub fn observe(&self) -> (Observation, SensoryState) {
        let n = self.world.objects.len();
        let mut noise = Vec::with_capacity(n);
        if let Ok(dist) = Normal::new(0.0, self.task.obs_noise) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(self.world.tick + 1);
            for _ in 0..n {
                noise.push([dist.sample(&mut rng), dist.sample(&mut rng)]);
            }
        }
        let features = self.world.features(&self.task, &noise);
        (Observation { features }, self.world.sensory_state(&self.task))
    }

    pub fn step(&mut self, action: &Action) -> Result<()> {
        self.world = env_step(&self.world, &self.task, action)?;
        Ok(())
    }

    pub fn succeeded(&self) -> bool {
        score(&self.world).success
    }

    pub fn subgoals(&self) -> Vec<bool> {
        self.world.progress.clone()
    }
}

/// A recorded expert demonstration with per-frame phase labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub trajectory: Trajectory,
    pub phases: Vec<Phase>,
}

/// Runs the expert on the true world state until success and records every
/// control step. Observations in the record carry the episode's noise.
pub fn generate_demo(task: &TaskSpec, params: &ExpertParams, seed: u64) -> Result<Demo> {
    let mut ep = SimEpisode::new(task.clone(), seed)?;
    let mut frames = Vec::new();
    let mut phases = Vec::new();
    loop {
        let (obs, state) = ep.observe();
        let (action, phase) = expert_action(&ep.world, task, params);
        let done = ep.succeeded();
        frames.push(Frame {
            t: ep.world.tick,
            obs,
            state,
            action: action.clone(),
        });
        phases.push(phase);
        if done {
            break;
        }
        if frames.len() > task.step_limit {
            return Err(Error::ExpertFailure(format!(
                "{} seed {seed}: no success within {} steps (progress {:?})",
                task.kind.name(),
                task.step_limit,
                ep.world.progress
            )));
        }
        ep.step(&action)?;
    }
    Ok(Demo {
        trajectory: Trajectory {
            id: format!("{}-{seed}", task.kind.name()),
            fs_hz: task.fs_hz,
            layout: task.layout(),
            frames,
        },
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_trajectory;

    #[test]
    fn demos_succeed_and_validate() {
        for task in [TaskSpec::cube_transfer(), TaskSpec::bimanual_restore()] {
            for seed in 0..5 {
                let d = generate_demo(&task, &ExpertParams::default(), seed).unwrap();
                assert!(validate_trajectory(&d.trajectory).is_empty());
                assert_eq!(d.phases.len(), d.trajectory.len());
            }
        }
    }

    #[test]
    fn expert_succeeds_on_fifty_nominal_seeds() {
        for mut task in [TaskSpec::cube_transfer(), TaskSpec::bimanual_restore()] {
            task.obs_noise = 0.0;
            for seed in 0..50 {
                let d = generate_demo(&task, &ExpertParams::default(), seed)
                    .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", task.kind.name()));
                let mut ep = SimEpisode::new(task.clone(), seed).unwrap();
                for f in &d.trajectory.frames[..d.trajectory.len() - 1] {
                    ep.step(&f.action).unwrap();
                }
                assert!(ep.succeeded(), "{} seed {seed}: replay does not succeed", task.kind.name());
            }
        }
    }

    #[test]
    fn seed_zero_cube_transfer_length() {
        let d = generate_demo(&TaskSpec::cube_transfer(), &ExpertParams::default(), 0).unwrap();
        assert!((200..=1200).contains(&d.trajectory.len()), "{}", d.trajectory.len());
    }

    #[test]
    fn transits_are_much_faster_than_approaches() {
        let task = TaskSpec::cube_transfer();
        for seed in 0..10 {
            let d = generate_demo(&task, &ExpertParams::default(), seed).unwrap();
            let mean_speed = |phase: Phase| {
                let v: Vec<f64> = d
                    .trajectory
                    .frames
                    .iter()
                    .zip(&d.phases)
                    .filter(|(_, p)| **p == phase)
                    .map(|(f, _)| f.state.qvel.iter().map(|x| x.abs()).sum::<f64>())
                    .collect();
                assert!(!v.is_empty(), "seed {seed}: no {} frames", phase.name());
                v.iter().sum::<f64>() / v.len() as f64
            };
            let (transit, approach) = (mean_speed(Phase::Transit), mean_speed(Phase::Approach));
            assert!(transit >= 3.0 * approach, "seed {seed}: transit {transit} approach {approach}");
        }
    }

    #[test]
    fn demos_are_deterministic_per_seed() {
        let task = TaskSpec::cube_transfer();
        let a = generate_demo(&task, &ExpertParams::default(), 3).unwrap();
        let b = generate_demo(&task, &ExpertParams::default(), 3).unwrap();
        let c = generate_demo(&task, &ExpertParams::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trajectory.frames, c.trajectory.frames);
    }
}
