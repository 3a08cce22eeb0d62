//! Chunk policies: anything that maps an observation and sensory state to the
//! next K actions. Two implementations: a single-hidden-layer regressor
//! trained by behavior cloning, and the simulator's scripted expert.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::math::{mean, pop_std, sqrt, tanh};
use libm::cos;
use crate::sim::{expert_chunk, ExpertParams, TaskSpec, WorldState};
use crate::types::{Action, Dataset, SensoryState, Trajectory};
use crate::{Error, Result};

/// What a policy sees at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub obs: Vec<f64>,
    pub state: SensoryState,
}

impl PolicyInput {
    /// `obs ⊕ qpos ⊕ qvel ⊕ eeft`.
    pub fn features(&self) -> Vec<f64> {
        let s = &self.state;
        let mut f = Vec::with_capacity(self.obs.len() + s.qpos.len() + s.qvel.len() + s.eeft.len());
        f.extend_from_slice(&self.obs);
        f.extend_from_slice(&s.qpos);
        f.extend_from_slice(&s.qvel);
        f.extend_from_slice(&s.eeft);
        f
    }
}

/// One inference's prediction: `actions[i]` targets timestep `issued_at + 1 + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub issued_at: u64,
    pub actions: Vec<Action>,
}

impl ActionChunk {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Last timestep this chunk has a prediction for.
    pub fn last_target(&self) -> u64 {
        self.issued_at + self.actions.len() as u64
    }
}

/// Chunk-prediction contract. Implementations must be pure functions of
/// `(self, input, t)`.
pub trait ChunkPolicy {
    /// Chunk length K.
    fn horizon(&self) -> usize;
    /// Action dimension J.
    fn joints(&self) -> usize;
    fn predict_chunk(&self, input: &PolicyInput, t: u64) -> Result<ActionChunk>;
}

/// Mean over every element of squared error between equally shaped rows.
pub fn mse_loss(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim("rows", truth.len(), pred.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::dim("row length", t.len(), p.len()));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += p.len();
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sum / n as f64)
}

/// Per-dimension affine standardization. Dimensions with zero spread map to 0
/// on the way in and to their mean on the way out.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let mut mu = Vec::with_capacity(d);
        let mut sd = Vec::with_capacity(d);
        let mut col = Vec::with_capacity(rows.len());
        for j in 0..d {
            col.clear();
            col.extend(rows.iter().map(|r| r[j]));
            mu.push(mean(&col));
            sd.push(pop_std(&col));
        }
        Standardizer { mean: mu, std: sd }
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { m + v * s } else { *m })
            .collect()
    }
}

/// Single-hidden-layer tanh network from `obs ⊕ qpos ⊕ qvel ⊕ eeft` to a K-step
/// chunk. Raw outputs are, per step, the J target positions followed by the J
/// target velocities, all standardized. Positions are relative to the current
/// `qpos` except for joints flagged `absolute` (grippers: a relative encoding
/// integrates small biases into drift of a two-valued command).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub obs_dim: usize,
    pub joints: usize,
    pub grippers: usize,
    pub hidden: usize,
    pub k: usize,
    /// Per joint: target position predicted as is rather than relative to `qpos`.
    pub absolute: Vec<bool>,
    /// `hidden × input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `output × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub x_norm: Standardizer,
    pub y_norm: Standardizer,
}

/// Gradient of the loss with respect to every parameter, same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(m: &RegressorModel) -> Self {
        Gradients {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    fn clear(&mut self) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Flattened in the order w1, b1, w2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            v.extend_from_slice(part);
        }
        v
    }
}

impl RegressorModel {
    pub fn input_dim(&self) -> usize {
        self.obs_dim + 2 * self.joints + self.grippers
    }

    pub fn output_dim(&self) -> usize {
        self.k * 2 * self.joints
    }

    /// Randomly initialized model with identity standardization.
    pub fn init(obs_dim: usize, joints: usize, grippers: usize, hidden: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = obs_dim + 2 * joints + grippers;
        let output = k * 2 * joints;
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = 1.0 / sqrt(fan_in.max(1) as f64);
            (0..n).map(|_| rng.random_range(-a..a)).collect()
        };
        let w1 = uniform(hidden * input, input);
        let w2 = uniform(output * hidden, hidden);
        RegressorModel {
            obs_dim,
            joints,
            grippers,
            hidden,
            k,
            absolute: vec![false; joints],
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; output],
            x_norm: Standardizer::identity(input),
            y_norm: Standardizer::identity(output),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h, o) = (self.input_dim(), self.hidden, self.output_dim());
        let shapes = [
            ("absolute", self.absolute.len(), self.joints),
            ("w1", self.w1.len(), h * i),
            ("b1", self.b1.len(), h),
            ("w2", self.w2.len(), o * h),
            ("b2", self.b2.len(), o),
            ("x_norm", self.x_norm.dim(), i),
            ("y_norm", self.y_norm.dim(), o),
        ];
        for (what, found, expected) in shapes {
            if found != expected {
                return Err(Error::dim(what, expected, found));
            }
        }
        let all = self
            .params()
            .into_iter()
            .chain(self.x_norm.mean.iter().chain(&self.x_norm.std).copied())
            .chain(self.y_norm.mean.iter().chain(&self.y_norm.std).copied());
        for v in all {
            if !v.is_finite() {
                return Err(Error::Config("non-finite model parameter".into()));
            }
        }
        if self.x_norm.std.iter().chain(&self.y_norm.std).any(|s| *s < 0.0) {
            return Err(Error::Config("negative standardization sigma".into()));
        }
        Ok(())
    }

    /// Network output in standardized space, plus hidden activations.
    pub fn forward_raw(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let i_dim = self.input_dim();
        let h: Vec<f64> = (0..self.hidden)
            .map(|r| {
                let row = &self.w1[r * i_dim..(r + 1) * i_dim];
                tanh(self.b1[r] + row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>())
            })
            .collect();
        let y = (0..self.output_dim())
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                self.b2[o] + row.iter().zip(&h).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        (y, h)
    }

    /// Mean squared error over a batch of standardized inputs and targets, and
    /// its gradient.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        let mut g = Gradients::zeros(self);
        let loss = self.accumulate(xs, ys, &mut g)?;
        Ok((loss, g))
    }

    fn accumulate(&self, xs: &[Vec<f64>], ys: &[Vec<f64>], g: &mut Gradients) -> Result<f64> {
        let (i_dim, h_dim, o_dim) = (self.input_dim(), self.hidden, self.output_dim());
        if xs.len() != ys.len() {
            return Err(Error::dim("targets", xs.len(), ys.len()));
        }
        let scale = 1.0 / (xs.len().max(1) * o_dim) as f64;
        let mut loss = 0.0;
        let mut dh = vec![0.0; h_dim];
        let mut dy = vec![0.0; o_dim];
        for (x, t) in xs.iter().zip(ys) {
            if x.len() != i_dim {
                return Err(Error::dim("input", i_dim, x.len()));
            }
            if t.len() != o_dim {
                return Err(Error::dim("output", o_dim, t.len()));
            }
            let (y, h) = self.forward_raw(x);
            for o in 0..o_dim {
                let e = y[o] - t[o];
                loss += e * e * scale;
                dy[o] = 2.0 * e * scale;
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..o_dim {
                let d = dy[o];
                g.b2[o] += d;
                let w_row = &self.w2[o * h_dim..(o + 1) * h_dim];
                let g_row = &mut g.w2[o * h_dim..(o + 1) * h_dim];
                for j in 0..h_dim {
                    g_row[j] += d * h[j];
                    dh[j] += w_row[j] * d;
                }
            }
            for j in 0..h_dim {
                let da = dh[j] * (1.0 - h[j] * h[j]);
                g.b1[j] += da;
                let g_row = &mut g.w1[j * i_dim..(j + 1) * i_dim];
                for (gi, xi) in g_row.iter_mut().zip(x) {
                    *gi += da * xi;
                }
            }
        }
        Ok(loss)
    }

    /// Flattened parameters in the order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            v.extend_from_slice(part);
        }
        v
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let total = self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len();
        if p.len() != total {
            return Err(Error::dim("parameters", total, p.len()));
        }
        let mut rest = p;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, input: &PolicyInput) -> Result<()> {
        let s = &input.state;
        if s.qpos.len() != self.joints {
            return Err(Error::dim("J", self.joints, s.qpos.len()));
        }
        if s.qvel.len() != self.joints {
            return Err(Error::dim("J", self.joints, s.qvel.len()));
        }
        if s.eeft.len() != self.grippers {
            return Err(Error::dim("G", self.grippers, s.eeft.len()));
        }
        if input.obs.len() != self.obs_dim {
            return Err(Error::dim("obs", self.obs_dim, input.obs.len()));
        }
        Ok(())
    }
}

/// Chunk target encoding: per step, positions (relative to `qpos` unless
/// `absolute`) then velocities.
fn encode_chunk(actions: &[Action], qpos: &[f64], absolute: &[bool]) -> Vec<f64> {
    let mut y = Vec::with_capacity(actions.len() * 2 * qpos.len());
    for a in actions {
        y.extend(
            a.target_pos
                .iter()
                .zip(qpos)
                .zip(absolute)
                .map(|((p, q), &abs)| if abs { *p } else { p - q }),
        );
        y.extend_from_slice(&a.target_vel);
    }
    y
}

fn decode_chunk(y: &[f64], qpos: &[f64], absolute: &[bool], k: usize) -> Vec<Action> {
    let j = qpos.len();
    (0..k)
        .map(|i| {
            let row = &y[i * 2 * j..(i + 1) * 2 * j];
            Action::new(
                row[..j]
                    .iter()
                    .zip(qpos)
                    .zip(absolute)
                    .map(|((d, q), &abs)| if abs { *d } else { d + q })
                    .collect(),
                row[j..].to_vec(),
            )
        })
        .collect()
}

impl ChunkPolicy for RegressorModel {
    fn horizon(&self) -> usize {
        self.k
    }

    fn joints(&self) -> usize {
        self.joints
    }

    fn predict_chunk(&self, input: &PolicyInput, t: u64) -> Result<ActionChunk> {
        self.check_input(input)?;
        let z = self.x_norm.forward(&input.features());
        let (y, _) = self.forward_raw(&z);
        let y = self.y_norm.inverse(&y);
        Ok(ActionChunk {
            issued_at: t,
            actions: decode_chunk(&y, &input.state.qpos, &self.absolute, self.k),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub k: usize,
    /// Joints whose target positions are predicted absolutely (see
    /// [`RegressorModel::absolute`]).
    pub absolute_joints: Vec<usize>,
    /// Standard deviation (rad/s) of Gaussian noise added to the `qvel` inputs
    /// of every minibatch. Closed-loop rollouts otherwise feed the policy's own
    /// velocity back to it and it learns to keep moving (copycat behavior).
    pub qvel_noise_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 128,
            epochs: 100,
            learning_rate: 3e-3,
            batch_size: 64,
            seed: 0,
            k: 20,
            absolute_joints: Vec::new(),
            qvel_noise_std: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be a non-negative number".into()));
        }
        if !(self.qvel_noise_std.is_finite() && self.qvel_noise_std >= 0.0) {
            return Err(Error::Config("qvel noise must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// Action the demonstrator applied at original timestep `t`, linearly
/// interpolated between the retained frames that bracket it and held at the
/// final action past the end.
fn action_at(traj: &Trajectory, t: u64) -> Action {
    let frames = &traj.frames;
    let i = frames.partition_point(|f| f.t <= t);
    if i == 0 {
        return frames[0].action.clone();
    }
    let a = &frames[i - 1];
    if a.t == t || i == frames.len() {
        return a.action.clone();
    }
    let b = &frames[i];
    let w = (t - a.t) as f64 / (b.t - a.t) as f64;
    let lerp = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + w * (q - p)).collect();
    Action::new(
        lerp(&a.action.target_pos, &b.action.target_pos),
        lerp(&a.action.target_vel, &b.action.target_vel),
    )
}

/// Training pairs: one per retained frame, the input features and the K
/// actions the demonstrator applied from that frame's timestep on, encoded
/// with the per-joint `absolute` flags.
pub fn training_pairs(ds: &Dataset, k: usize, absolute: &[bool]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let first = ds.trajectories.first().ok_or(Error::EmptyDataset)?;
    let (j, g, o) = (first.joints(), first.grippers(), first.layout.total_len());
    if absolute.len() != j {
        return Err(Error::dim("J", j, absolute.len()));
    }
    let mut xs = Vec::with_capacity(ds.total_frames());
    let mut ys = Vec::with_capacity(ds.total_frames());
    for traj in &ds.trajectories {
        if traj.is_empty() {
            return Err(Error::InvalidTrajectory(format!("{}: no frames", traj.id)));
        }
        for f in &traj.frames {
            if f.state.qpos.len() != j || f.action.target_pos.len() != j {
                return Err(Error::dim("J", j, f.state.qpos.len()));
            }
            if f.state.eeft.len() != g {
                return Err(Error::dim("G", g, f.state.eeft.len()));
            }
            if f.obs.features.len() != o {
                return Err(Error::dim("obs", o, f.obs.features.len()));
            }
            let input = PolicyInput {
                obs: f.obs.features.clone(),
                state: f.state.clone(),
            };
            let chunk: Vec<Action> = (0..k as u64).map(|s| action_at(traj, f.t + s)).collect();
            xs.push(input.features());
            ys.push(encode_chunk(&chunk, &f.state.qpos, absolute));
        }
    }
    Ok((xs, ys))
}

/// Trained model with its loss history (standardized-space MSE).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RegressorModel,
    /// Full-dataset loss before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub loss_curve: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::B1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::B2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (sqrt(vh) + Self::EPS);
        }
    }
}

/// Minibatch Adam on the standardized-space MSE. Deterministic for a given
/// dataset and configuration.
pub fn train_regressor(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = ds.trajectories.first().ok_or(Error::EmptyDataset)?;
    let mut absolute = vec![false; first.joints()];
    for &i in &cfg.absolute_joints {
        *absolute
            .get_mut(i)
            .ok_or_else(|| Error::Config(format!("absolute joint {i} out of range for J = {}", first.joints())))? = true;
    }
    let (xs, ys) = training_pairs(ds, cfg.k, &absolute)?;
    let mut model = RegressorModel::init(
        first.layout.total_len(),
        first.joints(),
        first.grippers(),
        cfg.hidden,
        cfg.k,
        cfg.seed,
    );
    model.absolute = absolute;
    model.x_norm = Standardizer::fit(&xs);
    model.y_norm = Standardizer::fit(&ys);
    let zx: Vec<Vec<f64>> = xs.iter().map(|x| model.x_norm.forward(x)).collect();
    let zy: Vec<Vec<f64>> = ys.iter().map(|y| model.y_norm.forward(y)).collect();
    drop((xs, ys));

    let mut scratch = Gradients::zeros(&model);
    let initial_loss = model.accumulate(&zx, &zy, &mut scratch)?;
    let n_params = model.params().len();
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut order: Vec<usize> = (0..zx.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);
    // Input noise in standardized units for each qvel feature.
    let qvel_start = model.obs_dim + model.joints;
    let qvel_noise: Vec<(usize, Normal<f64>)> = (qvel_start..qvel_start + model.joints)
        .filter(|&i| cfg.qvel_noise_std > 0.0 && model.x_norm.std[i] > 0.0)
        .map(|i| (i, Normal::new(0.0, cfg.qvel_noise_std / model.x_norm.std[i]).expect("finite std")))
        .collect();
    let mut params = model.params();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut bx: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut by: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        // Cosine decay from the configured rate to zero over the run.
        let lr = cfg.learning_rate * 0.5 * (1.0 + cos(core::f64::consts::PI * epoch as f64 / cfg.epochs as f64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(batch.iter().map(|&i| zx[i].clone()));
            for x in bx.iter_mut() {
                for (i, dist) in &qvel_noise {
                    x[*i] += dist.sample(&mut noise_rng);
                }
            }
            by.extend(batch.iter().map(|&i| zy[i].clone()));
            scratch.clear();
            let loss = model.accumulate(&bx, &by, &mut scratch)?;
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut params, &scratch.flatten(), lr);
            model.set_params(&params)?;
        }
        curve.push(epoch_loss / zx.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        initial_loss,
        loss_curve: curve,
    })
}

/// The scripted expert behind the chunk-policy contract: it rebuilds a world
/// from the observation and rolls the expert forward K steps. Optional
/// Gaussian noise on the target positions is seeded by `(seed, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPolicy {
    pub task: TaskSpec,
    pub params: ExpertParams,
    pub k: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl ScriptedPolicy {
    pub fn new(task: TaskSpec, k: usize) -> Self {
        ScriptedPolicy {
            task,
            params: ExpertParams::default(),
            k,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl ChunkPolicy for ScriptedPolicy {
    fn horizon(&self) -> usize {
        self.k
    }

    fn joints(&self) -> usize {
        crate::sim::JOINTS
    }

    fn predict_chunk(&self, input: &PolicyInput, t: u64) -> Result<ActionChunk> {
        let world = WorldState::from_observation(&self.task, &input.obs, &input.state)?;
        let mut actions = expert_chunk(&world, &self.task, &self.params, self.k);
        if self.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.noise_std)
                .map_err(|_| Error::Config("noise std must be finite".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(t);
            for a in &mut actions {
                for p in &mut a.target_pos {
                    *p += normal.sample(&mut rng);
                }
            }
        }
        Ok(ActionChunk { issued_at: t, actions })
    }
}
