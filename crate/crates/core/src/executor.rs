//! The execution engine: a history of overlapping action chunks, their
//! temporal ensemble, the agreement metric (COR) and the skip/infer state
//! machine that decides when policy inference can be skipped.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{exp, pop_std};
use crate::policy::{ActionChunk, ChunkPolicy, PolicyInput};
use crate::sim::SimEpisode;
use crate::types::{Action, ActionStats};
use crate::{Error, Result};

/// The most recent chunks, oldest first, at most `capacity` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkHistory {
    capacity: usize,
    chunks: VecDeque<ActionChunk>,
}

impl ChunkHistory {
    pub fn new(capacity: usize) -> Self {
        ChunkHistory {
            capacity: capacity.max(1),
            chunks: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn newest(&self) -> Option<&ActionChunk> {
        self.chunks.back()
    }

    pub fn chunks(&self) -> impl Iterator<Item = &ActionChunk> {
        self.chunks.iter()
    }

    pub fn push(&mut self, chunk: ActionChunk) -> Result<()> {
        if let Some(newest) = self.newest() {
            if chunk.issued_at <= newest.issued_at {
                return Err(Error::OutOfOrderChunk {
                    issued_at: chunk.issued_at,
                    newest: newest.issued_at,
                });
            }
        }
        if self.chunks.len() == self.capacity {
            self.chunks.pop_front();
        }
        self.chunks.push_back(chunk);
        Ok(())
    }

    /// Predictions for timestep `target`, as `(k, action)` where the chunk was
    /// issued at `target - 1 - k`. Ordered by increasing `k` (newest first).
    pub fn query(&self, target: u64) -> Vec<(u64, &Action)> {
        let mut out = Vec::with_capacity(self.chunks.len());
        for c in self.chunks.iter().rev() {
            if c.issued_at >= target {
                continue;
            }
            let k = target - 1 - c.issued_at;
            if let Some(a) = c.actions.get(k as usize) {
                out.push((k, a));
            }
        }
        out
    }

    /// How many timesteps after `t` the newest chunk still covers.
    pub fn remaining_coverage(&self, t: u64) -> u64 {
        self.newest().map_or(0, |c| c.last_target().saturating_sub(t))
    }
}

/// Exponentially weighted average of the available predictions for `target`:
/// weight `exp(-m k)` normalized over the predictions present.
pub fn ensemble_action(history: &ChunkHistory, target: u64, m: f64) -> Result<Action> {
    ensemble_of(&history.query(target), m).ok_or(Error::NoCoverage(target))
}

fn ensemble_of(preds: &[(u64, &Action)], m: f64) -> Option<Action> {
    let (_, first) = preds.first()?;
    let j = first.target_pos.len();
    let mut pos = vec![0.0; j];
    let mut vel = vec![0.0; j];
    let mut total = 0.0;
    for (k, a) in preds {
        let w = exp(-m * *k as f64);
        total += w;
        for (acc, x) in pos.iter_mut().zip(&a.target_pos) {
            *acc += w * x;
        }
        for (acc, x) in vel.iter_mut().zip(&a.target_vel) {
            *acc += w * x;
        }
    }
    pos.iter_mut().chain(vel.iter_mut()).for_each(|v| *v /= total);
    Some(Action::new(pos, vel))
}

/// Cognitive offloading readiness: the sum over joints with nonzero spread of
/// the population standard deviation of the standardized predicted targets.
pub fn compute_cor(preds: &[(u64, &Action)], stats: &ActionStats) -> f64 {
    let mut cor = 0.0;
    let mut col = Vec::with_capacity(preds.len());
    for (j, (&mu, &sigma)) in stats.mu.iter().zip(&stats.sigma).enumerate() {
        if !(sigma > 0.0) {
            continue;
        }
        col.clear();
        col.extend(preds.iter().map(|(_, a)| (a.target_pos[j] - mu) / sigma));
        cor += pop_std(&col);
    }
    cor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredicateMode {
    /// Skip when the overlapping predictions agree (COR ≤ COT).
    #[default]
    AgreementGated,
    /// Skip when COR > COT, as Eq. 15 is printed.
    Literal,
}

impl PredicateMode {
    pub fn name(self) -> &'static str {
        match self {
            PredicateMode::AgreementGated => "agreement_gated",
            PredicateMode::Literal => "literal",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "agreement_gated" => Some(PredicateMode::AgreementGated),
            "literal" => Some(PredicateMode::Literal),
            _ => None,
        }
    }
}

/// Default COT for the agreement-gated predicate.
pub const DEFAULT_COT: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffloadConfig {
    /// Threshold on COR; a negative value disables skipping in agreement-gated mode.
    pub cot: f64,
    /// Minimum number of overlapping predictions before a skip is allowed.
    pub mced: usize,
    /// Maximum number of consecutive skips.
    pub mcod: usize,
    /// Ensemble decay rate.
    pub m: f64,
    pub mode: PredicateMode,
}

impl OffloadConfig {
    /// Defaults for chunk length `k`: mcod = K.
    pub fn for_horizon(k: usize) -> Self {
        OffloadConfig {
            cot: DEFAULT_COT,
            mced: 3,
            mcod: k,
            m: 0.01,
            mode: PredicateMode::AgreementGated,
        }
    }

    /// Agreement-gated with cot = -1: every step infers.
    pub fn never_skip(k: usize) -> Self {
        OffloadConfig {
            cot: -1.0,
            mode: PredicateMode::AgreementGated,
            ..Self::for_horizon(k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cot.is_finite() {
            return Err(Error::Config("cot must be finite".into()));
        }
        if self.mced < 1 {
            return Err(Error::Config("mced must be at least 1".into()));
        }
        if self.mcod < 1 {
            return Err(Error::Config("mcod must be at least 1".into()));
        }
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::Config("m must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Infer,
    Skip,
}

/// Inputs to one skip/infer decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionInput {
    pub cor: f64,
    /// Number of retained predictions covering the next timestep.
    pub overlap: usize,
    pub consecutive_skips: usize,
    /// Timesteps the newest chunk still covers.
    pub coverage: u64,
}

pub fn decide(input: &DecisionInput, cfg: &OffloadConfig) -> Decision {
    let phi = input.overlap >= cfg.mced;
    let guard = (input.consecutive_skips as u64) < (cfg.mcod as u64).min(input.coverage);
    let trigger = match cfg.mode {
        PredicateMode::AgreementGated => input.cor <= cfg.cot,
        PredicateMode::Literal => input.cor > cfg.cot,
    };
    if trigger && phi && guard {
        Decision::Skip
    } else {
        Decision::Infer
    }
}

/// Modeled time costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    /// Cost of one policy inference (ms).
    pub l_inf: f64,
    /// Cost of one control step (ms).
    pub l_step: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            l_inf: 100.0,
            l_step: 20.0,
        }
    }
}

impl LatencyModel {
    pub fn cost(&self, inferences: usize, steps: usize) -> f64 {
        inferences as f64 * self.l_inf + steps as f64 * self.l_step
    }
}

/// What the executor needs from a world.
pub trait Environment {
    fn observe(&self) -> PolicyInput;
    fn apply(&mut self, action: &Action) -> Result<()>;
    fn succeeded(&self) -> bool;
    fn subgoals(&self) -> Vec<bool>;
    fn step_limit(&self) -> usize;
}

impl Environment for SimEpisode {
    fn observe(&self) -> PolicyInput {
        let (obs, state) = SimEpisode::observe(self);
        PolicyInput {
            obs: obs.features,
            state,
        }
    }

    fn apply(&mut self, action: &Action) -> Result<()> {
        self.step(action)
    }

    fn succeeded(&self) -> bool {
        SimEpisode::succeeded(self)
    }

    fn subgoals(&self) -> Vec<bool> {
        SimEpisode::subgoals(self)
    }

    fn step_limit(&self) -> usize {
        self.task.step_limit
    }
}

/// Per-step record of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub decision: Decision,
    /// Overlapping predictions used for this step's action.
    pub overlap: usize,
    /// Newest-chunk coverage seen when this step's decision was made.
    pub coverage: u64,
    /// COR that led to this step's decision (0 for the first step).
    pub cor: f64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub seed: u64,
    pub success: bool,
    pub subgoals: Vec<bool>,
    pub step_count: usize,
    pub inference_count: usize,
    pub skip_count: usize,
    pub cost_time_ms: f64,
    pub steps: Vec<StepRecord>,
}

impl EpisodeReport {
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    /// Lengths of maximal runs of consecutive skips.
    pub fn skip_runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut cur = 0;
        for s in &self.steps {
            if s.decision == Decision::Skip {
                cur += 1;
            } else if cur > 0 {
                runs.push(cur);
                cur = 0;
            }
        }
        if cur > 0 {
            runs.push(cur);
        }
        runs
    }
}

fn check_dims(policy: &dyn ChunkPolicy, input: &PolicyInput) -> Result<()> {
    if input.state.qpos.len() != policy.joints() {
        return Err(Error::dim("J", policy.joints(), input.state.qpos.len()));
    }
    Ok(())
}

/// Runs one episode with inference skipping. Each step: infer if the previous
/// decision says so, execute the ensemble for the next timestep, then compute
/// COR over the predictions for the following timestep and decide again.
pub fn run_episode<E: Environment>(
    policy: &dyn ChunkPolicy,
    env: &mut E,
    cfg: &OffloadConfig,
    stats: &ActionStats,
    latency: &LatencyModel,
    seed: u64,
) -> Result<EpisodeReport> {
    cfg.validate()?;
    let k = policy.horizon();
    if stats.joints() != policy.joints() {
        return Err(Error::dim("J", policy.joints(), stats.joints()));
    }
    let mut history = ChunkHistory::new(k);
    let mut steps = Vec::new();
    let (mut inferences, mut skips, mut consecutive) = (0usize, 0usize, 0usize);
    let mut decision = Decision::Infer;
    let (mut cor, mut coverage) = (0.0, 0u64);
    let mut t: u64 = 0;
    while !env.succeeded() && steps.len() < env.step_limit() {
        match decision {
            Decision::Infer => {
                let input = env.observe();
                check_dims(policy, &input)?;
                history.push(policy.predict_chunk(&input, t)?)?;
                inferences += 1;
                consecutive = 0;
            }
            Decision::Skip => {
                skips += 1;
                consecutive += 1;
            }
        }
        let preds = history.query(t + 1);
        let overlap = preds.len();
        let action = ensemble_of(&preds, cfg.m).ok_or(Error::NoCoverage(t + 1))?;
        env.apply(&action)?;
        steps.push(StepRecord {
            decision,
            overlap,
            coverage,
            cor,
            action,
        });
        t += 1;

        let next = history.query(t + 1);
        coverage = history.remaining_coverage(t);
        cor = if next.is_empty() { 0.0 } else { compute_cor(&next, stats) };
        decision = if next.is_empty() {
            Decision::Infer
        } else {
            decide(
                &DecisionInput {
                    cor,
                    overlap: next.len(),
                    consecutive_skips: consecutive,
                    coverage,
                },
                cfg,
            )
        };
    }
    let step_count = steps.len();
    Ok(EpisodeReport {
        seed,
        success: env.succeeded(),
        subgoals: env.subgoals(),
        step_count,
        inference_count: inferences,
        skip_count: skips,
        cost_time_ms: latency.cost(inferences, step_count),
        steps,
    })
}

/// Reference executor without any skipping logic: infer every step and
/// execute the temporal ensemble.
pub fn run_plain_episode<E: Environment>(
    policy: &dyn ChunkPolicy,
    env: &mut E,
    m: f64,
    latency: &LatencyModel,
    seed: u64,
) -> Result<EpisodeReport> {
    let mut history = ChunkHistory::new(policy.horizon());
    let mut steps = Vec::new();
    let mut t: u64 = 0;
    while !env.succeeded() && steps.len() < env.step_limit() {
        let input = env.observe();
        check_dims(policy, &input)?;
        history.push(policy.predict_chunk(&input, t)?)?;
        let action = ensemble_action(&history, t + 1, m)?;
        env.apply(&action)?;
        steps.push(StepRecord {
            decision: Decision::Infer,
            overlap: history.query(t + 1).len(),
            coverage: 0,
            cor: 0.0,
            action,
        });
        t += 1;
    }
    let n = steps.len();
    Ok(EpisodeReport {
        seed,
        success: env.succeeded(),
        subgoals: env.subgoals(),
        step_count: n,
        inference_count: n,
        skip_count: 0,
        cost_time_ms: latency.cost(n, n),
        steps,
    })
}
