//! Parallel episode evaluation with results merged in seed order.

use rayon::prelude::*;
use serde::Serialize;
use sril_core::executor::{run_episode, run_plain_episode, Decision, EpisodeReport, LatencyModel, OffloadConfig};
use sril_core::policy::ChunkPolicy;
use sril_core::sim::{SimEpisode, TaskSpec};
use sril_core::types::ActionStats;

/// How the executor runs: the skip/infer state machine, or the plain
/// executor that infers every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecMode {
    Offload(OffloadConfig),
    NoOffload { m: f64 },
}

/// Everything needed to evaluate a policy over a seed list.
#[derive(Debug, Clone)]
pub struct EvalSetup<'a> {
    pub task: &'a TaskSpec,
    pub stats: &'a ActionStats,
    pub latency: LatencyModel,
    pub mode: ExecMode,
}

/// Per-episode record without the action trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub success: bool,
    pub subgoals: Vec<bool>,
    pub step_count: usize,
    pub inference_count: usize,
    pub skip_count: usize,
    pub cost_time_ms: f64,
    pub max_skip_run: usize,
    /// Skip steps whose run length exceeded `min(mcod, coverage)`.
    pub guard_violations: usize,
}

impl EpisodeSummary {
    pub fn from_report(r: &EpisodeReport, mcod: usize) -> Self {
        let mut run = 0u64;
        let mut violations = 0;
        for s in &r.steps {
            if s.decision == Decision::Skip {
                run += 1;
                if run > mcod as u64 || run > s.coverage {
                    violations += 1;
                }
            } else {
                run = 0;
            }
        }
        EpisodeSummary {
            seed: r.seed,
            success: r.success,
            subgoals: r.subgoals.clone(),
            step_count: r.step_count,
            inference_count: r.inference_count,
            skip_count: r.skip_count,
            cost_time_ms: r.cost_time_ms,
            max_skip_run: r.skip_runs().into_iter().max().unwrap_or(0),
            guard_violations: violations,
        }
    }
}

/// Runs one episode per seed; the output is in the order of `seeds`.
pub fn evaluate<P: ChunkPolicy + Sync>(
    policy: &P,
    setup: &EvalSetup<'_>,
    seeds: &[u64],
) -> sril_core::Result<Vec<EpisodeReport>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut env = SimEpisode::new(setup.task.clone(), seed)?;
            match setup.mode {
                ExecMode::Offload(cfg) => run_episode(policy, &mut env, &cfg, setup.stats, &setup.latency, seed),
                ExecMode::NoOffload { m } => run_plain_episode(policy, &mut env, m, &setup.latency, seed),
            }
        })
        .collect()
}

/// Like [`evaluate`] but keeps only the per-episode summaries.
pub fn evaluate_summaries<P: ChunkPolicy + Sync>(
    policy: &P,
    setup: &EvalSetup<'_>,
    seeds: &[u64],
) -> sril_core::Result<Vec<EpisodeSummary>> {
    let mcod = match setup.mode {
        ExecMode::Offload(cfg) => cfg.mcod,
        ExecMode::NoOffload { .. } => 0,
    };
    seeds
        .par_iter()
        .map(|&seed| {
            let r = evaluate(policy, setup, &[seed])?.remove(0);
            Ok(EpisodeSummary::from_report(&r, mcod))
        })
        .collect()
}

/// Aggregate statistics over a set of episodes. Cost time is averaged over
/// successful episodes only, as in the paper's protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// `None` when no episode succeeded.
    pub mean_cost_time_ms: Option<f64>,
    pub mean_inference_count: f64,
    pub mean_step_count: f64,
    pub mean_skip_fraction: f64,
    /// Means over the successful episodes, from which `mean_cost_time_ms`
    /// follows as `l_inf * inferences + l_step * steps`.
    pub success_mean_inference_count: Option<f64>,
    pub success_mean_step_count: Option<f64>,
}

pub fn aggregate(episodes: &[EpisodeSummary]) -> Aggregate {
    let n = episodes.len();
    let mean = |f: &dyn Fn(&EpisodeSummary) -> f64, subset: &[&EpisodeSummary]| -> Option<f64> {
        if subset.is_empty() {
            None
        } else {
            Some(subset.iter().map(|e| f(e)).sum::<f64>() / subset.len() as f64)
        }
    };
    let all: Vec<&EpisodeSummary> = episodes.iter().collect();
    let ok: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.success).collect();
    Aggregate {
        episodes: n,
        successes: ok.len(),
        success_rate: if n == 0 { 0.0 } else { ok.len() as f64 / n as f64 },
        mean_cost_time_ms: mean(&|e| e.cost_time_ms, &ok),
        mean_inference_count: mean(&|e| e.inference_count as f64, &all).unwrap_or(0.0),
        mean_step_count: mean(&|e| e.step_count as f64, &all).unwrap_or(0.0),
        mean_skip_fraction: mean(&|e| e.skip_count as f64 / e.step_count.max(1) as f64, &all).unwrap_or(0.0),
        success_mean_inference_count: mean(&|e| e.inference_count as f64, &ok),
        success_mean_step_count: mean(&|e| e.step_count as f64, &ok),
    }
}

/// One cell of a COT × MCOD sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub cot: f64,
    pub mcod: usize,
    pub aggregate: Aggregate,
    pub episodes: Vec<EpisodeSummary>,
}

/// Full factorial sweep; cells are sorted by `(mcod, cot)`. Every other
/// offload parameter comes from `base`.
pub fn sweep<P: ChunkPolicy + Sync>(
    policy: &P,
    setup: &EvalSetup<'_>,
    base: OffloadConfig,
    cots: &[f64],
    mcods: &[usize],
    seeds: &[u64],
) -> anyhow::Result<Vec<SweepCell>> {
    if cots.is_empty() || mcods.is_empty() {
        anyhow::bail!("sweep grid is empty (cots: {}, mcods: {})", cots.len(), mcods.len());
    }
    let mut cots = cots.to_vec();
    cots.sort_by(f64::total_cmp);
    cots.dedup();
    let mut mcods = mcods.to_vec();
    mcods.sort_unstable();
    mcods.dedup();
    let mut cells = Vec::with_capacity(cots.len() * mcods.len());
    for &mcod in &mcods {
        for &cot in &cots {
            let cfg = OffloadConfig { cot, mcod, ..base };
            cfg.validate()?;
            let cell_setup = EvalSetup {
                mode: ExecMode::Offload(cfg),
                ..setup.clone()
            };
            let episodes = evaluate_summaries(policy, &cell_setup, seeds)?;
            cells.push(SweepCell {
                cot,
                mcod,
                aggregate: aggregate(&episodes),
                episodes,
            });
        }
    }
    Ok(cells)
}

/// `n` values spaced evenly in log between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| match i {
                0 => lo,
                _ if i == n - 1 => hi,
                _ => {
                    let f = i as f64 / (n - 1) as f64;
                    (lo.ln() + f * (hi.ln() - lo.ln())).exp()
                }
            })
            .collect(),
    }
}
