//! `sril` command line: gen-demos, downsample, train, rollout, sweep.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sril_core::downsample::{Aggregation, DownsampleConfig, FilterConfig, Normalization, SpamConfig, DEFAULT_F_M};
use sril_core::executor::{LatencyModel, OffloadConfig, PredicateMode, DEFAULT_COT};
use sril_core::policy::TrainConfig;

use crate::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::dataset_io::{read_dataset, write_dataset};
use crate::eval::{aggregate, evaluate_summaries, log_space, sweep, EvalSetup, ExecMode};
use crate::pipeline::{self, insert_task_config, meta_gripper_joints, task_config_from_map, ConfigMap};
use crate::report::{render_downsample_report, render_loss_curve, render_rollout_report, render_sweep_table};
use crate::taskcfg::{read_task_config, TaskConfig};
use crate::write_text;

#[derive(Debug, Parser)]
#[command(name = "sril", version, about = "Importance-based demo downsampling and inference offloading for action-chunk policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record scripted-expert demonstrations.
    GenDemos(GenDemosArgs),
    /// Importance-based downsampling of a dataset.
    Downsample(DownsampleArgs),
    /// Train the MLP chunk regressor.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the offloading executor.
    Rollout(RolloutArgs),
    /// COT x MCOD grid of rollouts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Built-in task (cube_transfer or bimanual_restore).
    #[arg(long)]
    pub task: Option<String>,
    /// Task configuration file (`key = value` lines); conflicts with --task.
    #[arg(long, conflicts_with = "task")]
    pub task_config: Option<PathBuf>,
}

impl TaskArgs {
    fn resolve(&self) -> anyhow::Result<Option<TaskConfig>> {
        match (&self.task_config, &self.task) {
            (Some(path), _) => Ok(Some(read_task_config(path)?)),
            (None, Some(name)) => Ok(Some(TaskConfig::by_name(name)?)),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDemosArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Number of demonstrations.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// First seed; demos use seed .. seed + n - 1.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    #[value(name = "min_max")]
    MinMax,
    #[value(name = "z_score")]
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    #[value(name = "per_trajectory")]
    PerTrajectory,
    #[value(name = "aligned_mean")]
    AlignedMean,
}

#[derive(Debug, Args)]
pub struct DownsampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Report file (JSON).
    #[arg(long)]
    pub report: PathBuf,
    /// Minimum sampling frequency (Hz).
    #[arg(long, visible_alias = "fm", default_value_t = DEFAULT_F_M)]
    pub f_m: f64,
    /// Low-pass cutoff (Hz).
    #[arg(long, default_value_t = 0.5)]
    pub cutoff_hz: f64,
    #[arg(long, default_value_t = 2)]
    pub filter_order: usize,
    /// Forward-only filtering instead of zero-phase.
    #[arg(long)]
    pub causal: bool,
    /// SPAM weights: J joint-velocity weights then G gripper-force weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "min_max")]
    pub normalization: NormalizationArg,
    #[arg(long, value_enum, default_value = "per_trajectory")]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Checkpoint output.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-curve output (`epoch loss` per line).
    #[arg(long)]
    pub loss_curve: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Chunk length K.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Std of the Gaussian noise added to qvel inputs during training.
    #[arg(long, default_value_t = 0.2)]
    pub qvel_noise: f64,
    /// Joints predicted as absolute targets; defaults to the dataset's
    /// `gripper_joints` meta entry. Pass an empty string for none.
    #[arg(long, value_delimiter = ',')]
    pub absolute_joints: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "agreement_gated")]
    AgreementGated,
    #[value(name = "literal")]
    Literal,
}

impl From<ModeArg> for PredicateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AgreementGated => PredicateMode::AgreementGated,
            ModeArg::Literal => PredicateMode::Literal,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation task; defaults to the task stored in the checkpoint.
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, default_value_t = 50)]
    pub episodes: usize,
    /// Episodes use seeds seed-start .. seed-start + episodes - 1.
    #[arg(long, default_value_t = 1000)]
    pub seed_start: u64,
    /// Minimum overlapping predictions before a skip.
    #[arg(long, default_value_t = 3)]
    pub mced: usize,
    /// Ensemble decay rate.
    #[arg(long, default_value_t = 0.01)]
    pub m: f64,
    #[arg(long, value_enum, default_value = "agreement_gated")]
    pub mode: ModeArg,
    /// Modeled inference latency (ms).
    #[arg(long, default_value_t = 100.0)]
    pub l_inf: f64,
    /// Modeled control-step latency (ms).
    #[arg(long, default_value_t = 20.0)]
    pub l_step: f64,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Chunk-overlap threshold; negative never skips (agreement_gated).
    #[arg(long, default_value_t = DEFAULT_COT, allow_hyphen_values = true)]
    pub cot: f64,
    /// Maximum consecutive skips; defaults to K.
    #[arg(long)]
    pub mcod: Option<usize>,
    /// Plain executor: infer every step.
    #[arg(long)]
    pub no_offload: bool,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// COT values; default 8 log-spaced values in [0.01, 10].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub cots: Option<Vec<f64>>,
    /// MCOD values; default 1, 5, 10, K.
    #[arg(long, value_delimiter = ',')]
    pub mcods: Option<Vec<usize>>,
    /// Table output (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

/// Default COT grid of the sweep.
pub fn default_cots() -> Vec<f64> {
    log_space(0.01, 10.0, 8)
}

/// Default MCOD grid for chunk length `k`.
pub fn default_mcods(k: usize) -> Vec<usize> {
    let mut v = vec![1, 5, 10, k];
    v.sort_unstable();
    v.dedup();
    v
}

/// Runs a parsed command, writing the human-readable summary to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::GenDemos(a) => gen_demos(a, out),
        Command::Downsample(a) => downsample(a, out),
        Command::Train(a) => train(a, out),
        Command::Rollout(a) => rollout(a, out),
        Command::Sweep(a) => run_sweep(a, out),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| anyhow::anyhow!("{}", e.render().to_string().trim_end()))?;
    execute(cli, out)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn gen_demos(a: GenDemosArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if a.n == 0 {
        bail!("n must be positive");
    }
    let cfg = a.task.resolve()?.unwrap_or(TaskConfig::by_name("cube_transfer")?);
    let ds = pipeline::gen_demos(&cfg, a.n, a.seed)?;
    write_dataset(&a.out, &ds)?;
    let lens: Vec<usize> = ds.trajectories.iter().map(|t| t.len()).collect();
    writeln!(
        out,
        "gen-demos: {} demos of {} (seeds {}..={}), all successful, {} frames, length min {} / mean {:.1} / max {} -> {}",
        a.n,
        cfg.task.kind.name(),
        a.seed,
        a.seed + a.n as u64 - 1,
        ds.total_frames(),
        lens.iter().min().unwrap_or(&0),
        ds.total_frames() as f64 / a.n as f64,
        lens.iter().max().unwrap_or(&0),
        a.out.display()
    )?;
    Ok(())
}

fn downsample(a: DownsampleArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ds = read_dataset(&a.input)?;
    let cfg = DownsampleConfig {
        spam: SpamConfig {
            weights: a.weights.clone(),
            normalization: match a.normalization {
                NormalizationArg::MinMax => Normalization::MinMax,
                NormalizationArg::ZScore => Normalization::ZScore,
            },
            aggregation: match a.aggregation {
                AggregationArg::PerTrajectory => Aggregation::PerTrajectory,
                AggregationArg::AlignedMean => Aggregation::AlignedMean,
            },
        },
        filter: FilterConfig {
            order: a.filter_order,
            cutoff_hz: a.cutoff_hz,
            zero_phase: !a.causal,
        },
        f_m: a.f_m,
    };
    let (reduced, report) = pipeline::downsample(&ds, &cfg)?;
    write_dataset(&a.out, &reduced)?;
    let mut config = reduced.meta.clone();
    config.insert("input".into(), path_str(&a.input));
    config.insert("out".into(), path_str(&a.out));
    write_text(&a.report, &render_downsample_report(&config, &report))?;
    writeln!(
        out,
        "downsample: {} trajectories, {} -> {} frames (retained {:.1}%) -> {}",
        report.trajectories.len(),
        report.total_frames,
        report.retained_frames,
        100.0 * report.retained_fraction,
        a.out.display()
    )?;
    let hist: Vec<String> = report.stride_histogram.iter().map(|(s, c)| format!("{s}:{c}")).collect();
    writeln!(out, "stride histogram: {}", hist.join(" "))?;
    Ok(())
}

fn train(a: TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ds = read_dataset(&a.input)?;
    let absolute_joints = match &a.absolute_joints {
        None => meta_gripper_joints(&ds.meta)?,
        Some(v) => v
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad --absolute-joints entry `{s}`")))
            .collect::<anyhow::Result<_>>()?,
    };
    let cfg = TrainConfig {
        hidden: a.hidden,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed: a.seed,
        k: a.k,
        absolute_joints,
        qvel_noise_std: a.qvel_noise,
    };
    let (mut ckpt, outcome) = pipeline::train(&ds, &cfg)?;
    ckpt.config.insert("input".into(), path_str(&a.input));
    write_checkpoint(&a.out, &ckpt)?;
    write_text(
        &a.loss_curve,
        &render_loss_curve(&ckpt.config, outcome.initial_loss, &outcome.loss_curve),
    )?;
    let last = outcome.loss_curve.last().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "train: {} epochs on {} frames, loss {:.6} -> {:.6} ({:.2}% of initial) -> {}",
        cfg.epochs,
        ds.total_frames(),
        outcome.initial_loss,
        last,
        100.0 * last / outcome.initial_loss,
        a.out.display()
    )?;
    Ok(())
}

/// Checkpoint, evaluation task and seeds shared by rollout and sweep.
struct EvalContext {
    ckpt: Checkpoint,
    task: TaskConfig,
    latency: LatencyModel,
    seeds: Vec<u64>,
    config: ConfigMap,
}

fn eval_context(e: &EvalArgs) -> anyhow::Result<EvalContext> {
    if e.episodes == 0 {
        bail!("episodes must be positive");
    }
    let ckpt = read_checkpoint(&e.checkpoint)?;
    let task = match e.task.resolve()? {
        Some(t) => t,
        None => match task_config_from_map(&ckpt.config)? {
            Some(t) => t,
            None => TaskConfig::by_name(&ckpt.task)
                .with_context(|| format!("checkpoint names unknown task `{}`; pass --task", ckpt.task))?,
        },
    };
    let latency = LatencyModel {
        l_inf: e.l_inf,
        l_step: e.l_step,
    };
    if !(latency.l_inf.is_finite() && latency.l_inf >= 0.0 && latency.l_step.is_finite() && latency.l_step >= 0.0) {
        bail!("latencies must be finite and non-negative");
    }
    let last = e
        .seed_start
        .checked_add(e.episodes as u64 - 1)
        .context("seed range overflows u64")?;
    let mut config = ConfigMap::new();
    config.insert("checkpoint".into(), path_str(&e.checkpoint));
    config.insert("episodes".into(), e.episodes.to_string());
    config.insert("seed_start".into(), e.seed_start.to_string());
    config.insert("k".into(), ckpt.model.k.to_string());
    config.insert("mced".into(), e.mced.to_string());
    config.insert("m".into(), format!("{}", e.m));
    config.insert("mode".into(), PredicateMode::from(e.mode).name().into());
    config.insert("l_inf".into(), format!("{}", e.l_inf));
    config.insert("l_step".into(), format!("{}", e.l_step));
    insert_task_config(&mut config, &task);
    Ok(EvalContext {
        seeds: (e.seed_start..=last).collect(),
        ckpt,
        task,
        latency,
        config,
    })
}

fn base_offload(e: &EvalArgs, k: usize) -> OffloadConfig {
    OffloadConfig {
        mced: e.mced,
        m: e.m,
        mode: e.mode.into(),
        ..OffloadConfig::for_horizon(k)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.1}"))
}

fn rollout(a: RolloutArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut ctx = eval_context(&a.eval)?;
    let k = ctx.ckpt.model.k;
    let mode = if a.no_offload {
        if !(a.eval.m.is_finite() && a.eval.m >= 0.0) {
            bail!("m must be finite and non-negative");
        }
        ctx.config.insert("executor".into(), "no_offload".into());
        ExecMode::NoOffload { m: a.eval.m }
    } else {
        let cfg = OffloadConfig {
            cot: a.cot,
            mcod: a.mcod.unwrap_or(k),
            ..base_offload(&a.eval, k)
        };
        cfg.validate()?;
        ctx.config.insert("executor".into(), "offload".into());
        ctx.config.insert("cot".into(), format!("{}", cfg.cot));
        ctx.config.insert("mcod".into(), cfg.mcod.to_string());
        ExecMode::Offload(cfg)
    };
    let setup = EvalSetup {
        task: &ctx.task.task,
        stats: &ctx.ckpt.stats,
        latency: ctx.latency,
        mode,
    };
    let episodes = evaluate_summaries(&ctx.ckpt.model, &setup, &ctx.seeds)?;
    let agg = aggregate(&episodes);
    write_text(&a.out, &render_rollout_report(&ctx.config, &agg, &episodes))?;
    writeln!(
        out,
        "rollout: {}/{} successful ({:.1}%), mean inference_count {:.2}, mean steps {:.1}, mean skip fraction {:.3}, mean cost_time (successful) {} ms -> {}",
        agg.successes,
        agg.episodes,
        100.0 * agg.success_rate,
        agg.mean_inference_count,
        agg.mean_step_count,
        agg.mean_skip_fraction,
        fmt_opt(agg.mean_cost_time_ms),
        a.out.display()
    )?;
    Ok(())
}

fn run_sweep(a: SweepArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut ctx = eval_context(&a.eval)?;
    let k = ctx.ckpt.model.k;
    let cots = a.cots.clone().unwrap_or_else(default_cots);
    let mcods = a.mcods.clone().unwrap_or_else(|| default_mcods(k));
    if cots.is_empty() || mcods.is_empty() {
        bail!("sweep grid is empty");
    }
    let join = |v: Vec<String>| v.join(",");
    ctx.config.insert("cots".into(), join(cots.iter().map(|c| format!("{c}")).collect()));
    ctx.config.insert("mcods".into(), join(mcods.iter().map(|c| c.to_string()).collect()));
    let base = base_offload(&a.eval, k);
    let setup = EvalSetup {
        task: &ctx.task.task,
        stats: &ctx.ckpt.stats,
        latency: ctx.latency,
        mode: ExecMode::Offload(base),
    };
    let cells = sweep(&ctx.ckpt.model, &setup, base, &cots, &mcods, &ctx.seeds)?;
    write_text(&a.out, &render_sweep_table(&ctx.config, &cells))?;
    writeln!(out, "sweep: {} cells x {} episodes -> {}", cells.len(), ctx.seeds.len(), a.out.display())?;
    writeln!(out, "{:>5} {:>10} {:>8} {:>12} {:>10} {:>6}", "mcod", "cot", "success", "cost_ms", "inferences", "skip")?;
    for c in &cells {
        let g = &c.aggregate;
        writeln!(
            out,
            "{:>5} {:>10.4} {:>7.1}% {:>12} {:>10.2} {:>6.3}",
            c.mcod,
            c.cot,
            100.0 * g.success_rate,
            fmt_opt(g.mean_cost_time_ms),
            g.mean_inference_count,
            g.mean_skip_fraction
        )?;
    }
    Ok(())
}
