//! Text renderers for the output files. Each embeds the full effective
//! configuration: JSON documents under a `config` key, line-oriented tables
//! in a leading `# config: {...}` comment.

use std::fmt::Write as _;

use serde::Serialize;

use crate::eval::{Aggregate, EpisodeSummary, SweepCell};
use crate::pipeline::{ConfigMap, DownsampleReport};

fn config_json(config: &ConfigMap) -> String {
    serde_json::to_string(config).expect("config serializes")
}

/// Loss curve: comment header, then one `epoch loss` line per epoch
/// (epochs counted from 1).
pub fn render_loss_curve(config: &ConfigMap, initial_loss: f64, curve: &[f64]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# sril train loss curve");
    let _ = writeln!(s, "# config: {}", config_json(config));
    let _ = writeln!(s, "# initial_loss: {initial_loss:?}");
    let _ = writeln!(s, "# epoch loss");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(s, "{} {l:?}", i + 1);
    }
    s
}

/// Parses the data lines of a loss curve file.
pub fn parse_loss_curve(text: &str) -> anyhow::Result<Vec<(usize, f64)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| {
            let mut it = l.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(e), Some(v), None) => Ok((e.parse()?, v.parse()?)),
                _ => anyhow::bail!("line {}: expected `epoch loss`", i + 1),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    command: &'static str,
    config: &'a ConfigMap,
    #[serde(flatten)]
    body: T,
}

fn document<T: Serialize>(command: &'static str, config: &ConfigMap, body: T) -> String {
    let mut s = serde_json::to_string_pretty(&Document { command, config, body }).expect("report serializes");
    s.push('\n');
    s
}

pub fn render_downsample_report(config: &ConfigMap, report: &DownsampleReport) -> String {
    document("downsample", config, report)
}

#[derive(Serialize)]
struct RolloutBody<'a> {
    aggregate: &'a Aggregate,
    episodes: &'a [EpisodeSummary],
}

pub fn render_rollout_report(config: &ConfigMap, aggregate: &Aggregate, episodes: &[EpisodeSummary]) -> String {
    document("rollout", config, RolloutBody { aggregate, episodes })
}

pub const SWEEP_COLUMNS: &str = "mcod,cot,success_rate,mean_cost_time_ms,mean_inference_count,mean_skip_fraction,episodes,successes,max_skip_run,guard_violations";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:?}"))
}

/// Sweep table as CSV, rows in the order given (sorted by `(mcod, cot)`).
/// A cell with no successful episode has `nan` mean cost time.
pub fn render_sweep_table(config: &ConfigMap, cells: &[SweepCell]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# sril sweep");
    let _ = writeln!(s, "# config: {}", config_json(config));
    let _ = writeln!(s, "{SWEEP_COLUMNS}");
    for c in cells {
        let a = &c.aggregate;
        let _ = writeln!(
            s,
            "{},{:?},{:?},{},{:?},{:?},{},{},{},{}",
            c.mcod,
            c.cot,
            a.success_rate,
            opt(a.mean_cost_time_ms),
            a.mean_inference_count,
            a.mean_skip_fraction,
            a.episodes,
            a.successes,
            c.episodes.iter().map(|e| e.max_skip_run).max().unwrap_or(0),
            c.episodes.iter().map(|e| e.guard_violations).sum::<usize>(),
        );
    }
    s
}
