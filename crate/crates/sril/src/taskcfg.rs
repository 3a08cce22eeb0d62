//! Declarative task configuration: one `key = value` pair per line, `#`
//! starts a comment. `task = <name>` selects the built-in defaults that the
//! remaining keys override. Vectors are comma-separated; `objects` separates
//! points with `;`.
//!
//! ```text
//! task = cube_transfer
//! grasp_radius = 0.011
//! goal = -0.2, 0.12
//! right.links = 0.3, 0.25
//! expert.approach_speed = 0.03
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sril_core::sim::{ArmModel, ExpertParams, TaskSpec, LEFT, RIGHT};

use crate::FormatError;

/// Task plus the scripted expert that demonstrates it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub task: TaskSpec,
    pub expert: ExpertParams,
}

impl TaskConfig {
    pub fn by_name(name: &str) -> sril_core::Result<Self> {
        Ok(TaskConfig {
            task: TaskSpec::by_name(name)?,
            expert: ExpertParams::default(),
        })
    }
}

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        line,
        message: message.into(),
    }
}

fn numbers(value: &str, n: usize, key: &str, line: usize) -> Result<Vec<f64>, FormatError> {
    let parsed: Result<Vec<f64>, _> = value.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match parsed {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(err(line, format!("`{key}` expects {n} finite number(s), got `{value}`"))),
    }
}

fn scalar(value: &str, key: &str, line: usize) -> Result<f64, FormatError> {
    Ok(numbers(value, 1, key, line)?[0])
}

fn point(value: &str, key: &str, line: usize) -> Result<[f64; 2], FormatError> {
    let v = numbers(value, 2, key, line)?;
    Ok([v[0], v[1]])
}

fn set_arm(arm: &mut ArmModel, home: &mut [f64; 2], field: &str, value: &str, key: &str, line: usize) -> Result<(), FormatError> {
    match field {
        "base" => arm.base = point(value, key, line)?,
        "base_angle" => arm.base_angle = scalar(value, key, line)?,
        "links" => arm.links = point(value, key, line)?,
        "joint_limits" => {
            let v = numbers(value, 4, key, line)?;
            arm.joint_limits = [[v[0], v[1]], [v[2], v[3]]];
        }
        "max_joint_speed" => arm.max_joint_speed = scalar(value, key, line)?,
        "max_grip_speed" => arm.max_grip_speed = scalar(value, key, line)?,
        "home" => *home = point(value, key, line)?,
        _ => return Err(err(line, format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn set_expert(p: &mut ExpertParams, field: &str, value: &str, key: &str, line: usize) -> Result<(), FormatError> {
    let v = scalar(value, key, line)?;
    match field {
        "transit_speed" => p.transit_speed = v,
        "transit_accel" => p.transit_accel = v,
        "approach_speed" => p.approach_speed = v,
        "approach_accel" => p.approach_accel = v,
        "lift_speed" => p.lift_speed = v,
        "hover" => p.hover = v,
        "lift_top" => p.lift_top = v,
        "close_tol" => p.close_tol = v,
        "arrive_tol" => p.arrive_tol = v,
        _ => return Err(err(line, format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Parses a configuration file body.
pub fn parse_task_config(text: &str) -> Result<TaskConfig, FormatError> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if let Some(prev) = seen.insert(k.clone(), line) {
            return Err(err(line, format!("duplicate key `{k}` (first set on line {prev})")));
        }
        pairs.push((line, k, v));
    }
    let name = pairs
        .iter()
        .find(|(_, k, _)| k == "task")
        .map(|(_, _, v)| v.as_str())
        .ok_or_else(|| err(0, "missing required key `task`"))?;
    let mut cfg = TaskConfig::by_name(name).map_err(|e| err(seen["task"], e.to_string()))?;
    let (task, expert) = (&mut cfg.task, &mut cfg.expert);
    for (line, key, value) in &pairs {
        let (line, key, value) = (*line, key.as_str(), value.as_str());
        match key {
            "task" => {}
            "fs_hz" => task.fs_hz = scalar(value, key, line)?,
            "step_limit" => {
                task.step_limit = value
                    .parse()
                    .map_err(|_| err(line, format!("`step_limit` expects a non-negative integer, got `{value}`")))?
            }
            "randomization" => task.randomization = scalar(value, key, line)?,
            "tolerance" => task.tolerance = scalar(value, key, line)?,
            "grasp_radius" => task.grasp_radius = scalar(value, key, line)?,
            "lift_height" => task.lift_height = scalar(value, key, line)?,
            "spring" => task.spring = scalar(value, key, line)?,
            "obs_noise" => task.obs_noise = scalar(value, key, line)?,
            "goal" => task.goal = point(value, key, line)?,
            "meet" => task.meet = point(value, key, line)?,
            "standby" => task.standby = point(value, key, line)?,
            "slot" => task.slot = point(value, key, line)?,
            "objects" => {
                task.objects = value
                    .split(';')
                    .map(|p| point(p, key, line))
                    .collect::<Result<_, _>>()?
            }
            _ => {
                let (scope, field) = key
                    .split_once('.')
                    .ok_or_else(|| err(line, format!("unknown key `{key}`")))?;
                match scope {
                    "right" => set_arm(&mut task.arms[RIGHT], &mut task.home[RIGHT], field, value, key, line)?,
                    "left" => set_arm(&mut task.arms[LEFT], &mut task.home[LEFT], field, value, key, line)?,
                    "expert" => set_expert(expert, field, value, key, line)?,
                    _ => return Err(err(line, format!("unknown key `{key}`"))),
                }
            }
        }
    }
    task.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

/// Every key with its effective value, in a fixed order. Parsing the result
/// gives back the same configuration.
pub fn task_config_pairs(cfg: &TaskConfig) -> Vec<(String, String)> {
    let t = &cfg.task;
    let p = &cfg.expert;
    let mut out: Vec<(String, String)> = vec![
        ("task".into(), t.kind.name().into()),
        ("fs_hz".into(), format!("{}", t.fs_hz)),
        ("step_limit".into(), t.step_limit.to_string()),
        (
            "objects".into(),
            t.objects.iter().map(|o| join(o)).collect::<Vec<_>>().join("; "),
        ),
        ("randomization".into(), format!("{}", t.randomization)),
        ("goal".into(), join(&t.goal)),
        ("tolerance".into(), format!("{}", t.tolerance)),
        ("grasp_radius".into(), format!("{}", t.grasp_radius)),
        ("lift_height".into(), format!("{}", t.lift_height)),
        ("spring".into(), format!("{}", t.spring)),
        ("obs_noise".into(), format!("{}", t.obs_noise)),
        ("meet".into(), join(&t.meet)),
        ("standby".into(), join(&t.standby)),
        ("slot".into(), join(&t.slot)),
    ];
    for (name, i) in [("right", RIGHT), ("left", LEFT)] {
        let a = &t.arms[i];
        let l = a.joint_limits;
        out.extend([
            (format!("{name}.base"), join(&a.base)),
            (format!("{name}.base_angle"), format!("{}", a.base_angle)),
            (format!("{name}.links"), join(&a.links)),
            (format!("{name}.joint_limits"), join(&[l[0][0], l[0][1], l[1][0], l[1][1]])),
            (format!("{name}.max_joint_speed"), format!("{}", a.max_joint_speed)),
            (format!("{name}.max_grip_speed"), format!("{}", a.max_grip_speed)),
            (format!("{name}.home"), join(&t.home[i])),
        ]);
    }
    for (k, v) in [
        ("transit_speed", p.transit_speed),
        ("transit_accel", p.transit_accel),
        ("approach_speed", p.approach_speed),
        ("approach_accel", p.approach_accel),
        ("lift_speed", p.lift_speed),
        ("hover", p.hover),
        ("lift_top", p.lift_top),
        ("close_tol", p.close_tol),
        ("arrive_tol", p.arrive_tol),
    ] {
        out.push((format!("expert.{k}"), format!("{v}")));
    }
    out
}

pub fn render_task_config(cfg: &TaskConfig) -> String {
    let mut s = String::new();
    for (k, v) in task_config_pairs(cfg) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn read_task_config(path: &Path) -> anyhow::Result<TaskConfig> {
    let text = crate::read_text(path)?;
    parse_task_config(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendered_config_parses_back_identically() {
        for name in ["cube_transfer", "bimanual_restore"] {
            let cfg = TaskConfig::by_name(name).unwrap();
            let text = render_task_config(&cfg);
            assert_eq!(parse_task_config(&text).unwrap(), cfg, "{name}");
        }
    }

    #[test]
    fn keys_override_defaults() {
        let text = "# custom arm\ntask = cube_transfer\ngrasp_radius = 0.02  # looser\nright.links = 0.31, 0.24\nleft.joint_limits = -3, 3, -2.5, 2.5\nexpert.approach_speed = 0.05\nstep_limit = 900\nobjects = 0.1, 0.05\n";
        let cfg = parse_task_config(text).unwrap();
        assert_eq!(cfg.task.grasp_radius, 0.02);
        assert_eq!(cfg.task.arms[RIGHT].links, [0.31, 0.24]);
        assert_eq!(cfg.task.arms[LEFT].joint_limits, [[-3.0, 3.0], [-2.5, 2.5]]);
        assert_eq!(cfg.expert.approach_speed, 0.05);
        assert_eq!(cfg.task.step_limit, 900);
        assert_eq!(cfg.task.objects, vec![[0.1, 0.05]]);
        let again = parse_task_config(&render_task_config(&cfg)).unwrap();
        assert_eq!(again, cfg);
    }

    fn line_of(text: &str) -> usize {
        match parse_task_config(text).unwrap_err() {
            FormatError::Invalid { line, .. } => line,
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(line_of("task = cube_transfer\n\nbogus = 1\n"), 3);
        assert_eq!(line_of("task = cube_transfer\ngoal = 1\n"), 2);
        assert_eq!(line_of("task = cube_transfer\nspring = 1\nspring = 2\n"), 3);
        assert_eq!(line_of("task = cube_transfer\nno equals sign\n"), 2);
        assert_eq!(line_of("task = cube_transfer\nright.elbow = 1\n"), 2);
        assert_eq!(line_of("task = cube_transfer\nstep_limit = -4\n"), 2);
        assert_eq!(line_of("task = nope\n"), 1);
        assert_eq!(line_of("tolerance = 0.1\n"), 0);
    }

    #[test]
    fn semantically_invalid_config_is_rejected() {
        let err = parse_task_config("task = cube_transfer\nright.links = -1, 0.2\n").unwrap_err();
        assert!(matches!(err, FormatError::Invalid { line: 0, .. }), "{err}");
        assert!(!err.to_string().starts_with("line"), "{err}");
        assert!(parse_task_config("task = cube_transfer\nfs_hz = nan\n").is_err());
    }
}

#[cfg(test)]
mod shipped_config {
    use super::*;

    #[test]
    fn example_file_matches_built_in_task() {
        let text = include_str!("../../../configs/cube_transfer.cfg");
        assert_eq!(parse_task_config(text).unwrap(), TaskConfig::by_name("cube_transfer").unwrap());
    }
}
