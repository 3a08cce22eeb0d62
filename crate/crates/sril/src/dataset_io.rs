//! Newline-delimited dataset format.
//!
//! Line 1 is a header `{"format":"sril-ds","version":1,"J":..,"G":..,"meta":{..}}`;
//! every following line is one trajectory record
//! `{"id","fs_hz","layout":[[name,offset,len]..],"frames":[{"t","obs","qpos","qvel","eeft","action_pos","action_vel"}..]}`.
//! Numbers are written in the shortest decimal form that parses back to the
//! identical `f64`, so a round trip is exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sril_core::types::{
    validate_trajectory, Action, Dataset, Frame, LayoutEntry, ObsLayout, Observation, SensoryState, Trajectory,
};

use crate::FormatError;

pub const FORMAT: &str = "sril-ds";
pub const VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u64,
    #[serde(rename = "J")]
    j: usize,
    #[serde(rename = "G")]
    g: usize,
    meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    fs_hz: f64,
    layout: Vec<(String, usize, usize)>,
    frames: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: u64,
    obs: Vec<f64>,
    qpos: Vec<f64>,
    qvel: Vec<f64>,
    eeft: Vec<f64>,
    action_pos: Vec<f64>,
    action_vel: Vec<f64>,
}

impl From<&Trajectory> for Record {
    fn from(t: &Trajectory) -> Self {
        Record {
            id: t.id.clone(),
            fs_hz: t.fs_hz,
            layout: t.layout.entries.iter().map(|e| (e.name.clone(), e.offset, e.len)).collect(),
            frames: t
                .frames
                .iter()
                .map(|f| FrameRecord {
                    t: f.t,
                    obs: f.obs.features.clone(),
                    qpos: f.state.qpos.clone(),
                    qvel: f.state.qvel.clone(),
                    eeft: f.state.eeft.clone(),
                    action_pos: f.action.target_pos.clone(),
                    action_vel: f.action.target_vel.clone(),
                })
                .collect(),
        }
    }
}

impl From<Record> for Trajectory {
    fn from(r: Record) -> Self {
        Trajectory {
            id: r.id,
            fs_hz: r.fs_hz,
            layout: ObsLayout {
                entries: r
                    .layout
                    .into_iter()
                    .map(|(name, offset, len)| LayoutEntry { name, offset, len })
                    .collect(),
            },
            frames: r
                .frames
                .into_iter()
                .map(|f| Frame {
                    t: f.t,
                    obs: Observation { features: f.obs },
                    state: SensoryState {
                        qpos: f.qpos,
                        qvel: f.qvel,
                        eeft: f.eeft,
                    },
                    action: Action::new(f.action_pos, f.action_vel),
                })
                .collect(),
        }
    }
}

/// Serializes a dataset: header line, then one line per trajectory.
pub fn encode_dataset(ds: &Dataset) -> String {
    let first = ds.trajectories.first();
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        j: first.map_or(0, Trajectory::joints),
        g: first.map_or(0, Trajectory::grippers),
        meta: ds.meta.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for t in &ds.trajectories {
        out.push_str(&serde_json::to_string(&Record::from(t)).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn parse_line<T: serde::de::DeserializeOwned>(line: &str, number: usize) -> Result<T, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        FormatError::Malformed {
            line: number,
            path: if path == "." { "<record>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// Parses a dataset and checks every trajectory against the header and the
/// typed invariants.
pub fn decode_dataset(text: &str) -> Result<Dataset, FormatError> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let header_line = lines.first().ok_or(FormatError::Truncated {
        last_complete: "none (no header)".into(),
    })?;
    if !header_line.ends_with('\n') {
        return Err(FormatError::Truncated {
            last_complete: "none (header incomplete)".into(),
        });
    }
    // Check identity and version before the strict parse so that a future
    // version with different fields still reports the version mismatch.
    let raw: serde_json::Value = serde_json::from_str(header_line).map_err(|e| FormatError::Malformed {
        line: 1,
        path: "<header>".into(),
        message: e.to_string(),
    })?;
    match raw.get("format").and_then(|v| v.as_str()) {
        Some(FORMAT) => {}
        other => {
            return Err(FormatError::Format {
                expected: FORMAT,
                found: other.unwrap_or("<missing>").to_string(),
            })
        }
    }
    match raw.get("version") {
        Some(v) if v.as_u64() == Some(VERSION) => {}
        other => {
            return Err(FormatError::Version {
                expected: VERSION,
                found: other.map_or("<missing>".into(), |v| v.to_string()),
            })
        }
    }
    let header: Header = parse_line(header_line, 1)?;
    let mut trajectories = Vec::with_capacity(lines.len() - 1);
    let mut last_complete = "header (line 1)".to_string();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let number = i + 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            if complete {
                continue;
            }
            break;
        }
        let record: Record = match parse_line(line, number) {
            Ok(r) => r,
            Err(_) if !complete => return Err(FormatError::Truncated { last_complete }),
            Err(e) => return Err(e),
        };
        let traj = Trajectory::from(record);
        check_trajectory(&traj, &header, number)?;
        last_complete = format!("{} (line {number})", traj.id);
        trajectories.push(traj);
    }
    Ok(Dataset {
        trajectories,
        meta: header.meta,
    })
}

fn check_trajectory(traj: &Trajectory, header: &Header, line: usize) -> Result<(), FormatError> {
    let invalid = |message: String| FormatError::Invalid { line, message };
    if let Some(v) = validate_trajectory(traj).first() {
        return Err(invalid(format!("trajectory {}: {v}", traj.id)));
    }
    if traj.joints() != header.j {
        return Err(invalid(format!("J = {} but header says {}", traj.joints(), header.j)));
    }
    if traj.grippers() != header.g {
        return Err(invalid(format!("G = {} but header says {}", traj.grippers(), header.g)));
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let text = crate::read_text(path)?;
    decode_dataset(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> anyhow::Result<()> {
    crate::write_text(path, &encode_dataset(ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sril_core::sim::{generate_demo, ExpertParams, TaskSpec};

    fn sample() -> Dataset {
        let task = TaskSpec::cube_transfer();
        let trajectories = (0..2)
            .map(|s| generate_demo(&task, &ExpertParams::default(), s).unwrap().trajectory)
            .collect();
        let mut meta = BTreeMap::new();
        meta.insert("task".to_string(), "cube_transfer".to_string());
        Dataset { trajectories, meta }
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = sample();
        let text = encode_dataset(&ds);
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(r#"{"format":"sril-ds","version":1,"J":6,"G":2,"meta":"#));
        let back = decode_dataset(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(encode_dataset(&back), text);
    }

    #[test]
    fn awkward_floats_round_trip_bit_for_bit() {
        let mut ds = sample();
        let f = &mut ds.trajectories[0].frames[0];
        f.obs.features[0] = 0.1 + 0.2;
        f.obs.features[1] = 1e-300;
        f.state.qvel[0] = -123456789.0 / 7.0;
        f.action.target_pos[0] = std::f64::consts::PI;
        let back = decode_dataset(&encode_dataset(&ds)).unwrap();
        let (a, b) = (&ds.trajectories[0].frames[0], &back.trajectories[0].frames[0]);
        assert_eq!(a.obs.features[0].to_bits(), b.obs.features[0].to_bits());
        assert_eq!(a.obs.features[1].to_bits(), b.obs.features[1].to_bits());
        assert_eq!(a.state.qvel[0].to_bits(), b.state.qvel[0].to_bits());
        assert_eq!(a.action.target_pos[0].to_bits(), b.action.target_pos[0].to_bits());
    }

    #[test]
    fn malformed_field_reports_line_and_path() {
        let text = encode_dataset(&sample());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = lines[2].replacen(r#""qvel":["#, r#""qvel":["oops","#, 1);
        let bad = lines.join("\n") + "\n";
        match decode_dataset(&bad) {
            Err(FormatError::Malformed { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "frames[0].qvel[0]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_reported() {
        let bad = "{\"format\":\"sril-ds\",\"version\":1,\"J\":1,\"G\":1,\"meta\":{}}\n{\"id\":\"x\",\"fs_hz\":50,\"layout\":[]}\n";
        let err = decode_dataset(bad).unwrap_err();
        assert!(matches!(err, FormatError::Malformed { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("frames"), "{err}");
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let text = encode_dataset(&sample()).replacen(r#""version":1"#, r#""version":7"#, 1);
        let err = decode_dataset(&text).unwrap_err();
        assert_eq!(
            err,
            FormatError::Version {
                expected: 1,
                found: "7".into()
            }
        );
        let msg = err.to_string();
        assert!(msg.contains("expected 1") && msg.contains("found 7"), "{msg}");
    }

    #[test]
    fn foreign_format_is_rejected() {
        let err = decode_dataset("{\"format\":\"other\",\"version\":1}\n").unwrap_err();
        assert!(matches!(err, FormatError::Format { .. }), "{err}");
    }

    #[test]
    fn truncation_names_last_complete_record() {
        let text = encode_dataset(&sample());
        let cut = &text[..text.len() - 200];
        match decode_dataset(cut) {
            Err(FormatError::Truncated { last_complete }) => {
                assert!(last_complete.contains("cube_transfer-0"), "{last_complete}");
                assert!(last_complete.contains("line 2"), "{last_complete}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let header_only = &text[..20];
        assert!(matches!(decode_dataset(header_only), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_dataset(""), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn header_dimensions_are_enforced() {
        let text = encode_dataset(&sample()).replacen(r#""J":6"#, r#""J":5"#, 1);
        let err = decode_dataset(&text).unwrap_err();
        assert!(matches!(err, FormatError::Invalid { line: 2, .. }), "{err}");
    }

    #[test]
    fn invalid_trajectory_is_rejected() {
        let mut ds = sample();
        ds.trajectories[1].frames[3].t = 0;
        let err = decode_dataset(&encode_dataset(&ds)).unwrap_err();
        assert!(matches!(err, FormatError::Invalid { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = Dataset::default();
        assert_eq!(decode_dataset(&encode_dataset(&ds)).unwrap(), ds);
    }
}
