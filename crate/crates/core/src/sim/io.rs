//! JSON-lines frame files and JSON ground-truth / odometry files.
//!
//! One frame per line:
//! `{"agent":"agent0","t":1200,"boxes":[[x,y,yaw],...],"truth_ids":[3,null,...]}`.
//! `truth_ids` is only written for ground-truth exports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentId, DetectedBox, DetectionFrame};

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord { path: PathBuf, line: usize, reason: String },
}

impl FrameIoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FrameIoError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    agent: String,
    t: i64,
    boxes: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_ids: Option<Vec<Option<u32>>>,
}

impl FrameRecord {
    fn from_frame(f: &DetectionFrame, with_truth: bool) -> Self {
        FrameRecord {
            agent: f.agent.0.clone(),
            t: f.local_time,
            boxes: f.boxes.iter().map(|b| [b.x, b.y, b.yaw]).collect(),
            truth_ids: with_truth.then(|| f.boxes.iter().map(|b| b.truth_id).collect()),
        }
    }

    fn into_frame(self) -> Result<DetectionFrame, String> {
        if let Some(ids) = &self.truth_ids {
            if ids.len() != self.boxes.len() {
                return Err(format!("{} truth ids for {} boxes", ids.len(), self.boxes.len()));
            }
        }
        let boxes = self
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| DetectedBox {
                x: b[0],
                y: b[1],
                yaw: b[2],
                truth_id: self.truth_ids.as_ref().and_then(|ids| ids[i]),
            })
            .collect();
        DetectionFrame::new(AgentId(self.agent), self.t, boxes).map_err(|e| e.to_string())
    }
}

pub fn write_frames<W: Write>(frames: &[DetectionFrame], out: &mut W, with_truth: bool) -> std::io::Result<()> {
    for f in frames {
        let line = serde_json::to_string(&FrameRecord::from_frame(f, with_truth)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn export_frames(frames: &[DetectionFrame], path: &Path, with_truth: bool) -> Result<(), FrameIoError> {
    let file = File::create(path).map_err(|e| FrameIoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_frames(frames, &mut w, with_truth).map_err(|e| FrameIoError::io(path, e))?;
    w.flush().map_err(|e| FrameIoError::io(path, e))
}

pub fn import_frames(path: &Path) -> Result<Vec<DetectionFrame>, FrameIoError> {
    let file = File::open(path).map_err(|e| FrameIoError::io(path, e))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FrameIoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| FrameIoError::MalformedRecord {
            path: path.to_owned(),
            line: i + 1,
            reason,
        };
        let record: FrameRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        frames.push(record.into_frame().map_err(malformed)?);
    }
    Ok(frames)
}

/// Groups frames by agent, keeping file order within each agent.
pub fn group_by_agent(frames: Vec<DetectionFrame>) -> BTreeMap<AgentId, Vec<DetectionFrame>> {
    let mut out: BTreeMap<AgentId, Vec<DetectionFrame>> = BTreeMap::new();
    for f in frames {
        out.entry(f.agent.clone()).or_default().push(f);
    }
    out
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FrameIoError> {
    let file = File::create(path).map_err(|e| FrameIoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| FrameIoError::io(path, e.into()))?;
    writeln!(w).map_err(|e| FrameIoError::io(path, e))?;
    w.flush().map_err(|e| FrameIoError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FrameIoError> {
    let text = std::fs::read_to_string(path).map_err(|e| FrameIoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FrameIoError::MalformedRecord {
        path: path.to_owned(),
        line: e.line(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, ScenarioConfig};

    #[test]
    fn round_trip_is_lossless() {
        let s = generate_scenario(&ScenarioConfig {
            seed: 2,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.jsonl");
        let frames = s.all_frames();
        export_frames(&frames, &path, true).unwrap();
        assert_eq!(import_frames(&path).unwrap(), frames);

        export_frames(&frames, &path, false).unwrap();
        let stripped: Vec<_> = frames.iter().map(|f| f.without_truth()).collect();
        assert_eq!(import_frames(&path).unwrap(), stripped);
    }

    #[test]
    fn truncated_file_reports_line() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_frames(&s.all_frames()[..3], &mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = text.len() - 20;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, &text[..cut]).unwrap();
        match import_frames(&path) {
            Err(FrameIoError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn nan_center_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.jsonl");
        std::fs::write(
            &path,
            "{\"agent\":\"a\",\"t\":0,\"boxes\":[[1.0,2.0,0.0]]}\n{\"agent\":\"a\",\"t\":100,\"boxes\":[[NaN,2.0,0.0]]}\n",
        )
        .unwrap();
        assert!(matches!(
            import_frames(&path),
            Err(FrameIoError::MalformedRecord { line: 2, .. })
        ));
        std::fs::write(&path, "{\"agent\":\"a\",\"t\":0,\"boxes\":[[null,2.0,0.0]]}\n").unwrap();
        assert!(matches!(
            import_frames(&path),
            Err(FrameIoError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            import_frames(Path::new("/nonexistent/frames.jsonl")),
            Err(FrameIoError::Io { .. })
        ));
    }
}
