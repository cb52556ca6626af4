//! The unified annotation format: one JSON record per line, one
//! [`GroundingSample`] per record, `schema_version` on every record.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    Ovd,
    Pg,
    Rec,
}

/// Character span of one phrase inside the caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Absolute pixel xyxy.
    pub box_xyxy: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase_id: Option<u32>,
}

/// One image with its annotations, unified across detection (OVD), phrase
/// grounding (PG), and referring expressions (REC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSample {
    pub schema_version: u32,
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub task: Task,
    /// PG/REC caption or expression.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    /// OVD category names; `category_id` indexes into this list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// PG phrase spans; `phrase_id` indexes into this list. REC samples may
    /// omit it, meaning one phrase covering the whole caption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrases: Option<Vec<PhraseSpan>>,
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub split: String,
}

#[derive(Debug, Default, Clone)]
pub struct LoadOutcome {
    pub samples: Vec<GroundingSample>,
    /// Boxes clamped into image bounds during ingest.
    pub clamped_boxes: u64,
}

pub fn save_unified(path: &Path, samples: &[GroundingSample]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for s in samples {
        let line = serde_json::to_string(s)
            .map_err(|e| DataError::Manifest(format!("serialize: {e}")))?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Load and validate; boxes outside image bounds are clamped (and counted),
/// structurally broken records are hard errors carrying the line number.
pub fn load_unified(path: &Path) -> Result<LoadOutcome> {
    let content = std::fs::read_to_string(path)?;
    let mut outcome = LoadOutcome::default();
    let mut offset = 0u64;
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let mut sample: GroundingSample =
            serde_json::from_str(line).map_err(|e| DataError::Parse {
                line: line_no,
                offset,
                message: e.to_string(),
            })?;
        outcome.clamped_boxes += validate_sample(&mut sample, line_no)?;
        outcome.samples.push(sample);
        offset += line.len() as u64 + 1;
    }
    Ok(outcome)
}

fn validate_sample(sample: &mut GroundingSample, line: usize) -> Result<u64> {
    let fail = |message: String| DataError::Validation { line, message };
    if sample.schema_version != SCHEMA_VERSION {
        return Err(DataError::UnsupportedSchema(sample.schema_version));
    }
    if sample.width == 0 || sample.height == 0 {
        return Err(fail(format!(
            "image {} has empty extent {}x{}",
            sample.image_id, sample.width, sample.height
        )));
    }
    match sample.task {
        Task::Ovd => {
            let n_cats = sample
                .categories
                .as_ref()
                .ok_or_else(|| fail("OVD sample without category list".into()))?
                .len();
            for inst in &sample.instances {
                match inst.category_id {
                    Some(c) if (c as usize) < n_cats => {}
                    Some(c) => return Err(fail(format!("category_id {c} out of range"))),
                    None => return Err(fail("OVD instance without category_id".into())),
                }
            }
        }
        Task::Pg | Task::Rec => {
            if sample.caption.is_none() {
                return Err(fail("PG/REC sample without caption".into()));
            }
            let n_phrases = sample.phrases.as_ref().map_or(1, Vec::len);
            for inst in &sample.instances {
                match inst.phrase_id {
                    Some(p) if (p as usize) < n_phrases => {}
                    Some(p) => return Err(fail(format!("phrase_id {p} out of range"))),
                    None => return Err(fail("PG/REC instance without phrase_id".into())),
                }
            }
        }
    }
    let (w, h) = (sample.width as f64, sample.height as f64);
    let mut clamped = 0u64;
    for inst in &mut sample.instances {
        let b = &mut inst.box_xyxy;
        if !(b[2] > b[0] && b[3] > b[1]) || b.iter().any(|v| !v.is_finite()) {
            return Err(fail(format!(
                "degenerate box [{}, {}, {}, {}]",
                b[0], b[1], b[2], b[3]
            )));
        }
        let orig = *b;
        b[0] = b[0].clamp(0.0, w);
        b[1] = b[1].clamp(0.0, h);
        b[2] = b[2].clamp(0.0, w);
        b[3] = b[3].clamp(0.0, h);
        if *b != orig {
            clamped += 1;
            if !(b[2] > b[0] && b[3] > b[1]) {
                return Err(fail("box lies entirely outside the image".into()));
            }
        }
    }
    Ok(clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GroundingSample {
        GroundingSample {
            schema_version: SCHEMA_VERSION,
            image_id: 1,
            width: 64,
            height: 48,
            task: Task::Ovd,
            caption: None,
            categories: Some(vec!["cat".into(), "dog".into()]),
            phrases: None,
            instances: vec![Instance {
                box_xyxy: [2.0, 3.0, 20.0, 30.0],
                category_id: Some(1),
                phrase_id: None,
            }],
            split: "train".into(),
        }
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        std::fs::write(&path, "").unwrap();
        let out = load_unified(&path).unwrap();
        assert!(out.samples.is_empty());
    }

    #[test]
    fn degenerate_box_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut bad = sample();
        bad.instances[0].box_xyxy = [20.0, 3.0, 20.0, 30.0]; // x2 == x1
        save_unified(&path, &[sample(), bad]).unwrap();
        let err = load_unified(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn out_of_bounds_box_clamped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut s = sample();
        s.instances[0].box_xyxy = [-5.0, 3.0, 80.0, 30.0];
        save_unified(&path, &[s]).unwrap();
        let out = load_unified(&path).unwrap();
        assert_eq!(out.clamped_boxes, 1);
        assert_eq!(out.samples[0].instances[0].box_xyxy, [0.0, 3.0, 64.0, 30.0]);
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let good = serde_json::to_string(&sample()).unwrap();
        std::fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
        let err = load_unified(&path).unwrap_err();
        match err {
            DataError::Parse { line, offset, .. } => {
                assert_eq!(line, 2);
                assert_eq!(offset, good.len() as u64 + 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsupported_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut s = sample();
        s.schema_version = 99;
        save_unified(&path, &[s]).unwrap();
        assert!(matches!(
            load_unified(&path).unwrap_err(),
            DataError::UnsupportedSchema(99)
        ));
    }
}
