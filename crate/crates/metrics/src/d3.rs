//! Described-object detection evaluation: AP over description-as-category,
//! partitioned into FULL / presence-only / absence-only and by description
//! length buckets. The concat/parallel distinction belongs to the inference
//! harness; the metric records the mode and treats detections identically.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::ap::{evaluate_ap, ApConfig};
use crate::error::{MetricError, Result};
use crate::report::EvalReport;
use crate::store::{Detection, GtBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D3Mode {
    /// All descriptions concatenated into one caption per image.
    Concat,
    /// One description per forward pass.
    Parallel,
}

impl D3Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            D3Mode::Concat => "concat",
            D3Mode::Parallel => "parallel",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescriptionMeta {
    pub id: u64,
    /// Presence description (the object is stated to be present) vs absence.
    pub is_presence: bool,
    pub n_tokens: usize,
}

/// Token-length bucket boundaries; `vl` is everything above `l_max`.
#[derive(Debug, Clone, Copy)]
pub struct LengthBuckets {
    pub s_max: usize,
    pub m_max: usize,
    pub l_max: usize,
}

impl Default for LengthBuckets {
    fn default() -> Self {
        Self {
            s_max: 3,
            m_max: 6,
            l_max: 10,
        }
    }
}

impl LengthBuckets {
    fn bucket_of(&self, n_tokens: usize) -> &'static str {
        if n_tokens <= self.s_max {
            "s"
        } else if n_tokens <= self.m_max {
            "m"
        } else if n_tokens <= self.l_max {
            "l"
        } else {
            "vl"
        }
    }
}

/// AP over FULL / PRES / ABS partitions and per length bucket. Every
/// description id referenced by a detection or GT box must carry metadata.
pub fn d3_evaluate(
    dets: &[Detection],
    gts: &[GtBox],
    descriptions: &[DescriptionMeta],
    mode: D3Mode,
    buckets: LengthBuckets,
    cfg: &ApConfig,
) -> Result<EvalReport> {
    let meta: BTreeMap<u64, &DescriptionMeta> =
        descriptions.iter().map(|d| (d.id, d)).collect();
    for id in dets
        .iter()
        .map(|d| d.label_id)
        .chain(gts.iter().map(|g| g.label_id))
    {
        if !meta.contains_key(&id) {
            return Err(MetricError::UntaggedDescription(id));
        }
    }

    let subset_ap = |keep: &dyn Fn(&DescriptionMeta) -> bool| -> f64 {
        let ids: BTreeSet<u64> = descriptions
            .iter()
            .filter(|d| keep(d))
            .map(|d| d.id)
            .collect();
        let d: Vec<Detection> = dets
            .iter()
            .filter(|x| ids.contains(&x.label_id))
            .cloned()
            .collect();
        let g: Vec<GtBox> = gts
            .iter()
            .filter(|x| ids.contains(&x.label_id))
            .cloned()
            .collect();
        evaluate_ap(&d, &g, cfg).map
    };

    let mut report = EvalReport::new();
    report.set_meta("mode", mode.as_str());
    report.insert("FULL", subset_ap(&|_| true));
    report.insert("PRES", subset_ap(&|d| d.is_presence));
    report.insert("ABS", subset_ap(&|d| !d.is_presence));
    for bucket in ["s", "m", "l", "vl"] {
        report.insert(
            bucket,
            subset_ap(&|d| buckets.bucket_of(d.n_tokens) == bucket),
        );
    }
    Ok(report)
}
