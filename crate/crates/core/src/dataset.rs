//! Line-delimited JSON dataset: one header object followed by one object per
//! frame, plus sliding-window extraction for the models.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SemanticClass;
use crate::labeler::{LabelingResult, RejectReason};
use crate::sim::{Episode, FAN_BEARINGS_DEG, FAN_RANGES, FEATURE_DIM};
use crate::srp::{Sample, SrpConfig, TrainingTarget};
use crate::topology::{AffordedAction, SemanticRegion, INTERSECTION};

pub const FORMAT: &str = "srp-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub fan_ranges: Vec<f64>,
    pub fan_bearings_deg: Vec<f64>,
    pub feature_dim: usize,
    pub classes: Vec<String>,
    pub regions: Vec<String>,
    pub config_hash: String,
}

impl DatasetHeader {
    pub fn new(config_hash: &str) -> Self {
        Self {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            fan_ranges: FAN_RANGES.to_vec(),
            fan_bearings_deg: FAN_BEARINGS_DEG.to_vec(),
            feature_dim: FEATURE_DIM,
            classes: SemanticClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            regions: (0..18u8)
                .filter_map(SemanticRegion::from_code)
                .map(|r| r.name().to_string())
                .collect(),
            config_hash: config_hash.into(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Format(format!("not a dataset file: format {:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {}", self.version)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub localized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub episode_id: u64,
    pub frame_index: u32,
    pub pose: PoseRecord,
    pub feature: Vec<f64>,
    pub gt_region: SemanticRegion,
    pub labeler_region: Option<SemanticRegion>,
    /// Why the labeler rejected this frame's episode; `None` when accepted.
    pub reject_reason: Option<RejectReason>,
    pub topology_class: u8,
    pub action: AffordedAction,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub frames: Vec<FrameRecord>,
}

/// Frames of one episode in frame order.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeView<'a> {
    pub episode_id: u64,
    pub frames: &'a [FrameRecord],
}

impl EpisodeView<'_> {
    pub fn split(&self) -> Split {
        self.frames[0].split
    }

    pub fn action(&self) -> AffordedAction {
        self.frames[0].action
    }

    pub fn topology_class(&self) -> u8 {
        self.frames[0].topology_class
    }

    pub fn accepted(&self) -> bool {
        self.frames[0].reject_reason.is_none()
    }

    pub fn gt_regions(&self) -> Vec<SemanticRegion> {
        self.frames.iter().map(|f| f.gt_region).collect()
    }
}

/// Which labels supervise the SRP windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Automatic labels; rejected episodes contribute no windows.
    #[default]
    Labeler,
    Gt,
}

/// Episode frames as dataset records. Poses are the reconstructed ones.
pub fn episode_records(ep: &Episode, labels: &LabelingResult, episode_id: u64, split: Split) -> Vec<FrameRecord> {
    (0..ep.len())
        .map(|k| {
            let p = &ep.poses[k];
            FrameRecord {
                episode_id,
                frame_index: p.frame_index,
                pose: PoseRecord {
                    x: p.position.x,
                    y: p.position.y,
                    heading: p.heading,
                    localized: p.localized,
                },
                feature: ep.features[k].to_vec(),
                gt_region: ep.gt_regions[k],
                labeler_region: labels.labels[k],
                reject_reason: labels.reject_reason,
                topology_class: ep.gt_topology_class,
                action: ep.action,
                split,
            }
        })
        .collect()
}

impl Dataset {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for f in &self.frames {
            serde_json::to_writer(&mut w, f)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(Error::Format("empty dataset file".into()))??;
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        header.check()?;
        let mut frames = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let f: FrameRecord =
                serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 2)))?;
            if f.feature.len() != header.feature_dim {
                return Err(Error::Format(format!(
                    "line {}: feature length {} but header says {}",
                    i + 2,
                    f.feature.len(),
                    header.feature_dim
                )));
            }
            frames.push(f);
        }
        Ok(Self { header, frames })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Consecutive frames grouped by episode id, in file order.
    pub fn episodes(&self) -> Vec<EpisodeView<'_>> {
        self.frames
            .chunk_by(|a, b| a.episode_id == b.episode_id)
            .map(|frames| EpisodeView {
                episode_id: frames[0].episode_id,
                frames,
            })
            .collect()
    }

    pub fn episodes_in(&self, split: Split) -> Vec<EpisodeView<'_>> {
        self.episodes().into_iter().filter(|e| e.split() == split).collect()
    }
}

/// Identifies a window: episode and index of its last frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowKey {
    pub episode_id: u64,
    pub frame_index: u32,
}

/// Sliding windows of length `t_e` with `stride`, each paired with the
/// region labels of its frames and of the `t_d` frames starting at its last
/// frame. Steps past the episode end, and unlabeled frames, are masked.
pub fn srp_windows(
    ep: &EpisodeView<'_>,
    cfg: &SrpConfig,
    stride: usize,
    source: LabelSource,
) -> Vec<(WindowKey, Sample)> {
    let n = ep.frames.len();
    if n < cfg.t_e || (source == LabelSource::Labeler && !ep.accepted()) {
        return Vec::new();
    }
    let label = |k: usize| -> Option<usize> {
        let f = &ep.frames[k];
        let r = match source {
            LabelSource::Gt => Some(f.gt_region),
            LabelSource::Labeler => f.labeler_region,
        }?;
        (r.classifier() == classifier_of(f.topology_class)).then(|| r.local_index())
    };
    let o = ep.topology_class();
    (cfg.t_e - 1..n)
        .step_by(stride.max(1))
        .map(|end| {
            let start = end + 1 - cfg.t_e;
            let window = ep.frames[start..=end].iter().map(|f| f.feature.clone()).collect();
            let target = TrainingTarget {
                topology: vec![o; cfg.t_e],
                regions: (start..=end).map(label).collect(),
                future: (0..cfg.t_d)
                    .map(|m| (end + m < n).then(|| label(end + m)).flatten())
                    .collect(),
            };
            let key = WindowKey {
                episode_id: ep.episode_id,
                frame_index: ep.frames[end].frame_index,
            };
            (key, (window, target))
        })
        .collect()
}

fn classifier_of(topology_class: u8) -> usize {
    if topology_class as usize == INTERSECTION {
        INTERSECTION
    } else {
        crate::topology::NON_INTERSECTION
    }
}
