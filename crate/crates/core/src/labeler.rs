//! Automatic per-frame region labels from the BEV grid and reconstructed
//! poses, with trajectory quality filtering.

use serde::{Deserialize, Serialize};

use crate::bev::{self, BevGrid, CrosswalkComponent};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Pose};
use crate::sim::Episode;
use crate::topology::{
    ground_truth_region, AffordedAction, RoadTopology, SemanticRegion, TopologyKind, TopologyParams, EGO_HALF_LENGTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    ReconstructionFailure,
    IncoherentTrajectory,
    CrosswalkCountMismatch,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::ReconstructionFailure => "ReconstructionFailure",
            RejectReason::IncoherentTrajectory => "IncoherentTrajectory",
            RejectReason::CrosswalkCountMismatch => "CrosswalkCountMismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingResult {
    pub labels: Vec<Option<SemanticRegion>>,
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
}

impl LabelingResult {
    fn rejected(n: usize, reason: RejectReason) -> Self {
        Self {
            labels: vec![None; n],
            accepted: false,
            reject_reason: Some(reason),
        }
    }

    /// Labels with consecutive duplicates collapsed, skipping `None`.
    pub fn runs(&self) -> Vec<SemanticRegion> {
        let mut out: Vec<SemanticRegion> = Vec::new();
        for r in self.labels.iter().flatten() {
            if out.last() != Some(r) {
                out.push(*r);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceParams {
    /// Largest allowed displacement per frame between localized poses.
    pub max_step_m: f64,
    /// Largest allowed heading change per frame between localized poses.
    pub max_heading_step_rad: f64,
    pub min_localized_fraction: f64,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        Self {
            max_step_m: 5.0,
            max_heading_step_rad: 0.5,
            min_localized_fraction: 0.5,
        }
    }
}

/// Accepts a trajectory when enough frames are localized and every pair of
/// consecutive localized frames moves plausibly. Steps across dropout gaps
/// are divided by the number of frames spanned.
pub fn quality_filter(poses: &[Pose], p: &CoherenceParams) -> Result<(bool, Option<RejectReason>)> {
    if poses.len() < 2 {
        return Err(Error::TooFewPoses(poses.len()));
    }
    let localized: Vec<&Pose> = poses.iter().filter(|q| q.localized).collect();
    let fraction = localized.len() as f64 / poses.len() as f64;
    if fraction < p.min_localized_fraction {
        return Ok((false, Some(RejectReason::ReconstructionFailure)));
    }
    for w in localized.windows(2) {
        let frames = w[1].frame_index.saturating_sub(w[0].frame_index).max(1) as f64;
        let step = w[1].position.distance(w[0].position) / frames;
        let turn = crate::geometry::angle_diff(w[1].heading, w[0].heading).abs() / frames;
        if step > p.max_step_m || turn > p.max_heading_step_rad {
            return Ok((false, Some(RejectReason::IncoherentTrajectory)));
        }
    }
    Ok((true, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelerParams {
    /// Inflation applied to crosswalk footprints when testing overlap.
    pub ego_half_length: f64,
    pub min_component_cells: usize,
    /// Total width of both carriageways, used by the junction kernel.
    pub road_width: f64,
}

impl Default for LabelerParams {
    fn default() -> Self {
        Self::for_layout(&TopologyParams::default(), bev::DEFAULT_RESOLUTION)
    }
}

impl LabelerParams {
    /// Parameters matched to the nominal crosswalk size of a layout.
    pub fn for_layout(t: &TopologyParams, resolution: f64) -> Self {
        let road_width = 2.0 * t.half_road_width();
        let area = t.crosswalk_width * road_width;
        Self {
            ego_half_length: EGO_HALF_LENGTH,
            min_component_cells: bev::min_component_cells(area, resolution),
            road_width,
        }
    }
}

fn inflate(poly: &Polygon, by: f64) -> Polygon {
    let (lo, hi) = poly.bbox();
    Polygon::rect(lo.x - by, lo.y - by, hi.x + by, hi.y + by)
}

/// Crosswalk-anchored labels for an intersection trajectory.
///
/// Components are numbered by the first localized frame overlapping them;
/// the first two crossed anchor A_i and C_i. With fewer than two crossed the
/// junction core anchors B_i instead.
pub fn label_intersection(
    poses: &[Pose],
    grid: &BevGrid,
    action: AffordedAction,
    core: Option<&Polygon>,
    params: &LabelerParams,
) -> Result<LabelingResult> {
    let i = action
        .region_index()
        .ok_or_else(|| Error::InvalidParameter(format!("{action} is not an intersection action")))?;
    let mut comps = bev::extract_crosswalks(grid, params.min_component_cells);
    label_with_components(poses, &mut comps, i, core, params.ego_half_length)
}

fn label_with_components(
    poses: &[Pose],
    comps: &mut [CrosswalkComponent],
    i: u8,
    core: Option<&Polygon>,
    ego_half_length: f64,
) -> Result<LabelingResult> {
    let n = poses.len();
    let localized: Vec<usize> = (0..n).filter(|&k| poses[k].localized).collect();
    if localized.is_empty() {
        return Ok(LabelingResult::rejected(n, RejectReason::ReconstructionFailure));
    }

    // (first, last) overlapping frame per component
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (ci, comp) in comps.iter().enumerate() {
        let zone = inflate(&comp.footprint, ego_half_length);
        let hits: Vec<usize> = localized
            .iter()
            .copied()
            .filter(|&k| zone.contains(poses[k].position))
            .collect();
        if let (Some(&f), Some(&l)) = (hits.first(), hits.last()) {
            spans.push((f, l, ci));
        }
    }
    spans.sort_unstable();
    for (order, &(_, _, ci)) in spans.iter().enumerate() {
        comps[ci].order_index = order as i32;
    }

    let mut labels = vec![None; n];
    if spans.len() >= 2 {
        let (first_a, last_a, _) = spans[0];
        let (first_c, last_c, _) = spans[1];
        let end_a = last_a.min(first_c.saturating_sub(1));
        for &k in &localized {
            labels[k] = Some(if k < first_a {
                SemanticRegion::S
            } else if k <= end_a {
                SemanticRegion::a(i)
            } else if k < first_c {
                SemanticRegion::b(i)
            } else if k <= last_c {
                SemanticRegion::c(i)
            } else {
                SemanticRegion::t(i)
            });
        }
    } else {
        let inside: Vec<usize> = match core {
            Some(core) => localized
                .iter()
                .copied()
                .filter(|&k| core.contains(poses[k].position))
                .collect(),
            None => Vec::new(),
        };
        let (Some(&first_b), Some(&last_b)) = (inside.first(), inside.last()) else {
            return Ok(LabelingResult::rejected(n, RejectReason::CrosswalkCountMismatch));
        };
        for &k in &localized {
            labels[k] = Some(if k < first_b {
                SemanticRegion::S
            } else if k <= last_b {
                SemanticRegion::b(i)
            } else {
                SemanticRegion::t(i)
            });
        }
    }
    fill_from_neighbours(&mut labels, &localized);
    Ok(LabelingResult {
        labels,
        accepted: true,
        reject_reason: None,
    })
}

/// Gives every unlocalized frame the label of its nearest localized frame,
/// preferring the earlier one on ties.
fn fill_from_neighbours(labels: &mut [Option<SemanticRegion>], localized: &[usize]) {
    for k in 0..labels.len() {
        if localized.binary_search(&k).is_ok() {
            continue;
        }
        let next = localized.partition_point(|&j| j < k);
        let before = next.checked_sub(1).map(|j| localized[j]);
        let after = localized.get(next).copied();
        let src = match (before, after) {
            (Some(b), Some(a)) => {
                if k - b <= a - k {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => continue,
        };
        labels[k] = labels[src];
    }
}

/// Lane-change labels straight from the region partition, evaluated at the
/// reconstructed positions.
pub fn label_lane_change(poses: &[Pose], t: &RoadTopology, action: AffordedAction) -> Result<LabelingResult> {
    if t.kind != TopologyKind::StraightMultiLane {
        return Err(Error::WrongTopology {
            expected: "StraightMultiLane",
            got: t.kind,
        });
    }
    let mut labels = vec![None; poses.len()];
    let mut localized = Vec::new();
    for (k, p) in poses.iter().enumerate() {
        if p.localized {
            labels[k] = ground_truth_region(t, action, p.position)?;
            localized.push(k);
        }
    }
    fill_from_neighbours(&mut labels, &localized);
    Ok(LabelingResult {
        labels,
        accepted: true,
        reject_reason: None,
    })
}

/// Quality filter followed by the labeler appropriate for the layout.
pub fn label_episode(ep: &Episode, coherence: &CoherenceParams, params: &LabelerParams) -> Result<LabelingResult> {
    let (ok, reason) = quality_filter(&ep.poses, coherence)?;
    if !ok {
        return Ok(LabelingResult::rejected(
            ep.poses.len(),
            reason.unwrap_or(RejectReason::ReconstructionFailure),
        ));
    }
    if ep.topology.kind.is_intersection() {
        let core = bev::detect_intersection_core(&ep.grid, params.road_width);
        label_intersection(&ep.poses, &ep.grid, ep.action, core.as_ref(), params)
    } else {
        label_lane_change(&ep.poses, &ep.topology, ep.action)
    }
}

/// Fraction of frames with a ground-truth label whose predicted label matches.
pub fn labeling_accuracy(pred: &LabelingResult, gt: &[Option<SemanticRegion>]) -> Result<f64> {
    if pred.labels.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.labels.len(),
            right: gt.len(),
        });
    }
    let mut total = 0usize;
    let mut hit = 0usize;
    for (p, g) in pred.labels.iter().zip(gt) {
        if let Some(g) = g {
            total += 1;
            hit += usize::from(*p == Some(*g));
        }
    }
    if total == 0 {
        return Err(Error::Empty("ground-truth labels"));
    }
    Ok(hit as f64 / total as f64)
}
