//! Parametric road layouts and the per-action semantic-region partitions.
//!
//! World frame: the ego vehicle always approaches from the south heading
//! north (+y) and drives on the right. Intersections are centred on the
//! origin; the straight multi-lane road runs along the y axis.
//!
//! A region is the set of camera positions at which the vehicle body overlaps
//! a layout feature, so crosswalk regions (A_i, C_i) extend
//! [`EGO_HALF_LENGTH`] beyond the painted crosswalk along the travel
//! direction, and B_i shrinks by the same margin.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, wrap_angle, Polygon, SemanticClass, Vec2};

/// Distance from the camera to the front/rear of the vehicle.
pub const EGO_HALF_LENGTH: f64 = 2.0;
pub const SIDEWALK_WIDTH: f64 = 2.0;
pub const MARKING_WIDTH: f64 = 0.5;
/// Lateral half width of the strip counted as "crossing the marking",
/// as a fraction of the lane width.
pub const CROSSING_HALF_WIDTH_FRAC: f64 = 0.25;
pub const LEFT_TURN_RADIUS_LANES: f64 = 2.5;
pub const RIGHT_TURN_RADIUS_LANES: f64 = 1.0;
/// Logistic length scale of the lateral lane-change profile, metres.
pub const LANE_CHANGE_SCALE: f64 = 3.0;
const CENTERLINE_SPACING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TopologyKind {
    FourWay,
    ThreeWayLeftStraight,
    ThreeWayLeftRight,
    StraightMultiLane,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::FourWay,
        TopologyKind::ThreeWayLeftStraight,
        TopologyKind::ThreeWayLeftRight,
        TopologyKind::StraightMultiLane,
    ];

    pub fn is_intersection(self) -> bool {
        !matches!(self, TopologyKind::StraightMultiLane)
    }

    /// Binary topology class: 1 for intersections, 0 otherwise.
    pub fn topology_class(self) -> u8 {
        u8::from(self.is_intersection())
    }

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::FourWay => "FourWay",
            TopologyKind::ThreeWayLeftStraight => "ThreeWayLeftStraight",
            TopologyKind::ThreeWayLeftRight => "ThreeWayLeftRight",
            TopologyKind::StraightMultiLane => "StraightMultiLane",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn arms(self) -> &'static [Arm] {
        match self {
            TopologyKind::FourWay => &[Arm::South, Arm::North, Arm::West, Arm::East],
            TopologyKind::ThreeWayLeftStraight => &[Arm::South, Arm::North, Arm::West],
            TopologyKind::ThreeWayLeftRight => &[Arm::South, Arm::West, Arm::East],
            TopologyKind::StraightMultiLane => &[],
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyParams {
    pub lane_width: f64,
    pub lanes_per_direction: u32,
    /// Zero removes every crosswalk.
    pub crosswalk_width: f64,
    pub approach_length: f64,
    pub seed: u64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            lanes_per_direction: 2,
            crosswalk_width: 3.0,
            approach_length: 30.0,
            seed: 0,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.lane_width.is_finite() && self.lane_width > 0.0) {
            return bad("lane_width must be > 0");
        }
        if self.lanes_per_direction == 0 {
            return bad("lanes_per_direction must be >= 1");
        }
        if !(self.crosswalk_width.is_finite() && self.crosswalk_width >= 0.0) {
            return bad("crosswalk_width must be >= 0");
        }
        if !(self.approach_length.is_finite() && self.approach_length > 4.0 * EGO_HALF_LENGTH) {
            return bad("approach_length must exceed four ego half-lengths");
        }
        Ok(())
    }

    pub fn has_crosswalks(&self) -> bool {
        self.crosswalk_width > 0.0
    }

    /// Width of one carriageway direction.
    pub fn half_road_width(&self) -> f64 {
        self.lanes_per_direction as f64 * self.lane_width
    }

    /// Distance from the junction edge of the arm overlap to the crosswalk's
    /// inner edge. Always larger than [`EGO_HALF_LENGTH`] so the entry and exit
    /// crosswalk regions never touch.
    pub fn crosswalk_setback(&self) -> f64 {
        if self.has_crosswalks() {
            self.lane_width.max(2.0 * EGO_HALF_LENGTH)
        } else {
            0.0
        }
    }

    /// Half size of the paved junction square.
    pub fn junction_half_size(&self) -> f64 {
        self.half_road_width() + self.crosswalk_setback()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AffordedAction {
    LeftTurn,
    Straight,
    RightTurn,
    LeftLaneChange,
    RightLaneChange,
}

impl AffordedAction {
    pub const ALL: [AffordedAction; 5] = [
        AffordedAction::LeftTurn,
        AffordedAction::Straight,
        AffordedAction::RightTurn,
        AffordedAction::LeftLaneChange,
        AffordedAction::RightLaneChange,
    ];

    /// Region index i (1 = left, 2 = straight, 3 = right).
    pub fn region_index(self) -> Option<u8> {
        match self {
            AffordedAction::LeftTurn => Some(1),
            AffordedAction::Straight => Some(2),
            AffordedAction::RightTurn => Some(3),
            _ => None,
        }
    }

    /// Intention class id, 0..5 in declaration order.
    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AffordedAction::LeftTurn => "LeftTurn",
            AffordedAction::Straight => "Straight",
            AffordedAction::RightTurn => "RightTurn",
            AffordedAction::LeftLaneChange => "LeftLaneChange",
            AffordedAction::RightLaneChange => "RightLaneChange",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

impl fmt::Display for AffordedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Semantic region vocabulary: 13 intersection labels followed by 5
/// non-intersection labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticRegion {
    S,
    A1,
    B1,
    C1,
    T1,
    A2,
    B2,
    C2,
    T2,
    A3,
    B3,
    C3,
    T3,
    /// Source lane.
    NS,
    /// Crossing the left lane marking.
    NCL,
    /// Left target lane.
    NTL,
    /// Crossing the right lane marking.
    NCR,
    /// Right target lane.
    NTR,
}

/// Classifier index for non-intersection regions.
pub const NON_INTERSECTION: usize = 0;
/// Classifier index for intersection regions.
pub const INTERSECTION: usize = 1;

impl SemanticRegion {
    pub const INTERSECTION_REGIONS: [SemanticRegion; 13] = [
        SemanticRegion::S,
        SemanticRegion::A1,
        SemanticRegion::B1,
        SemanticRegion::C1,
        SemanticRegion::T1,
        SemanticRegion::A2,
        SemanticRegion::B2,
        SemanticRegion::C2,
        SemanticRegion::T2,
        SemanticRegion::A3,
        SemanticRegion::B3,
        SemanticRegion::C3,
        SemanticRegion::T3,
    ];
    pub const NON_INTERSECTION_REGIONS: [SemanticRegion; 5] = [
        SemanticRegion::NS,
        SemanticRegion::NCL,
        SemanticRegion::NTL,
        SemanticRegion::NCR,
        SemanticRegion::NTR,
    ];

    /// Stable code across both vocabularies, 0..18.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        let c = code as usize;
        if c < 13 {
            Some(Self::INTERSECTION_REGIONS[c])
        } else {
            Self::NON_INTERSECTION_REGIONS.get(c - 13).copied()
        }
    }

    /// Which region classifier owns this label.
    pub fn classifier(self) -> usize {
        if self.code() < 13 {
            INTERSECTION
        } else {
            NON_INTERSECTION
        }
    }

    /// Index within the owning classifier's vocabulary.
    pub fn local_index(self) -> usize {
        let c = self.code() as usize;
        if c < 13 {
            c
        } else {
            c - 13
        }
    }

    pub fn from_local(classifier: usize, index: usize) -> Option<Self> {
        match classifier {
            INTERSECTION => Self::INTERSECTION_REGIONS.get(index).copied(),
            NON_INTERSECTION => Self::NON_INTERSECTION_REGIONS.get(index).copied(),
            _ => None,
        }
    }

    pub fn vocabulary_size(classifier: usize) -> usize {
        if classifier == INTERSECTION {
            13
        } else {
            5
        }
    }

    fn indexed(role: usize, i: u8) -> Self {
        // role: 0=A, 1=B, 2=C, 3=T
        Self::INTERSECTION_REGIONS[1 + 4 * (i as usize - 1) + role]
    }

    pub fn a(i: u8) -> Self {
        Self::indexed(0, i)
    }
    pub fn b(i: u8) -> Self {
        Self::indexed(1, i)
    }
    pub fn c(i: u8) -> Self {
        Self::indexed(2, i)
    }
    pub fn t(i: u8) -> Self {
        Self::indexed(3, i)
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; 18] = [
            "S", "A1", "B1", "C1", "T1", "A2", "B2", "C2", "T2", "A3", "B3", "C3", "T3", "NS", "NCL", "NTL", "NCR",
            "NTR",
        ];
        NAMES[self.code() as usize]
    }

    pub fn from_name(s: &str) -> Option<Self> {
        (0..18u8).filter_map(Self::from_code).find(|r| r.name() == s)
    }
}

impl fmt::Display for SemanticRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    South,
    North,
    West,
    East,
}

impl Arm {
    /// Rectangle on this arm between radial distances `inner..outer` from the
    /// centre and lateral offsets `lo..hi` (x for north/south arms, y for
    /// east/west arms).
    fn rect(self, inner: f64, outer: f64, lo: f64, hi: f64) -> Polygon {
        match self {
            Arm::South => Polygon::rect(lo, -outer, hi, -inner),
            Arm::North => Polygon::rect(lo, inner, hi, outer),
            Arm::West => Polygon::rect(-outer, lo, -inner, hi),
            Arm::East => Polygon::rect(inner, lo, outer, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadTopology {
    pub kind: TopologyKind,
    pub params: TopologyParams,
    pub drivable: Vec<Polygon>,
    pub crosswalks: Vec<Polygon>,
    pub sidewalks: Vec<Polygon>,
    pub lane_markings: Vec<Polygon>,
    pub intersection_core: Option<Polygon>,
    pub region_partition: BTreeMap<AffordedAction, Vec<(SemanticRegion, Polygon)>>,
}

/// Actions a layout affords, in canonical order.
pub fn afforded_actions_for(kind: TopologyKind, lanes_per_direction: u32) -> Vec<AffordedAction> {
    use AffordedAction::*;
    match kind {
        TopologyKind::FourWay => vec![LeftTurn, Straight, RightTurn],
        TopologyKind::ThreeWayLeftStraight => vec![LeftTurn, Straight],
        TopologyKind::ThreeWayLeftRight => vec![LeftTurn, RightTurn],
        TopologyKind::StraightMultiLane if lanes_per_direction >= 2 => {
            vec![Straight, LeftLaneChange, RightLaneChange]
        }
        TopologyKind::StraightMultiLane => vec![Straight],
    }
}

pub fn afforded_actions(t: &RoadTopology) -> Vec<AffordedAction> {
    afforded_actions_for(t.kind, t.params.lanes_per_direction)
}

pub fn build_topology(kind: TopologyKind, params: TopologyParams) -> Result<RoadTopology> {
    params.validate()?;
    let mut topo = if kind.is_intersection() {
        build_intersection(kind, params)
    } else {
        build_straight(params)
    };
    for action in afforded_actions_for(kind, params.lanes_per_direction) {
        let regions = if kind.is_intersection() {
            intersection_regions(&topo, action)
        } else {
            lane_regions(&params, action)
        };
        topo.region_partition.insert(action, regions);
    }
    Ok(topo)
}

fn marking_offsets(p: &TopologyParams) -> Vec<f64> {
    let w = p.half_road_width();
    let mut offsets = vec![0.0];
    for k in 1..p.lanes_per_direction {
        let b = w - k as f64 * p.lane_width;
        offsets.push(b);
        offsets.push(-b);
    }
    offsets
}

fn build_intersection(kind: TopologyKind, params: TopologyParams) -> RoadTopology {
    let w = params.half_road_width();
    let j = params.junction_half_size();
    let c = params.crosswalk_width;
    let outer = j + c + params.approach_length;

    let mut drivable = vec![Polygon::rect(-j, -j, j, j)];
    let mut crosswalks = Vec::new();
    let mut sidewalks = Vec::new();
    let mut lane_markings = Vec::new();
    for &arm in kind.arms() {
        drivable.push(arm.rect(j, outer, -w, w));
        if params.has_crosswalks() {
            crosswalks.push(arm.rect(j, j + c, -w, w));
        }
        sidewalks.push(arm.rect(j, outer, w, w + SIDEWALK_WIDTH));
        sidewalks.push(arm.rect(j, outer, -w - SIDEWALK_WIDTH, -w));
        for b in marking_offsets(&params) {
            lane_markings.push(arm.rect(j + c, outer, b, b + MARKING_WIDTH));
        }
    }
    RoadTopology {
        kind,
        params,
        drivable,
        crosswalks,
        sidewalks,
        lane_markings,
        intersection_core: Some(Polygon::rect(-j, -j, j, j)),
        region_partition: BTreeMap::new(),
    }
}

fn build_straight(params: TopologyParams) -> RoadTopology {
    let w = params.half_road_width();
    let l = params.approach_length;
    let lane_markings = marking_offsets(&params)
        .into_iter()
        .map(|b| Polygon::rect(b, -l, b + MARKING_WIDTH, l))
        .collect();
    RoadTopology {
        kind: TopologyKind::StraightMultiLane,
        params,
        drivable: vec![Polygon::rect(-w, -l, w, l)],
        crosswalks: Vec::new(),
        sidewalks: vec![
            Polygon::rect(w, -l, w + SIDEWALK_WIDTH, l),
            Polygon::rect(-w - SIDEWALK_WIDTH, -l, -w, l),
        ],
        lane_markings,
        intersection_core: None,
        region_partition: BTreeMap::new(),
    }
}

fn intersection_regions(t: &RoadTopology, action: AffordedAction) -> Vec<(SemanticRegion, Polygon)> {
    let p = &t.params;
    let i = action.region_index().expect("turn action");
    let w = p.half_road_width();
    let j = p.junction_half_size();
    let c = p.crosswalk_width;
    let l = p.approach_length;
    let e = EGO_HALF_LENGTH;
    let exit = match action {
        AffordedAction::LeftTurn => Arm::West,
        AffordedAction::Straight => Arm::North,
        _ => Arm::East,
    };
    // lateral span of the outgoing carriageway on the exit arm
    let (out_lo, out_hi) = match exit {
        Arm::West | Arm::North => (0.0, w),
        _ => (-w, 0.0),
    };

    if p.has_crosswalks() {
        vec![
            (SemanticRegion::S, Arm::South.rect(j + c + e, j + c + l, 0.0, w)),
            (SemanticRegion::a(i), Arm::South.rect(j - e, j + c + e, -w, w)),
            (SemanticRegion::b(i), Polygon::rect(e - j, e - j, j - e, j - e)),
            (SemanticRegion::c(i), exit.rect(j - e, j + c + e, -w, w)),
            (SemanticRegion::t(i), exit.rect(j + c + e, j + c + l, out_lo, out_hi)),
        ]
    } else {
        vec![
            (SemanticRegion::S, Arm::South.rect(j, j + l, 0.0, w)),
            (SemanticRegion::b(i), Polygon::rect(-j, -j, j, j)),
            (SemanticRegion::t(i), exit.rect(j, j + l, out_lo, out_hi)),
        ]
    }
}

/// Source lane index (0 = curb side) used for a given action.
pub fn source_lane(action: AffordedAction, lanes_per_direction: u32) -> u32 {
    let n = lanes_per_direction;
    match action {
        AffordedAction::LeftTurn => n - 1,
        AffordedAction::RightTurn => 0,
        AffordedAction::Straight => (n - 1) / 2,
        AffordedAction::LeftLaneChange => n.saturating_sub(2).min(1),
        AffordedAction::RightLaneChange => 1.min(n - 1),
    }
}

/// Lateral centre of northbound lane `k` measured from the road centre.
fn lane_center(p: &TopologyParams, k: u32) -> f64 {
    p.half_road_width() - (k as f64 + 0.5) * p.lane_width
}

fn lane_regions(p: &TopologyParams, action: AffordedAction) -> Vec<(SemanticRegion, Polygon)> {
    let w = p.half_road_width();
    let lw = p.lane_width;
    let l = p.approach_length;
    let hw = CROSSING_HALF_WIDTH_FRAC * lw;
    let s = source_lane(action, p.lanes_per_direction) as f64;
    let strip = |lo: f64, hi: f64| Polygon::rect(lo, -l, hi, l);
    match action {
        AffordedAction::LeftLaneChange => {
            let m = w - (s + 1.0) * lw;
            vec![
                (SemanticRegion::NS, strip(m + hw, w - s * lw)),
                (SemanticRegion::NCL, strip(m - hw, m + hw)),
                (SemanticRegion::NTL, strip(m - lw, m - hw)),
            ]
        }
        AffordedAction::RightLaneChange => {
            let m = w - s * lw;
            vec![
                (SemanticRegion::NS, strip(m - lw, m - hw)),
                (SemanticRegion::NCR, strip(m - hw, m + hw)),
                (SemanticRegion::NTR, strip(m + hw, m + lw)),
            ]
        }
        _ => vec![(SemanticRegion::NS, strip(w - (s + 1.0) * lw, w - s * lw))],
    }
}

impl RoadTopology {
    pub fn partition(&self, action: AffordedAction) -> Result<&[(SemanticRegion, Polygon)]> {
        self.region_partition
            .get(&action)
            .map(Vec::as_slice)
            .ok_or(Error::UnaffordableAction {
                kind: self.kind,
                action,
            })
    }

    pub fn affords(&self, action: AffordedAction) -> bool {
        self.region_partition.contains_key(&action)
    }

    /// True ground class at `p`, or `None` off the mapped surfaces. Crosswalk
    /// paint wins over lane paint, which wins over bare road.
    pub fn surface_class(&self, p: Vec2) -> Option<SemanticClass> {
        let hit = |polys: &[Polygon]| polys.iter().any(|q| q.contains(p));
        if hit(&self.crosswalks) {
            Some(SemanticClass::Crosswalk)
        } else if hit(&self.lane_markings) {
            Some(SemanticClass::LaneMarking)
        } else if hit(&self.drivable) {
            Some(SemanticClass::Road)
        } else if hit(&self.sidewalks) {
            Some(SemanticClass::Sidewalk)
        } else {
            None
        }
    }

    /// Axis-aligned bounds of every surface in the layout.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for poly in self.drivable.iter().chain(&self.sidewalks) {
            let (a, b) = poly.bbox();
            lo = Vec2::new(lo.x.min(a.x), lo.y.min(a.y));
            hi = Vec2::new(hi.x.max(b.x), hi.y.max(b.y));
        }
        (lo, hi)
    }

    /// Ideal path of the camera for `action`: straight segments joined by a
    /// circular arc for turns, a logistic lateral shift for lane changes.
    pub fn centerline(&self, action: AffordedAction) -> Result<Centerline> {
        if !self.affords(action) {
            return Err(Error::UnaffordableAction {
                kind: self.kind,
                action,
            });
        }
        let p = &self.params;
        let n = p.lanes_per_direction;
        let lw = p.lane_width;
        if !self.kind.is_intersection() {
            let l = p.approach_length;
            let x0 = lane_center(p, source_lane(action, n));
            let x1 = match action {
                AffordedAction::LeftLaneChange => x0 - lw,
                AffordedAction::RightLaneChange => x0 + lw,
                _ => x0,
            };
            return Ok(Centerline::lane_change(x0, x1, -l, l));
        }

        let j = p.junction_half_size();
        let reach = j + p.crosswalk_width + p.approach_length;
        let k = source_lane(action, n);
        let xa = lane_center(p, k);
        let start = Vec2::new(xa, -reach);
        Ok(match action {
            AffordedAction::Straight => Centerline::straight(start, Vec2::new(xa, reach)),
            AffordedAction::LeftTurn => {
                let yb = lane_center(p, k);
                let r = LEFT_TURN_RADIUS_LANES * lw;
                let center = Vec2::new(xa - r, yb - r);
                Centerline::turn(start, center, r, true, Vec2::new(-reach, yb))
            }
            _ => {
                let yb = -lane_center(p, k);
                let r = RIGHT_TURN_RADIUS_LANES * lw;
                let center = Vec2::new(xa + r, yb - r);
                Centerline::turn(start, center, r, false, Vec2::new(reach, yb))
            }
        })
    }
}

/// Region containing `p` for `action`, first in visit order on shared edges.
pub fn ground_truth_region(t: &RoadTopology, action: AffordedAction, p: Vec2) -> Result<Option<SemanticRegion>> {
    Ok(t.partition(action)?
        .iter()
        .find(|(_, poly)| poly.contains(p))
        .map(|(r, _)| *r))
}

/// Densely sampled ideal path with arc-length parameterisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    points: Vec<Vec2>,
    headings: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Centerline {
    fn from_samples(samples: Vec<(Vec2, f64)>) -> Self {
        let mut points = Vec::with_capacity(samples.len());
        let mut headings = Vec::with_capacity(samples.len());
        let mut cumulative = Vec::with_capacity(samples.len());
        let mut acc = 0.0;
        for (i, (p, h)) in samples.into_iter().enumerate() {
            if i > 0 {
                acc += p.distance(points[i - 1]);
            }
            points.push(p);
            headings.push(wrap_angle(h));
            cumulative.push(acc);
        }
        Self {
            points,
            headings,
            cumulative,
        }
    }

    fn segment(a: Vec2, b: Vec2, out: &mut Vec<(Vec2, f64)>, include_start: bool) {
        let d = b - a;
        let heading = d.y.atan2(d.x);
        let steps = ((d.norm() / CENTERLINE_SPACING).ceil() as usize).max(1);
        let first = usize::from(!include_start);
        for s in first..=steps {
            out.push((a + d * (s as f64 / steps as f64), heading));
        }
    }

    fn straight(a: Vec2, b: Vec2) -> Self {
        let mut out = Vec::new();
        Self::segment(a, b, &mut out, true);
        Self::from_samples(out)
    }

    /// Northbound approach from `start`, quarter arc about `center`, then a
    /// straight run to `end`.
    fn turn(start: Vec2, center: Vec2, r: f64, left: bool, end: Vec2) -> Self {
        let mut out = Vec::new();
        let arc_start = Vec2::new(start.x, center.y);
        Self::segment(start, arc_start, &mut out, true);
        let steps = ((FRAC_PI_2 * r / CENTERLINE_SPACING).ceil() as usize).max(1);
        for s in 1..=steps {
            let u = FRAC_PI_2 * s as f64 / steps as f64;
            let (pos, heading) = if left {
                // from angle 0 (east of centre) sweeping counter-clockwise
                (center + Vec2::new(u.cos(), u.sin()) * r, FRAC_PI_2 + u)
            } else {
                // from angle pi (west of centre) sweeping clockwise
                (center + Vec2::new(-u.cos(), u.sin()) * r, FRAC_PI_2 - u)
            };
            out.push((pos, heading));
        }
        let arc_end = out.last().expect("arc samples").0;
        Self::segment(arc_end, end, &mut out, false);
        Self::from_samples(out)
    }

    fn lane_change(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let steps = (((y1 - y0) / CENTERLINE_SPACING).ceil() as usize).max(1);
        let samples = (0..=steps)
            .map(|s| {
                let y = y0 + (y1 - y0) * s as f64 / steps as f64;
                let sig = 1.0 / (1.0 + (-y / LANE_CHANGE_SCALE).exp());
                let x = x0 + (x1 - x0) * sig;
                let dxdy = (x1 - x0) * sig * (1.0 - sig) / LANE_CHANGE_SCALE;
                (Vec2::new(x, y), 1f64.atan2(dxdy))
            })
            .collect();
        Self::from_samples(samples)
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Arc length of the sample nearest to `p`.
    pub fn project(&self, p: Vec2) -> f64 {
        let mut best = 0;
        for (i, q) in self.points.iter().enumerate() {
            if q.distance(p) < self.points[best].distance(p) {
                best = i;
            }
        }
        self.cumulative.get(best).copied().unwrap_or(0.0)
    }

    /// Position and heading at arc length `s`, clamped to the path.
    pub fn at(&self, s: f64) -> (Vec2, f64) {
        let s = s.clamp(0.0, self.length());
        let i = self.cumulative.partition_point(|&c| c <= s);
        if i == 0 {
            return (self.points[0], self.headings[0]);
        }
        if i >= self.points.len() {
            let last = self.points.len() - 1;
            return (self.points[last], self.headings[last]);
        }
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let u = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        let p = self.points[i - 1] + (self.points[i] - self.points[i - 1]) * u;
        let h0 = self.headings[i - 1];
        let h = wrap_angle(h0 + angle_diff(self.headings[i], h0) * u);
        (p, h)
    }
}
