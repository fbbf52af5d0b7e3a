//! Planar and 3D primitives, polygons, and semantic vote fusion.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading` (radians, CCW from +x).
    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Expresses `self` (a world point) in a frame at `origin` rotated by `heading`.
    pub fn to_local(self, origin: Vec2, heading: f64) -> Vec2 {
        let d = self - origin;
        let (s, c) = heading.sin_cos();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Drops the height component of a reconstructed point.
pub fn project_to_ground(p: Vec3) -> Vec2 {
    Vec2::new(p.x, p.y)
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Shortest signed rotation taking `from` onto `to`, in (-pi, pi].
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

/// A camera pose on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    /// Radians, wrapped to (-pi, pi].
    pub heading: f64,
    pub frame_index: u32,
    /// False when reconstruction failed to register this frame.
    pub localized: bool,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64, frame_index: u32) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
            frame_index,
            localized: true,
        }
    }
}

/// Simple counter-clockwise polygon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    /// Validates vertex count, finiteness, orientation and simplicity.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon("fewer than 3 vertices"));
        }
        if !vertices.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex"));
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::InvalidPolygon("not counter-clockwise or zero area"));
        }
        if !is_simple(&vertices) {
            return Err(Error::InvalidPolygon("self-intersecting"));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle. Panics on an empty or inverted box, which only
    /// arises from a programming error in layout code.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        assert!(
            max_x > min_x && max_y > min_y,
            "degenerate rectangle [{min_x}, {max_x}] x [{min_y}, {max_y}]"
        );
        Self {
            vertices: vec![
                Vec2::new(min_x, min_y),
                Vec2::new(max_x, min_y),
                Vec2::new(max_x, max_y),
                Vec2::new(min_x, max_y),
            ],
        }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
            a2 += c;
        }
        Vec2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        point_in_polygon(p, self)
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            (b - a).cross(c - b) >= -1e-12
        })
    }

    /// Intersection area of two convex polygons.
    pub fn convex_intersection_area(&self, other: &Polygon) -> f64 {
        debug_assert!(self.is_convex() && other.is_convex());
        let clipped = clip_convex(&self.vertices, &other.vertices);
        if clipped.len() < 3 {
            0.0
        } else {
            signed_area(&clipped).max(0.0)
        }
    }

    /// Intersection over union for convex polygons.
    pub fn convex_iou(&self, other: &Polygon) -> f64 {
        let inter = self.convex_intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            vertices: Vec<Vec2>,
        }
        let raw = Raw::deserialize(d)?;
        Polygon::new(raw.vertices).map_err(serde::de::Error::custom)
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let len = a.distance(b);
    let tol = 1e-12 * len.max(1.0);
    orient(a, b, p).abs() <= tol * len.max(1.0)
        && p.x >= a.x.min(b.x) - tol
        && p.x <= a.x.max(b.x) + tol
        && p.y >= a.y.min(b.y) - tol
        && p.y <= a.y.max(b.y) + tol
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

fn is_simple(v: &[Vec2]) -> bool {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Boundary-inclusive containment test (crossing number with an explicit
/// on-edge check).
pub fn point_in_polygon(p: Vec2, poly: &Polygon) -> bool {
    let v = &poly.vertices;
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[j], v[i]);
        if on_segment(p, a, b) {
            return true;
        }
        if (b.y > p.y) != (a.y > p.y) {
            let x_cross = (a.x - b.x) * (p.y - b.y) / (a.y - b.y) + b.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Sutherland-Hodgman clip of `subject` against the convex CCW `clip`.
fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let cur_in = orient(a, b, cur) >= 0.0;
            let prev_in = orient(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p1: Vec2, p2: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = p2 - p1;
    let e = b - a;
    let denom = d.cross(e);
    if denom == 0.0 {
        return p1;
    }
    let t = (a - p1).cross(e) / denom;
    p1 + d * t
}

/// Ground-surface label vocabulary produced by the segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticClass {
    Road,
    Crosswalk,
    LaneMarking,
    Sidewalk,
    Obstacle,
    Unknown,
}

impl SemanticClass {
    pub const COUNT: usize = 6;
    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Road,
        SemanticClass::Crosswalk,
        SemanticClass::LaneMarking,
        SemanticClass::Sidewalk,
        SemanticClass::Obstacle,
        SemanticClass::Unknown,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Road => "road",
            SemanticClass::Crosswalk => "crosswalk",
            SemanticClass::LaneMarking => "lane_marking",
            SemanticClass::Sidewalk => "sidewalk",
            SemanticClass::Obstacle => "obstacle",
            SemanticClass::Unknown => "unknown",
        }
    }

    /// Road surface the ego vehicle may drive over.
    pub fn is_road_surface(self) -> bool {
        matches!(
            self,
            SemanticClass::Road | SemanticClass::Crosswalk | SemanticClass::LaneMarking
        )
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class vote counts, indexed by class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteCounts(pub [u32; SemanticClass::COUNT]);

impl VoteCounts {
    pub fn from_pairs<I: IntoIterator<Item = (SemanticClass, u32)>>(pairs: I) -> Self {
        let mut v = Self::default();
        for (c, n) in pairs {
            v.0[c as usize] += n;
        }
        v
    }

    pub fn add(&mut self, class: SemanticClass, n: u32) {
        self.0[class as usize] += n;
    }

    pub fn get(&self, class: SemanticClass) -> u32 {
        self.0[class as usize]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

/// Majority label over the vote multiset; ties go to the lowest class id.
pub fn winner_take_all(votes: &VoteCounts) -> Result<SemanticClass> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &n) in votes.0.iter().enumerate() {
        if n > 0 && best.is_none_or(|(_, b)| n > b) {
            best = Some((i, n));
        }
    }
    best.map(|(i, _)| SemanticClass::ALL[i]).ok_or(Error::NoVotes)
}

/// A reconstructed 3D point with the segmentation labels of every image it
/// was visible in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticPoint {
    pub position: Vec3,
    pub votes: VoteCounts,
    pub resolved: Option<SemanticClass>,
}

impl SemanticPoint {
    pub fn new(position: Vec3, votes: VoteCounts) -> Self {
        Self {
            position,
            votes,
            resolved: None,
        }
    }

    pub fn resolve(&mut self) -> Result<SemanticClass> {
        let c = winner_take_all(&self.votes)?;
        self.resolved = Some(c);
        Ok(c)
    }

    /// Points seen in a single image carry no cross-view agreement.
    pub fn is_single_view(&self) -> bool {
        self.votes.total() == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::rect(0.0, 0.0, 1.0, 1.0)
    }

    #[test]
    fn unit_square_membership() {
        let sq = unit_square();
        assert!(point_in_polygon(Vec2::new(0.5, 0.5), &sq));
        assert!(point_in_polygon(Vec2::new(1.0, 0.5), &sq));
        assert!(point_in_polygon(Vec2::new(0.0, 0.0), &sq));
        assert!(!point_in_polygon(Vec2::new(1.5, 0.5), &sq));
        assert!(!point_in_polygon(Vec2::new(0.5, -1e-9), &sq));
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(matches!(
            Polygon::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]),
            Err(Error::InvalidPolygon(_))
        ));
        // clockwise
        assert!(Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ])
        .is_err());
        // bow tie has zero signed area
        assert!(Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ])
        .is_err());
        // self-intersecting with positive area
        assert!(Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 4.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(0.0, 4.0),
        ])
        .is_err());
        assert!(Polygon::new(vec![Vec2::ZERO, Vec2::new(f64::NAN, 0.0), Vec2::new(0.0, 1.0)]).is_err());
    }

    #[test]
    fn concave_polygon() {
        // L shape
        let l = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 2.0),
            Vec2::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(l.contains(Vec2::new(0.5, 1.5)));
        assert!(!l.contains(Vec2::new(1.5, 1.5)));
        assert!(l.contains(Vec2::new(1.5, 1.0)));
        assert!((l.area() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wta_cases() {
        let v = VoteCounts::from_pairs([(SemanticClass::Road, 5), (SemanticClass::Crosswalk, 2)]);
        assert_eq!(winner_take_all(&v).unwrap(), SemanticClass::Road);
        let v = VoteCounts::from_pairs([(SemanticClass::Road, 3), (SemanticClass::Crosswalk, 3)]);
        assert_eq!(winner_take_all(&v).unwrap(), SemanticClass::Road);
        let v = VoteCounts::from_pairs([(SemanticClass::Unknown, 1)]);
        assert_eq!(winner_take_all(&v).unwrap(), SemanticClass::Unknown);
        assert!(matches!(winner_take_all(&VoteCounts::default()), Err(Error::NoVotes)));
    }

    #[test]
    fn ground_projection() {
        assert_eq!(project_to_ground(Vec3::new(1.0, 2.0, 0.7)), Vec2::new(1.0, 2.0));
        assert_eq!(project_to_ground(Vec3::new(0.0, 0.0, 0.0)), Vec2::ZERO);
        let p = Vec3::new(-3.5, 8.25, 12.0);
        let g = project_to_ground(p);
        assert_eq!(project_to_ground(Vec3::new(g.x, g.y, 0.0)), g);
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((angle_diff(-3.0, 3.0) - (2.0 * PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn convex_overlap() {
        let a = Polygon::rect(0.0, 0.0, 2.0, 2.0);
        let b = Polygon::rect(1.0, 1.0, 3.0, 3.0);
        assert!((a.convex_intersection_area(&b) - 1.0).abs() < 1e-12);
        assert!((a.convex_iou(&b) - 1.0 / 7.0).abs() < 1e-12);
        let c = Polygon::rect(2.0, 0.0, 4.0, 2.0);
        assert!(a.convex_intersection_area(&c).abs() < 1e-12);
    }
}
