//! Ground-plane semantic grid built from resolved points, plus crosswalk and
//! junction detection on that grid.
//!
//! Cell `(row, col)` covers `origin + (col, row) * resolution` up to the next
//! multiple; row 0 is the southern edge.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_to_ground, winner_take_all, Polygon, SemanticClass, SemanticPoint, Vec2, VoteCounts};

pub const DEFAULT_RESOLUTION: f64 = 0.5;
/// Multiple of the total road width a road-surface run must exceed, in both
/// axes, for a cell to count as junction when no crosswalks are found.
pub const CROSS_KERNEL_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    classes: Vec<SemanticClass>,
    votes: Vec<VoteCounts>,
}

impl BevGrid {
    /// Empty grid whose origin is snapped to a multiple of `resolution` and
    /// which covers `lo..hi`.
    pub fn covering(lo: Vec2, hi: Vec2, resolution: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidParameter("resolution must be > 0".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi.x < lo.x || hi.y < lo.y {
            return Err(Error::InvalidParameter("grid bounds are not a finite box".into()));
        }
        let c0 = (lo.x / resolution).floor();
        let r0 = (lo.y / resolution).floor();
        let width = ((hi.x / resolution).floor() - c0) as usize + 1;
        let height = ((hi.y / resolution).floor() - r0) as usize + 1;
        Ok(Self {
            origin: Vec2::new(c0 * resolution, r0 * resolution),
            resolution,
            width,
            height,
            classes: vec![SemanticClass::Unknown; width * height],
            votes: vec![VoteCounts::default(); width * height],
        })
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn class(&self, row: usize, col: usize) -> SemanticClass {
        self.classes[row * self.width + col]
    }

    pub fn votes(&self, row: usize, col: usize) -> &VoteCounts {
        &self.votes[row * self.width + col]
    }

    /// Class under a world point; `Unknown` outside the grid.
    pub fn class_at(&self, p: Vec2) -> SemanticClass {
        self.cell_of(p)
            .map_or(SemanticClass::Unknown, |(r, c)| self.class(r, c))
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.iter().map(|v| v.total() as u64).sum()
    }

    /// Overwrites a single cell, keeping its class consistent with its votes.
    pub fn set_votes(&mut self, row: usize, col: usize, votes: VoteCounts) {
        let i = row * self.width + col;
        self.votes[i] = votes;
        self.classes[i] = winner_take_all(&votes).unwrap_or(SemanticClass::Unknown);
    }

    /// Accumulates one vote per point into its cell, then resolves every cell.
    pub fn accumulate(&mut self, points: &[SemanticPoint]) {
        for p in points {
            let Some(class) = p.resolved.or_else(|| winner_take_all(&p.votes).ok()) else {
                continue;
            };
            if let Some((r, c)) = self.cell_of(project_to_ground(p.position)) {
                self.votes[r * self.width + c].add(class, 1);
            }
        }
        for (cls, v) in self.classes.iter_mut().zip(&self.votes) {
            *cls = winner_take_all(v).unwrap_or(SemanticClass::Unknown);
        }
    }

    /// Binary portable graymap, north up, pixel value = class id * 42.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut row_bytes = vec![0u8; self.width];
        for r in (0..self.height).rev() {
            for (c, b) in row_bytes.iter_mut().enumerate() {
                *b = self.class(r, c).id() * 42;
            }
            out.write_all(&row_bytes)?;
        }
        Ok(())
    }

    /// `row,col,class_id,total_votes` per cell in row-major order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,class_id,total_votes")?;
        for r in 0..self.height {
            for c in 0..self.width {
                writeln!(
                    out,
                    "{},{},{},{}",
                    r,
                    c,
                    self.class(r, c).id(),
                    self.votes(r, c).total()
                )?;
            }
        }
        Ok(())
    }
}

/// Grid just large enough for every point.
pub fn rasterize(points: &[SemanticPoint], resolution: f64) -> Result<BevGrid> {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = Vec2::new(lo.x.min(p.position.x), lo.y.min(p.position.y));
        hi = Vec2::new(hi.x.max(p.position.x), hi.y.max(p.position.y));
    }
    if points.is_empty() {
        lo = Vec2::ZERO;
        hi = Vec2::ZERO;
    }
    rasterize_within(points, resolution, lo, hi)
}

/// Grid covering `lo..hi`; points outside are dropped.
pub fn rasterize_within(points: &[SemanticPoint], resolution: f64, lo: Vec2, hi: Vec2) -> Result<BevGrid> {
    let mut g = BevGrid::covering(lo, hi, resolution)?;
    g.accumulate(points);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkComponent {
    /// `(row, col)` cells in row-major order.
    pub cells: Vec<(usize, usize)>,
    pub footprint: Polygon,
    /// Visit order along a trajectory, -1 until assigned.
    pub order_index: i32,
}

/// 4-connected components of crosswalk cells with at least `min_cells` cells,
/// in order of their first cell in row-major scan.
pub fn extract_crosswalks(g: &BevGrid, min_cells: usize) -> Vec<CrosswalkComponent> {
    let mut seen = vec![false; g.width * g.height];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.width * g.height {
        if seen[start] || g.classes[start] != SemanticClass::Crosswalk {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / g.width, i % g.width);
            cells.push((r, c));
            let mut visit = |j: usize| {
                if !seen[j] && g.classes[j] == SemanticClass::Crosswalk {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - g.width);
            }
            if r + 1 < g.height {
                visit(i + g.width);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < g.width {
                visit(i + 1);
            }
        }
        if cells.len() >= min_cells.max(1) {
            cells.sort_unstable();
            let footprint = cell_hull(g, &cells);
            out.push(CrosswalkComponent {
                cells,
                footprint,
                order_index: -1,
            });
        }
    }
    out
}

fn cell_hull(g: &BevGrid, cells: &[(usize, usize)]) -> Polygon {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for &(r, c) in cells {
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let res = g.resolution;
    Polygon::rect(
        g.origin.x + c0 as f64 * res,
        g.origin.y + r0 as f64 * res,
        g.origin.x + (c1 + 1) as f64 * res,
        g.origin.y + (r1 + 1) as f64 * res,
    )
}

/// Minimum component size for crosswalks of the given footprint area.
pub fn min_component_cells(crosswalk_area: f64, resolution: f64) -> usize {
    (0.5 * crosswalk_area / (resolution * resolution)).ceil().max(1.0) as usize
}

/// Junction square of the grid.
///
/// With two or more crosswalk components the core is bounded by the inner
/// edges of the crosswalks around the junction; sides without a crosswalk are
/// mirrored from the opposite side. Otherwise every road-surface cell whose
/// horizontal and vertical road runs both exceed `1.5 * road_width` votes for
/// the junction and the core is the bounding box of those cells. Empty cells
/// with at least three road neighbours do not break a run.
pub fn detect_intersection_core(g: &BevGrid, road_width: f64) -> Option<Polygon> {
    let comps = extract_crosswalks(g, 1);
    let min_cells = comps.iter().map(|c| c.cells.len()).max().unwrap_or(0) / 4;
    let comps: Vec<_> = comps
        .into_iter()
        .filter(|c| c.cells.len() >= min_cells.max(1))
        .collect();
    if comps.len() >= 2 {
        if let Some(core) = core_from_crosswalks(&comps) {
            return Some(core);
        }
    }
    core_from_kernel(g, road_width)
}

fn core_from_crosswalks(comps: &[CrosswalkComponent]) -> Option<Polygon> {
    // Crosswalks across north/south arms are wider than tall.
    let boxes: Vec<(Vec2, Vec2)> = comps.iter().map(|c| c.footprint.bbox()).collect();
    let (across_ns, across_ew): (Vec<_>, Vec<_>) = boxes.iter().partition(|(lo, hi)| hi.x - lo.x >= hi.y - lo.y);
    let mid = |b: &(Vec2, Vec2)| (b.0 + b.1) * 0.5;
    let mean = |v: &[&(Vec2, Vec2)], f: fn(Vec2) -> f64| -> Option<f64> {
        (!v.is_empty()).then(|| v.iter().map(|b| f(mid(b))).sum::<f64>() / v.len() as f64)
    };
    let cx =
        mean(&across_ns, |p| p.x).or_else(|| (across_ew.len() >= 2).then(|| mean(&across_ew, |p| p.x)).flatten())?;
    let cy =
        mean(&across_ew, |p| p.y).or_else(|| (across_ns.len() >= 2).then(|| mean(&across_ns, |p| p.y)).flatten())?;

    let nearest = |v: &[&(Vec2, Vec2)], pick: &dyn Fn(&(Vec2, Vec2)) -> Option<f64>| {
        v.iter().filter_map(|b| pick(b)).min_by(f64::total_cmp)
    };
    // distances from the centre to each inner edge
    let south = nearest(&across_ns, &|b| (mid(b).y < cy).then_some(cy - b.1.y));
    let north = nearest(&across_ns, &|b| (mid(b).y > cy).then_some(b.0.y - cy));
    let west = nearest(&across_ew, &|b| (mid(b).x < cx).then_some(cx - b.1.x));
    let east = nearest(&across_ew, &|b| (mid(b).x > cx).then_some(b.0.x - cx));

    let pair = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => Some((a, b)),
        (Some(a), None) => Some((a, a)),
        (None, Some(b)) => Some((b, b)),
        (None, None) => None,
    };
    let ns = pair(south, north);
    let ew = pair(west, east);
    let ((s, n), (w, e)) = match (ns, ew) {
        (Some(ns), Some(ew)) => (ns, ew),
        (Some(ns), None) => (ns, ns),
        (None, Some(ew)) => (ew, ew),
        (None, None) => return None,
    };
    if s <= 0.0 || n <= 0.0 || w <= 0.0 || e <= 0.0 {
        return None;
    }
    Some(Polygon::rect(cx - w, cy - s, cx + e, cy + n))
}

fn core_from_kernel(g: &BevGrid, road_width: f64) -> Option<Polygon> {
    let need = CROSS_KERNEL_FACTOR * road_width / g.resolution;
    let road = |r: usize, c: usize| g.class(r, c).is_road_surface();
    // empty cells mostly surrounded by road are sampling holes, not edges
    let surface = |r: usize, c: usize| {
        road(r, c)
            || (g.class(r, c) == SemanticClass::Unknown && {
                let n = [
                    r > 0 && road(r - 1, c),
                    r + 1 < g.height && road(r + 1, c),
                    c > 0 && road(r, c - 1),
                    c + 1 < g.width && road(r, c + 1),
                ];
                n.iter().filter(|&&b| b).count() >= 3
            })
    };
    let mut row_run = vec![0usize; g.width * g.height];
    for r in 0..g.height {
        let mut c = 0;
        while c < g.width {
            if !surface(r, c) {
                c += 1;
                continue;
            }
            let start = c;
            while c < g.width && surface(r, c) {
                c += 1;
            }
            for k in start..c {
                row_run[r * g.width + k] = c - start;
            }
        }
    }
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for c in 0..g.width {
        let mut r = 0;
        while r < g.height {
            if !surface(r, c) {
                r += 1;
                continue;
            }
            let start = r;
            while r < g.height && surface(r, c) {
                r += 1;
            }
            if ((r - start) as f64) <= need {
                continue;
            }
            for k in start..r {
                if row_run[k * g.width + c] as f64 > need {
                    let b = bounds.get_or_insert((k, k, c, c));
                    *b = (b.0.min(k), b.1.max(k), b.2.min(c), b.3.max(c));
                }
            }
        }
    }
    let (r0, r1, c0, c1) = bounds?;
    let res = g.resolution;
    Some(Polygon::rect(
        g.origin.x + c0 as f64 * res,
        g.origin.y + r0 as f64 * res,
        g.origin.x + (c1 + 1) as f64 * res,
        g.origin.y + (r1 + 1) as f64 * res,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn point(x: f64, y: f64, class: SemanticClass) -> SemanticPoint {
        let mut p = SemanticPoint::new(Vec3::new(x, y, 0.0), VoteCounts::from_pairs([(class, 1)]));
        p.resolve().unwrap();
        p
    }

    #[test]
    fn single_point_lands_in_origin_cell() {
        let g = rasterize(&[point(0.25, 0.25, SemanticClass::Road)], 0.5).unwrap();
        assert_eq!((g.width, g.height), (1, 1));
        assert_eq!(g.class(0, 0), SemanticClass::Road);
        assert_eq!(g.origin, Vec2::ZERO);
    }

    #[test]
    fn cell_tie_goes_to_lower_id() {
        let pts = [
            point(0.1, 0.1, SemanticClass::Crosswalk),
            point(0.2, 0.3, SemanticClass::Road),
        ];
        let g = rasterize(&pts, 0.5).unwrap();
        assert_eq!(g.class(0, 0), SemanticClass::Road);
    }

    #[test]
    fn isolated_cell_is_filtered() {
        let mut g = BevGrid::covering(Vec2::ZERO, Vec2::new(9.9, 9.9), 1.0).unwrap();
        for r in 2..4 {
            for c in 1..8 {
                g.set_votes(r, c, VoteCounts::from_pairs([(SemanticClass::Crosswalk, 1)]));
            }
        }
        assert_eq!(extract_crosswalks(&g, 4).len(), 1);
        g.set_votes(8, 8, VoteCounts::from_pairs([(SemanticClass::Crosswalk, 3)]));
        assert_eq!(extract_crosswalks(&g, 4).len(), 1);
        assert_eq!(extract_crosswalks(&g, 1).len(), 2);
        let c = &extract_crosswalks(&g, 4)[0];
        assert_eq!(c.footprint.bbox(), (Vec2::new(1.0, 2.0), Vec2::new(8.0, 4.0)));
        assert_eq!(c.order_index, -1);
    }

    #[test]
    fn diagonal_cells_are_separate() {
        let mut g = BevGrid::covering(Vec2::ZERO, Vec2::new(1.5, 1.5), 1.0).unwrap();
        g.set_votes(0, 0, VoteCounts::from_pairs([(SemanticClass::Crosswalk, 1)]));
        g.set_votes(1, 1, VoteCounts::from_pairs([(SemanticClass::Crosswalk, 1)]));
        assert_eq!(extract_crosswalks(&g, 1).len(), 2);
    }

    #[test]
    fn pgm_header_and_size() {
        let g = BevGrid::covering(Vec2::ZERO, Vec2::new(2.9, 0.9), 1.0).unwrap();
        let mut buf = Vec::new();
        g.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(buf.len(), 11 + 3);
        assert!(buf[11..].iter().all(|&b| b == 5 * 42));
    }

    #[test]
    fn no_crosswalks_no_road() {
        let g = BevGrid::covering(Vec2::ZERO, Vec2::new(5.0, 5.0), 0.5).unwrap();
        assert!(detect_intersection_core(&g, 7.0).is_none());
    }
}
