//! Synthetic ego trajectories, semantic point clouds and labeled episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::bev::{self, BevGrid};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, Pose, SemanticClass, SemanticPoint, Vec2, Vec3, VoteCounts};
use crate::topology::{ground_truth_region, AffordedAction, RoadTopology, SemanticRegion};

/// Ranges (m) of the ego-frame sampling fan.
pub const FAN_RANGES: [f64; 3] = [5.0, 12.0, 25.0];
/// Bearings (degrees, positive = left) of the ego-frame sampling fan.
pub const FAN_BEARINGS_DEG: [f64; 8] = [-60.0, -36.0, -12.0, 12.0, 36.0, 60.0, -90.0, 90.0];
pub const FAN_SIZE: usize = FAN_RANGES.len() * FAN_BEARINGS_DEG.len();
pub const FEATURE_DIM: usize = FAN_SIZE * SemanticClass::COUNT + 2;
/// Fraction of a frame step used as the first sample's arc-length offset, so
/// frames do not land exactly on region boundaries.
const START_PHASE: f64 = 0.37;
const BEV_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub speed_mps: f64,
    pub frame_hz: f64,
    pub heading_noise_std: f64,
    pub position_noise_std: f64,
    pub pose_dropout_rate: f64,
    /// Points per square metre of mapped ground.
    pub point_density: f64,
    pub label_flip_rate: f64,
    pub votes_per_point: u32,
    pub bev_resolution: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            speed_mps: 8.0,
            frame_hz: 5.0,
            heading_noise_std: 0.02,
            position_noise_std: 0.1,
            pose_dropout_rate: 0.02,
            point_density: 24.0,
            label_flip_rate: 0.1,
            votes_per_point: 5,
            bev_resolution: bev::DEFAULT_RESOLUTION,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Noise-free configuration with the same geometry and sampling rates.
    pub fn clean() -> Self {
        Self {
            heading_noise_std: 0.0,
            position_noise_std: 0.0,
            pose_dropout_rate: 0.0,
            label_flip_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !pos(self.speed_mps) || !pos(self.frame_hz) {
            return bad("speed_mps and frame_hz must be > 0");
        }
        if !nonneg(self.heading_noise_std) || !nonneg(self.position_noise_std) {
            return bad("noise standard deviations must be >= 0");
        }
        if !unit(self.pose_dropout_rate) || !unit(self.label_flip_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if !nonneg(self.point_density) {
            return bad("point_density must be >= 0");
        }
        if self.votes_per_point == 0 {
            return bad("votes_per_point must be >= 1");
        }
        if !pos(self.bev_resolution) {
            return bad("bev_resolution must be > 0");
        }
        Ok(())
    }

    pub fn frame_step(&self) -> f64 {
        self.speed_mps / self.frame_hz
    }
}

/// Derives an independent stream seed from a base seed and a tag.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 finaliser over the combined words
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRAJECTORY_STREAM: u64 = 1;
const POINT_STREAM: u64 = 2;

fn stream(t: &RoadTopology, cfg: &SimConfig, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(cfg.seed, t.params.seed), tag))
}

/// Noise-free poses along the action's centreline at the configured speed.
pub fn ideal_trajectory(t: &RoadTopology, action: AffordedAction, cfg: &SimConfig) -> Result<Vec<Pose>> {
    cfg.validate()?;
    let line = t.centerline(action)?;
    let step = cfg.frame_step();
    let mut poses = Vec::new();
    let mut s = START_PHASE * step;
    while s <= line.length() {
        let (p, h) = line.at(s);
        poses.push(Pose::new(p, h, poses.len() as u32));
        s += step;
    }
    Ok(poses)
}

/// Observed poses: the ideal trajectory with Gaussian jitter and dropout.
pub fn synthesize_trajectory(t: &RoadTopology, action: AffordedAction, cfg: &SimConfig) -> Result<Vec<Pose>> {
    let ideal = ideal_trajectory(t, action, cfg)?;
    Ok(observe(&ideal, cfg, &mut stream(t, cfg, TRAJECTORY_STREAM)))
}

fn observe(ideal: &[Pose], cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let pos_noise = Normal::new(0.0, cfg.position_noise_std).expect("validated std");
    let head_noise = Normal::new(0.0, cfg.heading_noise_std).expect("validated std");
    ideal
        .iter()
        .map(|p| {
            let dx = pos_noise.sample(rng);
            let dy = pos_noise.sample(rng);
            let dh = head_noise.sample(rng);
            let dropped = rng.random::<f64>() < cfg.pose_dropout_rate;
            let mut q = Pose::new(p.position + Vec2::new(dx, dy), p.heading + dh, p.frame_index);
            q.localized = !dropped;
            q
        })
        .collect()
}

/// Poisson point process over every mapped surface; each point receives
/// `votes_per_point` segmentation votes, each flipped to a uniformly chosen
/// wrong class with probability `label_flip_rate`.
pub fn sample_point_cloud(t: &RoadTopology, cfg: &SimConfig) -> Result<Vec<SemanticPoint>> {
    cfg.validate()?;
    let mut rng = stream(t, cfg, POINT_STREAM);
    let (lo, hi) = t.bounds();
    let area = (hi.x - lo.x) * (hi.y - lo.y);
    if area.is_nan() || area <= 0.0 || cfg.point_density == 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(cfg.point_density * area)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(&mut rng) as usize;
    let mut points = Vec::new();
    for _ in 0..count {
        let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        let truth = t.surface_class(p);
        let mut votes = VoteCounts::default();
        for _ in 0..cfg.votes_per_point {
            // draw unconditionally so off-map candidates keep the stream aligned
            let flip = rng.random::<f64>() < cfg.label_flip_rate;
            let other = rng.random_range(0..SemanticClass::COUNT as u8 - 1);
            if let Some(truth) = truth {
                let class = if flip {
                    let id = if other >= truth.id() { other + 1 } else { other };
                    SemanticClass::from_id(id).expect("class id in range")
                } else {
                    truth
                };
                votes.add(class, 1);
            }
        }
        if truth.is_some() {
            let mut sp = SemanticPoint::new(Vec3::new(p.x, p.y, 0.0), votes);
            sp.resolve()?;
            points.push(sp);
        }
    }
    Ok(points)
}

/// Ego-frame observation vector for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeature {
    /// One-hot BEV class per fan sample, flattened sample-major.
    pub occupancy: Vec<f64>,
    pub ego_speed: f64,
    pub ego_yaw_rate: f64,
}

impl FrameFeature {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.occupancy.clone();
        v.push(self.ego_speed);
        v.push(self.ego_yaw_rate);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != FEATURE_DIM {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: FEATURE_DIM,
            });
        }
        Ok(Self {
            occupancy: v[..FEATURE_DIM - 2].to_vec(),
            ego_speed: v[FEATURE_DIM - 2],
            ego_yaw_rate: v[FEATURE_DIM - 1],
        })
    }
}

/// World positions of the fan samples for a camera at `pose`.
pub fn fan_points(position: Vec2, heading: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(FAN_SIZE);
    for r in FAN_RANGES {
        for b in FAN_BEARINGS_DEG {
            out.push(position + Vec2::from_heading(heading + b.to_radians()) * r);
        }
    }
    out
}

pub fn frame_feature(grid: &BevGrid, position: Vec2, heading: f64, speed: f64, yaw_rate: f64) -> FrameFeature {
    let mut occupancy = vec![0.0; FAN_SIZE * SemanticClass::COUNT];
    for (i, p) in fan_points(position, heading).into_iter().enumerate() {
        occupancy[i * SemanticClass::COUNT + grid.class_at(p).id() as usize] = 1.0;
    }
    FrameFeature {
        occupancy,
        ego_speed: speed,
        ego_yaw_rate: yaw_rate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub topology: RoadTopology,
    pub action: AffordedAction,
    /// Reconstructed (noisy) poses as the labeler sees them.
    pub poses: Vec<Pose>,
    /// Noise-free poses the ground truth is computed from.
    pub true_poses: Vec<Pose>,
    pub features: Vec<FrameFeature>,
    pub gt_regions: Vec<SemanticRegion>,
    pub gt_topology_class: u8,
    pub gt_intention: AffordedAction,
    pub points: Vec<SemanticPoint>,
    pub grid: BevGrid,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Assembles trajectory, point cloud, BEV, per-frame features and
/// ground-truth labels. Features are sampled at the true poses.
pub fn make_episode(t: &RoadTopology, action: AffordedAction, cfg: &SimConfig) -> Result<Episode> {
    let true_poses = ideal_trajectory(t, action, cfg)?;
    let poses = observe(&true_poses, cfg, &mut stream(t, cfg, TRAJECTORY_STREAM));
    let points = sample_point_cloud(t, cfg)?;
    let (lo, hi) = t.bounds();
    let margin = Vec2::new(BEV_MARGIN, BEV_MARGIN);
    let grid = bev::rasterize_within(&points, cfg.bev_resolution, lo - margin, hi + margin)?;

    let n = true_poses.len();
    let features = (0..n)
        .map(|k| {
            let (a, b) = if k + 1 < n {
                (k, k + 1)
            } else {
                (k.saturating_sub(1), k)
            };
            let yaw_rate = if a == b {
                0.0
            } else {
                angle_diff(true_poses[b].heading, true_poses[a].heading) * cfg.frame_hz
            };
            let p = &true_poses[k];
            frame_feature(&grid, p.position, p.heading, cfg.speed_mps, yaw_rate)
        })
        .collect();

    let gt_regions = true_poses
        .iter()
        .map(|p| {
            ground_truth_region(t, action, p.position)?
                .ok_or_else(|| Error::InvalidParameter(format!("frame {} leaves the region partition", p.frame_index)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Episode {
        topology: t.clone(),
        action,
        poses,
        true_poses,
        features,
        gt_regions,
        gt_topology_class: t.kind.topology_class(),
        gt_intention: action,
        points,
        grid,
    })
}
