//! Downstream uses of the SRP representation: a frozen-backbone intention
//! head, and risk-object identification by masking objects one at a time and
//! measuring how much a behaviour model's output moves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::nn::{argmax, cross_entropy, softmax, Adam, Linear, Tensor};
use crate::sim::{mix_seed, Episode};
use crate::srp::{forward, SrpConfig, SrpParams, TrainConfig, TrainReport};
use crate::topology::{AffordedAction, Centerline, SemanticRegion};

pub const N_INTENTIONS: usize = 5;
pub const DEFAULT_FUSED_DIM: usize = 100;
/// Width of the fixed frame embedding g_f in risk scenes.
pub const FRAME_EMBED_DIM: usize = 16;
/// Object message layout: lateral, forward, lateral speed, forward speed,
/// crossing flag, conflict urgency.
pub const MESSAGE_DIM: usize = 6;
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentHead {
    pub linear: Linear,
}

impl IntentHead {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            linear: Linear::zeros(N_INTENTIONS, input_dim),
        }
    }

    pub fn init(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            linear: Linear::xavier(N_INTENTIONS, input_dim, &mut rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.linear.in_dim()
    }
}

pub fn intent_predict(head: &IntentHead, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != head.input_dim() {
        return Err(Error::LengthMismatch {
            left: h.len(),
            right: head.input_dim(),
        });
    }
    Ok(softmax(&head.linear.forward(h)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSample {
    pub window: Vec<Vec<f64>>,
    /// Frames between the window's last frame and the anchor event.
    pub horizon: usize,
    pub gt_intention: AffordedAction,
}

/// Frame at which the manoeuvre becomes committed: entry into the junction
/// box or onto a lane marking. A straight run on a multi-lane road has no such
/// event and is anchored where a lane change would start crossing.
pub fn intent_anchor(ep: &Episode) -> Option<usize> {
    use SemanticRegion::*;
    let committed = |r: &SemanticRegion| matches!(r, B1 | B2 | B3 | NCL | NCR);
    if let Some(k) = ep.gt_regions.iter().position(committed) {
        return Some(k);
    }
    if !ep.topology.kind.is_intersection() {
        // the lane-change sigmoid reaches the marking strip a quarter of the
        // way across, at -scale * ln 3 along the road
        let y = -crate::topology::LANE_CHANGE_SCALE * 3f64.ln();
        return ep.true_poses.iter().position(|p| p.position.y >= y);
    }
    None
}

/// The window ending `lead` frames before the anchor, or `None` when the
/// episode is too short.
pub fn intent_sample(ep: &Episode, t_e: usize, lead: usize) -> Option<IntentSample> {
    let anchor = intent_anchor(ep)?;
    if lead == 0 || anchor < lead + t_e - 1 {
        return None;
    }
    let end = anchor - lead;
    Some(IntentSample {
        window: ep.features[end + 1 - t_e..=end].iter().map(|f| f.to_vec()).collect(),
        horizon: lead,
        gt_intention: ep.gt_intention,
    })
}

/// STA state for a window under the inference pass.
pub fn srp_representation(srp: &SrpParams, cfg: &SrpConfig, window: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(forward(srp, cfg, window)?.final_hidden().to_vec())
}

/// Ablation input: the raw feature vector averaged over the window.
pub fn mean_feature(window: &[Vec<f64>]) -> Vec<f64> {
    let n = window.len().max(1) as f64;
    let mut m = vec![0.0; window.first().map_or(0, Vec::len)];
    for x in window {
        for (a, v) in m.iter_mut().zip(x) {
            *a += v / n;
        }
    }
    m
}

fn sample_loss(lin: &Linear, x: &[f64], y: usize) -> f64 {
    cross_entropy(&lin.forward(x), y).0
}

fn mean_loss(lin: &Linear, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let losses: Vec<f64> = inputs
        .par_iter()
        .zip(labels)
        .map(|(x, &y)| sample_loss(lin, x, y))
        .collect();
    losses.iter().sum::<f64>() / losses.len().max(1) as f64
}

/// Mini-batch Adam on a softmax-linear classifier. Gradients are summed in
/// batch order, so results are independent of the thread count.
pub fn train_linear_classifier(
    init: Linear,
    inputs: &[Vec<f64>],
    labels: &[usize],
    hyper: &TrainConfig,
) -> Result<(Linear, TrainReport)> {
    use rand::seq::SliceRandom;

    if inputs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: inputs.len(),
            right: labels.len(),
        });
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != init.in_dim()) {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: init.in_dim(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= init.out_dim()) {
        return Err(Error::InvalidTarget(format!("class {y} of {}", init.out_dim())));
    }
    let mut lin = init;
    let mut opt = Adam::new(hyper.adam, &[&lin.w, &lin.b]);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, 0x4EAD));
    let initial_loss = mean_loss(&lin, inputs, labels);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let grads: Vec<Linear> = chunk
                .par_iter()
                .map(|&i| {
                    let (_, dz) = cross_entropy(&lin.forward(&inputs[i]), labels[i]);
                    let mut g = Linear::zeros(lin.out_dim(), lin.in_dim());
                    lin.backward(&inputs[i], &dz, &mut g, None);
                    g
                })
                .collect();
            let mut gw = Tensor::zeros(lin.w.rows, lin.w.cols);
            let mut gb = Tensor::zeros(lin.b.rows, 1);
            let scale = 1.0 / chunk.len() as f64;
            for g in &grads {
                gw.add_scaled(&g.w, scale);
                gb.add_scaled(&g.b, scale);
            }
            opt.step(vec![&mut lin.w, &mut lin.b], &[&gw, &gb]);
        }
        epoch_losses.push(mean_loss(&lin, inputs, labels));
    }
    Ok((
        lin,
        TrainReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

/// Trains only the head on STA states of the frozen SRP. The SRP digest is
/// checked after training and a change is reported as an error.
pub fn train_intent(
    head: IntentHead,
    samples: &[IntentSample],
    srp: &SrpParams,
    srp_cfg: &SrpConfig,
    hyper: &TrainConfig,
) -> Result<(IntentHead, TrainReport)> {
    let before = srp.digest();
    let inputs = samples
        .par_iter()
        .map(|s| srp_representation(srp, srp_cfg, &s.window))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.gt_intention.class_id()).collect();
    let (linear, report) = train_linear_classifier(head.linear, &inputs, &labels, hyper)?;
    if srp.digest() != before {
        return Err(Error::InvalidParameter(
            "SRP parameters changed during head training".into(),
        ));
    }
    Ok((IntentHead { linear }, report))
}

/// Ablation: the same head on the window-mean raw feature.
pub fn train_intent_ablation(
    head: IntentHead,
    samples: &[IntentSample],
    hyper: &TrainConfig,
) -> Result<(IntentHead, TrainReport)> {
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| mean_feature(&s.window)).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.gt_intention.class_id()).collect();
    let (linear, report) = train_linear_classifier(head.linear, &inputs, &labels, hyper)?;
    Ok((IntentHead { linear }, report))
}

/// Axis-aligned image-plane box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRect {
    pub min: Vec2,
    pub max: Vec2,
}

impl BoxRect {
    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x).max(0.0) * (self.max.y - self.min.y).max(0.0)
    }

    /// Intersection over union; zero-area boxes score 0.
    pub fn iou(&self, o: &BoxRect) -> f64 {
        let (a, b) = (self.area(), o.area());
        if a <= 0.0 || b <= 0.0 {
            return 0.0;
        }
        let w = (self.max.x.min(o.max.x) - self.min.x.max(o.min.x)).max(0.0);
        let h = (self.max.y.min(o.max.y) - self.min.y.max(o.min.y)).max(0.0);
        let inter = w * h;
        inter / (a + b - inter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScene {
    /// Frame-level feature g_f.
    pub frame_repr: Vec<f64>,
    /// Object messages g_k.
    pub objects: Vec<Vec<f64>>,
    pub boxes: Vec<BoxRect>,
    pub gt_risk_index: usize,
    /// Ego feature window the STA state is computed from.
    pub ego_window: Vec<Vec<f64>>,
    /// Time at which each object first reaches the ego path, if it does.
    pub conflict_times: Vec<Option<f64>>,
}

impl RiskScene {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::NoObjects);
        }
        if self.boxes.len() != self.objects.len() {
            return Err(Error::LengthMismatch {
                left: self.boxes.len(),
                right: self.objects.len(),
            });
        }
        if self.gt_risk_index >= self.objects.len() {
            return Err(Error::InvalidTarget(format!("risk index {}", self.gt_risk_index)));
        }
        let finite = |v: &Vec<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.frame_repr) || !self.objects.iter().all(finite) {
            return Err(Error::InvalidParameter("non-finite scene vector".into()));
        }
        Ok(())
    }

    /// `g_f ⊕ mean of unmasked g_k`.
    fn pooled(&self, masked: &[usize]) -> Result<Vec<f64>> {
        if self.objects.is_empty() {
            return Err(Error::NoObjects);
        }
        let kept: Vec<&Vec<f64>> = self
            .objects
            .iter()
            .enumerate()
            .filter(|(k, _)| !masked.contains(k))
            .map(|(_, g)| g)
            .collect();
        if kept.is_empty() {
            return Err(Error::AllObjectsMasked);
        }
        let mut out = self.frame_repr.clone();
        out.extend(mean_feature(&kept.into_iter().cloned().collect::<Vec<_>>()));
        Ok(out)
    }
}

/// Linear map of the pooled scene vector, `W_ego (g_f ⊕ mean g_k) + b_ego`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoFusion {
    pub linear: Linear,
}

impl EgoFusion {
    pub fn init(fused_dim: usize, input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            linear: Linear::xavier(fused_dim, input_dim, &mut rng),
        }
    }
}

/// Un-fused scene representation `g_f ⊕ mean g_k`.
pub fn plain_fuse(scene: &RiskScene, masked: &[usize]) -> Result<Vec<f64>> {
    scene.pooled(masked)
}

/// SRP-guided representation `(W_ego (g_f ⊕ mean g_k) + b_ego) ⊕ h`.
pub fn ego_fuse(scene: &RiskScene, fusion: &EgoFusion, h: &[f64], masked: &[usize]) -> Result<Vec<f64>> {
    let pooled = scene.pooled(masked)?;
    if pooled.len() != fusion.linear.in_dim() {
        return Err(Error::LengthMismatch {
            left: pooled.len(),
            right: fusion.linear.in_dim(),
        });
    }
    let mut out = fusion.linear.forward(&pooled);
    out.extend_from_slice(h);
    Ok(out)
}

/// Masks each object in turn and scores it by the L1 change of the behaviour
/// output. Returns the highest-scoring index (lowest on ties) and all scores.
/// A lone object cannot be masked against anything and scores 0.
pub fn risk_identify<F>(scene: &RiskScene, behavior: F) -> Result<(usize, Vec<f64>)>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    let n = scene.objects.len();
    if n == 0 {
        return Err(Error::NoObjects);
    }
    if n == 1 {
        return Ok((0, vec![0.0]));
    }
    let full = behavior(&[])?;
    let scores = (0..n)
        .into_par_iter()
        .map(|k| {
            let p = behavior(&[k])?;
            if p.len() != full.len() {
                return Err(Error::LengthMismatch {
                    left: p.len(),
                    right: full.len(),
                });
            }
            Ok(full.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((argmax(&scores), scores))
}

/// Go / yield classifier over a fused scene vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    /// `None` selects the un-fused representation.
    pub fusion: Option<EgoFusion>,
    pub head: Linear,
}

pub const GO: usize = 0;
pub const YIELD: usize = 1;

impl BehaviorModel {
    pub fn represent(&self, scene: &RiskScene, h: &[f64], masked: &[usize]) -> Result<Vec<f64>> {
        match &self.fusion {
            None => plain_fuse(scene, masked),
            Some(f) => ego_fuse(scene, f, h, masked),
        }
    }

    pub fn probabilities(&self, scene: &RiskScene, h: &[f64], masked: &[usize]) -> Result<Vec<f64>> {
        Ok(softmax(&self.head.forward(&self.represent(scene, h, masked)?)))
    }

    pub fn identify(&self, scene: &RiskScene, h: &[f64]) -> Result<(usize, Vec<f64>)> {
        risk_identify(scene, |m| self.probabilities(scene, h, m))
    }
}

/// Fits the behaviour model on scenes labelled go / yield; `hidden[i]` is
/// the STA state for scene `i` (ignored by the un-fused variant). The fusion
/// layer, when present, is trained jointly with the head.
pub fn train_behavior(
    fusion: Option<EgoFusion>,
    scenes: &[RiskScene],
    hidden: &[Vec<f64>],
    labels: &[usize],
    hyper: &TrainConfig,
) -> Result<(BehaviorModel, TrainReport)> {
    use rand::seq::SliceRandom;

    if scenes.is_empty() {
        return Err(Error::Empty("training scenes"));
    }
    for (left, right) in [(hidden.len(), scenes.len()), (labels.len(), scenes.len())] {
        if left != right {
            return Err(Error::LengthMismatch { left, right });
        }
    }
    if let Some(&y) = labels.iter().find(|&&y| y > YIELD) {
        return Err(Error::InvalidTarget(format!("behaviour class {y}")));
    }
    let pooled = scenes.par_iter().map(|s| s.pooled(&[])).collect::<Result<Vec<_>>>()?;
    let mut model = BehaviorModel {
        fusion,
        head: Linear::zeros(2, 0),
    };
    let dim = model.represent(&scenes[0], &hidden[0], &[])?.len();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, 0xBE4A));
    model.head = Linear::xavier(2, dim, &mut rng);

    let fused = |m: &BehaviorModel, i: usize| -> Vec<f64> {
        match &m.fusion {
            None => pooled[i].clone(),
            Some(f) => {
                let mut v = f.linear.forward(&pooled[i]);
                v.extend_from_slice(&hidden[i]);
                v
            }
        }
    };
    let loss = |m: &BehaviorModel| -> f64 {
        let l: Vec<f64> = (0..scenes.len())
            .into_par_iter()
            .map(|i| cross_entropy(&m.head.forward(&fused(m, i)), labels[i]).0)
            .collect();
        l.iter().sum::<f64>() / l.len() as f64
    };

    let params = |m: &BehaviorModel| -> Vec<Tensor> {
        let mut v = vec![m.head.w.clone(), m.head.b.clone()];
        if let Some(f) = &m.fusion {
            v.push(f.linear.w.clone());
            v.push(f.linear.b.clone());
        }
        v
    };
    let shapes = params(&model);
    let mut opt = Adam::new(hyper.adam, &shapes.iter().collect::<Vec<_>>());
    let initial_loss = loss(&model);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, 0x4EAD));
    for _ in 0..hyper.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let grads: Vec<Vec<Tensor>> = chunk
                .par_iter()
                .map(|&i| {
                    let x = fused(&model, i);
                    let (_, dz) = cross_entropy(&model.head.forward(&x), labels[i]);
                    let mut gh = Linear::zeros(2, x.len());
                    let mut dx = vec![0.0; x.len()];
                    model.head.backward(&x, &dz, &mut gh, Some(&mut dx));
                    let mut out = vec![gh.w, gh.b];
                    if let Some(f) = &model.fusion {
                        let mut gf = Linear::zeros(f.linear.out_dim(), f.linear.in_dim());
                        f.linear.backward(&pooled[i], &dx[..f.linear.out_dim()], &mut gf, None);
                        out.push(gf.w);
                        out.push(gf.b);
                    }
                    out
                })
                .collect();
            let mut total: Vec<Tensor> = shapes.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
            let scale = 1.0 / chunk.len() as f64;
            for g in &grads {
                for (t, gi) in total.iter_mut().zip(g) {
                    t.add_scaled(gi, scale);
                }
            }
            let mut targets = vec![&mut model.head.w, &mut model.head.b];
            if let Some(f) = model.fusion.as_mut() {
                targets.push(&mut f.linear.w);
                targets.push(&mut f.linear.b);
            }
            opt.step(targets, &total.iter().collect::<Vec<_>>());
        }
        epoch_losses.push(loss(&model));
    }
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxMetrics {
    pub acc_50: f64,
    pub acc_75: f64,
    pub mean_acc: f64,
}

pub fn risk_box_metrics(pred: &[BoxRect], gt: &[BoxRect]) -> Result<BoxMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("box pairs"));
    }
    let ious: Vec<f64> = pred.iter().zip(gt).map(|(a, b)| a.iou(b)).collect();
    let acc = |tau: f64| ious.iter().filter(|&&v| v >= tau).count() as f64 / ious.len() as f64;
    Ok(BoxMetrics {
        acc_50: acc(0.5),
        acc_75: acc(0.75),
        mean_acc: IOU_THRESHOLDS.iter().map(|&t| acc(t)).sum::<f64>() / IOU_THRESHOLDS.len() as f64,
    })
}

/// Parameters of the synthetic crossing-traffic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskSceneConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Look-ahead over which paths are compared, seconds.
    pub horizon_s: f64,
    pub time_step_s: f64,
    /// An object within this distance of the ego path is on a conflicting course.
    pub conflict_radius: f64,
    /// Earliest conflict sooner than this labels the scene as yield, per ego
    /// manoeuvre: left turn, straight, right turn. Turning traffic yields
    /// earlier than through traffic; lane changes use the straight value.
    pub yield_threshold_s: [f64; 3],
    /// Required gap between the earliest and second conflict in the
    /// evaluation suite, so the ground truth is unambiguous.
    pub min_margin_s: f64,
    pub ego_speed: f64,
    /// Probability that an object is aimed at the ego path.
    pub aimed_fraction: f64,
}

impl Default for RiskSceneConfig {
    fn default() -> Self {
        Self {
            min_objects: 3,
            max_objects: 6,
            horizon_s: 6.0,
            time_step_s: 0.1,
            conflict_radius: 1.5,
            yield_threshold_s: [4.5, 2.0, 3.5],
            min_margin_s: 0.5,
            ego_speed: 8.0,
            aimed_fraction: 0.2,
        }
    }
}

/// Where the ego is and what it observed: its path, arc position and the
/// feature window preceding the scene.
#[derive(Debug, Clone)]
pub struct EgoContext {
    pub action: AffordedAction,
    pub path: Centerline,
    pub start_s: f64,
    pub window: Vec<Vec<f64>>,
}

impl EgoContext {
    /// Ego context at the last frame of the intention window of `ep`.
    pub fn from_episode(ep: &Episode, t_e: usize, lead: usize) -> Result<Self> {
        let sample = intent_sample(ep, t_e, lead).ok_or(Error::Empty("episode too short for a window"))?;
        let end = intent_anchor(ep).expect("sample implies anchor") - lead;
        let path = ep.topology.centerline(ep.action)?;
        let start_s = path.project(ep.true_poses[end].position);
        Ok(Self {
            action: ep.action,
            path,
            start_s,
            window: sample.window,
        })
    }

    fn pose_at(&self, t: f64, speed: f64) -> (Vec2, f64) {
        self.path.at(self.start_s + speed * t)
    }
}

/// Fixed embedding of the last ego frame used as g_f.
pub fn frame_embedding(feature_dim: usize) -> Linear {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF4A3E);
    Linear::xavier(FRAME_EMBED_DIM, feature_dim, &mut rng)
}

const FOCAL: f64 = 800.0;
const PRINCIPAL: Vec2 = Vec2 { x: 640.0, y: 360.0 };
const OBJECT_WIDTH: f64 = 1.8;
const OBJECT_HEIGHT: f64 = 1.6;
const CAMERA_HEIGHT: f64 = 1.4;
const MIN_DEPTH: f64 = 4.0;

fn image_box(lateral: f64, depth: f64) -> BoxRect {
    let u = PRINCIPAL.x + FOCAL * lateral / depth;
    let half = 0.5 * FOCAL * OBJECT_WIDTH / depth;
    BoxRect {
        min: Vec2::new(u - half, PRINCIPAL.y - FOCAL * (OBJECT_HEIGHT - CAMERA_HEIGHT) / depth),
        max: Vec2::new(u + half, PRINCIPAL.y + FOCAL * CAMERA_HEIGHT / depth),
    }
}

struct Mover {
    start: Vec2,
    velocity: Vec2,
}

/// First time the object comes within the conflict radius of any point the
/// ego will drive over inside the horizon.
fn conflict_time(ego_path: &[Vec2], m: &Mover, cfg: &RiskSceneConfig) -> Option<f64> {
    let steps = (cfg.horizon_s / cfg.time_step_s).round() as usize;
    (0..=steps).map(|i| i as f64 * cfg.time_step_s).find(|&t| {
        let p = m.start + m.velocity * t;
        ego_path.iter().any(|q| q.distance(p) <= cfg.conflict_radius)
    })
}

fn sample_mover<R: Rng>(ctx: &EgoContext, ego_path: &[Vec2], cfg: &RiskSceneConfig, rng: &mut R) -> Mover {
    let (ego, heading) = ctx.pose_at(0.0, cfg.ego_speed);
    let speed = rng.random_range(3.0..10.0);
    if rng.random_bool(cfg.aimed_fraction) {
        // aim at a random point of the ego path from a crossing direction
        let target = ego_path[rng.random_range(ego_path.len() / 6..ego_path.len())];
        let (_, path_heading) = ctx.path.at(ctx.path.project(target));
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let dir = Vec2::from_heading(path_heading + side * rng.random_range(0.6..2.5));
        let arrival = rng.random_range(0.5..cfg.horizon_s - 0.5);
        Mover {
            start: target - dir * (speed * arrival),
            velocity: dir * speed,
        }
    } else {
        let fwd = Vec2::from_heading(heading);
        let right = Vec2::new(fwd.y, -fwd.x);
        let start = ego + fwd * rng.random_range(MIN_DEPTH..40.0) + right * rng.random_range(-25.0..25.0);
        Mover {
            start,
            velocity: Vec2::from_heading(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)) * speed,
        }
    }
}

/// One scene with a random number of objects. With `need_risk` the scene is
/// redrawn until some object conflicts and the earliest conflict leads the
/// next one by the configured margin. Returns the scene and its go / yield
/// label.
pub fn make_risk_scene<R: Rng>(
    ctx: &EgoContext,
    embed: &Linear,
    cfg: &RiskSceneConfig,
    need_risk: bool,
    rng: &mut R,
) -> (RiskScene, usize) {
    let steps = (cfg.horizon_s / cfg.time_step_s).round() as usize;
    let ego_path: Vec<Vec2> = (0..=steps)
        .map(|i| ctx.pose_at(i as f64 * cfg.time_step_s, cfg.ego_speed).0)
        .collect();
    let (ego, heading) = ctx.pose_at(0.0, cfg.ego_speed);
    let fwd = Vec2::from_heading(heading);
    let right = Vec2::new(fwd.y, -fwd.x);
    let frame_repr = embed.forward(ctx.window.last().expect("non-empty window"));

    loop {
        let n = rng.random_range(cfg.min_objects..=cfg.max_objects);
        let mut movers = Vec::with_capacity(n);
        while movers.len() < n {
            let m = sample_mover(ctx, &ego_path, cfg, rng);
            // visible in front of the camera at scene time
            if (m.start - ego).dot(fwd) >= MIN_DEPTH {
                movers.push(m);
            }
        }
        let times: Vec<Option<f64>> = movers.iter().map(|m| conflict_time(&ego_path, m, cfg)).collect();
        let mut sorted: Vec<f64> = times.iter().flatten().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let earliest = sorted.first().copied();
        if need_risk {
            match (sorted.first(), sorted.get(1)) {
                (None, _) => continue,
                (Some(a), Some(b)) if b - a < cfg.min_margin_s => continue,
                _ => {}
            }
        }
        let gt_risk_index = earliest.map_or(0, |e| times.iter().position(|t| *t == Some(e)).expect("present"));
        let objects = movers
            .iter()
            .zip(&times)
            .map(|(m, t)| {
                let d = m.start - ego;
                let v = m.velocity - fwd * cfg.ego_speed;
                vec![
                    d.dot(right) / 20.0,
                    d.dot(fwd) / 20.0,
                    v.dot(right) / 10.0,
                    v.dot(fwd) / 10.0,
                    f64::from(u8::from(t.is_some())),
                    t.map_or(0.0, |t| (-t / 2.0).exp()),
                ]
            })
            .collect();
        let boxes = movers
            .iter()
            .map(|m| {
                let d = m.start - ego;
                image_box(d.dot(right), d.dot(fwd))
            })
            .collect();
        let threshold = match ctx.action {
            AffordedAction::LeftTurn => cfg.yield_threshold_s[0],
            AffordedAction::RightTurn => cfg.yield_threshold_s[2],
            _ => cfg.yield_threshold_s[1],
        };
        let label = if earliest.is_some_and(|e| e < threshold) {
            YIELD
        } else {
            GO
        };
        let scene = RiskScene {
            frame_repr: frame_repr.clone(),
            objects,
            boxes,
            gt_risk_index,
            ego_window: ctx.window.clone(),
            conflict_times: times,
        };
        return (scene, label);
    }
}

/// `count` scenes, scene `i` drawn from its own stream of `seed` and ego
/// context `i % contexts.len()`.
pub fn risk_suite(
    contexts: &[EgoContext],
    cfg: &RiskSceneConfig,
    count: usize,
    need_risk: bool,
    seed: u64,
) -> Result<(Vec<RiskScene>, Vec<usize>)> {
    if contexts.is_empty() {
        return Err(Error::Empty("ego contexts"));
    }
    if cfg.min_objects == 0 || cfg.min_objects > cfg.max_objects {
        return Err(Error::InvalidParameter("object count range".into()));
    }
    let feature_dim = contexts[0].window.last().map_or(0, Vec::len);
    let embed = frame_embedding(feature_dim);
    let pairs: Vec<(RiskScene, usize)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
            make_risk_scene(&contexts[i % contexts.len()], &embed, cfg, need_risk, &mut rng)
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_is_uniform() {
        let p = intent_predict(&IntentHead::zeros(4), &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert!(intent_predict(&IntentHead::zeros(4), &[1.0]).is_err());
    }

    #[test]
    fn box_iou_cases() {
        let a = BoxRect {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(2.0, 2.0),
        };
        let b = BoxRect {
            min: Vec2::new(1.0, 0.0),
            max: Vec2::new(3.0, 2.0),
        };
        assert_eq!(a.iou(&a), 1.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        let flat = BoxRect {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(0.0, 2.0),
        };
        assert_eq!(flat.iou(&flat), 0.0);
    }
}
