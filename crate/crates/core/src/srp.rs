//! Semantic region prediction: a gated recurrent encoder over a short window
//! of frame features, a decoder unrolled over the future horizon from every
//! encoder state, a topology classifier and two topology-conditional region
//! classifiers whose logits are embedded and fed back as decoder input.
//!
//! The feedback embedding and the decoder-region loss only use the region
//! classifier selected by the gating topology: the ground-truth topology when
//! training, the predicted topology at inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, cross_entropy, Adam, AdamConfig, CellTrace, GatedCell, Linear, Tensor};
use crate::topology::{INTERSECTION, NON_INTERSECTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrpConfig {
    pub t_e: usize,
    pub t_d: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub n_regions_intersection: usize,
    pub n_regions_non: usize,
    pub logit_embed_dim: usize,
}

impl Default for SrpConfig {
    fn default() -> Self {
        Self {
            t_e: 3,
            t_d: 5,
            feature_dim: crate::sim::FEATURE_DIM,
            hidden_dim: 64,
            n_regions_intersection: 13,
            n_regions_non: 5,
            logit_embed_dim: 16,
        }
    }
}

impl SrpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_e == 0 || self.t_d == 0 {
            return Err(Error::InvalidParameter("t_e and t_d must be >= 1".into()));
        }
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.logit_embed_dim == 0 {
            return Err(Error::InvalidParameter("dimensions must be >= 1".into()));
        }
        if self.n_regions_intersection != 13 || self.n_regions_non != 5 {
            return Err(Error::InvalidParameter(
                "region vocabularies are fixed at 13 and 5".into(),
            ));
        }
        Ok(())
    }

    fn vocab(&self, classifier: usize) -> usize {
        if classifier == INTERSECTION {
            self.n_regions_intersection
        } else {
            self.n_regions_non
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrpParams {
    pub encoder: GatedCell,
    pub decoder: GatedCell,
    pub topology: Linear,
    pub region_non: Linear,
    pub region_int: Linear,
    pub expand_non: Linear,
    pub expand_int: Linear,
}

pub const TENSOR_NAMES: [&str; 18] = [
    "encoder.update.w",
    "encoder.update.b",
    "encoder.candidate.w",
    "encoder.candidate.b",
    "decoder.update.w",
    "decoder.update.b",
    "decoder.candidate.w",
    "decoder.candidate.b",
    "topology.w",
    "topology.b",
    "region_non.w",
    "region_non.b",
    "region_int.w",
    "region_int.b",
    "expand_non.w",
    "expand_non.b",
    "expand_int.w",
    "expand_int.b",
];

impl SrpParams {
    pub fn zeros(cfg: &SrpConfig) -> Self {
        let (h, e) = (cfg.hidden_dim, cfg.logit_embed_dim);
        Self {
            encoder: GatedCell::zeros(cfg.feature_dim + e, h),
            decoder: GatedCell::zeros(e, h),
            topology: Linear::zeros(2, h),
            region_non: Linear::zeros(cfg.n_regions_non, h),
            region_int: Linear::zeros(cfg.n_regions_intersection, h),
            expand_non: Linear::zeros(e, cfg.n_regions_non),
            expand_int: Linear::zeros(e, cfg.n_regions_intersection),
        }
    }

    /// Glorot-uniform weights, zero biases, drawn from `seed`.
    pub fn init(cfg: &SrpConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, e) = (cfg.hidden_dim, cfg.logit_embed_dim);
        Self {
            encoder: GatedCell::xavier(cfg.feature_dim + e, h, &mut rng),
            decoder: GatedCell::xavier(e, h, &mut rng),
            topology: Linear::xavier(2, h, &mut rng),
            region_non: Linear::xavier(cfg.n_regions_non, h, &mut rng),
            region_int: Linear::xavier(cfg.n_regions_intersection, h, &mut rng),
            expand_non: Linear::xavier(e, cfg.n_regions_non, &mut rng),
            expand_int: Linear::xavier(e, cfg.n_regions_intersection, &mut rng),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 18] {
        [
            &self.encoder.update.w,
            &self.encoder.update.b,
            &self.encoder.candidate.w,
            &self.encoder.candidate.b,
            &self.decoder.update.w,
            &self.decoder.update.b,
            &self.decoder.candidate.w,
            &self.decoder.candidate.b,
            &self.topology.w,
            &self.topology.b,
            &self.region_non.w,
            &self.region_non.b,
            &self.region_int.w,
            &self.region_int.b,
            &self.expand_non.w,
            &self.expand_non.b,
            &self.expand_int.w,
            &self.expand_int.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 18] {
        [
            &mut self.encoder.update.w,
            &mut self.encoder.update.b,
            &mut self.encoder.candidate.w,
            &mut self.encoder.candidate.b,
            &mut self.decoder.update.w,
            &mut self.decoder.update.b,
            &mut self.decoder.candidate.w,
            &mut self.decoder.candidate.b,
            &mut self.topology.w,
            &mut self.topology.b,
            &mut self.region_non.w,
            &mut self.region_non.b,
            &mut self.region_int.w,
            &mut self.region_int.b,
            &mut self.expand_non.w,
            &mut self.expand_non.b,
            &mut self.expand_int.w,
            &mut self.expand_int.b,
        ]
    }

    pub fn shapes_match(&self, cfg: &SrpConfig) -> bool {
        let want = SrpParams::zeros(cfg);
        let ok = self.tensors().iter().zip(want.tensors()).all(|(a, b)| a.same_shape(b));
        ok
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn add_scaled(&mut self, o: &SrpParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(o.tensors()) {
            a.add_scaled(b, scale);
        }
    }

    /// SHA-256 over the little-endian bytes of every tensor, hex encoded.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in self.tensors() {
            h.update((t.rows as u64).to_le_bytes());
            h.update((t.cols as u64).to_le_bytes());
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_sq()).sum::<f64>().sqrt()
    }

    fn expansion(&self, i: usize) -> &Linear {
        if i == INTERSECTION {
            &self.expand_int
        } else {
            &self.expand_non
        }
    }
}

/// Logits and hidden states of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrpOutputs {
    /// Topology logits per encoder step (index 1 = intersection).
    pub topology: Vec<Vec<f64>>,
    pub encoder_non: Vec<Vec<f64>>,
    pub encoder_int: Vec<Vec<f64>>,
    /// Decoder logits unrolled from the last encoder state; step 0 is the
    /// current frame.
    pub decoder_non: Vec<Vec<f64>>,
    pub decoder_int: Vec<Vec<f64>>,
    /// Encoder hidden state per step; the last one is the STA state.
    pub hidden: Vec<Vec<f64>>,
    /// Decoder hidden states of the last unroll.
    pub decoder_hidden: Vec<Vec<f64>>,
    /// Topology that selected the fed-back classifier per encoder step.
    pub gate: Vec<u8>,
}

impl SrpOutputs {
    pub fn final_hidden(&self) -> &[f64] {
        self.hidden.last().expect("t_e >= 1")
    }

    fn encoder_logits(&self, i: usize) -> &Vec<Vec<f64>> {
        if i == INTERSECTION {
            &self.encoder_int
        } else {
            &self.encoder_non
        }
    }

    fn decoder_logits(&self, i: usize) -> &Vec<Vec<f64>> {
        if i == INTERSECTION {
            &self.decoder_int
        } else {
            &self.decoder_non
        }
    }
}

struct DecoderStep {
    cell: CellTrace,
    q: [Vec<f64>; 2],
}

struct Trace {
    encoder: Vec<CellTrace>,
    decoder: Vec<Vec<DecoderStep>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTarget {
    /// Topology class per encoder frame.
    pub topology: Vec<u8>,
    /// Region index per encoder frame in the vocabulary of that frame's
    /// topology; `None` is unsupervised.
    pub regions: Vec<Option<usize>>,
    /// Region index for frames `last, last+1, ...` of the horizon; `None`
    /// marks steps past the episode end or unlabeled frames.
    pub future: Vec<Option<usize>>,
}

impl TrainingTarget {
    pub fn validate(&self, cfg: &SrpConfig) -> Result<()> {
        if self.topology.len() != cfg.t_e || self.regions.len() != cfg.t_e {
            return Err(Error::LengthMismatch {
                left: self.topology.len().max(self.regions.len()),
                right: cfg.t_e,
            });
        }
        if self.future.len() != cfg.t_d {
            return Err(Error::LengthMismatch {
                left: self.future.len(),
                right: cfg.t_d,
            });
        }
        for (t, &o) in self.topology.iter().enumerate() {
            if o > 1 {
                return Err(Error::InvalidTarget(format!("topology class {o} at step {t}")));
            }
            if let Some(s) = self.regions[t] {
                if s >= cfg.vocab(o as usize) {
                    return Err(Error::InvalidTarget(format!("region {s} at step {t} for topology {o}")));
                }
            }
        }
        let last = *self.topology.last().expect("t_e >= 1") as usize;
        if let Some(s) = self.future.iter().flatten().find(|&&s| s >= cfg.vocab(last)) {
            return Err(Error::InvalidTarget(format!("future region {s} for topology {last}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub topology: f64,
    pub encoder_region: f64,
    pub decoder_region: f64,
}

fn check_window(cfg: &SrpConfig, window: &[Vec<f64>]) -> Result<()> {
    if window.len() != cfg.t_e {
        return Err(Error::Shape(format!(
            "window of {} frames, expected {}",
            window.len(),
            cfg.t_e
        )));
    }
    if let Some(x) = window.iter().find(|x| x.len() != cfg.feature_dim) {
        return Err(Error::Shape(format!(
            "feature of length {}, expected {}",
            x.len(),
            cfg.feature_dim
        )));
    }
    Ok(())
}

fn run(params: &SrpParams, cfg: &SrpConfig, window: &[Vec<f64>], gate: Option<&[u8]>) -> Result<(SrpOutputs, Trace)> {
    cfg.validate()?;
    check_window(cfg, window)?;
    if !params.shapes_match(cfg) {
        return Err(Error::Shape("parameters do not match the model config".into()));
    }
    let (h_dim, e_dim) = (cfg.hidden_dim, cfg.logit_embed_dim);
    let mut out = SrpOutputs {
        topology: Vec::new(),
        encoder_non: Vec::new(),
        encoder_int: Vec::new(),
        decoder_non: Vec::new(),
        decoder_int: Vec::new(),
        hidden: Vec::new(),
        decoder_hidden: Vec::new(),
        gate: Vec::new(),
    };
    let mut trace = Trace {
        encoder: Vec::new(),
        decoder: Vec::new(),
    };
    let mut h = vec![0.0; h_dim];
    let mut summary = vec![0.0; e_dim];
    for (t, x) in window.iter().enumerate() {
        let mut input = x.clone();
        input.extend_from_slice(&summary);
        let cell = params.encoder.step(&input, &h);
        h = cell.h.clone();
        trace.encoder.push(cell);

        let z = params.topology.forward(&h);
        let sel = match gate {
            Some(g) => g[t] as usize,
            None => argmax(&z),
        };
        out.gate.push(sel as u8);
        out.topology.push(z);
        out.encoder_non.push(params.region_non.forward(&h));
        out.encoder_int.push(params.region_int.forward(&h));

        let expand = params.expansion(sel);
        let mut g = h.clone();
        let mut v = vec![0.0; e_dim];
        summary = vec![0.0; e_dim];
        let mut steps = Vec::with_capacity(cfg.t_d);
        for _ in 0..cfg.t_d {
            let cell = params.decoder.step(&v, &g);
            g = cell.h.clone();
            let q = [params.region_non.forward(&g), params.region_int.forward(&g)];
            let next = expand.forward(&q[sel]);
            for (s, n) in summary.iter_mut().zip(&next) {
                *s += n / cfg.t_d as f64;
            }
            v = next;
            steps.push(DecoderStep { cell, q });
        }
        if t + 1 == cfg.t_e {
            for s in &steps {
                out.decoder_non.push(s.q[NON_INTERSECTION].clone());
                out.decoder_int.push(s.q[INTERSECTION].clone());
                out.decoder_hidden.push(s.cell.h.clone());
            }
        }
        out.hidden.push(h.clone());
        trace.decoder.push(steps);
    }
    Ok((out, trace))
}

/// Inference pass: the fed-back classifier follows the predicted topology.
pub fn forward(params: &SrpParams, cfg: &SrpConfig, window: &[Vec<f64>]) -> Result<SrpOutputs> {
    run(params, cfg, window, None).map(|(o, _)| o)
}

/// Training pass: the fed-back classifier follows the given topology per step.
pub fn forward_gated(params: &SrpParams, cfg: &SrpConfig, window: &[Vec<f64>], gate: &[u8]) -> Result<SrpOutputs> {
    if gate.len() != cfg.t_e || gate.iter().any(|&g| g > 1) {
        return Err(Error::InvalidTarget("gate must hold t_e topology classes".into()));
    }
    run(params, cfg, window, Some(gate)).map(|(o, _)| o)
}

struct LogitGrads {
    topology: Vec<Vec<f64>>,
    encoder: Vec<[Vec<f64>; 2]>,
    decoder: Vec<[Vec<f64>; 2]>,
}

fn loss_with_grads(out: &SrpOutputs, target: &TrainingTarget, cfg: &SrpConfig) -> Result<(LossBreakdown, LogitGrads)> {
    target.validate(cfg)?;
    let mut lb = LossBreakdown::default();
    let zeros = |n: usize| vec![0.0; n];
    let mut grads = LogitGrads {
        topology: Vec::new(),
        encoder: Vec::new(),
        decoder: (0..cfg.t_d)
            .map(|_| [zeros(cfg.n_regions_non), zeros(cfg.n_regions_intersection)])
            .collect(),
    };
    for t in 0..cfg.t_e {
        let o = target.topology[t] as usize;
        let (l, g) = cross_entropy(&out.topology[t], o);
        lb.topology += l;
        grads.topology.push(g);
        let mut enc = [zeros(cfg.n_regions_non), zeros(cfg.n_regions_intersection)];
        if let Some(s) = target.regions[t] {
            let (l, g) = cross_entropy(&out.encoder_logits(o)[t], s);
            lb.encoder_region += l;
            enc[o] = g;
        }
        grads.encoder.push(enc);
    }
    let o = *target.topology.last().expect("t_e >= 1") as usize;
    let supervised = target.future.iter().flatten().count();
    if supervised > 0 {
        let scale = 1.0 / supervised as f64;
        for (m, s) in target.future.iter().enumerate() {
            if let Some(s) = *s {
                let (l, mut g) = cross_entropy(&out.decoder_logits(o)[m], s);
                lb.decoder_region += scale * l;
                g.iter_mut().for_each(|v| *v *= scale);
                grads.decoder[m][o] = g;
            }
        }
    }
    lb.total = lb.topology + lb.encoder_region + lb.decoder_region;
    Ok((lb, grads))
}

/// Topology cross-entropy over every encoder step plus the region losses of
/// the classifier each step's ground-truth topology selects; decoder losses
/// are averaged over the unmasked horizon steps.
pub fn srp_loss(out: &SrpOutputs, target: &TrainingTarget, cfg: &SrpConfig) -> Result<LossBreakdown> {
    loss_with_grads(out, target, cfg).map(|(l, _)| l)
}

/// Loss and its exact gradient w.r.t. every parameter, with the feedback gate
/// set to the target topology.
pub fn backward(
    params: &SrpParams,
    cfg: &SrpConfig,
    window: &[Vec<f64>],
    target: &TrainingTarget,
) -> Result<(LossBreakdown, SrpParams)> {
    target.validate(cfg)?;
    let (out, trace) = run(params, cfg, window, Some(&target.topology))?;
    let (loss, dl) = loss_with_grads(&out, target, cfg)?;
    let mut grad = SrpParams::zeros(cfg);
    let (h_dim, e_dim) = (cfg.hidden_dim, cfg.logit_embed_dim);
    let classifiers = [&params.region_non, &params.region_int];

    let mut dh_next = vec![0.0; h_dim];
    let mut dsummary = vec![0.0; e_dim];
    for t in (0..cfg.t_e).rev() {
        let h = &trace.encoder[t].h;
        let mut dh = std::mem::take(&mut dh_next);
        params
            .topology
            .backward(h, &dl.topology[t], &mut grad.topology, Some(&mut dh));
        params
            .region_non
            .backward(h, &dl.encoder[t][0], &mut grad.region_non, Some(&mut dh));
        params
            .region_int
            .backward(h, &dl.encoder[t][1], &mut grad.region_int, Some(&mut dh));

        // decoder unroll from h
        let sel = out.gate[t] as usize;
        let expand = params.expansion(sel);
        let steps = &trace.decoder[t];
        let last = t + 1 == cfg.t_e;
        let mut dv_next = vec![0.0; e_dim];
        let mut dg_next = vec![0.0; h_dim];
        for m in (0..cfg.t_d).rev() {
            let step = &steps[m];
            let mut dv: Vec<f64> = dsummary.iter().map(|d| d / cfg.t_d as f64).collect();
            for (a, b) in dv.iter_mut().zip(&dv_next) {
                *a += b;
            }
            let mut dq = if last {
                dl.decoder[m].clone()
            } else {
                [vec![0.0; cfg.n_regions_non], vec![0.0; cfg.n_regions_intersection]]
            };
            let grad_expand = if sel == INTERSECTION {
                &mut grad.expand_int
            } else {
                &mut grad.expand_non
            };
            expand.backward(&step.q[sel], &dv, grad_expand, Some(&mut dq[sel]));
            let mut dg = std::mem::take(&mut dg_next);
            let g = &step.cell.h;
            classifiers[0].backward(g, &dq[0], &mut grad.region_non, Some(&mut dg));
            classifiers[1].backward(g, &dq[1], &mut grad.region_int, Some(&mut dg));
            let (dinput, dg_prev) = params.decoder.backward(&step.cell, &dg, &mut grad.decoder);
            dv_next = dinput;
            dg_next = dg_prev;
        }
        for (a, b) in dh.iter_mut().zip(&dg_next) {
            *a += b;
        }
        let (dinput, dh_prev) = params.encoder.backward(&trace.encoder[t], &dh, &mut grad.encoder);
        dsummary = dinput[cfg.feature_dim..].to_vec();
        dh_next = dh_prev;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub topology_class: u8,
    pub current_region: usize,
    /// Horizon predictions; step 0 is the current frame.
    pub future_regions: Vec<usize>,
}

/// Predicted topology at the last encoder step selects the region vocabulary.
pub fn predict(params: &SrpParams, cfg: &SrpConfig, window: &[Vec<f64>]) -> Result<Prediction> {
    let out = forward(params, cfg, window)?;
    Ok(prediction_from(&out))
}

pub fn prediction_from(out: &SrpOutputs) -> Prediction {
    let topo = argmax(out.topology.last().expect("t_e >= 1"));
    Prediction {
        topology_class: topo as u8,
        current_region: argmax(out.encoder_logits(topo).last().expect("t_e >= 1")),
        future_regions: out.decoder_logits(topo).iter().map(|q| argmax(q)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the dataset before any update.
    pub initial_loss: f64,
    /// Mean loss over the dataset after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub type Sample = (Vec<Vec<f64>>, TrainingTarget);

/// Mean loss over a dataset with the training-time gate.
pub fn dataset_loss(params: &SrpParams, cfg: &SrpConfig, data: &[Sample]) -> Result<f64> {
    let losses = data
        .par_iter()
        .map(|(w, t)| {
            let out = forward_gated(params, cfg, w, &t.topology)?;
            srp_loss(&out, t, cfg).map(|l| l.total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mini-batch Adam from `SrpParams::init(cfg, hyper.seed)`. Per-sample
/// gradients are computed in parallel and summed in batch order, so the
/// result does not depend on the thread count.
pub fn train(cfg: &SrpConfig, data: &[Sample], hyper: &TrainConfig) -> Result<(SrpParams, TrainReport)> {
    train_from(SrpParams::init(cfg, hyper.seed), cfg, data, hyper)
}

pub fn train_from(
    mut params: SrpParams,
    cfg: &SrpConfig,
    data: &[Sample],
    hyper: &TrainConfig,
) -> Result<(SrpParams, TrainReport)> {
    use rand::seq::SliceRandom;

    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    for (_, t) in data {
        t.validate(cfg)?;
    }
    let batch = hyper.batch_size.max(1);
    let mut opt = Adam::new(hyper.adam, &params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(crate::sim::mix_seed(hyper.seed, 0x7EA1));
    let initial_loss = dataset_loss(&params, cfg, data)?;
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let grads = chunk
                .par_iter()
                .map(|&i| backward(&params, cfg, &data[i].0, &data[i].1).map(|(_, g)| g))
                .collect::<Result<Vec<_>>>()?;
            let mut total = SrpParams::zeros(cfg);
            for g in &grads {
                total.add_scaled(g, 1.0 / chunk.len() as f64);
            }
            opt.step(params.tensors_mut().into_iter().collect(), &total.tensors());
        }
        epoch_losses.push(dataset_loss(&params, cfg, data)?);
    }
    Ok((
        params,
        TrainReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SrpConfig {
        SrpConfig {
            feature_dim: 6,
            hidden_dim: 4,
            logit_embed_dim: 3,
            t_e: 2,
            t_d: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let cfg = small();
        let p = SrpParams::zeros(&cfg);
        let w = vec![vec![0.3; 6]; 2];
        let out = forward(&p, &cfg, &w).unwrap();
        assert!(out.topology.iter().flatten().all(|&v| v == 0.0));
        assert!(out.decoder_int.iter().flatten().all(|&v| v == 0.0));
        let pr = prediction_from(&out);
        assert_eq!(pr.topology_class, 0);
        assert_eq!(pr.current_region, 0);
    }

    #[test]
    fn wrong_window_is_rejected() {
        let cfg = small();
        let p = SrpParams::zeros(&cfg);
        assert!(forward(&p, &cfg, &[vec![0.0; 6]]).is_err());
        assert!(forward(&p, &cfg, &[vec![0.0; 5], vec![0.0; 6]]).is_err());
    }

    #[test]
    fn invalid_target_index() {
        let cfg = small();
        let t = TrainingTarget {
            topology: vec![0, 0],
            regions: vec![Some(5), None],
            future: vec![None; 3],
        };
        assert!(matches!(t.validate(&cfg), Err(Error::InvalidTarget(_))));
    }
}
