//! End-to-end commands behind the CLI. Each command reads its inputs, writes
//! its artifacts under the configured output directory and returns a
//! serializable report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{MixEntry, RunConfig};
use crate::dataset::{episode_records, srp_windows, Dataset, DatasetHeader, LabelSource, Split};
use crate::error::{Error, Result};
use crate::heads::{
    intent_predict, intent_sample, mean_feature, risk_box_metrics, risk_suite, srp_representation, train_behavior,
    train_intent, train_intent_ablation, BehaviorModel, BoxMetrics, EgoContext, EgoFusion, IntentHead, IntentSample,
    FRAME_EMBED_DIM, MESSAGE_DIM,
};
use crate::labeler::{label_episode, LabelerParams};
use crate::metrics::{compute_metrics, MetricsReport, PredictionRecord};
use crate::nn::{argmax, softmax};
use crate::sim::{make_episode, mix_seed, Episode};
use crate::srp::{forward, train, SrpConfig, SrpParams, TrainConfig, TENSOR_NAMES};
use crate::topology::{build_topology, SemanticRegion, TopologyKind, INTERSECTION, NON_INTERSECTION};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const INTENT_FILE: &str = "intent.jsonl";
pub const SRP_CHECKPOINT: &str = "srp.ckpt";
pub const INTENT_CHECKPOINT: &str = "intent.ckpt";
pub const INTENT_FORMAT: &str = "srp-intent";

/// Number of semantic regions over both vocabularies.
pub const N_REGIONS: usize = 18;

const INTENT_TAG: u64 = 0x1E7;
const RISK_TRAIN_TAG: u64 = 0xA15C;
const RISK_SUITE_TAG: u64 = 0x5017E;

/// One generated episode, identified by its mix block and index in it.
#[derive(Debug, Clone, Copy)]
struct Job<'a> {
    entry: &'a MixEntry,
    index: usize,
    id: u64,
}

fn jobs(mix: &[MixEntry], per_entry: impl Fn(&MixEntry) -> usize) -> Vec<Job<'_>> {
    let mut out = Vec::new();
    for (b, e) in mix.iter().enumerate() {
        for index in 0..per_entry(e) {
            out.push(Job {
                entry: e,
                index,
                id: ((b as u64) << 32) | index as u64,
            });
        }
    }
    out
}

fn job_episode(cfg: &RunConfig, job: &Job<'_>, seed: u64) -> Result<Episode> {
    let params = job.entry.params(&cfg.topology, job.index);
    let t = build_topology(job.entry.kind, params)?;
    make_episode(&t, job.entry.action, &cfg.sim.with_seed(seed))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn check_hash(expected: &str, got: &str, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::HashMismatch {
            checkpoint: format!("{what} {got}"),
            dataset: format!("config {expected}"),
        });
    }
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Writes `report` as pretty JSON to `dir/name`.
pub fn write_report<T: Serialize>(dir: &Path, name: &str, report: &T) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub config_hash: String,
    pub episodes: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// Over frames of accepted episodes; `None` when none was accepted.
    pub labeling_accuracy: Option<f64>,
    pub frames: usize,
    pub reject_reasons: BTreeMap<String, usize>,
    pub intent_samples: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub t_e: usize,
    pub lead: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentRecord {
    pub episode_id: u64,
    pub kind: TopologyKind,
    pub split: Split,
    pub sample: IntentSample,
}

/// Generates the labelled frame dataset, the intention windows and the BEV
/// exports.
pub fn cmd_gen(cfg: &RunConfig) -> Result<GenReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = &cfg.out_dir;
    ensure_dir(out)?;

    let list = jobs(&cfg.mix, |e| e.count);
    let labelled: Vec<(Vec<crate::dataset::FrameRecord>, usize, usize)> = list
        .par_iter()
        .map(|job| {
            let ep = job_episode(cfg, job, mix_seed(cfg.seed, job.id))?;
            let lp = LabelerParams::for_layout(&ep.topology.params, ep.grid.resolution);
            let res = label_episode(&ep, &cfg.coherence, &lp)?;
            let split = cfg.split.assign(cfg.seed, job.id);
            let hits = ep
                .gt_regions
                .iter()
                .zip(&res.labels)
                .filter(|(g, p)| Some(**g) == **p)
                .count();
            Ok((episode_records(&ep, &res, job.id, split), hits, ep.len()))
        })
        .collect::<Result<_>>()?;

    let mut report = GenReport {
        config_hash: hash.clone(),
        episodes: labelled.len(),
        accepted: 0,
        acceptance_rate: 0.0,
        labeling_accuracy: None,
        frames: 0,
        reject_reasons: BTreeMap::new(),
        intent_samples: BTreeMap::new(),
    };
    let (mut hits, mut total) = (0usize, 0usize);
    let mut frames = Vec::new();
    for (records, h, n) in labelled {
        match records.first().and_then(|f| f.reject_reason) {
            None => {
                report.accepted += 1;
                hits += h;
                total += n;
            }
            Some(r) => *report.reject_reasons.entry(r.name().to_string()).or_insert(0) += 1,
        }
        frames.extend(records);
    }
    report.frames = frames.len();
    report.acceptance_rate = report.accepted as f64 / report.episodes.max(1) as f64;
    report.labeling_accuracy = (total > 0).then(|| hits as f64 / total as f64);
    Dataset {
        header: DatasetHeader::new(&hash),
        frames,
    }
    .save(&out.join(DATASET_FILE))?;

    let intent = gen_intent(cfg)?;
    for r in &intent {
        *report.intent_samples.entry(split_name(r.split).into()).or_insert(0) += 1;
    }
    write_intent(&out.join(INTENT_FILE), cfg, &hash, &intent)?;
    cmd_export_bev(cfg)?;
    write_report(out, "gen.json", &report)?;
    Ok(report)
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Windows ending a fixed lead before each manoeuvre anchor, from a second
/// independent set of episodes per mix block.
fn gen_intent(cfg: &RunConfig) -> Result<Vec<IntentRecord>> {
    let ic = &cfg.intent;
    let list = jobs(&cfg.mix, |_| ic.train_per_block + ic.test_per_block);
    let base = mix_seed(cfg.seed, INTENT_TAG);
    let recs: Vec<Option<IntentRecord>> = list
        .par_iter()
        .map(|job| {
            let ep = job_episode(cfg, job, mix_seed(base, job.id))?;
            Ok(intent_sample(&ep, cfg.srp.t_e, ic.lead).map(|sample| IntentRecord {
                episode_id: job.id,
                kind: job.entry.kind,
                split: if job.index < ic.train_per_block {
                    Split::Train
                } else {
                    Split::Test
                },
                sample,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(recs.into_iter().flatten().collect())
}

fn write_intent(path: &Path, cfg: &RunConfig, hash: &str, recs: &[IntentRecord]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = IntentHeader {
        format: INTENT_FORMAT.into(),
        version: 1,
        config_hash: hash.into(),
        t_e: cfg.srp.t_e,
        lead: cfg.intent.lead,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for r in recs {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_intent(path: &Path) -> Result<(IntentHeader, Vec<IntentRecord>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: IntentHeader = serde_json::from_str(lines.next().ok_or(Error::Format("empty intent file".into()))?)
        .map_err(|e| Error::Format(format!("intent header: {e}")))?;
    if header.format != INTENT_FORMAT || header.version != 1 {
        return Err(Error::Format(format!(
            "unsupported intent file {} v{}",
            header.format, header.version
        )));
    }
    let recs = lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 2))))
        .collect::<Result<_>>()?;
    Ok((header, recs))
}

/// Writes `bev/<kind>.pgm` and `bev/<kind>.csv` for the first episode of
/// each layout kind in the mix. The grids are those `gen` labels with.
pub fn cmd_export_bev(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = cfg.out_dir.join("bev");
    ensure_dir(&dir)?;
    let list = jobs(&cfg.mix, |e| e.count);
    let mut seen = Vec::new();
    let mut written = Vec::new();
    for job in list.iter().filter(|j| j.index == 0) {
        if seen.contains(&job.entry.kind) {
            continue;
        }
        seen.push(job.entry.kind);
        let ep = job_episode(cfg, job, mix_seed(cfg.seed, job.id))?;
        let name = job.entry.kind.name();
        let pgm = dir.join(format!("{name}.pgm"));
        let csv = dir.join(format!("{name}.csv"));
        ep.grid
            .write_pgm(std::io::BufWriter::new(std::fs::File::create(&pgm)?))?;
        ep.grid
            .write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
        written.extend([pgm, csv]);
    }
    Ok(written)
}

// ---------------------------------------------------------------- labeler

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelerReport {
    pub config_hash: String,
    pub episodes: usize,
    pub acceptance_rate: f64,
    /// Over frames of accepted episodes; `None` with `no_accepted_frames`
    /// set when every episode was rejected.
    pub accuracy: Option<f64>,
    pub accepted_frames: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_accepted_frames: bool,
    pub per_region_accuracy: BTreeMap<String, f64>,
    pub reject_reasons: BTreeMap<String, usize>,
}

pub fn cmd_eval_labeler(dataset: &Dataset) -> Result<LabelerReport> {
    let episodes = dataset.episodes();
    let mut reject_reasons = BTreeMap::new();
    let mut per_region: BTreeMap<SemanticRegion, (usize, usize)> = BTreeMap::new();
    let mut accepted = 0usize;
    for ep in &episodes {
        if let Some(r) = ep.frames[0].reject_reason {
            *reject_reasons.entry(r.name().to_string()).or_insert(0) += 1;
            continue;
        }
        accepted += 1;
        for f in ep.frames {
            let e = per_region.entry(f.gt_region).or_insert((0, 0));
            e.0 += usize::from(f.labeler_region == Some(f.gt_region));
            e.1 += 1;
        }
    }
    let (hits, total) = per_region.values().fold((0, 0), |a, v| (a.0 + v.0, a.1 + v.1));
    Ok(LabelerReport {
        config_hash: dataset.header.config_hash.clone(),
        episodes: episodes.len(),
        acceptance_rate: accepted as f64 / episodes.len().max(1) as f64,
        accuracy: (total > 0).then(|| hits as f64 / total as f64),
        accepted_frames: total,
        no_accepted_frames: total == 0,
        per_region_accuracy: per_region
            .into_iter()
            .map(|(r, (h, n))| (r.name().to_string(), h as f64 / n as f64))
            .collect(),
        reject_reasons,
    })
}

// ---------------------------------------------------------------- srp

pub fn srp_checkpoint(params: &SrpParams, cfg: &SrpConfig, config_hash: &str) -> Checkpoint {
    let mut c = Checkpoint::new(
        "srp",
        config_hash,
        serde_json::to_value(cfg).expect("config serializes"),
    );
    for (name, t) in TENSOR_NAMES.iter().zip(params.tensors()) {
        c.push(name, t);
    }
    c
}

pub fn srp_from_checkpoint(c: &Checkpoint) -> Result<(SrpConfig, SrpParams)> {
    c.expect_kind("srp")?;
    let cfg: SrpConfig =
        serde_json::from_value(c.header.meta.clone()).map_err(|e| Error::Format(format!("srp meta: {e}")))?;
    cfg.validate()?;
    let mut p = SrpParams::zeros(&cfg);
    for (name, slot) in TENSOR_NAMES.iter().zip(p.tensors_mut()) {
        let t = c.get(name)?;
        if !t.same_shape(slot) {
            return Err(Error::Shape(format!(
                "{name}: checkpoint {}x{}, expected {}x{}",
                t.rows, t.cols, slot.rows, slot.cols
            )));
        }
        *slot = t.clone();
    }
    Ok((cfg, p))
}

fn train_seed(cfg: &RunConfig, hyper: &TrainConfig) -> TrainConfig {
    TrainConfig {
        seed: mix_seed(cfg.seed, hyper.seed),
        ..*hyper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSrpReport {
    pub config_hash: String,
    pub windows: usize,
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub digest: String,
}

pub fn cmd_train_srp(cfg: &RunConfig, dataset: &Dataset) -> Result<TrainSrpReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    check_hash(&hash, &dataset.header.config_hash, "dataset")?;
    let windows: Vec<_> = dataset
        .episodes_in(Split::Train)
        .iter()
        .flat_map(|e| srp_windows(e, &cfg.srp, cfg.stride, cfg.label_source))
        .map(|(_, s)| s)
        .collect();
    let (params, rep) = train(&cfg.srp, &windows, &train_seed(cfg, &cfg.train))?;
    ensure_dir(&cfg.out_dir)?;
    srp_checkpoint(&params, &cfg.srp, &hash).save(&cfg.out_dir.join(SRP_CHECKPOINT))?;
    let report = TrainSrpReport {
        config_hash: hash,
        windows: windows.len(),
        initial_loss: rep.initial_loss,
        epoch_losses: rep.epoch_losses,
        digest: params.digest(),
    };
    write_report(&cfg.out_dir, "train-srp.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrpEvalReport {
    pub config_hash: String,
    pub split: Split,
    pub windows: usize,
    pub topology_accuracy: f64,
    /// Region of each window's last frame over the 18-region vocabulary; the
    /// predicted topology decides which classifier's scores are used.
    pub current: MetricsReport,
    /// Regions of the following frames, pooled over horizon steps.
    pub future: MetricsReport,
    /// Constant predictor of the most frequent training region.
    pub current_majority: MetricsReport,
    pub future_majority: MetricsReport,
}

/// Scores over the full vocabulary with the chosen classifier's
/// probabilities in its slots and zeros elsewhere.
fn gated_scores(classifier: usize, logits: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; N_REGIONS];
    for (i, p) in softmax(logits).into_iter().enumerate() {
        let code = SemanticRegion::from_local(classifier, i)
            .expect("logit index in vocabulary")
            .code();
        s[code as usize] = p;
    }
    s
}

fn region_code(topology: u8, local: usize) -> usize {
    let classifier = if topology as usize == INTERSECTION {
        INTERSECTION
    } else {
        NON_INTERSECTION
    };
    SemanticRegion::from_local(classifier, local)
        .expect("target index in vocabulary")
        .code() as usize
}

fn majority(records: &[PredictionRecord], train_counts: &[usize; N_REGIONS]) -> Result<MetricsReport> {
    let top = argmax(&train_counts.map(|c| c as f64));
    let mut scores = vec![0.0; N_REGIONS];
    scores[top] = 1.0;
    let recs: Vec<_> = records
        .iter()
        .map(|r| PredictionRecord::new(scores.clone(), r.gt, r.sample_id, r.frame_id))
        .collect();
    compute_metrics(&recs, N_REGIONS)
}

pub fn cmd_eval_srp(cfg: &RunConfig, dataset: &Dataset, checkpoint: &Checkpoint) -> Result<SrpEvalReport> {
    let hash = cfg.hash();
    check_hash(&hash, &dataset.header.config_hash, "dataset")?;
    check_hash(&hash, &checkpoint.header.config_hash, "checkpoint")?;
    let (scfg, params) = srp_from_checkpoint(checkpoint)?;
    let test: Vec<_> = dataset
        .episodes_in(Split::Test)
        .iter()
        .flat_map(|e| srp_windows(e, &scfg, 1, LabelSource::Gt))
        .collect();
    if test.is_empty() {
        return Err(Error::Empty("test windows"));
    }

    let evaluated = test
        .par_iter()
        .map(|(key, (window, target))| {
            let out = forward(&params, &scfg, window)?;
            let topo = argmax(out.topology.last().expect("t_e >= 1"));
            let o = *target.topology.last().expect("t_e >= 1");
            let (enc, dec) = if topo == INTERSECTION {
                (&out.encoder_int, &out.decoder_int)
            } else {
                (&out.encoder_non, &out.decoder_non)
            };
            let (sid, fid) = (key.episode_id, key.frame_index as u64);
            let current = target.regions.last().expect("t_e >= 1").map(|gt| {
                PredictionRecord::new(
                    gated_scores(topo, enc.last().expect("t_e >= 1")),
                    region_code(o, gt),
                    sid,
                    fid,
                )
            });
            let future: Vec<_> = (1..scfg.t_d)
                .filter_map(|m| {
                    target.future[m].map(|gt| {
                        PredictionRecord::new(gated_scores(topo, &dec[m]), region_code(o, gt), sid, fid + m as u64)
                    })
                })
                .collect();
            Ok((usize::from(topo as u8 == o), current, future))
        })
        .collect::<Result<Vec<_>>>()?;

    let topo_hits: usize = evaluated.iter().map(|e| e.0).sum();
    let current: Vec<_> = evaluated.iter().filter_map(|e| e.1.clone()).collect();
    let future: Vec<_> = evaluated.iter().flat_map(|e| e.2.clone()).collect();

    let mut train_current = [0usize; N_REGIONS];
    let mut train_future = [0usize; N_REGIONS];
    for ep in dataset.episodes_in(Split::Train) {
        for (_, (_, t)) in srp_windows(&ep, &scfg, cfg.stride, cfg.label_source) {
            let o = *t.topology.last().expect("t_e >= 1");
            if let Some(r) = t.regions.last().expect("t_e >= 1") {
                train_current[region_code(o, *r)] += 1;
            }
            for r in t.future.iter().skip(1).flatten() {
                train_future[region_code(o, *r)] += 1;
            }
        }
    }

    Ok(SrpEvalReport {
        config_hash: hash,
        split: Split::Test,
        windows: test.len(),
        topology_accuracy: topo_hits as f64 / test.len() as f64,
        current: compute_metrics(&current, N_REGIONS)?,
        future: compute_metrics(&future, N_REGIONS)?,
        current_majority: majority(&current, &train_current)?,
        future_majority: majority(&future, &train_future)?,
    })
}

// ---------------------------------------------------------------- intent

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainIntentReport {
    pub config_hash: String,
    pub samples: usize,
    pub srp_checkpoint_sha256: String,
    /// The SRP checkpoint file hashed identically before and after training.
    pub srp_unchanged: bool,
    pub head_final_loss: f64,
    pub ablation_final_loss: f64,
}

fn intent_split(recs: &[IntentRecord], split: Split) -> Vec<IntentSample> {
    recs.iter()
        .filter(|r| r.split == split)
        .map(|r| r.sample.clone())
        .collect()
}

fn load_intent_for(cfg: &RunConfig, path: &Path) -> Result<Vec<IntentRecord>> {
    let (header, recs) = read_intent(path)?;
    check_hash(&cfg.hash(), &header.config_hash, "intent set")?;
    Ok(recs)
}

/// Trains the intention head on frozen SRP states and the raw-feature
/// ablation head, both from the same seed.
pub fn cmd_train_intent(cfg: &RunConfig, intent_path: &Path, srp_path: &Path) -> Result<TrainIntentReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let recs = load_intent_for(cfg, intent_path)?;
    let before = sha256_file(srp_path)?;
    let ckpt = Checkpoint::load(srp_path)?;
    check_hash(&hash, &ckpt.header.config_hash, "checkpoint")?;
    let (scfg, params) = srp_from_checkpoint(&ckpt)?;
    let samples = intent_split(&recs, Split::Train);
    let hyper = train_seed(cfg, &cfg.intent.train);
    let (head, r1) = train_intent(
        IntentHead::init(scfg.hidden_dim, hyper.seed),
        &samples,
        &params,
        &scfg,
        &hyper,
    )?;
    let (abl, r2) = train_intent_ablation(IntentHead::init(scfg.feature_dim, hyper.seed), &samples, &hyper)?;
    let after = sha256_file(srp_path)?;

    let mut out = Checkpoint::new("intent", &hash, serde_json::json!({ "srp_sha256": before }));
    out.push_linear("head", &head.linear);
    out.push_linear("ablation", &abl.linear);
    ensure_dir(&cfg.out_dir)?;
    out.save(&cfg.out_dir.join(INTENT_CHECKPOINT))?;
    let last = |r: &crate::srp::TrainReport| *r.epoch_losses.last().unwrap_or(&r.initial_loss);
    let report = TrainIntentReport {
        config_hash: hash,
        samples: samples.len(),
        srp_unchanged: before == after,
        srp_checkpoint_sha256: before,
        head_final_loss: last(&r1),
        ablation_final_loss: last(&r2),
    };
    write_report(&cfg.out_dir, "train-intent.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentEvalReport {
    pub config_hash: String,
    pub samples: usize,
    pub srp_head: MetricsReport,
    pub ablation: MetricsReport,
    pub srp_beats_ablation: bool,
}

pub fn cmd_eval_intent(
    cfg: &RunConfig,
    intent_path: &Path,
    srp: &Checkpoint,
    intent: &Checkpoint,
) -> Result<IntentEvalReport> {
    let hash = cfg.hash();
    let recs = load_intent_for(cfg, intent_path)?;
    check_hash(&hash, &srp.header.config_hash, "checkpoint")?;
    check_hash(&hash, &intent.header.config_hash, "intent checkpoint")?;
    intent.expect_kind("intent")?;
    let (scfg, params) = srp_from_checkpoint(srp)?;
    let head = IntentHead {
        linear: intent.linear("head")?,
    };
    let abl = IntentHead {
        linear: intent.linear("ablation")?,
    };
    let test = intent_split(&recs, Split::Test);
    if test.is_empty() {
        return Err(Error::Empty("intent test samples"));
    }
    let (a, b): (Vec<_>, Vec<_>) = test
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let gt = s.gt_intention.class_id();
            let h = srp_representation(&params, &scfg, &s.window)?;
            Ok((
                PredictionRecord::new(intent_predict(&head, &h)?, gt, i as u64, 0),
                PredictionRecord::new(intent_predict(&abl, &mean_feature(&s.window))?, gt, i as u64, 0),
            ))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let srp_head = compute_metrics(&a, crate::heads::N_INTENTIONS)?;
    let ablation = compute_metrics(&b, crate::heads::N_INTENTIONS)?;
    Ok(IntentEvalReport {
        config_hash: hash,
        samples: test.len(),
        srp_beats_ablation: srp_head.macro_avg_precision > ablation.macro_avg_precision,
        srp_head,
        ablation,
    })
}

// ---------------------------------------------------------------- risk

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskVariant {
    pub hits: usize,
    pub rate: f64,
    pub boxes: BoxMetrics,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub gt_risk_index: usize,
    pub plain_index: usize,
    pub plain_scores: Vec<f64>,
    pub fused_index: usize,
    pub fused_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub config_hash: String,
    pub train_scenes: usize,
    pub yield_fraction: f64,
    pub suite_scenes: usize,
    /// Behaviour model on `g_f ⊕ mean g_k`.
    pub plain: RiskVariant,
    /// Behaviour model on the SRP-fused representation.
    pub fused: RiskVariant,
    pub fused_at_least_plain: bool,
    pub scenes: Vec<SceneResult>,
}

/// Ego contexts on the configured junction: every configured manoeuvre at
/// every configured lead.
pub fn risk_contexts(cfg: &RunConfig, t_e: usize) -> Result<Vec<EgoContext>> {
    let r = &cfg.risk;
    let t = build_topology(r.kind, cfg.topology)?;
    let mut out = Vec::new();
    for &a in &r.actions {
        let ep = make_episode(&t, a, &crate::sim::SimConfig::clean())?;
        for &lead in &r.leads {
            out.push(EgoContext::from_episode(&ep, t_e, lead)?);
        }
    }
    Ok(out)
}

pub fn cmd_risk(cfg: &RunConfig, srp: &Checkpoint) -> Result<RiskReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    check_hash(&hash, &srp.header.config_hash, "checkpoint")?;
    let (scfg, params) = srp_from_checkpoint(srp)?;
    let r = &cfg.risk;
    let contexts = risk_contexts(cfg, scfg.t_e)?;
    let (train_set, labels) = risk_suite(
        &contexts,
        &r.scenes,
        r.train_scenes,
        false,
        mix_seed(cfg.seed, RISK_TRAIN_TAG),
    )?;
    let (suite, _) = risk_suite(
        &contexts,
        &r.scenes,
        r.suite_scenes,
        true,
        mix_seed(cfg.seed, RISK_SUITE_TAG),
    )?;
    let hidden = |s: &[crate::heads::RiskScene]| -> Result<Vec<Vec<f64>>> {
        s.par_iter()
            .map(|s| srp_representation(&params, &scfg, &s.ego_window))
            .collect()
    };
    let (h_train, h_suite) = (hidden(&train_set)?, hidden(&suite)?);
    let hyper = train_seed(cfg, &r.train);

    let mut variants = Vec::new();
    for fusion in [
        None,
        Some(EgoFusion::init(r.fused_dim, FRAME_EMBED_DIM + MESSAGE_DIM, hyper.seed)),
    ] {
        let (model, rep) = train_behavior(fusion, &train_set, &h_train, &labels, &hyper)?;
        let picks: Vec<(usize, Vec<f64>)> = suite
            .par_iter()
            .zip(&h_suite)
            .map(|(s, h)| model.identify(s, h))
            .collect::<Result<_>>()?;
        variants.push((model, rep, picks));
    }
    let summarize = |(_, rep, picks): &(BehaviorModel, crate::srp::TrainReport, Vec<(usize, Vec<f64>)>)| {
        let hits = picks.iter().zip(&suite).filter(|(p, s)| p.0 == s.gt_risk_index).count();
        let pred: Vec<_> = picks.iter().zip(&suite).map(|(p, s)| s.boxes[p.0]).collect();
        let gt: Vec<_> = suite.iter().map(|s| s.boxes[s.gt_risk_index]).collect();
        Ok::<_, Error>(RiskVariant {
            hits,
            rate: hits as f64 / suite.len().max(1) as f64,
            boxes: risk_box_metrics(&pred, &gt)?,
            final_loss: *rep.epoch_losses.last().unwrap_or(&rep.initial_loss),
        })
    };
    let plain = summarize(&variants[0])?;
    let fused = summarize(&variants[1])?;
    let scenes = suite
        .iter()
        .enumerate()
        .map(|(i, s)| SceneResult {
            gt_risk_index: s.gt_risk_index,
            plain_index: variants[0].2[i].0,
            plain_scores: variants[0].2[i].1.clone(),
            fused_index: variants[1].2[i].0,
            fused_scores: variants[1].2[i].1.clone(),
        })
        .collect();
    let report = RiskReport {
        config_hash: hash,
        train_scenes: train_set.len(),
        yield_fraction: labels.iter().filter(|&&l| l == crate::heads::YIELD).count() as f64
            / labels.len().max(1) as f64,
        suite_scenes: suite.len(),
        fused_at_least_plain: fused.hits >= plain.hits,
        plain,
        fused,
        scenes,
    };
    write_report(&cfg.out_dir, "risk.json", &report)?;
    Ok(report)
}
