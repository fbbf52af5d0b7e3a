//! Run configuration: a TOML file with one table per component. Unknown keys
//! anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{LabelSource, Split};
use crate::error::{Error, Result};
use crate::heads::{RiskSceneConfig, DEFAULT_FUSED_DIM};
use crate::labeler::CoherenceParams;
use crate::nn::AdamConfig;
use crate::sim::{mix_seed, SimConfig};
use crate::srp::{SrpConfig, TrainConfig};
use crate::topology::{afforded_actions_for, AffordedAction, TopologyKind, TopologyParams};

/// A block of episodes sharing a layout kind and manoeuvre. Optional fields
/// override the `[topology]` defaults; `lane_widths` is cycled over the
/// block's episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixEntry {
    pub kind: TopologyKind,
    pub action: AffordedAction,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanes: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lane_widths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosswalk_width: Option<f64>,
}

impl MixEntry {
    pub fn new(kind: TopologyKind, action: AffordedAction, count: usize) -> Self {
        Self {
            kind,
            action,
            count,
            lanes: None,
            lane_widths: Vec::new(),
            crosswalk_width: None,
        }
    }

    /// Layout of the `i`-th episode of this block.
    pub fn params(&self, base: &TopologyParams, i: usize) -> TopologyParams {
        let mut p = *base;
        if let Some(l) = self.lanes {
            p.lanes_per_direction = l;
        }
        if !self.lane_widths.is_empty() {
            p.lane_width = self.lane_widths[i % self.lane_widths.len()];
        }
        if let Some(c) = self.crosswalk_width {
            p.crosswalk_width = c;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    /// Deterministic split of an episode from its id.
    pub fn assign(&self, seed: u64, episode_id: u64) -> Split {
        let u = (mix_seed(mix_seed(seed, 0x5B17), episode_id) >> 11) as f64 / (1u64 << 53) as f64;
        if u < self.train {
            Split::Train
        } else if u < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntentConfig {
    /// Training episodes per (layout, manoeuvre) block of the mix.
    pub train_per_block: usize,
    pub test_per_block: usize,
    /// Frames between a window's last frame and the manoeuvre anchor.
    pub lead: usize,
    pub train: TrainConfig,
}

impl Default for IntentConfig {
    fn default() -> Self {
        Self {
            train_per_block: 20,
            test_per_block: 20,
            lead: 5,
            train: TrainConfig {
                batch_size: 4,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskConfig {
    pub kind: TopologyKind,
    pub actions: Vec<AffordedAction>,
    /// Frames before the manoeuvre anchor at which ego contexts are taken.
    pub leads: Vec<usize>,
    pub train_scenes: usize,
    pub suite_scenes: usize,
    pub fused_dim: usize,
    pub scenes: RiskSceneConfig,
    pub train: TrainConfig,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            kind: TopologyKind::FourWay,
            actions: vec![
                AffordedAction::LeftTurn,
                AffordedAction::Straight,
                AffordedAction::RightTurn,
            ],
            leads: vec![3, 5, 8],
            train_scenes: 20000,
            suite_scenes: 100,
            fused_dim: DEFAULT_FUSED_DIM,
            scenes: RiskSceneConfig::default(),
            train: TrainConfig {
                epochs: 20,
                batch_size: 8,
                adam: AdamConfig {
                    weight_decay: 1e-4,
                    ..AdamConfig::default()
                },
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the config hash.
    pub out_dir: PathBuf,
    /// Step between consecutive training windows.
    pub stride: usize,
    pub label_source: LabelSource,
    pub topology: TopologyParams,
    pub mix: Vec<MixEntry>,
    pub sim: SimConfig,
    pub coherence: CoherenceParams,
    pub split: SplitRatios,
    pub srp: SrpConfig,
    pub train: TrainConfig,
    pub intent: IntentConfig,
    pub risk: RiskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("out"),
            stride: 1,
            label_source: LabelSource::Labeler,
            topology: TopologyParams {
                lanes_per_direction: 3,
                approach_length: 20.0,
                ..TopologyParams::default()
            },
            mix: Self::standard_mix(12),
            sim: SimConfig::default(),
            coherence: CoherenceParams::default(),
            split: SplitRatios::default(),
            srp: SrpConfig::default(),
            train: TrainConfig {
                batch_size: 8,
                ..TrainConfig::default()
            },
            intent: IntentConfig::default(),
            risk: RiskConfig::default(),
        }
    }
}

impl RunConfig {
    /// Every afforded manoeuvre of every layout kind, `count` episodes each.
    /// Junctions cycle through three lane widths; the straight road keeps two
    /// lanes per direction so its cross-section differs from a junction arm.
    pub fn standard_mix(count: usize) -> Vec<MixEntry> {
        let mut mix = Vec::new();
        for kind in TopologyKind::ALL {
            let lanes = if kind.is_intersection() { 3 } else { 2 };
            for action in afforded_actions_for(kind, lanes) {
                let mut e = MixEntry::new(kind, action, count);
                if kind.is_intersection() {
                    e.lane_widths = vec![3.0, 3.5, 4.0];
                } else {
                    e.lanes = Some(2);
                }
                mix.push(e);
            }
        }
        mix
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.topology.validate()?;
        self.sim.validate()?;
        self.srp.validate()?;
        let s = &self.split;
        if [s.train, s.val, s.test].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("split ratios must be >= 0".into());
        }
        if (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return bad(format!("split ratios sum to {}, not 1", s.train + s.val + s.test));
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        for e in &self.mix {
            for i in 0..e.lane_widths.len().max(1) {
                let p = e.params(&self.topology, i);
                p.validate()?;
                if !afforded_actions_for(e.kind, p.lanes_per_direction).contains(&e.action) {
                    return Err(Error::UnaffordableAction {
                        kind: e.kind,
                        action: e.action,
                    });
                }
            }
        }
        for t in [&self.train, &self.intent.train, &self.risk.train] {
            if t.batch_size == 0 || !(t.adam.lr.is_finite() && t.adam.lr > 0.0) {
                return bad("batch_size and lr must be > 0".into());
            }
        }
        if self.intent.lead == 0 {
            return bad("intent.lead must be >= 1".into());
        }
        let r = &self.risk;
        for &a in &r.actions {
            if !afforded_actions_for(r.kind, self.topology.lanes_per_direction).contains(&a) {
                return Err(Error::UnaffordableAction {
                    kind: r.kind,
                    action: a,
                });
            }
        }
        if r.actions.is_empty() || r.leads.is_empty() || r.leads.contains(&0) {
            return bad("risk.actions and risk.leads must be non-empty, leads >= 1".into());
        }
        if r.scenes.min_objects == 0 || r.scenes.min_objects > r.scenes.max_objects {
            return bad("risk object counts must satisfy 1 <= min <= max".into());
        }
        if r.fused_dim == 0 {
            return bad("risk.fused_dim must be >= 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
