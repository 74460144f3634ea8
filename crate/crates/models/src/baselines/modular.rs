//! The modular baseline: independent per-task models on hand-crafted pose
//! features, with crossing intent predicted from their per-frame outputs and
//! the scene context.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vru_core::data::{Gait, Attention, Distraction, SceneContext, SequenceSample, Task};
use vru_core::geometry::{attention_features, distraction_features, gait_features, PoseFrame};
use vru_core::seed::derive_seed;
use vru_nn::Checkpoint;

use super::resnet::{train_resnet, Resnet1d, ResnetConfig, ResnetTrainConfig};
use super::svm::{train_svc, SvmConfig, SvmModel};
use crate::error::{ModelError, Result};
use crate::eval::Collected;

pub const GAIT_FEATURES: usize = 6;
pub const ATTENTION_FEATURES: usize = 21;
pub const DISTRACTION_FEATURES: usize = 4;
pub const INTENT_FEATURES: usize = 9;

/// Gait features of every frame, `len × 6` row-major.
pub fn gait_window(poses: &[PoseFrame]) -> Vec<f64> {
    let mut out = Vec::with_capacity(poses.len() * GAIT_FEATURES);
    for p in poses {
        out.extend_from_slice(&gait_features(p).to_array());
    }
    out
}

/// Upper-body keypoints of every frame, `len × 21` row-major.
pub fn attention_window(poses: &[PoseFrame]) -> Vec<f64> {
    let mut out = Vec::with_capacity(poses.len() * ATTENTION_FEATURES);
    for p in poses {
        out.extend_from_slice(&attention_features(p).values);
    }
    out
}

/// Distraction features averaged over the frames, or stacked (`len × 4`).
pub fn distraction_vector(poses: &[PoseFrame], stacked: bool) -> Vec<f64> {
    let rows: Vec<[f64; 4]> = poses.iter().map(|p| distraction_features(p).to_array()).collect();
    if stacked {
        return rows.concat();
    }
    let n = rows.len().max(1) as f64;
    (0..DISTRACTION_FEATURES)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n)
        .collect()
}

/// Per-frame behaviour classes predicted by the action models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameActions {
    pub gait: usize,
    pub attention: usize,
    pub distraction: usize,
    pub orientation: usize,
}

impl FrameActions {
    /// The all-negative prediction: standing, not looking, not phoning,
    /// orientation code 0.
    pub fn none() -> Self {
        FrameActions {
            gait: Gait::Standing.index(),
            attention: Attention::NotLooking.index(),
            distraction: Distraction::NotPhoning.index(),
            orientation: 0,
        }
    }
}

/// One row per frame: gait, attention and distraction bits, orientation
/// code, then the five scene-context bits.
pub fn build_intent_features(actions: &[FrameActions], context: &SceneContext) -> Vec<[f64; INTENT_FEATURES]> {
    intent_rows(actions, context.bits())
}

/// [`build_intent_features`] with the context given as raw bits
/// (traffic light, traffic sign, crosswalk, narrow lane, wide lane).
pub fn intent_rows(actions: &[FrameActions], context: [f64; 5]) -> Vec<[f64; INTENT_FEATURES]> {
    let bit = |cond: bool| if cond { 1.0 } else { 0.0 };
    actions
        .iter()
        .map(|a| {
            let mut row = [0.0; INTENT_FEATURES];
            row[0] = bit(a.gait == Gait::Walking.index());
            row[1] = bit(a.attention == Attention::Looking.index());
            row[2] = bit(a.distraction == Distraction::Phoning.index());
            row[3] = a.orientation as f64;
            row[4..].copy_from_slice(&context);
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModularConfig {
    pub obs_len: usize,
    pub channels: [usize; 4],
    pub gait: ResnetTrainConfig,
    pub attention: ResnetTrainConfig,
    pub distraction_svm: SvmConfig,
    pub crossing_svm: SvmConfig,
    /// Stack distraction features over the window instead of averaging.
    pub distraction_stacked: bool,
}

impl Default for ModularConfig {
    fn default() -> Self {
        ModularConfig {
            obs_len: 30,
            channels: [32, 64, 128, 256],
            gait: ResnetTrainConfig::default(),
            attention: ResnetTrainConfig {
                epochs: 150,
                head_weights: vec![1.0, 1.0],
                ..ResnetTrainConfig::default()
            },
            distraction_svm: SvmConfig::default(),
            crossing_svm: SvmConfig::default(),
            distraction_stacked: false,
        }
    }
}

impl ModularConfig {
    /// Narrow networks and short schedules for the synthetic corpus.
    pub fn desk() -> Self {
        let quick = |epochs, heads: usize| ResnetTrainConfig {
            epochs,
            lr: 1e-3,
            head_weights: vec![1.0; heads],
            ..ResnetTrainConfig::default()
        };
        ModularConfig {
            channels: [8, 16, 16, 32],
            gait: quick(15, 1),
            attention: quick(20, 2),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModularModel {
    pub config: ModularConfig,
    pub gait: Resnet1d,
    /// Two heads: attention, then orientation.
    pub attention: Resnet1d,
    pub distraction: SvmModel,
    pub crossing: SvmModel,
}

/// Scores of one window in head order: gait, attention and orientation
/// distributions; distraction and crossing as `[f, -f]` of the SVM decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularPrediction {
    pub scores: [Vec<f64>; 5],
}

/// Progress messages emitted while training.
pub type Progress<'a> = &'a mut dyn FnMut(&str);

fn argmax(v: &[f64]) -> usize {
    crate::eval::argmax(v)
}

/// The `len` poses ending at frame `t`, padded at the front by repeating the
/// first frame.
fn prefix(poses: &[PoseFrame], t: usize, len: usize) -> Vec<PoseFrame> {
    (0..len)
        .map(|k| {
            let idx = (t + 1 + k).saturating_sub(len);
            poses[idx.min(poses.len() - 1)]
        })
        .collect()
}

impl ModularModel {
    fn check_window(&self, s: &SequenceSample) -> Result<()> {
        if s.obs_len() != self.config.obs_len {
            return Err(ModelError::Input(format!(
                "window of {} frames, model expects {}",
                s.obs_len(),
                self.config.obs_len
            )));
        }
        Ok(())
    }

    /// Action predictions for every observed frame, each from the window of
    /// the last `obs_len` frames ending there.
    pub fn frame_actions(&self, s: &SequenceSample) -> Result<Vec<FrameActions>> {
        self.check_window(s)?;
        let n = self.config.obs_len;
        (0..s.obs_len())
            .map(|t| {
                let w = prefix(&s.poses, t, n);
                let gait = self.gait.predict(&gait_window(&w))?;
                let att = self.attention.predict(&attention_window(&w))?;
                let dist = self.distraction.decision(&distraction_vector(&w, self.config.distraction_stacked));
                Ok(FrameActions {
                    gait: argmax(&gait[0]),
                    attention: argmax(&att[0]),
                    distraction: if dist > 0.0 {
                        Distraction::Phoning.index()
                    } else {
                        Distraction::NotPhoning.index()
                    },
                    orientation: argmax(&att[1]),
                })
            })
            .collect()
    }

    pub fn intent_vector(&self, s: &SequenceSample) -> Result<Vec<f64>> {
        let actions = self.frame_actions(s)?;
        Ok(build_intent_features(&actions, &s.context).concat())
    }

    pub fn predict(&self, s: &SequenceSample) -> Result<ModularPrediction> {
        self.check_window(s)?;
        let gait = self.gait.predict(&gait_window(&s.poses))?.remove(0);
        let mut att = self.attention.predict(&attention_window(&s.poses))?;
        let orientation = att.remove(1);
        let attention = att.remove(0);
        let d = self.distraction.decision(&distraction_vector(&s.poses, self.config.distraction_stacked));
        let c = self.crossing.decision(&self.intent_vector(s)?);
        Ok(ModularPrediction {
            scores: [gait, attention, orientation, vec![d, -d], vec![c, -c]],
        })
    }

    pub fn train(train: &[SequenceSample], config: ModularConfig, seed: u64, progress: Progress) -> Result<Self> {
        if train.is_empty() {
            return Err(ModelError::Input("empty training set".into()));
        }
        let n = config.obs_len;
        if let Some(s) = train.iter().find(|s| s.obs_len() != n) {
            return Err(ModelError::Input(format!("window of {} frames, config expects {n}", s.obs_len())));
        }
        let labels: Vec<[usize; 5]> = train.iter().map(|s| s.labels.indices()).collect();
        let g = Task::Gait.index();
        let (a, o, d, x) = (
            Task::Attention.index(),
            Task::Orientation.index(),
            Task::Distraction.index(),
            Task::Crossing.index(),
        );

        let mut gait = Resnet1d::new(
            ResnetConfig {
                input_len: n,
                features: GAIT_FEATURES,
                channels: config.channels,
                heads: vec![Gait::COUNT],
            },
            derive_seed(seed, "modular.gait"),
        )?;
        let windows: Vec<Vec<f64>> = train.iter().map(|s| gait_window(&s.poses)).collect();
        let y: Vec<Vec<usize>> = labels.iter().map(|l| vec![l[g]]).collect();
        let hist = train_resnet(&mut gait, &windows, &y, &config.gait, derive_seed(seed, "modular.gait.train"))?;
        progress(&format!("gait model: final loss {:.4}", hist.last().copied().unwrap_or(f64::NAN)));

        let mut attention = Resnet1d::new(
            ResnetConfig {
                input_len: n,
                features: ATTENTION_FEATURES,
                channels: config.channels,
                heads: vec![Attention::COUNT, vru_core::data::Orientation::COUNT],
            },
            derive_seed(seed, "modular.attention"),
        )?;
        let windows: Vec<Vec<f64>> = train.iter().map(|s| attention_window(&s.poses)).collect();
        let y: Vec<Vec<usize>> = labels.iter().map(|l| vec![l[a], l[o]]).collect();
        let hist = train_resnet(
            &mut attention,
            &windows,
            &y,
            &config.attention,
            derive_seed(seed, "modular.attention.train"),
        )?;
        progress(&format!("attention/orientation model: final loss {:.4}", hist.last().copied().unwrap_or(f64::NAN)));

        let feats: Vec<Vec<f64>> = train
            .iter()
            .map(|s| distraction_vector(&s.poses, config.distraction_stacked))
            .collect();
        let y: Vec<bool> = labels.iter().map(|l| l[d] == 0).collect();
        let (distraction, fit) = train_svc(&feats, &y, &config.distraction_svm)?;
        progress(&format!(
            "distraction svm: {} support vectors, {} iterations",
            distraction.support_vectors.len(),
            fit.iterations
        ));

        // The crossing model is fitted on the actions predicted by the models
        // above, as it will see them at test time.
        let partial = ModularModel {
            config: config.clone(),
            gait,
            attention,
            distraction,
            crossing: SvmModel {
                support_vectors: Vec::new(),
                dual_coef: Vec::new(),
                bias: 0.0,
                gamma: 1.0,
                c: 1.0,
            },
        };
        let feats: Vec<Vec<f64>> = train.iter().map(|s| partial.intent_vector(s)).collect::<Result<_>>()?;
        let y: Vec<bool> = labels.iter().map(|l| l[x] == 0).collect();
        let (crossing, fit) = train_svc(&feats, &y, &config.crossing_svm)?;
        progress(&format!(
            "crossing svm: {} support vectors, {} iterations",
            crossing.support_vectors.len(),
            fit.iterations
        ));
        Ok(ModularModel { crossing, ..partial })
    }

    pub fn collect(&self, samples: &[SequenceSample]) -> Result<Collected> {
        let mut c = Collected::default();
        for s in samples {
            let p = self.predict(s)?;
            for (k, v) in p.scores.into_iter().enumerate() {
                c.scores[k].push(v);
            }
            c.labels.push(s.labels.indices());
        }
        Ok(c)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
        let config = serde_json::json!({ "model": "modular", "config": self.config });
        std::fs::write(dir.join("modular.json"), serde_json::to_string_pretty(&config).expect("config serializes"))
            .map_err(|e| ModelError::io(dir.join("modular.json"), e))?;
        self.gait.to_checkpoint().save(dir.join("gait.ckpt"))?;
        self.attention.to_checkpoint().save(dir.join("attention.ckpt"))?;
        self.distraction.save(&dir.join("distraction.json"))?;
        self.crossing.save(&dir.join("crossing.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("modular.json");
        let text = std::fs::read_to_string(&path).map_err(|e| ModelError::io(&path, e))?;
        let bad = |detail: String| ModelError::Format {
            path: path.display().to_string(),
            detail,
        };
        let meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if meta.get("model").and_then(|m| m.as_str()) != Some("modular") {
            return Err(bad("not a modular model".into()));
        }
        let config: ModularConfig = serde_json::from_value(meta["config"].clone()).map_err(|e| bad(e.to_string()))?;
        let load_net = |name: &str| -> Result<Resnet1d> {
            let ckpt = Checkpoint::load(dir.join(name))?;
            Resnet1d::from_checkpoint(&ckpt)
        };
        Ok(ModularModel {
            gait: load_net("gait.ckpt")?,
            attention: load_net("attention.ckpt")?,
            distraction: SvmModel::load(&dir.join("distraction.json"))?,
            crossing: SvmModel::load(&dir.join("crossing.json"))?,
            config,
        })
    }
}
