//! Flat TOML run configurations. Every key is optional; unknown keys are
//! rejected. Command-line flags override values read from the file.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vru_core::data::WindowConfig;
use vru_core::tracking::{KalmanConfig, TrackerConfig};
use vru_models::baselines::{ModularConfig, SvmConfig};
use vru_models::{LossWeights, TrainConfig, VruNetConfig};

use crate::error::{io_err, CliError, Result};

/// Reads `path` as TOML, or returns the default when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub obs_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub fps: f64,
    pub min_duration_s: f64,
    pub pad_min_fraction: f64,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        let w = WindowConfig::default();
        BuildConfig {
            obs_len: w.obs_len,
            horizon: w.horizon,
            stride: w.stride,
            fps: w.fps,
            min_duration_s: w.min_duration_s,
            pad_min_fraction: w.pad_min_fraction,
            train_ratio: 0.6,
            val_ratio: 0.2,
            test_ratio: 0.2,
        }
    }
}

impl BuildConfig {
    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            obs_len: self.obs_len,
            horizon: self.horizon,
            stride: self.stride,
            fps: self.fps,
            min_duration_s: self.min_duration_s,
            pad_min_fraction: self.pad_min_fraction,
        }
    }

    pub fn ratios(&self) -> [f64; 3] {
        [self.train_ratio, self.val_ratio, self.test_ratio]
    }
}

/// Layer-width preset that unset architecture keys fall back to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The published layer widths.
    #[default]
    Paper,
    /// Narrow layers and short schedules for single-core runs.
    Desk,
}

/// Configuration of `vru train`. Keys left unset take the preset's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub preset: Option<Preset>,

    // Network.
    pub conv_channels: Option<usize>,
    pub scene_channels: Option<[usize; 2]>,
    pub scene_fc: Option<[usize; 2]>,
    pub embed: Option<usize>,
    pub head_hidden: Option<usize>,
    pub hidden: Option<usize>,
    pub w_gait: Option<f64>,
    pub w_attention: Option<f64>,
    pub w_orientation: Option<f64>,
    pub w_distraction: Option<f64>,
    pub w_crossing: Option<f64>,
    pub lambda_reg: Option<f64>,
    pub alpha_action: Option<f64>,
    pub beta_traj: Option<f64>,
    pub ablate_scene: Option<bool>,
    pub motion_unit: Option<f64>,
    pub traj_unit: Option<f64>,

    // Optimization.
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub clip_norm: Option<f64>,
    pub teacher_forcing_epochs: Option<usize>,
    pub lr_patience: Option<usize>,
    pub lr_decay: Option<f64>,
    pub min_lr: Option<f64>,
    pub class_weighting: Option<bool>,
    pub flip_prob: Option<f64>,
    pub keypoint_sigma: Option<f64>,
    pub pixel_dropout: Option<f64>,
    pub mask_noise: Option<f64>,

    // Modular baseline.
    pub resnet_channels: Option<[usize; 4]>,
    pub gait_epochs: Option<usize>,
    pub attention_epochs: Option<usize>,
    pub resnet_lr: Option<f64>,
    pub resnet_batch_size: Option<usize>,
    pub standardize: Option<bool>,
    pub svm_c: Option<f64>,
    pub svm_gamma: Option<f64>,
    pub svm_tol: Option<f64>,
    pub svm_max_passes: Option<usize>,
    pub distraction_stacked: Option<bool>,
}

fn set<T: Copy>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl TrainFile {
    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or_default()
    }

    /// Network configuration for windows of `obs_len` frames, predicting
    /// `horizon` frames, over masks of `mask_h × mask_w` cells.
    pub fn vrunet(&self, obs_len: usize, horizon: usize, mask_h: usize, mask_w: usize) -> VruNetConfig {
        let mut c = match self.preset() {
            Preset::Paper => VruNetConfig::default(),
            Preset::Desk => VruNetConfig::desk(),
        };
        c.obs_len = obs_len;
        c.horizon = horizon;
        c.mask_h = mask_h;
        c.mask_w = mask_w;
        set(&mut c.conv_channels, self.conv_channels);
        set(&mut c.scene_channels, self.scene_channels);
        set(&mut c.scene_fc, self.scene_fc);
        set(&mut c.embed, self.embed);
        set(&mut c.head_hidden, self.head_hidden);
        set(&mut c.hidden, self.hidden);
        let mut w = c.loss_weights.to_array();
        for (dst, v) in w.iter_mut().zip([self.w_gait, self.w_attention, self.w_orientation, self.w_distraction, self.w_crossing]) {
            set(dst, v);
        }
        c.loss_weights = LossWeights::from_array(w);
        set(&mut c.lambda_reg, self.lambda_reg);
        set(&mut c.alpha_action, self.alpha_action);
        set(&mut c.beta_traj, self.beta_traj);
        set(&mut c.ablate_scene, self.ablate_scene);
        set(&mut c.motion_unit, self.motion_unit);
        set(&mut c.traj_unit, self.traj_unit);
        c
    }

    pub fn train(&self) -> TrainConfig {
        let mut t = TrainConfig::default();
        if self.preset() == Preset::Desk {
            t.lr = 1e-3;
        }
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.lr, self.lr);
        set(&mut t.clip_norm, self.clip_norm);
        set(&mut t.teacher_forcing_epochs, self.teacher_forcing_epochs);
        set(&mut t.lr_patience, self.lr_patience);
        set(&mut t.lr_decay, self.lr_decay);
        set(&mut t.min_lr, self.min_lr);
        set(&mut t.class_weighting, self.class_weighting);
        set(&mut t.flip_prob, self.flip_prob);
        set(&mut t.keypoint_sigma, self.keypoint_sigma);
        set(&mut t.pixel_dropout, self.pixel_dropout);
        set(&mut t.mask_noise, self.mask_noise);
        t
    }

    pub fn modular(&self, obs_len: usize) -> ModularConfig {
        let mut m = match self.preset() {
            Preset::Paper => ModularConfig::default(),
            Preset::Desk => ModularConfig::desk(),
        };
        m.obs_len = obs_len;
        set(&mut m.channels, self.resnet_channels);
        set(&mut m.gait.epochs, self.gait_epochs);
        set(&mut m.attention.epochs, self.attention_epochs);
        for r in [&mut m.gait, &mut m.attention] {
            set(&mut r.lr, self.resnet_lr);
            set(&mut r.batch_size, self.resnet_batch_size);
            set(&mut r.standardize, self.standardize);
        }
        for s in [&mut m.distraction_svm, &mut m.crossing_svm] {
            apply_svm(s, self);
        }
        set(&mut m.distraction_stacked, self.distraction_stacked);
        m
    }
}

fn apply_svm(s: &mut SvmConfig, f: &TrainFile) {
    set(&mut s.c, f.svm_c);
    if f.svm_gamma.is_some() {
        s.gamma = f.svm_gamma;
    }
    set(&mut s.tol, f.svm_tol);
    set(&mut s.max_passes, f.svm_max_passes);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackFile {
    pub iou_min: f64,
    pub max_misses: u32,
    pub min_hits: u32,
    pub q_pos: f64,
    pub q_vel: f64,
    pub r: f64,
    pub init_pos_var: f64,
    pub init_vel_var: f64,
}

impl Default for TrackFile {
    fn default() -> Self {
        let t = TrackerConfig::default();
        let k = t.kalman;
        TrackFile {
            iou_min: t.iou_min,
            max_misses: t.max_misses,
            min_hits: t.min_hits,
            q_pos: k.q_pos,
            q_vel: k.q_vel,
            r: k.r,
            init_pos_var: k.init_pos_var,
            init_vel_var: k.init_vel_var,
        }
    }
}

impl TrackFile {
    pub fn tracker(&self) -> Result<TrackerConfig> {
        if !(0.0..=1.0).contains(&self.iou_min) {
            return Err(CliError::Usage(format!("iou_min {} not in [0, 1]", self.iou_min)));
        }
        let noise = [self.q_pos, self.q_vel, self.r, self.init_pos_var, self.init_vel_var];
        if noise.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(CliError::Usage("noise variances must be positive".into()));
        }
        Ok(TrackerConfig {
            iou_min: self.iou_min,
            max_misses: self.max_misses,
            min_hits: self.min_hits,
            kalman: KalmanConfig {
                q_pos: self.q_pos,
                q_vel: self.q_vel,
                r: self.r,
                init_pos_var: self.init_pos_var,
                init_vel_var: self.init_vel_var,
            },
        })
    }
}
