//! Track filtering, padding and sliding-window sample extraction.

use std::collections::HashMap;
use std::sync::Arc;

use super::annotations::{LabeledTrack, Scene};
use super::labels::{ActionLabels, SceneContext};
use super::masks::{MaskGrid, MaskPack};
use crate::error::{CoreError, Result};
use crate::geometry::PoseFrame;
use crate::tracking::BBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub obs_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub fps: f64,
    pub min_duration_s: f64,
    pub pad_min_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            obs_len: 30,
            horizon: 30,
            stride: 15,
            fps: 30.0,
            min_duration_s: 1.5,
            pad_min_fraction: 0.75,
        }
    }
}

impl WindowConfig {
    pub fn span(&self) -> usize {
        self.obs_len + self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_len == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(CoreError::Invalid("obs_len, horizon and stride must be at least 1".into()));
        }
        if !(self.fps > 0.0) {
            return Err(CoreError::Invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if !(0.0..=1.0).contains(&self.pad_min_fraction) {
            return Err(CoreError::Invalid(format!("pad_min_fraction {} not in [0, 1]", self.pad_min_fraction)));
        }
        Ok(())
    }

    /// Number of windows a track of `len` frames yields.
    pub fn window_count(&self, len: usize) -> usize {
        if len < self.span() {
            0
        } else {
            (len - self.span()) / self.stride + 1
        }
    }
}

/// One training window. Coordinates are in image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub scene_id: String,
    pub person_id: u64,
    pub start_frame: i64,
    pub poses: Vec<PoseFrame>,
    pub boxes: Vec<BBox>,
    pub masks: Vec<Arc<MaskGrid>>,
    /// Source frame of each observed mask.
    pub mask_frames: Vec<i64>,
    /// Actions at the last observed frame; crossing at the last future frame.
    pub labels: ActionLabels,
    pub future_centers: Vec<[f64; 2]>,
    pub context: SceneContext,
    pub image_size: [f64; 2],
    /// One flag per observed and future frame.
    pub pad_flags: Vec<bool>,
}

impl SequenceSample {
    pub fn obs_len(&self) -> usize {
        self.poses.len()
    }

    pub fn horizon(&self) -> usize {
        self.future_centers.len()
    }

    pub fn last_center(&self) -> [f64; 2] {
        let b = self.boxes.last().expect("windows are never empty");
        [b.cx, b.cy]
    }
}

pub fn filter_tracks(tracks: Vec<LabeledTrack>, min_duration_s: f64, fps: f64) -> Result<Vec<LabeledTrack>> {
    if !(fps > 0.0) {
        return Err(CoreError::Invalid(format!("fps must be positive, got {fps}")));
    }
    let min_len = min_duration_s * fps;
    Ok(tracks.into_iter().filter(|t| t.len() as f64 > min_len).collect())
}

/// Replicates edge frames so the track spans at least `obs_len + horizon` frames.
/// Returns `None` when the track is too short to be padded.
pub fn pad_track(track: &LabeledTrack, cfg: &WindowConfig) -> Option<LabeledTrack> {
    let span = cfg.span();
    let len = track.len();
    if len >= span {
        return Some(track.clone());
    }
    if len == 0 || (len as f64) < cfg.pad_min_fraction * span as f64 {
        return None;
    }
    let missing = span - len;
    let front = missing / 2;
    let back = missing - front;
    let mut first = track.frames[0].clone();
    first.padded = true;
    let mut last = track.frames[len - 1].clone();
    last.padded = true;
    let mut frames = Vec::with_capacity(span);
    frames.extend(std::iter::repeat_n(first, front));
    frames.extend(track.frames.iter().cloned());
    frames.extend(std::iter::repeat_n(last, back));
    Some(LabeledTrack {
        scene_id: track.scene_id.clone(),
        person_id: track.person_id,
        frames,
    })
}

pub fn make_windows(track: &LabeledTrack, masks: &MaskPack, cfg: &WindowConfig) -> Result<Vec<SequenceSample>> {
    let n = cfg.obs_len;
    let h = cfg.horizon;
    let mut out = Vec::with_capacity(cfg.window_count(track.len()));
    for w in 0..cfg.window_count(track.len()) {
        let start = w * cfg.stride;
        let obs = &track.frames[start..start + n];
        let future = &track.frames[start + n..start + n + h];
        let current = &obs[n - 1];
        let mut labels = current.labels;
        labels.crossing = future[h - 1].labels.crossing;
        let mut grids = Vec::with_capacity(n);
        for f in obs {
            let grid = masks.get(f.frame).ok_or_else(|| {
                CoreError::Data(format!("scene {} has no mask for frame {}", track.scene_id, f.frame))
            })?;
            grids.push(Arc::clone(grid));
        }
        out.push(SequenceSample {
            scene_id: track.scene_id.clone(),
            person_id: track.person_id,
            start_frame: obs[0].frame,
            poses: obs.iter().map(|f| f.pose).collect(),
            boxes: obs.iter().map(|f| f.bbox).collect(),
            masks: grids,
            mask_frames: obs.iter().map(|f| f.frame).collect(),
            labels,
            future_centers: future.iter().map(|f| [f.bbox.cx, f.bbox.cy]).collect(),
            context: current.context,
            image_size: [masks.image_width, masks.image_height],
            pad_flags: track.frames[start..start + n + h].iter().map(|f| f.padded).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    pub tracks: usize,
    pub kept_after_duration: usize,
    pub padded: usize,
    pub skipped_short: usize,
    pub windows: usize,
}

/// Runs filtering, padding and windowing over every scene.
pub fn build_samples(
    scenes: &[Scene],
    masks: &HashMap<String, MaskPack>,
    cfg: &WindowConfig,
) -> Result<(Vec<SequenceSample>, BuildStats)> {
    cfg.validate()?;
    let mut stats = BuildStats::default();
    let mut samples = Vec::new();
    for scene in scenes {
        stats.tracks += scene.tracks.len();
        let kept = filter_tracks(scene.tracks.clone(), cfg.min_duration_s, cfg.fps)?;
        stats.kept_after_duration += kept.len();
        if kept.is_empty() {
            continue;
        }
        let pack = masks
            .get(&scene.id)
            .ok_or_else(|| CoreError::Data(format!("no mask pack for scene {}", scene.id)))?;
        for track in &kept {
            let Some(padded) = pad_track(track, cfg) else {
                stats.skipped_short += 1;
                continue;
            };
            if padded.len() != track.len() {
                stats.padded += 1;
            }
            let windows = make_windows(&padded, pack, cfg)?;
            stats.windows += windows.len();
            samples.extend(windows);
        }
    }
    Ok((samples, stats))
}
