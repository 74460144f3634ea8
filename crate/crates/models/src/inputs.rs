//! Conversion of a [`SequenceSample`] into the normalized tensors consumed by
//! the network.

use vru_core::data::masks::{MaskGrid, NUM_CLASSES, VOID};
use vru_core::data::SequenceSample;
use vru_core::geometry::NUM_JOINTS;
use vru_nn::Tensor;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    /// `[N, 17, 3]`: x / width, y / height, visibility.
    pub pose: Tensor,
    /// `[N, 4, 1]`: centre offset from the last observed box in units of
    /// `motion_unit` times the image size, then w / width, h / height.
    pub boxes: Tensor,
    /// `[H, W, 5]` time-averaged one-hot scene mask.
    pub scene: Tensor,
    /// Normalized centre of the last observed box.
    pub last_center: [f64; 2],
    pub image_size: [f64; 2],
}

impl ModelInputs {
    /// `motion_unit` is the fraction of the image size used as the unit of
    /// the box-centre offsets.
    pub fn from_sample(s: &SequenceSample, motion_unit: f64) -> Result<Self> {
        let n = s.obs_len();
        if n == 0 || s.boxes.len() != n || s.masks.len() != n {
            return Err(ModelError::Input(format!(
                "sample {}/{} has {} poses, {} boxes, {} masks",
                s.scene_id,
                s.person_id,
                n,
                s.boxes.len(),
                s.masks.len()
            )));
        }
        let [w, h] = s.image_size;
        if !(w > 0.0 && h > 0.0) {
            return Err(ModelError::Input(format!("image size {w}x{h}")));
        }
        let mut pose = Vec::with_capacity(n * NUM_JOINTS * 3);
        for p in &s.poses {
            for k in &p.keypoints {
                pose.extend_from_slice(&[k.x / w, k.y / h, k.v]);
            }
        }
        let mut boxes = Vec::with_capacity(n * 4);
        let last = s.boxes[n - 1];
        for b in &s.boxes {
            boxes.extend_from_slice(&[
                (b.cx - last.cx) / (w * motion_unit),
                (b.cy - last.cy) / (h * motion_unit),
                b.w / w,
                b.h / h,
            ]);
        }
        let masks: Vec<&MaskGrid> = s.masks.iter().map(|m| m.as_ref()).collect();
        Ok(ModelInputs {
            pose: Tensor::from_vec(&[n, NUM_JOINTS, 3], pose)?,
            boxes: Tensor::from_vec(&[n, 4, 1], boxes)?,
            scene: mean_mask(&masks)?,
            last_center: [last.cx / w, last.cy / h],
            image_size: s.image_size,
        })
    }

    pub fn obs_len(&self) -> usize {
        self.pose.shape()[0]
    }
}

/// One-hot encodes every mask and averages over time. Void cells contribute
/// an all-zero vector.
pub fn mean_mask(masks: &[&MaskGrid]) -> Result<Tensor> {
    let first = masks
        .first()
        .ok_or_else(|| ModelError::Input("no scene masks".into()))?;
    let (h, w) = (first.height, first.width);
    let mut out = Tensor::zeros(&[h, w, NUM_CLASSES]);
    let data = out.data_mut();
    let share = 1.0 / masks.len() as f64;
    for m in masks {
        if m.height != h || m.width != w {
            return Err(ModelError::Input(format!(
                "mask {}x{} differs from {}x{}",
                m.width, m.height, w, h
            )));
        }
        for (i, &c) in m.cells.iter().enumerate() {
            if c == VOID {
                continue;
            }
            if c as usize >= NUM_CLASSES {
                return Err(ModelError::Input(format!("mask class index {c} out of range")));
            }
            data[i * NUM_CLASSES + c as usize] += share;
        }
    }
    Ok(out)
}
