use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::masks::{MaskGrid, NUM_CLASSES, VOID};
use super::windows::SequenceSample;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentOps {
    pub flip: bool,
    /// Fraction of mask cells blanked out.
    pub pixel_dropout: f64,
    /// Standard deviation of keypoint coordinate noise, in pixels.
    pub keypoint_sigma: f64,
    /// Probability that a mask cell is replaced by a random class.
    pub mask_noise: f64,
}

/// Horizontal mirror of every spatial field and of the orientation label.
pub fn flip_sample(s: &SequenceSample) -> SequenceSample {
    let width = s.image_size[0];
    let mut out = s.clone();
    out.poses = s.poses.iter().map(|p| p.flipped(width)).collect();
    for b in &mut out.boxes {
        b.cx = width - b.cx;
    }
    for c in &mut out.future_centers {
        c[0] = width - c[0];
    }
    out.labels.orientation = s.labels.orientation.mirrored();
    let mut cache: HashMap<*const MaskGrid, Arc<MaskGrid>> = HashMap::new();
    out.masks = s
        .masks
        .iter()
        .map(|m| {
            Arc::clone(
                cache
                    .entry(Arc::as_ptr(m))
                    .or_insert_with(|| Arc::new(m.mirrored())),
            )
        })
        .collect();
    out
}

pub fn augment(s: &SequenceSample, ops: &AugmentOps, seed: u64) -> SequenceSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = if ops.flip { flip_sample(s) } else { s.clone() };
    if ops.keypoint_sigma > 0.0 {
        let normal = Normal::new(0.0, ops.keypoint_sigma).expect("sigma is positive and finite");
        for pose in &mut out.poses {
            for k in &mut pose.keypoints {
                k.x += normal.sample(&mut rng);
                k.y += normal.sample(&mut rng);
            }
        }
    }
    if ops.pixel_dropout > 0.0 || ops.mask_noise > 0.0 {
        out.masks = out
            .masks
            .iter()
            .map(|m| {
                let mut g = (**m).clone();
                for cell in &mut g.cells {
                    if ops.pixel_dropout > 0.0 && rng.random_bool(ops.pixel_dropout.min(1.0)) {
                        *cell = VOID;
                    } else if ops.mask_noise > 0.0 && rng.random_bool(ops.mask_noise.min(1.0)) {
                        *cell = rng.random_range(0..NUM_CLASSES as u8);
                    }
                }
                Arc::new(g)
            })
            .collect();
    }
    out
}
