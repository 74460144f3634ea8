use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::windows::SequenceSample;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub train_scenes: Vec<String>,
    pub val_scenes: Vec<String>,
    pub test_scenes: Vec<String>,
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CoreError::Invalid(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

/// Partitions samples by scene id into train/val/test.
pub fn split(samples: Vec<SequenceSample>, ratios: [f64; 3], seed: u64) -> Result<Split> {
    validate_ratios(ratios)?;
    let mut scenes: Vec<String> = samples
        .iter()
        .map(|s| s.scene_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    scenes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = scenes.len();
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test_scenes = scenes.split_off(n_train + n_val);
    let val_scenes = scenes.split_off(n_train);
    let train_scenes = scenes;

    let mut out = Split::default();
    let train_set: BTreeSet<&String> = train_scenes.iter().collect();
    let val_set: BTreeSet<&String> = val_scenes.iter().collect();
    for s in samples {
        if train_set.contains(&s.scene_id) {
            out.train.push(s);
        } else if val_set.contains(&s.scene_id) {
            out.val.push(s);
        } else {
            out.test.push(s);
        }
    }
    out.train_scenes = train_scenes;
    out.val_scenes = val_scenes;
    out.test_scenes = test_scenes;
    Ok(out)
}
