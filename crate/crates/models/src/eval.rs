//! Per-window scoring shared by every model family.

use vru_core::data::{SequenceSample, Task};
use vru_core::metrics::{average_precision, displacement_errors, multiclass_ap};

use crate::error::Result;
use crate::smooth::smooth_trajectory;
use crate::vrunet::{PredictionBundle, VruNet};

/// Scores collected over a set of windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collected {
    /// Class distributions (or scores) per task, one entry per window.
    pub scores: [Vec<Vec<f64>>; 5],
    pub labels: Vec<[usize; 5]>,
    /// Per-window (ADE, FDE) in pixels, when the model predicts trajectories.
    pub displacement: Vec<(f64, f64)>,
}

impl Collected {
    pub fn push_bundle(&mut self, b: &PredictionBundle, s: &SequenceSample) -> Result<()> {
        for (k, d) in b.distributions().into_iter().enumerate() {
            self.scores[k].push(d.to_vec());
        }
        self.labels.push(s.labels.indices());
        let px = pixel_trajectory(b, s.image_size);
        let e = displacement_errors(&px, &s.future_centers)?;
        self.displacement.push((e.ade, e.fde));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Average precision per head; `None` when the positive class is absent.
    pub ap: [Option<f64>; 5],
    /// Fraction of windows whose arg-max matches the label, per head.
    pub accuracy: [f64; 5],
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub windows: usize,
}

impl EvalReport {
    pub fn from_collected(c: &Collected) -> Result<Self> {
        let n = c.labels.len();
        let mut ap = [None; 5];
        let mut accuracy = [0.0; 5];
        for task in Task::ALL {
            let k = task.index();
            let labels: Vec<usize> = c.labels.iter().map(|l| l[k]).collect();
            let scores = &c.scores[k];
            if scores.len() != n {
                continue;
            }
            ap[k] = task_ap(task, scores, &labels)?;
            let hits = scores
                .iter()
                .zip(&labels)
                .filter(|(s, &l)| argmax(s) == l)
                .count();
            accuracy[k] = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        }
        let (ade, fde) = if c.displacement.is_empty() {
            (None, None)
        } else {
            let m = c.displacement.len() as f64;
            (
                Some(c.displacement.iter().map(|d| d.0).sum::<f64>() / m),
                Some(c.displacement.iter().map(|d| d.1).sum::<f64>() / m),
            )
        };
        Ok(EvalReport {
            ap,
            accuracy,
            ade,
            fde,
            windows: n,
        })
    }
}

/// AP of one head. Binary heads score the positive class (index 0);
/// orientation reports the macro one-vs-rest AP.
pub fn task_ap(task: Task, scores: &[Vec<f64>], labels: &[usize]) -> Result<Option<f64>> {
    if labels.is_empty() {
        return Ok(None);
    }
    if task == Task::Orientation {
        let present = (0..task.classes()).any(|c| labels.contains(&c));
        if !present {
            return Ok(None);
        }
        return Ok(Some(multiclass_ap(scores, labels)?.macro_ap));
    }
    let positives: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
    if !positives.contains(&true) {
        return Ok(None);
    }
    let s: Vec<f64> = scores.iter().map(|d| d[0]).collect();
    Ok(Some(average_precision(&s, &positives)?))
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Denormalized and cubic-smoothed trajectory in pixels.
pub fn pixel_trajectory(b: &PredictionBundle, image_size: [f64; 2]) -> Vec<[f64; 2]> {
    let raw: Vec<[f64; 2]> = b
        .trajectory
        .iter()
        .map(|p| [p[0] * image_size[0], p[1] * image_size[1]])
        .collect();
    smooth_trajectory(&raw).points
}

pub fn evaluate_vrunet(model: &VruNet, samples: &[SequenceSample]) -> Result<EvalReport> {
    let mut c = Collected::default();
    for s in samples {
        let b = model.predict(s)?;
        c.push_bundle(&b, s)?;
    }
    EvalReport::from_collected(&c)
}
