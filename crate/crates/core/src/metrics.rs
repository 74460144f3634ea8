//! Average precision and trajectory displacement errors.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(CoreError::Invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(CoreError::Invalid(format!("score {s} is not a number")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(CoreError::Invalid("average precision needs at least one positive label".into()));
    }
    Ok(positives)
}

/// Precision/recall after each distinct score threshold, from high to low.
/// Tied scores enter the curve together.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PRPoint>> {
    let positives = check_inputs(scores, labels)? as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            tp += usize::from(labels[order[i]]);
            seen += 1;
            i += 1;
        }
        points.push(PRPoint {
            threshold,
            precision: tp as f64 / seen as f64,
            recall: tp as f64 / positives,
        });
    }
    Ok(points)
}

/// All-points average precision: sum over thresholds of precision times the
/// recall increment.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for p in pr_curve(scores, labels)? {
        ap += p.precision * (p.recall - prev_recall);
        prev_recall = p.recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassAp {
    /// `None` for classes absent from the labels.
    pub per_class: Vec<Option<f64>>,
    pub macro_ap: f64,
}

impl MulticlassAp {
    pub fn skipped(&self) -> Vec<usize> {
        (0..self.per_class.len()).filter(|&c| self.per_class[c].is_none()).collect()
    }
}

/// One-vs-rest AP per class. `scores[i][c]` is the score of sample i for class c.
pub fn multiclass_ap(scores: &[Vec<f64>], labels: &[usize]) -> Result<MulticlassAp> {
    if scores.len() != labels.len() {
        return Err(CoreError::Invalid(format!("{} score rows for {} labels", scores.len(), labels.len())));
    }
    let classes = scores.first().map_or(0, Vec::len);
    if classes == 0 || scores.iter().any(|r| r.len() != classes) {
        return Err(CoreError::Invalid("score rows must be non-empty and equally long".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= classes) {
        return Err(CoreError::Invalid(format!("label {l} out of range for {classes} classes")));
    }
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let truth: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if !truth.iter().any(|&t| t) {
            per_class.push(None);
            continue;
        }
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        per_class.push(Some(average_precision(&col, &truth)?));
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(CoreError::Invalid("no class has a positive label".into()));
    }
    let macro_ap = present.iter().sum::<f64>() / present.len() as f64;
    Ok(MulticlassAp { per_class, macro_ap })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajError {
    pub ade: f64,
    pub fde: f64,
}

pub fn displacement_errors(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<TrajError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(CoreError::Invalid(format!(
            "trajectories must be non-empty and equally long, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let errs: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect();
    Ok(TrajError {
        ade: errs.iter().sum::<f64>() / errs.len() as f64,
        fde: *errs.last().expect("non-empty"),
    })
}
