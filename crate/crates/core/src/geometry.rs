//! Hand-crafted per-frame pose features.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const NUM_JOINTS: usize = 17;

/// COCO joint order.
pub mod joint {
    pub const NOSE: usize = 0;
    pub const L_EYE: usize = 1;
    pub const R_EYE: usize = 2;
    pub const L_EAR: usize = 3;
    pub const R_EAR: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const L_ELBOW: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const L_WRIST: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const L_HIP: usize = 11;
    pub const R_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const R_KNEE: usize = 14;
    pub const L_ANKLE: usize = 15;
    pub const R_ANKLE: usize = 16;
}

/// Joints feeding the attention/orientation model, in output order.
pub const UPPER_BODY: [usize; 7] = [
    joint::NOSE,
    joint::L_EYE,
    joint::R_EYE,
    joint::L_EAR,
    joint::R_EAR,
    joint::L_SHOULDER,
    joint::R_SHOULDER,
];

/// Index of the joint that takes the place of `j` under a horizontal mirror.
pub const fn mirror_joint(j: usize) -> usize {
    if j == 0 {
        0
    } else if j % 2 == 1 {
        j + 1
    } else {
        j - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64, v: f64) -> Self {
        Keypoint { x, y, v }
    }

    fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseFrame {
    pub keypoints: [Keypoint; NUM_JOINTS],
}

impl PoseFrame {
    pub fn from_triples(rows: &[[f64; 3]]) -> Result<Self> {
        if rows.len() != NUM_JOINTS {
            return Err(CoreError::Invalid(format!("pose needs {NUM_JOINTS} keypoints, got {}", rows.len())));
        }
        let mut pose = PoseFrame::default();
        for (k, r) in pose.keypoints.iter_mut().zip(rows) {
            *k = Keypoint::new(r[0], r[1], r[2]);
        }
        Ok(pose)
    }

    pub fn to_triples(&self) -> Vec<[f64; 3]> {
        self.keypoints.iter().map(|k| [k.x, k.y, k.v]).collect()
    }

    pub fn joint(&self, j: usize) -> &Keypoint {
        &self.keypoints[j]
    }

    /// Reflection x -> width - x with left/right joints exchanged.
    pub fn flipped(&self, width: f64) -> PoseFrame {
        let mut out = *self;
        for (j, k) in self.keypoints.iter().enumerate() {
            out.keypoints[mirror_joint(j)] = Keypoint::new(width - k.x, k.y, k.v);
        }
        out
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Unsigned angle between two vectors in [0, pi]; `None` when either is zero.
pub fn vector_angle(u: [f64; 2], v: [f64; 2]) -> Option<f64> {
    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let cos = (u[0] * v[0] + u[1] * v[1]) / (nu * nv);
    Some(cos.clamp(-1.0, 1.0).acos())
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Interior angle at `vertex` between the rays towards `a` and `b`.
fn joint_angle(a: [f64; 2], vertex: [f64; 2], b: [f64; 2]) -> (f64, bool) {
    match vector_angle(sub(a, vertex), sub(b, vertex)) {
        Some(t) => (t, true),
        None => (0.0, false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitFeatures {
    pub d1: f64,
    pub d2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub x: f64,
    pub y: f64,
    /// Whether theta1 and theta2 were computed from non-degenerate limbs.
    pub valid: [bool; 2],
}

impl GaitFeatures {
    pub fn to_array(&self) -> [f64; 6] {
        [self.d1, self.d2, self.theta1, self.theta2, self.x, self.y]
    }
}

pub fn gait_features(pose: &PoseFrame) -> GaitFeatures {
    use joint::*;
    let p = |j: usize| pose.joint(j).xy();
    let (theta1, v1) = joint_angle(p(R_HIP), p(R_KNEE), p(R_ANKLE));
    let (theta2, v2) = joint_angle(p(L_HIP), p(L_KNEE), p(L_ANKLE));
    GaitFeatures {
        d1: distance(p(R_ANKLE), p(R_KNEE)),
        d2: distance(p(L_ANKLE), p(L_KNEE)),
        theta1,
        theta2,
        x: 0.5 * (p(L_HIP)[0] + p(R_HIP)[0]),
        y: 0.5 * (p(L_HIP)[1] + p(R_HIP)[1]),
        valid: [v1, v2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionFeatures {
    pub values: [f64; 21],
}

pub fn attention_features(pose: &PoseFrame) -> AttentionFeatures {
    let mut values = [0.0; 21];
    for (i, &j) in UPPER_BODY.iter().enumerate() {
        let k = pose.joint(j);
        values[3 * i..3 * i + 3].copy_from_slice(&[k.x, k.y, k.v]);
    }
    AttentionFeatures { values }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistractionFeatures {
    pub theta_l: f64,
    pub theta_r: f64,
    pub theta_lr_hands: f64,
    pub theta_lr_upper: f64,
    pub valid: [bool; 4],
}

impl DistractionFeatures {
    pub fn to_array(&self) -> [f64; 4] {
        [self.theta_l, self.theta_r, self.theta_lr_hands, self.theta_lr_upper]
    }
}

pub fn distraction_features(pose: &PoseFrame) -> DistractionFeatures {
    use joint::*;
    let p = |j: usize| pose.joint(j).xy();
    let (theta_l, vl) = joint_angle(p(L_SHOULDER), p(L_ELBOW), p(L_WRIST));
    let (theta_r, vr) = joint_angle(p(R_SHOULDER), p(R_ELBOW), p(R_WRIST));
    let hands = vector_angle(sub(p(L_WRIST), p(L_ELBOW)), sub(p(R_WRIST), p(R_ELBOW)));
    let upper = vector_angle(sub(p(L_ELBOW), p(L_SHOULDER)), sub(p(R_ELBOW), p(R_SHOULDER)));
    DistractionFeatures {
        theta_l,
        theta_r,
        theta_lr_hands: hands.unwrap_or(0.0),
        theta_lr_upper: upper.unwrap_or(0.0),
        valid: [vl, vr, hands.is_some(), upper.is_some()],
    }
}

fn check_dims(width: f64, height: f64) -> Result<()> {
    if !(width > 0.0 && height > 0.0) {
        return Err(CoreError::Invalid(format!("image size must be positive, got {width}x{height}")));
    }
    Ok(())
}

pub fn normalize_pose(pose: &PoseFrame, width: f64, height: f64) -> Result<PoseFrame> {
    check_dims(width, height)?;
    let mut out = *pose;
    for k in &mut out.keypoints {
        k.x /= width;
        k.y /= height;
    }
    Ok(out)
}

pub fn denormalize_pose(pose: &PoseFrame, width: f64, height: f64) -> Result<PoseFrame> {
    check_dims(width, height)?;
    let mut out = *pose;
    for k in &mut out.keypoints {
        k.x *= width;
        k.y *= height;
    }
    Ok(out)
}
