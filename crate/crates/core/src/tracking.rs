//! Constant-velocity Kalman tracking with IoU-based Hungarian association.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::PoseFrame;

pub type Vec8 = SVector<f64, 8>;
pub type Mat8 = SMatrix<f64, 8, 8>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat48 = SMatrix<f64, 4, 8>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.cx + self.w / 2.0).min(other.cx + other.w / 2.0)
            - (self.cx - self.w / 2.0).max(other.cx - other.w / 2.0);
        let iy = (self.cy + self.h / 2.0).min(other.cy + other.h / 2.0)
            - (self.cy - self.h / 2.0).max(other.cy - other.h / 2.0);
        let inter = ix.max(0.0) * iy.max(0.0);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub q_pos: f64,
    pub q_vel: f64,
    pub r: f64,
    pub init_pos_var: f64,
    pub init_vel_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            q_pos: 1.0,
            q_vel: 0.25,
            r: 1.0,
            init_pos_var: 10.0,
            init_vel_var: 100.0,
        }
    }
}

/// State (cx, cy, w, h, vcx, vcy, vw, vh) with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vec8,
    pub cov: Mat8,
}

pub fn transition(dt: f64) -> Mat8 {
    let mut f = Mat8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = dt;
    }
    f
}

pub fn process_noise(cfg: &KalmanConfig, dt: f64) -> Mat8 {
    let mut q = Mat8::zeros();
    for i in 0..4 {
        q[(i, i)] = cfg.q_pos * dt;
        q[(i + 4, i + 4)] = cfg.q_vel * dt;
    }
    q
}

fn observation() -> Mat48 {
    let mut h = Mat48::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

impl KalmanState {
    pub fn new(obs: &BBox, cfg: &KalmanConfig) -> Self {
        let mut mean = Vec8::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from_slice(&obs.to_array());
        let mut cov = Mat8::zeros();
        for i in 0..4 {
            cov[(i, i)] = cfg.init_pos_var;
            cov[(i + 4, i + 4)] = cfg.init_vel_var;
        }
        KalmanState { mean, cov }
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.mean[0], self.mean[1], self.mean[2], self.mean[3])
    }

    pub fn predict(&self, dt: u32, cfg: &KalmanConfig) -> KalmanState {
        let dt = f64::from(dt.max(1));
        let f = transition(dt);
        let cov = f * self.cov * f.transpose() + process_noise(cfg, dt);
        KalmanState {
            mean: f * self.mean,
            cov: symmetrize(&cov),
        }
    }

    /// Kalman correction with a Joseph-form covariance update.
    pub fn update(&self, obs: &BBox, cfg: &KalmanConfig) -> Result<KalmanState> {
        let h = observation();
        let r = Mat4::identity() * cfg.r;
        let z = SVector::<f64, 4>::from(obs.to_array());
        let innovation = z - h * self.mean;
        let s = h * self.cov * h.transpose() + r;
        let chol = s
            .cholesky()
            .ok_or_else(|| CoreError::Numeric("innovation covariance is not positive definite".into()))?;
        // K = P H^T S^-1, solved as S K^T = H P.
        let k = chol.solve(&(h * self.cov)).transpose();
        let mean = self.mean + k * innovation;
        let a = Mat8::identity() - k * h;
        let cov = a * self.cov * a.transpose() + k * r * k.transpose();
        Ok(KalmanState {
            mean,
            cov: symmetrize(&cov),
        })
    }
}

fn symmetrize(m: &Mat8) -> Mat8 {
    (m + m.transpose()) * 0.5
}

/// Solves the rectangular assignment problem maximising total weight.
/// Returns `assignment[row] = Some(col)`.
pub fn hungarian_max(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    let max_w = weights.iter().flatten().cloned().fold(0.0f64, f64::max);
    // Square cost matrix, 1-based as in the classic potentials formulation.
    let cost = |i: usize, j: usize| -> f64 {
        if i <= rows && j <= cols {
            max_w - weights[i - 1][j - 1]
        } else {
            max_w
        }
    };
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// (track index, detection index, IoU)
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

impl Association {
    pub fn total_iou(&self) -> f64 {
        self.matches.iter().map(|m| m.2).sum()
    }
}

/// One-to-one matching maximising total IoU; pairs below `iou_min` stay unmatched.
pub fn associate(tracks: &[BBox], detections: &[BBox], iou_min: f64) -> Association {
    let weights: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| {
                    let iou = t.iou(d);
                    if iou < iou_min || iou <= 0.0 {
                        0.0
                    } else {
                        iou
                    }
                })
                .collect()
        })
        .collect();
    let assignment = hungarian_max(&weights);
    let mut out = Association::default();
    let mut det_used = vec![false; detections.len()];
    for (ti, a) in assignment.iter().enumerate() {
        match a {
            Some(di) if weights[ti][*di] > 0.0 => {
                det_used[*di] = true;
                out.matches.push((ti, *di, weights[ti][*di]));
            }
            _ => out.unmatched_tracks.push(ti),
        }
    }
    out.unmatched_detections = (0..detections.len()).filter(|&d| !det_used[d]).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub iou_min: f64,
    pub max_misses: u32,
    pub min_hits: u32,
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_min: 0.3,
            max_misses: 15,
            min_hits: 3,
            kalman: KalmanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub frame: i64,
    pub bbox: BBox,
    pub pose: PoseFrame,
    /// Posterior box after the update at this frame.
    pub filtered: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub history: Vec<TrackEntry>,
    pub age: u32,
    pub misses: u32,
    pub hits: u32,
    pub state: KalmanState,
    last_frame: i64,
}

impl Track {
    pub fn is_confirmed(&self, cfg: &TrackerConfig) -> bool {
        self.hits >= cfg.min_hits
    }
}

/// Per-scene tracker; ids are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    active: Vec<Track>,
    retired: Vec<Track>,
    next_id: u64,
    last_frame: Option<i64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker {
            config,
            active: Vec::new(),
            retired: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    pub fn retired(&self) -> &[Track] {
        &self.retired
    }

    pub fn step(&mut self, frame: i64, detections: &[(BBox, PoseFrame)]) -> Result<()> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(CoreError::Invalid(format!("frame {frame} does not follow frame {last}")));
            }
        }
        let dt = self.last_frame.map_or(1, |l| (frame - l) as u32);
        self.last_frame = Some(frame);
        let kcfg = self.config.kalman;

        let predicted: Vec<KalmanState> = self
            .active
            .iter()
            .map(|t| t.state.predict((frame - t.last_frame) as u32, &kcfg))
            .collect();
        let boxes: Vec<BBox> = predicted.iter().map(KalmanState::bbox).collect();
        let dets: Vec<BBox> = detections.iter().map(|d| d.0).collect();
        let assoc = associate(&boxes, &dets, self.config.iou_min);

        for &(ti, di, _) in &assoc.matches {
            let (bbox, pose) = detections[di];
            let state = predicted[ti].update(&bbox, &kcfg)?;
            let track = &mut self.active[ti];
            track.state = state;
            track.last_frame = frame;
            track.hits += 1;
            track.misses = 0;
            track.age += dt;
            track.history.push(TrackEntry {
                frame,
                bbox,
                pose,
                filtered: state.bbox(),
            });
        }
        for &ti in &assoc.unmatched_tracks {
            let track = &mut self.active[ti];
            track.misses += dt;
            track.age += dt;
        }
        let max_misses = self.config.max_misses;
        let (keep, gone): (Vec<Track>, Vec<Track>) =
            std::mem::take(&mut self.active).into_iter().partition(|t| t.misses <= max_misses);
        self.active = keep;
        self.retired.extend(gone);

        for &di in &assoc.unmatched_detections {
            let (bbox, pose) = detections[di];
            let state = KalmanState::new(&bbox, &kcfg);
            self.active.push(Track {
                id: self.next_id,
                history: vec![TrackEntry {
                    frame,
                    bbox,
                    pose,
                    filtered: bbox,
                }],
                age: 0,
                misses: 0,
                hits: 1,
                state,
                last_frame: frame,
            });
            self.next_id += 1;
        }
        Ok(())
    }

    /// All confirmed tracks, retired and active, ordered by id.
    pub fn finish(self) -> Vec<Track> {
        let cfg = self.config;
        let mut all: Vec<Track> = self
            .retired
            .into_iter()
            .chain(self.active)
            .filter(|t| t.is_confirmed(&cfg))
            .collect();
        all.sort_by_key(|t| t.id);
        all
    }
}
