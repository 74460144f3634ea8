//! Procedural scenes with one pedestrian each, drawn on a canonical 160x90
//! canvas and scaled to the requested image size.
//!
//! The road is a vertical band of mask columns. Crossing is decided purely by
//! whether the pedestrian's box centre lies on a road cell, so the mask carries
//! the information needed to separate crossers from pedestrians walking
//! parallel to, away from, or too far from the road.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::annotations::{record_for, AnnotationRecord, LabeledTrack, Scene, TrackFrame};
use super::labels::*;
use super::masks::{MaskGrid, MaskPack, CAR, PEDESTRIAN, ROAD, SIDEWALK, TRAFFIC_SIGN};
use crate::error::{CoreError, Result};
use crate::geometry::{joint, Keypoint, PoseFrame, NUM_JOINTS};
use crate::seed::derive_seed;
use crate::tracking::BBox;

const CANVAS_W: f64 = 160.0;
const CANVAS_H: f64 = 90.0;
/// Road occupies rows below this canvas ordinate.
const ROAD_TOP: f64 = 25.0;
const BOX_W: f64 = 12.0;
const BOX_H: f64 = 30.0;
const MARGIN: f64 = 8.0;
const SPEED: (f64, f64) = (0.3, 0.5);
const VERTICAL_SPEED: (f64, f64) = (0.1, 0.25);
const GOLDEN: f64 = 0.618_033_988_749_894_9;
const SQRT2_FRAC: f64 = 0.414_213_562_373_095_1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub scenes: usize,
    pub frames: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub mask_width: usize,
    pub mask_height: usize,
    pub fps: f64,
    pub crossing_fraction: f64,
    pub standing_fraction: f64,
    pub vertical_fraction: f64,
    pub phoning_fraction: f64,
    /// Standard deviation of keypoint jitter, in canvas pixels.
    pub keypoint_noise: f64,
    pub prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            scenes: 100,
            frames: 75,
            image_width: 160.0,
            image_height: 90.0,
            mask_width: 64,
            mask_height: 36,
            fps: 30.0,
            crossing_fraction: 0.4,
            standing_fraction: 0.2,
            vertical_fraction: 0.15,
            phoning_fraction: 0.3,
            keypoint_noise: 0.0,
            prefix: "synth".into(),
        }
    }
}

impl SynthSpec {
    pub fn hard_negative_fraction(&self) -> f64 {
        1.0 - self.crossing_fraction - self.standing_fraction - self.vertical_fraction
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Invalid(format!("synth spec: {m}")));
        if self.scenes == 0 {
            return bad("scenes must be at least 1".into());
        }
        if self.frames < 10 {
            return bad(format!("frames must be at least 10, got {}", self.frames));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0 && self.fps > 0.0) {
            return bad("image size and fps must be positive".into());
        }
        if self.mask_width < 8 || self.mask_height < 8 {
            return bad("mask must be at least 8x8".into());
        }
        let fr = [self.crossing_fraction, self.standing_fraction, self.vertical_fraction, self.phoning_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || self.hard_negative_fraction() < -1e-9 {
            return bad("fractions must lie in [0, 1] and crossing+standing+vertical must not exceed 1".into());
        }
        if !(self.keypoint_noise >= 0.0) {
            return bad("keypoint_noise must be non-negative".into());
        }
        if self.prefix.is_empty() || !self.prefix.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("prefix {:?} must be non-empty [A-Za-z0-9_-]", self.prefix));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Crosser,
    Standing,
    Vertical,
    HardNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub id: String,
    pub category: Category,
    pub track: LabeledTrack,
    pub masks: MaskPack,
    /// Static layout without the pedestrian.
    pub layout: MaskGrid,
}

impl SynthScene {
    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.track
            .frames
            .iter()
            .map(|f| record_for(&self.id, self.track.person_id, f, 0.0))
            .collect()
    }
}

pub fn to_scenes(synth: &[SynthScene]) -> (Vec<Scene>, HashMap<String, MaskPack>) {
    let scenes = synth
        .iter()
        .map(|s| Scene {
            id: s.id.clone(),
            tracks: vec![s.track.clone()],
        })
        .collect();
    let masks = synth.iter().map(|s| (s.id.clone(), s.masks.clone())).collect();
    (scenes, masks)
}

struct Road {
    col0: usize,
    col1: usize,
    /// Canvas abscissae of the band edges.
    left: f64,
    right: f64,
}

fn weyl(i: usize, step: f64, offset: f64) -> f64 {
    (offset + i as f64 * step).fract()
}

pub fn synthesize_scenes(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthScene>> {
    spec.validate()?;
    let mut offsets = ChaCha8Rng::seed_from_u64(seed);
    let cat_offset: f64 = offsets.random();
    let phone_offset: f64 = offsets.random();
    (0..spec.scenes)
        .map(|i| {
            let id = format!("{}_{i:05}", spec.prefix);
            let u = weyl(i, GOLDEN, cat_offset);
            let c = spec.crossing_fraction;
            let s = c + spec.standing_fraction;
            let v = s + spec.vertical_fraction;
            let category = if u < c {
                Category::Crosser
            } else if u < s {
                Category::Standing
            } else if u < v {
                Category::Vertical
            } else {
                Category::HardNegative
            };
            let phoning = weyl(i, SQRT2_FRAC, phone_offset) < spec.phoning_fraction;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &id));
            synthesize_one(spec, id, category, phoning, &mut rng)
        })
        .collect()
}

struct Motion {
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    rng.random_range(range.0..=range.1)
}

/// Chooses a starting point on one side of the road at `dist` from its edge,
/// moving `towards` it or away from it. `None` when neither side fits.
/// A `travel` of `None` means the path is allowed to enter the road.
fn horizontal_start(road: &Road, dist: f64, travel: Option<f64>, towards: bool, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
    let mut options = Vec::new();
    // Left side: moving right is towards the road.
    let x_left = road.left - dist;
    let fits_left = match travel {
        None => true,
        Some(t) => {
            let end = if towards { x_left + t } else { x_left - t };
            end >= MARGIN && end < road.left
        }
    };
    if x_left >= MARGIN && fits_left {
        options.push((x_left, if towards { 1.0 } else { -1.0 }));
    }
    let x_right = road.right + dist;
    let fits_right = match travel {
        None => true,
        Some(t) => {
            let end = if towards { x_right - t } else { x_right + t };
            end <= CANVAS_W - MARGIN && end >= road.right
        }
    };
    if x_right <= CANVAS_W - MARGIN && fits_right {
        options.push((x_right, if towards { -1.0 } else { 1.0 }));
    }
    if options.is_empty() {
        None
    } else {
        Some(options[rng.random_range(0..options.len())])
    }
}

fn synthesize_one(spec: &SynthSpec, id: String, category: Category, phoning: bool, rng: &mut ChaCha8Rng) -> Result<SynthScene> {
    let frames = spec.frames;
    let (mw, mh) = (spec.mask_width, spec.mask_height);
    let cell_w = CANVAS_W / mw as f64;

    let wide = rng.random_bool(0.5);
    let band = ((if wide { 47.5 } else { 35.0 }) / cell_w).round().max(2.0) as usize;
    let centre_px = rng.random_range(55.0..=105.0);
    let col0 = ((centre_px / cell_w) - band as f64 / 2.0).round().max(1.0) as usize;
    let col1 = (col0 + band).min(mw - 1);
    let road = Road {
        col0,
        col1,
        left: col0 as f64 * cell_w,
        right: col1 as f64 * cell_w,
    };

    let mut layout = MaskGrid::filled(mw, mh, SIDEWALK);
    let road_row0 = ((ROAD_TOP / CANVAS_H) * mh as f64).floor() as usize;
    for r in road_row0..mh {
        for c in road.col0..road.col1 {
            layout.set(r, c, ROAD);
        }
    }
    let canvas = (CANVAS_W, CANVAS_H);
    if rng.random_bool(0.5) {
        let x = rng.random_range(road.left..(road.right - 10.0).max(road.left + 0.1));
        layout.paint_rect(canvas, (x, x + 10.0), (ROAD_TOP, ROAD_TOP + 6.0), CAR);
    }
    let traffic_sign = rng.random_bool(0.4);
    if traffic_sign {
        let x = if road.left > 12.0 { road.left - 6.0 } else { road.right + 2.0 };
        layout.paint_rect(canvas, (x, x + 4.0), (4.0, 12.0), TRAFFIC_SIGN);
    }
    let context = SceneContext {
        traffic_light: rng.random_bool(0.3),
        traffic_sign,
        crosswalk: rng.random_bool(if category == Category::Crosser { 0.85 } else { 0.2 }),
        lane: if wide { LaneWidth::Wide } else { LaneWidth::Narrow },
    };

    let last = (frames - 1) as f64;
    let speed = uniform(rng, SPEED);
    let motion = match category {
        Category::Crosser => {
            let enter = (uniform(rng, (0.59, 0.72)) * frames as f64).round();
            let dist = speed * enter;
            let y0 = uniform(rng, (45.0, 72.0));
            let (x0, dir) = horizontal_start(&road, dist, None, true, rng)
                .ok_or_else(|| CoreError::Invalid(format!("{id}: no room for a crossing path")))?;
            Motion { x0, y0, vx: dir * speed, vy: 0.0 }
        }
        Category::HardNegative => {
            let travel = speed * last;
            let y0 = uniform(rng, (45.0, 72.0));
            let towards = rng.random_bool(0.5);
            let far = travel + uniform(rng, (3.0, 12.0));
            let near = uniform(rng, (1.0, 8.0));
            let pick = if towards {
                horizontal_start(&road, far, Some(travel), true, rng).or_else(|| horizontal_start(&road, near, Some(travel), false, rng))
            } else {
                horizontal_start(&road, near, Some(travel), false, rng).or_else(|| horizontal_start(&road, far, Some(travel), true, rng))
            };
            let (x0, dir) = pick.ok_or_else(|| CoreError::Invalid(format!("{id}: no room for a walking path")))?;
            Motion { x0, y0, vx: dir * speed, vy: 0.0 }
        }
        Category::Standing | Category::Vertical => {
            let dist = uniform(rng, (2.0, 30.0));
            let (x0, _) = horizontal_start(&road, dist, Some(0.0), true, rng)
                .or_else(|| horizontal_start(&road, 2.0, Some(0.0), true, rng))
                .ok_or_else(|| CoreError::Invalid(format!("{id}: no room beside the road")))?;
            if category == Category::Standing {
                Motion { x0, y0: uniform(rng, (45.0, 72.0)), vx: 0.0, vy: 0.0 }
            } else {
                let vs = uniform(rng, VERTICAL_SPEED);
                let travel = vs * last;
                let down = rng.random_bool(0.5);
                let span = (72.0 - 45.0 - travel).max(0.0);
                let y0 = if down { 45.0 + rng.random_range(0.0..=span) } else { 72.0 - rng.random_range(0.0..=span) };
                Motion { x0, y0, vx: 0.0, vy: if down { vs } else { -vs } }
            }
        }
    };

    let walking = category != Category::Standing;
    let orientation = match category {
        Category::Crosser | Category::HardNegative => {
            if motion.vx < 0.0 {
                Orientation::Left
            } else {
                Orientation::Right
            }
        }
        Category::Vertical => {
            if motion.vy > 0.0 {
                Orientation::Front
            } else {
                Orientation::Back
            }
        }
        Category::Standing => Orientation::ALL[rng.random_range(0..4)],
    };
    let looking = rng.random_bool(if category == Category::Crosser { 0.95 } else { 0.3 });
    let phoning_right = rng.random_bool(0.5);
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let period = rng.random_range(26.0..34.0);
    let noise = (spec.keypoint_noise > 0.0).then(|| Normal::new(0.0, spec.keypoint_noise).expect("checked non-negative"));

    let sx = spec.image_width / CANVAS_W;
    let sy = spec.image_height / CANVAS_H;
    let mut masks = MaskPack::new(mw, mh, spec.image_width, spec.image_height);
    let mut track_frames = Vec::with_capacity(frames);
    for t in 0..frames {
        let tf = t as f64;
        let cx = motion.x0 + motion.vx * tf;
        let cy = motion.y0 + motion.vy * tf;
        let phase = walking.then(|| phase0 + 2.0 * PI * tf / period);
        let style = Style {
            orientation,
            looking,
            phoning,
            phoning_right,
        };
        let mut pose = render_pose(cx, cy, &style, phase, rng);
        if let Some(n) = &noise {
            for k in &mut pose.keypoints {
                k.x += n.sample(rng);
                k.y += n.sample(rng);
            }
        }
        for k in &mut pose.keypoints {
            k.x = (k.x * sx).clamp(0.0, spec.image_width);
            k.y = (k.y * sy).clamp(0.0, spec.image_height);
        }
        let bbox = BBox::new(cx * sx, cy * sy, BOX_W * sx, BOX_H * sy);

        let crossing = layout
            .cell_at(canvas, cx, cy)
            .is_some_and(|(r, c)| layout.get(r, c) == ROAD);
        let mut grid = layout.clone();
        grid.paint_rect(canvas, (cx - BOX_W / 2.0, cx + BOX_W / 2.0), (cy - BOX_H / 2.0, cy + BOX_H / 2.0), PEDESTRIAN);
        masks.insert(t as i64, grid)?;
        track_frames.push(TrackFrame {
            frame: t as i64,
            bbox,
            pose,
            labels: ActionLabels {
                gait: if walking { Gait::Walking } else { Gait::Standing },
                attention: if looking { Attention::Looking } else { Attention::NotLooking },
                orientation,
                distraction: if phoning { Distraction::Phoning } else { Distraction::NotPhoning },
                crossing: if crossing { Crossing::Crossing } else { Crossing::NotCrossing },
            },
            context,
            padded: false,
        });
    }
    Ok(SynthScene {
        track: LabeledTrack {
            scene_id: id.clone(),
            person_id: 1,
            frames: track_frames,
        },
        id,
        category,
        masks,
        layout,
    })
}

struct Style {
    orientation: Orientation,
    looking: bool,
    phoning: bool,
    phoning_right: bool,
}

/// Front-view template in canvas pixels relative to the box centre; the
/// person's left side appears at positive x.
const FRONT: [(f64, f64); NUM_JOINTS] = [
    (0.0, -12.0),
    (1.2, -13.0),
    (-1.2, -13.0),
    (2.4, -12.5),
    (-2.4, -12.5),
    (4.0, -8.0),
    (-4.0, -8.0),
    (5.0, -3.0),
    (-5.0, -3.0),
    (5.5, 1.0),
    (-5.5, 1.0),
    (2.5, 1.0),
    (-2.5, 1.0),
    (2.5, 8.0),
    (-2.5, 8.0),
    (2.5, 14.0),
    (-2.5, 14.0),
];

fn is_left(j: usize) -> bool {
    j % 2 == 1
}

/// Renders a pose facing `style.orientation`. Profile views are built facing
/// left and mirrored for right, so that the flip augmentation maps one onto
/// the other.
fn render_pose(cx: f64, cy: f64, style: &Style, phase: Option<f64>, rng: &mut ChaCha8Rng) -> PoseFrame {
    use joint::*;
    let mut vis = |lo: f64, hi: f64| rng.random_range(lo..=hi);
    let mut pts = FRONT;
    let mut v = [0.0; NUM_JOINTS];
    let profile = matches!(style.orientation, Orientation::Left | Orientation::Right);
    match style.orientation {
        Orientation::Front => {
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = if j <= R_EAR { 0.0 } else { vis(0.85, 1.0) };
            }
        }
        Orientation::Back => {
            for p in &mut pts {
                p.0 = -p.0;
            }
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = if j <= R_EAR { 0.0 } else { vis(0.85, 1.0) };
            }
        }
        Orientation::Left | Orientation::Right => {
            // Facing image-left: the person's left side is towards the camera.
            for (j, p) in pts.iter_mut().enumerate() {
                if j > R_EAR {
                    p.0 *= 0.25;
                }
            }
            pts[NOSE] = (-3.0, -12.0);
            pts[L_EYE] = (-2.0, -13.0);
            pts[R_EYE] = (-2.4, -13.2);
            pts[L_EAR] = (0.6, -12.5);
            pts[R_EAR] = (0.2, -12.6);
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = if j <= R_EAR {
                    0.0
                } else if is_left(j) {
                    vis(0.85, 1.0)
                } else {
                    vis(0.3, 0.5)
                };
            }
            v[L_EAR] = vis(0.85, 1.0);
            v[R_EAR] = vis(0.0, 0.2);
        }
    }

    // Head: eyes and nose carry attention.
    let facing_sign = match style.orientation {
        Orientation::Left => -1.0,
        _ => 1.0,
    };
    if style.looking {
        v[NOSE] = vis(0.85, 1.0);
        v[L_EYE] = vis(0.8, 1.0);
        v[R_EYE] = vis(0.8, 1.0);
        if !profile {
            v[L_EAR] = vis(0.7, 0.9);
            v[R_EAR] = vis(0.7, 0.9);
            pts[NOSE].0 = 0.0;
        }
    } else {
        v[NOSE] = if style.orientation == Orientation::Back { vis(0.0, 0.2) } else { vis(0.5, 0.8) };
        v[L_EYE] = vis(0.0, 0.3);
        v[R_EYE] = vis(0.0, 0.3);
        if !profile {
            v[L_EAR] = vis(0.5, 0.9);
            v[R_EAR] = vis(0.5, 0.9);
            pts[NOSE].0 += 1.5 * facing_sign;
        } else {
            pts[NOSE].0 += 2.0;
        }
    }

    if let Some(ph) = phase {
        let s = ph.sin();
        if profile {
            pts[L_ANKLE].0 += 2.5 * s;
            pts[R_ANKLE].0 -= 2.5 * s;
            pts[L_KNEE].0 += 1.2 * s;
            pts[R_KNEE].0 -= 1.2 * s;
            pts[L_ANKLE].1 -= 1.2 * s.max(0.0);
            pts[R_ANKLE].1 -= 1.2 * (-s).max(0.0);
            pts[L_WRIST].0 -= 1.0 * s;
            pts[R_WRIST].0 += 1.0 * s;
        } else {
            pts[L_ANKLE].1 -= 2.5 * s.max(0.0);
            pts[R_ANKLE].1 -= 2.5 * (-s).max(0.0);
            pts[L_KNEE].1 -= 0.8 * s.max(0.0);
            pts[R_KNEE].1 -= 0.8 * (-s).max(0.0);
        }
    }

    if style.phoning {
        // Hand raised to the ear on one side with a tightly bent elbow.
        let (sho, elb, wri, ear) = if style.phoning_right {
            (R_SHOULDER, R_ELBOW, R_WRIST, R_EAR)
        } else {
            (L_SHOULDER, L_ELBOW, L_WRIST, L_EAR)
        };
        let outward = if pts[sho].0 >= 0.0 { 1.0 } else { -1.0 };
        pts[elb] = (pts[sho].0 + 1.0 * outward, -3.5);
        pts[wri] = (pts[ear].0 + 0.3 * outward, pts[ear].1 + 1.0);
    }

    if style.orientation == Orientation::Right {
        // Mirror of the left-facing rendering about the box centre.
        let mut mirrored = pts;
        let mut mv = v;
        for j in 0..NUM_JOINTS {
            let m = crate::geometry::mirror_joint(j);
            mirrored[m] = (-pts[j].0, pts[j].1);
            mv[m] = v[j];
        }
        pts = mirrored;
        v = mv;
    }

    let mut pose = PoseFrame::default();
    for j in 0..NUM_JOINTS {
        pose.keypoints[j] = Keypoint::new(cx + pts[j].0, cy + pts[j].1, v[j]);
    }
    pose
}
