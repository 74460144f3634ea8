//! Newline-delimited JSON annotation records, one per person and frame.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::*;
use crate::error::{CoreError, Result};
use crate::geometry::PoseFrame;
use crate::tracking::BBox;

/// Pedestrians whose mean visible fraction is below this are excluded.
pub const MIN_VISIBLE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub traffic_light: bool,
    pub traffic_sign: bool,
    pub crosswalk: bool,
    pub lane: LaneWidth,
}

impl From<SceneRecord> for SceneContext {
    fn from(r: SceneRecord) -> Self {
        SceneContext {
            traffic_light: r.traffic_light,
            traffic_sign: r.traffic_sign,
            crosswalk: r.crosswalk,
            lane: r.lane,
        }
    }
}

impl From<SceneContext> for SceneRecord {
    fn from(c: SceneContext) -> Self {
        SceneRecord {
            traffic_light: c.traffic_light,
            traffic_sign: c.traffic_sign,
            crosswalk: c.crosswalk,
            lane: c.lane,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub scene_id: String,
    pub frame: i64,
    pub person_id: u64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub pose: Vec<[f64; 3]>,
    pub gait: Option<String>,
    pub attention: Option<String>,
    pub orientation: Option<String>,
    pub distraction: Option<String>,
    pub crossing: Option<String>,
    pub occlusion_fraction: f64,
    pub scene: SceneRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub frame: i64,
    pub bbox: BBox,
    pub pose: PoseFrame,
    pub labels: ActionLabels,
    pub context: SceneContext,
    /// Set on frames replicated by padding.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrack {
    pub scene_id: String,
    pub person_id: u64,
    pub frames: Vec<TrackFrame>,
}

impl LabeledTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub tracks: Vec<LabeledTrack>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestStats {
    pub records: usize,
    pub pedestrians: usize,
    pub excluded_occluded: usize,
    pub excluded_unlabeled: usize,
}

struct Parsed {
    frame: i64,
    bbox: BBox,
    pose: PoseFrame,
    labels: Option<ActionLabels>,
    occlusion: f64,
    context: SceneContext,
}

fn field<T>(name: &str, value: &Option<String>, parse: fn(&str) -> Result<T>) -> std::result::Result<Option<T>, String> {
    match value {
        None => Ok(None),
        Some(s) => parse(s).map(Some).map_err(|e| format!("field `{name}`: {e}")),
    }
}

fn parse_record(rec: AnnotationRecord) -> std::result::Result<(String, u64, Parsed), String> {
    let pose = PoseFrame::from_triples(&rec.pose).map_err(|e| format!("field `pose`: {e}"))?;
    let [cx, cy, w, h] = rec.bbox;
    if !(w > 0.0 && h > 0.0) {
        return Err(format!("field `box`: width and height must be positive, got {w}x{h}"));
    }
    if !(0.0..=1.0).contains(&rec.occlusion_fraction) {
        return Err(format!("field `occlusion_fraction`: {} not in [0, 1]", rec.occlusion_fraction));
    }
    let gait = field("gait", &rec.gait, Gait::parse)?;
    let attention = field("attention", &rec.attention, Attention::parse)?;
    let orientation = field("orientation", &rec.orientation, Orientation::parse)?;
    let distraction = field("distraction", &rec.distraction, Distraction::parse)?;
    let crossing = field("crossing", &rec.crossing, Crossing::parse)?;
    let labels = match (gait, attention, orientation, distraction, crossing) {
        (Some(gait), Some(attention), Some(orientation), Some(distraction), Some(crossing)) => Some(ActionLabels {
            gait,
            attention,
            orientation,
            distraction,
            crossing,
        }),
        _ => None,
    };
    Ok((
        rec.scene_id,
        rec.person_id,
        Parsed {
            frame: rec.frame,
            bbox: BBox::new(cx, cy, w, h),
            pose,
            labels,
            occlusion: rec.occlusion_fraction,
            context: rec.scene.into(),
        },
    ))
}

/// Parses annotation lines; blank lines are ignored.
pub fn parse_annotations(reader: impl BufRead, origin: &str) -> Result<(Vec<Scene>, IngestStats)> {
    let mut people: BTreeMap<(String, u64), Vec<Parsed>> = BTreeMap::new();
    let mut stats = IngestStats::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| CoreError::Annotation {
            path: origin.to_string(),
            line: line_no,
            msg,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let (scene, person, parsed) = parse_record(rec).map_err(err)?;
        stats.records += 1;
        people.entry((scene, person)).or_default().push(parsed);
    }

    let mut scenes: BTreeMap<String, Vec<LabeledTrack>> = BTreeMap::new();
    for ((scene_id, person_id), mut rows) in people {
        stats.pedestrians += 1;
        scenes.entry(scene_id.clone()).or_default();
        rows.sort_by_key(|r| r.frame);
        if let Some(w) = rows.windows(2).find(|w| w[0].frame == w[1].frame) {
            return Err(CoreError::Data(format!(
                "{origin}: scene {scene_id} person {person_id} has two records for frame {}",
                w[0].frame
            )));
        }
        let visible = rows.iter().map(|r| 1.0 - r.occlusion).sum::<f64>() / rows.len() as f64;
        if visible < MIN_VISIBLE_FRACTION {
            stats.excluded_occluded += 1;
            continue;
        }
        if rows.iter().any(|r| r.labels.is_none()) {
            stats.excluded_unlabeled += 1;
            continue;
        }
        // Frame gaps split a pedestrian into separate contiguous tracks.
        let mut current: Vec<TrackFrame> = Vec::new();
        let tracks = scenes.get_mut(&scene_id).expect("scene inserted above");
        for r in rows {
            if current.last().is_some_and(|last| r.frame != last.frame + 1) {
                tracks.push(LabeledTrack {
                    scene_id: scene_id.clone(),
                    person_id,
                    frames: std::mem::take(&mut current),
                });
            }
            current.push(TrackFrame {
                frame: r.frame,
                bbox: r.bbox,
                pose: r.pose,
                labels: r.labels.expect("unlabeled pedestrians skipped"),
                context: r.context,
                padded: false,
            });
        }
        tracks.push(LabeledTrack {
            scene_id: scene_id.clone(),
            person_id,
            frames: current,
        });
    }
    let scenes = scenes.into_iter().map(|(id, tracks)| Scene { id, tracks }).collect();
    Ok((scenes, stats))
}

pub fn ingest_annotations(path: &Path) -> Result<(Vec<Scene>, IngestStats)> {
    let file = fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    parse_annotations(BufReader::new(file), &path.display().to_string())
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CoreError::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CoreError::io(path, e))?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

/// Builds the record for one labeled frame.
pub fn record_for(scene_id: &str, person_id: u64, f: &TrackFrame, occlusion_fraction: f64) -> AnnotationRecord {
    AnnotationRecord {
        scene_id: scene_id.to_string(),
        frame: f.frame,
        person_id,
        bbox: f.bbox.to_array(),
        pose: f.pose.to_triples(),
        gait: Some(f.labels.gait.as_str().into()),
        attention: Some(f.labels.attention.as_str().into()),
        orientation: Some(f.labels.orientation.as_str().into()),
        distraction: Some(f.labels.distraction.as_str().into()),
        crossing: Some(f.labels.crossing.as_str().into()),
        occlusion_fraction,
        scene: f.context.into(),
    }
}
