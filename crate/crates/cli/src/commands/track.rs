use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};

use vru_core::data::annotations::write_annotations;
use vru_core::data::AnnotationRecord;
use vru_core::geometry::PoseFrame;
use vru_core::tracking::{BBox, Tracker};

use crate::cli::TrackArgs;
use crate::config::{self, TrackFile};
use crate::error::{io_err, CliError, Result};

fn read_detections(path: &std::path::Path) -> Result<Vec<AnnotationRecord>> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn run(args: &TrackArgs) -> Result<()> {
    let file: TrackFile = config::load(args.config.as_deref())?;
    let cfg = file.tracker()?;
    let records = read_detections(&args.input)?;

    // scene -> frame -> record indices
    let mut grouped: BTreeMap<&str, BTreeMap<i64, Vec<usize>>> = BTreeMap::new();
    let mut parsed = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let [cx, cy, w, h] = r.bbox;
        if !(w > 0.0 && h > 0.0) {
            return Err(CliError::Data(format!("{}: detection {} has box {w}x{h}", args.input.display(), i + 1)));
        }
        parsed.push((BBox::new(cx, cy, w, h), PoseFrame::from_triples(&r.pose)?));
        grouped.entry(&r.scene_id).or_default().entry(r.frame).or_default().push(i);
    }

    let mut out = Vec::new();
    let mut tracks = 0;
    for frames in grouped.values() {
        let mut tracker = Tracker::new(cfg);
        for (&frame, idx) in frames {
            let dets: Vec<(BBox, PoseFrame)> = idx.iter().map(|&i| parsed[i]).collect();
            tracker.step(frame, &dets)?;
        }
        for t in tracker.finish() {
            tracks += 1;
            for e in &t.history {
                let source = frames[&e.frame]
                    .iter()
                    .copied()
                    .find(|&i| parsed[i].0 == e.bbox)
                    .expect("history entries come from detections");
                let mut rec = records[source].clone();
                rec.person_id = t.id;
                out.push(rec);
            }
        }
    }
    out.sort_by(|a, b| (&a.scene_id, a.person_id, a.frame).cmp(&(&b.scene_id, b.person_id, b.frame)));
    write_annotations(&args.out, &out)?;
    println!("{tracks} tracks over {} of {} detections", out.len(), records.len());
    Ok(())
}
