use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;
use vru_core::data::{build_samples, ingest_annotations, Attention, Crossing, Distraction, Gait, MaskPack, Orientation, SequenceSample, WindowConfig};
use vru_models::eval::argmax;
use vru_models::{smooth_trajectory, VruNet};

use super::load_split;
use super::train::load_checkpoint;
use crate::cli::PredictArgs;
use crate::error::{io_err, CliError, Result};

#[derive(Debug, Serialize)]
struct Distributions<'a> {
    gait: &'a [f64],
    attention: &'a [f64],
    orientation: &'a [f64],
    distraction: &'a [f64],
    crossing: &'a [f64],
}

#[derive(Debug, Serialize)]
struct Classes {
    gait: &'static str,
    attention: &'static str,
    orientation: &'static str,
    distraction: &'static str,
    crossing: &'static str,
}

#[derive(Debug, Serialize)]
struct PredictionLine<'a> {
    scene_id: &'a str,
    person_id: u64,
    start_frame: i64,
    distributions: Distributions<'a>,
    classes: Classes,
    trajectory: Vec<[f64; 2]>,
    smoothed: bool,
    out_of_frame: bool,
}

fn windows(args: &PredictArgs, model: &VruNet) -> Result<Vec<SequenceSample>> {
    let annotations = args.input.join("annotations.jsonl");
    if !annotations.is_file() {
        return load_split(&args.input, &args.split);
    }
    let cfg = WindowConfig {
        obs_len: model.config.obs_len,
        horizon: model.config.horizon,
        stride: args.stride,
        ..WindowConfig::default()
    };
    cfg.validate()?;
    let (scenes, _) = ingest_annotations(&annotations)?;
    let masks_dir = args.input.join("masks");
    let mut packs = HashMap::new();
    for scene in &scenes {
        packs.insert(scene.id.clone(), MaskPack::load(&masks_dir, &scene.id)?);
    }
    Ok(build_samples(&scenes, &packs, &cfg)?.0)
}

pub fn run(args: &PredictArgs) -> Result<()> {
    if !args.model.is_file() {
        return Err(CliError::Data(format!("{}: checkpoint not found", args.model.display())));
    }
    let (model, _) = VruNet::from_checkpoint(&load_checkpoint(&args.model)?)?;
    let samples = windows(args, &model)?;
    let file = std::fs::File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut out = std::io::BufWriter::new(file);
    for s in &samples {
        let b = model.predict(s)?;
        let [w, h] = s.image_size;
        let raw: Vec<[f64; 2]> = b.trajectory.iter().map(|p| [p[0] * w, p[1] * h]).collect();
        let smoothed = smooth_trajectory(&raw);
        let out_of_frame = smoothed
            .points
            .iter()
            .any(|p| !(0.0..=w).contains(&p[0]) || !(0.0..=h).contains(&p[1]));
        let ix = b.argmax();
        let line = PredictionLine {
            scene_id: &s.scene_id,
            person_id: s.person_id,
            start_frame: s.start_frame,
            distributions: Distributions {
                gait: &b.gait,
                attention: &b.attention,
                orientation: &b.orientation,
                distraction: &b.distraction,
                crossing: &b.crossing,
            },
            classes: Classes {
                gait: Gait::from_index(ix[0])?.as_str(),
                attention: Attention::from_index(ix[1])?.as_str(),
                orientation: Orientation::from_index(ix[2])?.as_str(),
                distraction: Distraction::from_index(ix[3])?.as_str(),
                crossing: Crossing::from_index(argmax(&b.crossing))?.as_str(),
            },
            trajectory: smoothed.points,
            smoothed: smoothed.fitted,
            out_of_frame,
        };
        let text = serde_json::to_string(&line).expect("prediction serializes");
        writeln!(out, "{text}").map_err(|e| io_err(&args.out, e))?;
    }
    out.flush().map_err(|e| io_err(&args.out, e))?;
    println!("wrote {} predictions to {}", samples.len(), args.out.display());
    Ok(())
}
