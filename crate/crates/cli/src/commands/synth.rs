use std::collections::BTreeMap;

use vru_core::data::annotations::write_annotations;
use vru_core::data::corpus::write_mask_packs;
use vru_core::data::synth::to_scenes;
use vru_core::data::{synthesize_scenes, AnnotationRecord, SynthSpec};

use super::{create_dir, write_file};
use crate::cli::SynthArgs;
use crate::config;
use crate::error::Result;

pub fn run(args: &SynthArgs, seed: u64) -> Result<()> {
    let mut spec: SynthSpec = config::load(args.spec.as_deref())?;
    if let Some(n) = args.scenes {
        spec.scenes = n;
    }
    if let Some(p) = &args.prefix {
        spec.prefix = p.clone();
    }
    spec.validate()?;
    let scenes = synthesize_scenes(&spec, seed)?;
    let records: Vec<AnnotationRecord> = scenes.iter().flat_map(|s| s.records()).collect();
    let (_, packs) = to_scenes(&scenes);

    create_dir(&args.out)?;
    write_annotations(&args.out.join("annotations.jsonl"), &records)?;
    write_mask_packs(&args.out.join("masks"), packs.iter())?;

    let manifest = serde_json::json!({
        "seed": seed,
        "scenes": scenes.len(),
        "scene_ids": scenes.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
        "records": records.len(),
        "pedestrians": pedestrian_count(&records),
        "label_counts": label_counts(&records),
        "spec": spec,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&args.out.join("manifest.json"), &format!("{text}\n"))?;
    println!("wrote {} scenes, {} records to {}", scenes.len(), records.len(), args.out.display());
    Ok(())
}

fn pedestrian_count(records: &[AnnotationRecord]) -> usize {
    records
        .iter()
        .map(|r| (r.scene_id.as_str(), r.person_id))
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

/// Per-frame label counts for every task.
fn label_counts(records: &[AnnotationRecord]) -> BTreeMap<&'static str, BTreeMap<String, usize>> {
    let mut out: BTreeMap<&'static str, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        let fields = [
            ("gait", &r.gait),
            ("attention", &r.attention),
            ("orientation", &r.orientation),
            ("distraction", &r.distraction),
            ("crossing", &r.crossing),
        ];
        for (task, value) in fields {
            let key = value.clone().unwrap_or_else(|| "unlabeled".into());
            *out.entry(task).or_default().entry(key).or_default() += 1;
        }
    }
    out
}
