use std::collections::HashMap;

use vru_core::data::corpus::write_mask_packs;
use vru_core::data::split::validate_ratios;
use vru_core::data::{build_samples, ingest_annotations, split, write_corpus, MaskPack};
use vru_core::seed::derive_seed;

use super::{create_dir, write_file};
use crate::cli::BuildArgs;
use crate::config::{self, BuildConfig};
use crate::error::{CliError, Result};

pub fn run(args: &BuildArgs, seed: u64) -> Result<()> {
    let mut cfg: BuildConfig = config::load(args.config.as_deref())?;
    if let Some(s) = args.stride {
        cfg.stride = s;
    }
    let window = cfg.window();
    window.validate()?;
    validate_ratios(cfg.ratios())?;

    let annotations = args.input.join("annotations.jsonl");
    if !annotations.is_file() {
        return Err(CliError::Data(format!("{}: annotation file not found", annotations.display())));
    }
    let (scenes, ingest) = ingest_annotations(&annotations)?;
    let masks_dir = args.input.join("masks");
    let mut packs = HashMap::new();
    for scene in &scenes {
        packs.insert(scene.id.clone(), MaskPack::load(&masks_dir, &scene.id)?);
    }
    let (samples, stats) = build_samples(&scenes, &packs, &window)?;
    let total = samples.len();
    let parts = split(samples, cfg.ratios(), derive_seed(seed, "split"))?;

    create_dir(&args.out)?;
    write_corpus(&args.out.join("train.bin"), &parts.train)?;
    write_corpus(&args.out.join("val.bin"), &parts.val)?;
    write_corpus(&args.out.join("test.bin"), &parts.test)?;
    let used: Vec<(&String, &MaskPack)> = parts
        .train_scenes
        .iter()
        .chain(&parts.val_scenes)
        .chain(&parts.test_scenes)
        .filter_map(|id| packs.get_key_value(id))
        .collect();
    write_mask_packs(&args.out.join("masks"), used)?;

    let manifest = serde_json::json!({
        "seed": seed,
        "config": cfg,
        "windows": {
            "train": parts.train.len(),
            "val": parts.val.len(),
            "test": parts.test.len(),
            "total": total,
        },
        "scenes": {
            "train": parts.train_scenes,
            "val": parts.val_scenes,
            "test": parts.test_scenes,
        },
        "ingest": {
            "records": ingest.records,
            "pedestrians": ingest.pedestrians,
            "excluded_occluded": ingest.excluded_occluded,
            "excluded_unlabeled": ingest.excluded_unlabeled,
        },
        "tracks": {
            "total": stats.tracks,
            "kept_after_duration": stats.kept_after_duration,
            "padded": stats.padded,
            "skipped_short": stats.skipped_short,
        },
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&args.out.join("split.json"), &format!("{text}\n"))?;
    if total == 0 {
        eprintln!("warning: no windows were produced from {}", annotations.display());
    }
    println!(
        "windows: {total} (train {}, val {}, test {})",
        parts.train.len(),
        parts.val.len(),
        parts.test.len()
    );
    Ok(())
}
