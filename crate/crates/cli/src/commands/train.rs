use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use vru_core::data::SequenceSample;
use vru_core::seed::derive_seed;
use vru_models::baselines::ModularModel;
use vru_models::eval::EvalReport;
use vru_models::train::LOG_HEADER;
use vru_models::{TrainProgress, Trainer, VruNet};
use vru_nn::Checkpoint;

use super::{create_dir, load_split, write_file};
use crate::cli::{ModelKind, TrainArgs};
use crate::config::{self, TrainFile};
use crate::error::{io_err, CliError, Result};

pub fn run(args: &TrainArgs, seed: u64) -> Result<()> {
    let mut file: TrainFile = config::load(args.config.as_deref())?;
    if args.preset.is_some() {
        file.preset = args.preset;
    }
    if args.epochs.is_some() {
        file.epochs = args.epochs;
    }
    if args.lr.is_some() {
        file.lr = args.lr;
    }
    if args.batch_size.is_some() {
        file.batch_size = args.batch_size;
    }
    if args.ablate_scene {
        file.ablate_scene = Some(true);
    }
    let train = load_split(&args.data, "train")?;
    let val = load_split(&args.data, "val")?;
    let Some(first) = train.first() else {
        return Err(CliError::Data(format!("{}: no training windows", args.data.display())));
    };
    if val.is_empty() {
        return Err(CliError::Data(format!("{}: no validation windows", args.data.display())));
    }
    create_dir(&args.out)?;
    match args.model {
        ModelKind::Vrunet => train_vrunet(args, &file, &train, &val, seed),
        ModelKind::Modular => {
            if args.resume.is_some() {
                return Err(CliError::Usage("--resume applies to vrunet training only".into()));
            }
            train_modular(args, &file, first.obs_len(), &train, &val, seed)
        }
    }
}

fn checkpoint_extra(trainer: &Trainer, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "progress": trainer.progress,
        "train": trainer.config,
        "seed": seed,
    })
}

fn train_vrunet(args: &TrainArgs, file: &TrainFile, train: &[SequenceSample], val: &[SequenceSample], seed: u64) -> Result<()> {
    let tcfg = file.train();
    tcfg.validate()?;
    let train_seed = derive_seed(seed, "train");
    let first = &train[0];
    let mask = &first.masks[0];
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let (model, extra) = VruNet::from_checkpoint(&ckpt)?;
            let c = &model.config;
            if (c.obs_len, c.horizon, c.mask_h, c.mask_w) != (first.obs_len(), first.horizon(), mask.height, mask.width) {
                return Err(CliError::Data(format!(
                    "{}: checkpoint expects {}+{} frames over {}x{} masks; data differs",
                    path.display(),
                    c.obs_len,
                    c.horizon,
                    c.mask_h,
                    c.mask_w
                )));
            }
            let progress: TrainProgress = serde_json::from_value(extra["progress"].clone())
                .map_err(|e| CliError::Data(format!("{}: training progress: {e}", path.display())))?;
            let adam = ckpt
                .optimizer
                .clone()
                .ok_or_else(|| CliError::Data(format!("{}: no optimizer state to resume from", path.display())))?;
            Trainer::resume(model, adam, progress, tcfg, train, train_seed)?
        }
        None => {
            let mcfg = file.vrunet(first.obs_len(), first.horizon(), mask.height, mask.width);
            let model = VruNet::new(mcfg, derive_seed(seed, "model"))?;
            Trainer::new(model, tcfg, train, train_seed)?
        }
    };

    let log_path = args.out.join("metrics.csv");
    if args.resume.is_none() || !log_path.exists() {
        write_file(&log_path, &format!("{LOG_HEADER}\n"))?;
    }
    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| io_err(&log_path, e))?;

    let target = trainer.config.epochs;
    if trainer.progress.epochs_done >= target {
        println!("already trained for {} of {target} epochs", trainer.progress.epochs_done);
        return Ok(());
    }
    while trainer.progress.epochs_done < target {
        let row = trainer.run_epoch(train, val)?;
        writeln!(log, "{}", row.csv_row()).map_err(|e| io_err(&log_path, e))?;
        let extra = checkpoint_extra(&trainer, seed);
        trainer
            .model
            .to_checkpoint(extra.clone(), Some(&trainer.adam))
            .save(args.out.join("last.ckpt"))?;
        if trainer.progress.best_epoch == row.epoch {
            trainer.best_model().to_checkpoint(extra, None).save(args.out.join("best.ckpt"))?;
        }
        eprintln!(
            "epoch {:>4}  train {:.5}  val {:.5}  lr {:.1e}",
            row.epoch, row.train_loss, row.val_loss, row.lr
        );
    }
    println!(
        "trained {} epochs; best validation loss {:.5} at epoch {}",
        trainer.progress.epochs_done, trainer.progress.best_val, trainer.progress.best_epoch
    );
    Ok(())
}

fn train_modular(
    args: &TrainArgs,
    file: &TrainFile,
    obs_len: usize,
    train: &[SequenceSample],
    val: &[SequenceSample],
    seed: u64,
) -> Result<()> {
    let cfg = file.modular(obs_len);
    let mut lines = Vec::new();
    let model = ModularModel::train(train, cfg, derive_seed(seed, "modular"), &mut |msg| {
        eprintln!("{msg}");
        lines.push(msg.to_string());
    })?;
    model.save(&args.out)?;
    let report = EvalReport::from_collected(&model.collect(val)?)?;
    let ap: Vec<String> = report
        .ap
        .iter()
        .map(|a| a.map_or_else(|| "NA".into(), |v| format!("{v:.4}")))
        .collect();
    lines.push(format!("validation AP (gait, attention, orientation, distraction, crossing): {}", ap.join(", ")));
    write_file(&args.out.join("train.log"), &(lines.join("\n") + "\n"))?;
    println!("{}", lines.last().expect("summary line"));
    Ok(())
}

pub(super) fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{}: checkpoint not found", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}
