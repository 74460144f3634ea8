use std::path::Path;

use vru_core::data::{SequenceSample, Task};
use vru_models::baselines::ModularModel;
use vru_models::eval::{evaluate_vrunet, EvalReport};
use vru_models::VruNet;

use super::{load_split, write_file};
use super::train::load_checkpoint;
use crate::cli::EvalArgs;
use crate::error::{CliError, Result};

pub const REPORT_HEADER: &str = "Models,GAIT,ATTN,DIST,ORNT,XNG,ADE,FDE";

const COLUMN_TASKS: [Task; 5] = [Task::Gait, Task::Attention, Task::Distraction, Task::Orientation, Task::Crossing];

/// CSV table with one row per named report. AP is a ratio in `[0, 1]`,
/// displacement errors are pixels; missing values are `NA`.
pub fn report_csv(rows: &[(String, EvalReport)]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for (name, r) in rows {
        let mut cells = vec![name.clone()];
        for task in COLUMN_TASKS {
            cells.push(r.ap[task.index()].map_or_else(|| "NA".into(), |v| format!("{v:.4}")));
        }
        for v in [r.ade, r.fde] {
            cells.push(v.map_or_else(|| "NA".into(), |v| format!("{v:.2}")));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub enum LoadedModel {
    Vrunet(VruNet),
    Modular(ModularModel),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Ok(LoadedModel::Modular(ModularModel::load(path)?))
        } else if path.is_file() {
            Ok(LoadedModel::Vrunet(VruNet::from_checkpoint(&load_checkpoint(path)?)?.0))
        } else {
            Err(CliError::Data(format!("{}: model not found", path.display())))
        }
    }

    fn name(&self) -> &'static str {
        match self {
            LoadedModel::Vrunet(_) => "VRUNet",
            LoadedModel::Modular(_) => "Modular",
        }
    }

    fn evaluate(&self, samples: &[SequenceSample]) -> Result<EvalReport> {
        Ok(match self {
            LoadedModel::Vrunet(m) => evaluate_vrunet(m, samples)?,
            LoadedModel::Modular(m) => EvalReport::from_collected(&m.collect(samples)?)?,
        })
    }
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let model = LoadedModel::load(&args.model)?;
    let samples = load_split(&args.data, &args.split)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("{}: split {} has no windows", args.data.display(), args.split)));
    }
    let report = model.evaluate(&samples)?;
    let name = args.name.clone().unwrap_or_else(|| model.name().into());
    let csv = report_csv(&[(name, report)]);
    print!("{csv}");
    if let Some(out) = &args.out {
        write_file(out, &csv)?;
    }
    Ok(())
}
