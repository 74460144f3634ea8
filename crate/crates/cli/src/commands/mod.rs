mod build;
mod eval;
mod predict;
mod synth;
mod track;
mod train;

use std::path::Path;

use vru_core::data::{read_corpus, SequenceSample};

pub use eval::{report_csv, REPORT_HEADER};

use crate::cli::{Cli, Command};
use crate::error::{io_err, Result};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth::run(a, cli.seed),
        Command::Build(a) => build::run(a, cli.seed),
        Command::Train(a) => train::run(a, cli.seed),
        Command::Eval(a) => eval::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Track(a) => track::run(a),
    }
}

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Reads `<dir>/<split>.bin` with masks from `<dir>/masks`.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<SequenceSample>> {
    if !SPLITS.contains(&split) {
        return Err(crate::CliError::Usage(format!("unknown split {split:?}; expected one of {SPLITS:?}")));
    }
    Ok(read_corpus(&dir.join(format!("{split}.bin")), &dir.join("masks"))?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
