//! File formats shared by the command-line stages and the trainer.

use std::path::Path;

use crate::error::{Error, Result};

mod batch;
mod header;
mod manifest;
mod ply;
mod predictions;
mod report;

pub use batch::{read_batch, write_batch, BatchFile, BatchHeader, BATCH_LAYOUT, BATCH_VERSION};
pub use manifest::{NormalSettings, SessionEntry, SessionManifest, SessionRole};
pub use ply::{
    parse_ply, ply_to_string, read_labelled_ply, read_ply, read_ply_data, write_ply, PlyData, PlySource,
};
pub use predictions::{read_predictions, write_predictions, Predictions, SubmapPredictions, PREDICTIONS_VERSION};
pub use report::{read_report_json, render_report_table, report_json, write_report, Report};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
