//! File formats: FMAP maps, JSON manifests, CSV and SVG reports.
//!
//! Every write goes to a temporary file in the target directory and is then
//! renamed over the destination.

mod fmap;
mod manifest;
mod report;

use std::io::Write;
use std::path::Path;

pub use fmap::{Fmap, FmapData};
pub use manifest::{
    list_manifests, list_pair_sources, load_pair, load_view, read_map, write_pair, write_view, LoadedPair, MapFiles, PairLink,
    PredictedInstance, Predictions, ViewExtras, ViewManifest, ViewRole,
};
pub use report::{recall_svg, write_loss_csv, write_metrics_csv, write_recall_svg, MetricsRow};

use crate::error::Result;

/// Whole-file atomic write.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
