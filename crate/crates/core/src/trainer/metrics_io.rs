//! Metrics artifacts: per-shard CSV rows and JSON summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One evaluation row. Wall-clock time is reported in the run summary,
/// not per row, so identical seeded runs produce byte-identical CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Shard index (online runs) or epoch (collision runs).
    pub index: u64,
    pub auc: f64,
    pub log_loss: f64,
    pub examples_seen: u64,
    pub packet_bytes: u64,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::Error::Config(format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
