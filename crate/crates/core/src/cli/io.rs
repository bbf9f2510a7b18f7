//! CSV and manifest persistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::KpiRecord;
use crate::error::{Error, Result};
use crate::marl::trainer::EpochStats;

pub const KPI_HEADER: [&str; 12] = [
    "slot",
    "packet_loss",
    "attempts",
    "latency_s",
    "jitter_s",
    "sinr_eff",
    "rssi_w",
    "rsrp_w",
    "r1",
    "r2",
    "l1",
    "l2",
];

/// The columns of the KPI CSV, read back.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct KpiRow {
    pub slot: usize,
    pub packet_loss: f64,
    pub attempts: f64,
    pub latency_s: f64,
    pub jitter_s: f64,
    pub sinr_eff: f64,
    pub rssi_w: f64,
    pub rsrp_w: f64,
    pub r1: f64,
    pub r2: f64,
    pub l1: f64,
    pub l2: f64,
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

pub fn write_kpi_csv(path: &Path, kpis: &[KpiRecord]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(KPI_HEADER)?;
    for k in kpis {
        w.write_record([
            k.slot_index.to_string(),
            k.packet_loss_rate.to_string(),
            k.attempts.to_string(),
            k.latency_s.to_string(),
            k.jitter_s.to_string(),
            k.sinr_eff.to_string(),
            k.rssi_w.to_string(),
            k.rsrp_w.to_string(),
            k.reward_agent1.to_string(),
            k.reward_agent2.to_string(),
            k.l1.to_string(),
            k.l2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kpi_csv(path: &Path) -> Result<Vec<KpiRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != KPI_HEADER {
        return Err(Error::Format(format!("{} has an unexpected KPI header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, curve: &[EpochStats]) -> Result<()> {
    write_rows(path, curve)
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<EpochStats>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// What one subcommand produced and how to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub workers: usize,
    pub code_version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        create_parent(path)?;
        let text = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Sorted subdirectory names of `dir`; empty when `dir` is missing.
pub fn subdirs(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let e = e?;
        if e.file_type()?.is_dir() {
            out.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}
