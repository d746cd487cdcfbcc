//! Output plumbing: run manifests and CSV writers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Replay record written by every command: the effective configuration,
/// its hash, the seed and the crate version.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub t_steps: usize,
    pub config_sha256: String,
    pub outputs: Vec<String>,
    pub config: &'a ExperimentConfig,
}

pub fn config_sha256(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    outputs: &[&str],
) -> Result<PathBuf> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        t_steps: config.t_steps,
        config_sha256: config_sha256(config)?,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        config,
    };
    let path = out_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Per-patch occupancy CSV: patch_id, location, proportion, stderr.
/// Extra location coordinates get their own columns beyond d = 1.
pub fn write_patch_csv(
    path: &Path,
    locations: &[Vec<f64>],
    proportions: &[f64],
    stderr: &[f64],
) -> Result<()> {
    let dim = locations.first().map_or(1, |z| z.len());
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["patch_id".to_string(), "z".to_string()];
    for extra in 1..dim {
        header.push(format!("z{extra}"));
    }
    header.push("occupancy_proportion".into());
    header.push("stderr".into());
    writer.write_record(&header)?;
    for (i, z) in locations.iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(z.iter().map(|c| c.to_string()));
        record.push(proportions[i].to_string());
        record.push(stderr[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-step occupied-count CSV: t, occupied.
pub fn write_counts_csv(path: &Path, burn_in: usize, counts: &[u32]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "occupied"])?;
    for (k, count) in counts.iter().enumerate() {
        writer.write_record([(burn_in + k + 1).to_string(), count.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Column-wise numeric CSV with an explicit header.
pub fn write_columns_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    assert_eq!(header.len(), columns.len());
    let rows = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for r in 0..rows {
        let record: Vec<String> = columns.iter().map(|c| c[r].to_string()).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
