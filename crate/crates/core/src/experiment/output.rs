//! Report files and their manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Format;
use super::run::ReportBundle;
use crate::error::{Error, Result};

pub const NORMS_COLUMNS: [&str; 6] = ["kind", "p", "beta", "value", "std_error", "n_paths"];
pub const CHECKS_COLUMNS: [&str; 17] = [
    "name",
    "passed",
    "lhs",
    "lhs_se",
    "rhs",
    "rhs_se",
    "constant",
    "measured_ratio",
    "slack_sigmas",
    "violations",
    "samples",
    "p",
    "beta",
    "n_paths",
    "n_steps",
    "problems",
    "witness",
];
pub const PICARD_COLUMNS: [&str; 5] = ["label", "iteration", "distance", "ratio", "converged"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Report files with content hashes. `timing.json` is written alongside
/// but not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(fmt)?;
    for r in rows {
        w.write_record(&r).map_err(fmt)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|c| c.to_string()).unwrap_or_default()
}

pub fn norms_csv(bundle: &ReportBundle) -> Result<Vec<u8>> {
    let rows = bundle
        .norms
        .iter()
        .map(|e| {
            vec![
                e.kind.label().to_string(),
                e.p.to_string(),
                e.beta.to_string(),
                e.value.to_string(),
                e.std_error.to_string(),
                e.n_paths.to_string(),
            ]
        })
        .collect();
    csv_bytes(&NORMS_COLUMNS, rows)
}

pub fn checks_csv(bundle: &ReportBundle) -> Result<Vec<u8>> {
    let rows = bundle
        .checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                c.passed.to_string(),
                c.lhs.to_string(),
                c.lhs_se.to_string(),
                c.rhs.to_string(),
                c.rhs_se.to_string(),
                opt(c.constant),
                c.measured_ratio.to_string(),
                c.slack_sigmas.to_string(),
                c.violations.to_string(),
                c.samples.to_string(),
                c.meta.p.to_string(),
                c.meta.beta.to_string(),
                c.meta.n_paths.to_string(),
                c.meta.n_steps.to_string(),
                c.meta.problems.join(";"),
                c.witness.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_bytes(&CHECKS_COLUMNS, rows)
}

pub fn picard_csv(bundle: &ReportBundle) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for rec in &bundle.picard {
        for (k, d) in rec.trace.distances.iter().enumerate() {
            let ratio = if k == 0 {
                String::new()
            } else {
                rec.trace.ratios[k - 1].to_string()
            };
            rows.push(vec![
                rec.label.clone(),
                (k + 1).to_string(),
                d.to_string(),
                ratio,
                rec.trace.converged.to_string(),
            ]);
        }
    }
    csv_bytes(&PICARD_COLUMNS, rows)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<ManifestEntry> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestEntry {
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Writes the requested formats into `dir` (created if missing), then
/// `manifest.json` and `timing.json`.
pub fn write_outputs(bundle: &ReportBundle, dir: impl AsRef<Path>, formats: &[Format]) -> Result<Manifest> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    if formats.contains(&Format::Json) {
        files.push(write(&dir, "report.json", &to_json(bundle)?)?);
    }
    if formats.contains(&Format::Csv) {
        files.push(write(&dir, "norms.csv", &norms_csv(bundle)?)?);
        files.push(write(&dir, "checks.csv", &checks_csv(bundle)?)?);
        files.push(write(&dir, "picard.csv", &picard_csv(bundle)?)?);
    }
    let manifest = Manifest { files };
    write(&dir, "manifest.json", &to_json(&manifest)?)?;
    write(&dir, "timing.json", &to_json(&bundle.timing)?)?;
    Ok(manifest)
}
