//! CSV run logs and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::LogRow;
use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const CSV_HEADER: [&str; 9] = [
    "step",
    "episode_return_mean",
    "policy_entropy",
    "log_alpha",
    "target_entropy",
    "q_loss",
    "pi_loss",
    "alpha_loss",
    "policy_shift_tv",
];

pub fn rows_to_csv(rows: &[LogRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer.write_record(CSV_HEADER)?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<LogRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::config(
            "csv.header",
            format!(
                "expected `{}`, got `{}`",
                CSV_HEADER.join(","),
                header.join(",")
            ),
        ));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_rows(path: &Path, rows: &[LogRow]) -> Result<()> {
    let text = rows_to_csv(rows)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rows_from_csv(&text)
}

/// Git-style object hash (`blob <len>\0<content>`) using SHA-256.
pub fn content_hash(content: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", content.len()).as_bytes());
    hasher.update(content);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub seed: u64,
    pub csv: PathBuf,
    pub csv_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub label: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub runs: Vec<ManifestRun>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> LogRow {
        LogRow {
            step,
            episode_return_mean: 0.1 + step as f64,
            policy_entropy: std::f64::consts::LN_2,
            log_alpha: -6.907755278982137,
            target_entropy: 1.0 / 3.0,
            q_loss: 1e-17,
            pi_loss: -0.0,
            alpha_loss: 5e300,
            policy_shift_tv: 0.0,
        }
    }

    #[test]
    fn header_matches_schema() {
        let text = rows_to_csv(&[row(0)]).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        let empty = rows_to_csv(&[]).unwrap();
        assert_eq!(empty.trim_end(), CSV_HEADER.join(","));
        assert!(rows_from_csv(&empty).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![row(0), row(500), row(1000)];
        let back = rows_from_csv(&rows_to_csv(&rows).unwrap()).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.log_alpha.to_bits(), b.log_alpha.to_bits());
            assert_eq!(a.target_entropy.to_bits(), b.target_entropy.to_bits());
            assert_eq!(a.alpha_loss.to_bits(), b.alpha_loss.to_bits());
        }
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(rows_from_csv("step,foo\n1,2\n").is_err());
    }

    #[test]
    fn blob_hash_of_empty_content() {
        // sha256("blob 0\0")
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
