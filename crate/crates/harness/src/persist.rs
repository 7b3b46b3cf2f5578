//! CSV and JSON artifacts.
//!
//! Floats in CSV files are written in scientific notation with 17
//! significant digits, which round-trips every finite `f64` exactly.

use std::fs;
use std::path::Path;

use mc_implicit::groundtruth::GroundTruthRecord;
use mc_implicit::sampling::MaskRle;
use mc_implicit::{DenseMatrix, TraceRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, CellSeeds, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::exec::FinalSummary;

pub const ARTIFACT_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

pub fn trace_csv(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TraceRecord::CSV_COLUMNS)?;
    for rec in trace {
        let mut row = vec![rec.t.to_string()];
        row.extend(rec.csv_values().iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    finish(w)
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| HarnessError::Csv(csv::Error::from(e.into_error())))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads a JSON file. Shape errors name the offending field path, for example
/// `trace[3]: missing field `sig_min``.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        HarnessError::artifact(path, format!("{at}: {}", e.into_inner()))
    })
}

/// Row-major `r x r` core matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaStream {
    pub r: usize,
    pub entries: Vec<Vec<f64>>,
}

impl SigmaStream {
    pub fn from_matrices(ms: &[DenseMatrix]) -> Self {
        let r = ms.first().map_or(0, |m| m.nrows());
        let entries = ms
            .iter()
            .map(|m| {
                (0..r)
                    .flat_map(|i| (0..r).map(move |j| m[(i, j)]))
                    .collect()
            })
            .collect();
        Self { r, entries }
    }

    pub fn to_matrices(&self) -> std::result::Result<Vec<DenseMatrix>, String> {
        self.entries
            .iter()
            .enumerate()
            .map(|(t, e)| {
                if e.len() != self.r * self.r {
                    return Err(format!(
                        "sigma_stream.entries[{t}] has {} values, expected {}",
                        e.len(),
                        self.r * self.r
                    ));
                }
                Ok(DenseMatrix::from_row_slice(self.r, self.r, e))
            })
            .collect()
    }
}

/// Everything needed to re-examine a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArtifact {
    pub artifact_version: u32,
    pub config: ExperimentConfig,
    pub cell: Cell,
    pub seeds: CellSeeds,
    pub ground_truth: GroundTruthRecord,
    pub mask: MaskRle,
    pub summary: FinalSummary,
    pub failure: Option<String>,
    pub trace: Vec<TraceRecord>,
    #[serde(default)]
    pub sigma_stream: Option<SigmaStream>,
}

impl RunArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let art: Self = read_json(path)?;
        if art.artifact_version != ARTIFACT_VERSION {
            return Err(HarnessError::artifact(
                path,
                format!("unsupported artifact version {}", art.artifact_version),
            ));
        }
        if art.trace.is_empty() {
            return Err(HarnessError::artifact(path, "trace is empty"));
        }
        Ok(art)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [
            0.0,
            -0.0,
            1.0,
            0.1,
            1.0 / 3.0,
            6.02e23,
            5e-324,
            f64::MAX,
            -2.5e-17,
        ] {
            let s = fmt_f64(v);
            assert_eq!(parse_f64(&s).unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
        assert_eq!(parse_f64(&fmt_f64(f64::INFINITY)), Some(f64::INFINITY));
    }

    #[test]
    fn sigma_stream_round_trip() {
        let ms = vec![
            DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DenseMatrix::identity(2, 2),
        ];
        let s = SigmaStream::from_matrices(&ms);
        assert_eq!(s.entries[0], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.to_matrices().unwrap(), ms);
    }
}
