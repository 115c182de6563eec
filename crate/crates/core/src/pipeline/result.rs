use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StageSeeds;
use crate::dataset::Labels;

/// One charted datapoint: chart coordinates next to its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartRow {
    /// Index in the time-sorted dataset.
    pub index: usize,
    pub z: [f64; 2],
    /// Ground-truth position, 2 or 3 coordinates.
    pub x: Vec<f64>,
    pub timestamp: f64,
}

/// Where a chart came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// The run or transfer configuration as TOML.
    pub config: String,
    /// SHA-256 of `config`.
    pub config_digest: String,
    /// SHA-256 of the `CCNN` weight file bytes.
    pub weights_digest: String,
    /// SHA-256 over both digests; changes with any upstream change.
    pub digest: String,
    pub dataset: String,
    pub seeds: Option<StageSeeds>,
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Provenance {
    pub fn new(config: String, weights: &[u8], dataset: String, seeds: Option<StageSeeds>, loss_history: Vec<f64>) -> Self {
        let config_digest = sha256_hex(config.as_bytes());
        let weights_digest = sha256_hex(weights);
        let digest = sha256_hex(format!("{config_digest}{weights_digest}").as_bytes());
        Self {
            config,
            config_digest,
            weights_digest,
            digest,
            dataset,
            seeds,
            loss_history,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("provenance serializes")
    }
}

/// A chart with per-datapoint ground truth, plus provenance when it was
/// produced by a run in this process.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartResult {
    pub rows: Vec<ChartRow>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, thiserror::Error)]
pub enum ChartFileError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("chart file line {line}: {reason}")]
    Malformed { line: u64, reason: String },
}

impl ChartResult {
    /// Pairs chart points with the ground truth of datapoints `0..N`.
    pub fn from_chart(chart: &[[f32; 2]], labels: &Labels) -> Self {
        let rows = chart
            .iter()
            .enumerate()
            .map(|(n, z)| ChartRow {
                index: n,
                z: [z[0] as f64, z[1] as f64],
                x: labels.position(n).to_vec(),
                timestamp: labels.timestamp(n),
            })
            .collect();
        Self { rows, provenance: None }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position_dim(&self) -> usize {
        self.rows.first().map_or(2, |r| r.x.len())
    }

    /// `N × 2` chart coordinates.
    pub fn chart_matrix(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.len(), 2), |(i, k)| self.rows[i].z[k])
    }

    /// `N × D` ground-truth positions.
    pub fn truth_matrix(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.len(), self.position_dim()), |(i, k)| self.rows[i].x[k])
    }

    /// Writes `index,z1,z2,x1,x2[,x3],timestamp` rows. Values use the
    /// shortest representation that parses back to the same number.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ChartFileError> {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<(), ChartFileError> {
        let dim = self.position_dim();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string(), "z1".into(), "z2".into()];
        header.extend((1..=dim).map(|k| format!("x{k}")));
        header.push("timestamp".into());
        out.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.index.to_string(), row.z[0].to_string(), row.z[1].to_string()];
            record.extend(row.x.iter().map(f64::to_string));
            record.push(row.timestamp.to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a chart CSV. Provenance is not part of the file.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, ChartFileError> {
        Self::read_csv_from(File::open(path)?)
    }

    pub fn read_csv_from<R: std::io::Read>(r: R) -> Result<Self, ChartFileError> {
        let mut reader = csv::Reader::from_reader(r);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let dim = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["index", "z1", "z2", "x1", "x2", "timestamp"] => 2,
            ["index", "z1", "z2", "x1", "x2", "x3", "timestamp"] => 3,
            _ => {
                return Err(ChartFileError::Malformed {
                    line: 1,
                    reason: format!("unexpected header {}", header.join(",")),
                })
            }
        };
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |reason: String| ChartFileError::Malformed { line, reason };
            let num = |k: usize| -> Result<f64, ChartFileError> {
                record[k]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("column {}: {e}", header[k])))
            };
            let index = record[0]
                .parse::<usize>()
                .map_err(|e| bad(format!("index: {e}")))?;
            let z = [num(1)?, num(2)?];
            if !z.iter().all(|v| v.is_finite()) {
                return Err(bad("chart coordinates must be finite".into()));
            }
            let x = (0..dim).map(|k| num(3 + k)).collect::<Result<Vec<_>, _>>()?;
            rows.push(ChartRow {
                index,
                z,
                x,
                timestamp: num(3 + dim)?,
            });
        }
        Ok(Self { rows, provenance: None })
    }
}
