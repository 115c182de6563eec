//! CSI datasets: labeled channel snapshots, the `CCDS` container and
//! subcarrier reduction.
//!
//! A [`Dataset`] stores `N` datapoints, each a `B × W` complex CSI matrix
//! together with a ground-truth position and a timestamp. Storage is flat and
//! antenna-major so that the container can be read and written without
//! per-datapoint allocations.

mod container;
mod synth;

pub use container::{
    load_container, load_reduced, read_container_info, save_container, ContainerInfo, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use synth::{synthesize_los_dataset, AreaBounds, SynthConfig, TrajectoryStyle};

use num_complex::{Complex32, Complex64};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic at byte offset {offset}: expected \"CCDS\"")]
    BadMagic { offset: u64 },
    #[error("unsupported container version {found} at byte offset {offset}")]
    VersionMismatch { found: u32, offset: u64 },
    #[error("malformed header at byte offset {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },
    #[error("truncated payload: needed {needed} more bytes at byte offset {offset}")]
    Truncated { offset: u64, needed: u64 },
    #[error("non-finite {field} in record {record} at byte offset {offset}")]
    NonFinite {
        field: &'static str,
        record: u64,
        offset: u64,
    },
    #[error("trailing bytes after last record at byte offset {offset}")]
    TrailingBytes { offset: u64 },
    #[error("dataset must contain at least one datapoint")]
    Empty,
    #[error("datapoint {index}: {reason}")]
    InvalidDatapoint { index: usize, reason: String },
    #[error("subcarrier window {start}..{end} exceeds subcarrier count {count}")]
    WindowOutOfRange { start: usize, end: usize, count: usize },
    #[error("invalid synthesis config: {0}")]
    InvalidSynthConfig(String),
    #[error("datapoint {index} coincides with antenna {antenna}")]
    CoincidentAntenna { index: usize, antenna: usize },
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// One labeled CSI snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiDatapoint {
    /// `B × W` channel coefficients, antenna-major.
    pub csi: Vec<Complex32>,
    /// Ground-truth position in meters.
    pub position: Vec<f64>,
    /// Seconds since the dataset epoch.
    pub timestamp: f64,
}

/// Ground-truth labels shared by full and reduced datasets: positions and
/// timestamps, in datapoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    position_dim: usize,
    positions: Vec<f64>,
    timestamps: Vec<f64>,
}

impl Labels {
    pub fn new(position_dim: usize, positions: Vec<f64>, timestamps: Vec<f64>) -> Result<Self> {
        if position_dim == 0 {
            return Err(DatasetError::InvalidDatapoint {
                index: 0,
                reason: "position dimension must be positive".into(),
            });
        }
        if positions.len() != position_dim * timestamps.len() {
            return Err(DatasetError::InvalidDatapoint {
                index: 0,
                reason: format!(
                    "{} position values for {} timestamps of dimension {}",
                    positions.len(),
                    timestamps.len(),
                    position_dim
                ),
            });
        }
        for (n, t) in timestamps.iter().enumerate() {
            let p = &positions[n * position_dim..(n + 1) * position_dim];
            if !t.is_finite() || p.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::InvalidDatapoint {
                    index: n,
                    reason: "non-finite position or timestamp".into(),
                });
            }
        }
        Ok(Self {
            position_dim,
            positions,
            timestamps,
        })
    }

    /// Builds labels from 2-D points with zero timestamps.
    pub fn from_points_2d(points: &[[f64; 2]]) -> Result<Self> {
        let positions = points.iter().flat_map(|p| p.iter().copied()).collect();
        Self::new(2, positions, vec![0.0; points.len()])
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn position_dim(&self) -> usize {
        self.position_dim
    }

    pub fn position(&self, n: usize) -> &[f64] {
        &self.positions[n * self.position_dim..(n + 1) * self.position_dim]
    }

    pub fn timestamp(&self, n: usize) -> f64 {
        self.timestamps[n]
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    /// Flat row-major `N × D` position matrix.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let d = self.position_dim;
        let mut positions = Vec::with_capacity(self.positions.len());
        for &n in order {
            positions.extend_from_slice(&self.positions[n * d..(n + 1) * d]);
        }
        Self {
            position_dim: d,
            positions,
            timestamps: order.iter().map(|&n| self.timestamps[n]).collect(),
        }
    }
}

/// Stable ordering of datapoints by nondecreasing timestamp.
fn time_order(timestamps: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..timestamps.len()).collect();
    order.sort_by(|&a, &b| timestamps[a].total_cmp(&timestamps[b]));
    order
}

/// A CSI dataset `{(S_n, x_n, t_n)}` sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    antenna_count: usize,
    subcarrier_count: usize,
    labels: Labels,
    csi: Vec<Complex32>,
}

impl Dataset {
    /// Validates and assembles a dataset, sorting datapoints by timestamp
    /// (ties keep their input order).
    pub fn from_datapoints(
        name: impl Into<String>,
        antenna_count: usize,
        subcarrier_count: usize,
        datapoints: Vec<CsiDatapoint>,
    ) -> Result<Self> {
        let Some(first) = datapoints.first() else {
            return Err(DatasetError::Empty);
        };
        let position_dim = first.position.len();
        let cells = antenna_count * subcarrier_count;
        let mut positions = Vec::with_capacity(datapoints.len() * position_dim);
        let mut timestamps = Vec::with_capacity(datapoints.len());
        let mut csi = Vec::with_capacity(datapoints.len() * cells);
        for (index, dp) in datapoints.into_iter().enumerate() {
            if dp.csi.len() != cells {
                return Err(DatasetError::InvalidDatapoint {
                    index,
                    reason: format!("csi has {} entries, expected {antenna_count}×{subcarrier_count}", dp.csi.len()),
                });
            }
            if dp.position.len() != position_dim {
                return Err(DatasetError::InvalidDatapoint {
                    index,
                    reason: format!("position has dimension {}, expected {position_dim}", dp.position.len()),
                });
            }
            if dp.csi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(DatasetError::InvalidDatapoint {
                    index,
                    reason: "non-finite csi entry".into(),
                });
            }
            positions.extend_from_slice(&dp.position);
            timestamps.push(dp.timestamp);
            csi.extend_from_slice(&dp.csi);
        }
        let labels = Labels::new(position_dim, positions, timestamps)?;
        Self::from_parts(name.into(), antenna_count, subcarrier_count, labels, csi)
    }

    pub(crate) fn from_parts(
        name: String,
        antenna_count: usize,
        subcarrier_count: usize,
        labels: Labels,
        csi: Vec<Complex32>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(DatasetError::Empty);
        }
        if antenna_count == 0 || subcarrier_count == 0 {
            return Err(DatasetError::InvalidDatapoint {
                index: 0,
                reason: "antenna and subcarrier counts must be positive".into(),
            });
        }
        debug_assert_eq!(csi.len(), labels.len() * antenna_count * subcarrier_count);
        let order = time_order(labels.timestamps());
        let sorted = order.iter().enumerate().all(|(i, &n)| i == n);
        if sorted {
            return Ok(Self {
                name,
                antenna_count,
                subcarrier_count,
                labels,
                csi,
            });
        }
        let cells = antenna_count * subcarrier_count;
        let mut reordered = Vec::with_capacity(csi.len());
        for &n in &order {
            reordered.extend_from_slice(&csi[n * cells..(n + 1) * cells]);
        }
        Ok(Self {
            name,
            antenna_count,
            subcarrier_count,
            labels: labels.permuted(&order),
            csi: reordered,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn antenna_count(&self) -> usize {
        self.antenna_count
    }

    pub fn subcarrier_count(&self) -> usize {
        self.subcarrier_count
    }

    pub fn position_dim(&self) -> usize {
        self.labels.position_dim()
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// CSI matrix of datapoint `n`, antenna-major (`csi[b * W + w]`).
    pub fn csi(&self, n: usize) -> &[Complex32] {
        let cells = self.antenna_count * self.subcarrier_count;
        &self.csi[n * cells..(n + 1) * cells]
    }

    pub fn datapoint(&self, n: usize) -> CsiDatapoint {
        CsiDatapoint {
            csi: self.csi(n).to_vec(),
            position: self.labels.position(n).to_vec(),
            timestamp: self.labels.timestamp(n),
        }
    }

    pub fn datapoints(&self) -> impl Iterator<Item = CsiDatapoint> + '_ {
        (0..self.len()).map(|n| self.datapoint(n))
    }
}

/// A dataset whose CSI has been reduced to one complex coefficient per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDataset {
    name: String,
    antenna_count: usize,
    labels: Labels,
    h: Vec<Complex64>,
}

impl ReducedDataset {
    pub fn new(name: impl Into<String>, antenna_count: usize, labels: Labels, h: Vec<Complex64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(DatasetError::Empty);
        }
        if h.len() != labels.len() * antenna_count {
            return Err(DatasetError::InvalidDatapoint {
                index: 0,
                reason: format!("{} coefficients for {} datapoints × {antenna_count} antennas", h.len(), labels.len()),
            });
        }
        if let Some(pos) = h.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(DatasetError::InvalidDatapoint {
                index: pos / antenna_count,
                reason: "non-finite reduced csi".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            antenna_count,
            labels,
            h,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn antenna_count(&self) -> usize {
        self.antenna_count
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Reduced CSI vector `h_n` of length `B`.
    pub fn h(&self, n: usize) -> &[Complex64] {
        &self.h[n * self.antenna_count..(n + 1) * self.antenna_count]
    }
}

/// Half-open subcarrier window `[start, start + count)` used for averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SubcarrierWindow {
    pub start: usize,
    pub count: usize,
}

impl SubcarrierWindow {
    /// The 8-subcarrier band around the center of `subcarrier_count` carriers
    /// (508..=515 for 1024 subcarriers).
    pub fn center8(subcarrier_count: usize) -> Self {
        let count = subcarrier_count.min(8);
        Self {
            start: (subcarrier_count - count) / 2,
            count,
        }
    }

    pub(crate) fn check(&self, subcarrier_count: usize) -> Result<()> {
        let end = self.start.checked_add(self.count).unwrap_or(usize::MAX);
        if self.count == 0 || end > subcarrier_count {
            return Err(DatasetError::WindowOutOfRange {
                start: self.start,
                end,
                count: subcarrier_count,
            });
        }
        Ok(())
    }
}

/// Averages each antenna's coefficients over `count` subcarriers starting at
/// `start`: `h[b] = mean(csi[b, start..start + count])`.
pub(crate) fn average_row(csi: &[Complex32], antenna_count: usize, subcarrier_count: usize, window: SubcarrierWindow, out: &mut Vec<Complex64>) {
    let scale = 1.0 / window.count as f64;
    for b in 0..antenna_count {
        let row = &csi[b * subcarrier_count + window.start..b * subcarrier_count + window.start + window.count];
        let sum = row
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc + Complex64::new(c.re as f64, c.im as f64));
        out.push(sum * scale);
    }
}

/// Reduces every datapoint's `B × W` CSI to the subcarrier mean over `window`.
pub fn subcarrier_average(dataset: &Dataset, window: SubcarrierWindow) -> Result<ReducedDataset> {
    window.check(dataset.subcarrier_count)?;
    let b = dataset.antenna_count;
    let mut h = Vec::with_capacity(dataset.len() * b);
    for n in 0..dataset.len() {
        average_row(dataset.csi(n), b, dataset.subcarrier_count, window, &mut h);
    }
    ReducedDataset::new(dataset.name.clone(), b, dataset.labels.clone(), h)
}
