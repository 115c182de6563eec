//! The forward charting function: a rectifier network mapping standardized
//! feature vectors to two-dimensional chart coordinates, trained with triplet
//! loss.
//!
//! The three branches of a triplet network share one parameter set, so a
//! training step pushes every distinct datapoint of a batch through the same
//! [`Mlp`] once and accumulates the loss gradient of all three roles onto it.

mod gradcheck;
mod io;
mod loss;
mod mlp;
mod train;

pub use gradcheck::{gradient_check, kink_clearance, GradCheckReport};
pub use io::{load_weights, load_weights_matching, save_weights, weights_bytes, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use loss::triplet_loss;
pub use mlp::{batch_loss, batch_loss_grad, Dense, Mlp, Scalar, Workspace};
pub use train::{train, TrainConfig, TrainOutcome};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

/// Chart dimensionality `D′`.
pub const CHART_DIM: usize = 2;

#[derive(Debug, Error)]
pub enum ChartNetError {
    #[error("feature dimension {found} does not match network input dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("triplet index {index} out of range for {rows} feature rows")]
    TripletOutOfRange { index: usize, rows: usize },
    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("weights have layer widths {found:?}, expected {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("malformed weights file at byte offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ChartNetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Feature dimension (`B²` for scaled-R2M features).
    pub input_dim: usize,
    /// Hidden layer widths, each followed by a rectifier.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Chart dimension; must be 2.
    #[serde(default = "default_output")]
    pub output_dim: usize,
    /// Seed for weight initialization.
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![512, 256, 128, 64]
}

fn default_output() -> usize {
    CHART_DIM
}

impl NetworkConfig {
    /// Default architecture: hidden widths 512-256-128-64, linear 2-unit output.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: default_hidden(),
            output_dim: CHART_DIM,
            seed: 0,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `[input, hidden…, output]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim != CHART_DIM {
            return Err(ChartNetError::InvalidConfig(format!(
                "output dimension must be {CHART_DIM}, got {}",
                self.output_dim
            )));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(ChartNetError::InvalidConfig("all layer widths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-dimension affine input normalization `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation of every column; constant columns keep
    /// scale 1.
    pub fn fit(features: &FeatureMatrix) -> Self {
        let dim = features.dim();
        let rows = features.rows().max(1) as f64;
        let mut sum = vec![0f64; dim];
        for n in 0..features.rows() {
            for (s, v) in sum.iter_mut().zip(features.row(n)) {
                *s += *v as f64;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / rows).collect();
        let mut var = vec![0f64; dim];
        for n in 0..features.rows() {
            for ((acc, v), m) in var.iter_mut().zip(features.row(n)).zip(&mean) {
                *acc += (*v as f64 - m).powi(2);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / rows).sqrt();
                if sd > 0.0 && sd > 1e-7 * m.abs() {
                    sd as f32
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            mean: mean.iter().map(|m| *m as f32).collect(),
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, input: &[f32], out: &mut [f32]) {
        for (((o, x), m), s) in out.iter_mut().zip(input).zip(&self.mean).zip(&self.scale) {
            *o = (x - m) / s;
        }
    }

    /// Standardized copy of every feature row.
    pub fn apply_matrix(&self, features: &FeatureMatrix) -> Array2<f32> {
        let mut out = Array2::zeros((features.rows(), features.dim()));
        for (n, mut row) in out.outer_iter_mut().enumerate() {
            self.apply(features.row(n), row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// A trained (or freshly initialized) forward charting function together with
/// the input normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartingNetwork {
    mlp: Mlp<f32>,
    standardizer: Standardizer,
}

impl ChartingNetwork {
    /// Seeded fan-in-scaled initialization with identity input normalization.
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            mlp: Mlp::init(&config.dims(), &mut rng),
            standardizer: Standardizer::identity(config.input_dim),
        })
    }

    pub fn from_parts(mlp: Mlp<f32>, standardizer: Standardizer) -> Result<Self> {
        if mlp.layers.is_empty() {
            return Err(ChartNetError::InvalidConfig("network has no layers".into()));
        }
        for pair in mlp.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() || pair[0].bias.len() != pair[0].outputs() {
                return Err(ChartNetError::InvalidConfig("layer shapes do not chain".into()));
            }
        }
        if mlp.output_dim() != CHART_DIM {
            return Err(ChartNetError::InvalidConfig(format!("output dimension {} is not {CHART_DIM}", mlp.output_dim())));
        }
        if standardizer.mean.len() != mlp.input_dim() || standardizer.scale.len() != mlp.input_dim() {
            return Err(ChartNetError::DimensionMismatch {
                expected: mlp.input_dim(),
                found: standardizer.mean.len(),
            });
        }
        if !mlp.all_finite() {
            return Err(ChartNetError::InvalidConfig("non-finite parameters".into()));
        }
        Ok(Self { mlp, standardizer })
    }

    pub fn mlp(&self) -> &Mlp<f32> {
        &self.mlp
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// `[input, hidden…, output]` widths.
    pub fn dims(&self) -> Vec<usize> {
        self.mlp.dims()
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.input_dim() {
            return Err(ChartNetError::DimensionMismatch {
                expected: self.input_dim(),
                found,
            });
        }
        Ok(())
    }

    /// Chart point of a single feature vector.
    pub fn forward(&self, features: &[f32]) -> Result<[f32; 2]> {
        self.check_dim(features.len())?;
        let mut x = vec![0.0; features.len()];
        self.standardizer.apply(features, &mut x);
        let z = self.mlp.forward_one(&x);
        Ok([z[0], z[1]])
    }

    /// Chart points of every row of `features`.
    pub fn chart(&self, features: &FeatureMatrix) -> Result<Vec<[f32; 2]>> {
        self.check_dim(features.dim())?;
        const CHUNK: usize = 2048;
        let mut out = Vec::with_capacity(features.rows());
        let mut buf = Array2::<f32>::zeros((CHUNK.min(features.rows()), features.dim()));
        for start in (0..features.rows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(features.rows());
            for (k, n) in (start..end).enumerate() {
                let mut row = buf.row_mut(k);
                self.standardizer.apply(features.row(n), row.as_slice_mut().expect("standard layout"));
            }
            let z = self.mlp.forward_batch(buf.slice(ndarray::s![..end - start, ..]));
            out.extend(z.outer_iter().map(|r| [r[0], r[1]]));
        }
        Ok(out)
    }
}
