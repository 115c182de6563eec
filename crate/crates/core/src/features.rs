//! Scaled raw-second-moment (R2M) features.
//!
//! A reduced CSI vector `h ∈ C^B` is first rescaled to
//! `h̄ = h · ‖h‖^((2/σ) − 1)`, which compresses the path-loss dynamic range so
//! that `‖h̄‖² = ‖h‖^(4/σ)`. The feature is the real part of the row-major
//! vectorization of the outer product `h̄ h̄ᴴ`, a vector of length `B²`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ReducedDataset;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("non-finite csi coefficient at antenna {0}")]
    NonFinite(usize),
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed feature cache at byte offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Estimated path-loss exponent σ.
    pub sigma: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { sigma: 8.0 }
    }
}

impl FeatureConfig {
    pub fn new(sigma: f64) -> Result<Self, FeatureError> {
        let cfg = Self { sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(FeatureError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Feature dimension for `antenna_count` antennas.
    pub fn feature_dim(&self, antenna_count: usize) -> usize {
        antenna_count * antenna_count
    }
}

/// One real-valued feature vector of length `B²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Returns `h̄ = h · ‖h‖^((2/σ) − 1)`, or zeros when `h = 0`.
pub fn scaled_vector(h: &[Complex64], config: &FeatureConfig) -> Result<Vec<Complex64>, FeatureError> {
    config.validate()?;
    if let Some(b) = h.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(FeatureError::NonFinite(b));
    }
    let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); h.len()]);
    }
    let factor = norm.powf(2.0 / config.sigma - 1.0);
    Ok(h.iter().map(|c| c * factor).collect())
}

fn outer_real(hbar: &[Complex64], out: &mut [f64]) {
    let b = hbar.len();
    for i in 0..b {
        for j in 0..b {
            // Re{h̄_i · conj(h̄_j)}
            out[i * b + j] = hbar[i].re * hbar[j].re + hbar[i].im * hbar[j].im;
        }
    }
}

/// Scaled-R2M feature of one reduced CSI vector.
pub fn scaled_r2m(h: &[Complex64], config: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    let hbar = scaled_vector(h, config)?;
    let mut out = vec![0.0; h.len() * h.len()];
    outer_real(&hbar, &mut out);
    Ok(FeatureVector(out))
}

/// Dense row-major `N × dim` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self, FeatureError> {
        if values.len() != rows * dim {
            return Err(FeatureError::InvalidConfig(format!(
                "{} values cannot form a {rows}×{dim} matrix",
                values.len()
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, n: usize) -> &[f32] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }
}

/// Computes the scaled-R2M feature of every datapoint.
pub fn featurize_dataset(reduced: &ReducedDataset, config: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    config.validate()?;
    let b = reduced.antenna_count();
    let dim = config.feature_dim(b);
    let mut values = vec![0f32; reduced.len() * dim];
    values
        .par_chunks_mut(dim)
        .enumerate()
        .try_for_each(|(n, row)| -> Result<(), FeatureError> {
            let hbar = scaled_vector(reduced.h(n), config)?;
            let mut buf = vec![0.0; dim];
            outer_real(&hbar, &mut buf);
            for (dst, src) in row.iter_mut().zip(&buf) {
                *dst = *src as f32;
            }
            Ok(())
        })?;
    FeatureMatrix::new(reduced.len(), dim, values)
}

pub const FEATURE_MAGIC: [u8; 4] = *b"CCFT";
pub const FEATURE_VERSION: u32 = 1;

/// Writes the `CCFT` cache: magic, version u32, N u64, dim u32, then `N·dim`
/// little-endian f32.
pub fn save_features(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(features.rows as u64).to_le_bytes())?;
    w.write_all(&(features.dim as u32).to_le_bytes())?;
    for v in &features.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, FeatureError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let malformed = |offset: u64, reason: &str| FeatureError::Malformed {
        offset,
        reason: reason.to_string(),
    };
    if bytes.len() < 20 {
        return Err(malformed(bytes.len() as u64, "truncated header"));
    }
    if bytes[0..4] != FEATURE_MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != FEATURE_VERSION {
        return Err(malformed(4, "unsupported version"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(20))
        .ok_or_else(|| malformed(8, "declared size overflows"))?;
    if bytes.len() != expected {
        return Err(malformed(bytes.len().min(expected) as u64, "payload length does not match header"));
    }
    let values = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows, dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Labels;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_input_gives_zero_feature() {
        let f = scaled_r2m(&[c(0.0, 0.0); 3], &FeatureConfig::default()).unwrap();
        assert_eq!(f.0, vec![0.0; 9]);
    }

    #[test]
    fn scalar_case() {
        // h̄ = 2 · 2^(1/4 − 1) = 2^(1/4); h̄² = √2.
        let f = scaled_r2m(&[c(2.0, 0.0)], &FeatureConfig::default()).unwrap();
        assert!((f.0[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            scaled_r2m(&[c(1.0, 0.0), c(f64::NAN, 0.0)], &FeatureConfig::default()),
            Err(FeatureError::NonFinite(1))
        ));
        assert!(FeatureConfig::new(0.0).is_err());
        assert!(FeatureConfig::new(-1.0).is_err());
    }

    #[test]
    fn dataset_featurization_shapes_and_cache_round_trip() {
        let labels = Labels::new(2, vec![0.0, 0.0], vec![0.0]).unwrap();
        let h: Vec<Complex64> = (0..32).map(|k| c(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let reduced = ReducedDataset::new("r", 32, labels, h.clone()).unwrap();
        let m = featurize_dataset(&reduced, &FeatureConfig::default()).unwrap();
        assert_eq!((m.rows(), m.dim()), (1, 1024));
        let direct = scaled_r2m(&h, &FeatureConfig::default()).unwrap();
        for (a, b) in m.row(0).iter().zip(&direct.0) {
            assert_eq!(*a, *b as f32);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ccft");
        save_features(&m, &path).unwrap();
        assert_eq!(load_features(&path).unwrap(), m);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(load_features(&path).is_err());
    }

    fn cvec(max: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0).prop_map(|(r, i)| c(r, i)), 1..max)
    }

    proptest! {
        #[test]
        fn global_phase_does_not_change_feature(h in cvec(8), phi in 0.0f64..6.3) {
            let cfg = FeatureConfig::default();
            let rot = Complex64::from_polar(1.0, phi);
            let a = scaled_r2m(&h, &cfg).unwrap();
            let b = scaled_r2m(&h.iter().map(|v| v * rot).collect::<Vec<_>>(), &cfg).unwrap();
            for (x, y) in a.0.iter().zip(&b.0) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn norm_law_and_symmetry(h in cvec(8), sigma in 0.5f64..16.0) {
            let cfg = FeatureConfig::new(sigma).unwrap();
            let norm = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let hbar = scaled_vector(&h, &cfg).unwrap();
            // ‖h̄h̄ᴴ‖_F = ‖h̄‖².
            let frob = hbar.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let expected = norm.powf(4.0 / sigma);
            prop_assert!((frob - expected).abs() <= 1e-9 * expected.max(1.0));

            let f = scaled_r2m(&h, &cfg).unwrap().0;
            let b = h.len();
            for i in 0..b {
                prop_assert!(f[i * b + i] >= 0.0);
                for j in 0..b {
                    prop_assert_eq!(f[i * b + j], f[j * b + i]);
                }
            }
        }

        #[test]
        fn scaling_input_scales_feature_by_power(h in cvec(6), k in 1.01f64..5.0) {
            let cfg = FeatureConfig::default();
            let norm = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let a = scaled_r2m(&h, &cfg).unwrap().0;
            let b = scaled_r2m(&h.iter().map(|v| v * k).collect::<Vec<_>>(), &cfg).unwrap().0;
            let gain = k.powf(4.0 / cfg.sigma);
            prop_assert!(gain > 1.0);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y - gain * x).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
