//! Chart-quality metrics: continuity (CT), trustworthiness (TW) and
//! scale-optimal Kruskal stress (KS).
//!
//! CT and TW compare `K`-neighborhoods under Euclidean rank. With `r_X(i, j)`
//! the rank of `j` among all points ordered by distance from `i` in ground
//! truth (nearest is rank 1, ties broken by ascending index),
//!
//! ```text
//! TW = 1 − 2 / (N·K·(2N − 3K − 1)) · Σ_i Σ_{j ∈ U_K(i)} (r_X(i, j) − K)
//! ```
//!
//! where `U_K(i)` holds the chart neighbors of `i` that are not ground-truth
//! neighbors. CT is the same expression with the two point sets exchanged.
//!
//! KS fits the chart distances `δ` to the ground-truth distances `d` with the
//! least-squares scale `β* = Σ dδ / Σ δ²` and reports
//! `sqrt(Σ (d − β*δ)² / Σ d²)`.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("neighborhood size {k} out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error("point sets differ in size: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("subsample size {requested} exceeds {available} points")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error("at least two points are required")]
    TooFewPoints,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Contiguous row-major copy of a point set.
struct Cloud {
    dim: usize,
    data: Vec<f64>,
}

impl Cloud {
    fn new(points: &ArrayView2<'_, f64>) -> Self {
        Self {
            dim: points.ncols(),
            data: points.iter().copied().collect(),
        }
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    /// Euclidean distance between points `i` and `j`.
    fn dist(&self, i: usize, j: usize) -> f64 {
        let a = &self.data[i * self.dim..(i + 1) * self.dim];
        let b = &self.data[j * self.dim..(j + 1) * self.dim];
        a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    }

    /// Distances from point `i` to points `from..`, written to `out`. Same
    /// arithmetic as [`Cloud::dist`], in loops the compiler can vectorize.
    fn distances(&self, i: usize, from: usize, out: &mut Vec<f64>) {
        let d = self.dim;
        let p = &self.data[i * d..(i + 1) * d];
        let rest = &self.data[from * d..];
        out.clear();
        match d {
            2 => out.extend(rest.chunks_exact(2).map(|q| {
                let (a, b) = (p[0] - q[0], p[1] - q[1]);
                (a * a + b * b).sqrt()
            })),
            3 => out.extend(rest.chunks_exact(3).map(|q| {
                let (a, b, c) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
                (a * a + b * b + c * c).sqrt()
            })),
            _ => out.extend((from..self.len()).map(|j| self.dist(i, j))),
        }
    }

    /// Sort key of point `j` seen from `i`, see [`key`].
    fn key(&self, i: usize, j: usize) -> u128 {
        key(self.dist(i, j), j)
    }

    /// Keys of every other point, in index order.
    fn keys_from(&self, i: usize, scratch: &mut Vec<f64>) -> Vec<u128> {
        self.distances(i, 0, scratch);
        scratch
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, &d)| key(d, j))
            .collect()
    }
}

/// Packs (distance, index) into one integer whose order is the neighbor
/// order: distance first, ties by ascending index. The bit pattern of a
/// nonnegative float orders like its value.
fn key(distance: f64, index: usize) -> u128 {
    ((distance.to_bits() as u128) << 64) | index as u128
}

fn key_index(key: u128) -> usize {
    key as u64 as usize
}

/// Ranks of all points relative to `i`; `ranks[i] = 0`.
fn rank_row(cloud: &Cloud, i: usize) -> Vec<u32> {
    let mut order = cloud.keys_from(i, &mut Vec::new());
    order.sort_unstable();
    let mut ranks = vec![0u32; cloud.len()];
    for (r, &key) in order.iter().enumerate() {
        ranks[key_index(key)] = r as u32 + 1;
    }
    ranks
}

/// `N × N` neighbor ranks: entry `(i, j)` is the rank of `j` by distance from
/// `i` (nearest other point is 1, ties by ascending index); the diagonal is 0.
pub fn rank_matrix(points: ArrayView2<'_, f64>) -> Array2<u32> {
    let n = points.nrows();
    let cloud = Cloud::new(&points);
    let rows: Vec<Vec<u32>> = (0..n).into_par_iter().map(|i| rank_row(&cloud, i)).collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    out
}

fn check_k(n: usize, k: usize) -> Result<()> {
    // 2N − 3K − 1 must stay positive for the normalization.
    if k == 0 || 2 * k > n || 3 * k + 1 >= 2 * n {
        return Err(MetricsError::KOutOfRange { k, n });
    }
    Ok(())
}

/// `Σ_i Σ_{j ∈ N_K^embedded(i) \ N_K^reference(i)} (r_reference(i, j) − K)`.
///
/// Per point, only the chart neighbors outside the reference neighborhood
/// are ranked, against the reference keys no farther than the farthest of
/// them.
fn rank_penalty(reference: &Cloud, embedded: &Cloud, k: usize) -> u64 {
    let n = reference.len();
    let per_point: Vec<u64> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let mut chart = embedded.keys_from(i, scratch);
            chart.select_nth_unstable(k - 1);
            let mut truth = reference.keys_from(i, scratch);
            let kth = *truth.select_nth_unstable(k - 1).1;
            let mut outside: Vec<u128> = chart[..k]
                .iter()
                .map(|&c| reference.key(i, key_index(c)))
                .filter(|&t| t > kth)
                .collect();
            let Some(&last) = outside.iter().max() else {
                return 0;
            };
            outside.sort_unstable();
            let mut nearer: Vec<u128> = truth.into_iter().filter(|&t| t < last).collect();
            nearer.sort_unstable();
            outside
                .iter()
                .map(|&t| nearer.partition_point(|&c| c < t) as u64 + 1 - k as u64)
                .sum()
        })
        .collect();
    per_point.iter().sum()
}

fn neighborhood_score(reference: ArrayView2<'_, f64>, embedded: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    let n = reference.nrows();
    if embedded.nrows() != n {
        return Err(MetricsError::LengthMismatch(n, embedded.nrows()));
    }
    check_k(n, k)?;
    let penalty = rank_penalty(&Cloud::new(&reference), &Cloud::new(&embedded), k) as f64;
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)
}

/// Trustworthiness of chart `z` against ground truth `x`: penalizes chart
/// neighbors that are not true neighbors.
pub fn trustworthiness(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    neighborhood_score(x, z, k)
}

/// Continuity of chart `z` against ground truth `x`: penalizes true
/// neighbors that the chart separates. Equals `trustworthiness(z, x, k)`.
pub fn continuity(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    neighborhood_score(z, x, k)
}

/// Denominator of the Kruskal-stress ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressNormalization {
    /// `Σ d²`, the ground-truth distance energy; keeps KS within `[0, 1]`.
    #[default]
    GroundTruth,
    /// `Σ (β*δ)²`, the scaled chart distance energy.
    ScaledChart,
}

/// Kruskal stress after the least-squares scale fit, normalized by the
/// ground-truth distance energy. A chart collapsed to a single point has
/// stress 1.
pub fn kruskal_stress(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<f64> {
    kruskal_stress_with(x, z, StressNormalization::GroundTruth)
}

pub fn kruskal_stress_with(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, norm: StressNormalization) -> Result<f64> {
    let n = x.nrows();
    if z.nrows() != n {
        return Err(MetricsError::LengthMismatch(n, z.nrows()));
    }
    if n < 2 {
        return Err(MetricsError::TooFewPoints);
    }
    let (x, z) = (Cloud::new(&x), Cloud::new(&z));
    // Per-row sums of d·δ, δ², d² then a second pass for the residual.
    let moments: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(dx, dz), i| {
                x.distances(i, i + 1, dx);
                z.distances(i, i + 1, dz);
                let mut m = [0.0; 3];
                for (d, delta) in dx.iter().zip(dz.iter()) {
                    m[0] += d * delta;
                    m[1] += delta * delta;
                    m[2] += d * d;
                }
                m
            },
        )
        .collect();
    let [cross, chart_energy, truth_energy] = moments
        .iter()
        .fold([0.0; 3], |a, m| [a[0] + m[0], a[1] + m[1], a[2] + m[2]]);
    if chart_energy == 0.0 {
        return Ok(1.0);
    }
    if truth_energy == 0.0 {
        return Ok(0.0);
    }
    let beta = cross / chart_energy;
    let residuals: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(dx, dz), i| {
                x.distances(i, i + 1, dx);
                z.distances(i, i + 1, dz);
                dx.iter().zip(dz.iter()).map(|(d, delta)| (d - beta * delta).powi(2)).sum::<f64>()
            },
        )
        .collect();
    let residual: f64 = residuals.iter().sum();
    let denom = match norm {
        StressNormalization::GroundTruth => truth_energy,
        StressNormalization::ScaledChart => beta * beta * chart_energy,
    };
    Ok((residual / denom).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluateOptions {
    /// Neighborhood size; `floor(0.05 · n)` when unset.
    pub k: Option<usize>,
    /// Evaluate on a uniform random subset of this many points.
    pub subsample: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub stress_normalization: StressNormalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ct: f64,
    pub tw: f64,
    pub ks: f64,
    pub k_used: usize,
    pub n_used: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

/// Default neighborhood size `floor(0.05 · n)`.
pub fn default_k(n: usize) -> usize {
    n * 5 / 100
}

/// Computes CT, TW and KS of chart `z` against ground truth `x`.
pub fn evaluate(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, options: &EvaluateOptions) -> Result<MetricsReport> {
    let n = x.nrows();
    if z.nrows() != n {
        return Err(MetricsError::LengthMismatch(n, z.nrows()));
    }
    let (x, z) = match options.subsample {
        Some(m) if m > n => {
            return Err(MetricsError::SubsampleTooLarge {
                requested: m,
                available: n,
            })
        }
        Some(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            (x.select(ndarray::Axis(0), &idx), z.select(ndarray::Axis(0), &idx))
        }
        None => (x.to_owned(), z.to_owned()),
    };
    let n_used = x.nrows();
    let k = options.k.unwrap_or_else(|| default_k(n_used));
    Ok(MetricsReport {
        ct: continuity(x.view(), z.view(), k)?,
        tw: trustworthiness(x.view(), z.view(), k)?,
        ks: kruskal_stress_with(x.view(), z.view(), options.stress_normalization)?,
        k_used: k,
        n_used,
        seed: options.seed,
    })
}

/// Converts chart points to an `N × 2` matrix.
pub fn chart_matrix(points: &[[f32; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 2), |(i, k)| points[i][k] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn collinear_ranks() {
        let pts = array![[0.0], [1.0], [3.0]];
        let r = rank_matrix(pts.view());
        assert_eq!(r.row(0).to_vec(), vec![0, 1, 2]);
        assert_eq!(r.row(2).to_vec(), vec![2, 1, 0]);
        assert_eq!(r.row(1).to_vec(), vec![1, 0, 2]);
    }

    #[test]
    fn duplicate_points_tie_break_by_index() {
        let pts = array![[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let r = rank_matrix(pts.view());
        assert_eq!(r.row(0).to_vec(), vec![0, 1, 2, 3]);
        assert_eq!(r.row(2).to_vec(), vec![3, 1, 0, 2]);
    }

    #[test]
    fn identity_chart_is_perfect() {
        let pts = Array2::from_shape_fn((40, 2), |(i, k)| ((i * 13 + k * 7) % 17) as f64 + 0.01 * i as f64);
        let report = evaluate(pts.view(), pts.view(), &EvaluateOptions::default()).unwrap();
        assert_eq!((report.ct, report.tw, report.ks), (1.0, 1.0, 0.0));
        assert_eq!((report.k_used, report.n_used), (2, 40));
    }

    #[test]
    fn k_range_is_enforced() {
        let pts = Array2::from_shape_fn((10, 2), |(i, k)| (i + k) as f64);
        assert!(trustworthiness(pts.view(), pts.view(), 0).is_err());
        assert!(trustworthiness(pts.view(), pts.view(), 6).is_err());
        assert!(trustworthiness(pts.view(), pts.view(), 5).is_ok());
        // 2N − 3K − 1 = 0 for N = 2, K = 1.
        let two = array![[0.0], [1.0]];
        assert!(continuity(two.view(), two.view(), 1).is_err());
        // Fewer than 20 points gives K = 0 by default.
        assert!(evaluate(pts.view(), pts.view(), &EvaluateOptions::default()).is_err());
    }

    #[test]
    fn collapsed_chart_has_unit_stress() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let z = array![[5.0, 5.0], [5.0, 5.0], [5.0, 5.0]];
        assert_eq!(kruskal_stress(x.view(), z.view()).unwrap(), 1.0);
    }

    #[test]
    fn five_point_stress_matches_closed_form() {
        // Chart squashes y by half. Pairwise distances by hand:
        let x = array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0], [1.0, 1.0]];
        let z = array![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [2.0, 1.0], [1.0, 0.5]];
        let d: [f64; 10] = [2.0, 2.0, 8f64.sqrt(), 2f64.sqrt(), 8f64.sqrt(), 2.0, 2f64.sqrt(), 2.0, 2f64.sqrt(), 2f64.sqrt()];
        let delta: [f64; 10] = [
            2.0,
            1.0,
            5f64.sqrt(),
            1.25f64.sqrt(),
            5f64.sqrt(),
            1.0,
            1.25f64.sqrt(),
            2.0,
            1.25f64.sqrt(),
            1.25f64.sqrt(),
        ];
        let beta = d.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() / delta.iter().map(|b| b * b).sum::<f64>();
        let expected = (d.iter().zip(&delta).map(|(a, b)| (a - beta * b).powi(2)).sum::<f64>()
            / d.iter().map(|a| a * a).sum::<f64>())
        .sqrt();
        let ks = kruskal_stress(x.view(), z.view()).unwrap();
        assert!((ks - expected).abs() < 1e-12, "{ks} vs {expected}");
        assert!(ks > 0.0 && ks < 1.0);
    }

    #[test]
    fn subsampling_is_seeded_and_bounded() {
        let x = Array2::from_shape_fn((200, 2), |(i, k)| ((i * 31 + k * 17) % 97) as f64 * 0.1 + i as f64 * 1e-3);
        let z = x.mapv(|v| v * 2.0 + 0.3 * v.sin());
        let opts = EvaluateOptions {
            subsample: Some(100),
            seed: 5,
            ..Default::default()
        };
        let a = evaluate(x.view(), z.view(), &opts).unwrap();
        assert_eq!(a, evaluate(x.view(), z.view(), &opts).unwrap());
        assert_eq!((a.n_used, a.k_used, a.seed), (100, 5, 5));
        let too_many = EvaluateOptions {
            subsample: Some(201),
            ..Default::default()
        };
        assert!(matches!(
            evaluate(x.view(), z.view(), &too_many),
            Err(MetricsError::SubsampleTooLarge { .. })
        ));
        let text = a.to_toml();
        assert!(text.contains("ct = ") && text.contains("k_used = 5"));
    }
}
