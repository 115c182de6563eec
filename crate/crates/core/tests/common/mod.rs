//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use chartkit::chartnet::Mlp;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Rank of `j` from `i` by counting the points strictly before it in the
/// (distance, index) order.
pub fn naive_ranks(points: &Array2<f64>) -> Vec<Vec<u32>> {
    let p = rows(points);
    let n = p.len();
    let mut ranks = vec![vec![0u32; n]; n];
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let dij = distance(&p[i], &p[j]);
            let before = (0..n)
                .filter(|&k| k != i && k != j)
                .filter(|&k| {
                    let dik = distance(&p[i], &p[k]);
                    dik < dij || (dik == dij && k < j)
                })
                .count();
            ranks[i][j] = before as u32 + 1;
        }
    }
    ranks
}

/// Trustworthiness straight from its definition, given both rank tables.
pub fn naive_trustworthiness(rx: &[Vec<u32>], rz: &[Vec<u32>], k: usize) -> f64 {
    let n = rx.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let in_z = j != i && rz[i][j] as usize <= k;
            let in_x = j != i && rx[i][j] as usize <= k;
            if in_z && !in_x {
                sum += rx[i][j] as f64 - k as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * sum
}

pub fn naive_stress(x: &Array2<f64>, z: &Array2<f64>) -> f64 {
    let (px, pz) = (rows(x), rows(z));
    let mut d = Vec::new();
    let mut delta = Vec::new();
    for i in 0..px.len() {
        for j in i + 1..px.len() {
            d.push(distance(&px[i], &px[j]));
            delta.push(distance(&pz[i], &pz[j]));
        }
    }
    let den: f64 = delta.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return 1.0;
    }
    let beta = d.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() / den;
    let num: f64 = d.iter().zip(&delta).map(|(a, b)| (a - beta * b).powi(2)).sum();
    (num / d.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.random_range(-5.0..5.0))
}

/// Random rotation in 2 or 3 dimensions.
pub fn random_rotation(rng: &mut impl Rng, dim: usize) -> Array2<f64> {
    let angle = |rng: &mut dyn rand::RngCore| rng.random_range(0.0..std::f64::consts::TAU);
    let planar = |t: f64, a: usize, b: usize| {
        let mut r = Array2::eye(dim);
        r[[a, a]] = t.cos();
        r[[a, b]] = -t.sin();
        r[[b, a]] = t.sin();
        r[[b, b]] = t.cos();
        r
    };
    if dim == 2 {
        planar(angle(rng), 0, 1)
    } else {
        planar(angle(rng), 0, 1).dot(&planar(angle(rng), 1, 2)).dot(&planar(angle(rng), 0, 1))
    }
}

/// `c·R·x + t` applied to every row.
pub fn similarity(rng: &mut impl Rng, x: &Array2<f64>) -> Array2<f64> {
    let dim = x.ncols();
    let c = rng.random_range(0.1..10.0);
    let r = random_rotation(rng, dim);
    let t: Vec<f64> = (0..dim).map(|_| rng.random_range(-100.0..100.0)).collect();
    let mut z = x.dot(&r.t()) * c;
    for mut row in z.outer_iter_mut() {
        for (v, s) in row.iter_mut().zip(&t) {
            *v += s;
        }
    }
    z
}

/// Average ranks (ties share the mean rank).
fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (fractional_ranks(a), fractional_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Chi-square statistic of `counts` against a uniform law.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// 1% critical value of the chi-square law with 99 degrees of freedom.
pub const CHI2_99_DOF_1PCT: f64 = 134.642;

/// A random gradient-check instance: network, inputs and triplets over them.
pub struct GradInstance {
    pub mlp: Mlp<f64>,
    pub inputs: Array2<f64>,
    pub triplets: Vec<[usize; 3]>,
}

pub fn grad_instance(rng: &mut impl Rng) -> GradInstance {
    let input_dim = rng.random_range(3..9);
    let dims = [input_dim, rng.random_range(4..12), rng.random_range(3..8), 2];
    let mlp = Mlp::init(&dims, rng);
    let rows = 8;
    let inputs = Array2::from_shape_fn((rows, input_dim), |_| rng.random_range(-2.0..2.0));
    let triplets = (0..6)
        .map(|_| {
            let a = rng.random_range(0..rows);
            let p = (a + rng.random_range(1..rows)) % rows;
            let n = (a + rng.random_range(1..rows)) % rows;
            [a, p, n]
        })
        .collect();
    GradInstance { mlp, inputs, triplets }
}
