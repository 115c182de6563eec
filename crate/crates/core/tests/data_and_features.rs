mod common;

use chartkit::dataset::{
    load_container, save_container, subcarrier_average, synthesize_los_dataset, CsiDatapoint, Dataset, SubcarrierWindow,
    SynthConfig,
};
use chartkit::features::{featurize_dataset, scaled_r2m, FeatureConfig};
use chartkit::ReducedDataset;
use common::*;
use num_complex::{Complex32, Complex64};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_dataset(seed: u64, n: usize, b: usize, w: usize, dim: usize) -> Dataset {
    let mut g = rng(seed);
    let datapoints = (0..n)
        .map(|i| CsiDatapoint {
            csi: (0..b * w)
                .map(|_| Complex32::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0)))
                .collect(),
            position: (0..dim).map(|_| g.random_range(-50.0..50.0)).collect(),
            timestamp: i as f64 * 0.1 + g.random_range(0.0..0.05),
        })
        .collect();
    Dataset::from_datapoints("random", b, w, datapoints).unwrap()
}

#[test]
fn synthetic_feature_distances_follow_physical_distances() {
    let ds = synthesize_los_dataset(&SynthConfig::distributed_square(2000, 16, 10.0, 0)).unwrap();
    let reduced = subcarrier_average(&ds, SubcarrierWindow::center8(ds.subcarrier_count())).unwrap();
    let feats = featurize_dataset(&reduced, &FeatureConfig::default()).unwrap();
    let labels = reduced.labels();
    let mut g = rng(1);
    let (mut physical, mut feature) = (Vec::new(), Vec::new());
    for _ in 0..200_000 {
        let (i, j) = (g.random_range(0..2000), g.random_range(0..2000));
        if i == j {
            continue;
        }
        physical.push(distance(labels.position(i), labels.position(j)));
        let (fi, fj) = (feats.row(i), feats.row(j));
        feature.push(fi.iter().zip(fj).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt());
    }
    let rho = spearman(&physical, &feature);
    assert!(rho > 0.5, "Spearman rho {rho}");
}

#[test]
fn synthetic_generation_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = SynthConfig::distributed_square(300, 6, 5.0, 9);
    save_container(&synthesize_los_dataset(&config).unwrap(), tmp.path().join("a.ccds")).unwrap();
    save_container(&synthesize_los_dataset(&config).unwrap(), tmp.path().join("b.ccds")).unwrap();
    assert_eq!(
        std::fs::read(tmp.path().join("a.ccds")).unwrap(),
        std::fs::read(tmp.path().join("b.ccds")).unwrap()
    );
}

#[test]
fn thousand_point_round_trip_matches_field_by_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("synthetic.ccds");
    let ds = synthesize_los_dataset(&SynthConfig::distributed_square(1000, 8, 6.0, 4)).unwrap();
    save_container(&ds, &path).unwrap();
    let back = load_container(&path).unwrap();
    assert_eq!((back.len(), back.antenna_count(), back.subcarrier_count()), (1000, 8, 16));
    for (a, b) in ds.datapoints().zip(back.datapoints()) {
        assert_eq!(a.timestamp.to_bits(), b.timestamp.to_bits());
        assert_eq!(a.position, b.position);
        assert_eq!(a.csi, b.csi);
    }
}

#[test]
fn features_match_naive_outer_product() {
    let mut g = rng(5);
    let config = FeatureConfig::default();
    for b in [1, 3, 32] {
        let h: Vec<Complex64> = (0..b)
            .map(|_| Complex64::new(g.random_range(-1e-3..1e-3), g.random_range(-1e-3..1e-3)))
            .collect();
        let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let scale = norm.powf(2.0 / 8.0 - 1.0);
        let feature = scaled_r2m(&h, &config).unwrap();
        assert_eq!(feature.0.len(), b * b);
        for i in 0..b {
            for j in 0..b {
                let expected = (h[i] * scale * (h[j] * scale).conj()).re;
                assert!((feature.0[i * b + j] - expected).abs() < 1e-6 * expected.abs().max(1e-3));
            }
        }
    }
}

#[test]
fn single_datapoint_featurizes_to_one_row() {
    let ds = random_dataset(6, 1, 32, 2, 3);
    let reduced = subcarrier_average(&ds, SubcarrierWindow { start: 0, count: 2 }).unwrap();
    let feats = featurize_dataset(&reduced, &FeatureConfig::default()).unwrap();
    assert_eq!((feats.rows(), feats.dim()), (1, 1024));
}

fn reduced_rows(r: &ReducedDataset) -> Vec<(f64, Vec<Complex64>)> {
    (0..r.len()).map(|n| (r.labels().timestamp(n), r.h(n).to_vec())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn containers_round_trip_bit_exactly(seed in any::<u64>(), n in 1usize..20, b in 1usize..5, w in 1usize..6, dim in 2usize..4) {
        let tmp = tempfile::tempdir().unwrap();
        let ds = random_dataset(seed, n, b, w, dim);
        let (p1, p2) = (tmp.path().join("one.ccds"), tmp.path().join("two.ccds"));
        save_container(&ds, &p1).unwrap();
        let back = load_container(&p1).unwrap();
        save_container(&back, &p2).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn averaging_commutes_with_reordering(seed in any::<u64>(), n in 2usize..30) {
        let ds = random_dataset(seed, n, 3, 5, 2);
        let mut shuffled: Vec<CsiDatapoint> = ds.datapoints().collect();
        shuffled.shuffle(&mut rng(seed ^ 1));
        let reordered = Dataset::from_datapoints("random", 3, 5, shuffled).unwrap();
        let window = SubcarrierWindow { start: 1, count: 3 };
        prop_assert_eq!(
            reduced_rows(&subcarrier_average(&reordered, window).unwrap()),
            reduced_rows(&subcarrier_average(&ds, window).unwrap())
        );
    }
}
