//! Hermetic line-of-sight CSI datasets along meandering or random-waypoint
//! trajectories.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Labels, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum TrajectoryStyle {
    /// Back-and-forth rows `row_spacing` meters apart; the walk reverses at
    /// the end of the pattern.
    Meander { row_spacing: f64 },
    /// Straight legs between uniformly drawn waypoints.
    RandomWaypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Number of datapoints `N`.
    pub n: usize,
    /// Antenna positions `[x, y, z]` in meters; `B` is their count.
    pub antennas: Vec<[f64; 3]>,
    pub area: AreaBounds,
    /// Height of the transmitter above the area plane, meters.
    #[serde(default)]
    pub ue_height: f64,
    pub carrier_frequency: f64,
    pub subcarrier_spacing: f64,
    pub subcarrier_count: usize,
    pub path_loss_exponent: f64,
    pub trajectory: TrajectoryStyle,
    /// Transmitter speed, m/s.
    pub speed: f64,
    /// Time between consecutive datapoints, seconds.
    pub sample_interval: f64,
    pub seed: u64,
}

fn default_name() -> String {
    "synthetic".to_string()
}

impl SynthConfig {
    /// `antenna_count` antennas spread evenly around the perimeter of a
    /// `side × side` square area, 1 m outside its edge and 2 m up, with a
    /// meandering transmitter at 0.5 m/s sampled every 0.2 s.
    pub fn distributed_square(n: usize, antenna_count: usize, side: f64, seed: u64) -> Self {
        let perimeter = 4.0 * (side + 2.0);
        let antennas = (0..antenna_count)
            .map(|k| {
                let s = (k as f64 + 0.5) / antenna_count as f64 * perimeter;
                let edge = side + 2.0;
                let (x, y) = match (s / edge) as usize {
                    0 => (s, 0.0),
                    1 => (edge, s - edge),
                    2 => (3.0 * edge - s, edge),
                    _ => (0.0, 4.0 * edge - s),
                };
                [x - 1.0, y - 1.0, 2.0]
            })
            .collect();
        Self {
            name: default_name(),
            n,
            antennas,
            area: AreaBounds {
                x_min: 0.0,
                x_max: side,
                y_min: 0.0,
                y_max: side,
            },
            ue_height: 0.0,
            carrier_frequency: 1.272e9,
            subcarrier_spacing: 50e6 / 1024.0,
            subcarrier_count: 16,
            path_loss_exponent: 2.0,
            trajectory: TrajectoryStyle::Meander { row_spacing: 0.5 },
            speed: 0.5,
            sample_interval: 0.2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DatasetError::InvalidSynthConfig(m.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.antennas.is_empty() {
            return bad("at least one antenna is required");
        }
        if self.subcarrier_count == 0 {
            return bad("subcarrier_count must be positive");
        }
        let a = &self.area;
        if !(a.x_min <= a.x_max && a.y_min <= a.y_max) {
            return bad("area bounds must satisfy min <= max");
        }
        if !(self.speed >= 0.0 && self.sample_interval >= 0.0) {
            return bad("speed and sample_interval must be nonnegative");
        }
        if let TrajectoryStyle::Meander { row_spacing } = self.trajectory {
            if !(row_spacing > 0.0) {
                return bad("row_spacing must be positive");
            }
        }
        for (i, p) in self.antennas.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return bad("antenna positions must be finite");
            }
            if self.antennas[..i].contains(p) {
                return Err(DatasetError::InvalidSynthConfig(format!("antenna {i} duplicates an earlier antenna")));
            }
        }
        Ok(())
    }
}

/// Generates a dataset whose CSI follows the free-space line-of-sight model
/// `a_b · exp(−j·2π·f_w·d_b / c)` with amplitude `a_b = d_b^(−pl/2)`.
pub fn synthesize_los_dataset(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let step = config.speed * config.sample_interval;
    let points = match &config.trajectory {
        TrajectoryStyle::Meander { row_spacing } => meander(&config.area, *row_spacing, config.n, step, &mut rng),
        TrajectoryStyle::RandomWaypoint => random_waypoint(&config.area, config.n, step, &mut rng),
    };

    let w_count = config.subcarrier_count;
    let freqs: Vec<f64> = (0..w_count)
        .map(|w| config.carrier_frequency + (w as f64 - (w_count / 2) as f64) * config.subcarrier_spacing)
        .collect();
    let b_count = config.antennas.len();
    let mut csi = Vec::with_capacity(config.n * b_count * w_count);
    let mut positions = Vec::with_capacity(config.n * 2);
    let mut timestamps = Vec::with_capacity(config.n);
    for (index, p) in points.iter().enumerate() {
        for (antenna, a) in config.antennas.iter().enumerate() {
            let d = ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2) + (config.ue_height - a[2]).powi(2)).sqrt();
            if d < 1e-12 {
                return Err(DatasetError::CoincidentAntenna { index, antenna });
            }
            let amplitude = d.powf(-config.path_loss_exponent / 2.0);
            for f in &freqs {
                let c = Complex64::from_polar(amplitude, -2.0 * PI * f * d / SPEED_OF_LIGHT);
                csi.push(Complex32::new(c.re as f32, c.im as f32));
            }
        }
        positions.extend_from_slice(p);
        timestamps.push(index as f64 * config.sample_interval);
    }
    let labels = Labels::new(2, positions, timestamps)?;
    Dataset::from_parts(config.name.clone(), b_count, w_count, labels, csi)
}

/// Samples `n` points at constant spacing `step` along a boustrophedon path,
/// bouncing back at either end. Row orientation and start corner are random.
fn meander(area: &AreaBounds, row_spacing: f64, n: usize, step: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let horizontal = rng.random_bool(0.5);
    let flip_start = rng.random_bool(0.5);
    let (lo_a, hi_a, lo_b, hi_b) = if horizontal {
        (area.x_min, area.x_max, area.y_min, area.y_max)
    } else {
        (area.y_min, area.y_max, area.x_min, area.x_max)
    };
    let rows = ((hi_b - lo_b) / row_spacing).floor() as usize + 1;
    let mut waypoints = Vec::with_capacity(2 * rows);
    for k in 0..rows {
        let b = lo_b + k as f64 * row_spacing;
        let (start, end) = if (k % 2 == 0) != flip_start { (lo_a, hi_a) } else { (hi_a, lo_a) };
        waypoints.push([start, b]);
        waypoints.push([end, b]);
    }
    let sampled = sample_polyline(&waypoints, n, step);
    sampled
        .into_iter()
        .map(|[a, b]| if horizontal { [a, b] } else { [b, a] })
        .collect()
}

fn sample_polyline(waypoints: &[[f64; 2]], n: usize, step: f64) -> Vec<[f64; 2]> {
    let seg_len: Vec<f64> = waypoints
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = seg_len.iter().sum();
    (0..n)
        .map(|i| {
            if total <= 0.0 {
                return waypoints[0];
            }
            let mut s = (i as f64 * step) % (2.0 * total);
            if s > total {
                s = 2.0 * total - s;
            }
            for (k, &len) in seg_len.iter().enumerate() {
                if s <= len || k == seg_len.len() - 1 {
                    let f = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                    let (a, b) = (waypoints[k], waypoints[k + 1]);
                    return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
                }
                s -= len;
            }
            unreachable!("polyline has at least one segment")
        })
        .collect()
}

fn random_waypoint(area: &AreaBounds, n: usize, step: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let draw = |rng: &mut ChaCha8Rng| {
        [
            area.x_min + rng.random::<f64>() * (area.x_max - area.x_min),
            area.y_min + rng.random::<f64>() * (area.y_max - area.y_min),
        ]
    };
    let mut pos = draw(rng);
    let mut target = draw(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(pos);
        let mut remaining = step;
        // Bounded so a degenerate area cannot spin forever.
        for _ in 0..1000 {
            let (dx, dy) = (target[0] - pos[0], target[1] - pos[1]);
            let dist = (dx * dx + dy * dy).sqrt();
            if dist > remaining {
                pos = [pos[0] + dx / dist * remaining, pos[1] + dy / dist * remaining];
                break;
            }
            remaining -= dist;
            pos = target;
            target = draw(rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_config() -> SynthConfig {
        SynthConfig {
            name: "unit".into(),
            n: 1,
            antennas: vec![[1.0, 0.0, 0.0]],
            area: AreaBounds {
                x_min: 0.0,
                x_max: 0.0,
                y_min: 0.0,
                y_max: 0.0,
            },
            ue_height: 0.0,
            carrier_frequency: 1.0e9,
            subcarrier_spacing: 1.0e6,
            subcarrier_count: 4,
            path_loss_exponent: 2.0,
            trajectory: TrajectoryStyle::Meander { row_spacing: 1.0 },
            speed: 1.0,
            sample_interval: 1.0,
            seed: 3,
        }
    }

    #[test]
    fn unit_distance_gives_unit_amplitude() {
        let ds = synthesize_los_dataset(&unit_config()).unwrap();
        assert_eq!(ds.len(), 1);
        for c in ds.csi(0) {
            assert!((c.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn coincident_antenna_is_rejected() {
        let mut cfg = unit_config();
        cfg.antennas = vec![[0.0, 0.0, 0.0]];
        assert!(matches!(
            synthesize_los_dataset(&cfg),
            Err(DatasetError::CoincidentAntenna { index: 0, antenna: 0 })
        ));
        cfg.antennas = vec![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert!(matches!(synthesize_los_dataset(&cfg), Err(DatasetError::InvalidSynthConfig(_))));
    }

    #[test]
    fn same_seed_same_dataset() {
        let mut cfg = SynthConfig::distributed_square(300, 8, 10.0, 7);
        assert_eq!(synthesize_los_dataset(&cfg).unwrap(), synthesize_los_dataset(&cfg).unwrap());
        cfg.trajectory = TrajectoryStyle::RandomWaypoint;
        assert_eq!(synthesize_los_dataset(&cfg).unwrap(), synthesize_los_dataset(&cfg).unwrap());
    }

    #[test]
    fn trajectories_stay_in_bounds_at_constant_speed() {
        for style in [TrajectoryStyle::Meander { row_spacing: 0.5 }, TrajectoryStyle::RandomWaypoint] {
            let mut cfg = SynthConfig::distributed_square(2000, 16, 10.0, 11);
            cfg.trajectory = style;
            let ds = synthesize_los_dataset(&cfg).unwrap();
            let labels = ds.labels();
            for n in 0..ds.len() {
                let p = labels.position(n);
                assert!((-1e-9..=10.0 + 1e-9).contains(&p[0]) && (-1e-9..=10.0 + 1e-9).contains(&p[1]));
                if n > 0 {
                    let q = labels.position(n - 1);
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                    // Corners cut the straight-line step short, never lengthen it.
                    assert!(d <= 0.1 + 1e-9, "step {d} at {n}");
                }
                assert_eq!(labels.timestamp(n), n as f64 * 0.2);
            }
        }
    }

    #[test]
    fn perimeter_antennas_are_distinct_and_outside_area() {
        let cfg = SynthConfig::distributed_square(10, 16, 10.0, 0);
        for (i, a) in cfg.antennas.iter().enumerate() {
            assert!(a[0] < 0.0 || a[0] > 10.0 || a[1] < 0.0 || a[1] > 10.0, "antenna {i} inside area: {a:?}");
            assert!(!cfg.antennas[..i].contains(a));
        }
    }
}
