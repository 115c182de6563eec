//! Training-triplet selection and triplet diagnostics.
//!
//! Three rules are provided, all drawing with uniform probability:
//!
//! * **time**: the positive lies within `t_c` seconds of the anchor;
//! * **genie**: the positive lies within `d_c` meters of the anchor's
//!   ground-truth position;
//! * **simulated trajectories**: straight constant-velocity segments through
//!   the point cloud assign pseudo-timestamps, and time-based selection runs on
//!   those, with the negative taken from a different trajectory.
//!
//! In every rule the positive and the negative differ from the anchor; the
//! negative is otherwise unrestricted and may coincide with the positive.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Labels;

#[derive(Debug, Error)]
pub enum TripletError {
    #[error("invalid triplet config: {0}")]
    InvalidConfig(String),
    #[error("anchor {anchor} has no positive candidate within {threshold}")]
    NoPositiveCandidate { anchor: usize, threshold: f64 },
    #[error("datapoint {index} has no neighbor within {d_c} m")]
    Isolated { index: usize, d_c: f64 },
    #[error("could not place trajectory {trajectory} with at least two members after {attempts} attempts")]
    TrajectoryBudgetExhausted { trajectory: usize, attempts: usize },
    #[error("simulated-trajectory selection needs at least two trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("trajectory {0} has fewer than two members")]
    SparseTrajectory(usize),
    #[error("no anchor with a positive within {t_c} s found after {attempts} draws")]
    RetriesExhausted { t_c: f64, attempts: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed triplet file at byte offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
}

pub type Result<T, E = TripletError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// The rule (and its parameters) that produced a [`TripletSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SelectionRule {
    Time { t_c: f64 },
    Genie { d_c: f64 },
    SimTrajectory { t_c: f64, trajectories: usize },
    /// Loaded from a file, which does not record the rule.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub rule: SelectionRule,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.triplets
            .iter()
            .map(|t| t.anchor.max(t.positive).max(t.negative))
            .max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSelectionConfig {
    /// Threshold interval for positives, seconds.
    pub t_c: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for TimeSelectionConfig {
    fn default() -> Self {
        Self {
            t_c: 1.5,
            count: 1_200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenieSelectionConfig {
    /// Maximum anchor-positive distance, meters.
    pub d_c: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for GenieSelectionConfig {
    fn default() -> Self {
        Self {
            d_c: 1.5,
            count: 1_200_000,
            seed: 0,
        }
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(TripletError::InvalidConfig("count must be at least 1".into()));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(TripletError::InvalidConfig(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Uniform draw from `0..n` excluding `skip` (requires `n ≥ 2`).
fn draw_excluding(rng: &mut impl Rng, n: usize, skip: usize) -> usize {
    let k = rng.random_range(0..n - 1);
    if k >= skip {
        k + 1
    } else {
        k
    }
}

/// Time-based selection: positive within `t_c` of the anchor's timestamp.
pub fn select_time_based(labels: &Labels, config: &TimeSelectionConfig) -> Result<TripletSet> {
    check_positive("t_c", config.t_c)?;
    check_count(config.count)?;
    let n = labels.len();
    let ts = labels.timestamps();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| ts[i]).collect();
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    // Candidate window [lo, hi) in sorted order for each anchor.
    let windows: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let t = ts[i];
            let lo = sorted.partition_point(|&s| t - s > config.t_c);
            let hi = sorted.partition_point(|&s| s - t <= config.t_c);
            (lo, hi)
        })
        .collect();
    if let Some(anchor) = windows.iter().position(|&(lo, hi)| hi - lo < 2) {
        return Err(TripletError::NoPositiveCandidate {
            anchor,
            threshold: config.t_c,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let triplets = (0..config.count)
        .map(|_| {
            let anchor = rng.random_range(0..n);
            let (lo, hi) = windows[anchor];
            let positive = order[lo + draw_excluding(&mut rng, hi - lo, rank[anchor] - lo)];
            let negative = draw_excluding(&mut rng, n, anchor);
            Triplet {
                anchor,
                positive,
                negative,
            }
        })
        .collect();
    Ok(TripletSet {
        triplets,
        rule: SelectionRule::Time { t_c: config.t_c },
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Compressed neighbor lists: `neighbors[offsets[i]..offsets[i + 1]]` are the
/// points within `radius` of point `i`, excluding `i`, in ascending order.
struct NeighborLists {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl NeighborLists {
    fn build(labels: &Labels, radius: f64) -> Self {
        let n = labels.len();
        let dim = labels.position_dim();
        let cell_of = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / radius).floor() as i64).collect() };
        let mut grid: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for i in 0..n {
            grid.entry(cell_of(labels.position(i))).or_default().push(i as u32);
        }
        let shifts: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
            .map(|mut code| {
                (0..dim)
                    .map(|_| {
                        let s = (code % 3) as i64 - 1;
                        code /= 3;
                        s
                    })
                    .collect()
            })
            .collect();

        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        let mut scratch = Vec::new();
        for i in 0..n {
            let p = labels.position(i);
            let cell = cell_of(p);
            scratch.clear();
            for shift in &shifts {
                let key: Vec<i64> = cell.iter().zip(shift).map(|(c, s)| c + s).collect();
                if let Some(bucket) = grid.get(&key) {
                    scratch.extend(
                        bucket
                            .iter()
                            .copied()
                            .filter(|&j| j as usize != i && euclidean(p, labels.position(j as usize)) <= radius),
                    );
                }
            }
            scratch.sort_unstable();
            neighbors.extend_from_slice(&scratch);
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    fn of(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Genie-aided selection: positive within `d_c` meters of the anchor.
pub fn select_genie(labels: &Labels, config: &GenieSelectionConfig) -> Result<TripletSet> {
    check_positive("d_c", config.d_c)?;
    check_count(config.count)?;
    let n = labels.len();
    let lists = NeighborLists::build(labels, config.d_c);
    if let Some(index) = (0..n).find(|&i| lists.of(i).is_empty()) {
        return Err(TripletError::Isolated { index, d_c: config.d_c });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let triplets = (0..config.count)
        .map(|_| {
            let anchor = rng.random_range(0..n);
            let candidates = lists.of(anchor);
            let positive = candidates[rng.random_range(0..candidates.len())] as usize;
            let negative = draw_excluding(&mut rng, n, anchor);
            Triplet {
                anchor,
                positive,
                negative,
            }
        })
        .collect();
    Ok(TripletSet {
        triplets,
        rule: SelectionRule::Genie { d_c: config.d_c },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryMember {
    pub index: usize,
    /// Pseudo-timestamp: projected arclength from the start divided by speed.
    pub time: f64,
}

/// A straight constant-velocity trajectory through the point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrajectory {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub speed: f64,
    /// Members ordered by pseudo-timestamp (ties by index).
    pub members: Vec<TrajectoryMember>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySimConfig {
    /// Number of trajectories `r`.
    pub count: usize,
    /// m/s
    pub speed: f64,
    /// Maximum perpendicular distance from the segment for membership, meters.
    pub corridor: f64,
    pub seed: u64,
    /// Segment draws allowed per trajectory before giving up.
    pub max_attempts: usize,
}

impl Default for TrajectorySimConfig {
    fn default() -> Self {
        Self {
            count: 30_000,
            speed: 1.0,
            corridor: 0.25,
            seed: 0,
            max_attempts: 1000,
        }
    }
}

/// Projects every point onto the segment `start → end`. Points whose foot
/// lies on the segment and whose perpendicular distance is within `corridor`
/// become members.
fn segment_members(labels: &Labels, start: [f64; 2], end: [f64; 2], speed: f64, corridor: f64) -> Vec<TrajectoryMember> {
    let (vx, vy) = (end[0] - start[0], end[1] - start[1]);
    let len = (vx * vx + vy * vy).sqrt();
    if len == 0.0 {
        return Vec::new();
    }
    let (ux, uy) = (vx / len, vy / len);
    let mut members: Vec<TrajectoryMember> = (0..labels.len())
        .filter_map(|i| {
            let p = labels.position(i);
            let (dx, dy) = (p[0] - start[0], p[1] - start[1]);
            let along = dx * ux + dy * uy;
            let across = (dx * uy - dy * ux).abs();
            (along >= 0.0 && along <= len && across <= corridor).then(|| TrajectoryMember {
                index: i,
                time: along / speed,
            })
        })
        .collect();
    members.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.index.cmp(&b.index)));
    members
}

/// Draws `r` straight segments with endpoints uniform in the bounding box of
/// the ground-truth positions (first two coordinates). Segments with fewer
/// than two members are redrawn.
pub fn simulate_trajectories(labels: &Labels, config: &TrajectorySimConfig) -> Result<Vec<SimTrajectory>> {
    check_positive("speed", config.speed)?;
    if !(config.corridor >= 0.0) {
        return Err(TripletError::InvalidConfig("corridor must be nonnegative".into()));
    }
    if config.count == 0 {
        return Err(TripletError::InvalidConfig("trajectory count must be at least 1".into()));
    }
    if labels.position_dim() < 2 {
        return Err(TripletError::InvalidConfig("positions must have at least two coordinates".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in 0..labels.len() {
        let p = labels.position(i);
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 2] {
        [
            lo[0] + rng.random::<f64>() * (hi[0] - lo[0]),
            lo[1] + rng.random::<f64>() * (hi[1] - lo[1]),
        ]
    };
    (0..config.count)
        .map(|trajectory| {
            for _ in 0..config.max_attempts {
                let start = draw(&mut rng);
                let end = draw(&mut rng);
                let members = segment_members(labels, start, end, config.speed, config.corridor);
                if members.len() >= 2 {
                    return Ok(SimTrajectory {
                        start,
                        end,
                        speed: config.speed,
                        members,
                    });
                }
            }
            Err(TripletError::TrajectoryBudgetExhausted {
                trajectory,
                attempts: config.max_attempts,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTripletConfig {
    /// Threshold interval on pseudo-timestamps, seconds.
    pub t_c: f64,
    pub count: usize,
    pub seed: u64,
    /// Anchor redraws allowed when an anchor has no positive within `t_c`.
    pub max_retries: usize,
}

impl Default for SimTripletConfig {
    fn default() -> Self {
        Self {
            t_c: 1.5,
            count: 1_200_000,
            seed: 0,
            max_retries: 1000,
        }
    }
}

/// Which trajectories one simulated-trajectory triplet was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSource {
    /// Trajectory holding the anchor and the positive.
    pub shared: usize,
    /// Trajectory the negative was drawn from.
    pub negative: usize,
}

/// Time-based selection on simulated trajectories.
pub fn select_sim_trajectory_triplets(trajectories: &[SimTrajectory], config: &SimTripletConfig) -> Result<TripletSet> {
    select_sim_trajectory_triplets_traced(trajectories, config).map(|(set, _)| set)
}

/// Like [`select_sim_trajectory_triplets`], also reporting the trajectories
/// each triplet came from.
pub fn select_sim_trajectory_triplets_traced(
    trajectories: &[SimTrajectory],
    config: &SimTripletConfig,
) -> Result<(TripletSet, Vec<TripletSource>)> {
    check_positive("t_c", config.t_c)?;
    check_count(config.count)?;
    let r = trajectories.len();
    if r < 2 {
        return Err(TripletError::TooFewTrajectories(r));
    }
    if let Some(k) = trajectories.iter().position(|t| t.members.len() < 2) {
        return Err(TripletError::SparseTrajectory(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut triplets = Vec::with_capacity(config.count);
    let mut sources = Vec::with_capacity(config.count);
    for _ in 0..config.count {
        let mut drawn = None;
        for _ in 0..config.max_retries.max(1) {
            let shared = rng.random_range(0..r);
            let members = &trajectories[shared].members;
            let a = rng.random_range(0..members.len());
            let t = members[a].time;
            let lo = members.partition_point(|m| t - m.time > config.t_c);
            let hi = members.partition_point(|m| m.time - t <= config.t_c);
            if hi - lo >= 2 {
                let p = lo + draw_excluding(&mut rng, hi - lo, a - lo);
                drawn = Some((shared, members[a].index, members[p].index));
                break;
            }
        }
        let Some((shared, anchor, positive)) = drawn else {
            return Err(TripletError::RetriesExhausted {
                t_c: config.t_c,
                attempts: config.max_retries,
            });
        };
        let other = draw_excluding(&mut rng, r, shared);
        let members = &trajectories[other].members;
        // At least two distinct members, so at most one equals the anchor.
        let negative = loop {
            let m = members[rng.random_range(0..members.len())].index;
            if m != anchor {
                break m;
            }
        };
        triplets.push(Triplet {
            anchor,
            positive,
            negative,
        });
        sources.push(TripletSource { shared, negative: other });
    }
    Ok((
        TripletSet {
            triplets,
            rule: SelectionRule::SimTrajectory {
                t_c: config.t_c,
                trajectories: r,
            },
        },
        sources,
    ))
}

/// Fraction of triplets whose ground-truth positions violate
/// `‖x_anchor − x_pos‖ ≤ ‖x_anchor − x_neg‖`.
pub fn violation_rate(triplets: &TripletSet, labels: &Labels) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    let violations = triplets
        .triplets
        .iter()
        .filter(|t| {
            let a = labels.position(t.anchor);
            euclidean(a, labels.position(t.positive)) > euclidean(a, labels.position(t.negative))
        })
        .count();
    violations as f64 / triplets.len() as f64
}

pub const TRIPLET_MAGIC: [u8; 4] = *b"CCTS";
pub const TRIPLET_VERSION: u32 = 1;

/// Writes the `CCTS` file: magic, version u32, count u64, then `count`
/// records of three little-endian u64 indices.
pub fn save_triplets(set: &TripletSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_triplets(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_triplets<W: Write>(set: &TripletSet, w: &mut W) -> Result<()> {
    w.write_all(&TRIPLET_MAGIC)?;
    w.write_all(&TRIPLET_VERSION.to_le_bytes())?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    for t in &set.triplets {
        for v in [t.anchor, t.positive, t.negative] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_triplets(path: impl AsRef<Path>) -> Result<TripletSet> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let malformed = |offset: usize, reason: &str| TripletError::Malformed {
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < 16 {
        return Err(malformed(bytes.len(), "truncated header"));
    }
    if bytes[0..4] != TRIPLET_MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != TRIPLET_VERSION {
        return Err(malformed(4, "unsupported version"));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = count.checked_mul(24).and_then(|c| c.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(malformed(bytes.len(), "payload length does not match count"));
    }
    let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let triplets = (0..count)
        .map(|k| {
            let o = 16 + 24 * k;
            Triplet {
                anchor: u(o),
                positive: u(o + 8),
                negative: u(o + 16),
            }
        })
        .collect();
    Ok(TripletSet {
        triplets,
        rule: SelectionRule::Unknown,
    })
}
