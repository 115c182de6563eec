//! End-to-end runs, parameter sweeps, transfer evaluation and chart output.
//!
//! A run executes load → subcarrier average → featurize → triplet selection →
//! train → chart → evaluate and writes every artifact to its output
//! directory:
//!
//! | file | content |
//! |------|---------|
//! | `dataset.ccds` | the synthesized dataset (synthetic sources only) |
//! | `features.ccft` | scaled-R2M feature matrix |
//! | `triplets.ccts` | training triplets |
//! | `weights.ccnn` | trained network with input normalization |
//! | `chart.csv` | `index,z1,z2,x1,x2[,x3],timestamp` |
//! | `metrics.toml` | CT, TW, KS, K, N and the metrics seed |
//! | `provenance.toml` | configuration, stage seeds, digests, loss history |
//! | `chart.svg`, `truth.svg` | chart and ground truth with shared coloring |

mod config;
pub mod plot;
mod result;
mod sweep;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{DatasetSection, MetricsSection, NetworkSection, RunConfig, TransferConfig, TripletRuleConfig};
pub use plot::{emit_plot, emit_truth_plot, PlotError};
pub use result::{ChartFileError, ChartResult, ChartRow, Provenance};
pub use sweep::{sweep_dc, sweep_r, sweep_seed, SweepRow, SweepTable};

use crate::chartnet::{self, ChartNetError};
use crate::dataset::{self, DatasetError, ReducedDataset, SubcarrierWindow};
use crate::features::{self, FeatureError};
use crate::metrics::{self, EvaluateOptions, MetricsError, MetricsReport};
use crate::triplets::{self, TripletError, TripletSet};
use crate::{NetworkConfig, TrainConfig};

/// Pipeline stage, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Average,
    Featurize,
    Triplets,
    Train,
    Chart,
    Evaluate,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Load => "load",
            Stage::Average => "subcarrier_average",
            Stage::Featurize => "featurize",
            Stage::Triplets => "triplets",
            Stage::Train => "train",
            Stage::Chart => "chart",
            Stage::Evaluate => "evaluate",
            Stage::Persist => "persist",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Triplets(#[from] TripletError),
    #[error(transparent)]
    Network(#[from] ChartNetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ChartFile(#[from] ChartFileError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration errors, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T, E: Into<StageError>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            source: e.into(),
        })
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes)
        .map_err(|source| StageError::Io {
            path: path.to_path_buf(),
            source,
        })
        .at(Stage::Persist)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|source| StageError::Io {
            path: path.to_path_buf(),
            source,
        })
        .at(Stage::Persist)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Largest seed that survives a TOML round trip.
const SEED_MASK: u64 = i64::MAX as u64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds of the stochastic stages of one run, each derived from the run seed
/// and a fixed per-stage stream number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub run: u64,
    pub triplets: u64,
    pub trajectories: u64,
    pub network: u64,
    pub training: u64,
    pub metrics: u64,
}

impl StageSeeds {
    pub fn derive(run: u64) -> Self {
        let stream = |k: u64| splitmix64(run ^ splitmix64(k)) & SEED_MASK;
        Self {
            run,
            triplets: stream(1),
            trajectories: stream(2),
            network: stream(3),
            training: stream(4),
            metrics: stream(5),
        }
    }
}

/// Loads or synthesizes the dataset and reduces it to one coefficient per
/// antenna. Synthetic datasets are also written to `persist_to` when given.
fn load_source(section: &DatasetSection, persist_to: Option<&Path>) -> Result<(ReducedDataset, String)> {
    if let Some(synth) = &section.synth {
        let ds = dataset::synthesize_los_dataset(synth).at(Stage::Load)?;
        if let Some(path) = persist_to {
            dataset::save_container(&ds, path).at(Stage::Persist)?;
        }
        let window = section
            .window
            .unwrap_or_else(|| SubcarrierWindow::center8(ds.subcarrier_count()));
        let reduced = dataset::subcarrier_average(&ds, window).at(Stage::Average)?;
        return Ok((reduced, format!("synthetic:{}", synth.name)));
    }
    let path = section
        .path
        .as_ref()
        .ok_or_else(|| PipelineError::Config("dataset source missing".into()))?;
    let window = match section.window {
        Some(w) => w,
        None => SubcarrierWindow::center8(dataset::read_container_info(path).at(Stage::Load)?.subcarrier_count),
    };
    let reduced = dataset::load_reduced(path, window).at(Stage::Load)?;
    Ok((reduced, path.display().to_string()))
}

fn positions(labels: &dataset::Labels) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_vec((labels.len(), labels.position_dim()), labels.positions().to_vec())
        .expect("labels are rectangular")
}

fn select_triplets(rule: &TripletRuleConfig, labels: &dataset::Labels, seeds: &StageSeeds) -> Result<TripletSet> {
    match *rule {
        TripletRuleConfig::Time { t_c, count } => triplets::select_time_based(
            labels,
            &triplets::TimeSelectionConfig {
                t_c,
                count,
                seed: seeds.triplets,
            },
        ),
        TripletRuleConfig::Genie { d_c, count } => triplets::select_genie(
            labels,
            &triplets::GenieSelectionConfig {
                d_c,
                count,
                seed: seeds.triplets,
            },
        ),
        TripletRuleConfig::Simtraj {
            t_c,
            count,
            r,
            speed,
            corridor,
            max_attempts,
            max_retries,
        } => triplets::simulate_trajectories(
            labels,
            &triplets::TrajectorySimConfig {
                count: r,
                speed,
                corridor,
                seed: seeds.trajectories,
                max_attempts,
            },
        )
        .and_then(|trajectories| {
            triplets::select_sim_trajectory_triplets(
                &trajectories,
                &triplets::SimTripletConfig {
                    t_c,
                    count,
                    seed: seeds.triplets,
                    max_retries,
                },
            )
        }),
    }
    .at(Stage::Triplets)
}

fn evaluate_and_persist(
    result: &ChartResult,
    section: &MetricsSection,
    seed: u64,
    dir: &Path,
) -> Result<MetricsReport> {
    let options = EvaluateOptions {
        k: section.k,
        subsample: section.subsample,
        seed,
        stress_normalization: section.stress_normalization,
    };
    let report = metrics::evaluate(result.truth_matrix().view(), result.chart_matrix().view(), &options).at(Stage::Evaluate)?;
    result.write_csv(dir.join("chart.csv")).at(Stage::Persist)?;
    write_file(&dir.join("metrics.toml"), report.to_toml())?;
    if let Some(provenance) = &result.provenance {
        write_file(&dir.join("provenance.toml"), provenance.to_toml())?;
    }
    emit_plot(result, dir.join("chart.svg")).at(Stage::Persist)?;
    emit_truth_plot(result, dir.join("truth.svg")).at(Stage::Persist)?;
    Ok(report)
}

/// Runs the full pipeline described by `config` and persists every artifact
/// to `config.output_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<(ChartResult, MetricsReport)> {
    config.validate()?;
    let seeds = StageSeeds::derive(config.seed);
    let dir = &config.output_dir;
    create_dir(dir)?;

    let (reduced, dataset_name) = load_source(&config.dataset, Some(&dir.join("dataset.ccds")))?;
    let feats = features::featurize_dataset(&reduced, &config.features).at(Stage::Featurize)?;
    features::save_features(&feats, dir.join("features.ccft")).at(Stage::Persist)?;

    let triplet_set = select_triplets(&config.triplets, reduced.labels(), &seeds)?;
    triplets::save_triplets(&triplet_set, dir.join("triplets.ccts")).at(Stage::Persist)?;

    let net_config = NetworkConfig::new(feats.dim())
        .with_hidden(config.network.hidden.clone())
        .with_seed(seeds.network);
    let train_config = TrainConfig {
        seed: seeds.training,
        ..config.training.clone()
    };
    let outcome = chartnet::train(&feats, &triplet_set, &net_config, &train_config).at(Stage::Train)?;
    let weights = chartnet::weights_bytes(&outcome.network);
    write_file(&dir.join("weights.ccnn"), &weights)?;

    let chart = outcome.network.chart(&feats).at(Stage::Chart)?;
    let mut result = ChartResult::from_chart(&chart, reduced.labels());
    result.provenance = Some(Provenance::new(
        config.to_toml(),
        &weights,
        dataset_name,
        Some(seeds),
        outcome.loss_history.iter().map(|&l| l as f64).collect(),
    ));
    let report = evaluate_and_persist(&result, &config.metrics, seeds.metrics, dir)?;
    Ok((result, report))
}

/// Charts a dataset with an already trained network, without training, and
/// persists chart, metrics and plots to `config.output_dir`.
pub fn transfer_evaluate(config: &TransferConfig) -> Result<(ChartResult, MetricsReport)> {
    config.validate()?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let network = chartnet::load_weights(&config.weights).at(Stage::Load)?;
    let (reduced, dataset_name) = load_source(&config.dataset, None)?;
    let feats = features::featurize_dataset(&reduced, &config.features).at(Stage::Featurize)?;
    let chart = network.chart(&feats).at(Stage::Chart)?;
    let mut result = ChartResult::from_chart(&chart, reduced.labels());
    result.provenance = Some(Provenance::new(
        config.to_toml(),
        &chartnet::weights_bytes(&network),
        dataset_name,
        None,
        Vec::new(),
    ));
    let report = evaluate_and_persist(&result, &config.metrics, config.seed, dir)?;
    Ok((result, report))
}

/// Evaluates a stored chart against the ground truth of a `CCDS` dataset.
/// Each chart row is matched to the datapoint with its `index`.
pub fn evaluate_chart_file(
    chart: impl AsRef<Path>,
    truth: impl AsRef<Path>,
    options: &EvaluateOptions,
) -> Result<MetricsReport> {
    let result = ChartResult::read_csv(chart).at(Stage::Load)?;
    let labels = dataset::load_reduced(truth, SubcarrierWindow { start: 0, count: 1 })
        .at(Stage::Load)?
        .labels()
        .clone();
    if let Some(row) = result.rows.iter().find(|r| r.index >= labels.len()) {
        return Err(PipelineError::Config(format!(
            "chart row index {} exceeds the {} datapoints of the truth dataset",
            row.index,
            labels.len()
        )));
    }
    let truth = positions(&labels).select(ndarray::Axis(0), &result.rows.iter().map(|r| r.index).collect::<Vec<_>>());
    metrics::evaluate(truth.view(), result.chart_matrix().view(), options).at(Stage::Evaluate)
}
