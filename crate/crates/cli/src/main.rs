//! `chartkit` command-line interface.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or configuration, 3 when
//! a pipeline stage fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chartkit::chartnet::{self, NetworkConfig, TrainConfig};
use chartkit::dataset::{self, ReducedDataset, SubcarrierWindow, SynthConfig};
use chartkit::features::{self, FeatureConfig};
use chartkit::metrics::{EvaluateOptions, StressNormalization};
use chartkit::pipeline::{
    self, emit_plot, emit_truth_plot, ChartResult, DatasetSection, PipelineError, RunConfig, StageSeeds, TransferConfig,
};
use chartkit::triplets::{self, TripletSet};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chartkit", version, about = "Triplet-based channel charting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic line-of-sight CSI dataset.
    Synth(SynthArgs),
    /// Compute scaled-R2M features of a dataset.
    Featurize(FeaturizeArgs),
    /// Draw training triplets.
    Triplets(TripletArgs),
    /// Train a charting network on features and triplets.
    Train(TrainArgs),
    /// Chart a dataset with trained weights.
    Chart(ChartArgs),
    /// Score a chart against ground truth.
    Eval(EvalArgs),
    /// Run the whole pipeline from a TOML run configuration.
    Run(RunArgs),
    /// Repeat a genie-rule run for several d_c values.
    SweepDc(SweepArgs),
    /// Repeat a simulated-trajectory run for several trajectory counts r.
    SweepR(SweepArgs),
    /// Chart and score a dataset with an already trained network.
    Transfer(TransferArgs),
    /// Draw a stored chart and its ground truth as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// CCDS dataset file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// TOML synthetic-dataset configuration.
    #[arg(long)]
    synth_config: Option<PathBuf>,
}

#[derive(Args)]
struct WindowArgs {
    /// First subcarrier to average; the centered 8-subcarrier band by default.
    #[arg(long, requires = "window_count")]
    window_start: Option<usize>,
    #[arg(long, requires = "window_start")]
    window_count: Option<usize>,
}

impl WindowArgs {
    fn window(&self) -> Option<SubcarrierWindow> {
        Some(SubcarrierWindow {
            start: self.window_start?,
            count: self.window_count?,
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    /// TOML synthetic-dataset configuration; otherwise a square layout.
    #[arg(long, conflicts_with_all = ["n", "antennas", "side"])]
    synth_config: Option<PathBuf>,
    /// Datapoints.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    antennas: usize,
    /// Side of the square area, meters.
    #[arg(long, default_value_t = 10.0)]
    side: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generator configuration as TOML.
    #[arg(long)]
    emit_config: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Time,
    Genie,
    Simtraj,
}

#[derive(Args)]
struct TripletArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum)]
    rule: Rule,
    /// Time threshold, seconds (time and simtraj rules).
    #[arg(long, default_value_t = 1.5)]
    tc: f64,
    /// Distance threshold, meters (genie rule).
    #[arg(long, default_value_t = 1.5)]
    dc: f64,
    /// Number of simulated trajectories (simtraj rule).
    #[arg(long, default_value_t = 30_000)]
    r: usize,
    #[arg(long, default_value_t = 1_200_000)]
    count: usize,
    /// Run seed; the triplet stage uses the same derived seed as `run`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    triplets: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Run seed; initialization and shuffling use the same derived seeds as `run`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "512,256,128,64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChartArgs {
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    /// Chart CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalization {
    GroundTruth,
    ScaledChart,
}

#[derive(Args)]
struct EvalArgs {
    /// Chart CSV.
    #[arg(long)]
    chart: PathBuf,
    /// CCDS dataset holding the ground truth.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighborhood size; floor(0.05 N) by default.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "ground-truth")]
    stress_normalization: Normalization,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parameter values; the reference grid when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Chart CSV.
    #[arg(long)]
    chart: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also draw the ground truth with the same coloring.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn stage_error(stage: &str, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: format!("{stage} stage failed: {e}"),
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn existing(path: &Path) -> CliResult<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(config_error(format!("{} does not exist", path.display())))
    }
}

fn read_synth_config(path: &Path) -> CliResult<SynthConfig> {
    let text = std::fs::read_to_string(existing(path)?).map_err(config_error)?;
    toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn dataset_section(source: &Source, window: &WindowArgs) -> CliResult<DatasetSection> {
    let mut section = match (&source.dataset, &source.synth_config) {
        (Some(path), _) => DatasetSection::from_path(existing(path)?),
        (None, Some(path)) => DatasetSection::from_synth(read_synth_config(path)?),
        (None, None) => return Err(config_error("one of --dataset or --synth-config is required")),
    };
    section.window = window.window();
    Ok(section)
}

fn reduce(section: &DatasetSection) -> CliResult<ReducedDataset> {
    if let Some(synth) = &section.synth {
        let ds = dataset::synthesize_los_dataset(synth).map_err(|e| stage_error("load", e))?;
        let window = section
            .window
            .unwrap_or_else(|| SubcarrierWindow::center8(ds.subcarrier_count()));
        return dataset::subcarrier_average(&ds, window).map_err(|e| stage_error("subcarrier_average", e));
    }
    let path = section.path.as_ref().expect("dataset section has a source");
    let window = match section.window {
        Some(w) => w,
        None => SubcarrierWindow::center8(
            dataset::read_container_info(path)
                .map_err(|e| stage_error("load", e))?
                .subcarrier_count,
        ),
    };
    dataset::load_reduced(path, window).map_err(|e| stage_error("load", e))
}

fn feature_config(sigma: f64) -> CliResult<FeatureConfig> {
    FeatureConfig::new(sigma).map_err(config_error)
}

fn synth(args: SynthArgs) -> CliResult {
    let config = match &args.synth_config {
        Some(path) => read_synth_config(path)?,
        None => SynthConfig::distributed_square(args.n, args.antennas, args.side, args.seed),
    };
    let ds = dataset::synthesize_los_dataset(&config).map_err(config_error)?;
    dataset::save_container(&ds, &args.out).map_err(|e| stage_error("persist", e))?;
    if let Some(path) = &args.emit_config {
        let text = toml::to_string(&config).map_err(config_error)?;
        std::fs::write(path, text).map_err(|e| stage_error("persist", e))?;
    }
    Ok(())
}

fn featurize(args: FeaturizeArgs) -> CliResult {
    let config = feature_config(args.sigma)?;
    let reduced = reduce(&dataset_section(&args.source, &args.window)?)?;
    let feats = features::featurize_dataset(&reduced, &config).map_err(|e| stage_error("featurize", e))?;
    features::save_features(&feats, &args.out).map_err(|e| stage_error("persist", e))
}

fn select_triplets(args: TripletArgs) -> CliResult {
    let rule = match args.rule {
        Rule::Time => pipeline::TripletRuleConfig::time(args.tc, args.count),
        Rule::Genie => pipeline::TripletRuleConfig::genie(args.dc, args.count),
        Rule::Simtraj => pipeline::TripletRuleConfig::simtraj(args.r, args.tc, args.count),
    };
    let labels = reduce(&dataset_section(&args.source, &WindowArgs {
        window_start: Some(0),
        window_count: Some(1),
    })?)?
    .labels()
    .clone();
    let seeds = StageSeeds::derive(args.seed);
    let set: TripletSet = match rule {
        pipeline::TripletRuleConfig::Time { t_c, count } => triplets::select_time_based(
            &labels,
            &triplets::TimeSelectionConfig {
                t_c,
                count,
                seed: seeds.triplets,
            },
        ),
        pipeline::TripletRuleConfig::Genie { d_c, count } => triplets::select_genie(
            &labels,
            &triplets::GenieSelectionConfig {
                d_c,
                count,
                seed: seeds.triplets,
            },
        ),
        pipeline::TripletRuleConfig::Simtraj { t_c, count, r, .. } => triplets::simulate_trajectories(
            &labels,
            &triplets::TrajectorySimConfig {
                count: r,
                seed: seeds.trajectories,
                ..Default::default()
            },
        )
        .and_then(|trajectories| {
            triplets::select_sim_trajectory_triplets(
                &trajectories,
                &triplets::SimTripletConfig {
                    t_c,
                    count,
                    seed: seeds.triplets,
                    ..Default::default()
                },
            )
        }),
    }
    .map_err(|e| match e {
        triplets::TripletError::InvalidConfig(m) => config_error(m),
        e => stage_error("triplets", e),
    })?;
    triplets::save_triplets(&set, &args.out).map_err(|e| stage_error("persist", e))
}

fn train(args: TrainArgs) -> CliResult {
    let feats = features::load_features(existing(&args.features)?).map_err(|e| stage_error("load", e))?;
    let set = triplets::load_triplets(existing(&args.triplets)?).map_err(|e| stage_error("load", e))?;
    let seeds = StageSeeds::derive(args.seed);
    let net = NetworkConfig::new(feats.dim())
        .with_hidden(args.hidden)
        .with_seed(seeds.network);
    let config = TrainConfig {
        margin: args.margin,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: seeds.training,
        ..Default::default()
    };
    net.validate().map_err(config_error)?;
    config.validate().map_err(config_error)?;
    let outcome = chartnet::train(&feats, &set, &net, &config).map_err(|e| stage_error("train", e))?;
    chartnet::save_weights(&outcome.network, &args.out).map_err(|e| stage_error("persist", e))?;
    if let Some(last) = outcome.loss_history.last() {
        eprintln!("final epoch loss {last}");
    }
    Ok(())
}

fn chart(args: ChartArgs) -> CliResult {
    let config = feature_config(args.sigma)?;
    let network = chartnet::load_weights(existing(&args.weights)?).map_err(|e| stage_error("load", e))?;
    let reduced = reduce(&dataset_section(&args.source, &args.window)?)?;
    let feats = features::featurize_dataset(&reduced, &config).map_err(|e| stage_error("featurize", e))?;
    let points = network.chart(&feats).map_err(|e| stage_error("chart", e))?;
    ChartResult::from_chart(&points, reduced.labels())
        .write_csv(&args.out)
        .map_err(|e| stage_error("persist", e))
}

fn eval(args: EvalArgs) -> CliResult {
    let options = EvaluateOptions {
        k: args.k,
        subsample: args.subsample,
        seed: args.seed,
        stress_normalization: match args.stress_normalization {
            Normalization::GroundTruth => StressNormalization::GroundTruth,
            Normalization::ScaledChart => StressNormalization::ScaledChart,
        },
    };
    let report = pipeline::evaluate_chart_file(existing(&args.chart)?, existing(&args.truth)?, &options).map_err(
        |e| match e {
            PipelineError::Stage {
                source: pipeline::StageError::Metrics(m),
                ..
            } => config_error(m),
            e => e.into(),
        },
    )?;
    let text = report.to_toml();
    print!("{text}");
    if let Some(path) = &args.out {
        std::fs::write(path, &text).map_err(|e| stage_error("persist", e))?;
    }
    Ok(())
}

fn load_run_config(path: &Path, out: Option<PathBuf>) -> CliResult<RunConfig> {
    let mut config = RunConfig::from_file(existing(path)?)?;
    if let Some(out) = out {
        config.output_dir = out;
    }
    Ok(config)
}

fn run(args: RunArgs) -> CliResult {
    let config = load_run_config(&args.config, args.out)?;
    let (_, report) = pipeline::run_pipeline(&config)?;
    print!("{}", report.to_toml());
    Ok(())
}

/// d_c values of the reference sweep, meters.
const DC_GRID: [f64; 7] = [0.5, 0.8, 1.0, 1.5, 2.0, 2.5, 3.0];
/// Trajectory counts of the reference sweep.
const R_GRID: [usize; 9] = [10, 30, 100, 300, 1000, 2000, 5000, 10_000, 30_000];

fn sweep_dc(args: SweepArgs) -> CliResult {
    let config = load_run_config(&args.config, args.out)?;
    let values = if args.values.is_empty() { DC_GRID.to_vec() } else { args.values };
    let table = pipeline::sweep_dc(&config, &values)?;
    print!("{}", table.to_csv());
    Ok(())
}

fn sweep_r(args: SweepArgs) -> CliResult {
    let config = load_run_config(&args.config, args.out)?;
    let values = if args.values.is_empty() {
        R_GRID.to_vec()
    } else {
        args.values
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(config_error(format!("trajectory count must be a positive integer, got {v}")))
                }
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    let table = pipeline::sweep_r(&config, &values)?;
    print!("{}", table.to_csv());
    Ok(())
}

fn transfer(args: TransferArgs) -> CliResult {
    let mut config = TransferConfig::new(&args.weights, dataset_section(&args.source, &args.window)?, &args.out);
    config.features = feature_config(args.sigma)?;
    config.metrics.subsample = args.subsample;
    config.seed = args.seed;
    let (_, report) = pipeline::transfer_evaluate(&config)?;
    print!("{}", report.to_toml());
    Ok(())
}

fn plot(args: PlotArgs) -> CliResult {
    let result = ChartResult::read_csv(existing(&args.chart)?).map_err(|e| stage_error("load", e))?;
    emit_plot(&result, &args.out).map_err(|e| stage_error("persist", e))?;
    if let Some(path) = &args.truth_out {
        emit_truth_plot(&result, path).map_err(|e| stage_error("persist", e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Featurize(a) => featurize(a),
        Command::Triplets(a) => select_triplets(a),
        Command::Train(a) => train(a),
        Command::Chart(a) => chart(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
        Command::SweepDc(a) => sweep_dc(a),
        Command::SweepR(a) => sweep_r(a),
        Command::Transfer(a) => transfer(a),
        Command::Plot(a) => plot(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
