use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::dataset::{SubcarrierWindow, SynthConfig};
use crate::features::FeatureConfig;
use crate::metrics::StressNormalization;
use crate::{NetworkConfig, TrainConfig};

/// Where a run's CSI comes from: a `CCDS` container or a synthetic
/// line-of-sight generator. Exactly one must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    /// Subcarrier window to average over; the centered 8-subcarrier band when
    /// unset.
    pub window: Option<SubcarrierWindow>,
}

impl DatasetSection {
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            ..Default::default()
        }
    }

    pub fn from_synth(synth: SynthConfig) -> Self {
        Self {
            synth: Some(synth),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        match (&self.path, &self.synth) {
            (Some(_), Some(_)) => Err(PipelineError::Config("dataset: give either `path` or `synth`, not both".into())),
            (None, None) => Err(PipelineError::Config("dataset: one of `path` or `synth` is required".into())),
            (Some(p), None) if !p.is_file() => Err(PipelineError::Config(format!("dataset file {} does not exist", p.display()))),
            _ => Ok(()),
        }
    }
}

fn default_count() -> usize {
    1_200_000
}

fn default_threshold() -> f64 {
    1.5
}

fn default_speed() -> f64 {
    1.0
}

fn default_corridor() -> f64 {
    0.25
}

fn default_budget() -> usize {
    1000
}

/// Triplet rule and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum TripletRuleConfig {
    Time {
        /// seconds
        #[serde(default = "default_threshold")]
        t_c: f64,
        #[serde(default = "default_count")]
        count: usize,
    },
    Genie {
        /// meters
        #[serde(default = "default_threshold")]
        d_c: f64,
        #[serde(default = "default_count")]
        count: usize,
    },
    Simtraj {
        #[serde(default = "default_threshold")]
        t_c: f64,
        #[serde(default = "default_count")]
        count: usize,
        /// Number of simulated trajectories.
        r: usize,
        #[serde(default = "default_speed")]
        speed: f64,
        #[serde(default = "default_corridor")]
        corridor: f64,
        #[serde(default = "default_budget")]
        max_attempts: usize,
        #[serde(default = "default_budget")]
        max_retries: usize,
    },
}

impl TripletRuleConfig {
    pub fn genie(d_c: f64, count: usize) -> Self {
        Self::Genie { d_c, count }
    }

    pub fn time(t_c: f64, count: usize) -> Self {
        Self::Time { t_c, count }
    }

    pub fn simtraj(r: usize, t_c: f64, count: usize) -> Self {
        Self::Simtraj {
            t_c,
            count,
            r,
            speed: default_speed(),
            corridor: default_corridor(),
            max_attempts: default_budget(),
            max_retries: default_budget(),
        }
    }

    pub fn count(&self) -> usize {
        match *self {
            Self::Time { count, .. } | Self::Genie { count, .. } | Self::Simtraj { count, .. } => count,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("triplets: {name} must be positive, got {v}")))
            }
        };
        if self.count() == 0 {
            return Err(PipelineError::Config("triplets: count must be at least 1".into()));
        }
        match *self {
            Self::Time { t_c, .. } => positive("t_c", t_c),
            Self::Genie { d_c, .. } => positive("d_c", d_c),
            Self::Simtraj {
                t_c, r, speed, corridor, ..
            } => {
                positive("t_c", t_c)?;
                positive("speed", speed)?;
                if !(corridor >= 0.0) {
                    return Err(PipelineError::Config("triplets: corridor must be nonnegative".into()));
                }
                if r < 2 {
                    return Err(PipelineError::Config(format!("triplets: r must be at least 2, got {r}")));
                }
                Ok(())
            }
        }
    }
}

/// Hidden layer widths; the input width follows from the features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            hidden: NetworkConfig::new(1).hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub k: Option<usize>,
    pub subsample: Option<usize>,
    pub stress_normalization: StressNormalization,
}

/// One end-to-end run. Every stochastic stage draws its seed from `seed`
/// (see [`StageSeeds`]); the synthetic generator carries its own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub features: FeatureConfig,
    pub triplets: TripletRuleConfig,
    #[serde(default)]
    pub network: NetworkSection,
    /// `training.seed` must stay unset; the shuffle seed is derived.
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub metrics: MetricsSection,
}

impl RunConfig {
    pub fn new(dataset: DatasetSection, triplets: TripletRuleConfig, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            output_dir: output_dir.into(),
            dataset,
            features: FeatureConfig::default(),
            triplets,
            network: NetworkSection::default(),
            training: TrainConfig::default(),
            metrics: MetricsSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let config = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.dataset.validate()?;
        self.features.validate().map_err(|e| config(&e))?;
        self.triplets.validate()?;
        NetworkConfig::new(1)
            .with_hidden(self.network.hidden.clone())
            .validate()
            .map_err(|e| config(&e))?;
        self.training.validate().map_err(|e| config(&e))?;
        if self.training.seed != 0 {
            return Err(PipelineError::Config(
                "training.seed is derived from the run seed; set `seed` instead".into(),
            ));
        }
        if self.metrics.k == Some(0) || self.metrics.subsample == Some(0) {
            return Err(PipelineError::Config("metrics: k and subsample must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluation of a trained network on another dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// `CCNN` weights of the trained network.
    pub weights: PathBuf,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    /// Must match the features the network was trained on.
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub seed: u64,
}

impl TransferConfig {
    pub fn new(weights: impl Into<PathBuf>, dataset: DatasetSection, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            weights: weights.into(),
            output_dir: output_dir.into(),
            dataset,
            features: FeatureConfig::default(),
            metrics: MetricsSection::default(),
            seed: 0,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("transfer config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.features
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !self.weights.is_file() {
            return Err(PipelineError::Config(format!(
                "weights file {} does not exist",
                self.weights.display()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GENIE: &str = r#"
seed = 7
output_dir = "out"

[dataset.synth]
n = 100
antennas = [[0.0, 0.0, 2.0], [5.0, 0.0, 2.0]]
area = { x_min = 0.0, x_max = 4.0, y_min = 0.0, y_max = 4.0 }
carrier_frequency = 1.272e9
subcarrier_spacing = 48828.125
subcarrier_count = 16
path_loss_exponent = 2.0
trajectory = { style = "meander", row_spacing = 0.5 }
speed = 0.5
sample_interval = 0.2
seed = 3

[triplets]
rule = "genie"
d_c = 1.0
count = 1000

[training]
epochs = 2
"#;

    #[test]
    fn parses_and_round_trips() {
        let config = RunConfig::from_toml_str(GENIE).unwrap();
        assert_eq!(config.triplets, TripletRuleConfig::genie(1.0, 1000));
        assert_eq!(config.training.epochs, 2);
        assert_eq!(config.network, NetworkSection::default());
        assert_eq!(RunConfig::from_toml_str(&config.to_toml()).unwrap(), config);
    }

    #[test]
    fn rule_defaults_fill_in() {
        let text = GENIE.replace("rule = \"genie\"\nd_c = 1.0\ncount = 1000", "rule = \"simtraj\"\nr = 50");
        let config = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(config.triplets, TripletRuleConfig::simtraj(50, 1.5, 1_200_000));
    }

    #[test]
    fn rejects_invalid_configs() {
        let cases = [
            GENIE.replace("rule = \"genie\"", "rule = \"nearest\""),
            GENIE.replace("d_c = 1.0", "d_c = 1.0\nt_c = 2.0"),
            GENIE.replace("d_c = 1.0", "d_c = -1.0"),
            GENIE.replace("epochs = 2", "epochs = 2\nseed = 4"),
            GENIE.replace("[dataset.synth]", "[dataset]\npath = \"/nonexistent.ccds\"\n[dataset.synth]"),
            GENIE.replace("[dataset.synth]", "[dataset]\npath = \"/nonexistent.ccds\"\n[unused]"),
        ];
        for text in cases {
            assert!(
                matches!(RunConfig::from_toml_str(&text), Err(PipelineError::Config(_))),
                "accepted:\n{text}"
            );
        }
    }
}
