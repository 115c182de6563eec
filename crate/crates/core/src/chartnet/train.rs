use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{batch_loss_grad, Mlp, Workspace};
use super::{ChartNetError, ChartingNetwork, NetworkConfig, Result, Standardizer};
use crate::features::FeatureMatrix;
use crate::triplets::TripletSet;

/// Mini-batch Adam training of the triplet network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Triplet-loss margin.
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Seed for the per-epoch triplet shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 1e-3,
            batch_size: 512,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ChartNetError::InvalidTrainConfig(m.to_string()));
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment decay rates must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: ChartingNetwork,
    /// Mean triplet loss of every epoch.
    pub loss_history: Vec<f64>,
}

struct Adam {
    first: Mlp<f32>,
    second: Mlp<f32>,
    step: i32,
}

impl Adam {
    fn new(dims: &[usize]) -> Self {
        Self {
            first: Mlp::zeros(dims),
            second: Mlp::zeros(dims),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut Mlp<f32>, grads: &Mlp<f32>, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let lr = cfg.learning_rate as f32;
        let eps = cfg.adam_epsilon as f32;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().zip(self.second.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Trains a charting network on `triplets` over the rows of `features`.
///
/// Inputs are standardized with the column statistics of `features`, which
/// are stored in the returned network. Each epoch visits every triplet once
/// in a seeded shuffled order. The result is a deterministic function of the
/// inputs and both seeds.
pub fn train(
    features: &FeatureMatrix,
    triplets: &TripletSet,
    net_config: &NetworkConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    net_config.validate()?;
    config.validate()?;
    if features.dim() != net_config.input_dim {
        return Err(ChartNetError::DimensionMismatch {
            expected: net_config.input_dim,
            found: features.dim(),
        });
    }
    let rows = features.rows();
    if let Some(index) = triplets.max_index().filter(|&m| m >= rows) {
        return Err(ChartNetError::TripletOutOfRange { index, rows });
    }

    let standardizer = Standardizer::fit(features);
    let init = ChartingNetwork::new(net_config)?;
    let mut mlp = init.mlp.clone();
    let mut history = Vec::with_capacity(config.epochs);
    if config.epochs == 0 || triplets.is_empty() {
        return Ok(TrainOutcome {
            network: ChartingNetwork::from_parts(mlp, standardizer)?,
            loss_history: history,
        });
    }

    let inputs = standardizer.apply_matrix(features);
    let dims = net_config.dims();
    let batch = config.batch_size.min(triplets.len());
    let max_rows = (3 * batch).min(rows);
    let mut ws = Workspace::new(&mlp, max_rows);
    let mut grads = Mlp::zeros(&dims);
    let mut adam = Adam::new(&dims);
    let mut gathered = Array2::<f32>::zeros((max_rows, features.dim()));
    let mut slot = vec![u32::MAX; rows];
    let mut members: Vec<usize> = Vec::with_capacity(max_rows);
    let mut local: Vec<[usize; 3]> = Vec::with_capacity(batch);
    let margin = config.margin as f32;

    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        for (b, chunk) in order.chunks(batch).enumerate() {
            members.clear();
            local.clear();
            for &k in chunk {
                let t = triplets.triplets[k];
                let mut map = |n: usize| {
                    if slot[n] == u32::MAX {
                        slot[n] = members.len() as u32;
                        members.push(n);
                    }
                    slot[n] as usize
                };
                local.push([map(t.anchor), map(t.positive), map(t.negative)]);
            }
            for (r, &n) in members.iter().enumerate() {
                gathered.row_mut(r).assign(&inputs.row(n));
            }
            let view = gathered.slice(s![..members.len(), ..]);
            let loss = batch_loss_grad(&mlp, view, &local, margin, &mut ws, &mut grads);
            for &n in &members {
                slot[n] = u32::MAX;
            }
            if !loss.is_finite() || !grads.all_finite() {
                return Err(ChartNetError::Diverged { epoch, batch: b });
            }
            epoch_loss += loss as f64;
            adam.update(&mut mlp, &grads, config);
        }
        history.push(epoch_loss / triplets.len() as f64);
    }

    Ok(TrainOutcome {
        network: ChartingNetwork::from_parts(mlp, standardizer)?,
        loss_history: history,
    })
}
