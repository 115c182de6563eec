//! Triplet-based channel charting.
//!
//! `chartkit` learns two-dimensional channel charts from labeled CSI datasets:
//!
//! * [`dataset`] loads, synthesizes and reduces CSI datasets (`CCDS` files).
//! * [`features`] turns reduced CSI into scaled-R2M feature vectors.
//! * [`triplets`] draws training triplets by time, by ground-truth distance or
//!   along simulated straight-line trajectories.
//! * [`chartnet`] is the forward charting network and its triplet-loss trainer.
//! * [`metrics`] scores charts with continuity, trustworthiness and Kruskal
//!   stress.
//! * [`pipeline`] wires the stages together, runs parameter sweeps and
//!   transfer evaluation, and writes charts and plots.
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

pub mod dataset;
pub mod features;

pub use dataset::{Dataset, Labels, ReducedDataset, SubcarrierWindow};
pub use features::{FeatureConfig, FeatureMatrix, FeatureVector};
pub mod chartnet;
pub mod triplets;

pub use chartnet::{ChartingNetwork, NetworkConfig, TrainConfig};
pub use triplets::{Triplet, TripletSet};
pub mod metrics;

pub use metrics::{EvaluateOptions, MetricsReport};
pub mod pipeline;

pub use pipeline::{run_pipeline, ChartResult, RunConfig};

/// Compiles and runs the code listings of the guide in `book/`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/datasets.md")]
    struct Datasets;
    #[doc = include_str!("../../../book/src/features.md")]
    struct Features;
    #[doc = include_str!("../../../book/src/triplets.md")]
    struct Triplets;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
}
