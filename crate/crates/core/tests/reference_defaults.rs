//! Defaults that reproduce the published reference setup.

use chartkit::dataset::SynthConfig;
use chartkit::metrics::default_k;
use chartkit::pipeline::TripletRuleConfig;
use chartkit::triplets::{GenieSelectionConfig, SimTripletConfig, TimeSelectionConfig, TrajectorySimConfig};
use chartkit::FeatureConfig;

#[test]
fn feature_path_loss_exponent_is_eight() {
    assert_eq!(FeatureConfig::default().sigma, 8.0);
}

#[test]
fn neighborhood_is_five_percent_of_the_points() {
    assert_eq!(default_k(13_496), 674);
    assert_eq!(default_k(2000), 100);
}

#[test]
fn triplet_defaults_match_the_reference_setup() {
    assert_eq!(GenieSelectionConfig::default().d_c, 1.5);
    assert_eq!(GenieSelectionConfig::default().count, 1_200_000);
    assert_eq!(TimeSelectionConfig::default().t_c, 1.5);
    assert_eq!(SimTripletConfig::default().t_c, 1.5);
    assert_eq!(TrajectorySimConfig::default().speed, 1.0);
    assert_eq!(TrajectorySimConfig::default().count, 30_000);
    assert_eq!(TripletRuleConfig::genie(1.5, 1_200_000), TripletRuleConfig::Genie { d_c: 1.5, count: 1_200_000 });
}

#[test]
fn synthetic_radio_parameters_match_the_sounder() {
    let config = SynthConfig::distributed_square(10, 4, 10.0, 0);
    assert_eq!(config.carrier_frequency, 1.272e9);
    // 50 MHz spread over 1024 subcarriers.
    assert_eq!(config.subcarrier_spacing * 1024.0, 50e6);
}
