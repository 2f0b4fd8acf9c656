//! Experiment driver: configuration, Monte Carlo runs, aggregation, output.

pub mod aggregate;
pub mod config;
pub mod experiment;
pub mod output;
pub mod ratio;
pub mod verify;

pub use aggregate::{aggregate_series, MetricSeries, RunSeries, WINDOW};
pub use config::{ExperimentConfig, InitialSpec, ObjectiveSpec, TopologySpec};
pub use experiment::{run_averaging, run_experiment, run_experiment_with, run_key, ExperimentOutput};
pub use ratio::{ratio_study, RatioRow};
pub use verify::{verification_campaign, CampaignReport};
