//! Motor babbling to reaching.
//!
//! Babbling trajectories of a simulated arm are compressed by an autoencoder,
//! quantized onto a sparse map of radial-basis neurons, and linked into
//! trajectory bundles. Reaching is planned by spreading activation backward
//! from a goal neuron and executed by a competition between goal-driven
//! activation and forward synapses.

pub mod arm;
pub mod babble;
pub mod bundles;
pub mod codec;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod neural_map;
pub mod planner;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ArmConfig = arm::ArmConfig<f64>;
pub type JointState = arm::JointState<f64>;
pub type ArcSpec = arm::ArcSpec<f64>;
pub type Trajectory = babble::Trajectory<f64>;
pub type BabbleProtocol = babble::BabbleProtocol<f64>;
pub type Dataset = babble::Dataset<f64>;
pub type Autoencoder = codec::Autoencoder<f64>;
pub type NormStats = codec::NormStats<f64>;
pub type TrainHyper = codec::TrainHyper<f64>;
pub type ReducedPoint = codec::ReducedPoint<f64>;
pub type NeuralMap = neural_map::NeuralMap<f64>;
pub type BundleConfig = bundles::BundleConfig<f64>;
pub type PlannerConfig = planner::PlannerConfig<f64>;
pub type PlanResult = planner::PlanResult<f64>;
pub type MetricReport = metrics::MetricReport<f64>;
