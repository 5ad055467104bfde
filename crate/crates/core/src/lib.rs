//! Merge coordination for connected automated vehicles.
//!
//! Two controllers share one simulator: the centralized CBF controller, which
//! solves one joint quadratic program over every vehicle's speed each step
//! without fixing a passing order, and a first-in-first-out benchmark in
//! which each vehicle filters its own acceleration against the vehicles that
//! entered the control zone before it. Runs are scored with distance
//! normalized energy metrics (positive acceleration kinetic energy, braking
//! energy, total energy loss) and flow metrics, and compared over paired
//! Monte Carlo batches.
//!
//! The numeric layers (`geometry`, `barriers`, `qp`, `controllers`,
//! `metrics`) are generic over [`Scalar`]; the simulator, scenario sampler
//! and harness run in `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod barriers;
pub mod config;
pub mod controllers;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod qp;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use config::MonteCarloConfig;
pub use engine::{run, ControllerKind, EngineParams, RunOutcome, SimTrace};
pub use scalar::Scalar;
pub use scenario::{sample_scenario, Scenario};

pub type MergeLayout = geometry::MergeLayout<f64>;
pub type PairGeometry = geometry::PairGeometry<f64>;
pub type BarrierParams = barriers::BarrierParams<f64>;
pub type QpProblem = qp::QpProblem<f64>;
pub type QpSolution = qp::QpSolution<f64>;
pub type ConstraintRow = barriers::ConstraintRow<f64>;
pub type RoadLoad = metrics::RoadLoad<f64>;
pub type CcbfConfig = controllers::CcbfConfig<f64>;
pub type CcbfController = controllers::CcbfController<f64>;
pub type FifoConfig = controllers::FifoConfig<f64>;
pub type FifoController = controllers::FifoController<f64>;
