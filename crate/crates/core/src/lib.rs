//! Occupancy estimation for transit vehicles from passively sniffed Wi-Fi
//! probe requests.
//!
//! The crate covers the whole chain from a normalized capture to an
//! evaluated estimate:
//!
//! * [`mac`] and [`capture`]: MAC address bit logic and the JSON Lines
//!   capture record format.
//! * [`filter`]: the five-step probe-request cleaning procedure.
//! * [`ground_truth`]: manual count forms and per-minute occupancy.
//! * [`features`]: burst detection, per-minute feature vectors and lagged
//!   windows.
//! * [`derandomize`]: density clustering of randomized addresses and
//!   representative-address assignment.
//! * [`classify`]: fuzzy and kernel fuzzy c-means passenger separation.
//! * [`estimators`]: a bagged regression-tree ensemble and a convolutional
//!   recurrent network.
//! * [`metrics`]: error metrics and evaluation reports.
//! * [`simulator`]: a seeded generator of labeled trips.
//! * [`pipeline`]: the end-to-end comparison grid.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type for the common cases.

pub mod capture;
pub mod classify;
pub mod derandomize;
pub mod error;
pub mod estimators;
pub mod features;
pub mod filter;
pub mod ground_truth;
pub mod mac;
pub mod metrics;
pub mod oui;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact occupancy values produced by count-form aggregation.
pub type Occupancy = num_rational::Ratio<i64>;

pub type FuzzyResult64 = classify::FuzzyResult<f64>;
pub type FuzzyResult32 = classify::FuzzyResult<f32>;
pub type Forest64 = estimators::forest::Forest<f64>;
pub type Forest32 = estimators::forest::Forest<f32>;
pub type Network64 = estimators::neural::Network<f64>;
pub type Network32 = estimators::neural::Network<f32>;
pub type TrainedModel64 = estimators::TrainedModel<f64>;
pub type Standardizer64 = estimators::Standardizer<f64>;
pub type EvalReport64 = metrics::EvalReport<f64>;
