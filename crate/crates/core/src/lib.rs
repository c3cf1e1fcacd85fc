//! Direction-of-arrival estimation and tracking for uniform linear arrays
//! using sparse Bayesian learning with a shifted prior mean, combined with a
//! Kalman filter over the sparse angular signal.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the scenarios and
//! the command-line tool use.

pub mod array_model;
pub mod bcskf;
pub mod error;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod scalar;
pub mod scenarios;
pub mod sparse_bayes;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ArrayGeometry64 = array_model::ArrayGeometry<f64>;
pub type AngularGrid64 = array_model::AngularGrid<f64>;
pub type SolverConfig64 = sparse_bayes::SolverConfig<f64>;
pub type RvmState64 = sparse_bayes::RvmState<f64>;
pub type SparseEstimate64 = sparse_bayes::SparseEstimate<f64>;
pub type TrackState64 = bcskf::TrackState<f64>;
pub type TrackerConfig64 = bcskf::TrackerConfig<f64>;

pub type ArrayGeometry32 = array_model::ArrayGeometry<f32>;
pub type AngularGrid32 = array_model::AngularGrid<f32>;
pub type SolverConfig32 = sparse_bayes::SolverConfig<f32>;
