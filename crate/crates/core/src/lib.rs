//! Geometric and evaluative core of multi-projection 360° optical flow.
//!
//! The crate is organised around a few interchangeable families, each
//! behind a trait and selectable by name at runtime:
//!
//! * [`projection::Projection`]: equirectangular, tri-cylindrical and
//!   cube-padding charts of the viewing sphere.
//! * [`estimate::FlowEstimator`]: classical flow estimators plus a
//!   controllable perturbed-ground-truth estimator.
//! * [`fusion::FusionStrategy`]: per-pixel fusion of two predictions.
//!
//! Everything else ([`synth`], [`metrics`], [`flow`]) is plain functions
//! over immutable data so it can be run row- or pair-parallel.

pub mod config;
pub mod error;
pub mod estimate;
pub mod flow;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod propagate;
pub mod raster;
pub mod sphere;
pub mod synth;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use projection::{Projection, ProjectionSpec};
pub use sphere::{Direction3, SphericalCoord};
