//! Synthesis of multi-robot collaborative SLAM benchmark datasets from
//! single-robot trials.
//!
//! The pipeline: [`sync`] places trials on a shared clock, [`frontend`] picks
//! keyframes and generates priors, odometry and loop-closure candidates,
//! [`comm`] simulates which keyframe scans reach which teammates, [`noise`]
//! estimates empirical SE(3) noise models and labels outliers, and [`jrl`]
//! serializes the result. [`pipeline`] wires the stages together.

pub mod comm;
pub mod frontend;
pub mod jrl;
pub mod key;
pub mod lie;
pub mod noise;
pub mod pipeline;
pub mod seeds;
pub mod stats;
pub mod synthetic;
pub mod sync;

pub use key::Key;
pub use lie::{Covariance6, Pose3, Tangent6};

/// Embedded in dataset metadata.
pub const GENERATOR_VERSION: &str = concat!("cosmoforge ", env!("CARGO_PKG_VERSION"));
