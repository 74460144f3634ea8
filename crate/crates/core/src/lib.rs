//! Pose geometry, multi-object tracking, dataset construction and evaluation
//! metrics for pedestrian behaviour prediction.

pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod seed;
pub mod tracking;

pub use error::{CoreError, Result};
