//! Coverage path planning and kinematic simulation for laser treatment of a
//! facial point cloud.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod kdtree;
pub mod pathplan;
pub mod registration;
pub mod segmentation;
pub mod simulator;
pub mod svg;

pub use error::{Error, Result};
