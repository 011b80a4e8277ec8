//! Background trajectory identification for moving-camera video.
//!
//! Feature trajectories are grouped into overlapping clips, rigid-motion
//! candidates are proposed per clip with cell-grid RANSAC over epipolar
//! geometry, and the dominant motion path through the clip sequence is
//! found by dynamic programming. The trajectories that follow that path are
//! the static background.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod clips;
pub mod config;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod labeling;
pub mod metrics;
pub mod overlay;
pub mod pipeline;
pub mod spatial;
pub mod synth;
pub mod traj;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, Flag, PipelineOutput};
pub use traj::{FrameRange, Trajectory, VideoMeta, Visibility};
