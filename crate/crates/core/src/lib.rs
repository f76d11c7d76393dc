//! Multi-camera multi-person 3D tracking.
//!
//! Per-camera 2D tracklets are cropped into overlapping sliding windows,
//! associated across views with a box-normalized epipolar distance and a
//! propagating complete-linkage clustering, triangulated with a
//! multi-frame majority vote, and linked across windows into long-term
//! 3D trajectories.

pub mod assignment;
pub mod assoc;
pub mod bench;
pub mod cmmt;
pub mod config;
pub mod geometry;
pub mod io;
pub mod linker;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod svtrack;
pub mod windows;

pub use assoc::AssocMode;
pub use cmmt::{Position3D, Tracklet3D};
pub use config::PipelineConfig;
pub use geometry::{CameraId, CameraModel, Frame, Observation2D, Rig};
pub use metrics::{MotReport, TrajectorySet};
pub use svtrack::Tracklet2D;
