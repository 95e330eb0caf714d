//! Multi-object tracking by detection with interaction-aware short-term
//! motion prediction and learned long-range re-identification of lost
//! tracklets.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: boxes, offsets, IoU.
//! - [`trackstore`]: tracklet lifecycle (alive, lost, dead) and histories.
//! - [`nnet`]: the differentiable compute core used by both learned modules.
//! - [`interaction`]: directed interaction matrix and offset prediction.
//! - [`refind`]: correlation scoring between lost tracklets and detections,
//!   greedy matching and occlusion-gap compensation.
//! - [`assign`] and [`kalman`]: optimal assignment and the constant-velocity
//!   Kalman filter baseline.
//! - [`tracker`]: per-frame orchestration.
//! - [`training`]: losses, sample construction and training loops.
//! - [`datagen`]: a seeded crowd simulator with scripted occlusions.
//! - [`evalio`]: MOTChallenge files, CLEAR/IDF1 metrics and config files.
//! - [`pipeline`]: simulated corpora, default training and scene scoring.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod datagen;
pub mod error;
pub mod evalio;
pub mod geometry;
pub mod interaction;
pub mod kalman;
pub mod nnet;
pub mod pipeline;
pub mod refind;
pub mod tracker;
pub mod trackstore;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{apply_offset, iou, offset_between, BBox, Detection, Offset};
