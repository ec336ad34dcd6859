//! Multi-frame image de-fencing.
//!
//! The crate splits the problem into three stages that communicate through
//! plain rasters:
//!
//! * [`fenceseg`] finds fence pixels in a single frame (sliding-window texel
//!   joint detection, lattice linking, scribble-driven alpha matting).
//! * [`occflow`] estimates coarse-to-fine optical flow with the data term
//!   switched off under known occlusions.
//! * [`fusion`] inverts the masked-warp degradation model with FISTA and an
//!   l1 prior to recover the background.
//!
//! [`synthbench`] renders synthetic fenced sequences with exact ground truth
//! and scores every stage. All numeric code is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the common instantiations.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fenceseg;
pub mod fusion;
pub mod imgcore;
pub mod linalg;
pub mod occflow;
pub mod scalar;
pub mod synthbench;

pub use error::{DefenceError, Result};
pub use imgcore::{BinaryMask, FlowField, Image};
pub use scalar::Scalar;

pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Flow32 = FlowField<f32>;
pub type Flow64 = FlowField<f64>;
