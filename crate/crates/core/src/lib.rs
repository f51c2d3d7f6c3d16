//! Non-learned mathematical core of a dense two-view geometric matcher.
//!
//! The crate is organised the way data flows through a matching pipeline:
//!
//! - [`grid_ops`]: dense maps, bilinear sampling, warping, consistency masks,
//!   reconstruction metrics and the binary map format.
//! - [`camera`]: pinhole cameras, rigid poses, ground-truth correspondences
//!   from depth, surface normals and pair overlap.
//! - [`planar`]: per-pixel plane-induced homographies and the co-planar
//!   indicator matrix used by the homography loss.
//! - [`matching`]: correlation volumes, softmax matching, positional
//!   embeddings, dual-softmax and mutual nearest neighbours.
//! - [`losses`]: reconstruction, homography, global matching, refinement and
//!   confidence losses with hand-derived directional derivatives.
//! - [`mim_mask`]: patch masks for paired masked image modeling.
//! - [`pose_eval`]: essential-matrix and homography RANSAC, pose errors and
//!   the AUC / mAP / PCK / corner-error protocols.
//! - [`pipeline`]: configuration, synthetic scenes, pair sampling and
//!   reproducible JSON reports.
//!
//! Conventions shared by every module: pixel `(row i, col j)` sits at the
//! continuous coordinate `(x = j, y = i)`; coordinate pairs are always
//! `(x, y)`; poses map source-camera points to support-camera points,
//! `X2 = R * X1 + t`; dense arrays are row-major with channels innermost.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod formats;
pub mod grid_ops;
pub mod losses;
pub mod matching;
pub mod mim_mask;
pub mod pipeline;
pub mod planar;
pub mod pose_eval;
pub mod rng;

pub use error::{Error, Result};

/// Continuous pixel coordinate `(x, y)`.
pub type Pixel = nalgebra::Vector2<f64>;
