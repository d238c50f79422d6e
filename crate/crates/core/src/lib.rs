//! maskmend-core: noisy-mask synthesis, uncertainty-driven label
//! correction, and evaluation for binary image segmentation.
//!
//! The crate corrupts clean binary masks into realistic sloppy
//! annotations (low-vertex polygon or smooth-curve boundary
//! approximations), trains a small pixelwise learner on them, estimates
//! per-pixel aleatoric uncertainty from prediction ensembles (Monte
//! Carlo dropout, deep ensembles, or test-time augmentation), flips
//! labels in high-uncertainty regions, and evaluates everything with
//! clean/noisy Dice reporting.
//!
//! Entry points:
//! - [`noise`]: mask corruption (trace, simplify, rasterize).
//! - [`learner`]: the built-in pixelwise MLP with dropout.
//! - [`ensemble`] / [`uncertainty`]: prediction stacks and per-pixel
//!   aleatoric/epistemic maps.
//! - [`relabel`]: the flip-and-fill correction step.
//! - [`trace`]: per-epoch bookkeeping and relabeling-epoch detection.
//! - [`pipeline`]: the orchestrated end-to-end loop and the
//!   method-comparison experiment.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod learner;
pub mod manifest;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod relabel;
pub mod trace;
pub mod uncertainty;

pub use error::{Error, Result};
pub use geometry::{Point, Polygon};
pub use grid::{BinaryMask, GrayImage, PredictionEnsemble, ProbMap, UncertaintyMap};
