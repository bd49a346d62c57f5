//! Detection-pipeline toolkit for anchor-based pedestrian detectors.
//!
//! The library covers the parts of a one-stage detector that do not need a
//! network: anchor pyramids, soft-label sample assignment with
//! visibility-aware matching, the box-regression loss family (including the
//! Center-IoU loss and its analytic gradient), Soft-NMS style rescoring with
//! the cosine decay, and Caltech-style log-average miss rate evaluation.
//!
//! All numeric code is generic over a floating point [`Scalar`]; the aliases
//! below pin the common `f64`/`f32` instantiations.

pub mod anchors;
pub mod assignment;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod nms;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BBox64 = geometry::BBox<f64>;
pub type BBox32 = geometry::BBox<f32>;
pub type Anchor64 = anchors::Anchor<f64>;
pub type AnchorLevelConfig64 = anchors::AnchorLevelConfig<f64>;
pub type GroundTruth64 = assignment::GroundTruth<f64>;
pub type GroundTruth32 = assignment::GroundTruth<f32>;
pub type Thresholds64 = assignment::Thresholds<f64>;
pub type AssignedSample64 = assignment::AssignedSample<f64>;
pub type LossConfig64 = losses::LossConfig<f64>;
pub type LossConfig32 = losses::LossConfig<f32>;
pub type Detection64 = nms::Detection<f64>;
pub type Detection32 = nms::Detection<f32>;
pub type NmsVariant64 = nms::NmsVariant<f64>;
pub type EvalConfig64 = eval::EvalConfig<f64>;
pub type MissRateCurve64 = eval::MissRateCurve<f64>;
