//! Crosswalk art injection and detector robustness evaluation.
//!
//! The pipeline warps a rectangular art pattern into annotated crosswalk
//! polygons of a street scene, restores pedestrian cutouts on top, runs a
//! detector (a built-in template-correlation detector or an external process
//! speaking newline-delimited JSON), scores the detections, and can optimize
//! a bounded universal perturbation of the art that suppresses the detector's
//! objectness.
//!
//! Geometry and raster code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the double-precision types used by the rest of the
//! pipeline.

pub mod attack;
pub mod compose;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod scalar;
pub mod scenegen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Raster64 = raster::Raster<f64>;
pub type Raster32 = raster::Raster<f32>;
pub type Point64 = geometry::Point<f64>;
pub type Polygon64 = geometry::Polygon<f64>;
pub type Quad64 = geometry::Quad<f64>;
pub type Homography64 = geometry::Homography<f64>;
pub type Homography32 = geometry::Homography<f32>;
