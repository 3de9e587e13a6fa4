//! 2D indoor mapping: line-based room segmentation and per-room streaming
//! Gaussian-process Euclidean distance fields (GP-EDFs).
//!
//! The pipeline turns simulated 2D lidar scans into wall line segments,
//! partitions the segments into rooms by spectral clustering of a visibility
//! graph, and maintains one streaming GP-EDF per room that uses the room's
//! wall segments as an analytic distance prior. Non-wall obstacles enter the
//! models as sparse inducing points selected adaptively from residual scan
//! points.
//!
//! Modules:
//!
//! - [`geometry`]: points, segments, boxes, half-plane and intersection tests
//! - [`sim`]: deterministic lidar simulator over JSON floor plans
//! - [`extract`]: split-and-merge line extraction and the global segment store
//! - [`segmentation`]: segment graph processing, visibility graph, spectral
//!   clustering and the incremental room split/merge logic
//! - [`index`]: R-tree room lookup with positive-side tie-breaking
//! - [`gpedf`]: Matérn-3/2 log-GP distance field with line priors, adaptive
//!   inducing points and model split/merge
//! - [`harness`]: end-to-end pipeline, model benchmark, quality metrics and
//!   SVG export

pub mod extract;
pub mod geometry;
pub mod gpedf;
// pub mod harness;
pub mod index;
pub mod segmentation;
pub mod sim;

pub use geometry::{Aabb, LineSegment, Point2, SegmentId};
// pub use harness::{FrameMetrics, ModelVariant, RunConfig};
pub use segmentation::{RoomId, RoomSet, SegConfig};
