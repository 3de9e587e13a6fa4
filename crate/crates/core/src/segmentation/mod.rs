//! Room segmentation: wall-segment graph processing, visibility graph
//! construction, spectral clustering, and the incremental split/merge of
//! the room partition.

pub mod graph;
pub mod rooms;
pub mod spectral;
pub mod visibility;

pub use graph::{CornerLink, LinkKind, SegmentGraph};
pub use rooms::{incremental_update, RoomEvent, RoomId, RoomSet, UpdateOutcome};
pub use spectral::{cpqr_assign, estimate_k_eigengap, fiedler_value, normalized_laplacian};
pub use visibility::{build_visibility_graph, edge_weight, spectral_cluster, EdgeKind, VisibilityGraph};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("longest segment length is zero")]
    ZeroMaxLength,
    #[error("graph has fewer than two nodes")]
    TooSmall,
}

/// Room segmentation parameters. Defaults mirror the reference evaluation
/// configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SegConfig {
    /// Corner formation distance threshold (meters).
    pub corner_threshold: f64,
    /// Doorway width interval, lower bound (meters).
    pub doorway_min: f64,
    /// Doorway width interval, upper bound (meters).
    pub doorway_max: f64,
    /// Maximum distance between mutually visible segments (meters).
    pub visibility_radius: f64,
    /// Rate of the squared-distance weight factor.
    pub weight_rate_distance: f64,
    /// Rate of the robot-position weight factor.
    pub weight_rate_robot: f64,
    /// Fiedler-value threshold for accepting a room split.
    pub fiedler_threshold: f64,
    /// Cross-edge ratio threshold for accepting a room split.
    pub edge_ratio_threshold: f64,
    /// Cap on the eigengap search for the number of rooms.
    pub max_clusters: usize,
    /// Minimum legal segment length (meters), shared with extraction.
    pub min_segment_length: f64,
    /// Minimum direction difference before two segments count as
    /// non-parallel (radians).
    pub nonparallel_min_angle: f64,
    /// Half-plane margin for the visibility midpoint tests; keeps the two
    /// faces of one wall from pairing up under fit noise (meters).
    pub halfplane_margin: f64,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            corner_threshold: 0.4,
            doorway_min: 0.8,
            doorway_max: 3.0,
            visibility_radius: 8.0,
            weight_rate_distance: 0.02,
            weight_rate_robot: 0.005,
            fiedler_threshold: 0.18,
            edge_ratio_threshold: 0.5,
            max_clusters: 12,
            min_segment_length: 0.3,
            nonparallel_min_angle: 10.0_f64.to_radians(),
            halfplane_margin: 0.03,
        }
    }
}
