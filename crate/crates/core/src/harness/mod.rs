//! End-to-end pipeline driver, the three-model benchmark, segmentation
//! quality metrics, and SVG export.

pub mod bench;
pub mod pipeline;
pub mod quality;
pub mod svg;

pub use bench::{bench_models, fit_loglog_slope, BenchResult};
pub use pipeline::{run_on_frames, run_pipeline, Pipeline, PipelineError};
pub use quality::{adjusted_rand_index, segmentation_quality};
pub use svg::{export_svg, SvgOptions};

use crate::extract::ExtractParams;
use crate::gpedf::GpHyper;
use crate::segmentation::SegConfig;
use crate::sim::ScanParams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Which GP-EDF arrangement the pipeline maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// One zero-mean model; every scan point is a candidate inducing point.
    StandardGlobal,
    /// One model with all extracted lines as prior; residuals as points.
    LineGlobal,
    /// Per-room models with room segmentation driving split/merge.
    RoomBased,
}

impl ModelVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelVariant::StandardGlobal => "standard_global",
            ModelVariant::LineGlobal => "line_global",
            ModelVariant::RoomBased => "room_based",
        }
    }
}

/// Full run configuration; the JSON file carries every parameter of the
/// sensor, segmentation, extraction and GP blocks with their defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub plan: PathBuf,
    pub trajectory: PathBuf,
    #[serde(default)]
    pub scan: ScanParams,
    #[serde(default)]
    pub seg: SegConfig,
    #[serde(default)]
    pub extract: ExtractParams,
    #[serde(default)]
    pub gp: GpHyper,
    #[serde(default = "default_variant")]
    pub variant: ModelVariant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_variant() -> ModelVariant {
    ModelVariant::RoomBased
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Per-frame bookkeeping written to the benchmark CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    /// Cumulative measurement points presented so far.
    pub n_points: usize,
    pub update_ms: f64,
    pub predict_ms: f64,
    pub segmentation_ms: f64,
    pub n_rooms: usize,
    pub n_inducing: usize,
    pub n_segments: usize,
}
