//! The per-frame mapping pipeline for all three model variants.
//!
//! Scans are extracted into wall segments and residual points; the
//! room-based variant additionally re-segments the map every frame,
//! maintains an R-tree of room boxes, and routes residual clusters and
//! split/merge/move events into the per-room GP-EDF models.

use crate::extract::{cluster_scan_points, extract_segments, ExtractParams, SegmentStore};
use crate::geometry::{segment_point_distance_raw, LineSegment, Point2, SegmentId};
use crate::gpedf::{GpEdfModel, GpHyper};
use crate::harness::{FrameMetrics, ModelVariant, RunConfig};
use crate::index::RoomIndex;
use crate::segmentation::{
    build_visibility_graph, incremental_update, RoomEvent, RoomId, RoomSet, SegConfig,
    SegmentGraph, VisibilityGraph,
};
use crate::sim::{load_floor_plan, load_trajectory, playback, FloorPlan, ScanFrame, ScanParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sim: {0}")]
    Sim(#[from] crate::sim::SimError),
    #[error("gp: {0}")]
    Gp(#[from] crate::gpedf::GpError),
    #[error("index: {0}")]
    Index(#[from] crate::index::IndexError),
    #[error("could not sample free-space prediction points")]
    NoFreeSpace,
}

/// Live mapping state for one variant.
pub struct Pipeline {
    pub variant: ModelVariant,
    pub scan: ScanParams,
    pub seg: SegConfig,
    pub extract: ExtractParams,
    pub gp: GpHyper,
    /// Raw merged walls (stable ids).
    pub store: SegmentStore,
    /// Processed wall pieces from the last segmentation pass.
    pub processed: BTreeMap<SegmentId, LineSegment>,
    pub visibility: VisibilityGraph,
    pub rooms: RoomSet,
    pub room_index: Option<RoomIndex>,
    pub models: BTreeMap<RoomId, GpEdfModel>,
    pub global_model: Option<GpEdfModel>,
    /// Residual points kept for rendering, tagged with their room.
    pub residuals: Vec<(Point2, RoomId)>,
    pub last_pose: Option<crate::sim::Pose>,
    pub cumulative_points: usize,
    /// Fixed free-space probe batch timed every frame.
    pub probes: Vec<Point2>,
    next_cluster_id: u64,
}

impl Pipeline {
    pub fn new(
        variant: ModelVariant,
        plan: &FloorPlan,
        scan: ScanParams,
        seg: SegConfig,
        extract: ExtractParams,
        gp: GpHyper,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        gp.validate()?;
        let probes = sample_free_space(plan, 100, seed)?;
        let mut pipeline = Self {
            variant,
            scan,
            seg,
            extract,
            gp: gp.clone(),
            store: SegmentStore::new(),
            processed: BTreeMap::new(),
            visibility: VisibilityGraph::default(),
            rooms: RoomSet::new(),
            room_index: None,
            models: BTreeMap::new(),
            global_model: None,
            residuals: Vec::new(),
            last_pose: None,
            cumulative_points: 0,
            probes,
            next_cluster_id: 0,
        };
        if variant != ModelVariant::RoomBased {
            pipeline.global_model = Some(GpEdfModel::new(RoomId(0), gp)?);
        }
        Ok(pipeline)
    }

    pub fn n_inducing(&self) -> usize {
        match self.variant {
            ModelVariant::RoomBased => {
                self.models.values().map(|m| m.inducing().len()).sum()
            }
            _ => self
                .global_model
                .as_ref()
                .map_or(0, |m| m.inducing().len()),
        }
    }

    pub fn n_segments(&self) -> usize {
        match self.variant {
            ModelVariant::StandardGlobal => 0,
            ModelVariant::LineGlobal => self.store.len(),
            ModelVariant::RoomBased => self.processed.len(),
        }
    }

    /// Distance query routed the way the variant prescribes: the global
    /// model, or exactly one room's model located via the R-tree.
    pub fn query_distance(&self, p: Point2) -> Option<f64> {
        match self.variant {
            ModelVariant::RoomBased => {
                let index = self.room_index.as_ref()?;
                let room = index.locate(p);
                self.models.get(&room).map(|m| m.query_distance(p).distance)
            }
            _ => self
                .global_model
                .as_ref()
                .map(|m| m.query_distance(p).distance),
        }
    }

    /// Processes one scan frame and reports the frame metrics.
    pub fn step(&mut self, frame: &ScanFrame, frame_idx: usize) -> FrameMetrics {
        self.last_pose = Some(frame.pose);
        self.cumulative_points += frame.points.len();
        let robot = frame.pose.position();

        let mut segmentation_ms = 0.0;
        let mut update_ms = 0.0;

        match self.variant {
            ModelVariant::StandardGlobal => {
                let t0 = Instant::now();
                let model = self.global_model.as_mut().expect("global model");
                model.select_inducing(&frame.points);
                let batch: Vec<(Point2, f64)> =
                    frame.points.iter().map(|&p| (p, 1.0)).collect();
                model.update(&batch).expect("finite targets");
                update_ms = ms_since(t0);
            }
            ModelVariant::LineGlobal => {
                let t0 = Instant::now();
                let residuals = self.extract_and_merge(frame);
                segmentation_ms = ms_since(t0);

                let t1 = Instant::now();
                let model = self.global_model.as_mut().expect("global model");
                model.sync_lines(self.store.segments());
                let points: Vec<Point2> = residuals.iter().map(|&(p, _)| p).collect();
                model.select_inducing(&points);
                let batch: Vec<(Point2, f64)> = points.iter().map(|&p| (p, 1.0)).collect();
                model.update(&batch).expect("finite targets");
                for &(p, _) in &residuals {
                    self.residuals.push((p, RoomId(0)));
                }
                update_ms = ms_since(t1);
            }
            ModelVariant::RoomBased => {
                let t0 = Instant::now();
                let residuals = self.extract_and_merge(frame);
                let current_room = self.room_index.as_ref().map(|idx| idx.locate(robot));
                let outcome = self.run_segmentation(current_room);
                segmentation_ms = ms_since(t0);

                let t1 = Instant::now();
                self.apply_room_events(&outcome.events);
                self.sync_room_models();
                self.absorb_residuals(&residuals, robot);
                update_ms = ms_since(t1);
            }
        }

        let t2 = Instant::now();
        for &p in &self.probes.clone() {
            let _ = self.query_distance(p);
        }
        let predict_ms = ms_since(t2);

        FrameMetrics {
            frame: frame_idx,
            n_points: self.cumulative_points,
            update_ms,
            predict_ms,
            segmentation_ms,
            n_rooms: match self.variant {
                ModelVariant::RoomBased => self.rooms.k().max(1),
                _ => 1,
            },
            n_inducing: self.n_inducing(),
            n_segments: self.n_segments(),
        }
    }

    /// Clusters the frame, extracts segments, merges them into the raw
    /// store, and returns the residual points with their cluster ids.
    fn extract_and_merge(&mut self, frame: &ScanFrame) -> Vec<(Point2, u64)> {
        let clusters = cluster_scan_points(frame, &self.extract, self.next_cluster_id);
        self.next_cluster_id += clusters.len() as u64;
        let mut residuals = Vec::new();
        let mut fitted = Vec::new();
        for cluster in &clusters {
            let mut result = extract_segments(cluster, &self.extract);
            fitted.append(&mut result.segments);
            residuals.append(&mut result.residual_points);
        }
        self.store.merge_segments(fitted, &self.extract);
        residuals
    }

    /// Full segmentation pass: graph processing, visibility graph,
    /// incremental room update, index rebuild.
    fn run_segmentation(
        &mut self,
        current_room: Option<RoomId>,
    ) -> crate::segmentation::UpdateOutcome {
        let mut graph = SegmentGraph::new(self.store.segments().to_vec());
        graph.process(&self.seg);
        self.processed = graph.segments.iter().map(|s| (s.id, s.clone())).collect();
        self.visibility = build_visibility_graph(&graph, &self.seg);
        let outcome = incremental_update(
            &mut self.rooms,
            &self.visibility,
            &self.processed,
            current_room,
            &self.seg,
        );
        self.room_index = if self.rooms.k() > 0 {
            RoomIndex::build(&self.rooms, &self.processed).ok()
        } else {
            None
        };
        outcome
    }

    /// Routes split/merge/move events into the per-room models.
    fn apply_room_events(&mut self, events: &[RoomEvent]) {
        for event in events {
            match *event {
                RoomEvent::Merge { from, into } => {
                    let Some(from_model) = self.models.remove(&from) else {
                        continue;
                    };
                    let into_model = match self.models.remove(&into) {
                        Some(m) => m,
                        None => GpEdfModel::new(into, self.gp.clone())
                            .expect("validated hyper"),
                    };
                    if let Ok(mut merged) = GpEdfModel::merge(&into_model, &from_model) {
                        merged.set_room_id(into);
                        self.models.insert(into, merged);
                    } else {
                        self.models.insert(into, into_model);
                    }
                    for (_, room) in self.residuals.iter_mut() {
                        if *room == from {
                            *room = into;
                        }
                    }
                }
                RoomEvent::Split { parent, child } => {
                    let Some(parent_model) = self.models.remove(&parent) else {
                        continue;
                    };
                    let keep_lines = self.room_lines(parent);
                    let child_lines = self.room_lines(child);
                    match parent_model.split(&keep_lines, &child_lines, child) {
                        Ok((keep, new_child)) => {
                            self.models.insert(parent, keep);
                            self.models.insert(child, new_child);
                            self.relabel_residuals(parent, child);
                        }
                        Err(_) => {
                            self.models.insert(parent, parent_model);
                        }
                    }
                }
                RoomEvent::Moved { segment, from, to } => {
                    let Some(geom) = self.processed.get(&segment).cloned() else {
                        continue;
                    };
                    let Some(from_model) = self.models.remove(&from) else {
                        continue;
                    };
                    let remaining: Vec<LineSegment> = from_model
                        .lines()
                        .iter()
                        .filter(|l| l.id != segment)
                        .cloned()
                        .collect();
                    if remaining.is_empty() {
                        self.models.insert(from, from_model);
                        continue;
                    }
                    match from_model.split(&remaining, &[geom], to) {
                        Ok((keep, give)) => {
                            self.models.insert(from, keep);
                            let to_model = match self.models.remove(&to) {
                                Some(m) => m,
                                None => GpEdfModel::new(to, self.gp.clone())
                                    .expect("validated hyper"),
                            };
                            if let Ok(mut merged) = GpEdfModel::merge(&to_model, &give) {
                                merged.set_room_id(to);
                                self.models.insert(to, merged);
                            } else {
                                self.models.insert(to, to_model);
                            }
                        }
                        Err(_) => {
                            self.models.insert(from, from_model);
                        }
                    }
                }
            }
        }
    }

    fn room_lines(&self, room: RoomId) -> Vec<LineSegment> {
        self.rooms
            .members(room)
            .map(|members| {
                members
                    .iter()
                    .filter_map(|id| self.processed.get(id).cloned())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Re-tags stored residual points after a split by proximity to the
    /// child's segments.
    fn relabel_residuals(&mut self, parent: RoomId, child: RoomId) {
        let child_lines = self.room_lines(child);
        let parent_lines = self.room_lines(parent);
        if child_lines.is_empty() || parent_lines.is_empty() {
            return;
        }
        for (p, room) in self.residuals.iter_mut() {
            if *room != parent {
                continue;
            }
            let dc = child_lines
                .iter()
                .map(|l| segment_point_distance_raw(*p, l.p1, l.p2))
                .fold(f64::INFINITY, f64::min);
            let dp = parent_lines
                .iter()
                .map(|l| segment_point_distance_raw(*p, l.p1, l.p2))
                .fold(f64::INFINITY, f64::min);
            if dc < dp {
                *room = child;
            }
        }
    }

    /// Every room model mirrors its room's current processed segments.
    fn sync_room_models(&mut self) {
        let room_ids = self.rooms.room_ids();
        self.models.retain(|room, _| room_ids.contains(room));
        for room in room_ids {
            let lines = self.room_lines(room);
            let model = self
                .models
                .entry(room)
                .or_insert_with(|| {
                    GpEdfModel::new(room, self.gp.clone()).expect("validated hyper")
                });
            model.sync_lines(&lines);
        }
    }

    /// Assigns residual clusters to rooms and absorbs them into the
    /// owning models.
    fn absorb_residuals(&mut self, residuals: &[(Point2, u64)], robot: Point2) {
        if residuals.is_empty() {
            return;
        }
        let Some(index) = self.room_index.as_ref() else {
            return;
        };
        let sensor_room = index.locate(robot);
        let mut by_cluster: BTreeMap<u64, Vec<Point2>> = BTreeMap::new();
        for &(p, c) in residuals {
            by_cluster.entry(c).or_default().push(p);
        }
        let mut by_room: BTreeMap<RoomId, Vec<Point2>> = BTreeMap::new();
        for (_, points) in by_cluster {
            let room = index.assign_cluster(
                &points,
                &self.rooms,
                sensor_room,
                robot,
                self.scan.max_range,
            );
            by_room.entry(room).or_default().extend(points);
        }
        for (room, points) in by_room {
            let model = self
                .models
                .entry(room)
                .or_insert_with(|| {
                    GpEdfModel::new(room, self.gp.clone()).expect("validated hyper")
                });
            model.select_inducing(&points);
            let batch: Vec<(Point2, f64)> = points.iter().map(|&p| (p, 1.0)).collect();
            model.update(&batch).expect("finite targets");
            for p in points {
                self.residuals.push((p, room));
            }
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Rejection-samples free-space points: inside the plan bounds and at
/// least 5 cm from every wall.
fn sample_free_space(
    plan: &FloorPlan,
    count: usize,
    seed: u64,
) -> Result<Vec<Point2>, PipelineError> {
    let bounds = plan.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70726f6265);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count * 1000 {
        if points.len() == count {
            break;
        }
        let p = Point2::new(
            rng.random_range(bounds.min.x..=bounds.max.x),
            rng.random_range(bounds.min.y..=bounds.max.y),
        );
        let clear = plan
            .walls
            .iter()
            .all(|w| segment_point_distance_raw(p, w.p1(), w.p2()) > 0.05);
        if clear {
            points.push(p);
        }
    }
    if points.len() == count {
        Ok(points)
    } else {
        Err(PipelineError::NoFreeSpace)
    }
}

/// Runs a variant over pre-recorded frames.
pub fn run_on_frames(
    variant: ModelVariant,
    plan: &FloorPlan,
    frames: &[ScanFrame],
    scan: ScanParams,
    seg: SegConfig,
    extract: ExtractParams,
    gp: GpHyper,
    seed: u64,
) -> Result<(Pipeline, Vec<FrameMetrics>), PipelineError> {
    let mut pipeline = Pipeline::new(variant, plan, scan, seg, extract, gp, seed)?;
    let metrics = frames
        .iter()
        .enumerate()
        .map(|(i, f)| pipeline.step(f, i))
        .collect();
    Ok((pipeline, metrics))
}

/// Loads the plan and trajectory from the config, simulates the scan
/// stream, and runs the configured variant over it.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(Pipeline, Vec<FrameMetrics>), PipelineError> {
    let plan = load_floor_plan(&cfg.plan)?;
    let trajectory = load_trajectory(&cfg.trajectory)?;
    let frames = playback(&plan, &trajectory, &cfg.scan)?;
    run_on_frames(
        cfg.variant,
        &plan,
        &frames,
        cfg.scan.clone(),
        cfg.seg.clone(),
        cfg.extract.clone(),
        cfg.gp.clone(),
        cfg.seed,
    )
}
