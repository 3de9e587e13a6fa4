//! Line extraction from scans: gap clustering, recursive split-and-merge
//! with a total-least-squares fit, and merging of new segments into the
//! global map store.
//!
//! Points that do not survive as part of an accepted segment are residual
//! points; they keep their cluster id so the mapping layer can assign whole
//! obstacles to rooms at once.

use crate::geometry::{half_plane_side, HalfPlaneSide, LineSegment, Point2, SegmentId};
use crate::sim::{Pose, ScanFrame};
use serde::{Deserialize, Serialize};

/// Extraction parameters; defaults are typical indoor-lidar values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtractParams {
    /// Euclidean gap between consecutive returns that starts a new cluster.
    pub gap_threshold: f64,
    /// Maximum point-to-line deviation before a run is split.
    pub split_deviation: f64,
    /// Minimum number of points for an accepted segment.
    pub min_points_per_segment: usize,
    /// Minimum accepted segment length (meters).
    pub min_segment_length: f64,
    /// Maximum direction difference for merging, radians.
    pub merge_angle: f64,
    /// Maximum lateral offset between supporting lines for merging.
    pub merge_offset: f64,
    /// Maximum endpoint gap along the line for merging.
    pub merge_gap: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            gap_threshold: 0.2,
            split_deviation: 0.05,
            min_points_per_segment: 8,
            min_segment_length: 0.3,
            merge_angle: 5.0_f64.to_radians(),
            merge_offset: 0.1,
            merge_gap: 0.3,
        }
    }
}

/// Consecutive scan returns grouped by proximity, from a single frame.
#[derive(Debug, Clone)]
pub struct PointCluster {
    pub points: Vec<Point2>,
    pub frame_pose: Pose,
    pub cluster_id: u64,
}

/// A freshly fitted segment together with the points it absorbed.
#[derive(Debug, Clone)]
pub struct FittedSegment {
    pub p1: Point2,
    pub p2: Point2,
    pub normal: Point2,
    pub observed_from: Point2,
    pub n_points: usize,
}

/// Result of extracting one cluster: every input point ends up attributed
/// to exactly one segment or to the residual list.
#[derive(Debug, Clone, Default)]
pub struct ExtractionResult {
    pub segments: Vec<FittedSegment>,
    pub residual_points: Vec<(Point2, u64)>,
}

/// Groups consecutive hit points; a new cluster starts when the gap between
/// consecutive returns exceeds `gap_threshold`. Small clusters are kept
/// (they become residuals later).
pub fn cluster_scan_points(
    frame: &ScanFrame,
    params: &ExtractParams,
    first_cluster_id: u64,
) -> Vec<PointCluster> {
    let mut clusters: Vec<PointCluster> = Vec::new();
    let mut next_id = first_cluster_id;
    for &p in &frame.points {
        match clusters.last_mut() {
            Some(c) if c.points.last().unwrap().distance(p) <= params.gap_threshold => {
                c.points.push(p);
            }
            _ => {
                clusters.push(PointCluster {
                    points: vec![p],
                    frame_pose: frame.pose,
                    cluster_id: next_id,
                });
                next_id += 1;
            }
        }
    }
    clusters
}

/// Total-least-squares line through the points: centroid plus the principal
/// axis of the scatter. Returns `(centroid, unit direction)`.
fn tls_line(points: &[Point2]) -> (Point2, Point2) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - cx;
        let dy = p.y - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Principal eigenvector of [[sxx, sxy], [sxy, syy]].
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (
        Point2::new(cx, cy),
        Point2::new(angle.cos(), angle.sin()),
    )
}

/// Weighted total-least-squares line; weights shape both the centroid and
/// the scatter. Used when refitting merged segments from endpoints.
fn weighted_tls_line(points: &[(Point2, f64)]) -> (Point2, Point2) {
    let wsum: f64 = points.iter().map(|(_, w)| w).sum();
    let cx = points.iter().map(|(p, w)| p.x * w).sum::<f64>() / wsum;
    let cy = points.iter().map(|(p, w)| p.y * w).sum::<f64>() / wsum;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in points {
        let dx = p.x - cx;
        let dy = p.y - cy;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (
        Point2::new(cx, cy),
        Point2::new(angle.cos(), angle.sin()),
    )
}

fn max_deviation(points: &[Point2], centroid: Point2, dir: Point2) -> (usize, f64) {
    let normal = dir.perp();
    let mut worst = (0, 0.0);
    for (i, p) in points.iter().enumerate() {
        let d = normal.dot(p.sub(centroid)).abs();
        if d > worst.1 {
            worst = (i, d);
        }
    }
    worst
}

/// Index of the interior point farthest from the chord through the run's
/// first and last points. The chord makes the split index well defined: run
/// endpoints have zero chord deviation, so the argmax is always interior.
fn chord_split_index(points: &[Point2]) -> usize {
    let a = points[0];
    let b = points[points.len() - 1];
    let chord = b.sub(a);
    let mut worst = (points.len() / 2, -1.0);
    for (i, p) in points.iter().enumerate().skip(1).take(points.len() - 2) {
        let d = if chord.norm() > 1e-12 {
            chord.normalized().perp().dot(p.sub(a)).abs()
        } else {
            p.distance(a)
        };
        if d > worst.1 {
            worst = (i, d);
        }
    }
    worst.0
}

/// Recursive split-and-merge over an ordered point run. The TLS fit decides
/// whether a run splits; the split lands at the chord-farthest point.
fn split_run(points: &[Point2], params: &ExtractParams, out: &mut Vec<(usize, usize)>, offset: usize) {
    if points.len() <= 2 {
        out.push((offset, offset + points.len()));
        return;
    }
    let (centroid, dir) = tls_line(points);
    let (_, dev) = max_deviation(points, centroid, dir);
    if dev <= params.split_deviation {
        out.push((offset, offset + points.len()));
        return;
    }
    let split = chord_split_index(points);
    split_run(&points[..split], params, out, offset);
    split_run(&points[split..], params, out, offset + split);
}

/// Splits a cluster into line segments; rejected runs become residuals.
pub fn extract_segments(cluster: &PointCluster, params: &ExtractParams) -> ExtractionResult {
    let mut runs = Vec::new();
    split_run(&cluster.points, params, &mut runs, 0);
    let mut result = ExtractionResult::default();
    let robot = cluster.frame_pose.position();
    for (lo, hi) in runs {
        let pts = &cluster.points[lo..hi];
        let accepted = pts.len() >= params.min_points_per_segment && {
            let (centroid, dir) = tls_line(pts);
            let (tmin, tmax) = pts
                .iter()
                .map(|p| dir.dot(p.sub(centroid)))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                    (lo.min(t), hi.max(t))
                });
            let p1 = centroid.add(dir.scale(tmin));
            let p2 = centroid.add(dir.scale(tmax));
            if tmax - tmin >= params.min_segment_length {
                let perp = dir.perp();
                let side = perp.dot(robot.sub(centroid));
                let normal = if side >= 0.0 { perp } else { perp.scale(-1.0) };
                result.segments.push(FittedSegment {
                    p1,
                    p2,
                    normal,
                    observed_from: robot,
                    n_points: pts.len(),
                });
                true
            } else {
                false
            }
        };
        if !accepted {
            result
                .residual_points
                .extend(pts.iter().map(|&p| (p, cluster.cluster_id)));
        }
    }
    result
}

/// Re-orients the normal so the robot lies in the positive half-plane.
/// When the robot sits on the supporting line the previous normal is kept
/// and the flag reports it.
pub fn orient_normal(segment: &mut LineSegment, robot_pos: Point2) -> bool {
    match half_plane_side(robot_pos, segment) {
        HalfPlaneSide::Positive => true,
        HalfPlaneSide::Negative => {
            segment.normal = segment.normal.scale(-1.0);
            true
        }
        HalfPlaneSide::On => false,
    }
}

/// Outcome of merging one frame's segments into the store.
#[derive(Debug, Clone, Default)]
pub struct MergeReport {
    /// Existing segments whose geometry was extended or adjusted.
    pub updated: Vec<SegmentId>,
    /// Brand-new segments added this round.
    pub added: Vec<SegmentId>,
}

/// Global map of wall segments with stable ids.
#[derive(Debug, Clone, Default)]
pub struct SegmentStore {
    segments: Vec<LineSegment>,
    next_id: u64,
}

impl SegmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[LineSegment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut Vec<LineSegment> {
        &mut self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn get(&self, id: SegmentId) -> Option<&LineSegment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn fresh_id(&mut self) -> SegmentId {
        let id = SegmentId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Replaces a segment after a graph-processing split, returning the two
    /// child ids.
    pub fn replace_with(&mut self, id: SegmentId, parts: Vec<LineSegment>) {
        self.segments.retain(|s| s.id != id);
        self.segments.extend(parts);
        self.segments.sort_by_key(|s| s.id);
    }

    /// Merges freshly extracted segments into the store.
    ///
    /// A new segment merges with an existing one iff their directions agree
    /// within `merge_angle`, their supporting lines are within
    /// `merge_offset`, their projected extents are within `merge_gap`, and
    /// their normals point to the same side. The merged segment spans the
    /// union of the endpoint projections on a length-weighted refit line.
    /// Merging repeats until no pair qualifies.
    pub fn merge_segments(
        &mut self,
        new_segments: Vec<FittedSegment>,
        params: &ExtractParams,
    ) -> MergeReport {
        let mut report = MergeReport::default();
        for fitted in new_segments {
            let id = self.fresh_id();
            let candidate = LineSegment::try_new(
                id,
                fitted.p1,
                fitted.p2,
                fitted.normal,
                fitted.observed_from,
            );
            let Ok(seg) = candidate else { continue };
            match self.merge_once(seg, params) {
                MergeOutcome::Merged(existing) => {
                    if !report.updated.contains(&existing) {
                        report.updated.push(existing);
                    }
                }
                MergeOutcome::Added(id) => report.added.push(id),
            }
        }
        // Chain merges: an extended segment may now qualify against others.
        loop {
            let Some((i, j)) = self.find_mergeable_pair(params) else {
                break;
            };
            let b = self.segments.remove(j);
            let a = self.segments.remove(i);
            let keep_id = a.id;
            let merged = merge_pair(&a, &b, params);
            report.updated.retain(|&u| u != b.id);
            report.added.retain(|&u| u != b.id);
            if !report.updated.contains(&keep_id) && !report.added.contains(&keep_id) {
                report.updated.push(keep_id);
            }
            self.segments.push(merged);
            self.segments.sort_by_key(|s| s.id);
        }
        report
    }

    fn merge_once(&mut self, seg: LineSegment, params: &ExtractParams) -> MergeOutcome {
        for existing in &mut self.segments {
            if mergeable(existing, &seg, params) {
                let merged = merge_pair(existing, &seg, params);
                *existing = merged;
                return MergeOutcome::Merged(existing.id);
            }
        }
        let id = seg.id;
        self.segments.push(seg);
        self.segments.sort_by_key(|s| s.id);
        MergeOutcome::Added(id)
    }

    fn find_mergeable_pair(&self, params: &ExtractParams) -> Option<(usize, usize)> {
        for i in 0..self.segments.len() {
            for j in (i + 1)..self.segments.len() {
                if mergeable(&self.segments[i], &self.segments[j], params) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

enum MergeOutcome {
    Merged(SegmentId),
    Added(SegmentId),
}

/// All three merge criteria plus normal agreement.
pub fn mergeable(a: &LineSegment, b: &LineSegment, params: &ExtractParams) -> bool {
    if a.normal.dot(b.normal) <= 0.0 {
        return false; // opposite faces of a wall stay separate
    }
    let da = a.direction();
    let db = b.direction();
    let angle = da.dot(db).abs().clamp(-1.0, 1.0).acos();
    if angle > params.merge_angle {
        return false;
    }
    let offset = lateral_offset(a, b).max(lateral_offset(b, a));
    if offset > params.merge_offset {
        return false;
    }
    projection_gap(a, b) <= params.merge_gap
}

fn lateral_offset(a: &LineSegment, b: &LineSegment) -> f64 {
    let n = a.direction().perp();
    n.dot(b.midpoint().sub(a.p1)).abs()
}

/// Gap between the projected extents of the two segments on `a`'s line;
/// zero when the extents overlap.
fn projection_gap(a: &LineSegment, b: &LineSegment) -> f64 {
    let dir = a.direction();
    let proj = |p: Point2| dir.dot(p.sub(a.p1));
    let (a0, a1) = (proj(a.p1), proj(a.p2));
    let (b0, b1) = (proj(b.p1).min(proj(b.p2)), proj(b.p1).max(proj(b.p2)));
    let (a0, a1) = (a0.min(a1), a0.max(a1));
    (b0 - a1).max(a0 - b1).max(0.0)
}

fn merge_pair(a: &LineSegment, b: &LineSegment, _params: &ExtractParams) -> LineSegment {
    // Endpoints weighted by segment length so short noisy fragments cannot
    // tilt a long established wall.
    let pts = [
        (a.p1, a.length() / 2.0),
        (a.p2, a.length() / 2.0),
        (b.p1, b.length() / 2.0),
        (b.p2, b.length() / 2.0),
    ];
    let (centroid, dir) = weighted_tls_line(&pts);
    let (tmin, tmax) = pts
        .iter()
        .map(|(p, _)| dir.dot(p.sub(centroid)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t), hi.max(t))
        });
    let p1 = centroid.add(dir.scale(tmin));
    let p2 = centroid.add(dir.scale(tmax));
    let perp = dir.perp();
    let normal = if perp.dot(a.normal) >= 0.0 {
        perp
    } else {
        perp.scale(-1.0)
    };
    LineSegment {
        id: a.id,
        p1,
        p2,
        normal,
        last_robot_pos: b.last_robot_pos,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Pose;
    use approx::assert_relative_eq;

    fn pose_at(x: f64, y: f64) -> Pose {
        Pose {
            t: 0.0,
            x,
            y,
            theta: 0.0,
        }
    }

    fn frame_with(points: Vec<Point2>, pose: Pose) -> ScanFrame {
        let ranges = points.iter().map(|_| Some(1.0)).collect();
        ScanFrame {
            pose,
            points,
            ranges,
        }
    }

    #[test]
    fn one_wall_one_cluster() {
        let points: Vec<Point2> = (0..50).map(|i| Point2::new(i as f64 * 0.02, 0.0)).collect();
        let frame = frame_with(points, pose_at(0.5, 1.0));
        let clusters = cluster_scan_points(&frame, &ExtractParams::default(), 0);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].points.len(), 50);
    }

    #[test]
    fn jump_starts_new_cluster() {
        let mut points: Vec<Point2> = (0..10).map(|i| Point2::new(i as f64 * 0.05, 0.0)).collect();
        points.extend((0..10).map(|i| Point2::new(i as f64 * 0.05, 1.0)));
        let frame = frame_with(points, pose_at(0.0, 0.5));
        let clusters = cluster_scan_points(&frame, &ExtractParams::default(), 5);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].cluster_id, 5);
        assert_eq!(clusters[1].cluster_id, 6);
    }

    #[test]
    fn empty_frame_no_clusters() {
        let frame = frame_with(vec![], pose_at(0.0, 0.0));
        assert!(cluster_scan_points(&frame, &ExtractParams::default(), 0).is_empty());
    }

    #[test]
    fn collinear_points_single_exact_segment() {
        let cluster = PointCluster {
            points: (0..50).map(|i| Point2::new(i as f64 * 0.02, 0.0)).collect(),
            frame_pose: pose_at(0.5, 1.0),
            cluster_id: 0,
        };
        let result = extract_segments(&cluster, &ExtractParams::default());
        assert_eq!(result.segments.len(), 1);
        assert!(result.residual_points.is_empty());
        let s = &result.segments[0];
        // Fit deviation is zero: endpoints lie on the data line.
        assert_relative_eq!(s.p1.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.p2.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.p1.distance(s.p2), 0.98, epsilon = 1e-9);
        // Normal faces the robot.
        assert!(s.normal.y > 0.99);
    }

    /// Split-and-merge oracle on a synthetic right-angle corner: two
    /// segments come back and the split lands within `split_deviation` of
    /// the true corner.
    #[test]
    fn l_shaped_cluster_splits_at_corner() {
        let params = ExtractParams::default();
        let mut points = Vec::new();
        for i in 0..40 {
            points.push(Point2::new(-1.0 + i as f64 * 0.025, 0.0));
        }
        for i in 1..=40 {
            points.push(Point2::new(0.0, i as f64 * 0.025));
        }
        let cluster = PointCluster {
            points,
            frame_pose: pose_at(-0.5, 0.5),
            cluster_id: 0,
        };
        let result = extract_segments(&cluster, &params);
        assert_eq!(result.segments.len(), 2, "expected 2 arms, got {:?}", result.segments.len());
        let corner = Point2::new(0.0, 0.0);
        let nearest = result
            .segments
            .iter()
            .flat_map(|s| [s.p1, s.p2])
            .map(|p| p.distance(corner))
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= params.split_deviation + 0.026, "corner missed by {nearest}");
        // Point conservation.
        let attributed: usize = result.segments.iter().map(|s| s.n_points).sum();
        assert_eq!(attributed + result.residual_points.len(), 80);
    }

    /// A small circle cannot be fit by any line within the deviation bound:
    /// everything becomes residual. The oracle checks the best-fit line of
    /// the full ring really violates the bound.
    #[test]
    fn circle_points_all_residual() {
        let params = ExtractParams::default();
        let r = 0.3;
        let points: Vec<Point2> = (0..12)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 12.0;
                Point2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let (centroid, dir) = tls_line(&points);
        let (_, dev) = max_deviation(&points, centroid, dir);
        assert!(dev > params.split_deviation, "oracle: ring max deviation {dev}");
        let cluster = PointCluster {
            points,
            frame_pose: pose_at(2.0, 0.0),
            cluster_id: 9,
        };
        let result = extract_segments(&cluster, &params);
        assert!(result.segments.is_empty());
        assert_eq!(result.residual_points.len(), 12);
        assert!(result.residual_points.iter().all(|&(_, c)| c == 9));
    }

    #[test]
    fn orient_normal_cases() {
        let mut s = LineSegment::try_new(
            SegmentId(0),
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.5, 1.0),
        )
        .unwrap();
        assert!(orient_normal(&mut s, Point2::new(0.5, 1.0)));
        assert_eq!(s.normal, Point2::new(0.0, 1.0));
        assert!(orient_normal(&mut s, Point2::new(0.5, -1.0)));
        assert_eq!(s.normal, Point2::new(0.0, -1.0));
        let before = s.normal;
        assert!(!orient_normal(&mut s, Point2::new(0.5, 0.0)));
        assert_eq!(s.normal, before);
    }

    fn fitted(p1: (f64, f64), p2: (f64, f64), normal: (f64, f64), from: (f64, f64)) -> FittedSegment {
        FittedSegment {
            p1: Point2::new(p1.0, p1.1),
            p2: Point2::new(p2.0, p2.1),
            normal: Point2::new(normal.0, normal.1),
            observed_from: Point2::new(from.0, from.1),
            n_points: 20,
        }
    }

    #[test]
    fn collinear_overlapping_segments_merge_to_union() {
        let mut store = SegmentStore::new();
        let params = ExtractParams::default();
        store.merge_segments(
            vec![fitted((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 1.0))],
            &params,
        );
        let report = store.merge_segments(
            vec![fitted((0.8, 0.0), (2.0, 0.0), (0.0, 1.0), (1.5, 1.0))],
            &params,
        );
        assert_eq!(store.len(), 1);
        assert_eq!(report.updated.len(), 1);
        let s = &store.segments()[0];
        assert_relative_eq!(s.length(), 2.0, epsilon = 1e-9);
        assert_eq!(s.last_robot_pos, Point2::new(1.5, 1.0));
    }

    #[test]
    fn perpendicular_segments_both_kept() {
        let mut store = SegmentStore::new();
        let params = ExtractParams::default();
        store.merge_segments(
            vec![
                fitted((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 1.0)),
                fitted((0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.5, 1.0)),
            ],
            &params,
        );
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn opposite_normals_not_merged() {
        let mut store = SegmentStore::new();
        let params = ExtractParams::default();
        store.merge_segments(
            vec![
                fitted((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 1.0)),
                fitted((0.5, 0.0), (1.5, 0.0), (0.0, -1.0), (0.5, -1.0)),
            ],
            &params,
        );
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn no_mergeable_pair_remains_after_merge() {
        let mut store = SegmentStore::new();
        let params = ExtractParams::default();
        // Three collinear pieces arriving out of order chain-merge into one.
        store.merge_segments(
            vec![
                fitted((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 1.0)),
                fitted((2.2, 0.0), (3.0, 0.0), (0.0, 1.0), (2.5, 1.0)),
                fitted((1.1, 0.0), (2.1, 0.0), (0.0, 1.0), (1.5, 1.0)),
            ],
            &params,
        );
        assert_eq!(store.len(), 1);
        assert!(store.find_mergeable_pair(&params).is_none());
    }
}
