//! Visibility graph over wall segments and the spectral clustering entry
//! point that turns it into room labels.

use crate::geometry::{
    segment_segment_distance, segments_intersect_raw, signed_side, HalfPlaneSide, LineSegment,
    SegmentId, ON_TOLERANCE,
};
use crate::segmentation::graph::SegmentGraph;
use crate::segmentation::spectral::{
    cpqr_assign, estimate_k_eigengap, normalized_laplacian, sorted_symmetric_eigen,
};
use crate::segmentation::{SegConfig, SegmentationError};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// Lateral tolerance for treating two segments as collinear when looking
/// for passage pairs.
const PASSAGE_LATERAL_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Segments meeting at endpoints (corners and doorway splits).
    Neighbor,
    /// Collinear segments flanking a passage opening.
    Passage,
    /// Mutually visible segments.
    Visibility,
}

#[derive(Debug, Clone, Copy)]
pub struct VisEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub kind: EdgeKind,
}

/// Undirected weighted graph with wall segments as nodes.
#[derive(Debug, Clone, Default)]
pub struct VisibilityGraph {
    pub nodes: Vec<SegmentId>,
    pub edges: Vec<VisEdge>,
}

impl VisibilityGraph {
    pub fn node_index(&self, id: SegmentId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn add_edge(&mut self, a: usize, b: usize, weight: f64, kind: EdgeKind) {
        if a == b {
            return;
        }
        let (a, b) = (a.min(b), a.max(b));
        if let Some(e) = self.edges.iter_mut().find(|e| e.a == a && e.b == b) {
            // Structural edges win over visibility edges.
            if kind != EdgeKind::Visibility && e.kind == EdgeKind::Visibility {
                e.weight = weight;
                e.kind = kind;
            }
            return;
        }
        self.edges.push(VisEdge { a, b, weight, kind });
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut adj = DMatrix::zeros(n, n);
        for e in &self.edges {
            adj[(e.a, e.b)] = e.weight;
            adj[(e.b, e.a)] = e.weight;
        }
        adj
    }

    pub fn degree(&self, idx: usize) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.a == idx || e.b == idx)
            .map(|e| e.weight)
            .sum()
    }

    /// Subgraph induced by a set of segment ids, keeping all edge kinds.
    pub fn induced(&self, ids: &[SegmentId]) -> VisibilityGraph {
        let mut nodes: Vec<SegmentId> = ids.to_vec();
        nodes.sort();
        nodes.dedup();
        nodes.retain(|id| self.node_index(*id).is_some());
        let old_to_new: BTreeMap<usize, usize> = nodes
            .iter()
            .enumerate()
            .map(|(new, id)| (self.node_index(*id).unwrap(), new))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                match (old_to_new.get(&e.a), old_to_new.get(&e.b)) {
                    (Some(&a), Some(&b)) => Some(VisEdge { a, b, ..*e }),
                    _ => None,
                }
            })
            .collect();
        VisibilityGraph { nodes, edges }
    }

    /// Number of edges (any kind) with one end in each set.
    pub fn edges_between(&self, set_a: &[SegmentId], set_b: &[SegmentId]) -> usize {
        self.edges
            .iter()
            .filter(|e| {
                let ia = self.nodes[e.a];
                let ib = self.nodes[e.b];
                (set_a.contains(&ia) && set_b.contains(&ib))
                    || (set_a.contains(&ib) && set_b.contains(&ia))
            })
            .count()
    }
}

/// Product of the distance, robot-position and length weight factors.
pub fn edge_weight(
    a: &LineSegment,
    b: &LineSegment,
    cfg: &SegConfig,
    max_len: f64,
) -> Result<f64, SegmentationError> {
    if !(max_len > 0.0) {
        return Err(SegmentationError::ZeroMaxLength);
    }
    let d = segment_segment_distance(a, b);
    let w_d = (-cfg.weight_rate_distance * d * d).exp();
    let w_r = (-cfg.weight_rate_robot * a.last_robot_pos.distance(b.last_robot_pos)).exp();
    let w_l = (a.length() + b.length()) / (2.0 * max_len);
    Ok(w_d * w_r * w_l)
}

/// Builds the visibility graph from a processed segment graph.
///
/// Neighbor edges come from endpoint links, passage edges from collinear
/// same-facing pairs separated by a doorway-width gap (both weight 1), and
/// visibility edges from the mutual-visibility test with weights from
/// [`edge_weight`].
pub fn build_visibility_graph(graph: &SegmentGraph, cfg: &SegConfig) -> VisibilityGraph {
    let mut nodes: Vec<SegmentId> = graph.segments.iter().map(|s| s.id).collect();
    nodes.sort();
    let by_node: Vec<&LineSegment> = nodes
        .iter()
        .map(|id| graph.segment(*id).unwrap())
        .collect();
    let seg_of = |idx: usize| by_node[idx];
    let n = nodes.len();
    let mut gv = VisibilityGraph {
        nodes,
        edges: Vec::new(),
    };

    // Neighbor edges: undirected version of the segment graph links.
    for (a, b, kind) in graph.linked_segment_pairs() {
        let (Some(ia), Some(ib)) = (gv.node_index(a), gv.node_index(b)) else {
            continue;
        };
        let _ = kind;
        gv.add_edge(ia, ib, 1.0, EdgeKind::Neighbor);
    }

    // Passage edges: collinear, same normal direction, doorway-sized gap.
    for i in 0..n {
        for j in (i + 1)..n {
            let (si, sj) = (seg_of(i), seg_of(j));
            if is_passage_pair(si, sj, cfg) {
                gv.add_edge(i, j, 1.0, EdgeKind::Passage);
            }
        }
    }

    // Visibility edges.
    let max_len = graph
        .segments
        .iter()
        .map(|s| s.length())
        .fold(0.0, f64::max);
    for i in 0..n {
        let li = seg_of(i);
        // Candidates within range with an endpoint on l_i's positive side.
        let set_a: Vec<usize> = (0..n)
            .filter(|&k| k != i)
            .filter(|&k| {
                let lk = seg_of(k);
                segment_segment_distance(li, lk) <= cfg.visibility_radius
                    && (signed_side(lk.p1, li, ON_TOLERANCE) == HalfPlaneSide::Positive
                        || signed_side(lk.p2, li, ON_TOLERANCE) == HalfPlaneSide::Positive)
            })
            .collect();
        // Mutually facing candidates, with a noise margin on the midpoint
        // half-plane tests so opposite faces of one wall never pair up.
        let set_b: Vec<usize> = set_a
            .iter()
            .copied()
            .filter(|&k| {
                let lk = seg_of(k);
                signed_side(lk.midpoint(), li, cfg.halfplane_margin) == HalfPlaneSide::Positive
                    && signed_side(li.midpoint(), lk, cfg.halfplane_margin)
                        == HalfPlaneSide::Positive
            })
            .collect();
        for &j in &set_b {
            if gv
                .edges
                .iter()
                .any(|e| e.a == i.min(j) && e.b == i.max(j))
            {
                continue; // already linked structurally or from the other side
            }
            let lj = seg_of(j);
            let sight_blocked = set_a.iter().any(|&k| {
                if k == j {
                    return false;
                }
                let lk = seg_of(k);
                segments_intersect_raw(li.midpoint(), lj.midpoint(), lk.p1, lk.p2)
                    .point
                    .is_some()
            });
            if !sight_blocked {
                let w = edge_weight(li, lj, cfg, max_len).expect("nonzero max length");
                gv.add_edge(i, j, w, EdgeKind::Visibility);
            }
        }
    }
    gv
}

fn is_passage_pair(a: &LineSegment, b: &LineSegment, cfg: &SegConfig) -> bool {
    if a.normal.dot(b.normal) <= 0.0 {
        return false;
    }
    let cosine = a.direction().dot(b.direction()).abs().clamp(0.0, 1.0);
    if cosine.acos() > cfg.nonparallel_min_angle {
        return false;
    }
    // Lateral offset between the supporting lines.
    let off = a
        .direction()
        .perp()
        .dot(b.midpoint().sub(a.p1))
        .abs();
    if off > PASSAGE_LATERAL_TOL {
        return false;
    }
    // Gap between projected extents along the shared direction.
    let dir = a.direction();
    let proj = |p: crate::geometry::Point2| dir.dot(p.sub(a.p1));
    let (a0, a1) = (proj(a.p1).min(proj(a.p2)), proj(a.p1).max(proj(a.p2)));
    let (b0, b1) = (proj(b.p1).min(proj(b.p2)), proj(b.p1).max(proj(b.p2)));
    let gap = (b0 - a1).max(a0 - b1);
    gap >= cfg.doorway_min && gap <= cfg.doorway_max
}

/// Spectral clustering of the visibility graph.
///
/// Zero-degree nodes are excluded from the eigenproblem and labeled with
/// the room of the nearest labeled segment afterwards. Returns per-node
/// labels (aligned with `gv.nodes`) and the estimated cluster count.
pub fn spectral_cluster(
    gv: &VisibilityGraph,
    segments: &BTreeMap<SegmentId, LineSegment>,
    cfg: &SegConfig,
) -> (Vec<usize>, usize) {
    let n = gv.len();
    if n == 0 {
        return (Vec::new(), 1);
    }
    let usable: Vec<usize> = (0..n).filter(|&i| gv.degree(i) > 0.0).collect();
    if usable.len() < 2 {
        return (vec![0; n], 1);
    }
    let adj_full = gv.adjacency();
    let m = usable.len();
    let mut adj = DMatrix::zeros(m, m);
    for (r, &i) in usable.iter().enumerate() {
        for (c, &j) in usable.iter().enumerate() {
            adj[(r, c)] = adj_full[(i, j)];
        }
    }
    let lap = normalized_laplacian(&adj);
    let (values, vectors) = sorted_symmetric_eigen(&lap);
    let k = estimate_k_eigengap(&values, cfg.max_clusters.min(m));
    let u = DMatrix::from_fn(m, k, |i, j| vectors[(i, j)]);
    let (sub_labels, _) = cpqr_assign(&u, k);

    let mut labels = vec![usize::MAX; n];
    for (r, &i) in usable.iter().enumerate() {
        labels[i] = sub_labels[r];
    }
    // Isolated nodes adopt the room of the nearest labeled segment.
    for i in 0..n {
        if labels[i] != usize::MAX {
            continue;
        }
        let si = &segments[&gv.nodes[i]];
        let mut best = (0usize, f64::INFINITY);
        for &j in &usable {
            let sj = &segments[&gv.nodes[j]];
            let d = segment_segment_distance(si, sj);
            if d < best.1 {
                best = (labels[j], d);
            }
        }
        labels[i] = best.0;
    }
    (labels, k)
}
