//! Segment-graph processing: the three rules that connect and split wall
//! segments into a corner-linked graph before visibility analysis.
//!
//! Processing works on a fresh copy of the raw wall store each pass. Splits
//! issue ids derived from the root wall and the piece's position along it,
//! so the same wall split at the same doorways yields the same ids on every
//! pass and downstream room state stays stable. All three rules run as
//! sweeps in id order and repeat until a full pass changes nothing.

use crate::geometry::{
    segment_point_distance, supporting_line_intersection, LineSegment, Point2, SegmentId,
};
use crate::segmentation::SegConfig;
use std::collections::BTreeMap;

/// Derived ids carry the root wall id and the piece ordinal along it.
const DERIVED_BIT: u64 = 1 << 63;
/// Temporary ids used only while processing runs.
const TEMP_BASE: u64 = 1 << 62;

fn derived_id(root: SegmentId, ordinal: u64) -> SegmentId {
    SegmentId(DERIVED_BIT | (root.0 << 12) | ordinal)
}

/// Which endpoint of a segment a link attaches to.
pub type EndpointRef = (SegmentId, u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// Two endpoints meeting at a corner.
    Corner,
    /// The two halves of a wall split across a doorway opening.
    Doorway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CornerLink {
    pub a: EndpointRef,
    pub b: EndpointRef,
    pub kind: LinkKind,
}

impl CornerLink {
    fn normalized(a: EndpointRef, b: EndpointRef, kind: LinkKind) -> Self {
        if a <= b {
            Self { a, b, kind }
        } else {
            Self { a: b, b: a, kind }
        }
    }
}

/// Directed segment graph: wall segments plus endpoint links.
#[derive(Debug, Clone, Default)]
pub struct SegmentGraph {
    pub segments: Vec<LineSegment>,
    pub links: Vec<CornerLink>,
    /// Root raw segment of every piece.
    roots: BTreeMap<SegmentId, SegmentId>,
    /// Original geometry of the raw segments, for ordinal assignment.
    originals: BTreeMap<SegmentId, LineSegment>,
    temp_counter: u64,
}

impl SegmentGraph {
    pub fn new(mut segments: Vec<LineSegment>) -> Self {
        segments.sort_by_key(|s| s.id);
        let roots = segments.iter().map(|s| (s.id, s.id)).collect();
        let originals = segments.iter().map(|s| (s.id, s.clone())).collect();
        Self {
            segments,
            links: Vec::new(),
            roots,
            originals,
            temp_counter: TEMP_BASE,
        }
    }

    pub fn segment(&self, id: SegmentId) -> Option<&LineSegment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn endpoint_linked(&self, ep: EndpointRef) -> bool {
        self.links.iter().any(|l| l.a == ep || l.b == ep)
    }

    fn linked_together(&self, a: EndpointRef, b: EndpointRef) -> bool {
        let probe = CornerLink::normalized(a, b, LinkKind::Corner);
        self.links.iter().any(|l| l.a == probe.a && l.b == probe.b)
    }

    fn add_link(&mut self, a: EndpointRef, b: EndpointRef, kind: LinkKind) {
        let link = CornerLink::normalized(a, b, kind);
        if !self.links.iter().any(|l| l.a == link.a && l.b == link.b) {
            self.links.push(link);
        }
    }

    /// Segment pairs joined by at least one link, deduplicated.
    pub fn linked_segment_pairs(&self) -> Vec<(SegmentId, SegmentId, LinkKind)> {
        let mut pairs: Vec<(SegmentId, SegmentId, LinkKind)> = Vec::new();
        for l in &self.links {
            let (x, y) = (l.a.0.min(l.b.0), l.a.0.max(l.b.0));
            if x != y && !pairs.iter().any(|&(a, b, _)| a == x && b == y) {
                pairs.push((x, y, l.kind));
            }
        }
        pairs
    }

    /// Runs the three processing rules to a fixed point, then replaces the
    /// temporary split ids with canonical root-and-ordinal ids.
    pub fn process(&mut self, cfg: &SegConfig) {
        let mut converged = false;
        for _ in 0..64 {
            let mut changed = false;
            changed |= self.connect_corners(cfg);
            changed |= self.split_at_corners(cfg);
            changed |= self.split_at_doorways(cfg);
            if !changed {
                converged = true;
                break;
            }
        }
        debug_assert!(converged, "segment graph processing did not reach a fixed point");
        self.canonicalize_ids();
    }

    fn canonicalize_ids(&mut self) {
        // Group split pieces by root, order along the root direction.
        let mut by_root: BTreeMap<SegmentId, Vec<SegmentId>> = BTreeMap::new();
        for s in &self.segments {
            if s.id.0 >= TEMP_BASE {
                by_root.entry(self.roots[&s.id]).or_default().push(s.id);
            }
        }
        let mut remap: BTreeMap<SegmentId, SegmentId> = BTreeMap::new();
        for (root, mut ids) in by_root {
            let origin = self.originals[&root].clone();
            let dir = origin.direction();
            let along = |id: &SegmentId| {
                let m = self.segment(*id).unwrap().midpoint();
                dir.dot(m.sub(origin.p1))
            };
            ids.sort_by(|a, b| along(a).total_cmp(&along(b)));
            for (ordinal, id) in ids.into_iter().enumerate() {
                remap.insert(id, derived_id(root, ordinal as u64));
            }
        }
        for s in &mut self.segments {
            if let Some(&new_id) = remap.get(&s.id) {
                s.id = new_id;
            }
        }
        for link in &mut self.links {
            for ep in [&mut link.a, &mut link.b] {
                if let Some(&new_id) = remap.get(&ep.0) {
                    ep.0 = new_id;
                }
            }
        }
        self.segments.sort_by_key(|s| s.id);
    }

    /// Rule 1: snap the closest endpoints of a qualifying non-parallel pair
    /// to the intersection of their supporting lines and link them.
    fn connect_corners(&mut self, cfg: &SegConfig) -> bool {
        let mut changed = false;
        while let Some((i, j, ei, ej, corner)) = self.find_corner_candidate(cfg) {
            self.segments[i].set_endpoint(ei, corner);
            self.segments[j].set_endpoint(ej, corner);
            self.segments[i].renormalize();
            self.segments[j].renormalize();
            let a = (self.segments[i].id, ei);
            let b = (self.segments[j].id, ej);
            self.add_link(a, b, LinkKind::Corner);
            changed = true;
        }
        changed
    }

    fn find_corner_candidate(&self, cfg: &SegConfig) -> Option<(usize, usize, u8, u8, Point2)> {
        let n = self.segments.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let (s1, s2) = (&self.segments[i], &self.segments[j]);
                if !non_parallel(s1, s2, cfg) {
                    continue;
                }
                let mut best = (0u8, 0u8, f64::INFINITY);
                for ei in 0..2u8 {
                    for ej in 0..2u8 {
                        let d = s1.endpoint(ei as usize).distance(s2.endpoint(ej as usize));
                        if d < best.2 {
                            best = (ei, ej, d);
                        }
                    }
                }
                let (ei, ej, dist) = best;
                if dist >= cfg.corner_threshold {
                    continue;
                }
                let a = (s1.id, ei);
                let b = (s2.id, ej);
                if self.endpoint_linked(a) || self.endpoint_linked(b) || self.linked_together(a, b)
                {
                    continue;
                }
                let Some(corner) = supporting_line_intersection(s1, s2) else {
                    continue;
                };
                // The snap must stay local and keep both segments legal.
                if corner.distance(s1.endpoint(ei as usize)) > cfg.corner_threshold
                    || corner.distance(s2.endpoint(ej as usize)) > cfg.corner_threshold
                {
                    continue;
                }
                if corner.distance(s1.endpoint(1 - ei as usize)) < cfg.min_segment_length
                    || corner.distance(s2.endpoint(1 - ej as usize)) < cfg.min_segment_length
                {
                    continue;
                }
                if !normals_agree_about_corner(s1, s2, corner) {
                    continue;
                }
                return Some((i, j, ei, ej, corner));
            }
        }
        None
    }

    /// Rule 2: split a segment crossed near an unconnected endpoint of a
    /// non-parallel neighbor, forming a T corner.
    fn split_at_corners(&mut self, cfg: &SegConfig) -> bool {
        let mut changed = false;
        while let Some((target, cutter, e2, x)) = self.find_split_candidate(cfg, false) {
            let cutter_idx = self.index_of(cutter);
            self.segments[cutter_idx].set_endpoint(e2, x);
            self.segments[cutter_idx].renormalize();
            let (half_a, half_b) = self.split_segment(target, x);
            // The new endpoints at the corner link to the cutter's endpoint.
            self.add_link((half_a, 1), (cutter, e2), LinkKind::Corner);
            self.add_link((half_b, 0), (cutter, e2), LinkKind::Corner);
            changed = true;
        }
        changed
    }

    /// Rule 3: split a segment across a doorway-width gap from a neighbor's
    /// endpoint; the two halves stay linked at the split point.
    fn split_at_doorways(&mut self, cfg: &SegConfig) -> bool {
        let mut changed = false;
        while let Some((target, _cutter, _e2, x)) = self.find_split_candidate(cfg, true) {
            let (half_a, half_b) = self.split_segment(target, x);
            self.add_link((half_a, 1), (half_b, 0), LinkKind::Doorway);
            changed = true;
        }
        changed
    }

    /// Shared candidate search for the two split rules. `doorway` selects
    /// the distance window and skips the unconnected-endpoint requirement.
    fn find_split_candidate(
        &self,
        cfg: &SegConfig,
        doorway: bool,
    ) -> Option<(SegmentId, SegmentId, u8, Point2)> {
        let n = self.segments.len();
        for ti in 0..n {
            for ci in 0..n {
                if ti == ci {
                    continue;
                }
                let target = &self.segments[ti];
                let cutter = &self.segments[ci];
                if !non_parallel(target, cutter, cfg) {
                    continue;
                }
                let d1 = segment_point_distance(cutter.p1, target);
                let d2 = segment_point_distance(cutter.p2, target);
                let (e2, dist) = if d1 <= d2 { (0u8, d1) } else { (1u8, d2) };
                let in_window = if doorway {
                    dist >= cfg.doorway_min && dist <= cfg.doorway_max
                } else {
                    dist < cfg.corner_threshold
                };
                if !in_window {
                    continue;
                }
                if !doorway && self.endpoint_linked((cutter.id, e2)) {
                    continue;
                }
                let Some(x) = supporting_line_intersection(target, cutter) else {
                    continue;
                };
                // The crossing must lie on the target, a legal segment
                // length away from both of its endpoints.
                let along = target.direction().dot(x.sub(target.p1));
                if along < cfg.min_segment_length
                    || along > target.length() - cfg.min_segment_length
                {
                    continue;
                }
                // Locality: the crossing belongs near the cutter endpoint.
                let reach = x.distance(cutter.endpoint(e2 as usize));
                let max_reach = if doorway {
                    cfg.doorway_max * 1.5
                } else {
                    cfg.corner_threshold
                };
                if reach > max_reach {
                    continue;
                }
                return Some((target.id, cutter.id, e2, x));
            }
        }
        None
    }

    fn index_of(&self, id: SegmentId) -> usize {
        self.segments
            .iter()
            .position(|s| s.id == id)
            .expect("segment id present")
    }

    /// Splits `id` at `x` into `[p1 -> x]` and `[x -> p2]`, both keeping the
    /// parent's normal and observation point. Existing links follow the
    /// endpoint they were attached to. Returns the two child ids.
    fn split_segment(&mut self, id: SegmentId, x: Point2) -> (SegmentId, SegmentId) {
        let idx = self.index_of(id);
        let parent = self.segments.remove(idx);
        let id_a = SegmentId(self.temp_counter);
        let id_b = SegmentId(self.temp_counter + 1);
        self.temp_counter += 2;
        let root = self.roots[&parent.id];
        self.roots.insert(id_a, root);
        self.roots.insert(id_b, root);
        let mut half_a = LineSegment {
            id: id_a,
            p1: parent.p1,
            p2: x,
            normal: parent.normal,
            last_robot_pos: parent.last_robot_pos,
        };
        let mut half_b = LineSegment {
            id: id_b,
            p1: x,
            p2: parent.p2,
            normal: parent.normal,
            last_robot_pos: parent.last_robot_pos,
        };
        half_a.renormalize();
        half_b.renormalize();
        self.segments.push(half_a);
        self.segments.push(half_b);
        self.segments.sort_by_key(|s| s.id);
        for link in &mut self.links {
            for ep in [&mut link.a, &mut link.b] {
                if ep.0 == id {
                    *ep = if ep.1 == 0 { (id_a, 0) } else { (id_b, 1) };
                }
            }
        }
        (id_a, id_b)
    }

    #[cfg(test)]
    fn no_rule_applies(&self, cfg: &SegConfig) -> bool {
        self.find_corner_candidate(cfg).is_none()
            && self.find_split_candidate(cfg, false).is_none()
            && self.find_split_candidate(cfg, true).is_none()
    }
}

trait EndpointMut {
    fn set_endpoint(&mut self, idx: u8, p: Point2);
}

impl EndpointMut for LineSegment {
    fn set_endpoint(&mut self, idx: u8, p: Point2) {
        if idx == 0 {
            self.p1 = p;
        } else {
            self.p2 = p;
        }
    }
}

fn non_parallel(a: &LineSegment, b: &LineSegment, cfg: &SegConfig) -> bool {
    let cosine = a.direction().dot(b.direction()).abs().clamp(0.0, 1.0);
    cosine.acos() > cfg.nonparallel_min_angle
}

/// Sign agreement of `n_i . (corner - m_j)` across the pair: true when both
/// normals point toward the corner side of the other segment or both away.
fn normals_agree_about_corner(s1: &LineSegment, s2: &LineSegment, corner: Point2) -> bool {
    let a = s1.normal.dot(corner.sub(s2.midpoint()));
    let b = s2.normal.dot(corner.sub(s1.midpoint()));
    if a.abs() <= 1e-12 || b.abs() <= 1e-12 {
        return false;
    }
    (a > 0.0) == (b > 0.0)
}
