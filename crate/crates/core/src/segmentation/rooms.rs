//! The evolving room partition and its incremental update.
//!
//! Each segmentation pass re-clusters the visibility graph and compares the
//! suggested cluster count `k` against the current one. Fewer clusters
//! re-labels the whole graph; more clusters triggers a Fiedler-vetted split
//! of the robot's current room; an unchanged count keeps room identities and
//! only moves segments whose membership changed.

use crate::geometry::{segment_segment_distance, LineSegment, SegmentId};
use crate::segmentation::spectral::{
    cpqr_assign, fiedler_value, normalized_laplacian, sorted_symmetric_eigen,
};
use crate::segmentation::visibility::{spectral_cluster, EdgeKind, VisibilityGraph};
use crate::segmentation::SegConfig;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct RoomId(pub u32);

/// Structural change of the room partition, consumed by the model layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoomEvent {
    /// `parent` was divided; `child` is the new room.
    Split { parent: RoomId, child: RoomId },
    /// All segments of `from` were absorbed into `into`.
    Merge { from: RoomId, into: RoomId },
    /// One segment changed rooms.
    Moved {
        segment: SegmentId,
        from: RoomId,
        to: RoomId,
    },
}

/// Partition of the segment set into rooms plus the room adjacency.
#[derive(Debug, Clone, Default)]
pub struct RoomSet {
    rooms: BTreeMap<RoomId, BTreeSet<SegmentId>>,
    /// Cluster count of the previous segmentation pass.
    pub k_old: usize,
    pub connectivity: BTreeSet<(RoomId, RoomId)>,
    next_room: u32,
}

/// Result of one incremental update.
#[derive(Debug, Clone, Default)]
pub struct UpdateOutcome {
    pub events: Vec<RoomEvent>,
    /// Suggested cluster count from the full-graph pass.
    pub suggested_k: usize,
}

impl RoomSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn k(&self) -> usize {
        self.rooms.len()
    }

    pub fn rooms(&self) -> &BTreeMap<RoomId, BTreeSet<SegmentId>> {
        &self.rooms
    }

    pub fn room_ids(&self) -> Vec<RoomId> {
        self.rooms.keys().copied().collect()
    }

    pub fn members(&self, room: RoomId) -> Option<&BTreeSet<SegmentId>> {
        self.rooms.get(&room)
    }

    pub fn room_of(&self, segment: SegmentId) -> Option<RoomId> {
        self.rooms
            .iter()
            .find(|(_, members)| members.contains(&segment))
            .map(|(id, _)| *id)
    }

    pub fn neighbors(&self, room: RoomId) -> Vec<RoomId> {
        self.connectivity
            .iter()
            .filter_map(|&(a, b)| {
                if a == room {
                    Some(b)
                } else if b == room {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    fn fresh_room(&mut self) -> RoomId {
        let id = RoomId(self.next_room);
        self.next_room += 1;
        id
    }

    /// True when the rooms exactly partition the given segment set.
    pub fn is_partition_of(&self, ids: &[SegmentId]) -> bool {
        let mut seen = BTreeSet::new();
        for members in self.rooms.values() {
            for id in members {
                if !seen.insert(*id) {
                    return false;
                }
            }
        }
        let expected: BTreeSet<SegmentId> = ids.iter().copied().collect();
        seen == expected
    }

    /// Drops segments that left the graph and attaches new ones to the room
    /// of their nearest segment.
    fn reconcile(&mut self, gv: &VisibilityGraph, segments: &BTreeMap<SegmentId, LineSegment>) {
        let alive: BTreeSet<SegmentId> = gv.nodes.iter().copied().collect();
        for members in self.rooms.values_mut() {
            members.retain(|id| alive.contains(id));
        }
        self.rooms.retain(|_, members| !members.is_empty());

        let assigned: BTreeSet<SegmentId> =
            self.rooms.values().flatten().copied().collect();
        let fresh: Vec<SegmentId> = alive.difference(&assigned).copied().collect();
        if fresh.is_empty() {
            return;
        }
        if self.rooms.is_empty() {
            let room = self.fresh_room();
            self.rooms.insert(room, fresh.into_iter().collect());
            return;
        }
        for id in fresh {
            let seg = &segments[&id];
            let mut best: Option<(RoomId, f64)> = None;
            for (&room, members) in &self.rooms {
                for other in members {
                    if let Some(o) = segments.get(other) {
                        let d = segment_segment_distance(seg, o);
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((room, d));
                        }
                    }
                }
            }
            let room = best.map(|(r, _)| r).unwrap_or_else(|| self.fresh_room());
            self.rooms.entry(room).or_default().insert(id);
        }
    }

    /// Test scaffolding: insert a room with fixed id and members.
    #[cfg(test)]
    pub(crate) fn test_insert_room(&mut self, id: RoomId, segs: Vec<SegmentId>) {
        self.rooms.insert(id, segs.into_iter().collect());
        self.next_room = self.next_room.max(id.0 + 1);
    }

    #[cfg(test)]
    pub(crate) fn test_connect(&mut self, a: RoomId, b: RoomId) {
        self.connectivity.insert((a.min(b), a.max(b)));
    }

    fn rebuild_connectivity(&mut self, gv: &VisibilityGraph) {
        self.connectivity.clear();
        for e in &gv.edges {
            if e.kind == EdgeKind::Visibility {
                continue;
            }
            let (Some(ra), Some(rb)) = (
                self.room_of(gv.nodes[e.a]),
                self.room_of(gv.nodes[e.b]),
            ) else {
                continue;
            };
            if ra != rb {
                self.connectivity.insert((ra.min(rb), ra.max(rb)));
            }
        }
    }
}

/// Greedy max-overlap matching of fresh clusters onto existing room ids;
/// unmatched clusters get fresh ids.
fn match_clusters_to_rooms(
    state: &mut RoomSet,
    clusters: &[BTreeSet<SegmentId>],
) -> Vec<RoomId> {
    let old_rooms: Vec<(RoomId, BTreeSet<SegmentId>)> = state
        .rooms
        .iter()
        .map(|(id, m)| (*id, m.clone()))
        .collect();
    let mut overlaps: Vec<(usize, usize, usize)> = Vec::new(); // (overlap, cluster, room idx)
    for (c, cluster) in clusters.iter().enumerate() {
        for (r, (_, members)) in old_rooms.iter().enumerate() {
            let ov = cluster.intersection(members).count();
            if ov > 0 {
                overlaps.push((ov, c, r));
            }
        }
    }
    overlaps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cluster_room: Vec<Option<RoomId>> = vec![None; clusters.len()];
    let mut room_taken = vec![false; old_rooms.len()];
    for (_, c, r) in overlaps {
        if cluster_room[c].is_none() && !room_taken[r] {
            cluster_room[c] = Some(old_rooms[r].0);
            room_taken[r] = true;
        }
    }
    cluster_room
        .into_iter()
        .map(|assigned| assigned.unwrap_or_else(|| state.fresh_room()))
        .collect()
}

/// Replaces the partition with the given clusters, emitting move and merge
/// events against the previous membership.
fn adopt_clusters(
    state: &mut RoomSet,
    clusters: Vec<BTreeSet<SegmentId>>,
    events: &mut Vec<RoomEvent>,
) {
    let previous: BTreeMap<SegmentId, RoomId> = state
        .rooms
        .iter()
        .flat_map(|(room, members)| members.iter().map(|s| (*s, *room)))
        .collect();
    let ids = match_clusters_to_rooms(state, &clusters);
    let dissolved: Vec<RoomId> = state
        .rooms
        .keys()
        .filter(|r| !ids.contains(r))
        .copied()
        .collect();
    // Where did each dissolved room's membership go? Plurality wins.
    for room in dissolved {
        let members = state.rooms[&room].clone();
        let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
        for (c, cluster) in clusters.iter().enumerate() {
            let ov = cluster.intersection(&members).count();
            if ov > 0 {
                *tally.entry(c).or_default() += ov;
            }
        }
        if let Some((&c, _)) = tally.iter().max_by_key(|(_, &n)| n) {
            events.push(RoomEvent::Merge {
                from: room,
                into: ids[c],
            });
        }
    }
    let mut new_rooms = BTreeMap::new();
    for (cluster, id) in clusters.into_iter().zip(ids.iter()) {
        for seg in &cluster {
            if let Some(&old) = previous.get(seg) {
                if old != *id
                    && !events
                        .iter()
                        .any(|e| matches!(e, RoomEvent::Merge { from, .. } if *from == old))
                {
                    events.push(RoomEvent::Moved {
                        segment: *seg,
                        from: old,
                        to: *id,
                    });
                }
            }
        }
        new_rooms.insert(*id, cluster);
    }
    state.rooms = new_rooms;
}

/// Two-way spectral cut of an induced subgraph. Returns the member sets or
/// `None` when one side comes out empty.
fn bisect(sub: &VisibilityGraph) -> Option<(Vec<SegmentId>, Vec<SegmentId>)> {
    let adj = sub.adjacency();
    let lap = normalized_laplacian(&adj);
    let (_, vectors) = sorted_symmetric_eigen(&lap);
    let u = DMatrix::from_fn(sub.len(), 2, |i, j| vectors[(i, j)]);
    let (labels, _) = cpqr_assign(&u, 2);
    let a: Vec<SegmentId> = sub
        .nodes
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == 0)
        .map(|(id, _)| *id)
        .collect();
    let b: Vec<SegmentId> = sub
        .nodes
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == 1)
        .map(|(id, _)| *id)
        .collect();
    if a.is_empty() || b.is_empty() {
        None
    } else {
        Some((a, b))
    }
}

/// One segmentation pass over the full visibility graph.
///
/// `current_room` is the room the robot is in, the only candidate for a
/// split when the eigengap suggests more rooms than currently exist.
pub fn incremental_update(
    state: &mut RoomSet,
    gv: &VisibilityGraph,
    segments: &BTreeMap<SegmentId, LineSegment>,
    current_room: Option<RoomId>,
    cfg: &SegConfig,
) -> UpdateOutcome {
    let mut outcome = UpdateOutcome::default();
    state.reconcile(gv, segments);
    if gv.is_empty() {
        state.k_old = state.k();
        return outcome;
    }
    let k_old = state.k();
    let (labels, k) = spectral_cluster(gv, segments, cfg);
    outcome.suggested_k = k;

    if k < k_old {
        let mut clusters: Vec<BTreeSet<SegmentId>> = vec![BTreeSet::new(); k];
        for (i, &label) in labels.iter().enumerate() {
            clusters[label].insert(gv.nodes[i]);
        }
        clusters.retain(|c| !c.is_empty());
        adopt_clusters(state, clusters, &mut outcome.events);
    } else if k > k_old {
        // A new room may exist: test the robot's current room locally.
        let room = current_room
            .filter(|r| state.rooms.contains_key(r))
            .or_else(|| state.rooms.keys().next().copied());
        if let Some(room) = room {
            let member_ids: Vec<SegmentId> =
                state.rooms[&room].iter().copied().collect();
            let sub = gv.induced(&member_ids);
            if sub.len() >= 2 {
                let fiedler = fiedler_value(&sub.adjacency()).unwrap_or(f64::INFINITY);
                if fiedler < cfg.fiedler_threshold {
                    if let Some((part_a, part_b)) = bisect(&sub) {
                        let cross = gv.edges_between(&part_a, &part_b);
                        let ratio = cross as f64 / part_a.len().min(part_b.len()) as f64;
                        if ratio < cfg.edge_ratio_threshold {
                            // Larger part keeps the room id.
                            let (keep, split_off) = if part_a.len() >= part_b.len() {
                                (part_a, part_b)
                            } else {
                                (part_b, part_a)
                            };
                            let child = state.fresh_room();
                            state.rooms.insert(child, split_off.iter().copied().collect());
                            state
                                .rooms
                                .insert(room, keep.iter().copied().collect());
                            outcome.events.push(RoomEvent::Split {
                                parent: room,
                                child,
                            });
                        }
                    }
                }
            }
        }
    } else {
        // Same count: keep identities, move strays.
        let mut clusters: Vec<BTreeSet<SegmentId>> = vec![BTreeSet::new(); k];
        for (i, &label) in labels.iter().enumerate() {
            clusters[label].insert(gv.nodes[i]);
        }
        clusters.retain(|c| !c.is_empty());
        adopt_clusters(state, clusters, &mut outcome.events);
    }

    state.rebuild_connectivity(gv);
    state.k_old = state.k();
    debug_assert!(state.is_partition_of(&gv.nodes));
    outcome
}
