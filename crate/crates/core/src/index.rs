//! Spatial room lookup: an R-tree over room bounding boxes with
//! positive-side tie-breaking for points in overlapping or missing boxes.

use crate::geometry::{
    bounding_box, half_plane_side, segment_point_distance, Aabb, HalfPlaneSide, LineSegment,
    Point2, SegmentId,
};
use crate::segmentation::{RoomId, RoomSet};
use rstar::{PointDistance, RTree, RTreeObject, AABB};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("room {0:?} has no segments")]
    EmptyRoom(RoomId),
    #[error("index is empty")]
    EmptyIndex,
}

#[derive(Debug, Clone)]
struct RoomEnvelope {
    room: RoomId,
    aabb: Aabb,
}

impl RTreeObject for RoomEnvelope {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        AABB::from_corners(
            [self.aabb.min.x, self.aabb.min.y],
            [self.aabb.max.x, self.aabb.max.y],
        )
    }
}

impl PointDistance for RoomEnvelope {
    fn distance_2(&self, point: &[f64; 2]) -> f64 {
        let d = self
            .aabb
            .distance_to_point(Point2::new(point[0], point[1]));
        d * d
    }

    fn contains_point(&self, point: &[f64; 2]) -> bool {
        self.aabb.contains(Point2::new(point[0], point[1]))
    }
}

/// R-tree over room bounding boxes plus each room's segments.
#[derive(Debug, Clone)]
pub struct RoomIndex {
    tree: RTree<RoomEnvelope>,
    boxes: BTreeMap<RoomId, Aabb>,
    room_segments: BTreeMap<RoomId, Vec<LineSegment>>,
}

impl RoomIndex {
    /// Builds the index from the current partition and segment geometry.
    pub fn build(
        rooms: &RoomSet,
        segments: &BTreeMap<SegmentId, LineSegment>,
    ) -> Result<Self, IndexError> {
        let mut envelopes = Vec::new();
        let mut boxes = BTreeMap::new();
        let mut room_segments = BTreeMap::new();
        for (&room, members) in rooms.rooms() {
            let segs: Vec<LineSegment> = members
                .iter()
                .filter_map(|id| segments.get(id).cloned())
                .collect();
            let refs: Vec<&LineSegment> = segs.iter().collect();
            let aabb = bounding_box(&refs).map_err(|_| IndexError::EmptyRoom(room))?;
            envelopes.push(RoomEnvelope { room, aabb });
            boxes.insert(room, aabb);
            room_segments.insert(room, segs);
        }
        if envelopes.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        Ok(Self {
            tree: RTree::bulk_load(envelopes),
            boxes,
            room_segments,
        })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn room_box(&self, room: RoomId) -> Option<&Aabb> {
        self.boxes.get(&room)
    }

    /// Closest segment of a room to `p` and its distance.
    fn closest_segment(&self, room: RoomId, p: Point2) -> Option<(&LineSegment, f64)> {
        self.room_segments.get(&room).and_then(|segs| {
            segs.iter()
                .map(|s| (s, segment_point_distance(p, s)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
        })
    }

    /// Tie-break among candidate rooms: positive side of exactly one room's
    /// closest segment wins; otherwise the closest qualifying segment;
    /// otherwise the closest segment overall.
    fn tie_break(&self, candidates: &[RoomId], p: Point2) -> RoomId {
        debug_assert!(!candidates.is_empty());
        let with_closest: Vec<(RoomId, &LineSegment, f64)> = candidates
            .iter()
            .filter_map(|&room| {
                self.closest_segment(room, p).map(|(s, d)| (room, s, d))
            })
            .collect();
        let positive: Vec<&(RoomId, &LineSegment, f64)> = with_closest
            .iter()
            .filter(|(_, s, _)| half_plane_side(p, s) == HalfPlaneSide::Positive)
            .collect();
        match positive.len() {
            1 => positive[0].0,
            0 => {
                with_closest
                    .iter()
                    .min_by(|a, b| a.2.total_cmp(&b.2))
                    .map(|(room, _, _)| *room)
                    .unwrap_or(candidates[0])
            }
            _ => {
                positive
                    .iter()
                    .min_by(|a, b| a.2.total_cmp(&b.2))
                    .map(|(room, _, _)| *room)
                    .unwrap()
            }
        }
    }

    /// Room containing `p`. Points inside several boxes resolve by the
    /// positive-side rule; points outside every box fall back to the
    /// nearest boxes and the same rule.
    pub fn locate(&self, p: Point2) -> RoomId {
        let hits: Vec<RoomId> = self
            .tree
            .locate_all_at_point(&[p.x, p.y])
            .map(|e| e.room)
            .collect();
        match hits.len() {
            1 => hits[0],
            0 => {
                // Nearest box distance, then tie-break among the closest.
                let mut best = f64::INFINITY;
                for aabb in self.boxes.values() {
                    best = best.min(aabb.distance_to_point(p));
                }
                let near: Vec<RoomId> = self
                    .boxes
                    .iter()
                    .filter(|(_, aabb)| aabb.distance_to_point(p) <= best + 1e-9)
                    .map(|(room, _)| *room)
                    .collect();
                self.tie_break(&near, p)
            }
            _ => {
                let mut sorted = hits;
                sorted.sort();
                self.tie_break(&sorted, p)
            }
        }
    }

    /// Room for a cluster of residual points.
    ///
    /// Candidates are the sensor's room and its connectivity neighbors
    /// whose boxes intersect the sensor-range disc; membership is box
    /// containment of the centroid with the locate tie-breaks as fallback.
    pub fn assign_cluster(
        &self,
        points: &[Point2],
        rooms: &RoomSet,
        sensor_room: RoomId,
        sensor_pos: Point2,
        sensor_range: f64,
    ) -> RoomId {
        debug_assert!(!points.is_empty());
        let n = points.len() as f64;
        let centroid = Point2::new(
            points.iter().map(|p| p.x).sum::<f64>() / n,
            points.iter().map(|p| p.y).sum::<f64>() / n,
        );
        let range_box = Aabb {
            min: Point2::new(sensor_pos.x - sensor_range, sensor_pos.y - sensor_range),
            max: Point2::new(sensor_pos.x + sensor_range, sensor_pos.y + sensor_range),
        };
        let mut candidates: Vec<RoomId> = vec![sensor_room];
        for neighbor in rooms.neighbors(sensor_room) {
            if let Some(aabb) = self.boxes.get(&neighbor) {
                if aabb.intersects(&range_box) {
                    candidates.push(neighbor);
                }
            }
        }
        candidates.retain(|r| self.boxes.contains_key(r));
        if candidates.is_empty() {
            return self.locate(centroid);
        }
        let containing: Vec<RoomId> = candidates
            .iter()
            .copied()
            .filter(|r| self.boxes[r].contains(centroid))
            .collect();
        match containing.len() {
            1 => containing[0],
            0 => self.tie_break(&candidates, centroid),
            _ => self.tie_break(&containing, centroid),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn seg(id: u64, p1: (f64, f64), p2: (f64, f64), room_side: (f64, f64)) -> LineSegment {
        LineSegment::facing(
            SegmentId(id),
            Point2::new(p1.0, p1.1),
            Point2::new(p2.0, p2.1),
            Point2::new(room_side.0, room_side.1),
        )
        .unwrap()
    }

    /// Four disjoint 3x3 rooms in a row with 1 m spacing.
    fn four_disjoint() -> (RoomSet, BTreeMap<SegmentId, LineSegment>) {
        let mut rooms = RoomSet::new();
        let mut segments = BTreeMap::new();
        for r in 0..4u64 {
            let ox = r as f64 * 4.0;
            let ids: Vec<SegmentId> = (0..4)
                .map(|w| {
                    let id = r * 4 + w;
                    let (cx, cy) = (ox + 1.5, 1.5);
                    let s = match w {
                        0 => seg(id, (ox, 0.0), (ox + 3.0, 0.0), (cx, cy)),
                        1 => seg(id, (ox + 3.0, 0.0), (ox + 3.0, 3.0), (cx, cy)),
                        2 => seg(id, (ox + 3.0, 3.0), (ox, 3.0), (cx, cy)),
                        _ => seg(id, (ox, 3.0), (ox, 0.0), (cx, cy)),
                    };
                    segments.insert(s.id, s.clone());
                    s.id
                })
                .collect();
            rooms.test_insert_room(RoomId(r as u32), ids);
        }
        (rooms, segments)
    }

    #[test]
    fn four_rooms_four_entries() {
        let (rooms, segments) = four_disjoint();
        let index = RoomIndex::build(&rooms, &segments).unwrap();
        assert_eq!(index.len(), 4);
    }

    #[test]
    fn point_in_single_box_resolves_directly() {
        let (rooms, segments) = four_disjoint();
        let index = RoomIndex::build(&rooms, &segments).unwrap();
        assert_eq!(index.locate(Point2::new(1.5, 1.5)), RoomId(0));
        assert_eq!(index.locate(Point2::new(13.5, 1.5)), RoomId(3));
    }

    #[test]
    fn overlap_resolves_by_positive_side() {
        // Two rooms sharing the band x in [2.5, 3.0]: room 0's east wall at
        // x=3 faces -x, room 1's west wall at x=2.5 faces +x.
        let mut rooms = RoomSet::new();
        let mut segments = BTreeMap::new();
        let r0 = [
            seg(0, (0.0, 0.0), (3.0, 0.0), (1.5, 1.5)),
            seg(1, (3.0, 0.0), (3.0, 3.0), (1.5, 1.5)),
            seg(2, (3.0, 3.0), (0.0, 3.0), (1.5, 1.5)),
            seg(3, (0.0, 3.0), (0.0, 0.0), (1.5, 1.5)),
        ];
        let r1 = [
            seg(4, (2.5, 0.0), (6.0, 0.0), (4.5, 1.5)),
            seg(5, (6.0, 0.0), (6.0, 3.0), (4.5, 1.5)),
            seg(6, (6.0, 3.0), (2.5, 3.0), (4.5, 1.5)),
            seg(7, (2.5, 3.0), (2.5, 0.0), (4.5, 1.5)),
        ];
        for s in r0.iter().chain(r1.iter()) {
            segments.insert(s.id, s.clone());
        }
        rooms.test_insert_room(RoomId(0), r0.iter().map(|s| s.id).collect());
        rooms.test_insert_room(RoomId(1), r1.iter().map(|s| s.id).collect());
        let index = RoomIndex::build(&rooms, &segments).unwrap();
        // Inside the overlap both closest segments report positive, so the
        // closer one (room 0's east wall at 0.2 m vs 0.3 m) decides.
        assert_eq!(index.locate(Point2::new(2.8, 1.5)), RoomId(0));
    }

    #[test]
    fn closest_segment_breaks_double_positive() {
        let (rooms, segments) = four_disjoint();
        let index = RoomIndex::build(&rooms, &segments).unwrap();
        // Between rooms 0 and 1, outside both boxes: closer to room 0's
        // east wall (0.5 m) than room 1's west wall (0.5 m)... offset it.
        let room = index.locate(Point2::new(3.3, 1.5));
        assert_eq!(room, RoomId(0));
        let room = index.locate(Point2::new(3.7, 1.5));
        assert_eq!(room, RoomId(1));
    }

    #[test]
    fn every_point_receives_some_room() {
        let (rooms, segments) = four_disjoint();
        let index = RoomIndex::build(&rooms, &segments).unwrap();
        for (x, y) in [(-50.0, -50.0), (100.0, 3.0), (7.5, 1.5), (0.0, 88.0)] {
            let _ = index.locate(Point2::new(x, y));
        }
    }

    #[test]
    fn empty_room_is_an_error() {
        let mut rooms = RoomSet::new();
        rooms.test_insert_room(RoomId(0), vec![]);
        let segments = BTreeMap::new();
        assert!(matches!(
            RoomIndex::build(&rooms, &segments),
            Err(IndexError::EmptyRoom(_))
        ));
    }

    #[test]
    fn cluster_centroid_assignment() {
        let (mut rooms, segments) = four_disjoint();
        rooms.test_connect(RoomId(0), RoomId(1));
        let index = RoomIndex::build(&rooms, &segments).unwrap();
        // Centroid of {(1,1), (3,3)} is (2,2): arithmetic mean.
        let pts = [Point2::new(1.0, 1.0), Point2::new(3.0, 3.0)];
        let room = index.assign_cluster(&pts, &rooms, RoomId(0), Point2::new(1.5, 1.5), 8.0);
        assert_eq!(room, RoomId(0));
        // Cluster clearly inside the neighbor's box.
        let pts = [Point2::new(4.4, 1.5), Point2::new(4.6, 1.5)];
        let room = index.assign_cluster(&pts, &rooms, RoomId(0), Point2::new(1.5, 1.5), 8.0);
        assert_eq!(room, RoomId(1));
        // Centroid in no candidate box: falls back to the tie-break.
        let pts = [Point2::new(3.4, 1.5)];
        let room = index.assign_cluster(&pts, &rooms, RoomId(0), Point2::new(1.5, 1.5), 8.0);
        assert_eq!(room, RoomId(0));
    }
}
