//! Exact 2D primitives shared by every other module.
//!
//! All geometry is double precision in meters. Predicates that classify a
//! point against a line use an "on" tolerance of [`ON_TOLERANCE`] (1e-9 m),
//! far below sensor noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance below which a signed offset counts as "on the line".
pub const ON_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("degenerate segment of length {0}")]
    DegenerateSegment(f64),
    #[error("normal is not a unit perpendicular of the segment direction")]
    BadNormal,
    #[error("bounding box of an empty segment set")]
    EmptySegmentSet,
}

/// Stable identifier for a line segment in the global map.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct SegmentId(pub u64);

/// A position in the world frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (z component of the 3D cross).
    pub fn cross(&self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn sub(&self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(&self, other: Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(&self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(&self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn normalized(&self) -> Point2 {
        let n = self.norm();
        Point2::new(self.x / n, self.y / n)
    }
}

/// Side of a segment's supporting line, as seen from its normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfPlaneSide {
    Positive,
    Negative,
    On,
}

/// A wall face: two endpoints, an inward unit normal, and the most recent
/// robot position from which the face was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub id: SegmentId,
    pub p1: Point2,
    pub p2: Point2,
    /// Unit normal, perpendicular to `p2 - p1`, pointing into the room.
    pub normal: Point2,
    /// Most recent robot position from which this segment was observed.
    pub last_robot_pos: Point2,
}

impl LineSegment {
    /// Builds a segment with an explicit normal, validating the invariants.
    pub fn try_new(
        id: SegmentId,
        p1: Point2,
        p2: Point2,
        normal: Point2,
        last_robot_pos: Point2,
    ) -> Result<Self, GeometryError> {
        for p in [p1, p2, normal, last_robot_pos] {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(p.x, p.y));
            }
        }
        let len = p1.distance(p2);
        if len < ON_TOLERANCE {
            return Err(GeometryError::DegenerateSegment(len));
        }
        let dir = p2.sub(p1).scale(1.0 / len);
        if (normal.norm() - 1.0).abs() > ON_TOLERANCE || normal.dot(dir).abs() > ON_TOLERANCE {
            return Err(GeometryError::BadNormal);
        }
        Ok(Self {
            id,
            p1,
            p2,
            normal,
            last_robot_pos,
        })
    }

    /// Builds a segment whose normal faces the observer position.
    ///
    /// Errors if the observer lies on the supporting line (no facing side).
    pub fn facing(
        id: SegmentId,
        p1: Point2,
        p2: Point2,
        observer: Point2,
    ) -> Result<Self, GeometryError> {
        let len = p1.distance(p2);
        if len < ON_TOLERANCE {
            return Err(GeometryError::DegenerateSegment(len));
        }
        let dir = p2.sub(p1).scale(1.0 / len);
        let perp = dir.perp();
        let side = perp.dot(observer.sub(p1));
        if side.abs() <= ON_TOLERANCE {
            return Err(GeometryError::BadNormal);
        }
        let normal = if side > 0.0 { perp } else { perp.scale(-1.0) };
        Self::try_new(id, p1, p2, normal, observer)
    }

    pub fn length(&self) -> f64 {
        self.p1.distance(self.p2)
    }

    /// Unit direction from `p1` to `p2`.
    pub fn direction(&self) -> Point2 {
        self.p2.sub(self.p1).normalized()
    }

    pub fn midpoint(&self) -> Point2 {
        Point2::new((self.p1.x + self.p2.x) / 2.0, (self.p1.y + self.p2.y) / 2.0)
    }

    pub fn endpoint(&self, idx: usize) -> Point2 {
        if idx == 0 {
            self.p1
        } else {
            self.p2
        }
    }

    /// Re-derives the unit normal after an endpoint moved, keeping the side
    /// the previous normal pointed to.
    pub fn renormalize(&mut self) {
        let perp = self.direction().perp();
        self.normal = if perp.dot(self.normal) >= 0.0 {
            perp
        } else {
            perp.scale(-1.0)
        };
    }
}

/// Minimum Euclidean distance from `p` to the closed segment.
pub fn segment_point_distance(p: Point2, s: &LineSegment) -> f64 {
    segment_point_distance_raw(p, s.p1, s.p2)
}

/// Distance from a point to the closed segment `a..b`.
pub fn segment_point_distance_raw(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a.add(ab.scale(t)))
}

/// The point of the closed segment closest to `p`.
pub fn closest_point_on_segment(p: Point2, s: &LineSegment) -> Point2 {
    let ab = s.p2.sub(s.p1);
    let len2 = ab.dot(ab);
    let t = (p.sub(s.p1).dot(ab) / len2).clamp(0.0, 1.0);
    s.p1.add(ab.scale(t))
}

/// Minimum distance between two closed segments.
pub fn segment_segment_distance(s1: &LineSegment, s2: &LineSegment) -> f64 {
    if segments_intersect(s1, s2).point.is_some() {
        return 0.0;
    }
    segment_point_distance(s1.p1, s2)
        .min(segment_point_distance(s1.p2, s2))
        .min(segment_point_distance(s2.p1, s1))
        .min(segment_point_distance(s2.p2, s1))
}

/// Outcome of a closed-segment intersection test. Collinear overlap is not
/// reported as an intersection; it only sets the flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentIntersection {
    pub point: Option<Point2>,
    pub collinear: bool,
}

/// Intersection of two closed segments, if they cross transversally.
pub fn segments_intersect(s1: &LineSegment, s2: &LineSegment) -> SegmentIntersection {
    segments_intersect_raw(s1.p1, s1.p2, s2.p1, s2.p2)
}

pub fn segments_intersect_raw(
    a1: Point2,
    a2: Point2,
    b1: Point2,
    b2: Point2,
) -> SegmentIntersection {
    let r = a2.sub(a1);
    let s = b2.sub(b1);
    let denom = r.cross(s);
    let qmp = b1.sub(a1);
    // Scale-aware parallelism test.
    let eps = 1e-12 * r.norm().max(1.0) * s.norm().max(1.0);
    if denom.abs() <= eps {
        let collinear = qmp.cross(r).abs() <= 1e-12 * r.norm().max(1.0) * qmp.norm().max(1.0);
        return SegmentIntersection {
            point: None,
            collinear,
        };
    }
    let t = qmp.cross(s) / denom;
    let u = qmp.cross(r) / denom;
    let tol = 1e-12;
    if (-tol..=1.0 + tol).contains(&t) && (-tol..=1.0 + tol).contains(&u) {
        SegmentIntersection {
            point: Some(a1.add(r.scale(t.clamp(0.0, 1.0)))),
            collinear: false,
        }
    } else {
        SegmentIntersection {
            point: None,
            collinear: false,
        }
    }
}

/// Signed classification of `p` against the supporting line of `s`.
///
/// The sign is that of `normal · (p - foot)` where `foot` is the projection
/// of `p` onto the line; offsets within [`ON_TOLERANCE`] report `On`.
pub fn half_plane_side(p: Point2, s: &LineSegment) -> HalfPlaneSide {
    signed_side(p, s, ON_TOLERANCE)
}

/// Same classification with a caller-chosen "on" band, used by the
/// visibility construction to stay robust against fit noise.
pub fn signed_side(p: Point2, s: &LineSegment, tolerance: f64) -> HalfPlaneSide {
    let d = s.normal.dot(p.sub(s.p1));
    if d > tolerance {
        HalfPlaneSide::Positive
    } else if d < -tolerance {
        HalfPlaneSide::Negative
    } else {
        HalfPlaneSide::On
    }
}

/// Intersection of the two supporting lines, if they are not parallel.
pub fn supporting_line_intersection(s1: &LineSegment, s2: &LineSegment) -> Option<Point2> {
    let r = s1.p2.sub(s1.p1);
    let s = s2.p2.sub(s2.p1);
    let denom = r.cross(s);
    if denom.abs() <= 1e-12 * r.norm() * s.norm() {
        return None;
    }
    let t = s2.p1.sub(s1.p1).cross(s) / denom;
    Some(s1.p1.add(r.scale(t)))
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn from_points(points: impl IntoIterator<Item = Point2>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut min = first;
        let mut max = first;
        for p in it {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Some(Self { min, max })
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Distance from `p` to the box (0 when inside).
    pub fn distance_to_point(&self, p: Point2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn expand(&self, margin: f64) -> Aabb {
        Aabb {
            min: Point2::new(self.min.x - margin, self.min.y - margin),
            max: Point2::new(self.max.x + margin, self.max.y + margin),
        }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }
}

/// Smallest box covering all endpoints of the given segments.
pub fn bounding_box(segments: &[&LineSegment]) -> Result<Aabb, GeometryError> {
    Aabb::from_points(segments.iter().flat_map(|s| [s.p1, s.p2]))
        .ok_or(GeometryError::EmptySegmentSet)
}
