//! Deterministic 2D lidar simulator over ground-truth floor plans.
//!
//! Beams are ordered counter-clockwise starting at `pose.theta - fov/2`. For
//! a full-circle field of view the spacing is `fov / n_beams` so the first
//! and last beams do not coincide; otherwise beams span the closed interval.
//! Range noise is drawn from a counter-based generator keyed on
//! `(seed, frame, beam)`, so streams replay identically regardless of
//! evaluation order.

use crate::geometry::Point2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("wall {index}: zero length ({x1}, {y1}) -> ({x2}, {y2})")]
    ZeroLengthWall {
        index: usize,
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
    },
    #[error("wall {index}: non-finite coordinate")]
    NonFiniteWall { index: usize },
    #[error("plan has {0} walls, need at least 3")]
    TooFewWalls(usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("trajectory timestamps not strictly increasing at index {0}")]
    NonMonotonicTrajectory(usize),
    #[error("invalid scan params: {0}")]
    BadScanParams(&'static str),
}

/// One ground-truth wall, with an optional room label for evaluation.
///
/// For labeled plans the convention is that the labeled room lies on the
/// left of the `p1 -> p2` direction, which lets interior walls appear once
/// per face with distinct labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Wall {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub room: Option<u32>,
}

impl Wall {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1,
            y1,
            x2,
            y2,
            room: None,
        }
    }

    pub fn labeled(x1: f64, y1: f64, x2: f64, y2: f64, room: u32) -> Self {
        Self {
            x1,
            y1,
            x2,
            y2,
            room: Some(room),
        }
    }

    pub fn p1(&self) -> Point2 {
        Point2::new(self.x1, self.y1)
    }

    pub fn p2(&self) -> Point2 {
        Point2::new(self.x2, self.y2)
    }

    pub fn length(&self) -> f64 {
        self.p1().distance(self.p2())
    }

    /// Unit normal on the left of `p1 -> p2` (the labeled-room side).
    pub fn left_normal(&self) -> Point2 {
        self.p2().sub(self.p1()).normalized().perp()
    }
}

/// Ground-truth world: a set of straight walls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloorPlan {
    pub name: String,
    pub walls: Vec<Wall>,
}

impl FloorPlan {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.walls.len() < 3 {
            return Err(SimError::TooFewWalls(self.walls.len()));
        }
        for (index, w) in self.walls.iter().enumerate() {
            if ![w.x1, w.y1, w.x2, w.y2].iter().all(|v| v.is_finite()) {
                return Err(SimError::NonFiniteWall { index });
            }
            if w.length() <= 1e-12 {
                return Err(SimError::ZeroLengthWall {
                    index,
                    x1: w.x1,
                    y1: w.y1,
                    x2: w.x2,
                    y2: w.y2,
                });
            }
        }
        Ok(())
    }

    pub fn has_labels(&self) -> bool {
        self.walls.iter().all(|w| w.room.is_some())
    }

    pub fn bounds(&self) -> crate::geometry::Aabb {
        crate::geometry::Aabb::from_points(self.walls.iter().flat_map(|w| [w.p1(), w.p2()]))
            .expect("validated plan has walls")
    }
}

/// Robot pose sample along a trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Sensor model parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanParams {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            n_beams: 360,
            fov: std::f64::consts::TAU,
            max_range: 8.0,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl ScanParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_beams == 0 {
            return Err(SimError::BadScanParams("n_beams must be >= 1"));
        }
        if !(self.max_range > 0.0) {
            return Err(SimError::BadScanParams("max_range must be > 0"));
        }
        if self.noise_sigma < 0.0 {
            return Err(SimError::BadScanParams("noise_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// One simulated revolution of the sensor.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanFrame {
    pub pose: Pose,
    /// World-frame hit points, one per beam with a return, in beam order.
    pub points: Vec<Point2>,
    /// Per-beam range; `None` when nothing was hit within `max_range`.
    pub ranges: Vec<Option<f64>>,
}

pub fn load_floor_plan(path: &Path) -> Result<FloorPlan, SimError> {
    let text = std::fs::read_to_string(path)?;
    let plan: FloorPlan = serde_json::from_str(&text)?;
    plan.validate()?;
    Ok(plan)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<Pose>, SimError> {
    let text = std::fs::read_to_string(path)?;
    let traj: Vec<Pose> = serde_json::from_str(&text)?;
    validate_trajectory(&traj)?;
    Ok(traj)
}

pub fn validate_trajectory(traj: &[Pose]) -> Result<(), SimError> {
    if traj.is_empty() {
        return Err(SimError::EmptyTrajectory);
    }
    for i in 1..traj.len() {
        if traj[i].t <= traj[i - 1].t {
            return Err(SimError::NonMonotonicTrajectory(i));
        }
    }
    Ok(())
}

/// Direction angle of beam `b` for a pose heading `theta`.
fn beam_angle(theta: f64, params: &ScanParams, b: usize) -> f64 {
    let n = params.n_beams;
    if n == 1 {
        return theta;
    }
    let start = theta - params.fov / 2.0;
    if (params.fov - std::f64::consts::TAU).abs() < 1e-9 {
        start + params.fov * b as f64 / n as f64
    } else {
        start + params.fov * b as f64 / (n - 1) as f64
    }
}

/// Nearest wall hit distance along a ray, ignoring hits beyond `max_range`.
fn cast_ray(plan: &FloorPlan, origin: Point2, dir: Point2, max_range: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for w in &plan.walls {
        // Ray (origin + t*dir, t >= 0) vs closed wall segment.
        let s = w.p2().sub(w.p1());
        let denom = dir.cross(s);
        if denom.abs() <= 1e-15 {
            continue;
        }
        let qmp = w.p1().sub(origin);
        let t = qmp.cross(s) / denom;
        let u = qmp.cross(dir) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&u) && t <= max_range {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

/// Standard-normal draw keyed on `(seed, frame, beam)`.
fn keyed_noise(seed: u64, frame: u64, beam: u64) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&frame.to_le_bytes());
    key[16..24].copy_from_slice(&beam.to_le_bytes());
    key[24..32].copy_from_slice(&0x6c69_6461_725f_7631u64.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    Normal::new(0.0, 1.0).unwrap().sample(&mut rng)
}

/// Simulates one scan at `pose`; `frame` indexes the pose within its stream
/// and keys the noise generator.
pub fn simulate_scan(
    plan: &FloorPlan,
    pose: Pose,
    params: &ScanParams,
    frame: u64,
) -> ScanFrame {
    let origin = pose.position();
    let mut points = Vec::new();
    let mut ranges = Vec::with_capacity(params.n_beams);
    for b in 0..params.n_beams {
        let angle = beam_angle(pose.theta, params, b);
        let dir = Point2::new(angle.cos(), angle.sin());
        match cast_ray(plan, origin, dir, params.max_range) {
            Some(true_range) => {
                let range = if params.noise_sigma > 0.0 {
                    let noisy =
                        true_range + params.noise_sigma * keyed_noise(params.seed, frame, b as u64);
                    noisy.clamp(0.0, params.max_range)
                } else {
                    true_range
                };
                points.push(origin.add(dir.scale(range)));
                ranges.push(Some(range));
            }
            None => ranges.push(None),
        }
    }
    ScanFrame {
        pose,
        points,
        ranges,
    }
}

/// One frame per trajectory pose, in order.
pub fn playback(
    plan: &FloorPlan,
    trajectory: &[Pose],
    params: &ScanParams,
) -> Result<Vec<ScanFrame>, SimError> {
    validate_trajectory(trajectory)?;
    params.validate()?;
    Ok(trajectory
        .iter()
        .enumerate()
        .map(|(i, &pose)| simulate_scan(plan, pose, params, i as u64))
        .collect())
}

/// Writes frames as JSON-lines, one `ScanFrame` per line.
pub fn write_scan_log(path: &Path, frames: &[ScanFrame]) -> Result<(), SimError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scan_log(path: &Path) -> Result<Vec<ScanFrame>, SimError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(SimError::from))
        .collect()
}

/// Built-in reference worlds used by tests and shipped as assets.
pub mod plans {
    use super::{FloorPlan, Pose, Wall};

    /// Axis-aligned rectangle made of 4 walls; the labeled room is inside.
    fn rect_walls(x0: f64, y0: f64, x1: f64, y1: f64, room: Option<u32>) -> Vec<Wall> {
        let mk = |ax, ay, bx, by| Wall {
            x1: ax,
            y1: ay,
            x2: bx,
            y2: by,
            room,
        };
        // Counter-clockwise so the interior is on the left of each wall.
        vec![
            mk(x0, y0, x1, y0),
            mk(x1, y0, x1, y1),
            mk(x1, y1, x0, y1),
            mk(x0, y1, x0, y0),
        ]
    }

    /// Closed square room of side `side` centered at the origin.
    pub fn square_box(side: f64) -> FloorPlan {
        let h = side / 2.0;
        FloorPlan {
            name: format!("square_{side}m"),
            walls: rect_walls(-h, -h, h, h, None),
        }
    }

    /// Interior wall along the x axis with a doorway gap `[gap_lo, gap_hi]`.
    /// Each solid piece appears once per face, labeled with the room on the
    /// left of its direction.
    fn split_wall_x(
        y: f64,
        x0: f64,
        x1: f64,
        gap_lo: f64,
        gap_hi: f64,
        (above, below): (u32, u32),
    ) -> Vec<Wall> {
        let mut walls = Vec::new();
        for (a, b) in [(x0, gap_lo), (gap_hi, x1)] {
            if b - a > 1e-9 {
                walls.push(Wall::labeled(a, y, b, y, above)); // +x direction, left is +y
                walls.push(Wall::labeled(b, y, a, y, below)); // -x direction, left is -y
            }
        }
        walls
    }

    fn split_wall_y(
        x: f64,
        y0: f64,
        y1: f64,
        gap_lo: f64,
        gap_hi: f64,
        (west, east): (u32, u32),
    ) -> Vec<Wall> {
        let mut walls = Vec::new();
        for (a, b) in [(y0, gap_lo), (gap_hi, y1)] {
            if b - a > 1e-9 {
                walls.push(Wall::labeled(x, a, x, b, west)); // +y direction, left is -x
                walls.push(Wall::labeled(x, b, x, a, east)); // -y direction, left is +x
            }
        }
        walls
    }

    /// Two 5x4 m rooms side by side, 0.9 m doorway in the divider.
    ///
    /// Rooms: 0 = west (x in [0,5]), 1 = east (x in [5,10]).
    pub fn two_rooms() -> FloorPlan {
        let mut walls = Vec::new();
        // Outer boundary, labeled per room, interior on the left.
        walls.push(Wall::labeled(0.0, 0.0, 5.0, 0.0, 0));
        walls.push(Wall::labeled(5.0, 0.0, 10.0, 0.0, 1));
        walls.push(Wall::labeled(10.0, 0.0, 10.0, 4.0, 1));
        walls.push(Wall::labeled(10.0, 4.0, 5.0, 4.0, 1));
        walls.push(Wall::labeled(5.0, 4.0, 0.0, 4.0, 0));
        walls.push(Wall::labeled(0.0, 4.0, 0.0, 0.0, 0));
        // Divider at x=5 with a 0.9 m doorway at y in [1.55, 2.45].
        walls.extend(split_wall_y(5.0, 0.0, 4.0, 1.55, 2.45, (0, 1)));
        FloorPlan {
            name: "two_rooms".into(),
            walls,
        }
    }

    /// Four 6x4 m rooms in a 2x2 grid with 0.9 m doorways in every shared
    /// wall. Rooms: 0 = SW, 1 = SE, 2 = NW, 3 = NE.
    pub fn four_rooms() -> FloorPlan {
        let mut walls = Vec::new();
        // Outer boundary (counter-clockwise, interior on the left), split at
        // room boundaries so each piece carries one label.
        walls.push(Wall::labeled(0.0, 0.0, 6.0, 0.0, 0));
        walls.push(Wall::labeled(6.0, 0.0, 12.0, 0.0, 1));
        walls.push(Wall::labeled(12.0, 0.0, 12.0, 4.0, 1));
        walls.push(Wall::labeled(12.0, 4.0, 12.0, 8.0, 3));
        walls.push(Wall::labeled(12.0, 8.0, 6.0, 8.0, 3));
        walls.push(Wall::labeled(6.0, 8.0, 0.0, 8.0, 2));
        walls.push(Wall::labeled(0.0, 8.0, 0.0, 4.0, 2));
        walls.push(Wall::labeled(0.0, 4.0, 0.0, 0.0, 0));
        // Vertical divider x=6: SW|SE below, NW|NE above.
        walls.extend(split_wall_y(6.0, 0.0, 4.0, 1.55, 2.45, (0, 1)));
        walls.extend(split_wall_y(6.0, 4.0, 8.0, 5.55, 6.45, (2, 3)));
        // Horizontal divider y=4: SW|NW left, SE|NE right.
        walls.extend(split_wall_x(4.0, 0.0, 6.0, 2.55, 3.45, (2, 0)));
        walls.extend(split_wall_x(4.0, 6.0, 12.0, 8.55, 9.45, (3, 1)));
        FloorPlan {
            name: "four_rooms".into(),
            walls,
        }
    }

    /// Regular polygon approximating a circular pillar; edges are shorter
    /// than typical minimum segment lengths so its returns become residual
    /// points rather than walls.
    pub fn circle_obstacle(cx: f64, cy: f64, r: f64, sides: usize, room: Option<u32>) -> Vec<Wall> {
        (0..sides)
            .map(|i| {
                let a0 = std::f64::consts::TAU * i as f64 / sides as f64;
                let a1 = std::f64::consts::TAU * (i + 1) as f64 / sides as f64;
                Wall {
                    x1: cx + r * a0.cos(),
                    y1: cy + r * a0.sin(),
                    x2: cx + r * a1.cos(),
                    y2: cy + r * a1.sin(),
                    room,
                }
            })
            .collect()
    }

    /// Benchmark world: an antechamber and 8 rooms of growing width in a
    /// row, 1.2 m doorways, round pillars inside the larger rooms. Room
    /// labels increase west to east starting at 0 for the antechamber.
    pub fn room_strip() -> FloorPlan {
        let widths = [2.0, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 7.0];
        let height = 4.0;
        let mut walls = Vec::new();
        let mut x = 0.0;
        let total: f64 = widths.iter().sum();
        // Outer boundary pieces labeled per room.
        for (i, w) in widths.iter().enumerate() {
            walls.push(Wall::labeled(x, 0.0, x + w, 0.0, i as u32));
            walls.push(Wall::labeled(x + w, height, x, height, i as u32));
            x += w;
        }
        walls.push(Wall::labeled(total, 0.0, total, height, (widths.len() - 1) as u32));
        walls.push(Wall::labeled(0.0, height, 0.0, 0.0, 0));
        // Dividers with centered 1.2 m doorways.
        let mut x = 0.0;
        for i in 0..widths.len() - 1 {
            x += widths[i];
            let lo = height / 2.0 - 0.6;
            let hi = height / 2.0 + 0.6;
            walls.extend(split_wall_y(x, 0.0, height, lo, hi, (i as u32, i as u32 + 1)));
        }
        // Pillars in the larger rooms, off the center line the robot drives.
        let mut cx = widths[0] + widths[1] + widths[2] / 2.0;
        for (i, w) in widths.iter().enumerate().skip(2) {
            walls.extend(circle_obstacle(cx, 1.0, 0.3, 12, Some(i as u32)));
            walls.extend(circle_obstacle(cx + 0.3, 3.1, 0.25, 12, Some(i as u32)));
            if i + 1 < widths.len() {
                cx += w / 2.0 + widths[i + 1] / 2.0;
            }
        }
        FloorPlan {
            name: "room_strip".into(),
            walls,
        }
    }

    /// Straight march through the strip with a short backtrack at the end.
    pub fn room_strip_trajectory() -> Vec<Pose> {
        let widths = [2.0_f64, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 7.0];
        let total: f64 = widths.iter().sum();
        let y = 2.0;
        let step = 0.25;
        let mut poses = Vec::new();
        let mut t = 0.0;
        let mut x = 0.8;
        while x < total - 1.0 {
            poses.push(Pose {
                t,
                x,
                y,
                theta: 0.0,
            });
            x += step;
            t += 0.1;
        }
        // Backtrack through the last two rooms; the map stops growing here.
        let back_to = total - (widths[8] + widths[7]);
        while x > back_to {
            poses.push(Pose {
                t,
                x,
                y,
                theta: std::f64::consts::PI,
            });
            x -= step;
            t += 0.1;
        }
        poses
    }

    /// Loop visiting all four rooms of [`four_rooms`].
    pub fn four_rooms_trajectory() -> Vec<Pose> {
        // Waypoints wander each room and pass through every doorway.
        let waypoints = [
            (2.0, 2.0),
            (4.5, 2.0),
            (5.5, 2.0), // through SW-SE doorway
            (8.0, 2.0),
            (10.5, 2.0),
            (9.0, 3.0),
            (9.0, 5.0), // through SE-NE doorway
            (9.5, 6.0),
            (8.0, 6.0),
            (6.5, 6.0), // through NE-NW doorway
            (4.0, 6.0),
            (2.0, 6.0),
            (3.0, 4.5),
            (3.0, 3.5), // through NW-SW doorway
            (2.0, 2.0),
            (4.0, 1.2),
        ];
        densify(&waypoints, 0.25)
    }

    /// Out-and-back pass through [`two_rooms`].
    pub fn two_rooms_trajectory() -> Vec<Pose> {
        let waypoints = [
            (1.2, 2.0),
            (3.8, 2.0),
            (6.2, 2.0), // through the doorway
            (8.8, 2.0),
            (8.8, 3.0),
            (6.0, 3.0),
            (2.0, 3.0),
        ];
        densify(&waypoints, 0.25)
    }

    /// Walks waypoints at a fixed step, heading along travel direction.
    pub fn densify(waypoints: &[(f64, f64)], step: f64) -> Vec<Pose> {
        let mut poses = Vec::new();
        let mut t = 0.0;
        for pair in waypoints.windows(2) {
            let (ax, ay) = pair[0];
            let (bx, by) = pair[1];
            let dx = bx - ax;
            let dy = by - ay;
            let len = (dx * dx + dy * dy).sqrt();
            let theta = dy.atan2(dx);
            let n = (len / step).ceil().max(1.0) as usize;
            for i in 0..n {
                let f = i as f64 / n as f64;
                poses.push(Pose {
                    t,
                    x: ax + dx * f,
                    y: ay + dy * f,
                    theta,
                });
                t += 0.1;
            }
        }
        if let Some(&(x, y)) = waypoints.last() {
            poses.push(Pose {
                t,
                x,
                y,
                theta: poses.last().map_or(0.0, |p| p.theta),
            });
        }
        poses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::segment_point_distance_raw;
    use approx::assert_relative_eq;

    fn box4() -> FloorPlan {
        plans::square_box(4.0)
    }

    fn center_pose() -> Pose {
        Pose {
            t: 0.0,
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    #[test]
    fn beam_along_x_in_box_hits_at_two_meters() {
        let params = ScanParams {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let frame = simulate_scan(&box4(), center_pose(), &params, 0);
        // fov = 2π, start at -π, step 2π/360: beam 180 points along +x.
        assert_relative_eq!(frame.ranges[180].unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn beam_with_no_wall_in_range_has_no_return() {
        let params = ScanParams {
            max_range: 1.0,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let frame = simulate_scan(&box4(), center_pose(), &params, 0);
        assert!(frame.ranges.iter().all(|r| r.is_none()));
        assert!(frame.points.is_empty());
    }

    /// Brute-force oracle: every noise-free range equals the minimum over
    /// all wall/ray intersections.
    #[test]
    fn noise_free_ranges_match_brute_force_intersections() {
        let plan = plans::two_rooms();
        let params = ScanParams {
            n_beams: 90,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let pose = Pose {
            t: 0.0,
            x: 2.5,
            y: 2.1,
            theta: 0.7,
        };
        let frame = simulate_scan(&plan, pose, &params, 3);
        for (b, range) in frame.ranges.iter().enumerate() {
            let angle = pose.theta - params.fov / 2.0
                + params.fov * b as f64 / params.n_beams as f64;
            let dir = Point2::new(angle.cos(), angle.sin());
            // Oracle: saturate a dense parametric sweep of each wall.
            let mut best = f64::INFINITY;
            for w in &plan.walls {
                for i in 0..=4000 {
                    let f = i as f64 / 4000.0;
                    let q = Point2::new(w.x1 + (w.x2 - w.x1) * f, w.y1 + (w.y2 - w.y1) * f);
                    let v = q.sub(pose.position());
                    let along = v.dot(dir);
                    if along > 0.0 && v.sub(dir.scale(along)).norm() < 1e-3 {
                        best = best.min(along);
                    }
                }
            }
            match range {
                Some(r) => assert!((r - best).abs() < 2e-3, "beam {b}: {r} vs {best}"),
                None => assert!(best > params.max_range - 2e-3),
            }
        }
    }

    #[test]
    fn playback_is_deterministic_and_ordered() {
        let plan = box4();
        let traj = vec![
            center_pose(),
            Pose {
                t: 1.0,
                x: 0.5,
                y: 0.2,
                theta: 0.4,
            },
        ];
        let params = ScanParams::default();
        let a = playback(&plan, &traj, &params).unwrap();
        let b = playback(&plan, &traj, &params).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, b);
    }

    #[test]
    fn single_pose_trajectory_single_frame() {
        let frames = playback(&box4(), &[center_pose()], &ScanParams::default()).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        assert!(matches!(
            playback(&box4(), &[], &ScanParams::default()),
            Err(SimError::EmptyTrajectory)
        ));
    }

    #[test]
    fn points_lie_near_walls_and_ranges_bounded() {
        let plan = plans::four_rooms();
        let params = ScanParams::default();
        let pose = Pose {
            t: 0.0,
            x: 3.0,
            y: 2.0,
            theta: 1.0,
        };
        let frame = simulate_scan(&plan, pose, &params, 7);
        for r in frame.ranges.iter().flatten() {
            assert!(*r <= params.max_range);
        }
        for p in &frame.points {
            let min_d = plan
                .walls
                .iter()
                .map(|w| segment_point_distance_raw(*p, w.p1(), w.p2()))
                .fold(f64::INFINITY, f64::min);
            assert!(min_d <= params.noise_sigma * 4.0 + 1e-9, "point {min_d} off-wall");
        }
    }

    #[test]
    fn zero_length_wall_rejected() {
        let mut plan = box4();
        plan.walls.push(Wall::new(1.0, 1.0, 1.0, 1.0));
        assert!(matches!(
            plan.validate(),
            Err(SimError::ZeroLengthWall { index: 4, .. })
        ));
    }

    #[test]
    fn plan_files_round_trip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        let plan = plans::two_rooms();
        std::fs::write(&path, serde_json::to_string_pretty(&plan).unwrap()).unwrap();
        let loaded = load_floor_plan(&path).unwrap();
        assert_eq!(loaded.walls.len(), plan.walls.len());
        assert!(loaded.has_labels());
    }

    #[test]
    fn malformed_plan_reports_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"name\": 3}").unwrap();
        assert!(matches!(load_floor_plan(&path), Err(SimError::Parse(_))));
    }
}
