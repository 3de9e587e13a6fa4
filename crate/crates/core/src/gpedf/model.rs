//! The per-room GP-EDF model: adaptive inducing points, closed-form
//! streaming variational updates, distance/gradient queries, and the
//! split/merge operations driven by room-partition changes.

use super::{
    invert_matern_mean, line_prior_mean, log_line_prior, matern32, DistanceRecovery, GpError,
    GpHyper, F_MIN, FD_STEP, JITTER, LINE_PRUNE_RADIUS,
};
use crate::geometry::{
    bounding_box, half_plane_side, segment_point_distance, HalfPlaneSide, LineSegment, Point2,
};
use crate::segmentation::RoomId;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

type Chol = nalgebra::Cholesky<f64, Dyn>;

/// Distance query result. `clamped` marks queries outside the resolvable
/// range where the mean hit its floor (or a non-positive value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub distance: f64,
    pub variance: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientResult {
    pub gradient: Point2,
    pub clamped: bool,
}

/// Streaming GP-EDF for one room.
#[derive(Debug, Clone)]
pub struct GpEdfModel {
    room_id: RoomId,
    hyper: GpHyper,
    lines: Vec<LineSegment>,
    z: Vec<Point2>,
    /// Variational mean over the inducing values.
    mean: DVector<f64>,
    /// Variational covariance over the inducing values.
    cov: DMatrix<f64>,
    n_absorbed: usize,
    kzz_chol: Option<Chol>,
}

fn cholesky_with_jitter(mat: &DMatrix<f64>) -> Result<Chol, GpError> {
    let n = mat.nrows();
    let scale = (mat.trace() / n as f64).abs().max(1e-12);
    let mut jitter = JITTER * scale;
    for _ in 0..8 {
        let mut m = mat.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Chol::new(m) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(GpError::Factorization)
}

impl GpEdfModel {
    pub fn new(room_id: RoomId, hyper: GpHyper) -> Result<Self, GpError> {
        hyper.validate()?;
        Ok(Self {
            room_id,
            hyper,
            lines: Vec::new(),
            z: Vec::new(),
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
            n_absorbed: 0,
            kzz_chol: None,
        })
    }

    pub fn room_id(&self) -> RoomId {
        self.room_id
    }

    pub fn set_room_id(&mut self, id: RoomId) {
        self.room_id = id;
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn lines(&self) -> &[LineSegment] {
        &self.lines
    }

    pub fn inducing(&self) -> &[Point2] {
        &self.z
    }

    pub fn variational_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn variational_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn n_absorbed(&self) -> usize {
        self.n_absorbed
    }

    fn kernel_matrix(&self) -> DMatrix<f64> {
        let m = self.z.len();
        DMatrix::from_fn(m, m, |i, j| matern32(self.z[i], self.z[j], &self.hyper))
    }

    fn refresh(&mut self) {
        self.kzz_chol = if self.z.is_empty() {
            None
        } else {
            cholesky_with_jitter(&self.kernel_matrix()).ok()
        };
    }

    fn kzz_chol(&self) -> Option<Chol> {
        match &self.kzz_chol {
            Some(c) => Some(c.clone()),
            None if self.z.is_empty() => None,
            None => cholesky_with_jitter(&self.kernel_matrix()).ok(),
        }
    }

    /// Replaces the line prior with the room's current segments. Inducing
    /// points within [`LINE_PRUNE_RADIUS`] of a line that is new or moved
    /// are dropped so walls are not counted twice.
    pub fn sync_lines(&mut self, segments: &[LineSegment]) {
        let fresh: Vec<LineSegment> = segments
            .iter()
            .filter(|s| {
                !self
                    .lines
                    .iter()
                    .any(|old| old.id == s.id && old.p1 == s.p1 && old.p2 == s.p2)
            })
            .cloned()
            .collect();
        self.lines = segments.to_vec();
        self.lines.sort_by_key(|s| s.id);
        self.prune_near(&fresh);
    }

    /// Adds or replaces prior lines by id, pruning newly covered inducing
    /// points.
    pub fn add_lines(&mut self, segments: &[LineSegment]) {
        let mut fresh = Vec::new();
        for s in segments {
            match self.lines.iter_mut().find(|old| old.id == s.id) {
                Some(old) => {
                    if old.p1 != s.p1 || old.p2 != s.p2 {
                        *old = s.clone();
                        fresh.push(s.clone());
                    }
                }
                None => {
                    self.lines.push(s.clone());
                    fresh.push(s.clone());
                }
            }
        }
        self.lines.sort_by_key(|s| s.id);
        self.prune_near(&fresh);
    }

    fn prune_near(&mut self, lines: &[LineSegment]) {
        if lines.is_empty() || self.z.is_empty() {
            return;
        }
        let keep: Vec<usize> = (0..self.z.len())
            .filter(|&i| {
                lines
                    .iter()
                    .all(|l| segment_point_distance(self.z[i], l) > LINE_PRUNE_RADIUS)
            })
            .collect();
        if keep.len() != self.z.len() {
            self.retain_indices(&keep);
        }
        self.refresh();
    }

    fn retain_indices(&mut self, keep: &[usize]) {
        self.z = keep.iter().map(|&i| self.z[i]).collect();
        self.mean = DVector::from_fn(keep.len(), |r, _| self.mean[keep[r]]);
        self.cov = DMatrix::from_fn(keep.len(), keep.len(), |r, c| {
            self.cov[(keep[r], keep[c])]
        });
    }

    /// Adaptive inducing-point selection: a point joins `Z` iff its maximum
    /// covariance to the current set is below the threshold. The
    /// variational state extends with the prior marginal. Returns how many
    /// points were added.
    pub fn select_inducing(&mut self, points: &[Point2]) -> usize {
        let mut added = 0;
        for &p in points {
            let max_k = self
                .z
                .iter()
                .map(|&z| matern32(p, z, &self.hyper))
                .fold(0.0, f64::max);
            if max_k < self.hyper.inducing_threshold {
                let m = self.z.len();
                self.z.push(p);
                self.mean = self.mean.clone().insert_row(m, 0.0);
                self.cov = self.cov.clone().insert_row(m, 0.0).insert_column(m, 0.0);
                self.cov[(m, m)] = self.hyper.signal_variance;
                added += 1;
            }
        }
        if added > 0 {
            self.refresh();
        }
        added
    }

    /// Absorbs a measurement batch into the variational state.
    ///
    /// The GP regresses residual targets `y - m_L(x)`; with the inducing
    /// set fixed the precision-space update reproduces the batch sparse
    /// posterior exactly, and newly selected points enter with their prior
    /// marginal, which the selection threshold keeps consistent.
    pub fn update(&mut self, points: &[(Point2, f64)]) -> Result<(), GpError> {
        if points.iter().any(|(_, y)| !y.is_finite()) {
            return Err(GpError::NonFiniteTarget);
        }
        if points.is_empty() || self.z.is_empty() {
            self.n_absorbed += points.len();
            return Ok(());
        }
        let m = self.z.len();
        let b = points.len();
        let residuals = DVector::from_fn(b, |i, _| {
            points[i].1 - line_prior_mean(points[i].0, &self.lines, self.hyper.decay_rate)
        });
        let kzx = DMatrix::from_fn(m, b, |i, j| {
            matern32(self.z[i], points[j].0, &self.hyper)
        });
        let chol_k = self.kzz_chol().ok_or(GpError::Factorization)?;
        // A = K_zz^{-1} K_zx.
        let mut a = kzx.clone();
        chol_k.solve_mut(&mut a);

        let chol_s = cholesky_with_jitter(&self.cov)?;
        let precision = chol_s.inverse();
        let eta = chol_s.solve(&self.mean);

        let inv_noise = 1.0 / self.hyper.noise_variance;
        let new_precision = &precision + &a * a.transpose() * inv_noise;
        let new_eta = eta + &a * &residuals * inv_noise;
        let chol_p = cholesky_with_jitter(&new_precision)?;
        let mut cov = chol_p.inverse();
        cov = (&cov + cov.transpose()) * 0.5;
        self.mean = chol_p.solve(&new_eta);
        self.cov = cov;
        self.n_absorbed += b;
        Ok(())
    }

    /// Residual posterior `(mean, variance)` at a query point.
    pub fn predict_residual(&self, x: Point2) -> (f64, f64) {
        let m = self.z.len();
        if m == 0 {
            return (0.0, self.hyper.signal_variance);
        }
        let Some(chol_k) = self.kzz_chol() else {
            return (0.0, self.hyper.signal_variance);
        };
        let k_star = DVector::from_fn(m, |i, _| matern32(self.z[i], x, &self.hyper));
        let alpha = chol_k.solve(&k_star);
        let mean = alpha.dot(&self.mean);
        let var = self.hyper.signal_variance - alpha.dot(&k_star)
            + (alpha.transpose() * &self.cov * &alpha)[(0, 0)];
        (mean, var.max(0.0))
    }

    /// Distance and residual variance at `x` using the log recovery.
    pub fn query_distance(&self, x: Point2) -> DistanceResult {
        self.query_distance_with(x, DistanceRecovery::Log)
    }

    pub fn query_distance_with(&self, x: Point2, mode: DistanceRecovery) -> DistanceResult {
        let lambda = self.hyper.decay_rate;
        let cap = self.hyper.distance_cap();
        let log_prior = log_line_prior(x, &self.lines, lambda);
        let (res_mean, variance) = self.predict_residual(x);

        if res_mean == 0.0 {
            // Pure prior path, evaluated in the log domain: exact.
            return match log_prior {
                Some(lp) => {
                    let d = match mode {
                        DistanceRecovery::Log => -lp / lambda,
                        DistanceRecovery::MaternInverse => {
                            invert_matern_mean(lp.exp().clamp(F_MIN, 1.0)) / lambda
                        }
                    };
                    if d > cap {
                        DistanceResult {
                            distance: cap,
                            variance,
                            clamped: true,
                        }
                    } else {
                        DistanceResult {
                            distance: d,
                            variance,
                            clamped: false,
                        }
                    }
                }
                None => DistanceResult {
                    distance: cap,
                    variance,
                    clamped: true,
                },
            };
        }

        let prior = log_prior.map_or(0.0, f64::exp);
        let f = prior + res_mean;
        if f >= 1.0 {
            return DistanceResult {
                distance: 0.0,
                variance,
                clamped: false,
            };
        }
        if f <= F_MIN {
            return DistanceResult {
                distance: cap,
                variance,
                clamped: true,
            };
        }
        let distance = match mode {
            DistanceRecovery::Log => -f.ln() / lambda,
            DistanceRecovery::MaternInverse => invert_matern_mean(f) / lambda,
        };
        DistanceResult {
            distance,
            variance,
            clamped: false,
        }
    }

    /// Central-difference gradient of the distance field. Queries touching
    /// the clamp region return a zero vector with the flag set.
    pub fn query_gradient(&self, x: Point2) -> GradientResult {
        let h = FD_STEP;
        let evals = [
            self.query_distance(Point2::new(x.x + h, x.y)),
            self.query_distance(Point2::new(x.x - h, x.y)),
            self.query_distance(Point2::new(x.x, x.y + h)),
            self.query_distance(Point2::new(x.x, x.y - h)),
        ];
        if evals.iter().any(|e| e.clamped) || self.query_distance(x).clamped {
            return GradientResult {
                gradient: Point2::new(0.0, 0.0),
                clamped: true,
            };
        }
        GradientResult {
            gradient: Point2::new(
                (evals[0].distance - evals[1].distance) / (2.0 * h),
                (evals[2].distance - evals[3].distance) / (2.0 * h),
            ),
            clamped: false,
        }
    }

    /// Splits the model along a partition of its prior lines. Each inducing
    /// point follows bounding-box containment, then the positive-side test
    /// against each side's nearest segment, then plain proximity. The two
    /// children partition `Z` exactly.
    pub fn split(
        &self,
        lines_keep: &[LineSegment],
        lines_child: &[LineSegment],
        child_room: RoomId,
    ) -> Result<(GpEdfModel, GpEdfModel), GpError> {
        if lines_keep.is_empty() || lines_child.is_empty() {
            return Err(GpError::EmptySplitSide);
        }
        let refs1: Vec<&LineSegment> = lines_keep.iter().collect();
        let refs2: Vec<&LineSegment> = lines_child.iter().collect();
        let box1 = bounding_box(&refs1).expect("non-empty");
        let box2 = bounding_box(&refs2).expect("non-empty");
        let mut keep_idx = Vec::new();
        let mut child_idx = Vec::new();
        for (i, &z) in self.z.iter().enumerate() {
            let side = match (box1.contains(z), box2.contains(z)) {
                (true, false) => 0,
                (false, true) => 1,
                _ => {
                    let d1 = nearest_line(z, lines_keep);
                    let d2 = nearest_line(z, lines_child);
                    let p1 = half_plane_side(z, d1.0) == HalfPlaneSide::Positive;
                    let p2 = half_plane_side(z, d2.0) == HalfPlaneSide::Positive;
                    match (p1, p2) {
                        (true, false) => 0,
                        (false, true) => 1,
                        _ => usize::from(d1.1 > d2.1),
                    }
                }
            };
            if side == 0 {
                keep_idx.push(i);
            } else {
                child_idx.push(i);
            }
        }
        let mut keep = self.clone();
        keep.lines = lines_keep.to_vec();
        keep.lines.sort_by_key(|s| s.id);
        keep.retain_indices(&keep_idx);
        keep.refresh();
        let mut child = self.clone();
        child.room_id = child_room;
        child.lines = lines_child.to_vec();
        child.lines.sort_by_key(|s| s.id);
        child.retain_indices(&child_idx);
        child.refresh();
        Ok((keep, child))
    }

    /// Merges two models over the same hyperparameters: lines union,
    /// inducing union with a redundancy re-check that drops covered points
    /// of the smaller set, variational blocks concatenated block-diagonally.
    pub fn merge(a: &GpEdfModel, b: &GpEdfModel) -> Result<GpEdfModel, GpError> {
        if a.hyper != b.hyper {
            return Err(GpError::HyperMismatch);
        }
        let (large, small) = if a.z.len() >= b.z.len() { (a, b) } else { (b, a) };
        let mut kept = Vec::new();
        for (i, &p) in small.z.iter().enumerate() {
            let max_k = large
                .z
                .iter()
                .chain(kept.iter().map(|&(_, ref q)| q))
                .map(|&q| matern32(p, q, &large.hyper))
                .fold(0.0, f64::max);
            if max_k < large.hyper.inducing_threshold {
                kept.push((i, p));
            }
        }
        let n_large = large.z.len();
        let n = n_large + kept.len();
        let mut z = large.z.clone();
        z.extend(kept.iter().map(|&(_, p)| p));
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        mean.rows_mut(0, n_large).copy_from(&large.mean);
        cov.view_mut((0, 0), (n_large, n_large)).copy_from(&large.cov);
        for (r, &(i, _)) in kept.iter().enumerate() {
            mean[n_large + r] = small.mean[i];
            for (c, &(j, _)) in kept.iter().enumerate() {
                cov[(n_large + r, n_large + c)] = small.cov[(i, j)];
            }
        }
        let mut lines = large.lines.clone();
        for l in &small.lines {
            if !lines.iter().any(|e| e.id == l.id) {
                lines.push(l.clone());
            }
        }
        lines.sort_by_key(|s| s.id);
        let mut merged = GpEdfModel {
            room_id: a.room_id,
            hyper: a.hyper.clone(),
            lines,
            z,
            mean,
            cov,
            n_absorbed: a.n_absorbed + b.n_absorbed,
            kzz_chol: None,
        };
        merged.refresh();
        Ok(merged)
    }

    pub fn snapshot(&self, include_cov: bool) -> ModelSnapshot {
        ModelSnapshot {
            room_id: self.room_id.0,
            lines: self.lines.clone(),
            z: self.z.iter().map(|p| [p.x, p.y]).collect(),
            m_a: self.mean.iter().copied().collect(),
            hyper: self.hyper.clone(),
            s_a: include_cov.then(|| {
                (0..self.cov.nrows())
                    .map(|r| (0..self.cov.ncols()).map(|c| self.cov[(r, c)]).collect())
                    .collect()
            }),
        }
    }

    /// Restores a model from its snapshot. Without the covariance block the
    /// variational covariance falls back to the prior marginals, which
    /// keeps means exact and degrades only variance queries.
    pub fn from_snapshot(snap: &ModelSnapshot) -> Result<Self, GpError> {
        snap.hyper.validate()?;
        let n = snap.z.len();
        if snap.m_a.len() != n {
            return Err(GpError::BadHyper("mean length does not match z"));
        }
        let cov = match &snap.s_a {
            Some(rows) => {
                DMatrix::from_fn(n, n, |r, c| rows[r][c])
            }
            None => DMatrix::from_diagonal_element(n, n, snap.hyper.signal_variance),
        };
        let mut model = GpEdfModel {
            room_id: RoomId(snap.room_id),
            hyper: snap.hyper.clone(),
            lines: snap.lines.clone(),
            z: snap.z.iter().map(|p| Point2::new(p[0], p[1])).collect(),
            mean: DVector::from_vec(snap.m_a.clone()),
            cov,
            n_absorbed: n,
            kzz_chol: None,
        };
        model.refresh();
        Ok(model)
    }
}

fn nearest_line<'a>(p: Point2, lines: &'a [LineSegment]) -> (&'a LineSegment, f64) {
    lines
        .iter()
        .map(|l| (l, segment_point_distance(p, l)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty line set")
}

/// Serializable model state: `{room_id, lines, Z, m_a, hyper}` with the
/// covariance included on request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub room_id: u32,
    pub lines: Vec<LineSegment>,
    pub z: Vec<[f64; 2]>,
    pub m_a: Vec<f64>,
    pub hyper: GpHyper,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_a: Option<Vec<Vec<f64>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SegmentId;
    use approx::assert_relative_eq;

    fn hyper() -> GpHyper {
        GpHyper::default()
    }

    fn wall(id: u64, p1: (f64, f64), p2: (f64, f64), inside: (f64, f64)) -> LineSegment {
        LineSegment::facing(
            SegmentId(id),
            Point2::new(p1.0, p1.1),
            Point2::new(p2.0, p2.1),
            Point2::new(inside.0, inside.1),
        )
        .unwrap()
    }

    /// 4x3 m room walls with normals facing the interior.
    fn box_walls() -> Vec<LineSegment> {
        let c = (2.0, 1.5);
        vec![
            wall(0, (0.0, 0.0), (4.0, 0.0), c),
            wall(1, (4.0, 0.0), (4.0, 3.0), c),
            wall(2, (4.0, 3.0), (0.0, 3.0), c),
            wall(3, (0.0, 3.0), (0.0, 0.0), c),
        ]
    }

    fn min_wall_distance(p: Point2, walls: &[LineSegment]) -> f64 {
        walls
            .iter()
            .map(|w| segment_point_distance(p, w))
            .fold(f64::INFINITY, f64::min)
    }

    /// Independent batch sparse-GP oracle: predictive mean at `probe` from
    /// a one-shot fit on (z, x, y) with noise `sn2`.
    fn batch_oracle_mean(
        z: &[Point2],
        data: &[(Point2, f64)],
        h: &GpHyper,
        probe: Point2,
    ) -> f64 {
        let m = z.len();
        let b = data.len();
        let kzz = DMatrix::from_fn(m, m, |i, j| matern32(z[i], z[j], h));
        let kzx = DMatrix::from_fn(m, b, |i, j| matern32(z[i], data[j].0, h));
        let y = DVector::from_fn(b, |i, _| data[i].1);
        let sigma = &kzz + &kzx * kzx.transpose() / h.noise_variance;
        let sigma_inv = sigma.try_inverse().expect("oracle invert");
        let k_star = DVector::from_fn(m, |i, _| matern32(z[i], probe, h));
        (k_star.transpose() * sigma_inv * kzx * y / h.noise_variance)[(0, 0)]
    }

    #[test]
    fn first_point_always_selected() {
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        let added = model.select_inducing(&[Point2::new(1.0, 1.0)]);
        assert_eq!(added, 1);
        assert_eq!(model.inducing().len(), 1);
    }

    #[test]
    fn duplicate_point_skipped() {
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.select_inducing(&[Point2::new(1.0, 1.0)]);
        let added = model.select_inducing(&[Point2::new(1.0, 1.0)]);
        assert_eq!(added, 0);
    }

    #[test]
    fn distant_point_selected_by_kernel_threshold() {
        // k(1 m) = 101 e^{-100}, far below 1e-6: the oracle value.
        let k = matern32(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), &hyper());
        assert!(k < 1e-6);
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.select_inducing(&[Point2::new(0.0, 0.0)]);
        assert_eq!(model.select_inducing(&[Point2::new(1.0, 0.0)]), 1);
    }

    #[test]
    fn representing_batch_twice_adds_nothing() {
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        let batch: Vec<Point2> = (0..40)
            .map(|i| Point2::new(i as f64 * 0.05, 0.0))
            .collect();
        let first = model.select_inducing(&batch);
        assert!(first > 0);
        assert!(first <= batch.len());
        assert_eq!(model.select_inducing(&batch), 0);
    }

    #[test]
    fn empty_update_is_identity() {
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.select_inducing(&[Point2::new(1.0, 1.0)]);
        let mean_before = model.variational_mean().clone();
        model.update(&[]).unwrap();
        assert_eq!(model.variational_mean(), &mean_before);
    }

    #[test]
    fn non_finite_target_rejected() {
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        assert!(model
            .update(&[(Point2::new(0.0, 0.0), f64::NAN)])
            .is_err());
    }

    #[test]
    fn streaming_matches_batch_oracle() {
        // 200 surface points around a ring, absorbed in 4 batches, vs a
        // one-shot batch fit on the identical inducing set.
        let h = hyper();
        let points: Vec<(Point2, f64)> = (0..200)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 200.0;
                (
                    Point2::new(1.0 + 0.8 * a.cos(), 1.0 + 0.8 * a.sin()),
                    1.0,
                )
            })
            .collect();
        let mut model = GpEdfModel::new(RoomId(0), h.clone()).unwrap();
        for chunk in points.chunks(50) {
            let pts: Vec<Point2> = chunk.iter().map(|(p, _)| *p).collect();
            model.select_inducing(&pts);
            model.update(chunk).unwrap();
        }
        let probes: Vec<Point2> = (0..50)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 50.0;
                let r = 0.4 + 0.02 * i as f64;
                Point2::new(1.0 + r * a.cos(), 1.0 + r * a.sin())
            })
            .collect();
        let mut worst = 0.0f64;
        for &p in &probes {
            let streaming = model.predict_residual(p).0;
            let oracle = batch_oracle_mean(model.inducing(), &points, &h, p);
            worst = worst.max((streaming - oracle).abs());
        }
        assert!(worst <= 1e-3, "streaming vs batch differs by {worst}");
    }

    #[test]
    fn on_line_points_leave_zero_residual() {
        let h = hyper();
        let walls = box_walls();
        let mut model = GpEdfModel::new(RoomId(0), h).unwrap();
        model.sync_lines(&walls);
        // Points exactly on the south wall, just outside the prune radius
        // of nothing new (lines came first, so nothing is pruned).
        let pts: Vec<(Point2, f64)> = (0..30)
            .map(|i| (Point2::new(0.2 + i as f64 * 0.12, 0.0), 1.0))
            .collect();
        let coords: Vec<Point2> = pts.iter().map(|(p, _)| *p).collect();
        model.select_inducing(&coords);
        model.update(&pts).unwrap();
        for &(p, _) in &pts {
            let (mean, _) = model.predict_residual(p);
            assert!(mean.abs() <= 1e-3, "residual mean {mean} at {p:?}");
        }
    }

    #[test]
    fn prior_only_distance_is_exact() {
        let walls = box_walls();
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.sync_lines(&walls);
        let mut state = 11u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let p = Point2::new(rnd() * 4.0, rnd() * 3.0);
            let truth = min_wall_distance(p, &walls);
            let q = model.query_distance(p);
            assert!(!q.clamped);
            assert!((q.distance - truth).abs() <= 1e-9, "{}", q.distance - truth);
        }
    }

    #[test]
    fn query_on_line_without_data_is_zero() {
        let walls = box_walls();
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.sync_lines(&walls);
        let q = model.query_distance(Point2::new(2.0, 0.0));
        assert_eq!(q.distance, 0.0);
    }

    #[test]
    fn far_query_clamps_at_distance_cap() {
        let walls = box_walls();
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.sync_lines(&walls);
        let cap = model.hyper().distance_cap();
        let q = model.query_distance(Point2::new(500.0, 500.0));
        assert!(q.clamped);
        assert_relative_eq!(q.distance, cap, epsilon = 1e-12);
        let g = model.query_gradient(Point2::new(500.0, 500.0));
        assert!(g.clamped);
        assert_eq!(g.gradient, Point2::new(0.0, 0.0));
    }

    #[test]
    fn walls_plus_obstacle_distance_close_to_oracle() {
        let h = hyper();
        let walls = box_walls();
        let mut model = GpEdfModel::new(RoomId(0), h).unwrap();
        model.sync_lines(&walls);
        // Round obstacle sampled densely at (2.8, 2.1), r = 0.25.
        let obstacle: Vec<Point2> = (0..90)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 90.0;
                Point2::new(2.8 + 0.25 * a.cos(), 2.1 + 0.25 * a.sin())
            })
            .collect();
        let batch: Vec<(Point2, f64)> = obstacle.iter().map(|&p| (p, 1.0)).collect();
        model.select_inducing(&obstacle);
        model.update(&batch).unwrap();

        let mut tested = 0;
        let mut ok = 0;
        for ix in 0..40 {
            for iy in 0..30 {
                let p = Point2::new(0.05 + ix as f64 * 0.1, 0.05 + iy as f64 * 0.1);
                let truth = min_wall_distance(p, &walls).min(
                    obstacle
                        .iter()
                        .map(|&o| p.distance(o))
                        .fold(f64::INFINITY, f64::min),
                );
                if truth <= 0.05 || truth > 2.0 {
                    continue;
                }
                tested += 1;
                let q = model.query_distance(p);
                if (q.distance - truth).abs() <= 0.1 {
                    ok += 1;
                }
            }
        }
        assert!(tested > 300);
        let frac = ok as f64 / tested as f64;
        assert!(frac >= 0.95, "only {frac:.3} of points within 0.1 m");
    }

    #[test]
    fn gradient_points_away_from_single_wall() {
        let walls = vec![wall(0, (0.0, 0.0), (2.0, 0.0), (1.0, 1.0))];
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.sync_lines(&walls);
        let g = model.query_gradient(Point2::new(0.5, 0.5));
        assert!(!g.clamped);
        assert!(g.gradient.y > 0.9 && g.gradient.y < 1.1);
        assert!(g.gradient.x.abs() < 0.05);
        let norm = g.gradient.norm();
        assert!((0.9..=1.1).contains(&norm));
    }

    #[test]
    fn gradient_vanishes_between_facing_walls() {
        let walls = vec![
            wall(0, (0.0, 0.0), (4.0, 0.0), (2.0, 1.0)),
            wall(1, (0.0, 2.0), (4.0, 2.0), (2.0, 1.0)),
        ];
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.sync_lines(&walls);
        let g = model.query_gradient(Point2::new(2.0, 1.0));
        assert!(g.gradient.norm() < 0.05);
    }

    #[test]
    fn split_by_boxes_and_conservation() {
        let left = vec![
            wall(0, (0.0, 0.0), (2.0, 0.0), (1.0, 1.0)),
            wall(1, (0.0, 2.0), (2.0, 2.0), (1.0, 1.0)),
            wall(2, (0.0, 0.0), (0.0, 2.0), (1.0, 1.0)),
        ];
        let right = vec![
            wall(3, (5.0, 0.0), (7.0, 0.0), (6.0, 1.0)),
            wall(4, (5.0, 2.0), (7.0, 2.0), (6.0, 1.0)),
            wall(5, (7.0, 0.0), (7.0, 2.0), (6.0, 1.0)),
        ];
        let mut parent = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        let mut all = left.clone();
        all.extend(right.clone());
        parent.sync_lines(&all);
        let pts = vec![
            Point2::new(1.0, 1.0),
            Point2::new(0.5, 0.5),
            Point2::new(1.5, 1.2),
        ];
        parent.select_inducing(&pts);
        let n_parent = parent.inducing().len();
        let (keep, child) = parent.split(&left, &right, RoomId(1)).unwrap();
        assert_eq!(keep.inducing().len() + child.inducing().len(), n_parent);
        // All inducing points live in the left box only.
        assert_eq!(keep.inducing().len(), n_parent);
        assert!(child.inducing().is_empty());
        assert_eq!(child.room_id(), RoomId(1));
    }

    #[test]
    fn split_positive_side_rule() {
        // Two parallel walls facing away from each other, boxes overlap.
        let l1 = vec![wall(0, (0.0, 0.0), (4.0, 0.0), (2.0, 1.0))]; // faces +y
        let l2 = vec![wall(1, (0.0, 0.1), (4.0, 0.1), (2.0, -1.0))]; // faces -y
        let mut parent = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        let mut all = l1.clone();
        all.extend(l2.clone());
        parent.sync_lines(&all);
        // A point above both walls: positive side of l1's wall only.
        parent.select_inducing(&[Point2::new(2.0, 1.0)]);
        let (keep, child) = parent.split(&l1, &l2, RoomId(1)).unwrap();
        assert_eq!(keep.inducing().len(), 1);
        assert!(child.inducing().is_empty());
    }

    #[test]
    fn split_rejects_empty_side() {
        let parent = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        assert!(parent.split(&[], &box_walls(), RoomId(1)).is_err());
    }

    #[test]
    fn merge_with_empty_model_is_identity() {
        let mut a = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        a.sync_lines(&box_walls());
        a.select_inducing(&[Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)]);
        let b = GpEdfModel::new(RoomId(1), hyper()).unwrap();
        let merged = GpEdfModel::merge(&a, &b).unwrap();
        assert_eq!(merged.inducing().len(), 2);
        assert_eq!(merged.lines().len(), 4);
    }

    #[test]
    fn merge_line_counts_add_when_disjoint() {
        let mut a = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        a.sync_lines(&box_walls()[..2]);
        let mut b = GpEdfModel::new(RoomId(1), hyper()).unwrap();
        b.sync_lines(&box_walls()[2..]);
        let merged = GpEdfModel::merge(&a, &b).unwrap();
        assert_eq!(merged.lines().len(), 4);
    }

    #[test]
    fn merge_rejects_mismatched_hyper() {
        let a = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        let b = GpEdfModel::new(
            RoomId(1),
            GpHyper {
                decay_rate: 50.0,
                ..hyper()
            },
        )
        .unwrap();
        assert!(GpEdfModel::merge(&a, &b).is_err());
    }

    #[test]
    fn merge_preserves_near_wall_accuracy() {
        // Fit two room models, merge, and re-check the EDF oracle at the
        // first model's wall points.
        let h = hyper();
        let walls_a = vec![
            wall(0, (0.0, 0.0), (3.0, 0.0), (1.5, 1.0)),
            wall(1, (0.0, 2.0), (3.0, 2.0), (1.5, 1.0)),
        ];
        let walls_b = vec![
            wall(2, (6.0, 0.0), (9.0, 0.0), (7.5, 1.0)),
            wall(3, (6.0, 2.0), (9.0, 2.0), (7.5, 1.0)),
        ];
        let mut a = GpEdfModel::new(RoomId(0), h.clone()).unwrap();
        a.sync_lines(&walls_a);
        let mut b = GpEdfModel::new(RoomId(1), h).unwrap();
        b.sync_lines(&walls_b);
        let probes = [
            Point2::new(1.0, 0.5),
            Point2::new(2.0, 1.0),
            Point2::new(1.5, 1.5),
        ];
        let merged = GpEdfModel::merge(&a, &b).unwrap();
        for &p in &probes {
            let before = a.query_distance(p).distance;
            let truth = min_wall_distance(p, &walls_a);
            assert!((before - truth).abs() <= 0.1);
            let after = merged.query_distance(p).distance;
            let truth_merged = truth.min(min_wall_distance(p, &walls_b));
            assert!((after - truth_merged).abs() <= 0.1);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let h = hyper();
        let mut model = GpEdfModel::new(RoomId(0), h).unwrap();
        let mut pts = Vec::new();
        for i in 0..60 {
            let a = std::f64::consts::TAU * i as f64 / 60.0;
            pts.push((Point2::new(a.cos(), a.sin()), 1.0));
        }
        for chunk in pts.chunks(20) {
            let coords: Vec<Point2> = chunk.iter().map(|(p, _)| *p).collect();
            model.select_inducing(&coords);
            model.update(chunk).unwrap();
            let cov = model.variational_cov();
            assert_eq!(cov.transpose(), cov.clone());
            let eig = nalgebra::SymmetricEigen::new(cov.clone());
            assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-8));
        }
    }

    #[test]
    fn new_prior_line_prunes_covered_inducing_points() {
        let mut model = GpEdfModel::new(RoomId(0), hyper()).unwrap();
        model.select_inducing(&[Point2::new(1.0, 0.01), Point2::new(1.0, 1.0)]);
        assert_eq!(model.inducing().len(), 2);
        model.add_lines(&[wall(0, (0.0, 0.0), (2.0, 0.0), (1.0, 1.0))]);
        // The point 1 cm from the new wall is gone; the far one stays.
        assert_eq!(model.inducing().len(), 1);
        assert_relative_eq!(model.inducing()[0].y, 1.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut model = GpEdfModel::new(RoomId(3), hyper()).unwrap();
        model.sync_lines(&box_walls());
        model.select_inducing(&[Point2::new(1.0, 1.0), Point2::new(2.5, 2.0)]);
        model
            .update(&[(Point2::new(1.0, 1.0), 1.0), (Point2::new(2.5, 2.0), 1.0)])
            .unwrap();
        let snap = model.snapshot(true);
        let text = serde_json::to_string(&snap).unwrap();
        let back: ModelSnapshot = serde_json::from_str(&text).unwrap();
        let restored = GpEdfModel::from_snapshot(&back).unwrap();
        for p in [Point2::new(1.5, 1.5), Point2::new(0.3, 2.0)] {
            let a = model.query_distance(p);
            let b = restored.query_distance(p);
            assert_relative_eq!(a.distance, b.distance, epsilon = 1e-12);
            assert_relative_eq!(a.variance, b.variance, epsilon = 1e-12);
        }
        // Covariance omitted by default.
        let lean = model.snapshot(false);
        assert!(lean.s_a.is_none());
        let restored = GpEdfModel::from_snapshot(&lean).unwrap();
        for p in [Point2::new(1.5, 1.5)] {
            let a = model.query_distance(p);
            let b = restored.query_distance(p);
            assert_relative_eq!(a.distance, b.distance, epsilon = 1e-12);
        }
    }
}
