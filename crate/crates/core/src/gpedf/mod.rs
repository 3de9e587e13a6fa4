//! Streaming Gaussian-process Euclidean distance fields with wall segments
//! as analytic priors.
//!
//! The field is a Matérn-3/2 GP on occupancy evidence: surface measurements
//! carry target 1, the mean function is the line prior
//! `m_L(x) = exp(-lambda * min_i d(x, l_i))`, and distance is recovered from
//! the predictive mean by `d = -ln(f) / lambda`. Residual (non-wall) points
//! enter through adaptively selected inducing points with a closed-form
//! streaming variational update.

mod model;

pub use model::{DistanceResult, GpEdfModel, GradientResult, ModelSnapshot};

use crate::geometry::{segment_point_distance, LineSegment, Point2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor for the predictive mean before the log transform.
pub const F_MIN: f64 = 1e-300;
/// Central-difference step for gradient queries (meters).
pub const FD_STEP: f64 = 1e-3;
/// Inducing points closer than this to a newly added prior line are
/// dropped, so the wall is not double counted.
pub const LINE_PRUNE_RADIUS: f64 = 0.05;
/// Relative jitter added to kernel matrices before factorization.
pub const JITTER: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid hyperparameters: {0}")]
    BadHyper(&'static str),
    #[error("non-finite target value")]
    NonFiniteTarget,
    #[error("split with an empty line subset")]
    EmptySplitSide,
    #[error("hyperparameter mismatch between merged models")]
    HyperMismatch,
    #[error("covariance factorization failed")]
    Factorization,
}

/// Kernel and noise hyperparameters. `decay_rate` is the Matérn rate in
/// 1/meters; large values sharpen the distance field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpHyper {
    pub decay_rate: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Covariance threshold for adaptive inducing-point selection.
    pub inducing_threshold: f64,
}

impl Default for GpHyper {
    fn default() -> Self {
        Self {
            decay_rate: 100.0,
            signal_variance: 1.0,
            noise_variance: 1e-4,
            inducing_threshold: 1e-6,
        }
    }
}

impl GpHyper {
    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.decay_rate > 0.0) {
            return Err(GpError::BadHyper("decay_rate must be > 0"));
        }
        if !(self.signal_variance > 0.0) {
            return Err(GpError::BadHyper("signal_variance must be > 0"));
        }
        if !(self.noise_variance > 0.0) {
            return Err(GpError::BadHyper("noise_variance must be > 0"));
        }
        if !(self.inducing_threshold > 0.0 && self.inducing_threshold < self.signal_variance) {
            return Err(GpError::BadHyper(
                "inducing_threshold must be in (0, signal_variance)",
            ));
        }
        Ok(())
    }

    /// Distance cap implied by the mean floor.
    pub fn distance_cap(&self) -> f64 {
        -F_MIN.ln() / self.decay_rate
    }
}

/// Matérn covariance with nu = 3/2 in rate form:
/// `k(r) = sigma^2 (1 + lambda r) exp(-lambda r)`.
pub fn matern32(a: Point2, b: Point2, hyper: &GpHyper) -> f64 {
    let u = hyper.decay_rate * a.distance(b);
    hyper.signal_variance * (1.0 + u) * (-u).exp()
}

/// Log of the line prior: `-lambda * min_i d(x, l_i)`, `None` with no lines.
pub fn log_line_prior(x: Point2, lines: &[LineSegment], decay_rate: f64) -> Option<f64> {
    lines
        .iter()
        .map(|l| segment_point_distance(x, l))
        .min_by(f64::total_cmp)
        .map(|d| -decay_rate * d)
}

/// Line prior mean `m_L(x)`; 0 when the line set is empty.
pub fn line_prior_mean(x: Point2, lines: &[LineSegment], decay_rate: f64) -> f64 {
    log_line_prior(x, lines, decay_rate).map_or(0.0, f64::exp)
}

/// Inverts `(1 + u) exp(-u) = f` for `u >= 0`; the exact distance reversion
/// of the Matérn-3/2 mean. `(1+u)e^{-u}` is strictly decreasing, so a
/// bisection on the bounded root interval is exact enough and never
/// diverges.
pub fn invert_matern_mean(f: f64) -> f64 {
    let f = f.clamp(F_MIN, 1.0);
    if f >= 1.0 {
        return 0.0;
    }
    let target = f.ln();
    let g = |u: f64| (1.0 + u).ln() - u - target; // decreasing, g(0) > 0
    let mut lo = 0.0;
    // Root is u = -ln f + ln(1+u); over f >= F_MIN, ln(1+u) < 10.
    let mut hi = -target + 10.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + lo) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// How distance is recovered from the predictive mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceRecovery {
    /// `d = -ln(f) / lambda` (the standard log transform).
    #[default]
    Log,
    /// Exact inversion of the Matérn-3/2 mean `(1 + lambda d) e^{-lambda d}`.
    MaternInverse,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SegmentId;
    use approx::assert_relative_eq;

    fn wall(id: u64, p1: (f64, f64), p2: (f64, f64)) -> LineSegment {
        let a = Point2::new(p1.0, p1.1);
        let b = Point2::new(p2.0, p2.1);
        let normal = b.sub(a).normalized().perp();
        LineSegment::try_new(SegmentId(id), a, b, normal, Point2::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn matern_at_zero_is_signal_variance() {
        let h = GpHyper::default();
        let p = Point2::new(0.3, -0.7);
        assert_relative_eq!(matern32(p, p, &h), 1.0, epsilon = 1e-15);
        let h2 = GpHyper {
            signal_variance: 2.5,
            ..GpHyper::default()
        };
        assert_relative_eq!(matern32(p, p, &h2), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn matern_frozen_value() {
        // sigma^2 = 1, lambda = 100, r = 0.01: (1 + 1) e^{-1} = 2/e.
        let h = GpHyper::default();
        let k = matern32(Point2::new(0.0, 0.0), Point2::new(0.01, 0.0), &h);
        assert_relative_eq!(k, 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(k, 0.7357588823428847, epsilon = 1e-12);
    }

    #[test]
    fn matern_strictly_decreasing() {
        let h = GpHyper::default();
        let o = Point2::new(0.0, 0.0);
        let mut last = matern32(o, o, &h);
        for i in 1..200 {
            let k = matern32(o, Point2::new(i as f64 * 0.01, 0.0), &h);
            assert!(k < last, "not decreasing at r={}", i as f64 * 0.01);
            last = k;
        }
    }

    #[test]
    fn prior_on_segment_is_one() {
        let lines = vec![wall(0, (0.0, 0.0), (2.0, 0.0))];
        assert_relative_eq!(
            line_prior_mean(Point2::new(1.0, 0.0), &lines, 100.0),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn prior_frozen_value() {
        // min distance 0.02 m at lambda = 100 -> e^{-2}.
        let lines = vec![wall(0, (0.0, 0.0), (2.0, 0.0))];
        let m = line_prior_mean(Point2::new(1.0, 0.02), &lines, 100.0);
        assert_relative_eq!(m, (-2.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(m, 0.1353352832366127, epsilon = 1e-12);
    }

    #[test]
    fn empty_line_set_prior_is_zero() {
        assert_eq!(line_prior_mean(Point2::new(1.0, 1.0), &[], 100.0), 0.0);
        assert_eq!(log_line_prior(Point2::new(1.0, 1.0), &[], 100.0), None);
    }

    #[test]
    fn hyper_validation() {
        assert!(GpHyper::default().validate().is_ok());
        let bad = GpHyper {
            inducing_threshold: 2.0,
            ..GpHyper::default()
        };
        assert!(bad.validate().is_err());
        let bad = GpHyper {
            noise_variance: 0.0,
            ..GpHyper::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn matern_inverse_round_trips() {
        for u in [0.0, 0.01, 0.5, 2.0, 10.0, 100.0, 600.0] {
            let f = (1.0 + u) * (-u as f64).exp();
            let back = invert_matern_mean(f);
            assert_relative_eq!(back, u, epsilon = 1e-9, max_relative = 1e-9);
        }
    }
}
