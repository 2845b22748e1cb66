//! Constant-velocity Kalman filter over `[x, y, vx, vy]` with position-only
//! measurements and a one-frame time step.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, SymmetricEigen, Vector2, Vector4};

use super::{FilterError, TrackerParams};
use crate::trace_model::Point;

/// Symmetry and PSD tolerance for covariance checks.
pub const COVARIANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// `[x, y, vx, vy]`, pixels and pixels/frame.
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl FilterState {
    /// State at rest at `position` with covariance `p0·I`.
    pub fn at_rest(position: Point, p0: f64) -> Self {
        Self {
            mean: Vector4::new(position.x, position.y, 0.0, 0.0),
            covariance: Matrix4::identity() * p0,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Point {
        Point::new(self.mean[2], self.mean[3])
    }

    /// Fails unless the covariance is symmetric with non-negative diagonal
    /// and no eigenvalue below `-COVARIANCE_TOL` (scaled by its magnitude).
    pub fn check(&self) -> Result<(), FilterError> {
        let p = &self.covariance;
        let scale = p.amax().max(1.0);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::NotPsd("non-finite entry".into()));
        }
        let asym = (p - p.transpose()).amax();
        if asym > COVARIANCE_TOL * scale {
            return Err(FilterError::NotPsd(format!("asymmetry {asym:e}")));
        }
        if let Some(d) = p.diagonal().iter().find(|d| **d < 0.0) {
            return Err(FilterError::NotPsd(format!("negative variance {d}")));
        }
        let min_eig = SymmetricEigen::new(*p).eigenvalues.min();
        if min_eig < -COVARIANCE_TOL * scale {
            return Err(FilterError::NotPsd(format!("eigenvalue {min_eig:e}")));
        }
        Ok(())
    }
}

fn transition() -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    )
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Propagates one frame: `x' = F x`, `P' = F P Fᵀ + q·I`.
pub fn predict_step(s: &FilterState, params: &TrackerParams) -> Result<FilterState, FilterError> {
    s.check()?;
    let f = transition();
    Ok(FilterState {
        mean: f * s.mean,
        covariance: symmetrize(f * s.covariance * f.transpose() + Matrix4::identity() * params.q),
    })
}

/// Folds in a position measurement. Uses the Joseph form so the covariance
/// stays symmetric PSD.
pub fn update_step(
    s: &FilterState,
    measurement: Point,
    params: &TrackerParams,
) -> Result<FilterState, FilterError> {
    s.check()?;
    let h = observation();
    let r = Matrix2::identity() * params.r;
    let z = Vector2::new(measurement.x, measurement.y);
    let innovation = z - h * s.mean;
    let innovation_cov = h * s.covariance * h.transpose() + r;
    let inv = innovation_cov.try_inverse().ok_or(FilterError::Singular)?;
    let gain = s.covariance * h.transpose() * inv;
    let i_kh = Matrix4::identity() - gain * h;
    let covariance = i_kh * s.covariance * i_kh.transpose() + gain * r * gain.transpose();
    Ok(FilterState {
        mean: s.mean + gain * innovation,
        covariance: symmetrize(covariance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TrackerParams {
        TrackerParams::default()
    }

    #[test]
    fn predict_moves_by_velocity() {
        let s = FilterState {
            mean: Vector4::new(0.0, 0.0, 1.0, 0.0),
            covariance: Matrix4::identity(),
        };
        let p = predict_step(&s, &params()).unwrap();
        assert_eq!(p.position(), Point::new(1.0, 0.0));
        assert_eq!(p.velocity(), Point::new(1.0, 0.0));
    }

    #[test]
    fn zero_innovation_keeps_position_and_shrinks_variance() {
        let s = predict_step(
            &FilterState::at_rest(Point::new(5.0, 7.0), 100.0),
            &params(),
        )
        .unwrap();
        let u = update_step(&s, s.position(), &params()).unwrap();
        assert!((u.position().x - 5.0).abs() < 1e-12);
        assert!((u.position().y - 7.0).abs() < 1e-12);
        assert!(u.covariance[(0, 0)] <= s.covariance[(0, 0)]);
        assert!(u.covariance[(1, 1)] <= s.covariance[(1, 1)]);
    }

    #[test]
    fn velocity_converges_on_linear_motion() {
        // x_t = 3t, y_t = 0
        let p = params();
        let mut s = FilterState::at_rest(Point::new(0.0, 0.0), p.p0);
        for t in 1..=20 {
            s = predict_step(&s, &p).unwrap();
            s = update_step(&s, Point::new(3.0 * t as f64, 0.0), &p).unwrap();
        }
        assert!(
            (s.velocity().x - 3.0).abs() < 1e-3,
            "vx = {}",
            s.velocity().x
        );
        assert!(s.velocity().y.abs() < 1e-3);
    }

    #[test]
    fn rejects_non_psd_covariance() {
        let mut s = FilterState::at_rest(Point::default(), 1.0);
        s.covariance[(0, 1)] = 0.5;
        assert!(matches!(
            predict_step(&s, &params()),
            Err(FilterError::NotPsd(_))
        ));

        let mut s = FilterState::at_rest(Point::default(), 1.0);
        s.covariance[(2, 2)] = -1.0;
        assert!(matches!(
            predict_step(&s, &params()),
            Err(FilterError::NotPsd(_))
        ));

        let mut s = FilterState::at_rest(Point::default(), 1.0);
        s.covariance[(0, 1)] = 2.0;
        s.covariance[(1, 0)] = 2.0;
        assert!(matches!(
            update_step(&s, Point::default(), &params()),
            Err(FilterError::NotPsd(_))
        ));
    }

    #[test]
    fn covariance_stays_symmetric_over_long_runs() {
        let p = params();
        let mut s = FilterState::at_rest(Point::new(10.0, 10.0), p.p0);
        for t in 0..500 {
            s = predict_step(&s, &p).unwrap();
            if t % 7 != 0 {
                s = update_step(
                    &s,
                    Point::new(10.0 + 2.0 * t as f64, 10.0 - 0.5 * t as f64),
                    &p,
                )
                .unwrap();
            }
            assert!((s.covariance - s.covariance.transpose()).amax() <= COVARIANCE_TOL);
            s.check().unwrap();
        }
    }
}
