//! Constant-velocity Kalman filter over box state.
//!
//! The state is `(cx, cy, h, r, vcx, vcy, vh)`: box center, height and
//! aspect ratio `w / h`, plus velocities of the first three. Aspect ratio is
//! modeled as constant. Observations are `(cx, cy, h, r)`.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
type ObservationMatrix = SMatrix<f64, 4, 7>;

/// Smallest height/aspect returned by [`MotionState::to_box`]; long ghost
/// extrapolation with a shrinking height would otherwise produce invalid
/// boxes.
const MIN_EXTENT: f64 = 1e-6;

/// Multiplier applied to the velocity process stddev for the initial
/// velocity uncertainty of a fresh track.
const INITIAL_VELOCITY_INFLATION: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MotionError {
    #[error("degenerate covariance")]
    DegenerateCovariance,
}

/// Process and measurement noise stddevs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Process noise on cx, cy and h (px).
    pub process_position_std: f64,
    pub process_aspect_std: f64,
    /// Process noise on vcx, vcy and vh (px/frame).
    pub process_velocity_std: f64,
    /// Measurement noise on cx, cy and h (px).
    pub measurement_position_std: f64,
    pub measurement_aspect_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            process_position_std: 1.0,
            process_aspect_std: 1e-2,
            process_velocity_std: 0.5,
            measurement_position_std: 1.0,
            measurement_aspect_std: 1e-2,
        }
    }
}

impl NoiseConfig {
    /// All stddevs zero: predict becomes exact linear extrapolation.
    pub fn zero() -> Self {
        Self {
            process_position_std: 0.0,
            process_aspect_std: 0.0,
            process_velocity_std: 0.0,
            measurement_position_std: 0.0,
            measurement_aspect_std: 0.0,
        }
    }

    pub(crate) fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("process_position_std", self.process_position_std),
            ("process_aspect_std", self.process_aspect_std),
            ("process_velocity_std", self.process_velocity_std),
            ("measurement_position_std", self.measurement_position_std),
            ("measurement_aspect_std", self.measurement_aspect_std),
        ]
    }

    fn process_covariance(&self) -> StateCovariance {
        let p = self.process_position_std.powi(2);
        let a = self.process_aspect_std.powi(2);
        let v = self.process_velocity_std.powi(2);
        StateCovariance::from_diagonal(&StateVector::from_column_slice(&[p, p, p, a, v, v, v]))
    }

    fn measurement_covariance(&self) -> Matrix4<f64> {
        let p = self.measurement_position_std.powi(2);
        let a = self.measurement_aspect_std.powi(2);
        Matrix4::from_diagonal(&Vector4::new(p, p, p, a))
    }
}

/// Filter mean and covariance for one tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> ObservationMatrix {
    let mut h = ObservationMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

/// `(cx, cy, h, r)` of a box.
pub fn measurement_of(b: &BoundingBox) -> Vector4<f64> {
    let (cx, cy) = b.center();
    Vector4::new(cx, cy, b.height(), b.width() / b.height())
}

impl MotionState {
    /// State at rest on `bbox`, with inflated velocity uncertainty.
    pub fn init(bbox: &BoundingBox, noise: &NoiseConfig) -> Self {
        let z = measurement_of(bbox);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);

        let p = noise.measurement_position_std.powi(2);
        let a = noise.measurement_aspect_std.powi(2);
        let v = (INITIAL_VELOCITY_INFLATION * noise.process_velocity_std).powi(2);
        let covariance =
            StateCovariance::from_diagonal(&StateVector::from_column_slice(&[p, p, p, a, v, v, v]));
        Self { mean, covariance }
    }

    pub fn cx(&self) -> f64 {
        self.mean[0]
    }

    pub fn cy(&self) -> f64 {
        self.mean[1]
    }

    pub fn height(&self) -> f64 {
        self.mean[2]
    }

    pub fn aspect(&self) -> f64 {
        self.mean[3]
    }

    /// `(vcx, vcy, vh)`.
    pub fn velocity(&self) -> (f64, f64, f64) {
        (self.mean[4], self.mean[5], self.mean[6])
    }

    pub fn set_velocity(&mut self, vcx: f64, vcy: f64, vh: f64) {
        self.mean[4] = vcx;
        self.mean[5] = vcy;
        self.mean[6] = vh;
    }

    /// One constant-velocity step.
    pub fn predict(&self, noise: &NoiseConfig) -> Self {
        let f = transition();
        let mean = f * self.mean;
        let covariance =
            symmetrize(f * self.covariance * f.transpose() + noise.process_covariance());
        Self { mean, covariance }
    }

    /// Kalman correction with `measurement`. Also returns the Mahalanobis
    /// norm of the innovation, used as the assignment cost.
    pub fn update(
        &self,
        measurement: &BoundingBox,
        noise: &NoiseConfig,
    ) -> Result<(Self, f64), MotionError> {
        let h = observation();
        let r = noise.measurement_covariance();
        let innovation = measurement_of(measurement) - h * self.mean;
        let s = symmetrize4(h * self.covariance * h.transpose() + r);
        let chol = s.cholesky().ok_or(MotionError::DegenerateCovariance)?;

        // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ since S and P are symmetric.
        let gain = chol.solve(&(h * self.covariance)).transpose();
        let mean = self.mean + gain * innovation;

        let i_kh = StateCovariance::identity() - gain * h;
        let covariance =
            symmetrize(i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose());

        let cost = innovation.dot(&chol.solve(&innovation)).max(0.0).sqrt();
        Ok((Self { mean, covariance }, cost))
    }

    /// Box at the current mean.
    pub fn to_box(&self) -> BoundingBox {
        let h = self.height().max(MIN_EXTENT);
        let w = self.aspect().max(MIN_EXTENT) * h;
        BoundingBox::from_center(self.cx(), self.cy(), w, h).expect("clamped extents are positive")
    }
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}

fn symmetrize4(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
