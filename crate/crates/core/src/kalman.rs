//! Constant-velocity box filter used by every subtracker.
//!
//! State is `(cx, cy, area, aspect, vcx, vcy, varea)` with `aspect = w / h`
//! held static; the measurement is `(cx, cy, area, aspect)`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BBox;

pub type StateVector = SVector<f64, 7>;
pub type StateMatrix = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;
type ObsMatrix = SMatrix<f64, 4, 7>;

/// Predicted areas are floored here before a box is rebuilt.
pub const MIN_AREA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// Initial variance of `cx, cy, aspect`.
    pub initial_position_var: f64,
    pub initial_area_var: f64,
    /// Initial variance of the three velocity components.
    pub initial_velocity_var: f64,
    /// Diagonal process noise, one entry per state component.
    pub process_noise: [f64; 7],
    /// Diagonal measurement noise for `cx, cy, area, aspect`.
    pub measurement_noise: [f64; 4],
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            initial_position_var: 10.0,
            initial_area_var: 10.0,
            initial_velocity_var: 1000.0,
            process_noise: [1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4],
            measurement_noise: [1.0, 1.0, 10.0, 10.0],
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.initial_position_var,
            self.initial_area_var,
            self.initial_velocity_var,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("initial variances must be positive".into()));
        }
        if self.process_noise.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("process noise must be positive".into()));
        }
        if self.measurement_noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("measurement noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Sum of the initial covariance diagonal.
    pub fn initial_trace(&self) -> f64 {
        3.0 * self.initial_position_var + self.initial_area_var + 3.0 * self.initial_velocity_var
    }

    fn initial_covariance(&self) -> StateMatrix {
        StateMatrix::from_diagonal(&StateVector::from([
            self.initial_position_var,
            self.initial_position_var,
            self.initial_area_var,
            self.initial_position_var,
            self.initial_velocity_var,
            self.initial_velocity_var,
            self.initial_velocity_var,
        ]))
    }
}

fn transition() -> StateMatrix {
    let mut f = StateMatrix::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> ObsMatrix {
    let mut h = ObsMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn measure(b: &BBox) -> Measurement {
    let (cx, cy) = b.center();
    Measurement::new(cx, cy, b.area(), b.width() / b.height())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxFilterState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl BoxFilterState {
    pub fn init(cfg: &KalmanConfig, b: &BBox) -> Result<Self> {
        if b.width() <= 0.0 || b.height() <= 0.0 {
            return Err(Error::Domain("cannot initialise a filter from a zero-area box".into()));
        }
        let z = measure(b);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        Ok(Self {
            mean,
            covariance: cfg.initial_covariance(),
        })
    }

    pub fn predict(&self, cfg: &KalmanConfig) -> Self {
        let f = transition();
        let mut mean = f * self.mean;
        // A shrinking box may not pass through zero area.
        if mean[2] <= 0.0 {
            mean[2] = self.mean[2].max(MIN_AREA);
            mean[6] = 0.0;
        }
        let q = StateMatrix::from_diagonal(&StateVector::from(cfg.process_noise));
        let covariance = symmetrize(f * self.covariance * f.transpose() + q);
        Self { mean, covariance }
    }

    pub fn update(&self, cfg: &KalmanConfig, z: &BBox) -> Result<Self> {
        if z.width() <= 0.0 || z.height() <= 0.0 {
            return Err(Error::Domain("measurement box has zero area".into()));
        }
        let h = observation();
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::from(cfg.measurement_noise));
        let innovation = measure(z) - h * self.mean;
        let s = h * self.covariance * h.transpose() + r;
        let s_inv = s
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| s.try_inverse())
            .ok_or_else(|| Error::Domain("singular innovation covariance".into()))?;
        let gain = self.covariance * h.transpose() * s_inv;
        let mean = self.mean + gain * innovation;
        let i_kh = StateMatrix::identity() - gain * h;
        // Joseph form keeps the posterior symmetric positive semidefinite.
        let covariance = symmetrize(
            i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose(),
        );
        Ok(Self { mean, covariance })
    }

    /// Box encoded by the current mean, area floored at [`MIN_AREA`].
    pub fn bbox(&self) -> BBox {
        let area = self.mean[2].max(MIN_AREA);
        let aspect = self.mean[3].max(1e-6);
        let w = (area * aspect).sqrt();
        let h = area / w;
        BBox::from_center(self.mean[0], self.mean[1], w, h)
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

fn symmetrize(m: StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

pub fn kf_init(cfg: &KalmanConfig, b: &BBox) -> Result<BoxFilterState> {
    BoxFilterState::init(cfg, b)
}

pub fn kf_predict(cfg: &KalmanConfig, s: &BoxFilterState) -> BoxFilterState {
    s.predict(cfg)
}

pub fn kf_update(cfg: &KalmanConfig, s: &BoxFilterState, z: &BBox) -> Result<BoxFilterState> {
    s.update(cfg, z)
}
