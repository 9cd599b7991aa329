use nalgebra::{SMatrix, SVector};

use crate::Rect;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;

/// Chi-square 0.95 quantile for 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

/// Constant-velocity filter over `(cx, cy, aspect, height)` and their rates, one step per tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

pub fn measurement_of(r: &Rect) -> Measurement {
    let c = r.center();
    Measurement::new(c.x, c.y, r.width() / r.height(), r.height())
}

pub fn rect_of(m: &StateVector) -> Rect {
    let h = m[3].max(1e-6);
    let w = (m[2] * h).max(1e-6);
    Rect {
        x_tl: m[0] - w / 2.0,
        y_tl: m[1] - h / 2.0,
        x_br: m[0] + w / 2.0,
        y_br: m[1] + h / 2.0,
    }
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> SMatrix<f64, 4, 8> {
    let mut h = SMatrix::<f64, 4, 8>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

impl KalmanFilter {
    pub fn initiate(&self, z: &Measurement) -> (StateVector, StateCovariance) {
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(z);
        let (p, v, h) = (self.std_weight_position, self.std_weight_velocity, z[3]);
        let std = [2.0 * p * h, 2.0 * p * h, 1e-2, 2.0 * p * h, 10.0 * v * h, 10.0 * v * h, 1e-5, 10.0 * v * h];
        let cov = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        (mean, cov)
    }

    pub fn predict(&self, mean: &StateVector, cov: &StateCovariance) -> (StateVector, StateCovariance) {
        let (p, v, h) = (self.std_weight_position, self.std_weight_velocity, mean[3]);
        let std = [p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h];
        let q = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        let f = transition();
        (f * mean, f * cov * f.transpose() + q)
    }

    pub fn project(&self, mean: &StateVector, cov: &StateCovariance) -> (Measurement, SMatrix<f64, 4, 4>) {
        let p = self.std_weight_position * mean[3];
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::new(p * p, p * p, 1e-2, p * p));
        let h = observation();
        (h * mean, h * cov * h.transpose() + r)
    }

    pub fn update(&self, mean: &StateVector, cov: &StateCovariance, z: &Measurement) -> (StateVector, StateCovariance) {
        let (proj_mean, proj_cov) = self.project(mean, cov);
        let h = observation();
        let Some(chol) = proj_cov.cholesky() else {
            return (*mean, *cov);
        };
        // K = P H^T S^-1, solved as S K^T = H P.
        let gain = chol.solve(&(h * cov)).transpose();
        let innovation = z - proj_mean;
        (mean + gain * innovation, cov - gain * proj_cov * gain.transpose())
    }

    /// Squared Mahalanobis distance between the projected state and `z`.
    pub fn gating_distance(&self, mean: &StateVector, cov: &StateCovariance, z: &Measurement) -> f64 {
        let (proj_mean, proj_cov) = self.project(mean, cov);
        let d = z - proj_mean;
        match proj_cov.cholesky() {
            Some(chol) => d.dot(&chol.solve(&d)),
            None => f64::INFINITY,
        }
    }
}
