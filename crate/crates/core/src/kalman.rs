//! Constant-velocity Kalman filter over `(x, y, w, h)` with velocities.
//!
//! Process and measurement noise standard deviations scale with the box
//! height, as in SORT-style trackers.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{BBox, MIN_EXTENT};

pub type Mean = SVector<f64, 8>;
pub type Cov = SMatrix<f64, 8, 8>;

const STD_POS: f64 = 1.0 / 20.0;
const STD_VEL: f64 = 1.0 / 160.0;

#[derive(Clone, Debug, PartialEq)]
pub struct KfState {
    pub mean: Mean,
    pub covariance: Cov,
}

fn transition() -> Cov {
    let mut f = Cov::identity();
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

fn pos_std(h: f64) -> [f64; 4] {
    let s = STD_POS * h;
    [s, s, s, s]
}

fn vel_std(h: f64) -> [f64; 4] {
    let s = STD_VEL * h;
    [s, s, s, s]
}

impl KfState {
    /// Starts a track at `b` with zero velocity.
    pub fn initiate(b: &BBox) -> Self {
        let mut mean = Mean::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from_slice(&b.to_array());
        let mut diag = SVector::<f64, 8>::zeros();
        for (i, s) in pos_std(b.h).iter().enumerate() {
            diag[i] = (2.0 * s).powi(2);
        }
        for (i, s) in vel_std(b.h).iter().enumerate() {
            diag[4 + i] = (10.0 * s).powi(2);
        }
        Self {
            mean,
            covariance: Cov::from_diagonal(&diag),
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(
            self.mean[0],
            self.mean[1],
            self.mean[2].max(MIN_EXTENT),
            self.mean[3].max(MIN_EXTENT),
        )
    }

    pub fn predict(&self) -> Self {
        let f = transition();
        let h = self.mean[3].max(MIN_EXTENT);
        let mut q = SVector::<f64, 8>::zeros();
        for (i, s) in pos_std(h).iter().chain(vel_std(h).iter()).enumerate() {
            q[i] = s * s;
        }
        let covariance = f * self.covariance * f.transpose() + Cov::from_diagonal(&q);
        Self {
            mean: f * self.mean,
            covariance: symmetrize(&covariance),
        }
    }

    pub fn update(&self, b: &BBox) -> Result<Self> {
        let hm = observation();
        let h = self.mean[3].max(MIN_EXTENT);
        let r_diag: SVector<f64, 4> = SVector::from(pos_std(h).map(|s| s * s));
        let s = hm * self.covariance * hm.transpose() + SMatrix::<f64, 4, 4>::from_diagonal(&r_diag);
        let chol = s.cholesky().ok_or(Error::NotPositiveDefinite)?;
        // K = P H^T S^-1
        let pht = self.covariance * hm.transpose();
        let gain = chol.solve(&pht.transpose()).transpose();
        let z = SVector::<f64, 4>::from(b.to_array());
        let innovation = z - hm * self.mean;
        let mean = self.mean + gain * innovation;
        let covariance = symmetrize(&(self.covariance - gain * s * gain.transpose()));
        if covariance.cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { mean, covariance })
    }
}

fn symmetrize(c: &Cov) -> Cov {
    (c + c.transpose()) * 0.5
}
