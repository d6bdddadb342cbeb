//! Constant-velocity Kalman filter over `(cx, cy, area, aspect)`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::data_model::BBox;
use crate::error::{Error, Result};

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;

/// Noise variances. Positions in pixels, area in pixels², aspect = w / h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    pub position_measurement_var: f64,
    pub area_measurement_var: f64,
    pub aspect_measurement_var: f64,
    pub position_process_var: f64,
    pub velocity_process_var: f64,
    pub area_process_var: f64,
    pub aspect_process_var: f64,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            position_measurement_var: 1.0,
            area_measurement_var: 10.0,
            aspect_measurement_var: 1e-3,
            position_process_var: 1.0,
            velocity_process_var: 1e-2,
            area_process_var: 1.0,
            aspect_process_var: 1e-4,
            initial_position_var: 10.0,
            initial_velocity_var: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn bbox(&self) -> BBox {
        let area = self.mean[2].max(f64::MIN_POSITIVE);
        let aspect = self.mean[3].max(f64::MIN_POSITIVE);
        let w = (area * aspect).sqrt();
        let h = area / w;
        BBox::from_center(self.mean[0], self.mean[1], w, h)
    }

    fn check_finite(&self) -> Result<()> {
        if self.mean.iter().all(|v| v.is_finite()) && self.covariance.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Degenerate("non-finite Kalman state".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BoxKalman {
    pub params: KalmanParams,
}

fn measurement(b: &BBox) -> Result<Measurement> {
    if !b.is_valid() {
        return Err(Error::Degenerate(format!("invalid measurement box {b:?}")));
    }
    let (cx, cy) = b.center();
    Ok(Measurement::new(cx, cy, b.area(), b.w / b.h))
}

impl BoxKalman {
    pub fn new(params: KalmanParams) -> Self {
        Self { params }
    }

    /// State at rest at the measured box.
    pub fn initiate(&self, b: &BBox) -> Result<KalmanState> {
        let z = measurement(b)?;
        let p = &self.params;
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let cov = StateCovariance::from_diagonal(&StateVector::from_column_slice(&[
            p.initial_position_var,
            p.initial_position_var,
            p.initial_position_var * 10.0,
            p.aspect_measurement_var * 10.0,
            p.initial_velocity_var,
            p.initial_velocity_var,
            p.initial_velocity_var,
            p.aspect_process_var * 1e3,
        ]));
        Ok(KalmanState { mean, covariance: cov })
    }

    fn transition() -> StateCovariance {
        let mut f = StateCovariance::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    fn process_noise(&self) -> StateCovariance {
        let p = &self.params;
        StateCovariance::from_diagonal(&StateVector::from_column_slice(&[
            p.position_process_var,
            p.position_process_var,
            p.area_process_var,
            p.aspect_process_var,
            p.velocity_process_var,
            p.velocity_process_var,
            p.velocity_process_var,
            p.aspect_process_var * 1e-2,
        ]))
    }

    fn measurement_noise(&self) -> SMatrix<f64, 4, 4> {
        let p = &self.params;
        SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::new(
            p.position_measurement_var,
            p.position_measurement_var,
            p.area_measurement_var,
            p.aspect_measurement_var,
        ))
    }

    /// Advances one frame.
    pub fn predict(&self, state: &KalmanState) -> Result<KalmanState> {
        state.check_finite()?;
        let mut mean = state.mean;
        // area and aspect must stay positive
        if mean[2] + mean[6] <= 0.0 {
            mean[6] = 0.0;
        }
        if mean[3] + mean[7] <= 0.0 {
            mean[7] = 0.0;
        }
        let f = Self::transition();
        let mean = f * mean;
        let cov = f * state.covariance * f.transpose() + self.process_noise();
        let out = KalmanState {
            mean,
            covariance: symmetrize(cov),
        };
        out.check_finite()?;
        Ok(out)
    }

    /// Incorporates a measured box (Joseph-form covariance update).
    pub fn update(&self, state: &KalmanState, b: &BBox) -> Result<KalmanState> {
        state.check_finite()?;
        let z = measurement(b)?;
        let mut h = SMatrix::<f64, 4, 8>::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        let r = self.measurement_noise();
        let innovation = z - h * state.mean;
        let s = h * state.covariance * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular innovation covariance".into()))?;
        let gain = state.covariance * h.transpose() * s_inv;
        let mean = state.mean + gain * innovation;
        let i_kh = StateCovariance::identity() - gain * h;
        let cov = i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose();
        let out = KalmanState {
            mean,
            covariance: symmetrize(cov),
        };
        out.check_finite()?;
        Ok(out)
    }
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_spd(m: &StateCovariance) -> bool {
        (m - m.transpose()).abs().max() < 1e-9 * m.abs().max().max(1.0)
            && nalgebra::Cholesky::new(*m).is_some()
    }

    #[test]
    fn stationary_box_predicts_same_center() {
        let kf = BoxKalman::default();
        let s = kf.initiate(&BBox::new(10.0, 20.0, 30.0, 40.0)).unwrap();
        let p = kf.predict(&s).unwrap();
        assert_eq!(p.center(), s.center());
    }

    #[test]
    fn constant_velocity_extrapolation_through_gap() {
        let kf = BoxKalman::default();
        let at = |t: usize| BBox::from_center(100.0 + 5.0 * t as f64, 50.0, 40.0, 80.0);
        let mut s = kf.initiate(&at(0)).unwrap();
        for t in 1..10 {
            s = kf.predict(&s).unwrap();
            s = kf.update(&s, &at(t)).unwrap();
        }
        for _ in 0..5 {
            s = kf.predict(&s).unwrap();
        }
        // last update at t = 9, five predictions later the box is at t = 14
        let (cx, cy) = s.center();
        let expected = 100.0 + 5.0 * 14.0;
        assert!((cx - expected).abs() < 2.0, "cx {cx} vs {expected}");
        assert!((cy - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let kf = BoxKalman::default();
        let s = kf.initiate(&BBox::new(0.0, 0.0, 20.0, 10.0)).unwrap();
        let p = kf.predict(&s).unwrap();
        let m = p.bbox();
        let u = kf.update(&p, &m).unwrap();
        assert!((u.mean - p.mean).abs().max() < 1e-9);
        assert!(u.covariance.trace() < p.covariance.trace());
    }

    #[test]
    fn non_finite_state_is_an_error() {
        let kf = BoxKalman::default();
        let mut s = kf.initiate(&BBox::new(0.0, 0.0, 20.0, 10.0)).unwrap();
        s.mean[0] = f64::NAN;
        assert!(kf.predict(&s).is_err());
        assert!(kf.update(&s, &BBox::new(0.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn area_stays_positive_under_shrinking_velocity() {
        let kf = BoxKalman::default();
        let mut s = kf.initiate(&BBox::new(0.0, 0.0, 20.0, 10.0)).unwrap();
        s.mean[6] = -1e6;
        let p = kf.predict(&s).unwrap();
        assert!(p.mean[2] > 0.0);
    }

    proptest! {
        #[test]
        fn covariance_stays_spd(steps in prop::collection::vec((any::<bool>(), -50.0f64..50.0, -50.0f64..50.0, 5.0f64..80.0, 5.0f64..80.0), 1..40)) {
            let kf = BoxKalman::default();
            let mut s = kf.initiate(&BBox::new(0.0, 0.0, 30.0, 30.0)).unwrap();
            prop_assert!(is_spd(&s.covariance));
            for (measure, x, y, w, h) in steps {
                s = kf.predict(&s).unwrap();
                prop_assert!(is_spd(&s.covariance));
                if measure {
                    s = kf.update(&s, &BBox::new(x, y, w, h)).unwrap();
                    prop_assert!(is_spd(&s.covariance));
                }
            }
        }
    }
}
