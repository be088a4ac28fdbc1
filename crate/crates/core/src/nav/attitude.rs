//! Attitude filter: error-state EKF over attitude, body rate, gyro and
//! magnetometer lumped errors and the magnetic deviation.
//!
//! The attitude error `δθ` is local: `R_true = R̂·exp(δθ×)`. The other
//! error states are additive.

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::PVector;
use crate::altnav::Attitude as ObsModel;
use crate::error::SimError;
use crate::geo::{self, skew, BodyVector, NedVector};

pub const NX: usize = 15;
pub const NZ: usize = 9;
type Mx = SMatrix<f64, NX, NX>;
type Vx = SVector<f64, NX>;
type Hz = SMatrix<f64, NZ, NX>;
type Vz = SVector<f64, NZ>;

const TH: usize = 0;
const W: usize = 3;
const EG: usize = 6;
const EM: usize = 9;
const BD: usize = 12;

/// Initial 1σ uncertainties, also used to perturb truth-seeded starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttInitSigma {
    pub attitude_deg: f64,
    /// [rad/s]
    pub rate: f64,
    /// [rad/s]
    pub gyro_error: f64,
    /// [nT]
    pub mag_error: f64,
    /// [nT]
    pub mag_deviation: f64,
}

impl Default for AttInitSigma {
    fn default() -> Self {
        Self { attitude_deg: 0.05, rate: 1e-3, gyro_error: 2e-4, mag_error: 10.0, mag_deviation: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttFilterConfig {
    /// Gyro observation σ per sample [rad/s]; derived from the sensor config when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gyro_sigma: Option<f64>,
    /// Magnetometer observation σ per sample [nT]; derived when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mag_sigma: Option<f64>,
    /// Accelerometer observation σ [m/s²], dominated by the discarded derivatives.
    pub accel_sigma: f64,
    /// Body rate random walk [rad²/s³].
    pub q_rate: f64,
    /// Gyro lumped error random walk [rad²/s³].
    pub q_gyro_error: f64,
    /// Magnetometer lumped error random walk [nT²/s].
    pub q_mag_error: f64,
    /// Magnetic deviation random walk [nT²/s].
    pub q_mag_deviation: f64,
    pub init: AttInitSigma,
}

impl Default for AttFilterConfig {
    fn default() -> Self {
        Self {
            gyro_sigma: None,
            mag_sigma: None,
            accel_sigma: 1.0,
            q_rate: 1e-3,
            q_gyro_error: 1e-12,
            q_mag_error: 1.0,
            q_mag_deviation: 0.01,
            init: AttInitSigma::default(),
        }
    }
}

impl AttFilterConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let opt = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && x > 0.0);
        if !opt(self.gyro_sigma) {
            return Err(("gyro_sigma", "must be positive".into()));
        }
        if !opt(self.mag_sigma) {
            return Err(("mag_sigma", "must be positive".into()));
        }
        if !(self.accel_sigma.is_finite() && self.accel_sigma > 0.0) {
            return Err(("accel_sigma", "must be positive".into()));
        }
        for (name, v) in [
            ("q_rate", self.q_rate),
            ("q_gyro_error", self.q_gyro_error),
            ("q_mag_error", self.q_mag_error),
            ("q_mag_deviation", self.q_mag_deviation),
            ("init.attitude_deg", self.init.attitude_deg),
            ("init.rate", self.init.rate),
            ("init.gyro_error", self.init.gyro_error),
            ("init.mag_error", self.init.mag_error),
            ("init.mag_deviation", self.init.mag_deviation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((name, format!("must be non-negative (got {v})")));
            }
        }
        Ok(())
    }
}

/// Nominal attitude filter state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttState {
    pub q_nb: UnitQuaternion<f64>,
    pub w_nb_b: BodyVector,
    pub e_gyr: BodyVector,
    pub e_mag: BodyVector,
    pub b_dev_n: NedVector,
}

/// Attitude filter observation triads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttObs {
    pub gyro: BodyVector,
    pub mag: BodyVector,
    pub accel: BodyVector,
}

/// Predicted accelerometer output for a given observation model.
pub fn predicted_specific_force(model: ObsModel, q_nb: &UnitQuaternion<f64>, w_nb_b: &BodyVector, p: &PVector) -> BodyVector {
    let kin = geo::rotate_to_body(q_nb, &(p.w_en_n.cross(&p.v_n) + p.a_cor_n - p.gravity_n));
    let rot = match model {
        ObsModel::Baseline => w_nb_b.cross(&geo::rotate_to_body(q_nb, &(p.v_n - p.wind_n))),
        ObsModel::ZeroFb => w_nb_b.cross(&geo::rotate_to_body(q_nb, &p.v_n)),
        ObsModel::ZeroFn => BodyVector::zeros(),
    };
    rot + kin + p.e_acc
}

/// Predicted observations (gyro, mag, accel) and their Jacobian with respect
/// to the error state.
pub fn linearize(x: &AttState, p: &PVector, model: ObsModel) -> (Vz, Hz) {
    let rt = x.q_nb.to_rotation_matrix().into_inner().transpose();
    let mut h = Hz::zeros();
    let mut z = Vz::zeros();

    let w_in_b = rt * (p.w_ie_n + p.w_en_n);
    z.fixed_rows_mut::<3>(0).copy_from(&(x.w_nb_b + w_in_b + x.e_gyr));
    h.fixed_view_mut::<3, 3>(0, TH).copy_from(&skew(&w_in_b));
    h.fixed_view_mut::<3, 3>(0, W).copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(0, EG).copy_from(&Matrix3::identity());

    let b_b = rt * (p.mag_model_n - x.b_dev_n);
    z.fixed_rows_mut::<3>(3).copy_from(&(b_b + x.e_mag));
    h.fixed_view_mut::<3, 3>(3, TH).copy_from(&skew(&b_b));
    h.fixed_view_mut::<3, 3>(3, EM).copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(3, BD).copy_from(&(-rt));

    let c = rt * (p.w_en_n.cross(&p.v_n) + p.a_cor_n - p.gravity_n);
    let u = match model {
        ObsModel::Baseline => Some(rt * (p.v_n - p.wind_n)),
        ObsModel::ZeroFb => Some(rt * p.v_n),
        ObsModel::ZeroFn => None,
    };
    let mut h_th = skew(&c);
    let mut f = c + p.e_acc;
    if let Some(u) = u {
        f += x.w_nb_b.cross(&u);
        h_th += skew(&x.w_nb_b) * skew(&u);
        h.fixed_view_mut::<3, 3>(6, W).copy_from(&(-skew(&u)));
    }
    h.fixed_view_mut::<3, 3>(6, TH).copy_from(&h_th);
    z.fixed_rows_mut::<3>(6).copy_from(&f);
    (z, h)
}

pub struct AttitudeFilter {
    x: AttState,
    p: Mx,
    p0_diag: Vx,
    cfg: AttFilterConfig,
    model: ObsModel,
    sigmas: [f64; 3],
    innovation: Vz,
    innovation_var: Vz,
    recoveries: u32,
}

fn finite3(v: &Vector3<f64>) -> bool {
    v.iter().all(|c| c.is_finite())
}

impl AttitudeFilter {
    /// `gyro_sigma` and `mag_sigma` are the resolved per-sample observation σ.
    pub fn new(init: AttState, cfg: &AttFilterConfig, model: ObsModel, gyro_sigma: f64, mag_sigma: f64) -> Self {
        let s = &cfg.init;
        let mut d = Vx::zeros();
        let att = s.attitude_deg.to_radians();
        for i in 0..3 {
            // Floors keep P strictly positive definite for error-free configs.
            d[TH + i] = att.max(1e-6).powi(2);
            d[W + i] = s.rate.max(1e-6).powi(2);
            d[EG + i] = s.gyro_error.max(1e-7).powi(2);
            d[EM + i] = s.mag_error.max(1e-3).powi(2);
            d[BD + i] = s.mag_deviation.max(1e-3).powi(2);
        }
        Self {
            x: init,
            p: Mx::from_diagonal(&d),
            p0_diag: d,
            cfg: *cfg,
            model,
            sigmas: [gyro_sigma.max(1e-9), mag_sigma.max(1e-6), cfg.accel_sigma],
            innovation: Vz::zeros(),
            innovation_var: Vz::zeros(),
            recoveries: 0,
        }
    }

    pub fn state(&self) -> &AttState {
        &self.x
    }

    pub fn covariance(&self) -> &Mx {
        &self.p
    }

    /// Last innovation (gyro, mag, accel) and its predicted variance.
    pub fn innovation(&self) -> (Vz, Vz) {
        (self.innovation, self.innovation_var)
    }

    pub fn recoveries(&self) -> u32 {
        self.recoveries
    }

    pub fn predict(&mut self, dt: f64) {
        let w = self.x.w_nb_b;
        self.x.q_nb = geo::integrate_attitude(&self.x.q_nb, &w, dt);
        let mut f = Mx::identity();
        let rot = geo::quat_exp(&(-w * dt)).to_rotation_matrix().into_inner();
        f.fixed_view_mut::<3, 3>(TH, TH).copy_from(&rot);
        f.fixed_view_mut::<3, 3>(TH, W).copy_from(&(Matrix3::identity() * dt));
        let c = &self.cfg;
        let mut q = Vx::zeros();
        for i in 0..3 {
            q[W + i] = c.q_rate * dt;
            q[EG + i] = c.q_gyro_error * dt;
            q[EM + i] = c.q_mag_error * dt;
            q[BD + i] = c.q_mag_deviation * dt;
        }
        self.p = f * self.p * f.transpose() + Mx::from_diagonal(&q);
    }

    /// Batch update with the three observation triads; `p` comes from the
    /// previous position-filter step.
    pub fn update(&mut self, obs: &AttObs, p: &PVector, t: f64) -> Result<(), SimError> {
        let (pred, mut h) = linearize(&self.x, p, self.model);
        let z = Vz::from_iterator(obs.gyro.iter().chain(obs.mag.iter()).chain(obs.accel.iter()).copied());
        let mut nu = z - pred;
        let mut r = Vz::zeros();

        for (k, (z, sigma)) in [obs.gyro, obs.mag, obs.accel].iter().zip(self.sigmas).enumerate() {
            let usable = finite3(z) && nu.fixed_rows::<3>(3 * k).iter().all(|v| v.is_finite());
            for i in 0..3 {
                r[3 * k + i] = sigma * sigma;
                if !usable {
                    h.row_mut(3 * k + i).fill(0.0);
                    nu[3 * k + i] = 0.0;
                    r[3 * k + i] = 1.0;
                }
            }
        }

        let rm = SMatrix::<f64, NZ, NZ>::from_diagonal(&r);
        let s = h * self.p * h.transpose() + rm;
        let Some(chol) = s.cholesky() else {
            return self.recover(t);
        };
        let k = self.p * h.transpose() * chol.inverse();
        let dx = k * nu;
        let ikh = Mx::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * rm * k.transpose();
        self.innovation = nu;
        self.innovation_var = s.diagonal();
        self.apply(&dx);
        self.p = (self.p + self.p.transpose()) * 0.5;
        if self.p.cholesky().is_none() {
            return self.recover(t);
        }
        Ok(())
    }

    fn apply(&mut self, dx: &Vx) {
        let x = &mut self.x;
        let dth: Vector3<f64> = dx.fixed_rows::<3>(TH).into();
        x.q_nb = geo::quat_mul(&x.q_nb, &geo::quat_exp(&dth));
        x.w_nb_b += dx.fixed_rows::<3>(W);
        x.e_gyr += dx.fixed_rows::<3>(EG);
        x.e_mag += dx.fixed_rows::<3>(EM);
        x.b_dev_n += dx.fixed_rows::<3>(BD);
    }

    /// Re-symmetrizes and inflates by a fraction of the initial covariance
    /// until positive definite, giving up after a few attempts.
    fn recover(&mut self, t: f64) -> Result<(), SimError> {
        self.p = (self.p + self.p.transpose()) * 0.5;
        for k in 0..4 {
            if self.p.cholesky().is_some() && self.p.iter().all(|v| v.is_finite()) {
                self.recoveries += 1;
                return Ok(());
            }
            let scale = 1e-3 * 10f64.powi(k);
            self.p += Mx::from_diagonal(&(self.p0_diag * scale));
        }
        Err(SimError::Covariance { t, filter: "attitude" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{EarthConstants, EulerAngles, GeodeticPosition};

    fn pvec(q: &UnitQuaternion<f64>, pos: &GeodeticPosition, v: NedVector) -> PVector {
        let _ = q;
        PVector::assemble(pos, &v, &NedVector::zeros(), &BodyVector::zeros(), &NedVector::new(20000.0, 1000.0, 45000.0), &EarthConstants::default())
            .unwrap()
    }

    fn perfect_obs(q: &UnitQuaternion<f64>, w: &BodyVector, p: &PVector) -> AttObs {
        let rt = q.to_rotation_matrix().into_inner().transpose();
        AttObs {
            gyro: w + rt * (p.w_ie_n + p.w_en_n),
            mag: rt * p.mag_model_n,
            accel: predicted_specific_force(ObsModel::Baseline, q, w, p),
        }
    }

    #[test]
    fn converges_from_an_attitude_offset_with_perfect_observations() {
        let q_true = EulerAngles::new(0.8, 0.05, -0.1).to_quaternion();
        let pos = GeodeticPosition::new(0.0, 0.7, 1500.0);
        let p = pvec(&q_true, &pos, NedVector::zeros());
        let init = AttState {
            q_nb: geo::quat_mul(&q_true, &geo::quat_exp(&Vector3::new(0.01, -0.01, 0.02))),
            w_nb_b: BodyVector::zeros(),
            e_gyr: BodyVector::zeros(),
            e_mag: BodyVector::zeros(),
            b_dev_n: NedVector::zeros(),
        };
        let mut cfg = AttFilterConfig::default();
        cfg.init.attitude_deg = 2.0;
        cfg.accel_sigma = 0.05;
        cfg.init.mag_error = 0.0;
        cfg.init.mag_deviation = 0.0;
        let mut f = AttitudeFilter::new(init, &cfg, ObsModel::Baseline, 1e-4, 1.0);
        let obs = perfect_obs(&q_true, &BodyVector::zeros(), &p);
        for k in 0..3000 {
            f.predict(0.01);
            f.update(&obs, &p, k as f64 * 0.01).unwrap();
        }
        let err = geo::rotation_minus(&f.state().q_nb, &q_true).angle().to_degrees();
        assert!(err < 0.01, "error {err} deg");
        assert_eq!(f.recoveries(), 0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let q = EulerAngles::new(0.3, 0.1, 0.2).to_quaternion();
        let pos = GeodeticPosition::new(0.0, 0.7, 1500.0);
        let mut p = pvec(&q, &pos, NedVector::new(20.0, 10.0, -1.0));
        p.wind_n = NedVector::new(3.0, -2.0, 0.0);
        let x = AttState {
            q_nb: q,
            w_nb_b: BodyVector::new(0.02, -0.01, 0.05),
            e_gyr: BodyVector::new(1e-3, 0.0, 0.0),
            e_mag: BodyVector::new(100.0, 0.0, -50.0),
            b_dev_n: NedVector::new(80.0, -20.0, 10.0),
        };
        for model in ObsModel::ALL.iter().copied() {
            let mut f = AttitudeFilter::new(x, &AttFilterConfig::default(), model, 1e-3, 5.0);
            let (z0, h) = linearize(&x, &p, model);
            let eps = 1e-6;
            for j in 0..NX {
                let mut dx = Vx::zeros();
                dx[j] = eps;
                f.x = x;
                f.apply(&dx);
                let dz = (linearize(&f.x, &p, model).0 - z0) / eps;
                for i in 0..NZ {
                    let tol = 1e-4 * (1.0 + h[(i, j)].abs());
                    assert!((dz[i] - h[(i, j)]).abs() < tol, "{model}: H[{i},{j}] fd {} vs {}", dz[i], h[(i, j)]);
                }
            }
            assert!((z0.fixed_rows::<3>(6) - predicted_specific_force(model, &x.q_nb, &x.w_nb_b, &p)).norm() < 1e-12);
        }
    }

    #[test]
    fn non_finite_triad_is_ignored() {
        let q = EulerAngles::new(0.0, 0.0, 0.0).to_quaternion();
        let pos = GeodeticPosition::new(0.0, 0.7, 1500.0);
        let p = pvec(&q, &pos, NedVector::zeros());
        let x = AttState { q_nb: q, w_nb_b: BodyVector::zeros(), e_gyr: BodyVector::zeros(), e_mag: BodyVector::zeros(), b_dev_n: NedVector::zeros() };
        let mut f = AttitudeFilter::new(x, &AttFilterConfig::default(), ObsModel::Baseline, 1e-3, 5.0);
        let mut obs = perfect_obs(&q, &BodyVector::zeros(), &p);
        obs.mag = BodyVector::new(f64::NAN, 0.0, 0.0);
        f.predict(0.01);
        f.update(&obs, &p, 0.0).unwrap();
        assert!(f.state().q_nb.coords.iter().all(|c| c.is_finite()));
        assert_eq!(f.innovation().0.fixed_rows::<3>(3).norm(), 0.0);
    }

    #[test]
    fn observation_models_coincide_in_still_air() {
        let q = EulerAngles::new(0.4, 0.0, 0.0).to_quaternion();
        let pos = GeodeticPosition::new(0.0, 0.7, 1500.0);
        let p = pvec(&q, &pos, NedVector::new(25.0, 10.0, 0.0));
        let w = BodyVector::zeros();
        let a = predicted_specific_force(ObsModel::Baseline, &q, &w, &p);
        let b = predicted_specific_force(ObsModel::ZeroFb, &q, &w, &p);
        let c = predicted_specific_force(ObsModel::ZeroFn, &q, &w, &p);
        assert!((a - b).norm() < 1e-12 && (a - c).norm() < 1e-12);
    }
}
