//! Quaternion algebra, WGS84 geometry and rotating-Earth kinematics.
//!
//! Frames: `N` is the local North-East-Down frame, `B` the body
//! Forward-Right-Down frame. `q_nb` rotates body vectors into NED, so
//! `v_n = q_nb * v_b` and `v_b = q_nb⁻¹ * v_n`. Euler angles follow the
//! aerospace yaw-pitch-roll (Z-Y-X) sequence.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::GeoError;

/// Vector resolved in the NED frame.
pub type NedVector = Vector3<f64>;
/// Vector resolved in the body frame.
pub type BodyVector = Vector3<f64>;

/// Latitudes closer than this to a pole are rejected (89.9999 deg).
pub const POLE_GUARD: f64 = FRAC_PI_2 - 1.745_329_251_994_33e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarthConstants {
    /// Earth rotation rate [rad/s].
    pub omega_e: f64,
    /// WGS84 semi-major axis [m].
    pub a: f64,
    /// First eccentricity squared [-].
    pub e2: f64,
    /// Spherical Earth radius used by the geopotential/geometric altitude conversion [m].
    pub re: f64,
    /// Normal gravity at the equator [m/s²].
    pub gamma_equator: f64,
    /// Somigliana constant k [-].
    pub somigliana_k: f64,
    /// Linear free-air gravity gradient [1/s²].
    pub free_air_gradient: f64,
}

impl Default for EarthConstants {
    fn default() -> Self {
        Self {
            omega_e: 7.292_115e-5,
            a: 6_378_137.0,
            e2: 6.694_379_990_14e-3,
            re: 6_356_766.0,
            gamma_equator: 9.780_325_335_9,
            somigliana_k: 1.931_852_652_41e-3,
            free_air_gradient: 3.086e-6,
        }
    }
}

impl EarthConstants {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("omega_e", self.omega_e),
            ("a", self.a),
            ("e2", self.e2),
            ("re", self.re),
            ("gamma_equator", self.gamma_equator),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be strictly positive (got {v})"));
            }
        }
        if self.e2 >= 1.0 {
            return Err(format!("e2 must be below 1 (got {})", self.e2));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    /// Longitude [rad], wrapped to (-π, π].
    pub lon: f64,
    /// Latitude [rad].
    pub lat: f64,
    /// Altitude above the ellipsoid [m].
    pub h: f64,
}

impl GeodeticPosition {
    pub fn new(lon: f64, lat: f64, h: f64) -> Self {
        Self { lon: wrap_pi(lon), lat, h }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn to_quaternion(self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        let (roll, pitch, yaw) = q.euler_angles();
        Self { yaw, pitch, roll }
    }
}

/// Rotation vector (axis times angle) with angle in [0, π].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationVector(pub Vector3<f64>);

impl RotationVector {
    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_pi(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Hamilton product, renormalized.
pub fn quat_mul(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(a.into_inner() * b.into_inner())
}

/// NED vector expressed in body axes (`q* ⊗ v ⊗ q`).
pub fn rotate_to_body(q_nb: &UnitQuaternion<f64>, v_n: &NedVector) -> BodyVector {
    q_nb.inverse_transform_vector(v_n)
}

/// Body vector expressed in NED axes (`q ⊗ v ⊗ q*`).
pub fn rotate_to_ned(q_nb: &UnitQuaternion<f64>, v_b: &BodyVector) -> NedVector {
    q_nb.transform_vector(v_b)
}

/// Quaternion logarithm of a unit quaternion as a rotation vector.
///
/// The double cover is resolved by flipping to `w >= 0`, so the angle lies in [0, π].
pub fn quat_log(q: &UnitQuaternion<f64>) -> RotationVector {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s < 1e-12 {
        return RotationVector(v * 2.0);
    }
    let angle = 2.0 * s.atan2(w);
    RotationVector(v * (angle / s))
}

/// Exponential map of a rotation vector.
pub fn quat_exp(r: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*r)
}

/// Attitude error `q_est ⊖ q_true = log(q_true⁻¹ ⊗ q_est)`, expressed in the
/// body axes of the true attitude.
pub fn rotation_minus(q_est: &UnitQuaternion<f64>, q_true: &UnitQuaternion<f64>) -> RotationVector {
    quat_log(&(q_true.inverse() * q_est))
}

/// `½ q ⊗ (0, ω)` for a body angular rate.
pub fn quat_derivative(q: &UnitQuaternion<f64>, w_b: &BodyVector) -> Quaternion<f64> {
    q.into_inner() * Quaternion::from_imag(*w_b) * 0.5
}

/// One RK4 step of the attitude kinematics with a constant body rate,
/// renormalized afterwards.
pub fn integrate_attitude(q: &UnitQuaternion<f64>, w_b: &BodyVector, dt: f64) -> UnitQuaternion<f64> {
    let rate = |p: &Quaternion<f64>| p * Quaternion::from_imag(*w_b) * 0.5;
    let q0 = q.into_inner();
    let k1 = rate(&q0);
    let k2 = rate(&(q0 + k1 * (dt / 2.0)));
    let k3 = rate(&(q0 + k2 * (dt / 2.0)));
    let k4 = rate(&(q0 + k3 * dt));
    UnitQuaternion::new_normalize(q0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Prime-vertical radius `N` and meridian radius `M` at latitude `lat`.
pub fn radii(lat: f64, c: &EarthConstants) -> (f64, f64) {
    let s2 = lat.sin().powi(2);
    let den = 1.0 - c.e2 * s2;
    let n = c.a / den.sqrt();
    let m = c.a * (1.0 - c.e2) / (den * den.sqrt());
    (n, m)
}

pub fn earth_rate_ned(lat: f64, c: &EarthConstants) -> NedVector {
    NedVector::new(c.omega_e * lat.cos(), 0.0, -c.omega_e * lat.sin())
}

fn check_pole(lat: f64) -> Result<(), GeoError> {
    if !lat.is_finite() || lat.abs() > POLE_GUARD {
        Err(GeoError::PoleGuard { lat })
    } else {
        Ok(())
    }
}

/// Angular velocity of NED with respect to the Earth caused by motion over the ellipsoid.
pub fn transport_rate_ned(pos: &GeodeticPosition, v_n: &NedVector, c: &EarthConstants) -> Result<NedVector, GeoError> {
    check_pole(pos.lat)?;
    let (n, m) = radii(pos.lat, c);
    Ok(NedVector::new(
        v_n.y / (n + pos.h),
        -v_n.x / (m + pos.h),
        -v_n.y * pos.lat.tan() / (n + pos.h),
    ))
}

/// Coriolis acceleration `2 ω_IE × v` in NED.
pub fn coriolis_ned(lat: f64, v_n: &NedVector, c: &EarthConstants) -> NedVector {
    let (s, co) = lat.sin_cos();
    let w2 = 2.0 * c.omega_e;
    NedVector::new(w2 * v_n.y * s, w2 * (-v_n.x * s - v_n.z * co), w2 * v_n.y * co)
}

/// Transport (centripetal) acceleration `ω_IE × (ω_IE × x_EB)` in NED.
pub fn transport_accel_ned(lat: f64, h: f64, c: &EarthConstants) -> NedVector {
    let (n, _) = radii(lat, c);
    let (s, co) = lat.sin_cos();
    let k = c.omega_e * c.omega_e * (n + h);
    NedVector::new(k * s * co, 0.0, k * co * co)
}

/// Normal gravity (Somigliana with a linear free-air correction), pointing down.
pub fn gravity_model_ned(pos: &GeodeticPosition, c: &EarthConstants) -> NedVector {
    let s2 = pos.lat.sin().powi(2);
    let gamma = c.gamma_equator * (1.0 + c.somigliana_k * s2) / (1.0 - c.e2 * s2).sqrt();
    NedVector::new(0.0, 0.0, gamma - c.free_air_gradient * pos.h)
}

/// Ground velocity derivative in NED:
/// `v̇ = q⊗f⊗q* − ω_EN × v + g_c − a_cor`.
pub fn velocity_derivative_ned(
    f_b: &BodyVector,
    q_nb: &UnitQuaternion<f64>,
    v_n: &NedVector,
    pos: &GeodeticPosition,
    gravity_n: &NedVector,
    c: &EarthConstants,
) -> Result<NedVector, GeoError> {
    let w_en = transport_rate_ned(pos, v_n, c)?;
    Ok(rotate_to_ned(q_nb, f_b) - w_en.cross(v_n) + gravity_n - coriolis_ned(pos.lat, v_n, c))
}

/// Specific force from NED kinematics:
/// `f^N = ω_EN × v + v̇ + a_cor − g_c`, returned in body axes.
pub fn specific_force_from_kinematics(
    vdot_n: &NedVector,
    v_n: &NedVector,
    pos: &GeodeticPosition,
    q_nb: &UnitQuaternion<f64>,
    gravity_n: &NedVector,
    c: &EarthConstants,
) -> Result<BodyVector, GeoError> {
    let w_en = transport_rate_ned(pos, v_n, c)?;
    let f_n = w_en.cross(v_n) + vdot_n + coriolis_ned(pos.lat, v_n, c) - gravity_n;
    Ok(rotate_to_body(q_nb, &f_n))
}

/// Specific force from body-frame kinematics:
/// `f^B = ω_EB^B × v^B + v̇^B + q*⊗(a_cor − g_c)⊗q`, with `ω_EB = ω_NB + ω_EN`.
///
/// `vdot_b` is the time derivative of the body-axes components of the ground velocity.
pub fn specific_force_body_path(
    v_b: &BodyVector,
    vdot_b: &BodyVector,
    w_nb_b: &BodyVector,
    q_nb: &UnitQuaternion<f64>,
    pos: &GeodeticPosition,
    gravity_n: &NedVector,
    c: &EarthConstants,
) -> Result<BodyVector, GeoError> {
    let v_n = rotate_to_ned(q_nb, v_b);
    let w_en_b = rotate_to_body(q_nb, &transport_rate_ned(pos, &v_n, c)?);
    let w_eb_b = w_nb_b + w_en_b;
    Ok(w_eb_b.cross(v_b) + vdot_b + rotate_to_body(q_nb, &(coriolis_ned(pos.lat, &v_n, c) - gravity_n)))
}

/// Time derivatives of (longitude, latitude, altitude).
pub fn geodetic_rates(v_n: &NedVector, pos: &GeodeticPosition, c: &EarthConstants) -> Result<(f64, f64, f64), GeoError> {
    check_pole(pos.lat)?;
    let (n, m) = radii(pos.lat, c);
    let lat_rate = v_n.x / (m + pos.h);
    let lon_rate = v_n.y / ((n + pos.h) * pos.lat.cos());
    Ok((lon_rate, lat_rate, -v_n.z))
}

/// Advances a position with the trapezoidal average of two velocities.
pub fn advance_position(
    pos: &GeodeticPosition,
    v_prev: &NedVector,
    v_next: &NedVector,
    dt: f64,
    c: &EarthConstants,
) -> Result<GeodeticPosition, GeoError> {
    let v = (v_prev + v_next) * 0.5;
    let (lon_rate, lat_rate, h_rate) = geodetic_rates(&v, pos, c)?;
    Ok(GeodeticPosition::new(pos.lon + lon_rate * dt, pos.lat + lat_rate * dt, pos.h + h_rate * dt))
}

/// North and east offsets [m] of `to` relative to `from`, using the local radii at `from`.
pub fn ne_offset(from: &GeodeticPosition, to: &GeodeticPosition, c: &EarthConstants) -> (f64, f64) {
    let (n, m) = radii(from.lat, c);
    let north = (to.lat - from.lat) * (m + from.h);
    let east = wrap_pi(to.lon - from.lon) * (n + from.h) * from.lat.cos();
    (north, east)
}
