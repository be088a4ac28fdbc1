//! Comparison algorithms switchable against the baseline position and
//! attitude filters.

use std::fmt;
use std::str::FromStr;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::geo::{self, BodyVector, EarthConstants, GeodeticPosition, NedVector};
use crate::error::GeoError;
use crate::truth::airspeed_body;

macro_rules! variant_enum {
    ($name:ident { $($v:ident => $s:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            #[default]
            $(#[serde(rename = $s)] $v),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$v),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$v => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                $name::ALL.iter().copied().find(|v| v.name() == s).ok_or_else(|| {
                    let names: Vec<_> = $name::ALL.iter().map(|v| v.name()).collect();
                    format!("unknown variant '{s}' (expected one of: {})", names.join(", "))
                })
            }
        }
    };
}

variant_enum!(Horizontal {
    Baseline => "baseline",
    DoubleIntegration => "double-integration",
    WindIntegration => "wind-integration",
});

variant_enum!(Vertical {
    Baseline => "baseline",
    Integration => "integration",
    AirspeedIntegration => "airspeed-integration",
});

variant_enum!(Attitude {
    Baseline => "baseline",
    ZeroFb => "zero-fb",
    ZeroFn => "zero-fn",
});

/// Algorithm selection along three independent axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgoVariant {
    pub horizontal: Horizontal,
    pub vertical: Vertical,
    pub attitude: Attitude,
}

impl AlgoVariant {
    pub fn is_baseline(&self) -> bool {
        *self == Self::default()
    }

    /// Directory-friendly label, e.g. `hor-baseline_vert-baseline_att-zero-fb`.
    pub fn label(&self) -> String {
        format!("hor-{}_vert-{}_att-{}", self.horizontal, self.vertical, self.attitude)
    }
}

/// Inputs shared by the inertial alternatives, all from the previous step
/// except the attitude and specific force.
pub struct InertialInputs<'a> {
    pub q_nb: &'a UnitQuaternion<f64>,
    pub f_b: &'a BodyVector,
    pub v_prev: &'a NedVector,
    pub pos_prev: &'a GeodeticPosition,
    /// Extra NED acceleration added to the derivative (error injection).
    pub bias_n: &'a NedVector,
    pub earth: &'a EarthConstants,
}

/// Ground velocity derivative from estimated specific force and attitude,
/// with transport rate, Coriolis and gravity from the previous step.
pub fn ground_velocity_rate(i: &InertialInputs) -> Result<NedVector, GeoError> {
    let g = geo::gravity_model_ned(i.pos_prev, i.earth);
    Ok(geo::velocity_derivative_ned(i.f_b, i.q_nb, i.v_prev, i.pos_prev, &g, i.earth)? + i.bias_n)
}

/// Double integration: `v_n = v_{n-1} + Δt·v̇`.
pub fn horizontal_double_integration_step(i: &InertialInputs, dt: f64) -> Result<NedVector, GeoError> {
    Ok(i.v_prev + ground_velocity_rate(i)? * dt)
}

/// Air-data quantities consumed by the wind-integration alternative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AirKinematics {
    pub v_tas: f64,
    pub alpha: f64,
    pub beta: f64,
    pub v_tas_rate: f64,
    pub alpha_rate: f64,
    pub beta_rate: f64,
}

impl AirKinematics {
    pub fn airspeed_body(&self) -> BodyVector {
        airspeed_body(self.v_tas, self.alpha, self.beta)
    }

    /// Time derivative of the body-axes airspeed through the chain rule.
    pub fn airspeed_body_rate(&self) -> BodyVector {
        let (v, a, b) = (self.v_tas, self.alpha, self.beta);
        let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
        let d_v = BodyVector::new(ca * cb, sb, sa * cb);
        let d_a = BodyVector::new(-v * sa * cb, 0.0, v * ca * cb);
        let d_b = BodyVector::new(-v * ca * sb, v * cb, -v * sa * sb);
        d_v * self.v_tas_rate + d_a * self.alpha_rate + d_b * self.beta_rate
    }
}

/// Wind integration: integrates `ẇ = v̇ − v̇_TAS^N` and rebuilds the ground
/// velocity as wind plus rotated airspeed. Returns `(v_n, wind_n)`.
pub fn horizontal_wind_integration_step(
    i: &InertialInputs,
    air: &AirKinematics,
    w_nb_b: &BodyVector,
    wind_prev: &NedVector,
    dt: f64,
) -> Result<(NedVector, NedVector), GeoError> {
    let vdot = ground_velocity_rate(i)?;
    let v_tas_b = air.airspeed_body();
    let vdot_tas_n = geo::rotate_to_ned(i.q_nb, &(air.airspeed_body_rate() + w_nb_b.cross(&v_tas_b)));
    let wind = wind_prev + (vdot - vdot_tas_n) * dt;
    Ok((wind + geo::rotate_to_ned(i.q_nb, &v_tas_b), wind))
}

/// Vertical integration of the estimated ground velocity: `h_n = h_{n-1} − Δt·v_D`.
pub fn vertical_integration_step(h_prev: f64, v_down: f64, dt: f64) -> f64 {
    h_prev - dt * v_down
}

/// Vertical integration of the rotated airspeed only (zero vertical wind).
pub fn vertical_airspeed_integration_step(h_prev: f64, q_nb: &UnitQuaternion<f64>, air: &AirKinematics, dt: f64) -> f64 {
    vertical_integration_step(h_prev, geo::rotate_to_ned(q_nb, &air.airspeed_body()).z, dt)
}

/// Divergence guard on the ground speed estimate.
pub fn diverged(v_n: &NedVector, v_tas: f64, ratio: f64) -> bool {
    !(v_n.iter().all(|c| c.is_finite()) && v_n.norm() <= ratio * v_tas.abs().max(1.0))
}
