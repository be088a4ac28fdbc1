//! The navigation system: air-data, attitude and position filters run at the
//! sensor rate with GNSS-based and GNSS-denied modes.

pub mod air;
pub mod attitude;
pub mod position;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::altnav::{self, AlgoVariant};
use crate::atmo::AtmoConstants;
use crate::error::{ConfigError, GeoError, SimError};
use crate::geo::{self, BodyVector, EarthConstants, EulerAngles, GeodeticPosition, NedVector};
use crate::sensors::{SensorConfig, SensorFrame};

pub use air::{AirFilter, AirFilterConfig, AirState};
pub use attitude::{AttFilterConfig, AttObs, AttState, AttitudeFilter};
pub use position::{Injection, Mode, PosFilterConfig, PosInit, PosState, PositionFilter};

/// Filter tuning and error injection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavConfig {
    pub air: AirFilterConfig,
    pub attitude: AttFilterConfig,
    pub position: PosFilterConfig,
    pub inject: Injection,
    /// Ground speed above this multiple of the airspeed flags a run as destabilized.
    pub divergence_ratio: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            air: AirFilterConfig::default(),
            attitude: AttFilterConfig::default(),
            position: PosFilterConfig::default(),
            inject: Injection::default(),
            divergence_ratio: 10.0,
        }
    }
}

impl NavConfig {
    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let wrap = |group: &str, (k, m): (&str, String)| ConfigError::invalid(format!("{prefix}.{group}.{k}"), m);
        self.air.validate().map_err(|e| wrap("air", e))?;
        self.attitude.validate().map_err(|e| wrap("attitude", e))?;
        self.position.validate().map_err(|e| wrap("position", e))?;
        let inj = &self.inject;
        if !(inj.wind_error_ned.iter().chain(&inj.accel_bias_ned).all(|v| v.is_finite()) && inj.pressure_offset_error.is_finite()) {
            return Err(ConfigError::invalid(format!("{prefix}.inject"), "values must be finite"));
        }
        if !(self.divergence_ratio > 1.0 && self.divergence_ratio.is_finite()) {
            return Err(ConfigError::invalid(format!("{prefix}.divergence_ratio"), "must exceed 1"));
        }
        Ok(())
    }

    /// Per-sample observation σ (gyro, mag, accel) resolved against the sensors.
    pub fn observation_sigmas(&self, sensors: &SensorConfig, dt: f64) -> (f64, f64, f64) {
        let per_sample = |density: f64| density / dt.sqrt();
        (
            self.attitude.gyro_sigma.unwrap_or(per_sample(sensors.gyr.sigma_v)),
            self.attitude.mag_sigma.unwrap_or(per_sample(sensors.mag.sigma_v)),
            self.position.accel_sigma.unwrap_or(per_sample(sensors.acc.sigma_v)),
        )
    }
}

/// Quantities the attitude filter takes from the previous position-filter step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PVector {
    pub gravity_n: NedVector,
    pub mag_model_n: NedVector,
    pub v_n: NedVector,
    pub wind_n: NedVector,
    pub w_ie_n: NedVector,
    pub w_en_n: NedVector,
    pub a_cor_n: NedVector,
    pub e_acc: BodyVector,
}

impl PVector {
    pub fn assemble(
        pos: &GeodeticPosition,
        v_n: &NedVector,
        wind_n: &NedVector,
        e_acc: &BodyVector,
        mag_model_n: &NedVector,
        earth: &EarthConstants,
    ) -> Result<Self, GeoError> {
        Ok(Self {
            gravity_n: geo::gravity_model_ned(pos, earth),
            mag_model_n: *mag_model_n,
            v_n: *v_n,
            wind_n: *wind_n,
            w_ie_n: geo::earth_rate_ned(pos.lat, earth),
            w_en_n: geo::transport_rate_ned(pos, v_n, earth)?,
            a_cor_n: geo::coriolis_ned(pos.lat, v_n, earth),
            e_acc: *e_acc,
        })
    }

    pub fn from_state(s: &PosState, mag_model_n: &NedVector, earth: &EarthConstants) -> Result<Self, GeoError> {
        Self::assemble(&s.pos, &s.v_n, &s.wind_n, &s.e_acc, mag_model_n, earth)
    }
}

/// Starting point of all three filters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavInit {
    pub air: AirState,
    pub att: AttState,
    pub pos: PosInit,
}

/// Combined estimate after one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavEstimate {
    pub t: f64,
    pub air: AirState,
    pub att: AttState,
    pub euler: EulerAngles,
    pub pos: PosState,
    /// Step counter of the first destabilized step, if any.
    pub destabilized: bool,
}

impl NavEstimate {
    pub fn q_nb(&self) -> &UnitQuaternion<f64> {
        &self.att.q_nb
    }
}

pub struct Navigator {
    earth: EarthConstants,
    mag_model_n: NedVector,
    t_gnss: f64,
    dt: f64,
    divergence_ratio: f64,
    air: AirFilter,
    att: AttitudeFilter,
    pos: PositionFilter,
    pvec: PVector,
    destabilized: bool,
}

impl Navigator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &NavInit,
        cfg: &NavConfig,
        variant: AlgoVariant,
        sensors: &SensorConfig,
        mag_model_n: &NedVector,
        t_gnss: f64,
        dt: f64,
        earth: &EarthConstants,
        atmo: &AtmoConstants,
    ) -> Result<Self, SimError> {
        let (gs, ms, acs) = cfg.observation_sigmas(sensors, dt);
        let pos = PositionFilter::new(&init.pos, &cfg.position, acs, variant, &cfg.inject, earth, atmo);
        let pvec = PVector::from_state(pos.state(), mag_model_n, earth)?;
        Ok(Self {
            earth: *earth,
            mag_model_n: *mag_model_n,
            t_gnss,
            dt,
            divergence_ratio: cfg.divergence_ratio,
            air: AirFilter::new(&cfg.air, atmo, &init.air),
            att: AttitudeFilter::new(init.att, &cfg.attitude, variant.attitude, gs, ms),
            pos,
            pvec,
            destabilized: false,
        })
    }

    pub fn attitude_filter(&self) -> &AttitudeFilter {
        &self.att
    }

    pub fn air_filter(&self) -> &AirFilter {
        &self.air
    }

    pub fn position_filter(&self) -> &PositionFilter {
        &self.pos
    }

    pub fn pvector(&self) -> &PVector {
        &self.pvec
    }

    /// Air, then attitude with the previous p-vector, then position.
    pub fn step(&mut self, frame: &SensorFrame) -> Result<NavEstimate, SimError> {
        let dt = self.dt;
        let air = self.air.step(frame, dt);
        self.att.predict(dt);
        let obs = AttObs { gyro: frame.gyro, mag: frame.mag, accel: frame.accel };
        self.att.update(&obs, &self.pvec, frame.t)?;
        let att = *self.att.state();
        let denied = frame.t >= self.t_gnss;
        let pos = *self.pos.step(&frame.accel, frame.gnss.as_ref(), &air, &att, denied, dt)?;
        if altnav::diverged(&pos.v_n, air.v_tas, self.divergence_ratio) {
            self.destabilized = true;
        }
        if !self.destabilized {
            self.pvec = PVector::from_state(&pos, &self.mag_model_n, &self.earth)?;
        }
        Ok(NavEstimate {
            t: frame.t,
            air,
            att,
            euler: EulerAngles::from_quaternion(&att.q_nb),
            pos,
            destabilized: self.destabilized,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pvector_members_delegate_to_geo() {
        let earth = EarthConstants::default();
        let pos = GeodeticPosition::new(0.1, 0.6, 2000.0);
        let v = NedVector::new(10.0, 20.0, -1.0);
        let m = NedVector::new(20000.0, 1000.0, 45000.0);
        let p = PVector::assemble(&pos, &v, &NedVector::zeros(), &BodyVector::zeros(), &m, &earth).unwrap();
        assert_eq!(p.a_cor_n, geo::coriolis_ned(pos.lat, &v, &earth));
        assert_eq!(p.w_en_n, geo::transport_rate_ned(&pos, &v, &earth).unwrap());
        assert_eq!(p.gravity_n, geo::gravity_model_ned(&pos, &earth));
        let z = PVector::assemble(&pos, &NedVector::zeros(), &NedVector::zeros(), &BodyVector::zeros(), &m, &earth).unwrap();
        assert_eq!(z.a_cor_n, NedVector::zeros());
        assert_eq!(z.w_en_n, NedVector::zeros());
    }

    #[test]
    fn default_config_validates() {
        NavConfig::default().validate("nav").unwrap();
        let mut c = NavConfig::default();
        c.position.wind.sigma = 0.0;
        let e = c.validate("nav").unwrap_err().to_string();
        assert!(e.starts_with("nav.position.wind.sigma"), "{e}");
    }
}
