//! ISA troposphere and the offset (non-standard) atmosphere.
//!
//! The offset atmosphere has mean sea level temperature `T0 + ΔT`, mean sea
//! level pressure `p0 + Δp` and the ISA gradient `βT`. Geopotential altitude
//! `H` is the altitude at which that atmosphere has a given static pressure.

use serde::{Deserialize, Serialize};

use crate::error::AtmoError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtmoConstants {
    /// Mean sea level temperature [K].
    pub t0: f64,
    /// Mean sea level pressure [Pa].
    pub p0: f64,
    /// Temperature gradient [K/m].
    pub beta_t: f64,
    /// Specific gas constant of air [J/(kg K)].
    pub r: f64,
    /// Standard gravity [m/s²].
    pub g0: f64,
    /// Upper end of the gradient layer [m].
    pub ceiling: f64,
    /// Lowest pressure altitude accepted [m].
    pub floor: f64,
}

impl Default for AtmoConstants {
    fn default() -> Self {
        Self {
            t0: 288.15,
            p0: 101_325.0,
            beta_t: -0.0065,
            r: 287.052_87,
            g0: 9.806_65,
            ceiling: 11_000.0,
            floor: -2_000.0,
        }
    }
}

impl AtmoConstants {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("t0", self.t0), ("p0", self.p0), ("r", self.r), ("g0", self.g0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be strictly positive (got {v})"));
            }
        }
        if !(self.beta_t.is_finite() && self.beta_t < 0.0) {
            return Err(format!("beta_t must be negative (got {})", self.beta_t));
        }
        if !(self.floor < 0.0 && self.ceiling > 0.0) {
            return Err("floor must be negative and ceiling positive".into());
        }
        Ok(())
    }

    /// Exponent `−g0/(R βT)` of the pressure law (≈ 5.2559).
    pub fn pressure_exponent(&self) -> f64 {
        -self.g0 / (self.r * self.beta_t)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AtmoOffsets {
    /// Temperature offset [K].
    pub dt: f64,
    /// Pressure offset [Pa].
    pub dp: f64,
}

impl AtmoOffsets {
    pub fn new(dt: f64, dp: f64) -> Self {
        Self { dt, dp }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltitudeSet {
    pub hp: f64,
    pub geopotential: f64,
    pub geometric: f64,
}

fn domain(what: &'static str, value: f64) -> AtmoError {
    AtmoError::Domain { what, value }
}

/// Static pressure of the ISA at pressure altitude `hp`.
pub fn pressure_from_hp(hp: f64, c: &AtmoConstants) -> Result<f64, AtmoError> {
    if !(hp.is_finite() && hp >= c.floor && hp <= c.ceiling) {
        return Err(domain("pressure altitude", hp));
    }
    let base = 1.0 + c.beta_t * hp / c.t0;
    Ok(c.p0 * base.powf(c.pressure_exponent()))
}

/// Pressure altitude for a static pressure.
pub fn hp_from_pressure(p: f64, c: &AtmoConstants) -> Result<f64, AtmoError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(domain("static pressure", p));
    }
    let hp = c.t0 / c.beta_t * ((p / c.p0).powf(1.0 / c.pressure_exponent()) - 1.0);
    if hp < c.floor || hp > c.ceiling {
        return Err(domain("static pressure", p));
    }
    Ok(hp)
}

/// `ΔT = T − T0 − βT·Hp`.
pub fn temperature_offset(t: f64, hp: f64, c: &AtmoConstants) -> f64 {
    t - c.t0 - c.beta_t * hp
}

/// Outside air temperature implied by a temperature offset at pressure altitude `hp`.
pub fn temperature_from_hp(hp: f64, dt: f64, c: &AtmoConstants) -> f64 {
    c.t0 + dt + c.beta_t * hp
}

fn check_offsets(off: &AtmoOffsets, c: &AtmoConstants) -> Result<(), AtmoError> {
    if !(off.dt.is_finite() && c.t0 + off.dt > 0.0) {
        return Err(domain("temperature offset", off.dt));
    }
    if !(off.dp.is_finite() && c.p0 + off.dp > 0.0) {
        return Err(domain("pressure offset", off.dp));
    }
    Ok(())
}

/// Static pressure of the offset atmosphere at geopotential altitude `h_geop`.
pub fn offset_pressure(h_geop: f64, off: &AtmoOffsets, c: &AtmoConstants) -> Result<f64, AtmoError> {
    check_offsets(off, c)?;
    let base = 1.0 + c.beta_t * h_geop / (c.t0 + off.dt);
    if !(base > 0.0) || h_geop < 2.0 * c.floor || h_geop > c.ceiling {
        return Err(domain("geopotential altitude", h_geop));
    }
    Ok((c.p0 + off.dp) * base.powf(c.pressure_exponent()))
}

/// Geopotential altitude at which the offset atmosphere matches the ISA
/// pressure of `hp`.
pub fn geopotential_from_hp(hp: f64, off: &AtmoOffsets, c: &AtmoConstants) -> Result<f64, AtmoError> {
    check_offsets(off, c)?;
    let p = pressure_from_hp(hp, c)?;
    let ratio = p / (c.p0 + off.dp);
    let h = (c.t0 + off.dt) / c.beta_t * (ratio.powf(1.0 / c.pressure_exponent()) - 1.0);
    if !h.is_finite() || h < 2.0 * c.floor || h > c.ceiling {
        return Err(domain("geopotential altitude", h));
    }
    Ok(h)
}

/// Pressure altitude observed at geopotential altitude `h_geop` in the offset atmosphere.
pub fn hp_from_geopotential(h_geop: f64, off: &AtmoOffsets, c: &AtmoConstants) -> Result<f64, AtmoError> {
    hp_from_pressure(offset_pressure(h_geop, off, c)?, c)
}

/// Pressure offset that makes pressure altitude `hp` sit at geopotential
/// altitude `h_geop` given the temperature offset `dt`.
pub fn pressure_offset_from_altitude(hp: f64, h_geop: f64, dt: f64, c: &AtmoConstants) -> Result<f64, AtmoError> {
    let p = pressure_from_hp(hp, c)?;
    if !(c.t0 + dt > 0.0) {
        return Err(domain("temperature offset", dt));
    }
    let base = 1.0 + c.beta_t * h_geop / (c.t0 + dt);
    if !(base > 0.0) {
        return Err(domain("geopotential altitude", h_geop));
    }
    Ok(p / base.powf(c.pressure_exponent()) - c.p0)
}

/// `h = RE·H/(RE − H)`.
pub fn geometric_from_geopotential(h_geop: f64, re: f64) -> Result<f64, AtmoError> {
    if !(h_geop < re) {
        return Err(AtmoError::AboveRadius(h_geop));
    }
    Ok(re * h_geop / (re - h_geop))
}

/// `H = RE·h/(RE + h)`.
pub fn geopotential_from_geometric(h: f64, re: f64) -> Result<f64, AtmoError> {
    if !(h > -re) {
        return Err(domain("geometric altitude", h));
    }
    Ok(re * h / (re + h))
}

/// Geometric altitude estimated from pressure altitude and offsets.
pub fn geometric_from_hp(hp: f64, off: &AtmoOffsets, c: &AtmoConstants, re: f64) -> Result<AltitudeSet, AtmoError> {
    let geopotential = geopotential_from_hp(hp, off, c)?;
    let geometric = geometric_from_geopotential(geopotential, re)?;
    Ok(AltitudeSet { hp, geopotential, geometric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RE: f64 = 6_356_766.0;

    fn c() -> AtmoConstants {
        AtmoConstants::default()
    }

    /// Root of `offset pressure(H) = ISA pressure(hp)` by bisection.
    fn bisect_geopotential(hp: f64, off: &AtmoOffsets) -> f64 {
        let c = c();
        let target = c.p0 * (1.0 + c.beta_t * hp / c.t0).powf(-c.g0 / (c.r * c.beta_t));
        let p_at = |h: f64| (c.p0 + off.dp) * (1.0 + c.beta_t * h / (c.t0 + off.dt)).powf(-c.g0 / (c.r * c.beta_t));
        let (mut lo, mut hi) = (-3000.0_f64, 12_000.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn pressure_law_values() {
        let c = c();
        assert_eq!(pressure_from_hp(0.0, &c).unwrap(), c.p0);
        let p = pressure_from_hp(1000.0, &c).unwrap();
        assert!((p - 89_874.6).abs() < 0.1, "{p}");
        assert!((hp_from_pressure(89_874.6, &c).unwrap() - 1000.0).abs() < 0.01);
        assert_eq!(hp_from_pressure(c.p0, &c).unwrap(), 0.0);
        assert!((c.pressure_exponent() - 5.2559).abs() < 1e-4);
    }

    #[test]
    fn pressure_law_domain() {
        let c = c();
        assert!(pressure_from_hp(12_000.0, &c).is_err());
        assert!(pressure_from_hp(f64::NAN, &c).is_err());
        assert!(hp_from_pressure(0.0, &c).is_err());
        assert!(hp_from_pressure(-5.0, &c).is_err());
    }

    #[test]
    fn hp_round_trip_grid() {
        let c = c();
        for i in 0..=1050 {
            let hp = -500.0 + 10.0 * i as f64;
            let back = hp_from_pressure(pressure_from_hp(hp, &c).unwrap(), &c).unwrap();
            assert!((back - hp).abs() < 1e-6, "{hp} {back}");
        }
    }

    #[test]
    fn temperature_offset_values() {
        let c = c();
        assert_eq!(temperature_offset(c.t0, 0.0, &c), 0.0);
        assert!((temperature_offset(290.15, 1000.0, &c) - 8.5).abs() < 1e-12);
        assert!((temperature_offset(temperature_from_hp(1234.0, -3.2, &c), 1234.0, &c) + 3.2).abs() < 1e-12);
    }

    #[test]
    fn geopotential_identity_at_zero_offsets() {
        let c = c();
        for i in 0..=100 {
            let hp = -500.0 + 100.0 * i as f64;
            let h = geopotential_from_hp(hp, &AtmoOffsets::default(), &c).unwrap();
            assert!((h - hp).abs() < 1e-9, "{hp} {h}");
        }
    }

    #[test]
    fn positive_pressure_offset_raises_altitude() {
        let c = c();
        let h = geopotential_from_hp(1500.0, &AtmoOffsets::new(0.0, 300.0), &c).unwrap();
        assert!(h > 1500.0);
    }

    #[test]
    fn closed_form_matches_bisection() {
        let c = c();
        let off = AtmoOffsets::new(8.5, 500.0);
        let h = geopotential_from_hp(1000.0, &off, &c).unwrap();
        assert!((h - bisect_geopotential(1000.0, &off)).abs() < 1e-6);
        for i in 0..100 {
            let hp = -400.0 + 95.0 * i as f64;
            let off = AtmoOffsets::new(-15.0 + 0.3 * i as f64, -1500.0 + 30.0 * i as f64);
            let h = geopotential_from_hp(hp, &off, &c).unwrap();
            assert!((h - bisect_geopotential(hp, &off)).abs() < 1e-6, "hp={hp}");
        }
    }

    #[test]
    fn pressure_offset_inverts_geopotential() {
        let c = c();
        let off = AtmoOffsets::new(-6.0, 750.0);
        let h = geopotential_from_hp(2100.0, &off, &c).unwrap();
        let dp = pressure_offset_from_altitude(2100.0, h, off.dt, &c).unwrap();
        assert!((dp - off.dp).abs() < 1e-6);
        let hp = hp_from_geopotential(h, &off, &c).unwrap();
        assert!((hp - 2100.0).abs() < 1e-6);
    }

    #[test]
    fn geometric_conversion_values() {
        assert_eq!(geometric_from_geopotential(0.0, RE).unwrap(), 0.0);
        assert!((geometric_from_geopotential(RE / 2.0, RE).unwrap() - RE).abs() < 1e-6);
        let h = geometric_from_geopotential(1000.0, RE).unwrap();
        assert!((h - 1000.0 * RE / (RE - 1000.0)).abs() < 1e-12);
        assert!((geopotential_from_geometric(h, RE).unwrap() - 1000.0).abs() < 1e-9);
        assert!(geometric_from_geopotential(RE, RE).is_err());
    }

    proptest! {
        #[test]
        fn prop_geometric_round_trip(h in -2000.0f64..20_000.0) {
            let back = geometric_from_geopotential(geopotential_from_geometric(h, RE).unwrap(), RE).unwrap();
            prop_assert!((back - h).abs() < 1e-9);
        }

        #[test]
        fn prop_geopotential_increasing(hp in -400.0f64..9000.0, dt in -20.0f64..20.0, dp in -2000.0f64..2000.0) {
            let c = c();
            let off = AtmoOffsets::new(dt, dp);
            let a = geopotential_from_hp(hp, &off, &c).unwrap();
            let b = geopotential_from_hp(hp + 1.0, &off, &c).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn prop_pressure_decreasing(hp in -1900.0f64..10_900.0) {
            let c = c();
            prop_assert!(pressure_from_hp(hp + 1.0, &c).unwrap() < pressure_from_hp(hp, &c).unwrap());
        }
    }
}
