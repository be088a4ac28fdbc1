//! Sensor error models: inertial and magnetic triads, air data, GNSS.
//!
//! Triad output is `ỹ = C·y + b0 + b_drift (+ B_hi) + η·σv/√dt` with
//! `C = (I + S + M)·R_mount`. `S = diag(±s)`, and `M` holds the cross coupling
//! `m` in the fixed pattern
//!
//! ```text
//!      [  0  +m  −m ]
//! ±    [ −m   0  +m ]
//!      [ +m  −m   0 ]
//! ```
//!
//! with one sign drawn per run. The bias drift is a random walk reflected at
//! `±k·σu·√dt`. Run-constant offsets are drawn from `N(0, B0)` per axis.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{ConfigError, SimError};
use crate::geo::{radii, BodyVector, EarthConstants, GeodeticPosition, NedVector};
use crate::seed::{stream_rng, Stream};
use crate::truth::TruthState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Better,
    Baseline,
    Worse,
    Worst,
}

impl Grade {
    pub const ALL: [Grade; 4] = [Grade::Better, Grade::Baseline, Grade::Worse, Grade::Worst];

    pub fn name(self) -> &'static str {
        match self {
            Grade::Better => "better",
            Grade::Baseline => "baseline",
            Grade::Worse => "worse",
            Grade::Worst => "worst",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Grade {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Grade::ALL
            .into_iter()
            .find(|g| g.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown grade '{s}'"))
    }
}

/// Grades shipped for each sensor family.
pub fn family_grades(family: &str) -> &'static [Grade] {
    match family {
        "gyr" | "acc" => &Grade::ALL,
        "mag" | "tas" => &[Grade::Better, Grade::Baseline, Grade::Worse],
        "air" => &[Grade::Baseline, Grade::Worse, Grade::Worst],
        _ => &[],
    }
}

fn unknown(family: &'static str, grade: Grade) -> ConfigError {
    let expected = family_grades(family).iter().map(|g| g.name()).collect::<Vec<_>>().join(", ");
    ConfigError::UnknownPreset { family, name: grade.name().into(), expected }
}

/// Error parameters of a sensor triad in SI units (rad, m/s², nT).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriadErrorParams {
    /// Bias drift density (unit·s^-1/2 per second of walk).
    pub sigma_u: f64,
    /// System noise density.
    pub sigma_v: f64,
    pub scale: f64,
    pub cross: f64,
    /// Standard deviation of the run-constant bias offset.
    pub bias_offset: f64,
    /// Standard deviation of the hard-iron offset (magnetometers only).
    pub hard_iron: f64,
    /// Drift band multiplier `k`.
    pub band: f64,
}

impl TriadErrorParams {
    pub fn zero() -> Self {
        Self { sigma_u: 0.0, sigma_v: 0.0, scale: 0.0, cross: 0.0, bias_offset: 0.0, hard_iron: 0.0, band: 100.0 }
    }

    /// Gyroscopes: σu [deg/s^1.5], σv [deg/s^0.5], s, m, B0 [deg/s].
    pub fn gyro(grade: Grade) -> Self {
        let (u, v, s, m, b0) = match grade {
            Grade::Better => (1.38e-5, 2.5e-3, 5e-6, 1.5e-5, 3e-2),
            Grade::Baseline => (1.42e-4, 4.30e-3, 1.5e-5, 4.35e-5, 2e-1),
            Grade::Worse => (5e-4, 8e-3, 5e-5, 1.5e-4, 0.75),
            Grade::Worst => (1.5e-3, 2.5e-2, 1e-4, 4.5e-4, 1.5),
        };
        let d = std::f64::consts::PI / 180.0;
        Self { sigma_u: u * d, sigma_v: v * d, scale: s, cross: m, bias_offset: b0 * d, hard_iron: 0.0, band: 100.0 }
    }

    /// Accelerometers: σu [m/s^2.5], σv [m/s^1.5], s, m, B0 [m/s²].
    pub fn accel(grade: Grade) -> Self {
        let (u, v, s, m, b0) = match grade {
            Grade::Better => (4.9e-5, 3.3e-4, 1.5e-5, 1.5e-5, 1.96e-2),
            Grade::Baseline => (6.86e-5, 4.83e-4, 5e-5, 3.05e-5, 1.57e-1),
            Grade::Worse => (8.5e-5, 5e-4, 8.5e-5, 5e-5, 0.45),
            Grade::Worst => (1.2e-4, 6.5e-4, 1.4e-4, 9.5e-5, 0.85),
        };
        Self { sigma_u: u, sigma_v: v, scale: s, cross: m, bias_offset: b0, hard_iron: 0.0, band: 100.0 }
    }

    /// Magnetometers: σv [nT·s^0.5], s, m, B_hi [nT], B0 [nT]; no bias drift.
    pub fn mag(grade: Grade) -> Result<Self, ConfigError> {
        let (v, s, m, hi, b0) = match grade {
            Grade::Better => (3.0, 5e-4, 7e-4, 125.0, 300.0),
            Grade::Baseline => (5.0, 7.5e-4, 9.16e-4, 175.0, 500.0),
            Grade::Worse => (10.0, 1.25e-3, 1.5e-3, 350.0, 750.0),
            Grade::Worst => return Err(unknown("mag", grade)),
        };
        Ok(Self { sigma_u: 0.0, sigma_v: v, scale: s, cross: m, bias_offset: b0, hard_iron: hi, band: 100.0 })
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("scale", self.scale),
            ("cross", self.cross),
            ("bias_offset", self.bias_offset),
            ("hard_iron", self.hard_iron),
            ("band", self.band),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be non-negative (got {v})"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSensorParams {
    pub sigma: f64,
    pub bias_offset: f64,
}

impl ScalarSensorParams {
    pub fn same(v: f64) -> Self {
        Self { sigma: v, bias_offset: v }
    }
}

/// Airspeed vane and atmospheric sensor suite (SI units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirDataParams {
    pub tas: ScalarSensorParams,
    pub aoa: ScalarSensorParams,
    pub aos: ScalarSensorParams,
    pub osp: ScalarSensorParams,
    pub oat: ScalarSensorParams,
}

impl AirDataParams {
    pub fn preset(tas: Grade, air: Grade) -> Result<Self, ConfigError> {
        let (v, ang) = match tas {
            Grade::Better => (0.15, 0.1),
            Grade::Baseline => (0.333, 0.333),
            Grade::Worse => (0.666, 0.666),
            Grade::Worst => return Err(unknown("tas", tas)),
        };
        let (p, t) = match air {
            Grade::Baseline => (100.0, 0.05),
            Grade::Worse => (150.0, 0.15),
            Grade::Worst => (300.0, 0.5),
            Grade::Better => return Err(unknown("air", air)),
        };
        let ang = ang * std::f64::consts::PI / 180.0;
        Ok(Self {
            tas: ScalarSensorParams::same(v),
            aoa: ScalarSensorParams::same(ang),
            aos: ScalarSensorParams::same(ang),
            osp: ScalarSensorParams::same(p),
            oat: ScalarSensorParams::same(t),
        })
    }

    pub fn zero() -> Self {
        let z = ScalarSensorParams { sigma: 0.0, bias_offset: 0.0 };
        Self { tas: z, aoa: z, aos: z, osp: z, oat: z }
    }

    pub fn channels(&self) -> [ScalarSensorParams; 5] {
        [self.tas, self.aoa, self.aos, self.osp, self.oat]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnssParams {
    /// Stationary σ of the slow horizontal position error [m].
    pub horizontal_sigma: f64,
    /// Stationary σ of the slow vertical position error [m].
    pub vertical_sigma: f64,
    /// Correlation time of the slow position error [s].
    pub tau: f64,
    /// White position noise [m].
    pub position_noise: f64,
    /// White velocity noise [m/s].
    pub velocity_noise: f64,
    /// Fix period [s].
    pub period: f64,
}

impl Default for GnssParams {
    fn default() -> Self {
        Self { horizontal_sigma: 2.5, vertical_sigma: 6.0, tau: 600.0, position_noise: 1.0, velocity_noise: 0.1, period: 1.0 }
    }
}

impl GnssParams {
    pub fn zero() -> Self {
        Self { horizontal_sigma: 0.0, vertical_sigma: 0.0, position_noise: 0.0, velocity_noise: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("horizontal_sigma", self.horizontal_sigma),
            ("vertical_sigma", self.vertical_sigma),
            ("position_noise", self.position_noise),
            ("velocity_noise", self.velocity_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be non-negative (got {v})"));
            }
        }
        if !(self.tau > 0.0 && self.period > 0.0) {
            return Err("tau and period must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub gyr: TriadErrorParams,
    pub acc: TriadErrorParams,
    pub mag: TriadErrorParams,
    pub air: AirDataParams,
    pub gnss: GnssParams,
    /// Bound of each mounting misalignment angle, IMU and magnetometer [deg].
    pub misalignment_deg: f64,
}

impl SensorConfig {
    pub fn preset(gyr: Grade, acc: Grade, mag: Grade, tas: Grade, air: Grade, band: f64) -> Result<Self, ConfigError> {
        let mut gyr = TriadErrorParams::gyro(gyr);
        let mut acc = TriadErrorParams::accel(acc);
        gyr.band = band;
        acc.band = band;
        Ok(Self {
            gyr,
            acc,
            mag: TriadErrorParams::mag(mag)?,
            air: AirDataParams::preset(tas, air)?,
            gnss: GnssParams::default(),
            misalignment_deg: 0.05,
        })
    }

    pub fn baseline() -> Self {
        Self::preset(Grade::Baseline, Grade::Baseline, Grade::Baseline, Grade::Baseline, Grade::Baseline, 100.0).expect("baseline presets exist")
    }

    /// Error-free sensors.
    pub fn perfect() -> Self {
        Self {
            gyr: TriadErrorParams::zero(),
            acc: TriadErrorParams::zero(),
            mag: TriadErrorParams::zero(),
            air: AirDataParams::zero(),
            gnss: GnssParams::zero(),
            misalignment_deg: 0.0,
        }
    }
}

/// Run-constant draws and evolving drift of one triad.
#[derive(Clone, Debug, PartialEq)]
pub struct TriadState {
    pub c: Matrix3<f64>,
    pub b0: Vector3<f64>,
    pub hard_iron: Vector3<f64>,
    pub drift: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriadReading {
    pub measured: Vector3<f64>,
    pub noise: Vector3<f64>,
    /// Everything except the white noise: `ỹ − y − noise`.
    pub lumped: Vector3<f64>,
}

fn normal3<R: Rng>(rng: &mut R) -> Vector3<f64> {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    let c: f64 = rng.sample(StandardNormal);
    Vector3::new(a, b, c)
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

pub fn cross_coupling_pattern() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0)
}

/// Small mounting rotation with each Euler angle uniform in `±bound`.
pub fn draw_mounting<R: Rng>(bound_rad: f64, rng: &mut R) -> Matrix3<f64> {
    let mut a = [0.0; 3];
    for x in &mut a {
        let u: f64 = rng.random();
        *x = bound_rad * (2.0 * u - 1.0);
    }
    Rotation3::from_euler_angles(a[0], a[1], a[2]).into_inner()
}

impl TriadState {
    pub fn ideal() -> Self {
        Self { c: Matrix3::identity(), b0: Vector3::zeros(), hard_iron: Vector3::zeros(), drift: Vector3::zeros() }
    }

    pub fn draw<R: Rng>(p: &TriadErrorParams, mounting: &Matrix3<f64>, rng: &mut R) -> Self {
        let b0 = normal3(rng) * p.bias_offset;
        let hard_iron = normal3(rng) * p.hard_iron;
        let s = Matrix3::from_diagonal(&Vector3::new(sign(rng), sign(rng), sign(rng))) * p.scale;
        let m = cross_coupling_pattern() * (p.cross * sign(rng));
        let c = (Matrix3::identity() + s + m) * mounting;
        Self { c, b0, hard_iron, drift: Vector3::zeros() }
    }

    /// Error for a true input, excluding white noise.
    pub fn lumped(&self, y: &Vector3<f64>) -> Vector3<f64> {
        (self.c - Matrix3::identity()) * y + self.b0 + self.drift + self.hard_iron
    }
}

/// Half-width of the drift band.
pub fn band_limit(p: &TriadErrorParams, dt: f64) -> f64 {
    p.band * p.sigma_u * dt.sqrt()
}

/// One banded random-walk step, reflected at the band edges.
pub fn drift_step<R: Rng>(drift: &mut Vector3<f64>, p: &TriadErrorParams, dt: f64, rng: &mut R) {
    let step = p.sigma_u * dt.sqrt();
    let limit = p.band * step;
    let eta = normal3(rng);
    for i in 0..3 {
        let mut x = drift[i] + step * eta[i];
        if x > limit {
            x = 2.0 * limit - x;
        } else if x < -limit {
            x = -2.0 * limit - x;
        }
        drift[i] = x.clamp(-limit, limit);
    }
}

/// Measures `y`, then advances the drift for the next sample.
pub fn triad_measure<R: Rng>(y: &Vector3<f64>, state: &mut TriadState, p: &TriadErrorParams, dt: f64, rng: &mut R) -> TriadReading {
    let noise = normal3(rng) * (p.sigma_v / dt.sqrt());
    let lumped = state.lumped(y);
    let measured = y + lumped + noise;
    drift_step(&mut state.drift, p, dt, rng);
    TriadReading { measured, noise, lumped }
}

pub fn scalar_measure<R: Rng>(y: f64, bias: f64, sigma: f64, rng: &mut R) -> f64 {
    let eta: f64 = rng.sample(StandardNormal);
    y + bias + eta * sigma
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub pos: GeodeticPosition,
    pub v_n: NedVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnssState {
    /// Slow position error, NED [m].
    pub error: NedVector,
}

impl GnssState {
    pub fn draw<R: Rng>(p: &GnssParams, rng: &mut R) -> Self {
        let eta = normal3(rng);
        Self { error: NedVector::new(eta.x * p.horizontal_sigma, eta.y * p.horizontal_sigma, eta.z * p.vertical_sigma) }
    }
}

/// Offsets a geodetic position by a small NED displacement.
pub fn displace(pos: &GeodeticPosition, d: &NedVector, c: &EarthConstants) -> GeodeticPosition {
    let (n, m) = radii(pos.lat, c);
    GeodeticPosition::new(pos.lon + d.y / ((n + pos.h) * pos.lat.cos()), pos.lat + d.x / (m + pos.h), pos.h - d.z)
}

pub fn gnss_measure<R: Rng>(
    truth: &TruthState,
    t_gnss: f64,
    state: &mut GnssState,
    p: &GnssParams,
    earth: &EarthConstants,
    rng: &mut R,
) -> Result<GnssFix, SimError> {
    if truth.t >= t_gnss {
        return Err(SimError::GnssUnavailable { t: truth.t });
    }
    let phi = (-p.period / p.tau).exp();
    let drive = (1.0 - phi * phi).sqrt();
    let eta = normal3(rng);
    let sig = NedVector::new(p.horizontal_sigma, p.horizontal_sigma, p.vertical_sigma);
    state.error = state.error * phi + eta.component_mul(&sig) * drive;
    let white = normal3(rng) * p.position_noise;
    let vel = normal3(rng) * p.velocity_noise;
    Ok(GnssFix { pos: displace(&truth.pos, &(state.error + white), earth), v_n: truth.v_n + vel })
}

/// One 100 Hz bundle of measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub gyro: BodyVector,
    pub accel: BodyVector,
    pub mag: BodyVector,
    pub vtas: f64,
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
    pub pressure: f64,
    pub gnss: Option<GnssFix>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LumpedErrors {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub mag: Vector3<f64>,
}

/// All sensors of one run.
pub struct SensorSuite {
    cfg: SensorConfig,
    earth: EarthConstants,
    dt: f64,
    t_gnss: f64,
    gnss_every: u64,
    pub gyro: TriadState,
    pub accel: TriadState,
    pub mag: TriadState,
    /// Bias offsets of TAS, AOA, AOS, OSP and OAT.
    pub air_bias: [f64; 5],
    pub gnss: GnssState,
    rng_gyro: ChaCha8Rng,
    rng_accel: ChaCha8Rng,
    rng_mag: ChaCha8Rng,
    rng_air: ChaCha8Rng,
    rng_gnss: ChaCha8Rng,
    last: LumpedErrors,
}

impl SensorSuite {
    pub fn new(cfg: &SensorConfig, run_seed: u64, dt: f64, t_gnss: f64, earth: &EarthConstants) -> Self {
        let mut rng_mount = stream_rng(run_seed, Stream::Mounting);
        let bound = cfg.misalignment_deg.to_radians();
        let imu_mount = draw_mounting(bound, &mut rng_mount);
        let mag_mount = draw_mounting(bound, &mut rng_mount);
        let mut rng_gyro = stream_rng(run_seed, Stream::Gyro);
        let mut rng_accel = stream_rng(run_seed, Stream::Accel);
        let mut rng_mag = stream_rng(run_seed, Stream::Mag);
        let mut rng_air = stream_rng(run_seed, Stream::AirData);
        let mut rng_gnss = stream_rng(run_seed, Stream::Gnss);
        let gyro = TriadState::draw(&cfg.gyr, &imu_mount, &mut rng_gyro);
        let accel = TriadState::draw(&cfg.acc, &imu_mount, &mut rng_accel);
        let mag = TriadState::draw(&cfg.mag, &mag_mount, &mut rng_mag);
        let mut air_bias = [0.0; 5];
        for (b, ch) in air_bias.iter_mut().zip(cfg.air.channels()) {
            let eta: f64 = rng_air.sample(StandardNormal);
            *b = eta * ch.bias_offset;
        }
        let gnss = GnssState::draw(&cfg.gnss, &mut rng_gnss);
        Self {
            cfg: *cfg,
            earth: *earth,
            dt,
            t_gnss,
            gnss_every: ((cfg.gnss.period / dt).round() as u64).max(1),
            gyro,
            accel,
            mag,
            air_bias,
            gnss,
            rng_gyro,
            rng_accel,
            rng_mag,
            rng_air,
            rng_gnss,
            last: LumpedErrors::default(),
        }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    /// Measures the truth at step `k`.
    pub fn measure(&mut self, truth: &TruthState, k: u64) -> Result<SensorFrame, SimError> {
        let dt = self.dt;
        let g = triad_measure(&truth.w_ib_b, &mut self.gyro, &self.cfg.gyr, dt, &mut self.rng_gyro);
        let a = triad_measure(&truth.f_ib_b, &mut self.accel, &self.cfg.acc, dt, &mut self.rng_accel);
        let m = triad_measure(&truth.mag_b, &mut self.mag, &self.cfg.mag, dt, &mut self.rng_mag);
        self.last = LumpedErrors { gyro: g.lumped, accel: a.lumped, mag: m.lumped };
        let ch = self.cfg.air.channels();
        let truth_air = [truth.v_tas, truth.alpha, truth.beta, truth.pressure, truth.temperature];
        let mut air = [0.0; 5];
        for i in 0..5 {
            air[i] = scalar_measure(truth_air[i], self.air_bias[i], ch[i].sigma, &mut self.rng_air);
        }
        let gnss = if truth.t < self.t_gnss && k.is_multiple_of(self.gnss_every) {
            Some(gnss_measure(truth, self.t_gnss, &mut self.gnss, &self.cfg.gnss, &self.earth, &mut self.rng_gnss)?)
        } else {
            None
        };
        Ok(SensorFrame {
            t: truth.t,
            gyro: g.measured,
            accel: a.measured,
            mag: m.measured,
            vtas: air[0],
            alpha: air[1],
            beta: air[2],
            pressure: air[3],
            temperature: air[4],
            gnss,
        })
    }

    /// Lumped errors of the last measured frame.
    pub fn lumped_errors(&self) -> LumpedErrors {
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const DT: f64 = 0.01;

    #[test]
    fn zero_params_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TriadErrorParams::zero();
        let mut st = TriadState::draw(&p, &Matrix3::identity(), &mut rng);
        let y = Vector3::new(0.1, -2.0, 3.0);
        let r = triad_measure(&y, &mut st, &p, DT, &mut rng);
        assert_eq!(r.measured, y);
        assert_eq!(r.lumped, Vector3::zeros());
        assert_eq!(scalar_measure(4.0, 0.0, 0.0, &mut rng), 4.0);
    }

    #[test]
    fn bias_offset_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TriadErrorParams::zero();
        let b = 0.2f64.to_radians();
        assert_eq!(TriadErrorParams::gyro(Grade::Baseline).bias_offset, b);
        let mut st = TriadState { b0: Vector3::new(b, 0.0, 0.0), ..TriadState::ideal() };
        let r = triad_measure(&Vector3::zeros(), &mut st, &p, DT, &mut rng);
        assert_eq!(r.measured, Vector3::new(b, 0.0, 0.0));
    }

    #[test]
    fn scale_factor_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TriadErrorParams::zero();
        let s = TriadErrorParams::gyro(Grade::Baseline).scale;
        assert_eq!(s, 1.5e-5);
        let mut st = TriadState { c: Matrix3::identity() * (1.0 + s), ..TriadState::ideal() };
        let r = triad_measure(&Vector3::new(1.0, 0.0, 0.0), &mut st, &p, DT, &mut rng);
        assert!((r.measured - Vector3::new(1.000_015, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn table_presets() {
        assert_eq!(TriadErrorParams::accel(Grade::Baseline).bias_offset, 0.157);
        let mag = TriadErrorParams::mag(Grade::Baseline).unwrap();
        assert_eq!((mag.sigma_v, mag.hard_iron, mag.bias_offset), (5.0, 175.0, 500.0));
        assert!(TriadErrorParams::mag(Grade::Worst).is_err());
        let air = AirDataParams::preset(Grade::Baseline, Grade::Baseline).unwrap();
        assert_eq!(air.tas.bias_offset, 0.333);
        assert_eq!(air.osp.sigma, 100.0);
        assert!(AirDataParams::preset(Grade::Baseline, Grade::Better).is_err());
        assert!(AirDataParams::preset(Grade::Worst, Grade::Baseline).is_err());
    }

    #[test]
    fn scalar_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let (y, b, s) = (30.0, 0.333, 0.333);
        let mean = (0..n).map(|_| scalar_measure(y, b, s, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - y - b).abs() < 4.0 * s / (n as f64).sqrt());
    }

    #[test]
    fn lumped_error_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = TriadErrorParams::mag(Grade::Baseline).unwrap();
        let mount = draw_mounting(0.05f64.to_radians(), &mut rng);
        let mut st = TriadState::draw(&p, &mount, &mut rng);
        for _ in 0..1000 {
            let y = Vector3::new(20_000.0, -3_000.0, 44_000.0) + normal3(&mut rng) * 1000.0;
            let r = triad_measure(&y, &mut st, &p, DT, &mut rng);
            let closure = r.measured - y - r.noise - r.lumped;
            assert!(closure.amax() < 1e-12 * y.amax().max(1.0) * 10.0);
        }
    }

    #[test]
    fn gyro_lumped_error_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = TriadErrorParams::gyro(Grade::Baseline);
        let mut st = TriadState::draw(&p, &Matrix3::identity(), &mut rng);
        // Offset draws are N(0, B0); 4.5·B0 bounds them with overwhelming probability.
        let bound = 4.5 * p.bias_offset + band_limit(&p, DT) + (p.scale + 2.0 * p.cross) * 0.5;
        for _ in 0..380_000 {
            let w = normal3(&mut rng) * 0.2;
            let r = triad_measure(&w, &mut st, &p, DT, &mut rng);
            assert!(r.lumped.amax() <= bound);
        }
    }

    #[test]
    fn band_is_never_exceeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in [100.0, 300.0, 1000.0] {
            let p = TriadErrorParams { band: k, ..TriadErrorParams::gyro(Grade::Baseline) };
            let limit = band_limit(&p, DT);
            let mut d = Vector3::zeros();
            let mut touched = false;
            for _ in 0..1_000_000 {
                drift_step(&mut d, &p, DT, &mut rng);
                assert!(d.amax() <= limit);
                touched |= d.amax() > 0.9 * limit;
            }
            if k == 100.0 {
                assert!(touched, "walk never approached the band");
            }
        }
    }

    #[test]
    fn gnss_vertical_sigma_and_cutoff() {
        use crate::truth::tests_support::level_truth;
        let p = GnssParams::default();
        let earth = EarthConstants::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = level_truth(50.0);
        let mut errs = Vec::new();
        for _ in 0..4000 {
            let mut st = GnssState::draw(&p, &mut rng);
            gnss_measure(&truth, 100.0, &mut st, &p, &earth, &mut rng).unwrap();
            errs.push(st.error.z);
        }
        let var = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
        assert!((var.sqrt() / p.vertical_sigma - 1.0).abs() < 0.1);
        let mut st = GnssState::draw(&p, &mut rng);
        assert!(gnss_measure(&level_truth(100.0), 100.0, &mut st, &p, &earth, &mut rng).is_err());
        let z = GnssParams::zero();
        let mut st = GnssState::draw(&z, &mut rng);
        let fix = gnss_measure(&truth, 100.0, &mut st, &z, &earth, &mut rng).unwrap();
        assert_eq!(fix.v_n, truth.v_n);
        assert!((fix.pos.lat - truth.pos.lat).abs() < 1e-15 && (fix.pos.h - truth.pos.h).abs() < 1e-12);
    }
}
