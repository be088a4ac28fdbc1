//! Wind, turbulence, atmosphere offsets and real-versus-model field deviations.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::atmo::AtmoOffsets;
use crate::geo::{wrap_pi, BodyVector, NedVector};

/// Linear transition between two scalar values over `[t_start, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub ini: f64,
    pub end: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Ramp {
    pub fn constant(v: f64) -> Self {
        Self { ini: v, end: v, t_start: 0.0, t_end: 0.0 }
    }

    /// Interpolation fraction in [0, 1].
    pub fn fraction(&self, t: f64) -> f64 {
        if t <= self.t_start {
            0.0
        } else if t >= self.t_end {
            1.0
        } else {
            (t - self.t_start) / (self.t_end - self.t_start)
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.ini + (self.end - self.ini) * self.fraction(t)
    }

    pub fn rate(&self, t: f64) -> f64 {
        if t > self.t_start && t < self.t_end {
            (self.end - self.ini) / (self.t_end - self.t_start)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindSchedule {
    pub speed_ini: f64,
    pub speed_end: f64,
    /// Direction the wind blows towards [rad].
    pub bearing_ini: f64,
    pub bearing_end: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl WindSchedule {
    pub fn constant(speed: f64, bearing: f64) -> Self {
        Self { speed_ini: speed, speed_end: speed, bearing_ini: bearing, bearing_end: bearing, t_start: 0.0, t_end: 0.0 }
    }

    /// Speed and bearing at `t`. The bearing follows the shorter arc.
    pub fn speed_bearing(&self, t: f64) -> (f64, f64) {
        let r = Ramp { ini: 0.0, end: 1.0, t_start: self.t_start, t_end: self.t_end };
        let k = r.fraction(t);
        let dchi = wrap_pi(self.bearing_end - self.bearing_ini);
        (self.speed_ini + (self.speed_end - self.speed_ini) * k, self.bearing_ini + dchi * k)
    }

    pub fn wind_ned(&self, t: f64) -> NedVector {
        let (s, chi) = self.speed_bearing(t);
        NedVector::new(s * chi.cos(), s * chi.sin(), 0.0)
    }

    pub fn wind_rate_ned(&self, t: f64) -> NedVector {
        if !(t > self.t_start && t < self.t_end) {
            return NedVector::zeros();
        }
        let span = self.t_end - self.t_start;
        let sdot = (self.speed_end - self.speed_ini) / span;
        let chidot = wrap_pi(self.bearing_end - self.bearing_ini) / span;
        let (s, chi) = self.speed_bearing(t);
        let (sn, cs) = chi.sin_cos();
        NedVector::new(sdot * cs - s * sn * chidot, sdot * sn + s * cs * chidot, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetSchedule {
    pub dt: Ramp,
    pub dp: Ramp,
}

impl OffsetSchedule {
    pub fn constant(off: AtmoOffsets) -> Self {
        Self { dt: Ramp::constant(off.dt), dp: Ramp::constant(off.dp) }
    }

    pub fn offsets_at(&self, t: f64) -> AtmoOffsets {
        AtmoOffsets::new(self.dt.at(t), self.dp.at(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbulenceParams {
    /// Stationary standard deviation per body axis [m/s].
    pub sigma: [f64; 3],
    /// Correlation time [s].
    pub tau: f64,
}

impl Default for TurbulenceParams {
    fn default() -> Self {
        Self { sigma: [1.5, 1.5, 0.75], tau: 2.0 }
    }
}

impl TurbulenceParams {
    pub fn validate(&self) -> Result<(), String> {
        if !self.sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(format!("sigma must be non-negative (got {:?})", self.sigma));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(format!("tau must be positive (got {})", self.tau));
        }
        Ok(())
    }
}

/// Per-axis first-order Gauss–Markov process.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussMarkov3 {
    pub sigma: Vector3<f64>,
    pub tau: f64,
    pub state: Vector3<f64>,
}

impl GaussMarkov3 {
    pub fn new(sigma: Vector3<f64>, tau: f64) -> Self {
        Self { sigma, tau, state: Vector3::zeros() }
    }

    /// Starts from a draw of the stationary distribution.
    pub fn stationary<R: Rng>(sigma: Vector3<f64>, tau: f64, rng: &mut R) -> Self {
        let mut gm = Self::new(sigma, tau);
        for i in 0..3 {
            let eta: f64 = rng.sample(StandardNormal);
            gm.state[i] = eta * sigma[i];
        }
        gm
    }

    pub fn step<R: Rng>(&mut self, dt: f64, rng: &mut R) -> Vector3<f64> {
        let phi = (-dt / self.tau).exp();
        let drive = (1.0 - phi * phi).sqrt();
        for i in 0..3 {
            let eta: f64 = rng.sample(StandardNormal);
            self.state[i] = self.state[i] * phi + eta * self.sigma[i] * drive;
        }
        self.state
    }
}

/// Turbulence velocity in body axes.
pub fn turbulence_body<R: Rng>(dt: f64, process: &mut GaussMarkov3, rng: &mut R) -> BodyVector {
    process.step(dt, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// Onboard model of the Earth magnetic field, NED [nT].
    pub mag_model_ned: [f64; 3],
    /// Standard deviation of the per-axis magnetic deviation [nT].
    pub mag_dev_sigma: f64,
    /// Cap on each magnetic deviation component [nT].
    pub mag_dev_cap: f64,
    /// Standard deviation of the per-axis gravity deviation [m/s²].
    pub gravity_dev_sigma: f64,
    /// Cap on each gravity deviation component [m/s²].
    pub gravity_dev_cap: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            mag_model_ned: [20_000.0, 1_000.0, 45_000.0],
            mag_dev_sigma: 150.0,
            mag_dev_cap: 450.0,
            gravity_dev_sigma: 3e-4,
            gravity_dev_cap: 1e-3,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), String> {
        let n = Vector3::from(self.mag_model_ned).norm();
        if !(20_000.0..=70_000.0).contains(&n) {
            return Err(format!("mag_model_ned norm {n:.0} nT outside [20000, 70000]"));
        }
        for (name, v) in [
            ("mag_dev_sigma", self.mag_dev_sigma),
            ("mag_dev_cap", self.mag_dev_cap),
            ("gravity_dev_sigma", self.gravity_dev_sigma),
            ("gravity_dev_cap", self.gravity_dev_cap),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be non-negative (got {v})"));
            }
        }
        Ok(())
    }
}

/// Run-constant difference between the real fields and the onboard models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDeviation {
    /// `B_MODEL − B_REAL` [nT].
    pub mag_dev_ned: NedVector,
    /// `g_REAL − g_MODEL` [m/s²].
    pub gravity_dev_ned: NedVector,
}

impl FieldDeviation {
    pub fn zero() -> Self {
        Self { mag_dev_ned: NedVector::zeros(), gravity_dev_ned: NedVector::zeros() }
    }

    pub fn draw<R: Rng>(cfg: &FieldConfig, rng: &mut R) -> Self {
        let mut draw = |sigma: f64, cap: f64| {
            NedVector::from_fn(|_, _| {
                let eta: f64 = rng.sample(StandardNormal);
                (eta * sigma).clamp(-cap, cap)
            })
        };
        let mag_dev_ned = draw(cfg.mag_dev_sigma, cfg.mag_dev_cap);
        let gravity_dev_ned = draw(cfg.gravity_dev_sigma, cfg.gravity_dev_cap);
        Self { mag_dev_ned, gravity_dev_ned }
    }
}

pub fn magnetic_field_model(cfg: &FieldConfig) -> NedVector {
    NedVector::from(cfg.mag_model_ned)
}

/// Field experienced by the aircraft: `B_MODEL − B_DEV`.
pub fn magnetic_field_real(cfg: &FieldConfig, dev: &FieldDeviation) -> NedVector {
    magnetic_field_real_from(&magnetic_field_model(cfg), dev)
}

pub fn magnetic_field_real_from(model: &NedVector, dev: &FieldDeviation) -> NedVector {
    model - dev.mag_dev_ned
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sched() -> WindSchedule {
        WindSchedule { speed_ini: 4.0, speed_end: 8.0, bearing_ini: 0.2, bearing_end: 1.0, t_start: 200.0, t_end: 600.0 }
    }

    #[test]
    fn wind_before_and_after_window() {
        let s = sched();
        let w = s.wind_ned(10.0);
        assert_eq!(w, NedVector::new(4.0 * 0.2f64.cos(), 4.0 * 0.2f64.sin(), 0.0));
        let w = s.wind_ned(1e4);
        assert!((w - NedVector::new(8.0 * 1.0f64.cos(), 8.0 * 1.0f64.sin(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn constant_wind() {
        let s = WindSchedule::constant(5.0, -2.0);
        for t in [0.0, 100.0, 499.0] {
            assert_eq!(s.wind_ned(t), s.wind_ned(0.0));
            assert_eq!(s.wind_rate_ned(t), NedVector::zeros());
        }
    }

    #[test]
    fn wind_midpoint_matches_interpolated_parameters() {
        let s = sched();
        let w = s.wind_ned(400.0);
        let (v, chi) = (6.0, 0.6);
        assert!((w - NedVector::new(v * f64::cos(chi), v * f64::sin(chi), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wind_bearing_takes_short_arc() {
        let s = WindSchedule { speed_ini: 5.0, speed_end: 5.0, bearing_ini: PI - 0.1, bearing_end: -PI + 0.1, t_start: 0.0, t_end: 10.0 };
        let w = s.wind_ned(5.0);
        assert!((w - NedVector::new(-5.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn wind_rate_matches_finite_difference() {
        let s = sched();
        for t in [250.0, 400.0, 590.0] {
            let fd = (s.wind_ned(t + 1e-4) - s.wind_ned(t - 1e-4)) / 2e-4;
            assert!((fd - s.wind_rate_ned(t)).norm() < 1e-7);
        }
    }

    #[test]
    fn wind_is_continuous() {
        let s = sched();
        let mut last = s.wind_ned(0.0);
        for i in 1..80_000 {
            let w = s.wind_ned(i as f64 * 0.01);
            assert!((w - last).norm() < 1e-3);
            last = w;
        }
    }

    #[test]
    fn offsets_follow_independent_windows() {
        let sch = OffsetSchedule {
            dt: Ramp { ini: 2.0, end: -4.0, t_start: 100.0, t_end: 300.0 },
            dp: Ramp { ini: 500.0, end: -100.0, t_start: 800.0, t_end: 1000.0 },
        };
        assert_eq!(sch.offsets_at(0.0), AtmoOffsets::new(2.0, 500.0));
        assert_eq!(sch.offsets_at(200.0), AtmoOffsets::new(-1.0, 500.0));
        assert_eq!(sch.offsets_at(900.0), AtmoOffsets::new(-4.0, 200.0));
        let c = OffsetSchedule::constant(AtmoOffsets::new(3.0, -250.0));
        assert_eq!(c.offsets_at(123.0), AtmoOffsets::new(3.0, -250.0));
    }

    #[test]
    fn zero_sigma_turbulence_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut gm = GaussMarkov3::new(Vector3::zeros(), 2.0);
        for _ in 0..1000 {
            assert_eq!(turbulence_body(0.01, &mut gm, &mut rng), Vector3::zeros());
        }
    }

    #[test]
    fn turbulence_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma = 1.5;
        let dt = 0.01;
        let tau = 2.0;
        let n = 1_000_000;
        let lag = (tau / dt) as usize;
        let mut gm = GaussMarkov3::stationary(Vector3::new(sigma, 0.0, 0.0), tau, &mut rng);
        let xs: Vec<f64> = (0..n).map(|_| gm.step(dt, &mut rng).x).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let acf = xs.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / (n - lag) as f64;
        // Correlated samples: the effective sample count is about n·dt/(2τ).
        let n_eff = n as f64 * dt / (2.0 * tau);
        assert!(mean.abs() < 5.0 * sigma / n_eff.sqrt(), "mean {mean}");
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.1, "var {var}");
        assert!((acf / (sigma * sigma) - (-1.0f64).exp()).abs() < 0.1 * (-1.0f64).exp(), "acf {acf}");
    }

    #[test]
    fn field_deviation_accounting() {
        let cfg = FieldConfig::default();
        assert_eq!(magnetic_field_real(&cfg, &FieldDeviation::zero()), magnetic_field_model(&cfg));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dev = FieldDeviation::draw(&cfg, &mut rng);
        assert!((magnetic_field_model(&cfg) - magnetic_field_real(&cfg, &dev) - dev.mag_dev_ned).amax() < 1e-9);
        assert!(dev.mag_dev_ned.amax() <= cfg.mag_dev_cap);
        assert!(dev.gravity_dev_ned.amax() <= cfg.gravity_dev_cap);
        let n = magnetic_field_real(&cfg, &dev).norm();
        assert!((20_000.0..=70_000.0).contains(&n));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut gm = GaussMarkov3::stationary(Vector3::new(1.5, 1.5, 0.75), 2.0, &mut rng);
            (0..1000).map(|_| gm.step(0.01, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
