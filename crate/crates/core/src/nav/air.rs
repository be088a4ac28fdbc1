//! Air-data filter: zero-dynamics estimation of airspeed, flow angles,
//! temperature and pressure altitude, with constant-velocity derivative states.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::atmo::{self, AtmoConstants};
use crate::sensors::SensorFrame;

/// Tuning of one channel: observation σ (per sample) and the spectral
/// density of the rate random walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelTuning {
    pub sigma: f64,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirFilterConfig {
    /// True airspeed [m/s], [m²/s⁵].
    pub tas: ChannelTuning,
    /// Angle of attack [rad], [rad²/s³].
    pub aoa: ChannelTuning,
    /// Sideslip [rad], [rad²/s³].
    pub aos: ChannelTuning,
    /// Outside air temperature [K], [K²/s³].
    pub oat: ChannelTuning,
    /// Static pressure σ [Pa] observing pressure altitude; `q` in [m²/s³].
    pub osp: ChannelTuning,
}

impl Default for AirFilterConfig {
    fn default() -> Self {
        let d = std::f64::consts::PI / 180.0;
        Self {
            tas: ChannelTuning { sigma: 0.333, q: 0.5 },
            aoa: ChannelTuning { sigma: 0.333 * d, q: (0.5 * d) * (0.5 * d) },
            aos: ChannelTuning { sigma: 0.333 * d, q: (0.5 * d) * (0.5 * d) },
            oat: ChannelTuning { sigma: 0.05, q: 1e-4 },
            osp: ChannelTuning { sigma: 100.0, q: 0.5 },
        }
    }
}

impl AirFilterConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, ch) in [("tas", self.tas), ("aoa", self.aoa), ("aos", self.aos), ("oat", self.oat), ("osp", self.osp)] {
            if !(ch.sigma.is_finite() && ch.sigma > 0.0) {
                return Err((name, format!("sigma must be positive (got {})", ch.sigma)));
            }
            if !(ch.q.is_finite() && ch.q >= 0.0) {
                return Err((name, format!("q must be non-negative (got {})", ch.q)));
            }
        }
        Ok(())
    }
}

/// Two-state (value, rate) Kalman channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CvChannel {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
    q: f64,
}

impl CvChannel {
    pub fn new(value: f64, sigma: f64, q: f64) -> Self {
        Self::with_rate_sigma(value, sigma, q.sqrt(), q)
    }

    pub fn with_rate_sigma(value: f64, sigma: f64, rate_sigma: f64, q: f64) -> Self {
        Self { x: Vector2::new(value, 0.0), p: Matrix2::new(sigma * sigma, 0.0, 0.0, rate_sigma * rate_sigma), q }
    }

    pub fn predict(&mut self, dt: f64) {
        let f = Matrix2::new(1.0, dt, 0.0, 1.0);
        let q = self.q * Matrix2::new(dt.powi(3) / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt);
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + q;
    }

    /// Scalar update with innovation `nu` and observation slope `h` on the value.
    pub fn update(&mut self, nu: f64, h: f64, r: f64) {
        self.update_row(nu, &Vector2::new(h, 0.0), r);
    }

    /// Scalar Joseph-form update with observation row `h`.
    pub fn update_row(&mut self, nu: f64, h: &Vector2<f64>, r: f64) {
        let ph = self.p * h;
        let s = h.dot(&ph) + r;
        let k = ph / s;
        self.x += k * nu;
        let ikh = Matrix2::identity() - k * h.transpose();
        self.p = ikh * self.p * ikh.transpose() + k * k.transpose() * r;
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    pub fn value(&self) -> f64 {
        self.x[0]
    }

    pub fn rate(&self) -> f64 {
        self.x[1]
    }

    pub fn sigma(&self) -> f64 {
        self.p[(0, 0)].sqrt()
    }
}

/// Air-data estimate.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AirState {
    pub v_tas: f64,
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
    pub hp: f64,
    /// Temperature offset derived from `temperature` and `hp`.
    pub dt: f64,
    pub v_tas_rate: f64,
    pub alpha_rate: f64,
    pub beta_rate: f64,
}

pub struct AirFilter {
    cfg: AirFilterConfig,
    atmo: AtmoConstants,
    /// tas, aoa, aos, oat, hp.
    ch: [CvChannel; 5],
    rejected: u64,
}

fn finite_obs(frame: &SensorFrame) -> [Option<f64>; 5] {
    let f = |v: f64| v.is_finite().then_some(v);
    let p = (frame.pressure.is_finite() && frame.pressure > 0.0).then_some(frame.pressure);
    [f(frame.vtas), f(frame.alpha), f(frame.beta), f(frame.temperature), p]
}

fn pressure_slope(hp: f64, c: &AtmoConstants) -> f64 {
    let n = c.pressure_exponent();
    let b = 1.0 + c.beta_t * hp / c.t0;
    c.p0 * n * b.powf(n - 1.0) * c.beta_t / c.t0
}

impl AirFilter {
    /// Starts from `init` with one observation σ of uncertainty per channel.
    pub fn new(cfg: &AirFilterConfig, atmo: &AtmoConstants, init: &AirState) -> Self {
        let hp_sigma = cfg.osp.sigma / pressure_slope(init.hp, atmo).abs();
        let ch = [
            CvChannel::new(init.v_tas, cfg.tas.sigma, cfg.tas.q),
            CvChannel::new(init.alpha, cfg.aoa.sigma, cfg.aoa.q),
            CvChannel::new(init.beta, cfg.aos.sigma, cfg.aos.q),
            CvChannel::new(init.temperature, cfg.oat.sigma, cfg.oat.q),
            CvChannel::new(init.hp, hp_sigma, cfg.osp.q),
        ];
        Self { cfg: *cfg, atmo: *atmo, ch, rejected: 0 }
    }

    /// Number of observations rejected as non-finite or out of domain.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn channels(&self) -> &[CvChannel; 5] {
        &self.ch
    }

    /// Processes one frame; rejected channels only predict.
    pub fn step(&mut self, frame: &SensorFrame, dt: f64) -> AirState {
        let obs = finite_obs(frame);
        let c = self.cfg;
        let tunings = [c.tas, c.aoa, c.aos, c.oat];
        for i in 0..4 {
            let ch = &mut self.ch[i];
            ch.predict(dt);
            match obs[i] {
                Some(z) => ch.update(z - ch.value(), 1.0, tunings[i].sigma.powi(2)),
                None => self.rejected += 1,
            }
        }
        let ch = &mut self.ch[4];
        ch.predict(dt);
        let hp = ch.value();
        match (obs[4], atmo::pressure_from_hp(hp, &self.atmo)) {
            (Some(z), Ok(p)) => ch.update(z - p, pressure_slope(hp, &self.atmo), c.osp.sigma.powi(2)),
            _ => self.rejected += 1,
        }
        self.state()
    }

    pub fn state(&self) -> AirState {
        let ch = &self.ch;
        let temperature = ch[3].value();
        let hp = ch[4].value();
        AirState {
            v_tas: ch[0].value(),
            alpha: ch[1].value(),
            beta: ch[2].value(),
            temperature,
            hp,
            dt: atmo::temperature_offset(temperature, hp, &self.atmo),
            v_tas_rate: ch[0].rate(),
            alpha_rate: ch[1].rate(),
            beta_rate: ch[2].rate(),
        }
    }
}
