//! Position filter: lumped specific force tracking, GNSS-aided velocity,
//! wind and pressure-offset estimation, and the frozen-estimate GNSS-denied
//! propagation.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::air::{AirState, CvChannel};
use super::attitude::AttState;
use crate::altnav::{self, AirKinematics, AlgoVariant, Horizontal, InertialInputs, Vertical};
use crate::atmo::{self, AtmoConstants, AtmoOffsets};
use crate::error::SimError;
use crate::geo::{self, BodyVector, EarthConstants, GeodeticPosition, NedVector};
use crate::sensors::{displace, GnssFix};

/// Scalar random-walk estimate tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarTuning {
    /// Random walk spectral density [unit²/s].
    pub q: f64,
    /// Observation σ [unit].
    pub sigma: f64,
    /// Initial σ [unit], also used to perturb truth-seeded starts.
    pub init: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosFilterConfig {
    /// Accelerometer observation σ per sample [m/s²]; derived when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel_sigma: Option<f64>,
    /// Specific force random walk [m²/s⁵].
    pub q_force: f64,
    /// Accelerometer lumped error random walk [m²/s⁵].
    pub q_accel_error: f64,
    /// Initial σ of the accelerometer lumped error [m/s²].
    pub accel_error_init: f64,
    /// Acceleration noise of the GNSS-aided velocity channels [m²/s³].
    pub q_ins: f64,
    /// Initial velocity σ [m/s] and horizontal position σ [m].
    pub velocity_init: f64,
    pub position_init: f64,
    /// GNSS position and velocity observation σ [m], [m/s].
    pub gnss_position_sigma: f64,
    pub gnss_velocity_sigma: f64,
    /// Wind [m/s], observed as ground velocity minus rotated airspeed.
    pub wind: ScalarTuning,
    /// Pressure offset [Pa], observed through the GNSS altitude.
    pub pressure_offset: ScalarTuning,
}

impl Default for PosFilterConfig {
    fn default() -> Self {
        Self {
            accel_sigma: None,
            q_force: 100.0,
            q_accel_error: 1e-12,
            accel_error_init: 2e-3,
            q_ins: 1e-3,
            velocity_init: 0.1,
            position_init: 2.0,
            gnss_position_sigma: 3.0,
            gnss_velocity_sigma: 0.1,
            wind: ScalarTuning { q: 1e-4, sigma: 30.0, init: 0.2 },
            pressure_offset: ScalarTuning { q: 1.0, sigma: 150.0, init: 100.0 },
        }
    }
}

impl PosFilterConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !self.accel_sigma.is_none_or(|x| x.is_finite() && x > 0.0) {
            return Err(("accel_sigma", "must be positive".into()));
        }
        for (name, v, strict) in [
            ("q_force", self.q_force, true),
            ("q_accel_error", self.q_accel_error, false),
            ("accel_error_init", self.accel_error_init, false),
            ("q_ins", self.q_ins, false),
            ("velocity_init", self.velocity_init, false),
            ("position_init", self.position_init, false),
            ("gnss_position_sigma", self.gnss_position_sigma, true),
            ("gnss_velocity_sigma", self.gnss_velocity_sigma, true),
            ("wind.q", self.wind.q, false),
            ("wind.sigma", self.wind.sigma, true),
            ("wind.init", self.wind.init, false),
            ("pressure_offset.q", self.pressure_offset.q, false),
            ("pressure_offset.sigma", self.pressure_offset.sigma, true),
            ("pressure_offset.init", self.pressure_offset.init, false),
        ] {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                return Err((name, format!("must be {} (got {v})", if strict { "positive" } else { "non-negative" })));
            }
        }
        Ok(())
    }
}

/// Error injections applied from the moment GNSS is lost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Injection {
    /// Added to the frozen wind [m/s, NED].
    pub wind_error_ned: [f64; 3],
    /// Added to the inertial ground velocity derivative [m/s², NED].
    pub accel_bias_ned: [f64; 3],
    /// Added to the frozen pressure offset [Pa].
    pub pressure_offset_error: f64,
}

impl Injection {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Gnss,
    Denied,
}

/// Position filter output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosState {
    pub f_ib_b: BodyVector,
    pub e_acc: BodyVector,
    pub v_n: NedVector,
    pub wind_n: NedVector,
    pub v_tas_n: NedVector,
    pub pos: GeodeticPosition,
    pub dp: f64,
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Scalar {
    x: f64,
    p: f64,
}

impl Scalar {
    fn new(x: f64, sigma: f64) -> Self {
        Self { x, p: sigma * sigma }
    }

    fn predict(&mut self, q: f64, dt: f64) {
        self.p += q * dt;
    }

    fn update(&mut self, z: f64, r: f64) {
        let k = self.p / (self.p + r);
        self.x += k * (z - self.x);
        self.p *= 1.0 - k;
    }
}

type M6 = SMatrix<f64, 6, 6>;
type V6 = SVector<f64, 6>;

/// Specific force and accelerometer error with the lumped observation `f̃ = f + E`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceFilter {
    x: V6,
    p: M6,
    q: V6,
    r: f64,
}

impl ForceFilter {
    pub fn new(f0: &BodyVector, e0: &BodyVector, f_sigma: f64, e_sigma: f64, q_f: f64, q_e: f64, r_sigma: f64) -> Self {
        let mut x = V6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(f0);
        x.fixed_rows_mut::<3>(3).copy_from(e0);
        let mut d = V6::zeros();
        let mut q = V6::zeros();
        for i in 0..3 {
            d[i] = f_sigma * f_sigma;
            d[3 + i] = e_sigma.max(1e-9).powi(2);
            q[i] = q_f;
            q[3 + i] = q_e;
        }
        Self { x, p: M6::from_diagonal(&d), q, r: r_sigma.max(1e-9).powi(2) }
    }

    pub fn step(&mut self, f_meas: &BodyVector, dt: f64) {
        self.p += M6::from_diagonal(&(self.q * dt));
        if !f_meas.iter().all(|c| c.is_finite()) {
            return;
        }
        // Three independent scalar updates with H = [e_i, e_i].
        for i in 0..3 {
            let ph = self.p.column(i) + self.p.column(3 + i);
            let s = ph[i] + ph[3 + i] + self.r;
            let k = ph / s;
            let nu = f_meas[i] - self.x[i] - self.x[3 + i];
            self.x += k * nu;
            let mut h = V6::zeros();
            h[i] = 1.0;
            h[3 + i] = 1.0;
            let ikh = M6::identity() - k * h.transpose();
            self.p = ikh * self.p * ikh.transpose() + k * k.transpose() * self.r;
        }
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    pub fn force(&self) -> BodyVector {
        self.x.fixed_rows::<3>(0).into()
    }

    pub fn accel_error(&self) -> BodyVector {
        self.x.fixed_rows::<3>(3).into()
    }

    pub fn lumped(&self) -> BodyVector {
        self.force() + self.accel_error()
    }
}

/// Truth-seeded starting values of the position filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosInit {
    pub f_ib_b: BodyVector,
    pub e_acc: BodyVector,
    pub v_n: NedVector,
    pub wind_n: NedVector,
    pub pos: GeodeticPosition,
    pub dp: f64,
}

pub struct PositionFilter {
    cfg: PosFilterConfig,
    variant: AlgoVariant,
    inject: Injection,
    earth: EarthConstants,
    atmo: AtmoConstants,
    force: ForceFilter,
    /// North, east and down error channels of the GNSS-aided velocity.
    ins: [CvChannel; 3],
    wind: [Scalar; 3],
    dp: Scalar,
    state: PosState,
}

impl PositionFilter {
    pub fn new(
        init: &PosInit,
        cfg: &PosFilterConfig,
        accel_sigma: f64,
        variant: AlgoVariant,
        inject: &Injection,
        earth: &EarthConstants,
        atmo: &AtmoConstants,
    ) -> Self {
        let force = ForceFilter::new(&init.f_ib_b, &init.e_acc, 1.0, cfg.accel_error_init, cfg.q_force, cfg.q_accel_error, accel_sigma);
        let ins = std::array::from_fn(|_| CvChannel::with_rate_sigma(0.0, cfg.position_init, cfg.velocity_init, cfg.q_ins));
        let wind = std::array::from_fn(|i| Scalar::new(init.wind_n[i], cfg.wind.init));
        Self {
            cfg: *cfg,
            variant,
            inject: *inject,
            earth: *earth,
            atmo: *atmo,
            force,
            ins,
            wind,
            dp: Scalar::new(init.dp, cfg.pressure_offset.init),
            state: PosState {
                f_ib_b: init.f_ib_b,
                e_acc: init.e_acc,
                v_n: init.v_n,
                wind_n: init.wind_n,
                v_tas_n: NedVector::zeros(),
                pos: init.pos,
                dp: init.dp,
                mode: Mode::Gnss,
            },
        }
    }

    pub fn state(&self) -> &PosState {
        &self.state
    }

    fn altitude(&self, air: &AirState, dp: f64) -> Result<f64, SimError> {
        Ok(atmo::geometric_from_hp(air.hp, &AtmoOffsets::new(air.dt, dp), &self.atmo, self.earth.re)?.geometric)
    }

    /// One filter step. `gnss` is the fix of this frame, if any; `denied`
    /// switches to frozen wind and pressure offset.
    pub fn step(
        &mut self,
        f_meas: &BodyVector,
        gnss: Option<&GnssFix>,
        air: &AirState,
        att: &AttState,
        denied: bool,
        dt: f64,
    ) -> Result<&PosState, SimError> {
        self.force.step(f_meas, dt);
        let prev = self.state;
        let q = &att.q_nb;
        let air_k = AirKinematics {
            v_tas: air.v_tas,
            alpha: air.alpha,
            beta: air.beta,
            v_tas_rate: air.v_tas_rate,
            alpha_rate: air.alpha_rate,
            beta_rate: air.beta_rate,
        };
        let v_tas_n = geo::rotate_to_ned(q, &air_k.airspeed_body());
        let f_b = self.force.force();
        let zero = NedVector::zeros();
        let bias = if denied { NedVector::from(self.inject.accel_bias_ned) } else { zero };
        let inputs = InertialInputs { q_nb: q, f_b: &f_b, v_prev: &prev.v_n, pos_prev: &prev.pos, bias_n: &bias, earth: &self.earth };

        let mut s = prev;
        s.f_ib_b = f_b;
        s.e_acc = self.force.accel_error();
        s.v_tas_n = v_tas_n;

        if !denied {
            s.mode = Mode::Gnss;
            s.v_n = altnav::horizontal_double_integration_step(&inputs, dt)?;
            for ch in &mut self.ins {
                ch.predict(dt);
            }
            s.pos = geo::advance_position(&prev.pos, &prev.v_n, &s.v_n, dt, &self.earth)?;
            if let Some(fix) = gnss {
                self.gnss_update(&mut s, fix, air)?;
            }
            for (i, w) in self.wind.iter_mut().enumerate() {
                w.predict(self.cfg.wind.q, dt);
                let z = s.v_n[i] - v_tas_n[i];
                if z.is_finite() {
                    w.update(z, self.cfg.wind.sigma.powi(2));
                }
                s.wind_n[i] = w.x;
            }
            self.dp.predict(self.cfg.pressure_offset.q, dt);
            s.dp = self.dp.x;
            s.pos.h = self.altitude(air, s.dp)?;
        } else {
            if prev.mode == Mode::Gnss {
                s.mode = Mode::Denied;
                s.wind_n += NedVector::from(self.inject.wind_error_ned);
                s.dp += self.inject.pressure_offset_error;
            }
            match self.variant.horizontal {
                Horizontal::Baseline => s.v_n = s.wind_n + v_tas_n,
                Horizontal::DoubleIntegration => s.v_n = altnav::horizontal_double_integration_step(&inputs, dt)?,
                Horizontal::WindIntegration => {
                    let (v, w) = altnav::horizontal_wind_integration_step(&inputs, &air_k, &att.w_nb_b, &prev.wind_n, dt)?;
                    s.v_n = v;
                    s.wind_n = w;
                }
            }
            s.pos = geo::advance_position(&prev.pos, &prev.v_n, &s.v_n, dt, &self.earth)?;
            s.pos.h = match self.variant.vertical {
                Vertical::Baseline => self.altitude(air, s.dp)?,
                Vertical::Integration => altnav::vertical_integration_step(prev.pos.h, s.v_n.z, dt),
                Vertical::AirspeedIntegration => altnav::vertical_airspeed_integration_step(prev.pos.h, q, &air_k, dt),
            };
        }
        self.state = s;
        Ok(&self.state)
    }

    fn gnss_update(&mut self, s: &mut PosState, fix: &GnssFix, air: &AirState) -> Result<(), SimError> {
        let c = self.cfg;
        let (north, east) = geo::ne_offset(&s.pos, &fix.pos, &self.earth);
        let pos_obs = [Some(north), Some(east), None];
        let mut dpos = NedVector::zeros();
        for i in 0..3 {
            let ch = &mut self.ins[i];
            ch.x = Vector2::zeros();
            if let Some(z) = pos_obs[i].filter(|z| z.is_finite()) {
                ch.update_row(z, &Vector2::new(1.0, 0.0), c.gnss_position_sigma.powi(2));
            }
            let zv = fix.v_n[i] - s.v_n[i] - ch.x[1];
            if zv.is_finite() {
                ch.update_row(zv, &Vector2::new(0.0, 1.0), c.gnss_velocity_sigma.powi(2));
            }
            dpos[i] = ch.x[0];
            s.v_n[i] += ch.x[1];
            ch.x = Vector2::zeros();
        }
        // The down channel only carries velocity; its position is the air-data altitude.
        self.ins[2].p[(0, 0)] = self.ins[2].p[(0, 0)].min(1e6);
        self.ins[2].p[(0, 1)] = 0.0;
        self.ins[2].p[(1, 0)] = 0.0;
        let h = s.pos.h;
        s.pos = displace(&s.pos, &NedVector::new(dpos.x, dpos.y, 0.0), &self.earth);
        s.pos.h = h;

        let h_geop = atmo::geopotential_from_geometric(fix.pos.h, self.earth.re)?;
        if let Ok(z) = atmo::pressure_offset_from_altitude(air.hp, h_geop, air.dt, &self.atmo) {
            self.dp.update(z, c.pressure_offset.sigma.powi(2));
        }
        Ok(())
    }

    /// Covariance of the GNSS-aided velocity channel `i` (north, east, down).
    pub fn ins_covariance(&self, i: usize) -> Matrix2<f64> {
        self.ins[i].p
    }
}
