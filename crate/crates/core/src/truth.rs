//! Kinematic truth trajectories.
//!
//! Commands for airspeed, bank and path angle are shaped by critically damped
//! third-order filters, turns are coordinated, and turbulence reaches the
//! ground velocity through a third-order lag ("airframe response") so the
//! ground velocity stays twice differentiable. With `turb` the raw turbulence
//! and `resp` its lagged response (both body axes):
//!
//! ```text
//! v_tas^B = v_nom^B + resp − turb
//! v^N     = R (v_nom^B + resp) + wind^N  =  R v_tas^B + wind^N + R turb
//! ```

use nalgebra::{SVector, UnitQuaternion};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::atmo::{self, AtmoConstants, AtmoOffsets};
use crate::env::{self, FieldConfig, FieldDeviation, GaussMarkov3, OffsetSchedule, Ramp, TurbulenceParams, WindSchedule};
use crate::error::{ConfigError, SimError};
use crate::geo::{self, BodyVector, EarthConstants, EulerAngles, GeodeticPosition, NedVector};
use crate::seed::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum ScenarioKind {
    /// Long mission with one turn, one climb/descent and one airspeed change.
    #[serde(rename = "1")]
    One,
    /// Short mission at constant airspeed and altitude with eight turns.
    #[serde(rename = "2")]
    Two,
}

impl ScenarioKind {
    pub fn number(self) -> u8 {
        match self {
            ScenarioKind::One => 1,
            ScenarioKind::Two => 2,
        }
    }

    pub fn default_t_end(self) -> f64 {
        match self {
            ScenarioKind::One => 3800.0,
            ScenarioKind::Two => 500.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    Hold,
    /// Turn to an absolute (unwrapped) heading [rad].
    Turn,
    /// Climb or descend to a pressure altitude [m].
    Climb,
    /// Change airspeed to a true airspeed [m/s].
    Accelerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionSegment {
    pub kind: SegmentKind,
    pub target: f64,
    /// Entry time [s].
    pub start: f64,
    /// Expected duration [s], used to keep maneuvers apart.
    pub duration: f64,
    /// Bank angle for turns or path angle for climbs [rad].
    pub shape: f64,
}

impl MissionSegment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Closed interval `[lo, hi]`; `lo == hi` pins the value.
pub type Range = [f64; 2];

fn uniform<R: Rng>(rng: &mut R, r: Range) -> f64 {
    // Always consume one draw so the stream layout does not depend on the ranges.
    let u: f64 = rng.random();
    r[0] + (r[1] - r[0]) * u
}

fn signed<R: Rng>(rng: &mut R, r: Range) -> f64 {
    let m = uniform(rng, r);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioRanges {
    pub vtas: Range,
    pub hp: Range,
    pub lat_deg: Range,
    pub lon_deg: Range,
    pub bearing_deg: Range,
    /// Magnitude of the scenario #1 turn.
    pub s1_turn_deg: Range,
    /// Magnitude of the scenario #1 pressure altitude change.
    pub s1_climb: Range,
    /// Magnitude of the scenario #1 airspeed change.
    pub s1_accel: Range,
    /// Magnitude of each scenario #2 bearing change.
    pub s2_turn_deg: Range,
    pub s2_turns: usize,
    pub turn_bank_deg: f64,
    pub climb_path_deg: f64,
    pub wind_speed_ini: Range,
    pub wind_speed_end: Range,
    pub wind_bearing_deg: Range,
    /// Magnitude of the wind bearing change across the transition.
    pub wind_bearing_change_deg: Range,
    pub dt_ini: Range,
    pub dt_end: Range,
    pub dp_ini: Range,
    pub dp_end: Range,
    /// Transition window length as a fraction of `t_end − t_gnss`.
    pub window_fraction: Range,
    /// Reference angle of attack at `alpha_ref_vtas` in level flight.
    pub alpha_ref_deg: f64,
    pub alpha_ref_vtas: f64,
    /// Time constants of the airspeed, bank and path command filters [s].
    pub tau_vtas: f64,
    pub tau_bank: f64,
    pub tau_path: f64,
    /// Time constant of each of the three turbulence response lags [s].
    pub tau_response: f64,
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            vtas: [25.0, 35.0],
            hp: [1500.0, 2500.0],
            lat_deg: [35.0, 50.0],
            lon_deg: [-10.0, 10.0],
            bearing_deg: [-180.0, 180.0],
            s1_turn_deg: [30.0, 150.0],
            s1_climb: [100.0, 200.0],
            s1_accel: [2.0, 5.0],
            s2_turn_deg: [30.0, 90.0],
            s2_turns: 8,
            turn_bank_deg: 10.0,
            climb_path_deg: 2.0,
            wind_speed_ini: [2.0, 10.0],
            wind_speed_end: [2.0, 10.0],
            wind_bearing_deg: [-180.0, 180.0],
            wind_bearing_change_deg: [0.0, 90.0],
            dt_ini: [-10.0, 10.0],
            dt_end: [-10.0, 10.0],
            dp_ini: [-1000.0, 1000.0],
            dp_end: [-1000.0, 1000.0],
            window_fraction: [0.1, 0.5],
            alpha_ref_deg: 3.0,
            alpha_ref_vtas: 30.0,
            tau_vtas: 5.0,
            tau_bank: 1.0,
            tau_path: 1.0,
            tau_response: 0.5,
        }
    }
}

impl ScenarioRanges {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ranges: [(&str, Range); 17] = [
            ("vtas", self.vtas),
            ("hp", self.hp),
            ("lat_deg", self.lat_deg),
            ("lon_deg", self.lon_deg),
            ("bearing_deg", self.bearing_deg),
            ("s1_turn_deg", self.s1_turn_deg),
            ("s1_climb", self.s1_climb),
            ("s1_accel", self.s1_accel),
            ("s2_turn_deg", self.s2_turn_deg),
            ("wind_speed_ini", self.wind_speed_ini),
            ("wind_speed_end", self.wind_speed_end),
            ("wind_bearing_deg", self.wind_bearing_deg),
            ("wind_bearing_change_deg", self.wind_bearing_change_deg),
            ("dt_ini", self.dt_ini),
            ("dt_end", self.dt_end),
            ("dp_ini", self.dp_ini),
            ("dp_end", self.dp_end),
        ];
        for (name, r) in ranges {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(ConfigError::invalid(format!("scenario.{name}"), format!("range [{}, {}] is empty or inverted", r[0], r[1])));
            }
        }
        let check = |path: &str, ok: bool, msg: &str| if ok { Ok(()) } else { Err(ConfigError::invalid(format!("scenario.{path}"), msg)) };
        check("vtas", self.vtas[0] > 5.0, "airspeed must exceed 5 m/s")?;
        check("lat_deg", self.lat_deg[0] > -80.0 && self.lat_deg[1] < 80.0, "latitude must stay within ±80 deg")?;
        check("wind_speed_ini", self.wind_speed_ini[0] >= 0.0 && self.wind_speed_end[0] >= 0.0, "wind speed must be non-negative")?;
        check("window_fraction", self.window_fraction[0] >= 0.0 && self.window_fraction[0] <= self.window_fraction[1] && self.window_fraction[1] <= 1.0, "fractions must satisfy 0 <= lo <= hi <= 1")?;
        check("turn_bank_deg", self.turn_bank_deg > 0.0 && self.turn_bank_deg < 45.0, "bank must be in (0, 45) deg")?;
        check("climb_path_deg", self.climb_path_deg > 0.0 && self.climb_path_deg < 15.0, "path angle must be in (0, 15) deg")?;
        check("s2_turns", self.s2_turns >= 1, "at least one turn")?;
        for (name, v) in [("tau_vtas", self.tau_vtas), ("tau_bank", self.tau_bank), ("tau_path", self.tau_path), ("tau_response", self.tau_response)] {
            check(name, v > 0.0 && v.is_finite(), "time constant must be positive")?;
        }
        check("alpha_ref_vtas", self.alpha_ref_vtas > 0.0, "must be positive")?;
        Ok(())
    }

    fn turn_rate(&self, vtas: f64) -> f64 {
        env_g0() * self.turn_bank_deg.to_radians().tan() / vtas
    }

    fn turn_duration(&self, dchi: f64, vtas_max: f64) -> f64 {
        dchi.abs() / self.turn_rate(vtas_max) + 10.0 * self.tau_bank
    }

    fn climb_duration(&self, dhp: f64, vtas_min: f64) -> f64 {
        dhp.abs() / (vtas_min * self.climb_path_deg.to_radians().sin()) + 10.0 * self.tau_path
    }

    fn accel_duration(&self) -> f64 {
        10.0 * self.tau_vtas
    }
}

fn env_g0() -> f64 {
    9.806_65
}

/// Every stochastic parameter of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDraw {
    pub kind: ScenarioKind,
    pub run_seed: u64,
    pub t_end: f64,
    pub t_gnss: f64,
    pub vtas_ini: f64,
    pub hp_ini: f64,
    pub bearing_ini: f64,
    /// Final heading after all turns [rad], wrapped.
    pub bearing_end: f64,
    pub position_ini: GeodeticPosition,
    pub segments: Vec<MissionSegment>,
    pub wind: WindSchedule,
    pub offsets: OffsetSchedule,
    pub turbulence: TurbulenceParams,
    pub ranges: ScenarioRanges,
}

fn draw_window<R: Rng>(rng: &mut R, t0: f64, t1: f64, frac: Range) -> (f64, f64) {
    let len = uniform(rng, frac) * (t1 - t0);
    let start = t0 + uniform(rng, [0.0, 1.0]) * (t1 - t0 - len);
    (start, start + len)
}

pub fn draw_scenario(
    kind: ScenarioKind,
    run_seed: u64,
    t_end: f64,
    t_gnss: f64,
    ranges: &ScenarioRanges,
    turbulence: &TurbulenceParams,
) -> Result<ScenarioDraw, ConfigError> {
    ranges.validate()?;
    if !(t_gnss > 0.0 && t_gnss < t_end) {
        return Err(ConfigError::invalid("t_gnss", format!("must be in (0, t_end = {t_end})")));
    }
    let mut rng = stream_rng(run_seed, Stream::Scenario);
    let vtas_ini = uniform(&mut rng, ranges.vtas);
    let hp_ini = uniform(&mut rng, ranges.hp);
    let bearing_ini = uniform(&mut rng, ranges.bearing_deg).to_radians();
    let position_ini = GeodeticPosition::new(
        uniform(&mut rng, ranges.lon_deg).to_radians(),
        uniform(&mut rng, ranges.lat_deg).to_radians(),
        0.0,
    );

    let margin = 20.0;
    let span0 = t_gnss + margin;
    let span = t_end - margin - span0;
    let mut segments = Vec::new();
    let mut heading = bearing_ini;
    let (wind, offsets) = match kind {
        ScenarioKind::One => {
            // The airspeed change is oriented so the target stays inside the range.
            let (vmin, vmax) = (ranges.vtas[0], ranges.vtas[1]);
            let slot = span / 3.0;
            let worst = ranges
                .turn_duration(ranges.s1_turn_deg[1].to_radians(), vmax)
                .max(ranges.climb_duration(ranges.s1_climb[1], vmin))
                .max(ranges.accel_duration());
            if !(slot > worst) {
                return Err(ConfigError::invalid(
                    "t_end",
                    format!("scenario #1 maneuvers need {worst:.0} s slots, only {slot:.0} s available"),
                ));
            }
            let dchi = signed(&mut rng, ranges.s1_turn_deg).to_radians();
            let dhp = signed(&mut rng, ranges.s1_climb);
            let mut dv = signed(&mut rng, ranges.s1_accel);
            if vtas_ini + dv > ranges.vtas[1] || vtas_ini + dv < ranges.vtas[0] {
                dv = -dv;
            }
            let mut order = [SegmentKind::Turn, SegmentKind::Climb, SegmentKind::Accelerate];
            order.shuffle(&mut rng);
            for (i, kind) in order.into_iter().enumerate() {
                let (target, duration, shape) = match kind {
                    SegmentKind::Turn => {
                        heading = bearing_ini + dchi;
                        (heading, ranges.turn_duration(dchi, vmax), ranges.turn_bank_deg.to_radians())
                    }
                    SegmentKind::Climb => (hp_ini + dhp, ranges.climb_duration(dhp, vmin), ranges.climb_path_deg.to_radians()),
                    _ => (vtas_ini + dv, ranges.accel_duration(), 0.0),
                };
                let lo = span0 + slot * i as f64;
                let start = lo + uniform(&mut rng, [0.0, 1.0]) * (slot - duration);
                segments.push(MissionSegment { kind, target, start, duration, shape });
            }
            segments.sort_by(|a, b| a.start.total_cmp(&b.start));

            let wb = uniform(&mut rng, ranges.wind_bearing_deg).to_radians();
            let dwb = signed(&mut rng, ranges.wind_bearing_change_deg).to_radians();
            let (ws, we) = draw_window(&mut rng, t_gnss, t_end, ranges.window_fraction);
            let wind = WindSchedule {
                speed_ini: uniform(&mut rng, ranges.wind_speed_ini),
                speed_end: uniform(&mut rng, ranges.wind_speed_end),
                bearing_ini: wb,
                bearing_end: wb + dwb,
                t_start: ws,
                t_end: we,
            };
            let (ts, te) = draw_window(&mut rng, t_gnss, t_end, ranges.window_fraction);
            let dt = Ramp { ini: uniform(&mut rng, ranges.dt_ini), end: uniform(&mut rng, ranges.dt_end), t_start: ts, t_end: te };
            let (ps, pe) = draw_window(&mut rng, t_gnss, t_end, ranges.window_fraction);
            let dp = Ramp { ini: uniform(&mut rng, ranges.dp_ini), end: uniform(&mut rng, ranges.dp_end), t_start: ps, t_end: pe };
            (wind, OffsetSchedule { dt, dp })
        }
        ScenarioKind::Two => {
            let n = ranges.s2_turns;
            let slot = span / n as f64;
            let worst = ranges.turn_duration(ranges.s2_turn_deg[1].to_radians(), ranges.vtas[1]);
            if !(slot > worst) {
                return Err(ConfigError::invalid(
                    "t_end",
                    format!("scenario #2 turns need {worst:.0} s slots, only {slot:.0} s available"),
                ));
            }
            for i in 0..n {
                let dchi = signed(&mut rng, ranges.s2_turn_deg).to_radians();
                heading += dchi;
                let duration = ranges.turn_duration(dchi, ranges.vtas[1]);
                let start = span0 + slot * i as f64 + uniform(&mut rng, [0.0, 1.0]) * (slot - duration);
                segments.push(MissionSegment {
                    kind: SegmentKind::Turn,
                    target: heading,
                    start,
                    duration,
                    shape: ranges.turn_bank_deg.to_radians(),
                });
            }
            let wind = WindSchedule::constant(uniform(&mut rng, ranges.wind_speed_ini), uniform(&mut rng, ranges.wind_bearing_deg).to_radians());
            let off = AtmoOffsets::new(uniform(&mut rng, ranges.dt_ini), uniform(&mut rng, ranges.dp_ini));
            (wind, OffsetSchedule::constant(off))
        }
    };

    Ok(ScenarioDraw {
        kind,
        run_seed,
        t_end,
        t_gnss,
        vtas_ini,
        hp_ini,
        bearing_ini,
        bearing_end: geo::wrap_pi(heading),
        position_ini,
        segments,
        wind,
        offsets,
        turbulence: *turbulence,
        ranges: ranges.clone(),
    })
}

/// Ground truth at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub pos: GeodeticPosition,
    pub q_nb: UnitQuaternion<f64>,
    pub euler: EulerAngles,
    pub v_n: NedVector,
    pub vdot_n: NedVector,
    pub v_tas: f64,
    pub alpha: f64,
    pub beta: f64,
    pub v_tas_b: BodyVector,
    pub w_nb_b: BodyVector,
    pub w_ib_b: BodyVector,
    pub f_ib_b: BodyVector,
    pub wind_n: NedVector,
    pub turb_b: BodyVector,
    /// Real magnetic field in body axes [nT].
    pub mag_b: BodyVector,
    /// Real gravity [m/s²].
    pub gravity_n: NedVector,
    pub hp: f64,
    pub temperature: f64,
    pub pressure: f64,
    pub offsets: AtmoOffsets,
}

impl TruthState {
    /// Ground course [rad].
    pub fn course(&self) -> f64 {
        self.v_n.y.atan2(self.v_n.x)
    }
}

/// Airspeed vector in body axes from its wind-axes magnitude and angles.
pub fn airspeed_body(v_tas: f64, alpha: f64, beta: f64) -> BodyVector {
    BodyVector::new(v_tas * alpha.cos() * beta.cos(), v_tas * beta.sin(), v_tas * alpha.sin() * beta.cos())
}

/// Inverse of [`airspeed_body`].
pub fn air_angles(v_b: &BodyVector) -> (f64, f64, f64) {
    let v = v_b.norm();
    (v, v_b.z.atan2(v_b.x), (v_b.y / v).asin())
}

// Shaped commands carry (value, rate, acceleration).
const N: usize = 22;
type State = SVector<f64, N>;
const V: usize = 0;
const XI: usize = 3;
const GAM: usize = 6;
const PSI: usize = 9;
const LAT: usize = 10;
const LON: usize = 11;
const H: usize = 12;
const X1: usize = 13;
const X2: usize = 16;
const X3: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Commands {
    vtas: f64,
    bank: f64,
    path: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Idle,
    Active(usize),
    Settling(usize, f64),
}

/// Envelope guard on pitch.
pub const MAX_PITCH: f64 = 60.0 * PI / 180.0;

pub struct TruthGenerator {
    draw: ScenarioDraw,
    earth: EarthConstants,
    atmo: AtmoConstants,
    mag_model: NedVector,
    fields: FieldDeviation,
    dt: f64,
    k: u64,
    s: State,
    gust: GaussMarkov3,
    rng: ChaCha8Rng,
    cmd: Commands,
    phase: Phase,
    next_segment: usize,
    current: TruthState,
}

impl TruthGenerator {
    pub fn new(
        draw: ScenarioDraw,
        dt: f64,
        earth: &EarthConstants,
        atmo: &AtmoConstants,
        field_cfg: &FieldConfig,
    ) -> Result<Self, SimError> {
        let mut rng = stream_rng(draw.run_seed, Stream::Turbulence);
        let p = &draw.turbulence;
        let gust = GaussMarkov3::stationary(p.sigma.into(), p.tau, &mut rng);
        let fields = FieldDeviation::draw(field_cfg, &mut stream_rng(draw.run_seed, Stream::Fields));
        let off0 = draw.offsets.offsets_at(0.0);
        let geop = atmo::geopotential_from_hp(draw.hp_ini, &off0, atmo)?;
        let h0 = atmo::geometric_from_geopotential(geop, earth.re)?;
        let mut s = State::zeros();
        s[V] = draw.vtas_ini;
        s[PSI] = draw.bearing_ini;
        s[LAT] = draw.position_ini.lat;
        s[LON] = draw.position_ini.lon;
        s[H] = h0;
        for i in 0..3 {
            s[X1 + i] = gust.state[i];
            s[X2 + i] = gust.state[i];
            s[X3 + i] = gust.state[i];
        }
        let cmd = Commands { vtas: draw.vtas_ini, bank: 0.0, path: 0.0 };
        let mut gen = Self {
            draw,
            earth: *earth,
            atmo: *atmo,
            mag_model: env::magnetic_field_model(field_cfg),
            fields,
            dt,
            k: 0,
            s,
            gust,
            rng,
            cmd,
            phase: Phase::Idle,
            next_segment: 0,
            current: dummy_state(),
        };
        gen.current = gen.sample()?;
        gen.update_commands()?;
        gen.current = gen.sample()?;
        Ok(gen)
    }

    pub fn draw(&self) -> &ScenarioDraw {
        &self.draw
    }

    pub fn fields(&self) -> &FieldDeviation {
        &self.fields
    }

    pub fn current(&self) -> &TruthState {
        &self.current
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    /// Number of steps in the scenario (samples minus one).
    pub fn total_steps(&self) -> u64 {
        (self.draw.t_end / self.dt).round() as u64
    }

    pub fn is_finished(&self) -> bool {
        self.k >= self.total_steps()
    }

    pub fn step(&mut self) -> Result<&TruthState, SimError> {
        let dt = self.dt;
        let t = self.current.t;
        let g = self.gust.state;
        let f = |s: &State, t: f64| self.derivative(s, t, &g);
        let k1 = f(&self.s, t)?;
        let k2 = f(&(self.s + k1 * (dt / 2.0)), t + dt / 2.0)?;
        let k3 = f(&(self.s + k2 * (dt / 2.0)), t + dt / 2.0)?;
        let k4 = f(&(self.s + k3 * dt), t + dt)?;
        self.s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        self.s[LON] = geo::wrap_pi(self.s[LON]);
        self.gust.step(dt, &mut self.rng);
        self.k += 1;
        self.current.t = self.k as f64 * dt;
        self.current = self.sample()?;
        self.update_commands()?;
        self.current = self.sample()?;
        Ok(&self.current)
    }

    fn alpha_nominal(&self, v: f64, bank: f64) -> f64 {
        let r = &self.draw.ranges;
        let a = r.alpha_ref_deg.to_radians() * (r.alpha_ref_vtas / v).powi(2) / bank.cos();
        a.clamp(-5f64.to_radians(), 12f64.to_radians())
    }

    /// Euler angles and nominal airspeed vector implied by the shaped state.
    fn attitude(&self, s: &State) -> (EulerAngles, BodyVector) {
        let alpha = self.alpha_nominal(s[V], s[XI]);
        let (a, b) = (alpha.cos(), s[XI].cos() * alpha.sin());
        let theta = (s[GAM].sin() / a.hypot(b)).clamp(-1.0, 1.0).asin() + b.atan2(a);
        let e = EulerAngles::new(s[PSI], theta, s[XI]);
        (e, airspeed_body(s[V], alpha, 0.0))
    }

    fn ground_velocity(&self, s: &State, t: f64) -> NedVector {
        let (e, v_nom) = self.attitude(s);
        let resp = BodyVector::new(s[X3], s[X3 + 1], s[X3 + 2]);
        geo::rotate_to_ned(&e.to_quaternion(), &(v_nom + resp)) + self.draw.wind.wind_ned(t)
    }

    fn position(s: &State) -> GeodeticPosition {
        GeodeticPosition { lon: s[LON], lat: s[LAT], h: s[H] }
    }

    fn derivative(&self, s: &State, t: f64, g: &nalgebra::Vector3<f64>) -> Result<State, SimError> {
        let r = &self.draw.ranges;
        let c = &self.cmd;
        let mut d = State::zeros();
        // Critically damped third-order response, 1/(τs + 1)³.
        let shape = |d: &mut State, i: usize, cmd: f64, tau: f64| {
            d[i] = s[i + 1];
            d[i + 1] = s[i + 2];
            d[i + 2] = (cmd - s[i] - 3.0 * tau * s[i + 1] - 3.0 * tau * tau * s[i + 2]) / tau.powi(3);
        };
        shape(&mut d, V, c.vtas, r.tau_vtas);
        shape(&mut d, XI, c.bank, r.tau_bank);
        shape(&mut d, GAM, c.path, r.tau_path);
        d[PSI] = env_g0() * s[XI].tan() / s[V];
        let v_n = self.ground_velocity(s, t);
        let (lon_rate, lat_rate, h_rate) = geo::geodetic_rates(&v_n, &Self::position(s), &self.earth)?;
        d[LAT] = lat_rate;
        d[LON] = lon_rate;
        d[H] = h_rate;
        let tr = r.tau_response;
        for i in 0..3 {
            d[X1 + i] = (g[i] - s[X1 + i]) / tr;
            d[X2 + i] = (s[X1 + i] - s[X2 + i]) / tr;
            d[X3 + i] = (s[X2 + i] - s[X3 + i]) / tr;
        }
        Ok(d)
    }

    fn sample(&self) -> Result<TruthState, SimError> {
        let t = self.k as f64 * self.dt;
        let s = &self.s;
        let g = self.gust.state;
        let (euler, v_nom) = self.attitude(s);
        if euler.pitch.abs() > MAX_PITCH {
            return Err(SimError::Envelope { t, pitch_deg: euler.pitch.to_degrees() });
        }
        let q_nb = euler.to_quaternion();
        let pos = Self::position(s);
        let resp = BodyVector::new(s[X3], s[X3 + 1], s[X3 + 2]);
        let v_tas_b = v_nom + resp - g;
        let (v_tas, alpha, beta) = air_angles(&v_tas_b);
        let wind_n = self.draw.wind.wind_ned(t);
        let v_n = geo::rotate_to_ned(&q_nb, &(v_nom + resp)) + wind_n;

        // Directional derivatives along the state trajectory.
        let sd = self.derivative(s, t, &g)?;
        let eps = 1e-5;
        let sp = s + sd * eps;
        let sm = s - sd * eps;
        let vdot_n = (self.ground_velocity(&sp, t + eps) - self.ground_velocity(&sm, t - eps)) / (2.0 * eps);
        let theta_dot = (self.attitude(&sp).0.pitch - self.attitude(&sm).0.pitch) / (2.0 * eps);
        let (psi_dot, xi_dot) = (sd[PSI], sd[XI]);
        let (st, ct) = euler.pitch.sin_cos();
        let (sx, cx) = euler.roll.sin_cos();
        let w_nb_b = BodyVector::new(
            xi_dot - psi_dot * st,
            theta_dot * cx + psi_dot * ct * sx,
            -theta_dot * sx + psi_dot * ct * cx,
        );

        let gravity_n = geo::gravity_model_ned(&pos, &self.earth) + self.fields.gravity_dev_ned;
        let f_ib_b = geo::specific_force_from_kinematics(&vdot_n, &v_n, &pos, &q_nb, &gravity_n, &self.earth)?;
        let w_in = geo::earth_rate_ned(pos.lat, &self.earth) + geo::transport_rate_ned(&pos, &v_n, &self.earth)?;
        let w_ib_b = w_nb_b + geo::rotate_to_body(&q_nb, &w_in);
        let mag_b = geo::rotate_to_body(&q_nb, &env::magnetic_field_real_from(&self.mag_model, &self.fields));

        let offsets = self.draw.offsets.offsets_at(t);
        let geop = atmo::geopotential_from_geometric(pos.h, self.earth.re)?;
        let pressure = atmo::offset_pressure(geop, &offsets, &self.atmo)?;
        let hp = atmo::hp_from_pressure(pressure, &self.atmo)?;
        let temperature = atmo::temperature_from_hp(hp, offsets.dt, &self.atmo);

        Ok(TruthState {
            t,
            pos,
            q_nb,
            euler: EulerAngles::new(geo::wrap_pi(euler.yaw), euler.pitch, euler.roll),
            v_n,
            vdot_n,
            v_tas,
            alpha,
            beta,
            v_tas_b,
            w_nb_b,
            w_ib_b,
            f_ib_b,
            wind_n,
            turb_b: g,
            mag_b,
            gravity_n,
            hp,
            temperature,
            pressure,
            offsets,
        })
    }

    fn update_commands(&mut self) -> Result<(), SimError> {
        let t = self.current.t;
        let r = self.draw.ranges.clone();
        if let Phase::Settling(_, until) = self.phase {
            if t >= until {
                self.phase = Phase::Idle;
            }
        }
        if self.phase == Phase::Idle {
            if let Some(seg) = self.draw.segments.get(self.next_segment) {
                if t >= seg.start {
                    self.phase = Phase::Active(self.next_segment);
                    self.next_segment += 1;
                }
            }
        }
        let Phase::Active(i) = self.phase else { return Ok(()) };
        let seg = self.draw.segments[i];
        match seg.kind {
            SegmentKind::Turn => {
                let remaining = seg.target - self.s[PSI];
                let rate = self.derivative_heading();
                if remaining.abs() <= rate.abs() * 3.0 * r.tau_bank || (self.cmd.bank != 0.0 && remaining * self.cmd.bank < 0.0) {
                    self.cmd.bank = 0.0;
                    self.phase = Phase::Settling(i, t + 8.0 * r.tau_bank);
                } else {
                    self.cmd.bank = seg.shape * remaining.signum();
                }
            }
            SegmentKind::Climb => {
                let remaining = seg.target - self.current.hp;
                let rate = self.s[V] * self.s[GAM].sin();
                if remaining.abs() <= rate.abs() * 3.0 * r.tau_path || (self.cmd.path != 0.0 && remaining * self.cmd.path < 0.0) {
                    self.cmd.path = 0.0;
                    self.phase = Phase::Settling(i, t + 8.0 * r.tau_path);
                } else {
                    self.cmd.path = seg.shape * remaining.signum();
                }
            }
            SegmentKind::Accelerate => {
                self.cmd.vtas = seg.target;
                self.phase = Phase::Settling(i, t + 10.0 * r.tau_vtas);
            }
            SegmentKind::Hold => {
                self.phase = Phase::Settling(i, t + seg.duration);
            }
        }
        Ok(())
    }

    fn derivative_heading(&self) -> f64 {
        env_g0() * self.s[XI].tan() / self.s[V]
    }
}

fn dummy_state() -> TruthState {
    TruthState {
        t: 0.0,
        pos: GeodeticPosition { lon: 0.0, lat: 0.0, h: 0.0 },
        q_nb: UnitQuaternion::identity(),
        euler: EulerAngles::new(0.0, 0.0, 0.0),
        v_n: NedVector::zeros(),
        vdot_n: NedVector::zeros(),
        v_tas: 0.0,
        alpha: 0.0,
        beta: 0.0,
        v_tas_b: BodyVector::zeros(),
        w_nb_b: BodyVector::zeros(),
        w_ib_b: BodyVector::zeros(),
        f_ib_b: BodyVector::zeros(),
        wind_n: NedVector::zeros(),
        turb_b: BodyVector::zeros(),
        mag_b: BodyVector::zeros(),
        gravity_n: NedVector::zeros(),
        hp: 0.0,
        temperature: 0.0,
        pressure: 0.0,
        offsets: AtmoOffsets::default(),
    }
}
