//! Monte Carlo execution and navigation system error (NSE) metrics.
//!
//! Trajectory metrics cover every filter step of a run from `t = 0`;
//! aggregated metrics are statistics of those per-run values across runs;
//! final-state metrics are statistics of the last-step errors across runs.
//! Standard deviations use the sample (n − 1) convention and are zero for a
//! single sample. "max" is the signed value of largest magnitude.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::altnav::AlgoVariant;
use crate::atmo::AtmoConstants;
use crate::env::{self, FieldConfig, TurbulenceParams};
use crate::error::{ConfigError, SimError};
use crate::geo::{self, EarthConstants, GeodeticPosition, NedVector};
use crate::nav::{AirState, AttState, NavConfig, NavEstimate, NavInit, Navigator, PosInit};
use crate::seed::{run_seed, stream_rng, Stream};
use crate::sensors::{SensorConfig, SensorSuite};
use crate::truth::{draw_scenario, ScenarioDraw, ScenarioKind, ScenarioRanges, TruthGenerator, TruthState};

/// NSE variables tracked per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    /// Norm of the attitude rotation error.
    Att,
    Yaw,
    Pitch,
    Roll,
    VelNorth,
    VelEast,
    VelDown,
    /// Norm of the ground velocity error.
    Vel,
    /// Geometric altitude error.
    Vert,
    /// Norm of the horizontal position error.
    Hor,
    Cross,
    Long,
    /// Norm of the gyro lumped error tracking error.
    Gyr,
    /// Norm of the wind error.
    Wind,
    /// Pressure offset error.
    Dp,
}

pub const NV: usize = 15;

impl Var {
    pub const ALL: [Var; NV] = [
        Var::Att,
        Var::Yaw,
        Var::Pitch,
        Var::Roll,
        Var::VelNorth,
        Var::VelEast,
        Var::VelDown,
        Var::Vel,
        Var::Vert,
        Var::Hor,
        Var::Cross,
        Var::Long,
        Var::Gyr,
        Var::Wind,
        Var::Dp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::Att => "att",
            Var::Yaw => "yaw",
            Var::Pitch => "pitch",
            Var::Roll => "roll",
            Var::VelNorth => "vel_north",
            Var::VelEast => "vel_east",
            Var::VelDown => "vel_down",
            Var::Vel => "vel",
            Var::Vert => "vert",
            Var::Hor => "hor",
            Var::Cross => "cross",
            Var::Long => "long",
            Var::Gyr => "gyr",
            Var::Wind => "wind",
            Var::Dp => "dp",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Var::Att | Var::Yaw | Var::Pitch | Var::Roll => "deg",
            Var::VelNorth | Var::VelEast | Var::VelDown | Var::Vel | Var::Wind => "m/s",
            Var::Vert | Var::Hor | Var::Cross | Var::Long => "m",
            Var::Gyr => "deg/s",
            Var::Dp => "Pa",
        }
    }
}

/// Signed cross-track and long-track errors of an estimated position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackErrors {
    /// Positive when the estimate lies to the right of the track.
    pub cross: f64,
    /// Positive when the estimate lies ahead along the track.
    pub long: f64,
    pub hor: f64,
}

/// Decomposes the horizontal error along the true ground course `course` [rad].
pub fn track_decompose(est: &GeodeticPosition, truth: &GeodeticPosition, course: f64, earth: &EarthConstants) -> TrackErrors {
    let (dn, de) = geo::ne_offset(truth, est, earth);
    let (s, c) = course.sin_cos();
    TrackErrors { cross: -dn * s + de * c, long: dn * c + de * s, hor: dn.hypot(de) }
}

/// Per-step NSE of one estimate against the truth.
pub fn nse(est: &NavEstimate, truth: &TruthState, gyro_lumped: &NedVector, earth: &EarthConstants) -> [f64; NV] {
    let mut out = [0.0; NV];
    let d = 180.0 / std::f64::consts::PI;
    out[Var::Att.index()] = geo::rotation_minus(&est.att.q_nb, &truth.q_nb).angle() * d;
    out[Var::Yaw.index()] = geo::wrap_pi(est.euler.yaw - truth.euler.yaw) * d;
    out[Var::Pitch.index()] = (est.euler.pitch - truth.euler.pitch) * d;
    out[Var::Roll.index()] = geo::wrap_pi(est.euler.roll - truth.euler.roll) * d;
    let dv = est.pos.v_n - truth.v_n;
    out[Var::VelNorth.index()] = dv.x;
    out[Var::VelEast.index()] = dv.y;
    out[Var::VelDown.index()] = dv.z;
    out[Var::Vel.index()] = dv.norm();
    out[Var::Vert.index()] = est.pos.pos.h - truth.pos.h;
    let tr = track_decompose(&est.pos.pos, &truth.pos, truth.course(), earth);
    out[Var::Hor.index()] = tr.hor;
    out[Var::Cross.index()] = tr.cross;
    out[Var::Long.index()] = tr.long;
    out[Var::Gyr.index()] = (est.att.e_gyr - gyro_lumped).norm() * d;
    out[Var::Wind.index()] = (est.pos.wind_n - truth.wind_n).norm();
    out[Var::Dp.index()] = est.pos.dp - truth.offsets.dp;
    out
}

/// Mean, sample standard deviation and signed maximum magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

/// Streaming accumulator behind [`Stats`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StatsAcc {
    n: u64,
    mean: f64,
    m2: f64,
    max: f64,
}

impl StatsAcc {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        if x.abs() > self.max.abs() || self.n == 1 {
            self.max = x;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn stats(&self) -> Stats {
        let std = if self.n > 1 { (self.m2 / (self.n - 1) as f64).sqrt() } else { 0.0 };
        Stats { mean: self.mean, std, max: self.max }
    }
}

/// Statistics of a sample; `None` when empty.
pub fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let mut acc = StatsAcc::default();
    for &v in values {
        acc.push(v);
    }
    Some(acc.stats())
}

/// `‖∫ (w(t) − w(t_gnss)) dt‖` over `[t_gnss, t_end]` by the trapezoid rule
/// on samples `(t, wind)` ordered by time.
pub fn wind_accumulation(samples: &[(f64, NedVector)], t_gnss: f64) -> f64 {
    let Some(start) = samples.iter().position(|(t, _)| *t >= t_gnss) else {
        return 0.0;
    };
    let w0 = samples[start].1;
    let mut acc = NedVector::zeros();
    for pair in samples[start..].windows(2) {
        let (t0, a) = pair[0];
        let (t1, b) = pair[1];
        acc += ((a - w0) + (b - w0)) * (0.5 * (t1 - t0));
    }
    acc.norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DumpOptions {
    pub truth: bool,
    pub estimates: bool,
    /// Steps between dumped rows.
    pub every: u32,
}

impl Default for DumpOptions {
    fn default() -> Self {
        Self { truth: false, estimates: false, every: 10 }
    }
}

/// Everything needed to execute runs of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub scenario: ScenarioKind,
    pub dt: f64,
    pub t_end: f64,
    pub t_gnss: f64,
    pub ranges: ScenarioRanges,
    pub turbulence: TurbulenceParams,
    pub field: FieldConfig,
    pub earth: EarthConstants,
    pub atmo: AtmoConstants,
    pub sensors: SensorConfig,
    pub nav: NavConfig,
    pub variant: AlgoVariant,
    pub cold_start: bool,
    /// Interval of the stored error series [s].
    pub series_every: f64,
    pub dump: DumpOptions,
}

impl SimConfig {
    /// Desk-scale defaults for a scenario.
    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            dt: 0.01,
            t_end: scenario.default_t_end(),
            t_gnss: 100.0,
            ranges: ScenarioRanges::default(),
            turbulence: TurbulenceParams::default(),
            field: FieldConfig::default(),
            earth: EarthConstants::default(),
            atmo: AtmoConstants::default(),
            sensors: SensorConfig::baseline(),
            nav: NavConfig::default(),
            variant: AlgoVariant::default(),
            cold_start: false,
            series_every: 1.0,
            dump: DumpOptions::default(),
        }
    }

    pub fn draw(&self, master_seed: u64, run: u64) -> Result<ScenarioDraw, ConfigError> {
        draw_scenario(self.scenario, run_seed(master_seed, run), self.t_end, self.t_gnss, &self.ranges, &self.turbulence)
    }

    pub fn steps_per_sample(&self) -> u64 {
        ((self.series_every / self.dt).round() as u64).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    /// The divergence guard tripped; the run was truncated at `t`.
    Destabilized { t: f64 },
    /// A simulation or filter error ended the run at `t`.
    Aborted { t: f64, reason: String },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Destabilized { .. } => "destabilized",
            Outcome::Aborted { .. } => "aborted",
        }
    }
}

/// Columnar per-step dump.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DumpTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

pub const TRUTH_COLUMNS: &[&str] = &[
    "t", "lon_deg", "lat_deg", "h", "qw", "qx", "qy", "qz", "yaw_deg", "pitch_deg", "roll_deg", "v_north", "v_east",
    "v_down", "wind_north", "wind_east", "wind_down", "v_tas", "alpha_deg", "beta_deg", "hp", "temperature", "pressure",
    "dt_offset", "dp_offset", "f_x", "f_y", "f_z", "w_nb_x", "w_nb_y", "w_nb_z", "e_gyr_x", "e_gyr_y", "e_gyr_z",
    "e_acc_x", "e_acc_y", "e_acc_z",
];

pub const ESTIMATE_COLUMNS: &[&str] = &[
    "t", "lon_deg", "lat_deg", "h", "qw", "qx", "qy", "qz", "yaw_deg", "pitch_deg", "roll_deg", "v_north", "v_east",
    "v_down", "wind_north", "wind_east", "wind_down", "v_tas", "alpha_deg", "beta_deg", "hp", "temperature", "dt_offset",
    "dp_offset", "f_x", "f_y", "f_z", "w_nb_x", "w_nb_y", "w_nb_z", "e_gyr_x", "e_gyr_y", "e_gyr_z", "e_acc_x", "e_acc_y",
    "e_acc_z", "e_mag_x", "e_mag_y", "e_mag_z", "b_dev_north", "b_dev_east", "b_dev_down", "denied", "err_att_deg",
    "err_yaw_deg", "err_pitch_deg", "err_roll_deg", "err_v_north", "err_v_east", "err_v_down", "err_vert", "err_hor",
    "err_cross", "err_long",
];

fn truth_row(s: &TruthState, e_gyr: &NedVector, e_acc: &NedVector) -> Vec<f64> {
    let q = s.q_nb.quaternion();
    let mut r = vec![
        s.t,
        s.pos.lon.to_degrees(),
        s.pos.lat.to_degrees(),
        s.pos.h,
        q.w,
        q.i,
        q.j,
        q.k,
        s.euler.yaw.to_degrees(),
        s.euler.pitch.to_degrees(),
        s.euler.roll.to_degrees(),
    ];
    r.extend(s.v_n.iter());
    r.extend(s.wind_n.iter());
    r.extend([s.v_tas, s.alpha.to_degrees(), s.beta.to_degrees(), s.hp, s.temperature, s.pressure, s.offsets.dt, s.offsets.dp]);
    r.extend(s.f_ib_b.iter());
    r.extend(s.w_nb_b.iter());
    r.extend(e_gyr.iter());
    r.extend(e_acc.iter());
    r
}

fn estimate_row(e: &NavEstimate, err: &[f64; NV]) -> Vec<f64> {
    let q = e.att.q_nb.quaternion();
    let p = &e.pos;
    let mut r = vec![
        e.t,
        p.pos.lon.to_degrees(),
        p.pos.lat.to_degrees(),
        p.pos.h,
        q.w,
        q.i,
        q.j,
        q.k,
        e.euler.yaw.to_degrees(),
        e.euler.pitch.to_degrees(),
        e.euler.roll.to_degrees(),
    ];
    r.extend(p.v_n.iter());
    r.extend(p.wind_n.iter());
    r.extend([e.air.v_tas, e.air.alpha.to_degrees(), e.air.beta.to_degrees(), e.air.hp, e.air.temperature, e.air.dt, p.dp]);
    r.extend(p.f_ib_b.iter());
    r.extend(e.att.w_nb_b.iter());
    r.extend(e.att.e_gyr.iter());
    r.extend(p.e_acc.iter());
    r.extend(e.att.e_mag.iter());
    r.extend(e.att.b_dev_n.iter());
    r.push(if p.mode == crate::nav::Mode::Denied { 1.0 } else { 0.0 });
    for v in [Var::Att, Var::Yaw, Var::Pitch, Var::Roll, Var::VelNorth, Var::VelEast, Var::VelDown, Var::Vert, Var::Hor, Var::Cross, Var::Long] {
        r.push(err[v.index()]);
    }
    r
}

/// Result of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub run: u64,
    pub run_seed: u64,
    pub outcome: Outcome,
    /// Filter steps executed (including `t = 0`).
    pub steps: u64,
    pub trajectory: [Stats; NV],
    /// Errors at the last executed step.
    pub final_errors: [f64; NV],
    pub t_final: f64,
    /// Distance flown since GNSS loss, accumulated from truth positions [m].
    pub distance: f64,
    pub wind_accumulation: f64,
    /// Error series sampled every `series_every` seconds: `(t, errors)`.
    pub series: Vec<(f64, [f64; NV])>,
    pub truth_dump: Option<DumpTable>,
    pub estimate_dump: Option<DumpTable>,
}

impl RunResult {
    pub fn final_hor_percent(&self) -> Option<f64> {
        (self.distance > 0.0).then(|| self.final_errors[Var::Hor.index()] / self.distance * 100.0)
    }

    pub fn is_completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }
}

fn normal3<R: Rng>(rng: &mut R, sigma: f64) -> NedVector {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    let c: f64 = rng.sample(StandardNormal);
    NedVector::new(a, b, c) * sigma
}

/// Resolves the navigation config for a run, widening lumped-error priors on cold starts.
pub fn effective_nav_config(cfg: &SimConfig) -> NavConfig {
    let mut nav = cfg.nav;
    if cfg.cold_start {
        let s = &cfg.sensors;
        let init = &mut nav.attitude.init;
        init.gyro_error = init.gyro_error.max(s.gyr.bias_offset);
        init.mag_error = init.mag_error.max(s.mag.bias_offset.hypot(s.mag.hard_iron));
        init.mag_deviation = init.mag_deviation.max(cfg.field.mag_dev_sigma);
        nav.position.accel_error_init = nav.position.accel_error_init.max(s.acc.bias_offset);
    }
    nav
}

/// Truth-seeded filter start perturbed by the configured initial σ.
pub fn nav_init(cfg: &SimConfig, nav: &NavConfig, truth: &TruthState, sensors: &SensorSuite, gen: &TruthGenerator, seed: u64) -> NavInit {
    let mut rng = stream_rng(seed, Stream::NavInit);
    let a = &nav.attitude.init;
    let p = &nav.position;
    let cold = cfg.cold_start;
    let lumped_or_zero = |v: NedVector| if cold { NedVector::zeros() } else { v };
    let att = AttState {
        q_nb: geo::quat_mul(&truth.q_nb, &geo::quat_exp(&normal3(&mut rng, a.attitude_deg.to_radians()))),
        w_nb_b: truth.w_nb_b + normal3(&mut rng, a.rate),
        e_gyr: lumped_or_zero(sensors.gyro.lumped(&truth.w_ib_b)) + normal3(&mut rng, if cold { 0.0 } else { a.gyro_error }),
        e_mag: lumped_or_zero(sensors.mag.lumped(&truth.mag_b)) + normal3(&mut rng, if cold { 0.0 } else { a.mag_error }),
        b_dev_n: lumped_or_zero(gen.fields().mag_dev_ned) + normal3(&mut rng, if cold { 0.0 } else { a.mag_deviation }),
    };
    let e_acc = lumped_or_zero(sensors.accel.lumped(&truth.f_ib_b)) + normal3(&mut rng, if cold { 0.0 } else { p.accel_error_init });
    let dpos = normal3(&mut rng, p.position_init);
    let dv = normal3(&mut rng, p.velocity_init);
    let dw = normal3(&mut rng, p.wind.init);
    let ddp: f64 = rng.sample::<f64, _>(StandardNormal) * p.pressure_offset.init;
    let pos = crate::sensors::displace(&truth.pos, &NedVector::new(dpos.x, dpos.y, 0.0), &cfg.earth);
    NavInit {
        air: AirState {
            v_tas: truth.v_tas,
            alpha: truth.alpha,
            beta: truth.beta,
            temperature: truth.temperature,
            hp: truth.hp,
            dt: truth.offsets.dt,
            v_tas_rate: 0.0,
            alpha_rate: 0.0,
            beta_rate: 0.0,
        },
        att,
        pos: PosInit {
            f_ib_b: truth.f_ib_b,
            e_acc,
            v_n: truth.v_n + dv,
            wind_n: truth.wind_n + dw,
            pos,
            dp: truth.offsets.dp + ddp,
        },
    }
}

/// Executes one run of `draw` with the truth, sensors and filters in lockstep.
pub fn run_draw(cfg: &SimConfig, run: u64, draw: ScenarioDraw) -> RunResult {
    let seed = draw.run_seed;
    let t_gnss = draw.t_gnss;
    let mut result = RunResult {
        run,
        run_seed: seed,
        outcome: Outcome::Completed,
        steps: 0,
        trajectory: [Stats::default(); NV],
        final_errors: [0.0; NV],
        t_final: 0.0,
        distance: 0.0,
        wind_accumulation: 0.0,
        series: Vec::new(),
        truth_dump: cfg.dump.truth.then(|| DumpTable { columns: TRUTH_COLUMNS.to_vec(), rows: Vec::new() }),
        estimate_dump: cfg.dump.estimates.then(|| DumpTable { columns: ESTIMATE_COLUMNS.to_vec(), rows: Vec::new() }),
    };
    let abort = |r: &mut RunResult, t: f64, e: SimError| r.outcome = Outcome::Aborted { t, reason: e.to_string() };

    let mut gen = match TruthGenerator::new(draw, cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field) {
        Ok(g) => g,
        Err(e) => {
            abort(&mut result, 0.0, e);
            return result;
        }
    };
    let mut sensors = SensorSuite::new(&cfg.sensors, seed, cfg.dt, t_gnss, &cfg.earth);
    let nav_cfg = effective_nav_config(cfg);
    let init = nav_init(cfg, &nav_cfg, gen.current(), &sensors, &gen, seed);
    let mag_model = env::magnetic_field_model(&cfg.field);
    let mut nav = match Navigator::new(&init, &nav_cfg, cfg.variant, &cfg.sensors, &mag_model, t_gnss, cfg.dt, &cfg.earth, &cfg.atmo) {
        Ok(n) => n,
        Err(e) => {
            abort(&mut result, 0.0, e);
            return result;
        }
    };

    let every = cfg.steps_per_sample();
    let dump_every = cfg.dump.every.max(1) as u64;
    let mut acc = [StatsAcc::default(); NV];
    let mut wind_samples: Vec<(f64, NedVector)> = Vec::new();
    let mut prev_pos: Option<GeodeticPosition> = None;
    loop {
        let k = gen.step_index();
        let truth = gen.current().clone();
        let step = sensors.measure(&truth, k).and_then(|frame| nav.step(&frame));
        let est = match step {
            Ok(e) => e,
            Err(e) => {
                abort(&mut result, truth.t, e);
                break;
            }
        };
        if est.destabilized {
            result.outcome = Outcome::Destabilized { t: truth.t };
            break;
        }
        let lumped = sensors.lumped_errors();
        let err = nse(&est, &truth, &lumped.gyro, &cfg.earth);
        for (a, v) in acc.iter_mut().zip(err) {
            a.push(v);
        }
        result.final_errors = err;
        result.t_final = truth.t;
        result.steps += 1;
        if k % every == 0 {
            result.series.push((truth.t, err));
        }
        if k % dump_every == 0 {
            if let Some(d) = result.truth_dump.as_mut() {
                d.rows.push(truth_row(&truth, &lumped.gyro, &lumped.accel));
            }
            if let Some(d) = result.estimate_dump.as_mut() {
                d.rows.push(estimate_row(&est, &err));
            }
        }
        if truth.t >= t_gnss {
            if let Some(p) = prev_pos {
                let (dn, de) = geo::ne_offset(&p, &truth.pos, &cfg.earth);
                result.distance += dn.hypot(de);
            }
            prev_pos = Some(truth.pos);
            wind_samples.push((truth.t, truth.wind_n));
        }
        if gen.is_finished() {
            break;
        }
        if let Err(e) = gen.step() {
            abort(&mut result, truth.t, e);
            break;
        }
    }
    for (slot, a) in result.trajectory.iter_mut().zip(acc) {
        *slot = a.stats();
    }
    result.wind_accumulation = wind_accumulation(&wind_samples, t_gnss);
    result
}

/// Draws and executes run `run` of the Monte Carlo set seeded by `master_seed`.
pub fn run_once(cfg: &SimConfig, master_seed: u64, run: u64) -> Result<RunResult, ConfigError> {
    Ok(run_draw(cfg, run, cfg.draw(master_seed, run)?))
}

/// Executes `runs` runs in parallel; results are ordered by run index.
pub fn run_monte_carlo(cfg: &SimConfig, master_seed: u64, runs: u64) -> Result<Vec<RunResult>, ConfigError> {
    let draws = (0..runs).map(|i| cfg.draw(master_seed, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(draws.into_par_iter().enumerate().map(|(i, d)| run_draw(cfg, i as u64, d)).collect())
}

/// As [`run_monte_carlo`] on a dedicated pool of `threads` workers; 0 keeps
/// the global pool. Results do not depend on the thread count.
pub fn run_monte_carlo_threads(cfg: &SimConfig, master_seed: u64, runs: u64, threads: usize) -> Result<Vec<RunResult>, ConfigError> {
    if threads == 0 {
        return run_monte_carlo(cfg, master_seed, runs);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::invalid("run.threads", e.to_string()))?;
    pool.install(|| run_monte_carlo(cfg, master_seed, runs))
}

/// Aggregated statistics of one variable: statistics across runs of the
/// per-run mean, std and max.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetrics {
    pub var: Var,
    pub of_mean: Stats,
    pub of_std: Stats,
    pub of_max: Stats,
    /// Statistics across runs of the final-step error.
    pub final_state: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub vars: Vec<AggregatedMetrics>,
    /// Final horizontal error as a percentage of distance flown since GNSS loss.
    pub final_hor_percent: Option<Stats>,
}

impl Aggregate {
    pub fn get(&self, var: Var) -> &AggregatedMetrics {
        &self.vars[var.index()]
    }
}

/// Aggregates runs; `None` for an empty set. Runs are taken in the given order.
pub fn aggregate(runs: &[RunResult]) -> Option<Aggregate> {
    if runs.is_empty() {
        return None;
    }
    let col = |f: &dyn Fn(&RunResult) -> f64| -> Stats { stats(&runs.iter().map(f).collect::<Vec<_>>()).expect("non-empty") };
    let vars = Var::ALL
        .iter()
        .map(|&v| {
            let i = v.index();
            AggregatedMetrics {
                var: v,
                of_mean: col(&|r| r.trajectory[i].mean),
                of_std: col(&|r| r.trajectory[i].std),
                of_max: col(&|r| r.trajectory[i].max),
                final_state: col(&|r| r.final_errors[i]),
            }
        })
        .collect();
    let pct: Vec<f64> = runs.iter().filter_map(RunResult::final_hor_percent).collect();
    Some(Aggregate { runs: runs.len(), vars, final_hor_percent: stats(&pct) })
}

/// Across-run mean and std of every variable at each series sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub runs: usize,
    pub mean: [f64; NV],
    pub std: [f64; NV],
}

pub fn aggregate_series(runs: &[RunResult]) -> Vec<SeriesPoint> {
    let len = runs.iter().map(|r| r.series.len()).max().unwrap_or(0);
    (0..len)
        .map(|j| {
            let present: Vec<&(f64, [f64; NV])> = runs.iter().filter_map(|r| r.series.get(j)).collect();
            let mut mean = [0.0; NV];
            let mut std = [0.0; NV];
            for i in 0..NV {
                let s = stats(&present.iter().map(|p| p.1[i]).collect::<Vec<_>>()).expect("non-empty");
                mean[i] = s.mean;
                std[i] = s.std;
            }
            SeriesPoint { t: present[0].0, runs: present.len(), mean, std }
        })
        .collect()
}

/// Pearson correlation coefficient; `None` when undefined.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let d = (sxx * syy).sqrt();
    (d > 0.0).then(|| sxy / d)
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn stats_use_sample_convention() {
        let s = stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(s.mean, 2.0);
        assert_relative_eq!(s.std, 1.0);
        assert_eq!(s.max, 3.0);
        let one = stats(&[-4.0]).unwrap();
        assert_eq!((one.mean, one.std, one.max), (-4.0, 0.0, -4.0));
        assert!(stats(&[]).is_none());
        assert_eq!(stats(&[1.0, -5.0, 2.0]).unwrap().max, -5.0);
    }

    #[test]
    fn track_decomposition_signs() {
        let earth = EarthConstants::default();
        let truth = GeodeticPosition::new(0.0, 0.7, 1000.0);
        let z = track_decompose(&truth, &truth, 0.3, &earth);
        assert_eq!((z.cross, z.long, z.hor), (0.0, 0.0, 0.0));
        // Heading north, an estimate to the east is to the right.
        let east = crate::sensors::displace(&truth, &NedVector::new(0.0, 10.0, 0.0), &earth);
        let e = track_decompose(&east, &truth, 0.0, &earth);
        assert_relative_eq!(e.cross, 10.0, epsilon = 1e-6);
        assert!(e.long.abs() < 1e-6);
        // Heading east, the same estimate is ahead.
        let e = track_decompose(&east, &truth, std::f64::consts::FRAC_PI_2, &earth);
        assert_relative_eq!(e.long, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn wind_accumulation_of_a_ramp() {
        // Constant until 100 s, ramps by 2 m/s north over [200, 300], then constant to 500 s.
        let w = |t: f64| NedVector::new(5.0 + 2.0 * ((t - 200.0) / 100.0).clamp(0.0, 1.0), 1.0, 0.0);
        let samples: Vec<_> = (0..=5000).map(|k| (k as f64 * 0.1, w(k as f64 * 0.1))).collect();
        // ∫ ramp = 2·100/2 + 2·200 = 500.
        assert_relative_eq!(wind_accumulation(&samples, 100.0), 500.0, epsilon = 1e-6);
        let flat: Vec<_> = (0..100).map(|k| (k as f64, NedVector::new(3.0, 4.0, 0.0))).collect();
        assert_eq!(wind_accumulation(&flat, 10.0), 0.0);
    }

    #[test]
    fn pearson_and_slope() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap(), 1.0);
        assert_relative_eq!(pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap(), -1.0);
        let pts: Vec<_> = (1..50).map(|t| (t as f64, 3.0 * (t as f64).powi(2))).collect();
        assert_relative_eq!(loglog_slope(&pts).unwrap(), 2.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn track_closure(dn in -500.0..500.0f64, de in -500.0..500.0f64, course in -3.1..3.1f64) {
            let earth = EarthConstants::default();
            let truth = GeodeticPosition::new(0.1, 0.8, 1500.0);
            let est = crate::sensors::displace(&truth, &NedVector::new(dn, de, 0.0), &earth);
            let t = track_decompose(&est, &truth, course, &earth);
            prop_assert!((t.hor.powi(2) - t.cross.powi(2) - t.long.powi(2)).abs() < 1e-6 * (1.0 + t.hor.powi(2)));
        }

        #[test]
        fn aggregation_is_permutation_invariant(v in prop::collection::vec(-10.0..10.0f64, 2..30), rot in 0usize..30) {
            let mut w = v.clone();
            let r = rot % w.len();
            w.rotate_left(r);
            let a = stats(&v).unwrap();
            let b = stats(&w).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!((a.std - b.std).abs() < 1e-10);
            prop_assert_eq!(a.max.abs(), b.max.abs());
            prop_assert!(a.std >= 0.0 && a.max.abs() >= a.mean.abs());
        }
    }
}
