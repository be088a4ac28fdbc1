//! Properties of the navigation filters and their alternatives, exercised
//! against the simulator.

use airnav::altnav::{AlgoVariant, Attitude, Horizontal};
use airnav::atmo::{self, AtmoOffsets};
use airnav::env;
use airnav::geo::{self, BodyVector, NedVector};
use airnav::harness::{effective_nav_config, nav_init, run_monte_carlo, run_once, SimConfig, Var, ESTIMATE_COLUMNS, TRUTH_COLUMNS};
use airnav::nav::attitude::predicted_specific_force;
use airnav::nav::{AirState, AttState, Injection, NavConfig, Navigator, PVector, PosFilterConfig, PosInit, PositionFilter};
use airnav::sensors::{GnssParams, SensorConfig, SensorSuite};
use airnav::truth::{ScenarioKind, TruthGenerator, TruthState};

fn calm(kind: ScenarioKind, t_end: f64) -> SimConfig {
    let mut c = SimConfig::new(kind);
    c.t_end = t_end;
    c.turbulence.sigma = [0.0; 3];
    c
}

fn truth_air(s: &TruthState) -> AirState {
    AirState { v_tas: s.v_tas, alpha: s.alpha, beta: s.beta, temperature: s.temperature, hp: s.hp, dt: s.offsets.dt, ..AirState::default() }
}

fn truth_att(s: &TruthState) -> AttState {
    AttState { q_nb: s.q_nb, w_nb_b: s.w_nb_b, e_gyr: BodyVector::zeros(), e_mag: BodyVector::zeros(), b_dev_n: NedVector::zeros() }
}

/// Runs the position filter on error-free sensors with the true air data and
/// attitude, calling `visit` with each truth/estimate pair.
fn truth_fed(cfg: &SimConfig, inject: Injection, mut visit: impl FnMut(&TruthState, &airnav::nav::PosState)) {
    let draw = cfg.draw(1, 0).unwrap();
    let mut g = TruthGenerator::new(draw, cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field).unwrap();
    let mut sensors = SensorSuite::new(&SensorConfig::perfect(), 5, cfg.dt, cfg.t_gnss, &cfg.earth);
    let s0 = g.current().clone();
    let init = PosInit { f_ib_b: s0.f_ib_b, e_acc: BodyVector::zeros(), v_n: s0.v_n, wind_n: s0.wind_n, pos: s0.pos, dp: s0.offsets.dp };
    let mut f = PositionFilter::new(&init, &PosFilterConfig::default(), 0.01, AlgoVariant::default(), &inject, &cfg.earth, &cfg.atmo);
    loop {
        let s = g.current().clone();
        let frame = sensors.measure(&s, g.step_index()).unwrap();
        let est = f.step(&frame.accel, frame.gnss.as_ref(), &truth_air(&s), &truth_att(&s), s.t >= cfg.t_gnss, cfg.dt).unwrap();
        visit(&s, est);
        if g.is_finished() {
            break;
        }
        g.step().unwrap();
    }
}

#[test]
fn denied_velocity_error_is_the_accumulated_wind_change() {
    let cfg = calm(ScenarioKind::One, 1000.0);
    let mut reference: Option<(NedVector, NedVector)> = None;
    let mut worst: f64 = 0.0;
    truth_fed(&cfg, Injection::default(), |s, e| {
        if s.t < cfg.t_gnss {
            return;
        }
        let (w0, offset) = *reference.get_or_insert((s.wind_n, e.v_n - s.v_n));
        let residual = (e.v_n - s.v_n) + (s.wind_n - w0) - offset;
        worst = worst.max(residual.xy().norm());
    });
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn constant_wind_error_drifts_linearly() {
    let mut cfg = calm(ScenarioKind::One, 1000.0);
    cfg.ranges.wind_speed_ini = [6.0, 6.0];
    cfg.ranges.wind_speed_end = [6.0, 6.0];
    cfg.ranges.wind_bearing_change_deg = [0.0, 0.0];
    let inject = Injection { wind_error_ned: [3.0, -4.0, 0.0], ..Injection::default() };
    let mut at_loss = None;
    let mut last = (0.0, 0.0);
    truth_fed(&cfg, inject, |s, e| {
        let (dn, de) = geo::ne_offset(&s.pos, &e.pos, &cfg.earth);
        if s.t >= cfg.t_gnss {
            at_loss.get_or_insert(dn.hypot(de));
            last = (s.t, dn.hypot(de));
        }
    });
    let expected = 5.0 * (last.0 - cfg.t_gnss);
    assert!(at_loss.unwrap() < 1.0);
    assert!((last.1 - expected).abs() <= 0.02 * expected, "{} vs {expected}", last.1);
}

fn iono_free(kind: ScenarioKind, t_end: f64) -> SimConfig {
    let mut c = SimConfig::new(kind);
    c.t_end = t_end;
    c.sensors.gnss = GnssParams { horizontal_sigma: 0.0, vertical_sigma: 0.0, ..GnssParams::default() };
    c
}

#[test]
fn vertical_error_vanishes_without_pressure_offset_change() {
    // Not met at present: the air-data pressure altitude alone carries about 1 m of noise.
    let cfg = iono_free(ScenarioKind::Two, 500.0);
    for r in run_monte_carlo(&cfg, 3, 3).unwrap() {
        assert!(r.is_completed());
        let e = r.final_errors[Var::Vert.index()];
        assert!(e.abs() < 1.0, "run {}: {e}", r.run);
    }
}

#[test]
fn pressure_offset_step_maps_to_altitude_error() {
    let mut cfg = iono_free(ScenarioKind::One, 1000.0);
    // Large enough that the transfer dominates the ~1 m air-data altitude noise.
    cfg.ranges.dp_ini = [-500.0, -500.0];
    cfg.ranges.dp_end = [700.0, 700.0];
    cfg.ranges.dt_ini = [4.0, 4.0];
    cfg.ranges.dt_end = [4.0, 4.0];
    for r in run_monte_carlo(&cfg, 3, 3).unwrap() {
        let draw = cfg.draw(3, r.run).unwrap();
        let frozen = draw.offsets.offsets_at(cfg.t_gnss);
        let mut g = TruthGenerator::new(draw, cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field).unwrap();
        while !g.is_finished() {
            g.step().unwrap();
        }
        let end = g.current();
        let off = AtmoOffsets::new(end.offsets.dt, frozen.dp);
        let mapped = atmo::geometric_from_hp(end.hp, &off, &cfg.atmo, cfg.earth.re).unwrap().geometric - end.pos.h;
        let at_loss = r.series.iter().rfind(|p| p.0 < cfg.t_gnss).unwrap().1[Var::Vert.index()];
        let change = r.final_errors[Var::Vert.index()] - at_loss;
        assert!(((change - mapped) / mapped).abs() <= 0.05, "run {}: change {change:.2} mapped {mapped:.2}", r.run);
    }
}

#[test]
fn estimates_are_bit_identical() {
    let mut cfg = SimConfig::new(ScenarioKind::Two);
    cfg.t_end = 500.0;
    cfg.dump.estimates = true;
    cfg.dump.every = 1;
    assert_eq!(run_once(&cfg, 9, 4).unwrap(), run_once(&cfg, 9, 4).unwrap());
}

#[test]
fn harness_baseline_matches_a_direct_navigator_loop() {
    let mut cfg = SimConfig::new(ScenarioKind::Two);
    cfg.t_end = 500.0;
    cfg.dump.estimates = true;
    cfg.dump.every = 1;
    let r = run_once(&cfg, 2, 0).unwrap();
    let dump = r.estimate_dump.unwrap();
    let col = |name: &str| ESTIMATE_COLUMNS.iter().position(|c| *c == name).unwrap();
    let (h, qw, vn, ve) = (col("h"), col("qw"), col("v_north"), col("v_east"));

    let draw = cfg.draw(2, 0).unwrap();
    let seed = draw.run_seed;
    let mut g = TruthGenerator::new(draw, cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field).unwrap();
    let mut sensors = SensorSuite::new(&cfg.sensors, seed, cfg.dt, cfg.t_gnss, &cfg.earth);
    let nav_cfg = effective_nav_config(&cfg);
    let init = nav_init(&cfg, &nav_cfg, g.current(), &sensors, &g, seed);
    let mag = env::magnetic_field_model(&cfg.field);
    let mut nav = Navigator::new(&init, &nav_cfg, AlgoVariant::default(), &cfg.sensors, &mag, cfg.t_gnss, cfg.dt, &cfg.earth, &cfg.atmo).unwrap();
    for row in &dump.rows {
        let s = g.current().clone();
        let e = nav.step(&sensors.measure(&s, g.step_index()).unwrap()).unwrap();
        let q = e.att.q_nb.quaternion();
        assert_eq!([row[h], row[qw], row[vn], row[ve]], [e.pos.pos.h, q.w, e.pos.v_n.x, e.pos.v_n.y], "t = {}", s.t);
        if !g.is_finished() {
            g.step().unwrap();
        }
    }
}

#[test]
fn filter_covariances_stay_symmetric_psd() {
    let mut cfg = SimConfig::new(ScenarioKind::Two);
    cfg.t_end = 500.0;
    let draw = cfg.draw(4, 1).unwrap();
    let seed = draw.run_seed;
    let mut g = TruthGenerator::new(draw, cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field).unwrap();
    let mut sensors = SensorSuite::new(&cfg.sensors, seed, cfg.dt, cfg.t_gnss, &cfg.earth);
    let nav_cfg = NavConfig::default();
    let init = nav_init(&cfg, &nav_cfg, g.current(), &sensors, &g, seed);
    let mag = env::magnetic_field_model(&cfg.field);
    let mut nav = Navigator::new(&init, &nav_cfg, AlgoVariant::default(), &cfg.sensors, &mag, cfg.t_gnss, cfg.dt, &cfg.earth, &cfg.atmo).unwrap();
    let mut k = 0u64;
    while !g.is_finished() {
        let s = g.current().clone();
        nav.step(&sensors.measure(&s, g.step_index()).unwrap()).unwrap();
        if k.is_multiple_of(10) {
            let p = nav.attitude_filter().covariance();
            assert!((p - p.transpose()).amax() <= 1e-12 * p.amax(), "asymmetric at t = {}", s.t);
            let min = p.symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-12 * p.amax(), "eigenvalue {min} at t = {}", s.t);
            for i in 0..3 {
                let c = nav.position_filter().ins_covariance(i);
                assert!(c[(0, 1)] == c[(1, 0)] && c.symmetric_eigen().eigenvalues.min() >= -1e-9);
            }
        }
        k += 1;
        g.step().unwrap();
    }
}

#[test]
fn maneuvers_bias_the_simplified_accel_models() {
    let cfg = calm(ScenarioKind::One, 1000.0);
    let draw = cfg.draw(1, 2).unwrap();
    let mut g = TruthGenerator::new(draw, cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field).unwrap();
    let mag = env::magnetic_field_model(&cfg.field);
    let mut sums = [0.0; 3];
    let mut n = 0;
    while !g.is_finished() {
        let s = g.step().unwrap().clone();
        let yaw_rate = geo::rotate_to_ned(&s.q_nb, &s.w_nb_b).z;
        if yaw_rate.abs() < 0.5f64.to_radians() {
            continue;
        }
        let p = PVector::assemble(&s.pos, &s.v_n, &s.wind_n, &BodyVector::zeros(), &mag, &cfg.earth).unwrap();
        for (sum, m) in sums.iter_mut().zip([Attitude::Baseline, Attitude::ZeroFb, Attitude::ZeroFn]) {
            *sum += (predicted_specific_force(m, &s.q_nb, &s.w_nb_b, &p) - s.f_ib_b).norm();
        }
        n += 1;
    }
    assert!(n > 1000, "turn too short: {n} steps");
    let [base, fb, fnn] = sums.map(|s| s / n as f64);
    assert!(fb >= 10.0 * base && fnn >= 10.0 * base, "baseline {base:.2e}, zero-fb {fb:.2e}, zero-fn {fnn:.2e}");
}

#[test]
fn constant_wind_error_is_linear_and_bias_quadratic_in_time() {
    let mut cfg = SimConfig::new(ScenarioKind::One);
    cfg.t_end = 1000.0;
    cfg.ranges.wind_speed_ini = [5.0, 5.0];
    cfg.ranges.wind_speed_end = [5.0, 5.0];
    cfg.ranges.wind_bearing_change_deg = [0.0, 0.0];
    let slope = |c: &SimConfig| {
        let r = run_once(c, 1, 0).unwrap();
        let pts: Vec<_> = r.series.iter().filter(|p| p.0 - c.t_gnss >= 10.0).map(|p| (p.0 - c.t_gnss, p.1[Var::Hor.index()])).collect();
        airnav::harness::loglog_slope(&pts).unwrap()
    };
    let mut w = cfg.clone();
    w.nav.inject.wind_error_ned = [0.0, 5.0, 0.0];
    let mut d = cfg.clone();
    d.variant.horizontal = Horizontal::DoubleIntegration;
    d.nav.inject.accel_bias_ned = [0.0, 0.1, 0.0];
    let (sw, sd) = (slope(&w), slope(&d));
    assert!((sw - 1.0).abs() < 0.15, "{sw}");
    assert!((sd - 2.0).abs() < 0.2, "{sd}");
}

#[test]
fn attitude_error_column_matches_dumped_quaternions() {
    let mut cfg = SimConfig::new(ScenarioKind::Two);
    cfg.t_end = 500.0;
    cfg.dump = airnav::harness::DumpOptions { truth: true, estimates: true, every: 50 };
    let r = run_once(&cfg, 1, 0).unwrap();
    let (tr, es) = (r.truth_dump.unwrap(), r.estimate_dump.unwrap());
    let q_at = |cols: &[&str], row: &[f64]| {
        let i = cols.iter().position(|c| *c == "qw").unwrap();
        nalgebra::UnitQuaternion::new_normalize(nalgebra::Quaternion::new(row[i], row[i + 1], row[i + 2], row[i + 3]))
    };
    let err = ESTIMATE_COLUMNS.iter().position(|c| *c == "err_att_deg").unwrap();
    assert_eq!(tr.rows.len(), es.rows.len());
    for (t, e) in tr.rows.iter().zip(&es.rows) {
        let d = geo::rotation_minus(&q_at(ESTIMATE_COLUMNS, e), &q_at(TRUTH_COLUMNS, t)).angle().to_degrees();
        assert!((d - e[err]).abs() < 1e-9, "{d} vs {}", e[err]);
    }
}
