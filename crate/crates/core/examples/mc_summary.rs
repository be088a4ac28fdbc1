//! Prints aggregated NSE metrics for a small Monte Carlo set.
//!
//! `cargo run --release --example mc_summary -- <scenario 1|2> <runs> [t_end]`

use airnav::harness::{aggregate, run_monte_carlo, SimConfig, Var};
use airnav::truth::ScenarioKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = if args.get(1).map(String::as_str) == Some("1") { ScenarioKind::One } else { ScenarioKind::Two };
    let runs: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let mut cfg = SimConfig::new(kind);
    if let Some(t) = args.get(3).and_then(|s| s.parse().ok()) {
        cfg.t_end = t;
    }
    if let Ok(text) = std::env::var("NAV_TOML") {
        cfg.nav = toml::from_str(&text).expect("nav config");
    }
    if let Ok(v) = std::env::var("VARIANT") {
        cfg.variant = toml::from_str(&v).expect("variant");
    }
    if let Ok(v) = std::env::var("SENSORS_TOML") {
        cfg.sensors = toml::from_str(&v).expect("sensors");
    }
    if let Ok(v) = std::env::var("TAU_RESPONSE") {
        cfg.ranges.tau_response = v.parse().expect("tau");
    }
    if let Ok(v) = std::env::var("ZERO") {
        let p = airnav::sensors::SensorConfig::perfect();
        for part in v.split(',') {
            match part {
                "gyr" => cfg.sensors.gyr = p.gyr,
                "acc" => cfg.sensors.acc = p.acc,
                "mag" => cfg.sensors.mag = p.mag,
                "mis" => cfg.sensors.misalignment_deg = 0.0,
                "gnss" => cfg.sensors.gnss = p.gnss,
                "air" => cfg.sensors.air = p.air,
                _ => panic!("unknown part {part}"),
            }
        }
    }
    if let Ok(v) = std::env::var("DP_RAMP") {
        let x: Vec<f64> = v.split(',').map(|s| s.parse().expect("dp")).collect();
        cfg.ranges.dp_ini = [x[0], x[0]];
        cfg.ranges.dp_end = [x[1], x[1]];
        cfg.ranges.dt_ini = [0.0, 0.0];
        cfg.ranges.dt_end = [0.0, 0.0];
    }
    if std::env::var("CONST_WIND").is_ok() {
        cfg.ranges.wind_speed_ini = [5.0, 5.0];
        cfg.ranges.wind_speed_end = [5.0, 5.0];
        cfg.ranges.wind_bearing_change_deg = [0.0, 0.0];
    }
    if std::env::var("PERFECT").is_ok() {
        cfg.sensors = airnav::sensors::SensorConfig::perfect();
    }
    if std::env::var("CALM").is_ok() {
        cfg.turbulence.sigma = [0.0; 3];
    }
    if std::env::var("NOFIELD").is_ok() {
        cfg.field.mag_dev_sigma = 0.0;
        cfg.field.gravity_dev_sigma = 0.0;
    }
    let dump_series: Option<u64> = std::env::var("SERIES").ok().and_then(|v| v.parse().ok());
    let t0 = std::time::Instant::now();
    let res = run_monte_carlo(&cfg, 1, runs).expect("valid config");
    println!("{} runs in {:.1} s", res.len(), t0.elapsed().as_secs_f64());
    for r in &res {
        if dump_series == Some(r.run) {
            for (t, e) in &r.series {
                println!("S {t:.0} {}", Var::ALL.iter().map(|v| format!("{:.4}", e[v.index()])).collect::<Vec<_>>().join(" "));
            }
        }
        let t = &r.trajectory;
        println!(
            "run {:2} {:12} att {:.3}/{:.3}/{:.3} vel {:.2} vert {:+.2} hor {:.0} final hor {:.0} wind acc {:.0}",
            r.run,
            r.outcome.label(),
            t[Var::Att.index()].mean,
            t[Var::Att.index()].std,
            t[Var::Att.index()].max,
            t[Var::Vel.index()].mean,
            r.final_errors[Var::Vert.index()],
            t[Var::Hor.index()].mean,
            r.final_errors[Var::Hor.index()],
            r.wind_accumulation,
        );
    }
    for r in &res {
        let n = r.series.len();
        let mean = |a: usize, b: usize| r.series[a..b].iter().map(|p| p.1[Var::Att.index()]).sum::<f64>() / (b - a) as f64;
        print!("drift {:+.3} ", mean(n * 9 / 10, n) - mean(n * 45 / 100, n * 55 / 100));
    }
    println!();
    for r in &res {
        let at_loss = r.series.iter().rfind(|p| p.0 < cfg.t_gnss).map(|p| p.1[Var::Vert.index()]).unwrap_or(f64::NAN);
        print!("vert {:+.2}->{:+.2} ", at_loss, r.final_errors[Var::Vert.index()]);
    }
    println!();
    if std::env::var("DP_RAMP").is_ok() {
        for r in &res {
            let draw = cfg.draw(1, r.run).expect("draw");
            let mut gen = airnav::truth::TruthGenerator::new(draw.clone(), cfg.dt, &cfg.earth, &cfg.atmo, &cfg.field).expect("gen");
            let mut last = gen.current().clone();
            while !gen.is_finished() {
                last = gen.step().expect("step").clone();
            }
            let frozen = draw.offsets.offsets_at(cfg.t_gnss);
            let off = airnav::atmo::AtmoOffsets { dt: last.offsets.dt, dp: frozen.dp };
            let mapped = airnav::atmo::geometric_from_hp(last.hp, &off, &cfg.atmo, cfg.earth.re).expect("map").geometric - last.pos.h;
            let at_loss = r.series.iter().rfind(|p| p.0 < cfg.t_gnss).map(|p| p.1[Var::Vert.index()]).unwrap_or(f64::NAN);
            println!("dp mapping run {} change {:+.2} mapped {:+.2}", r.run, r.final_errors[Var::Vert.index()] - at_loss, mapped);
        }
    }
    for r in &res {
        let pts: Vec<(f64, f64)> = r.series.iter().filter(|p| p.0 - cfg.t_gnss >= 10.0).map(|p| (p.0 - cfg.t_gnss, p.1[Var::Hor.index()])).collect();
        print!("slope {:.3} ", airnav::harness::loglog_slope(&pts).unwrap_or(f64::NAN));
    }
    println!();
    let xs: Vec<f64> = res.iter().map(|r| r.final_errors[Var::Hor.index()]).collect();
    let ws: Vec<f64> = res.iter().map(|r| r.wind_accumulation).collect();
    println!("pearson hor vs wind acc {:?}", airnav::harness::pearson(&xs, &ws));
    let agg = aggregate(&res).expect("runs");
    for v in Var::ALL {
        let a = agg.get(v);
        println!(
            "{:10} mean-of-means {:+10.4} std-of-means {:9.4} mean-of-stds {:9.4} final mean {:+10.3} std {:9.3}",
            v.name(),
            a.of_mean.mean,
            a.of_mean.std,
            a.of_std.mean,
            a.final_state.mean,
            a.final_state.std
        );
    }
}
