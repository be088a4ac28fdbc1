use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use airnav::altnav::{Attitude, Horizontal, Vertical};
use airnav::config::{RunConfig, SweepAxis};
use airnav::harness::{aggregate, run_monte_carlo_threads, Var};
use airnav::output;
use airnav::sensors::Grade;
use clap::Parser;
use serde::Serialize;

/// Monte Carlo evaluation of a GNSS-denied inertial navigation system.
#[derive(Parser, Debug)]
#[command(name = "airnav", version)]
struct Args {
    /// TOML configuration; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: Option<u8>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated duration [s]; defaults to the scenario length.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    t_gnss: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    hor: Option<Horizontal>,
    #[arg(long)]
    vert: Option<Vertical>,
    #[arg(long)]
    att: Option<Attitude>,
    #[arg(long)]
    gyr: Option<Grade>,
    #[arg(long)]
    acc: Option<Grade>,
    #[arg(long)]
    mag: Option<Grade>,
    #[arg(long)]
    tas: Option<Grade>,
    #[arg(long)]
    air: Option<Grade>,
    /// Bias-drift band of the inertial sensors in multiples of the drift σ.
    #[arg(long)]
    band: Option<f64>,
    /// Run every variant along an axis (hor, vert, att or all), one output subdirectory each.
    #[arg(long)]
    sweep: Option<SweepAxis>,
    /// Start the filters from coarse values instead of near the truth.
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    dump_truth: bool,
    #[arg(long)]
    dump_estimates: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the Earth and atmosphere constants in effect and exit.
    #[arg(long)]
    dump_constants: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Serialize)]
struct Constants<'a> {
    earth: &'a airnav::geo::EarthConstants,
    atmo: &'a airnav::atmo::AtmoConstants,
}

fn build_config(a: &Args) -> Result<RunConfig, String> {
    let mut c = match &a.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    let r = &mut c.run;
    if let Some(v) = a.scenario {
        r.scenario = v;
    }
    if let Some(v) = a.runs {
        r.runs = v;
    }
    if let Some(v) = a.seed {
        r.seed = v;
    }
    if let Some(v) = a.t_end {
        r.t_end = Some(v);
    }
    if let Some(v) = a.t_gnss {
        r.t_gnss = v;
    }
    if let Some(v) = a.dt {
        r.dt = v;
    }
    if let Some(v) = a.threads {
        r.threads = v;
    }
    if a.sweep.is_some() {
        r.sweep = a.sweep;
    }
    r.cold_start |= a.cold_start;
    if let Some(v) = a.hor {
        c.variant.horizontal = v;
    }
    if let Some(v) = a.vert {
        c.variant.vertical = v;
    }
    if let Some(v) = a.att {
        c.variant.attitude = v;
    }
    let s = &mut c.sensors;
    for (flag, slot) in [(a.gyr, &mut s.gyr), (a.acc, &mut s.acc), (a.mag, &mut s.mag), (a.tas, &mut s.tas), (a.air, &mut s.air)] {
        if let Some(g) = flag {
            *slot = g;
        }
    }
    if let Some(v) = a.band {
        s.band = v;
    }
    let o = &mut c.output;
    o.dump_truth |= a.dump_truth;
    o.dump_estimates |= a.dump_estimates;
    if let Some(d) = &a.out {
        o.dir = d.display().to_string();
    }
    c.validate().map_err(|e| e.to_string())?;
    c.resolved().map_err(|e| e.to_string())
}

fn run(a: &Args) -> Result<ExitCode, String> {
    let cfg = build_config(a)?;
    if a.dump_constants {
        print!("{}", toml::to_string(&Constants { earth: &cfg.earth, atmo: &cfg.atmo }).map_err(|e| e.to_string())?);
        return Ok(ExitCode::SUCCESS);
    }
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let variants = cfg.variants();
    let root = PathBuf::from(&cfg.output.dir);
    let mut failed = 0usize;
    let mut total = 0usize;
    for v in &variants {
        let mut vcfg = cfg.clone();
        vcfg.variant = *v;
        let sim = vcfg.sim_config(*v).map_err(|e| e.to_string())?;
        let dir = if cfg.run.sweep.is_some() { root.join(v.label()) } else { root.clone() };
        let started = Instant::now();
        let results = run_monte_carlo_threads(&sim, cfg.run.seed, cfg.run.runs, cfg.run.threads).map_err(|e| e.to_string())?;
        output::write_all(&dir, &vcfg.to_toml(), &results).map_err(|e| format!("{}: {e}", dir.display()))?;
        let bad: Vec<_> = results.iter().filter(|r| !r.is_completed()).collect();
        total += results.len();
        failed += bad.len();
        let completed: Vec<_> = results.iter().filter(|r| r.is_completed()).cloned().collect();
        let mut line = format!("{}: {}/{} completed in {:.1} s", v.label(), completed.len(), results.len(), started.elapsed().as_secs_f64());
        if let Some(agg) = aggregate(&completed) {
            for var in [Var::Att, Var::Vert, Var::Hor] {
                let m = agg.get(var);
                line += &format!(", {} {:.3} {}", var.name(), m.of_mean.mean, var.unit());
            }
        }
        println!("{line}");
        for r in bad {
            eprintln!("run {} ({}): {:?}", r.run, v.label(), r.outcome);
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {total} runs destabilized or aborted");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
