//! CSV emission. Every file starts with a `# schema: <name> v<N>` line followed
//! by a header row; numbers use the shortest representation that round-trips,
//! so identical runs give byte-identical files. Layouts are documented in
//! `docs/formats.md`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::harness::{aggregate, aggregate_series, DumpTable, Outcome, RunResult, Stats, Var};

pub const SCHEMA_VERSION: u32 = 1;

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_file(path: &Path, schema: &str) -> io::Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# schema: {schema} v{SCHEMA_VERSION}")?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>) -> io::Result<()> {
    w.flush()
}

fn event(o: &Outcome) -> (Option<f64>, &str) {
    match o {
        Outcome::Completed => (None, ""),
        Outcome::Destabilized { t } => (Some(*t), ""),
        Outcome::Aborted { t, reason } => (Some(*t), reason.as_str()),
    }
}

/// One row per run: outcome and the run-level scalars.
pub fn write_runs(path: &Path, runs: &[RunResult]) -> io::Result<()> {
    let mut w = csv_file(path, "airnav-runs")?;
    w.write_record([
        "run", "run_seed", "outcome", "t_event", "reason", "steps", "t_final", "distance", "wind_accumulation", "final_hor_percent",
    ])?;
    for r in runs {
        let (t_event, reason) = event(&r.outcome);
        w.write_record([
            r.run.to_string(),
            r.run_seed.to_string(),
            r.outcome.label().to_string(),
            opt(t_event),
            reason.to_string(),
            r.steps.to_string(),
            num(r.t_final),
            num(r.distance),
            num(r.wind_accumulation),
            opt(r.final_hor_percent()),
        ])?;
    }
    finish(w)
}

/// One row per run per variable: trajectory statistics and the final value.
pub fn write_metrics(path: &Path, runs: &[RunResult]) -> io::Result<()> {
    let mut w = csv_file(path, "airnav-metrics")?;
    w.write_record(["run", "outcome", "var", "unit", "mean", "std", "max", "final"])?;
    for r in runs {
        for v in Var::ALL {
            let s = r.trajectory[v.index()];
            w.write_record([
                r.run.to_string(),
                r.outcome.label().to_string(),
                v.name().to_string(),
                v.unit().to_string(),
                num(s.mean),
                num(s.std),
                num(s.max),
                num(r.final_errors[v.index()]),
            ])?;
        }
    }
    finish(w)
}

fn stats_cells(s: Option<&Stats>) -> [String; 3] {
    match s {
        Some(s) => [num(s.mean), num(s.std), num(s.max)],
        None => Default::default(),
    }
}

/// Aggregated metrics of the completed runs, one row per variable, laid out
/// as the paper tables: statistics of the per-run mean, std and max, then of
/// the final value. A trailing `hor_percent` row carries the final horizontal
/// error as a percentage of the distance flown since GNSS loss.
pub fn write_aggregate(path: &Path, runs: &[RunResult]) -> io::Result<()> {
    let mut w = csv_file(path, "airnav-aggregate")?;
    let mut header: Vec<String> = ["var", "unit", "runs"].map(String::from).to_vec();
    for group in ["mean", "std", "max", "final"] {
        for stat in ["mean", "std", "max"] {
            header.push(format!("{group}_{stat}"));
        }
    }
    w.write_record(&header)?;
    let completed: Vec<RunResult> = runs.iter().filter(|r| r.is_completed()).cloned().collect();
    if let Some(agg) = aggregate(&completed) {
        for m in &agg.vars {
            let mut row = vec![m.var.name().to_string(), m.var.unit().to_string(), agg.runs.to_string()];
            for s in [&m.of_mean, &m.of_std, &m.of_max, &m.final_state] {
                row.extend(stats_cells(Some(s)));
            }
            w.write_record(&row)?;
        }
        let mut row = vec!["hor_percent".to_string(), "%".to_string(), agg.runs.to_string()];
        for _ in 0..3 {
            row.extend(stats_cells(None));
        }
        row.extend(stats_cells(agg.final_hor_percent.as_ref()));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Across-run mean and std of every variable at each series sample (completed runs).
pub fn write_timeseries(path: &Path, runs: &[RunResult]) -> io::Result<()> {
    let mut w = csv_file(path, "airnav-timeseries")?;
    let mut header = vec!["t".to_string(), "runs".to_string()];
    for v in Var::ALL {
        header.push(format!("{}_mean", v.name()));
        header.push(format!("{}_std", v.name()));
    }
    w.write_record(&header)?;
    let completed: Vec<RunResult> = runs.iter().filter(|r| r.is_completed()).cloned().collect();
    for p in aggregate_series(&completed) {
        let mut row = vec![num(p.t), p.runs.to_string()];
        for i in 0..Var::ALL.len() {
            row.push(num(p.mean[i]));
            row.push(num(p.std[i]));
        }
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn write_dump(path: &Path, schema: &str, table: &DumpTable) -> io::Result<()> {
    let mut w = csv_file(path, schema)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| num(x)))?;
    }
    finish(w)
}

/// Writes every output of one variant into `dir`, creating it when needed.
pub fn write_all(dir: &Path, effective_config: &str, runs: &[RunResult]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("effective_config.toml"), effective_config)?;
    write_runs(&dir.join("runs.csv"), runs)?;
    write_metrics(&dir.join("metrics.csv"), runs)?;
    write_aggregate(&dir.join("aggregate.csv"), runs)?;
    write_timeseries(&dir.join("timeseries.csv"), runs)?;
    let dumps = dir.join("runs");
    for r in runs {
        for (table, kind) in [(&r.truth_dump, "truth"), (&r.estimate_dump, "estimates")] {
            if let Some(t) = table {
                fs::create_dir_all(&dumps)?;
                write_dump(&dumps.join(format!("run_{:04}_{kind}.csv", r.run)), &format!("airnav-{kind}"), t)?;
            }
        }
    }
    Ok(())
}
