//! Run configuration: a TOML document layered over the built-in defaults and
//! resolved into a [`SimConfig`] per algorithm variant.
//!
//! Every section is optional and partial tables are merged key by key, so an
//! empty file yields the defaults. Unknown keys and out-of-range values are
//! reported with their dotted key path.

use serde::{Deserialize, Serialize};

use crate::altnav::{AlgoVariant, Attitude, Horizontal, Vertical};
use crate::atmo::AtmoConstants;
use crate::env::{FieldConfig, TurbulenceParams};
use crate::error::ConfigError;
use crate::geo::EarthConstants;
use crate::harness::{DumpOptions, SimConfig};
use crate::nav::NavConfig;
use crate::sensors::{GnssParams, Grade, SensorConfig};
use crate::truth::{ScenarioKind, ScenarioRanges};

/// Which variant axis a sweep walks through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "hor")]
    Horizontal,
    #[serde(rename = "vert")]
    Vertical,
    #[serde(rename = "att")]
    Attitude,
    /// The base variant plus every single-axis alternative.
    #[serde(rename = "all")]
    All,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [SweepAxis::Horizontal, SweepAxis::Vertical, SweepAxis::Attitude, SweepAxis::All];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Horizontal => "hor",
            SweepAxis::Vertical => "vert",
            SweepAxis::Attitude => "att",
            SweepAxis::All => "all",
        }
    }

    /// Variants visited from `base`, without duplicates and in a fixed order.
    pub fn variants(self, base: AlgoVariant) -> Vec<AlgoVariant> {
        let hor = Horizontal::ALL.iter().map(|&h| AlgoVariant { horizontal: h, ..base });
        let vert = Vertical::ALL.iter().map(|&v| AlgoVariant { vertical: v, ..base });
        let att = Attitude::ALL.iter().map(|&a| AlgoVariant { attitude: a, ..base });
        let mut out: Vec<AlgoVariant> = match self {
            SweepAxis::Horizontal => hor.collect(),
            SweepAxis::Vertical => vert.collect(),
            SweepAxis::Attitude => att.collect(),
            SweepAxis::All => std::iter::once(base).chain(hor).chain(vert).chain(att).collect(),
        };
        let mut seen = Vec::new();
        out.retain(|v| {
            let fresh = !seen.contains(v);
            seen.push(*v);
            fresh
        });
        out
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown sweep axis '{s}' (expected hor, vert, att or all)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Scenario number, 1 or 2.
    pub scenario: u8,
    pub runs: u64,
    pub seed: u64,
    pub dt: f64,
    /// Defaults to the scenario length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub t_gnss: f64,
    pub cold_start: bool,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { scenario: 2, runs: 10, seed: 1, dt: 0.01, t_end: None, t_gnss: 100.0, cold_start: false, threads: 0, sweep: None }
    }
}

impl RunSection {
    pub fn kind(&self) -> Result<ScenarioKind, ConfigError> {
        match self.scenario {
            1 => Ok(ScenarioKind::One),
            2 => Ok(ScenarioKind::Two),
            n => Err(ConfigError::invalid("run.scenario", format!("must be 1 or 2 (got {n})"))),
        }
    }
}

/// Named sensor-grade presets plus the parameters shared by all grades.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    pub gyr: Grade,
    pub acc: Grade,
    pub mag: Grade,
    pub tas: Grade,
    pub air: Grade,
    /// Bias-drift band of the inertial sensors, in multiples of σu.
    pub band: f64,
    pub misalignment_deg: f64,
    pub gnss: GnssParams,
}

impl Default for SensorSection {
    fn default() -> Self {
        let base = SensorConfig::baseline();
        Self {
            gyr: Grade::Baseline,
            acc: Grade::Baseline,
            mag: Grade::Baseline,
            tas: Grade::Baseline,
            air: Grade::Baseline,
            band: base.gyr.band,
            misalignment_deg: base.misalignment_deg,
            gnss: base.gnss,
        }
    }
}

impl SensorSection {
    pub fn resolve(&self) -> Result<SensorConfig, ConfigError> {
        if !(self.band.is_finite() && self.band > 0.0) {
            return Err(ConfigError::invalid("sensors.band", format!("must be positive (got {})", self.band)));
        }
        if !(self.misalignment_deg.is_finite() && self.misalignment_deg >= 0.0) {
            return Err(ConfigError::invalid("sensors.misalignment_deg", "must be non-negative"));
        }
        self.gnss.validate().map_err(|m| ConfigError::invalid("sensors.gnss", m))?;
        let mut s = SensorConfig::preset(self.gyr, self.acc, self.mag, self.tas, self.air, self.band)?;
        s.misalignment_deg = self.misalignment_deg;
        s.gnss = self.gnss;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub dump_truth: bool,
    pub dump_estimates: bool,
    /// Steps between rows of the per-run dumps.
    pub dump_every: u32,
    /// Interval of the aggregated time series [s].
    pub series_every: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), dump_truth: false, dump_estimates: false, dump_every: 10, series_every: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub sensors: SensorSection,
    pub variant: AlgoVariant,
    pub nav: NavConfig,
    pub scenario: ScenarioRanges,
    pub turbulence: TurbulenceParams,
    pub field: FieldConfig,
    pub earth: EarthConstants,
    pub atmo: AtmoConstants,
    pub output: OutputSection,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses a TOML document over the defaults and validates the result.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|source| ConfigError::Parse { path: "config".into(), source })?;
        let mut merged = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        merge(&mut merged, user);
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(merged)).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::invalid(if path == "." { "config".to_string() } else { path }, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::invalid(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn kind(&self) -> Result<ScenarioKind, ConfigError> {
        self.run.kind()
    }

    pub fn t_end(&self) -> Result<f64, ConfigError> {
        Ok(self.run.t_end.unwrap_or(self.kind()?.default_t_end()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        self.kind()?;
        if r.runs < 1 {
            return Err(ConfigError::invalid("run.runs", "at least one run"));
        }
        if !(r.dt.is_finite() && r.dt > 0.0 && r.dt <= 0.1) {
            return Err(ConfigError::invalid("run.dt", format!("must be in (0, 0.1] s (got {})", r.dt)));
        }
        let t_end = self.t_end()?;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(ConfigError::invalid("run.t_end", "must be positive"));
        }
        if !(r.t_gnss.is_finite() && r.t_gnss >= 0.0 && r.t_gnss < t_end) {
            return Err(ConfigError::invalid("run.t_gnss", format!("must satisfy 0 <= t_gnss < t_end = {t_end} (got {})", r.t_gnss)));
        }
        self.sensors.resolve()?;
        self.nav.validate("nav")?;
        self.scenario.validate()?;
        self.turbulence.validate().map_err(|m| ConfigError::invalid("turbulence", m))?;
        self.field.validate().map_err(|m| ConfigError::invalid("field", m))?;
        self.earth.validate().map_err(|m| ConfigError::invalid("earth", m))?;
        self.atmo.validate().map_err(|m| ConfigError::invalid("atmo", m))?;
        let o = &self.output;
        if o.dump_every < 1 {
            return Err(ConfigError::invalid("output.dump_every", "at least one step"));
        }
        if !(o.series_every.is_finite() && o.series_every >= r.dt) {
            return Err(ConfigError::invalid("output.series_every", "must be at least run.dt"));
        }
        Ok(())
    }

    /// Copy with every defaulted value spelled out, as written to `effective_config.toml`.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        c.run.t_end = Some(self.t_end()?);
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Variants to execute: the sweep when configured, else the single variant.
    pub fn variants(&self) -> Vec<AlgoVariant> {
        match self.run.sweep {
            Some(axis) => axis.variants(self.variant),
            None => vec![self.variant],
        }
    }

    pub fn sim_config(&self, variant: AlgoVariant) -> Result<SimConfig, ConfigError> {
        self.validate()?;
        let mut s = SimConfig::new(self.kind()?);
        s.dt = self.run.dt;
        s.t_end = self.t_end()?;
        s.t_gnss = self.run.t_gnss;
        s.ranges = self.scenario.clone();
        s.turbulence = self.turbulence;
        s.field = self.field;
        s.earth = self.earth;
        s.atmo = self.atmo;
        s.sensors = self.sensors.resolve()?;
        s.nav = self.nav;
        s.variant = variant;
        s.cold_start = self.run.cold_start;
        s.series_every = self.output.series_every;
        s.dump = DumpOptions { truth: self.output.dump_truth, estimates: self.output.dump_estimates, every: self.output.dump_every };
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.t_end().unwrap(), 500.0);
        let s = c.sim_config(c.variant).unwrap();
        assert_eq!(s.sensors, SensorConfig::baseline());
        assert_eq!(s.nav, NavConfig::default());
    }

    #[test]
    fn partial_tables_merge_over_defaults() {
        let c = RunConfig::from_toml("[nav.position.wind]\nsigma = 2.0\n[run]\nscenario = 1\n").unwrap();
        assert_eq!(c.nav.position.wind.sigma, 2.0);
        assert_eq!(c.nav.position.wind.q, NavConfig::default().position.wind.q);
        assert_eq!(c.t_end().unwrap(), 3800.0);
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let e = RunConfig::from_toml("[nav.position.wind]\nsigmaa = 2.0\n").unwrap_err().to_string();
        assert!(e.contains("nav.position.wind"), "{e}");
        assert!(e.contains("sigmaa"), "{e}");
        let e = RunConfig::from_toml("[sensors]\ngyr = \"superb\"\n").unwrap_err().to_string();
        assert!(e.starts_with("sensors.gyr"), "{e}");
    }

    #[test]
    fn range_violations_report_their_path() {
        for (doc, path) in [
            ("[run]\nruns = 0", "run.runs"),
            ("[run]\ndt = -1.0", "run.dt"),
            ("[run]\nt_gnss = 600.0", "run.t_gnss"),
            ("[run]\nscenario = 3", "run.scenario"),
            ("[turbulence]\ntau = 0.0", "turbulence"),
            ("[scenario]\nvtas = [30.0, 20.0]", "scenario.vtas"),
            ("[nav.attitude]\naccel_sigma = 0.0", "nav.attitude.accel_sigma"),
        ] {
            let e = RunConfig::from_toml(doc).unwrap_err().to_string();
            assert!(e.starts_with(path), "{doc}: {e}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::from_toml("[run]\nscenario = 1\nsweep = \"att\"\n[variant]\nhorizontal = \"wind-integration\"\n").unwrap();
        let r = c.resolved().unwrap();
        let text = r.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), r);
    }

    #[test]
    fn sweeps_enumerate_distinct_variants() {
        let base = AlgoVariant::default();
        assert_eq!(SweepAxis::Attitude.variants(base).len(), 3);
        let all = SweepAxis::All.variants(base);
        assert_eq!(all.len(), 7);
        assert_eq!(all[0], base);
        let labels: std::collections::HashSet<String> = all.iter().map(|v| v.label()).collect();
        assert_eq!(labels.len(), 7);
    }
}
