//! Run configuration: a TOML file with `[physics]`, `[pulses]`,
//! `[ensemble]`, `[scan]` and `[output]` sections.
//!
//! Frequencies are ordinary frequencies in MHz (the one-photon detuning of
//! the period scan is in GHz), times are in microseconds. Conversion to the
//! angular units of the simulation happens in [`RunConfig::sim_config`].

use std::fmt;
use std::path::Path;

use nvraman_core::dynamics::{mhz_to_angular, NV_OPTICAL_RATE_MHZ, NV_SPIN_T2_US};
use nvraman_core::ensemble::{Ensemble, GaussianSpec, HyperfineConfig};
use nvraman_core::experiments::{SimConfig, StirapGeometry};
use nvraman_core::{EnvelopeShape, LambdaParams};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Rabi,
    Stirap,
    Ramsey,
    Cpt,
    Period,
    Fidelity,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Rabi,
        Experiment::Stirap,
        Experiment::Ramsey,
        Experiment::Cpt,
        Experiment::Period,
        Experiment::Fidelity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Rabi => "rabi",
            Experiment::Stirap => "stirap",
            Experiment::Ramsey => "ramsey",
            Experiment::Cpt => "cpt",
            Experiment::Period => "period",
            Experiment::Fidelity => "fidelity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "period-vs-detuning" => Some(Experiment::Period),
            _ => Self::ALL.into_iter().find(|e| e.name() == s),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Physics {
    pub delta_avg_mhz: f64,
    pub delta_two_photon_mhz: f64,
    pub omega_plus_mhz: f64,
    pub omega_minus_mhz: f64,
    pub gamma_repop_mhz: f64,
    pub gamma_opt_mhz: f64,
    /// Spin coherence time; the ground coherence decays at `1 / t2_us`.
    pub t2_us: f64,
    pub leak_rate_mhz: f64,
    /// `false` switches every decay channel off.
    pub decay: bool,
    pub dt_us: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pulses {
    pub pulse_width_us: f64,
    pub t_rise_us: f64,
    pub ramp: EnvelopeShape,
    pub omega_r_mhz: f64,
    pub duration_us: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HyperfineMode {
    Off,
    Random,
    Single(i32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSettings {
    pub delta_avg: bool,
    pub delta_avg_fwhm_mhz: f64,
    pub delta_avg_points: usize,
    pub delta_avg_span_sigmas: f64,
    pub two_photon: bool,
    pub two_photon_fwhm_mhz: f64,
    pub two_photon_points: usize,
    pub two_photon_span_sigmas: f64,
    pub hyperfine: HyperfineMode,
    pub dip_spacing_mhz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    Values(Vec<f64>),
    Linspace { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Linspace { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|k| start + (stop - start) * k as f64 / (*n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSettings {
    /// Scan variable grid; unused by the period scan.
    pub grid: Option<Grid>,
    pub delta_ghz: Vec<f64>,
    pub intensity_scales: Vec<f64>,
    pub participating_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub physics: Physics,
    pub pulses: Pulses,
    pub ensemble: EnsembleSettings,
    pub scan: ScanSettings,
    pub output: Option<String>,
}

const SECTIONS: [(&str, &[&str]); 6] = [
    (
        "physics",
        &[
            "delta_avg_mhz",
            "delta_two_photon_mhz",
            "omega_mhz",
            "omega_plus_mhz",
            "omega_minus_mhz",
            "gamma_repop_mhz",
            "gamma_opt_mhz",
            "t2_us",
            "leak_rate_mhz",
            "decay",
            "dt_us",
        ],
    ),
    ("pulses", &["pulse_width_us", "t_rise_us", "ramp", "omega_r_mhz", "duration_us"]),
    (
        "ensemble",
        &[
            "delta_avg",
            "delta_avg_fwhm_mhz",
            "delta_avg_points",
            "delta_avg_span_sigmas",
            "two_photon",
            "two_photon_fwhm_mhz",
            "two_photon_points",
            "two_photon_span_sigmas",
            "hyperfine",
            "m_n",
            "dip_spacing_mhz",
        ],
    ),
    ("scan", &["values", "start", "stop", "points", "delta_ghz", "intensity_scales", "participating_fraction"]),
    ("output", &["path", "format"]),
    // written into sidecar files; accepted so a sidecar can be re-run
    ("artifact", &["name", "version"]),
];

/// Parses TOML text into a table, mapping syntax errors to line numbers.
pub fn parse_table(text: &str) -> Result<Table, CliError> {
    if text.trim().is_empty() {
        return Err(CliError::Parse { line: 1, message: "empty configuration".into() });
    }
    text.parse::<Table>().map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        CliError::Parse { line, message: e.message().to_owned() }
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    RunConfig::from_table(&parse_table(&text)?, None)
}

/// Applies `section.key=value` overrides. The value is read as a TOML
/// value; anything that does not parse is taken as a string.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Validation { key: item.clone(), message: "expected key=value".into() })?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_owned()));
        match key.split_once('.') {
            None => {
                table.insert(key.to_owned(), value);
            }
            Some((section, name)) => {
                let entry = table.entry(section.to_owned()).or_insert_with(|| Value::Table(Table::new()));
                let Value::Table(t) = entry else {
                    return Err(CliError::Validation { key: section.to_owned(), message: "not a section".into() });
                };
                t.insert(name.to_owned(), value);
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    section: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Reader<'a> {
    fn key(&self, name: &str) -> String {
        format!("{}.{name}", self.section)
    }

    fn invalid(&self, name: &str, message: impl Into<String>) -> CliError {
        CliError::Validation { key: self.key(name), message: message.into() }
    }

    fn raw(&self, name: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(name))
    }

    fn f64_opt(&self, name: &str) -> Result<Option<f64>, CliError> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(self.invalid(name, format!("expected a number, got {other}"))),
        }
    }

    fn f64_or(&self, name: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64_opt(name)?.unwrap_or(default))
    }

    fn required(&self, name: &str, experiment: Experiment) -> Result<f64, CliError> {
        self.f64_opt(name)?
            .ok_or_else(|| self.invalid(name, format!("required for the {experiment} experiment")))
    }

    fn usize_or(&self, name: &str, default: usize) -> Result<usize, CliError> {
        match self.raw(name) {
            None => Ok(default),
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(other) => Err(self.invalid(name, format!("expected a nonnegative integer, got {other}"))),
        }
    }

    fn bool_or(&self, name: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(name) {
            None => Ok(default),
            Some(Value::Boolean(v)) => Ok(*v),
            Some(other) => Err(self.invalid(name, format!("expected true or false, got {other}"))),
        }
    }

    fn str_opt(&self, name: &str) -> Result<Option<&'a str>, CliError> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(self.invalid(name, format!("expected a string, got {other}"))),
        }
    }

    fn list_opt(&self, name: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.raw(name) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(x) => Ok(*x as f64),
                    other => Err(self.invalid(name, format!("expected numbers, got {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(other) => Err(self.invalid(name, format!("expected a list of numbers, got {other}"))),
        }
    }
}

fn check_keys(table: &Table) -> Result<(), CliError> {
    for (key, value) in table {
        if key == "experiment" {
            continue;
        }
        let Some((_, allowed)) = SECTIONS.iter().find(|(s, _)| s == key) else {
            return Err(CliError::Validation { key: key.clone(), message: "unknown key".into() });
        };
        let Value::Table(section) = value else {
            return Err(CliError::Validation { key: key.clone(), message: "expected a section".into() });
        };
        for name in section.keys() {
            if !allowed.contains(&name.as_str()) {
                return Err(CliError::Validation { key: format!("{key}.{name}"), message: "unknown key".into() });
            }
        }
    }
    Ok(())
}

fn positive(r: &Reader<'_>, name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(r.invalid(name, format!("must be > 0, got {v}")))
    }
}

fn nonnegative(r: &Reader<'_>, name: &str, v: f64) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(r.invalid(name, format!("must be >= 0, got {v}")))
    }
}

impl RunConfig {
    /// Builds and validates a configuration. `experiment` (from the command
    /// line) must agree with the file's `experiment` key when both are set.
    pub fn from_table(table: &Table, experiment: Option<Experiment>) -> Result<Self, CliError> {
        check_keys(table)?;
        let from_file = match table.get("experiment") {
            None => None,
            Some(Value::String(s)) => Some(Experiment::from_name(s).ok_or_else(|| CliError::Validation {
                key: "experiment".into(),
                message: format!("unknown experiment {s:?}"),
            })?),
            Some(other) => {
                return Err(CliError::Validation { key: "experiment".into(), message: format!("expected a string, got {other}") })
            }
        };
        let experiment = match (experiment, from_file) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Validation {
                    key: "experiment".into(),
                    message: format!("configuration is for {b}, not {a}"),
                })
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => {
                return Err(CliError::Validation { key: "experiment".into(), message: "no experiment given".into() })
            }
        };
        let section = |name: &'static str| Reader {
            section: name,
            table: match table.get(name) {
                Some(Value::Table(t)) => Some(t),
                _ => None,
            },
        };
        let physics = read_physics(&section("physics"), experiment)?;
        let pulses = read_pulses(&section("pulses"), experiment)?;
        let ensemble = read_ensemble(&section("ensemble"))?;
        let scan = read_scan(&section("scan"), experiment)?;
        let out = section("output");
        if let Some(format) = out.str_opt("format")? {
            if format != "csv" {
                return Err(out.invalid("format", format!("only csv is supported, got {format:?}")));
            }
        }
        let output = out.str_opt("path")?.map(str::to_owned);
        let cfg = RunConfig { experiment, physics, pulses, ensemble, scan, output };
        cfg.sim_config()?;
        Ok(cfg)
    }

    /// Simulation settings in angular units.
    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let p = &self.physics;
        let mut params = LambdaParams {
            delta_avg: mhz_to_angular(p.delta_avg_mhz),
            delta_two_photon: mhz_to_angular(p.delta_two_photon_mhz),
            gamma_repop: mhz_to_angular(p.gamma_repop_mhz),
            gamma_opt: mhz_to_angular(p.gamma_opt_mhz),
            gamma_spin: 1.0 / p.t2_us,
            leak_rate: mhz_to_angular(p.leak_rate_mhz),
        };
        if !p.decay {
            params = params.without_decay();
        }
        let e = &self.ensemble;
        let ensemble = Ensemble {
            delta_avg: e
                .delta_avg
                .then(|| GaussianSpec::new(e.delta_avg_fwhm_mhz, e.delta_avg_points, e.delta_avg_span_sigmas)),
            two_photon: e
                .two_photon
                .then(|| GaussianSpec::new(e.two_photon_fwhm_mhz, e.two_photon_points, e.two_photon_span_sigmas)),
            hyperfine: match e.hyperfine {
                HyperfineMode::Off => None,
                HyperfineMode::Random => Some(HyperfineConfig::random_orientation()),
                HyperfineMode::Single(m) => Some(HyperfineConfig::single(m).map_err(|err| CliError::Validation {
                    key: "ensemble.m_n".into(),
                    message: err.to_string(),
                })?),
            }
            .map(|h| HyperfineConfig { dip_spacing: e.dip_spacing_mhz, ..h }),
        };
        let cfg = SimConfig {
            params,
            peak_plus: mhz_to_angular(p.omega_plus_mhz),
            peak_minus: mhz_to_angular(p.omega_minus_mhz),
            dt: p.dt_us,
            ensemble,
        };
        cfg.validate().map_err(|err| CliError::Validation { key: "configuration".into(), message: err.to_string() })?;
        Ok(cfg)
    }

    pub fn stirap_geometry(&self) -> StirapGeometry {
        StirapGeometry { width: self.pulses.pulse_width_us, t_rise: self.pulses.t_rise_us, ramp: self.pulses.ramp }
    }

    /// Participating fraction for the fidelity estimate: configured, or
    /// the weight of one manifold when the random orientation is summed.
    pub fn participating_fraction(&self) -> f64 {
        self.scan.participating_fraction.unwrap_or(match self.ensemble.hyperfine {
            HyperfineMode::Random => 1.0 / 3.0,
            _ => 1.0,
        })
    }

    /// Fully resolved configuration, every key explicit. Feeding it back
    /// through [`parse_table`] and [`RunConfig::from_table`] reproduces
    /// `self`.
    pub fn to_table(&self) -> Table {
        let mut root = Table::new();
        root.insert("experiment".into(), Value::String(self.experiment.name().into()));

        let p = &self.physics;
        let mut t = Table::new();
        t.insert("delta_avg_mhz".into(), p.delta_avg_mhz.into());
        t.insert("delta_two_photon_mhz".into(), p.delta_two_photon_mhz.into());
        t.insert("omega_plus_mhz".into(), p.omega_plus_mhz.into());
        t.insert("omega_minus_mhz".into(), p.omega_minus_mhz.into());
        t.insert("gamma_repop_mhz".into(), p.gamma_repop_mhz.into());
        t.insert("gamma_opt_mhz".into(), p.gamma_opt_mhz.into());
        t.insert("t2_us".into(), p.t2_us.into());
        t.insert("leak_rate_mhz".into(), p.leak_rate_mhz.into());
        t.insert("decay".into(), p.decay.into());
        if let Some(dt) = p.dt_us {
            t.insert("dt_us".into(), dt.into());
        }
        root.insert("physics".into(), t.into());

        let q = &self.pulses;
        let mut t = Table::new();
        t.insert("pulse_width_us".into(), q.pulse_width_us.into());
        t.insert("t_rise_us".into(), q.t_rise_us.into());
        t.insert("ramp".into(), q.ramp.name().into());
        t.insert("omega_r_mhz".into(), q.omega_r_mhz.into());
        t.insert("duration_us".into(), q.duration_us.into());
        root.insert("pulses".into(), t.into());

        let e = &self.ensemble;
        let mut t = Table::new();
        t.insert("delta_avg".into(), e.delta_avg.into());
        t.insert("delta_avg_fwhm_mhz".into(), e.delta_avg_fwhm_mhz.into());
        t.insert("delta_avg_points".into(), (e.delta_avg_points as i64).into());
        t.insert("delta_avg_span_sigmas".into(), e.delta_avg_span_sigmas.into());
        t.insert("two_photon".into(), e.two_photon.into());
        t.insert("two_photon_fwhm_mhz".into(), e.two_photon_fwhm_mhz.into());
        t.insert("two_photon_points".into(), (e.two_photon_points as i64).into());
        t.insert("two_photon_span_sigmas".into(), e.two_photon_span_sigmas.into());
        let (mode, m_n) = match e.hyperfine {
            HyperfineMode::Off => ("off", None),
            HyperfineMode::Random => ("random", None),
            HyperfineMode::Single(m) => ("single", Some(m)),
        };
        t.insert("hyperfine".into(), mode.into());
        if let Some(m) = m_n {
            t.insert("m_n".into(), i64::from(m).into());
        }
        t.insert("dip_spacing_mhz".into(), e.dip_spacing_mhz.into());
        root.insert("ensemble".into(), t.into());

        let s = &self.scan;
        let mut t = Table::new();
        match &s.grid {
            Some(Grid::Values(v)) => {
                t.insert("values".into(), float_array(v));
            }
            Some(Grid::Linspace { start, stop, points }) => {
                t.insert("start".into(), (*start).into());
                t.insert("stop".into(), (*stop).into());
                t.insert("points".into(), (*points as i64).into());
            }
            None => {}
        }
        if self.experiment == Experiment::Period {
            t.insert("delta_ghz".into(), float_array(&s.delta_ghz));
            t.insert("intensity_scales".into(), float_array(&s.intensity_scales));
        }
        if let Some(f) = s.participating_fraction {
            t.insert("participating_fraction".into(), f.into());
        }
        root.insert("scan".into(), t.into());

        if let Some(path) = &self.output {
            let mut t = Table::new();
            t.insert("path".into(), path.as_str().into());
            t.insert("format".into(), "csv".into());
            root.insert("output".into(), t.into());
        }
        root
    }

    /// `section.key = value` lines of the resolved configuration, without
    /// the output location.
    pub fn flat_entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (key, value) in self.to_table() {
            match value {
                Value::Table(section) if key != "output" => {
                    for (name, v) in section {
                        out.push((format!("{key}.{name}"), v.to_string()));
                    }
                }
                Value::Table(_) => {}
                v => out.push((key, v.to_string())),
            }
        }
        out
    }
}

fn float_array(values: &[f64]) -> Value {
    Value::Array(values.iter().map(|v| Value::Float(*v)).collect())
}

fn read_physics(r: &Reader<'_>, experiment: Experiment) -> Result<Physics, CliError> {
    let delta_avg_mhz = match experiment {
        // the period scan sets the detuning from its own grid
        Experiment::Period => r.f64_or("delta_avg_mhz", 1500.0)?,
        _ => r.required("delta_avg_mhz", experiment)?,
    };
    let common = r.f64_opt("omega_mhz")?;
    let needs_fields = experiment != Experiment::Ramsey;
    let omega = |name: &str| -> Result<f64, CliError> {
        let v = match (r.f64_opt(name)?, common) {
            (Some(v), _) | (None, Some(v)) => v,
            (None, None) if needs_fields => {
                return Err(r.invalid(name, format!("required (or physics.omega_mhz) for the {experiment} experiment")))
            }
            (None, None) => 0.0,
        };
        nonnegative(r, name, v)
    };
    let dt_us = match r.f64_opt("dt_us")? {
        Some(v) => Some(positive(r, "dt_us", v)?),
        None => None,
    };
    let physics = Physics {
        delta_avg_mhz,
        delta_two_photon_mhz: r.f64_or("delta_two_photon_mhz", 0.0)?,
        omega_plus_mhz: omega("omega_plus_mhz")?,
        omega_minus_mhz: omega("omega_minus_mhz")?,
        gamma_repop_mhz: nonnegative(r, "gamma_repop_mhz", r.f64_or("gamma_repop_mhz", NV_OPTICAL_RATE_MHZ)?)?,
        gamma_opt_mhz: nonnegative(r, "gamma_opt_mhz", r.f64_or("gamma_opt_mhz", NV_OPTICAL_RATE_MHZ)?)?,
        t2_us: positive(r, "t2_us", r.f64_or("t2_us", NV_SPIN_T2_US)?)?,
        leak_rate_mhz: nonnegative(r, "leak_rate_mhz", r.f64_or("leak_rate_mhz", 0.0)?)?,
        decay: r.bool_or("decay", true)?,
        dt_us,
    };
    if !physics.delta_avg_mhz.is_finite() || !physics.delta_two_photon_mhz.is_finite() {
        return Err(r.invalid("delta_avg_mhz", "detunings must be finite"));
    }
    Ok(physics)
}

fn read_pulses(r: &Reader<'_>, experiment: Experiment) -> Result<Pulses, CliError> {
    let t_rise_us = match experiment {
        Experiment::Stirap => r.required("t_rise_us", experiment)?,
        _ => r.f64_or("t_rise_us", 0.0)?,
    };
    let omega_r_mhz = match experiment {
        Experiment::Ramsey => positive(r, "omega_r_mhz", r.required("omega_r_mhz", experiment)?)?,
        _ => r.f64_or("omega_r_mhz", 2.5)?,
    };
    let ramp = match r.str_opt("ramp")? {
        None => EnvelopeShape::Trapezoid,
        Some(s) => EnvelopeShape::from_name(s)
            .ok_or_else(|| r.invalid("ramp", format!("expected square, trapezoid or sin2_ramp, got {s:?}")))?,
    };
    let pulses = Pulses {
        pulse_width_us: positive(r, "pulse_width_us", r.f64_or("pulse_width_us", 1.5)?)?,
        t_rise_us: nonnegative(r, "t_rise_us", t_rise_us)?,
        ramp,
        omega_r_mhz,
        duration_us: nonnegative(r, "duration_us", r.f64_or("duration_us", 10.0)?)?,
    };
    if pulses.t_rise_us > pulses.pulse_width_us {
        return Err(r.invalid("t_rise_us", "rise time longer than the pulse width"));
    }
    Ok(pulses)
}

fn read_ensemble(r: &Reader<'_>) -> Result<EnsembleSettings, CliError> {
    let odd = |name: &str, v: usize| -> Result<usize, CliError> {
        if v % 2 == 1 {
            Ok(v)
        } else {
            Err(r.invalid(name, format!("must be odd, got {v}")))
        }
    };
    let hyperfine = match r.str_opt("hyperfine")?.unwrap_or("off") {
        "off" => {
            if r.raw("m_n").is_some() {
                return Err(r.invalid("m_n", "only used with hyperfine = \"single\""));
            }
            HyperfineMode::Off
        }
        "random" => HyperfineMode::Random,
        "single" => {
            let m = match r.raw("m_n") {
                Some(Value::Integer(m)) if (-1..=1).contains(m) => *m as i32,
                Some(other) => return Err(r.invalid("m_n", format!("expected -1, 0 or 1, got {other}"))),
                None => return Err(r.invalid("m_n", "required with hyperfine = \"single\"")),
            };
            HyperfineMode::Single(m)
        }
        other => return Err(r.invalid("hyperfine", format!("expected off, random or single, got {other:?}"))),
    };
    Ok(EnsembleSettings {
        delta_avg: r.bool_or("delta_avg", false)?,
        delta_avg_fwhm_mhz: nonnegative(r, "delta_avg_fwhm_mhz", r.f64_or("delta_avg_fwhm_mhz", 500.0)?)?,
        delta_avg_points: odd("delta_avg_points", r.usize_or("delta_avg_points", 21)?)?,
        delta_avg_span_sigmas: positive(r, "delta_avg_span_sigmas", r.f64_or("delta_avg_span_sigmas", 3.0)?)?,
        two_photon: r.bool_or("two_photon", false)?,
        two_photon_fwhm_mhz: nonnegative(r, "two_photon_fwhm_mhz", r.f64_or("two_photon_fwhm_mhz", 1.0)?)?,
        two_photon_points: odd("two_photon_points", r.usize_or("two_photon_points", 41)?)?,
        two_photon_span_sigmas: positive(r, "two_photon_span_sigmas", r.f64_or("two_photon_span_sigmas", 4.0)?)?,
        hyperfine,
        dip_spacing_mhz: positive(r, "dip_spacing_mhz", r.f64_or("dip_spacing_mhz", 4.4)?)?,
    })
}

fn read_scan(r: &Reader<'_>, experiment: Experiment) -> Result<ScanSettings, CliError> {
    let values = r.list_opt("values")?;
    let start = r.f64_opt("start")?;
    let stop = r.f64_opt("stop")?;
    let points = match r.raw("points") {
        None => None,
        Some(_) => Some(r.usize_or("points", 0)?),
    };
    let grid = match (values, start, stop, points) {
        (Some(v), None, None, None) => Some(Grid::Values(v)),
        (None, Some(start), Some(stop), Some(points)) => {
            if points == 0 {
                return Err(r.invalid("points", "must be >= 1"));
            }
            Some(Grid::Linspace { start, stop, points })
        }
        (None, None, None, None) => None,
        (Some(_), ..) => return Err(r.invalid("values", "give either values or start/stop/points, not both")),
        (None, ..) => return Err(r.invalid("points", "start, stop and points must be given together")),
    };
    if experiment != Experiment::Period && grid.is_none() {
        return Err(r.invalid("values", format!("a scan grid (values or start/stop/points) is required for the {experiment} experiment")));
    }
    let (delta_ghz, intensity_scales) = if experiment == Experiment::Period {
        let d = r.list_opt("delta_ghz")?.ok_or_else(|| r.invalid("delta_ghz", "required for the period experiment"))?;
        (d, r.list_opt("intensity_scales")?.unwrap_or_else(|| vec![1.0]))
    } else {
        (Vec::new(), Vec::new())
    };
    let participating_fraction = r.f64_opt("participating_fraction")?;
    if let Some(f) = participating_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(r.invalid("participating_fraction", format!("must lie in (0, 1], got {f}")));
        }
    }
    Ok(ScanSettings { grid, delta_ghz, intensity_scales, participating_fraction })
}
