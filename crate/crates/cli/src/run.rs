//! Experiment orchestration and file output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nvraman_core::dynamics::mhz_to_angular;
use nvraman_core::experiments::{
    cpt_scan, estimate_fidelity, period_vs_detuning, rabi_scan, ramsey_scan, stirap_scan, PeriodRow,
};
use nvraman_core::ScanResult;
use toml::{Table, Value};

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutput {
    Scan { scan: ScanResult, fidelity: Option<f64> },
    Period(Vec<PeriodRow>),
}

/// Runs the configured experiment. With `threads` set, ensemble members
/// are evaluated on a pool of that size; results do not depend on it.
pub fn run(cfg: &RunConfig, threads: Option<usize>) -> Result<RunOutput, CliError> {
    match threads {
        None => run_here(cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation { key: "threads".into(), message: e.to_string() })?;
            pool.install(|| run_here(cfg))
        }
    }
}

fn run_here(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let sim = cfg.sim_config()?;
    let grid = || cfg.scan.grid.as_ref().map(|g| g.values()).unwrap_or_default();
    let stage = cfg.experiment.name();
    log::info!("running {stage} with {} ensemble members", sim.ensemble.size());
    let scan = match cfg.experiment {
        Experiment::Rabi => rabi_scan(&grid(), &sim),
        Experiment::Stirap => stirap_scan(&grid(), &cfg.stirap_geometry(), &sim),
        Experiment::Ramsey => ramsey_scan(&grid(), mhz_to_angular(cfg.pulses.omega_r_mhz), &sim),
        Experiment::Cpt => cpt_scan(&grid(), cfg.pulses.duration_us, &sim),
        Experiment::Fidelity => {
            let scan = rabi_scan(&grid(), &sim).map_err(CliError::numerical("fidelity scan"))?;
            let fidelity = estimate_fidelity(&scan, cfg.participating_fraction())
                .map_err(CliError::numerical("fidelity estimate"))?;
            return Ok(RunOutput::Scan { scan, fidelity: Some(fidelity) });
        }
        Experiment::Period => {
            let rows = period_vs_detuning(&cfg.scan.delta_ghz, &cfg.scan.intensity_scales, &sim)
                .map_err(CliError::numerical("period scan"))?;
            return Ok(RunOutput::Period(rows));
        }
    }
    .map_err(CliError::numerical(format!("{stage} scan")))?;
    Ok(RunOutput::Scan { scan, fidelity: None })
}

fn preamble(cfg: &RunConfig) -> String {
    let mut out = format!("# nvraman {VERSION}\n");
    for (key, value) in cfg.flat_entries() {
        let _ = writeln!(out, "# {key} = {value}");
    }
    out
}

/// CSV text for a run: `#` preamble with the resolved configuration, a
/// header row, then one row per scan point.
pub fn render_csv(cfg: &RunConfig, output: &RunOutput) -> String {
    let mut out = preamble(cfg);
    match output {
        RunOutput::Scan { scan, fidelity } => {
            if let Some(f) = fidelity {
                let _ = writeln!(out, "# fidelity = {f}");
            }
            let _ = writeln!(out, "{},pop_g1,pop_g2,pop_e,trace", scan.scan_variable.column());
            for p in &scan.points {
                let _ = writeln!(out, "{},{},{},{},{}", p.x, p.pop_g1, p.pop_g2, p.pop_e, p.trace);
            }
        }
        RunOutput::Period(rows) => {
            out.push_str("delta_ghz,intensity_scale,period_us,predicted_period_us\n");
            for r in rows {
                let _ = writeln!(out, "{},{},{},{}", r.delta_ghz, r.intensity_scale, r.period, r.predicted_period);
            }
        }
    }
    out
}

/// Resolved configuration plus artifact version; valid input for a rerun.
pub fn render_sidecar(cfg: &RunConfig) -> String {
    let mut table = cfg.to_table();
    let mut artifact = Table::new();
    artifact.insert("name".into(), Value::String("nvraman".into()));
    artifact.insert("version".into(), Value::String(VERSION.into()));
    table.insert("artifact".into(), Value::Table(artifact));
    toml::to_string(&table).expect("configuration tables always serialize")
}

/// `results.csv` -> `results.meta.toml`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

pub fn default_output(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(format!("{}.csv", cfg.experiment.name()))
}

pub struct Written {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

pub fn write_outputs(cfg: &RunConfig, output: &RunOutput, csv: &Path) -> Result<Written, CliError> {
    let sidecar = sidecar_path(csv);
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(csv, render_csv(cfg, output)).map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
    std::fs::write(&sidecar, render_sidecar(cfg)).map_err(|e| CliError::Io(format!("{}: {e}", sidecar.display())))?;
    Ok(Written { csv: csv.to_owned(), sidecar })
}
