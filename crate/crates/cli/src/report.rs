//! Fits of scan CSV files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nvraman_core::fitting::fit_model;
use nvraman_core::{FitModel, FitResult};

use crate::error::CliError;

/// Points in the dense fitted curve.
pub const CURVE_POINTS: usize = 1001;

const POPULATION_COLUMNS: [&str; 4] = ["pop_g1", "pop_g2", "pop_e", "trace"];

#[derive(Clone, Debug, PartialEq)]
pub struct ScanTable {
    /// Name of the first column, e.g. `duration_us`.
    pub x_column: String,
    pub rows: Vec<[f64; 5]>,
}

impl ScanTable {
    pub fn column(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let idx = POPULATION_COLUMNS.iter().position(|c| *c == name)? + 1;
        Some(self.rows.iter().map(|r| (r[0], r[idx])).collect())
    }
}

/// Parses a scan CSV as written by `render_csv`.
pub fn parse_scan_csv(text: &str) -> Result<ScanTable, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::Schema("no header row".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != 5 || cols[1..] != POPULATION_COLUMNS || cols[0].is_empty() {
        return Err(CliError::Schema(format!(
            "expected header `<variable>,pop_g1,pop_g2,pop_e,trace`, got `{header}`"
        )));
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Schema(format!("line {}: expected 5 columns, got {}", n + 1, fields.len())));
        }
        let mut row = [0.0; 5];
        for (slot, field) in row.iter_mut().zip(&fields) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| CliError::Schema(format!("line {}: `{field}` is not a number", n + 1)))?;
        }
        rows.push(row);
    }
    Ok(ScanTable { x_column: cols[0].to_owned(), rows })
}

pub fn fit_table(table: &ScanTable, model: FitModel) -> Result<FitResult, CliError> {
    let curve = table.column("pop_g2").expect("pop_g2 is a schema column");
    fit_model(model, &curve).map_err(CliError::numerical(format!("{} fit", model.name())))
}

pub fn render_report(source: &str, table: &ScanTable, fit: &FitResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "source: {source}");
    let _ = writeln!(out, "model: {}", fit.model.name());
    let _ = writeln!(out, "data: pop_g2 vs {} ({} points)", table.x_column, table.rows.len());
    let _ = writeln!(out, "converged: {}", fit.converged);
    let _ = writeln!(out, "iterations: {}", fit.iterations);
    let _ = writeln!(out, "rms residual: {:.6e}", fit.residual_norm);
    for p in &fit.parameters {
        let unit = if p.unit.is_empty() { String::new() } else { format!(" {}", p.unit) };
        let _ = writeln!(out, "{:>12} = {:.6}{unit}", p.name, p.value);
    }
    out
}

/// Fitted model on [`CURVE_POINTS`] evenly spaced points over the data range.
pub fn render_curve(table: &ScanTable, fit: &FitResult) -> String {
    let lo = table.rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
    let hi = table.rows.iter().map(|r| r[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("{},pop_g2_fit\n", table.x_column);
    for k in 0..CURVE_POINTS {
        let x = lo + (hi - lo) * k as f64 / (CURVE_POINTS - 1) as f64;
        let _ = writeln!(out, "{x},{}", fit.evaluate(x));
    }
    out
}

pub struct FitOutputs {
    pub report: PathBuf,
    pub curve: PathBuf,
    pub text: String,
}

/// Fits `csv` and writes the report and fitted curve next to it (or to the
/// given paths).
pub fn emit_fit_report(
    csv: &Path,
    model: FitModel,
    report: Option<&Path>,
    curve: Option<&Path>,
) -> Result<FitOutputs, CliError> {
    let text = std::fs::read_to_string(csv).map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
    let table = parse_scan_csv(&text)?;
    let fit = fit_table(&table, model)?;
    let report = report.map_or_else(|| csv.with_extension("fit.txt"), Path::to_owned);
    let curve = curve.map_or_else(|| csv.with_extension("fit.csv"), Path::to_owned);
    let body = render_report(&csv.display().to_string(), &table, &fit);
    std::fs::write(&report, &body).map_err(|e| CliError::Io(format!("{}: {e}", report.display())))?;
    std::fs::write(&curve, render_curve(&table, &fit)).map_err(|e| CliError::Io(format!("{}: {e}", curve.display())))?;
    Ok(FitOutputs { report, curve, text: body })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_header_is_schema_error() {
        let text = "# x\ntime,a,b\n0,1,2\n";
        assert!(matches!(parse_scan_csv(text), Err(CliError::Schema(_))));
        assert!(matches!(parse_scan_csv("# only comments\n"), Err(CliError::Schema(_))));
    }

    #[test]
    fn bad_row_is_schema_error() {
        let text = "duration_us,pop_g1,pop_g2,pop_e,trace\n0,1,0,0\n";
        assert!(matches!(parse_scan_csv(text), Err(CliError::Schema(_))));
        let text = "duration_us,pop_g1,pop_g2,pop_e,trace\n0,1,x,0,1\n";
        assert!(matches!(parse_scan_csv(text), Err(CliError::Schema(_))));
    }

    #[test]
    fn fit_of_synthetic_table() {
        let rows: Vec<[f64; 5]> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.05;
                let g2 = 0.5 - 0.5 * (std::f64::consts::TAU * 0.7 * t).cos() * (-t / 20.0).exp();
                [t, 1.0 - g2, g2, 0.0, 1.0]
            })
            .collect();
        let table = ScanTable { x_column: "duration_us".into(), rows };
        let fit = fit_table(&table, FitModel::DampedCosine).unwrap();
        assert!((fit.frequency() - 0.7).abs() < 1e-6);
        let report = render_report("mem", &table, &fit);
        assert!(report.contains("frequency = 0.700000 MHz"), "{report}");
        let curve = render_curve(&table, &fit);
        assert_eq!(curve.lines().count(), CURVE_POINTS + 1);
    }
}
