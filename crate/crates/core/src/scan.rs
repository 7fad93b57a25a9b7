//! Sampled experiment curves.

use crate::density::DensityMatrix;
use crate::error::{Error, Result};

/// Slack allowed on population bounds.
pub const POPULATION_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanVariable {
    pub name: String,
    pub unit: String,
}

impl ScanVariable {
    pub fn new(name: &str, unit: &str) -> Self {
        Self { name: name.to_owned(), unit: unit.to_owned() }
    }

    /// Column header, e.g. `duration_us`.
    pub fn column(&self) -> String {
        if self.unit.is_empty() {
            self.name.clone()
        } else {
            format!("{}_{}", self.name, self.unit)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    pub x: f64,
    pub pop_g1: f64,
    pub pop_g2: f64,
    pub pop_e: f64,
    pub trace: f64,
}

impl ScanPoint {
    pub fn from_state(x: f64, rho: &DensityMatrix) -> Self {
        let [pop_g1, pop_g2, pop_e] = rho.populations();
        Self { x, pop_g1, pop_g2, pop_e, trace: rho.trace().re }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub scan_variable: ScanVariable,
    pub points: Vec<ScanPoint>,
    /// Key/value description of the configuration that produced the scan.
    pub metadata: Vec<(String, String)>,
}

impl ScanResult {
    pub fn new(scan_variable: ScanVariable, points: Vec<ScanPoint>) -> Self {
        Self { scan_variable, points, metadata: Vec::new() }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn pop_g1(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.pop_g1).collect()
    }

    pub fn pop_g2(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.pop_g2).collect()
    }

    pub fn pop_e(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.pop_e).collect()
    }

    /// `(x, pop_g2)` pairs, the usual input for fitting.
    pub fn g2_curve(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.pop_g2)).collect()
    }

    pub fn g1_curve(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.pop_g1)).collect()
    }

    /// Checks population bounds and x ordering. `trace_conserved` also
    /// requires the populations to sum to one.
    pub fn check_invariants(&self, trace_conserved: bool) -> std::result::Result<(), String> {
        let lo = -POPULATION_SLACK;
        let hi = 1.0 + POPULATION_SLACK;
        for w in self.points.windows(2) {
            if w[1].x < w[0].x {
                return Err(format!("points not sorted at x = {}", w[1].x));
            }
        }
        for p in &self.points {
            for v in [p.pop_g1, p.pop_g2, p.pop_e] {
                if !(lo..=hi).contains(&v) {
                    return Err(format!("population {v} out of range at x = {}", p.x));
                }
            }
            let sum = p.pop_g1 + p.pop_g2 + p.pop_e;
            if sum > hi {
                return Err(format!("populations sum to {sum} at x = {}", p.x));
            }
            if trace_conserved && (sum - 1.0).abs() > POPULATION_SLACK {
                return Err(format!("populations sum to {sum} at x = {}", p.x));
            }
        }
        Ok(())
    }

    /// Weighted sum of scans over the same grid, accumulated in the order
    /// given.
    pub fn weighted_sum(parts: &[(f64, ScanResult)]) -> Result<ScanResult> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to sum".into()))?;
        let mut points: Vec<ScanPoint> = first
            .points
            .iter()
            .map(|p| ScanPoint { x: p.x, pop_g1: 0.0, pop_g2: 0.0, pop_e: 0.0, trace: 0.0 })
            .collect();
        for (w, scan) in parts {
            if scan.points.len() != points.len() {
                return Err(Error::InvalidArgument("scans of different length cannot be summed".into()));
            }
            for (acc, p) in points.iter_mut().zip(&scan.points) {
                if acc.x != p.x {
                    return Err(Error::InvalidArgument(format!("scan grids differ ({} vs {})", acc.x, p.x)));
                }
                acc.pop_g1 += w * p.pop_g1;
                acc.pop_g2 += w * p.pop_g2;
                acc.pop_e += w * p.pop_e;
                acc.trace += w * p.trace;
            }
        }
        Ok(ScanResult {
            scan_variable: first.scan_variable.clone(),
            points,
            metadata: first.metadata.clone(),
        })
    }
}
