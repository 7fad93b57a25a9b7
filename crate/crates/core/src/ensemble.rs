//! Inhomogeneous averaging: Gaussian distributions of the one-photon
//! detuning (spectral diffusion of the optical line) and of the two-photon
//! detuning (spin dephasing), and the sum over the three 14N hyperfine
//! manifolds.
//!
//! Each average evaluates the experiment once per grid point. Evaluations
//! may run in parallel; the weighted sum is always accumulated in grid
//! order, so results do not depend on the number of threads.

use rayon::prelude::*;

use crate::dynamics::{mhz_to_angular, LambdaParams};
use crate::error::{Error, Result};
use crate::scan::ScanResult;

/// `FWHM = 2 sqrt(2 ln 2) sigma`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSpec {
    /// Full width at half maximum, MHz.
    pub fwhm: f64,
    /// Odd number of grid points.
    pub n_points: usize,
    /// Half-width of the grid in standard deviations.
    pub span_sigmas: f64,
}

impl GaussianSpec {
    pub fn new(fwhm: f64, n_points: usize, span_sigmas: f64) -> Self {
        Self { fwhm, n_points, span_sigmas }
    }

    /// Spectral diffusion of the optical transition: 500 MHz FWHM, 21 points
    /// over +-3 sigma.
    pub fn spectral_diffusion() -> Self {
        Self::new(500.0, 21, 3.0)
    }

    /// Spin dephasing: 1 MHz FWHM, 41 points over +-4 sigma.
    pub fn spin_dephasing() -> Self {
        Self::new(1.0, 41, 4.0)
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm >= 0.0 && self.fwhm.is_finite()) {
            return Err(Error::InvalidSpec(format!("fwhm must be finite and >= 0, got {}", self.fwhm)));
        }
        if self.n_points % 2 == 0 {
            return Err(Error::InvalidSpec(format!("n_points must be odd, got {}", self.n_points)));
        }
        if !(self.span_sigmas > 0.0 && self.span_sigmas.is_finite()) {
            return Err(Error::InvalidSpec(format!("span_sigmas must be > 0, got {}", self.span_sigmas)));
        }
        Ok(())
    }
}

/// Uniform grid over `+-span_sigmas * sigma` with Gaussian weights
/// normalized to one. Returns `(offset MHz, weight)`.
pub fn gaussian_grid(spec: &GaussianSpec) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    if spec.fwhm == 0.0 || spec.n_points == 1 {
        return Ok(vec![(0.0, 1.0)]);
    }
    let sigma = spec.sigma();
    let half = (spec.n_points / 2) as i64;
    let step = spec.span_sigmas * sigma / half as f64;
    let raw: Vec<(f64, f64)> = (-half..=half)
        .map(|k| {
            let x = k as f64 * step;
            (x, (-0.5 * (x / sigma).powi(2)).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    Ok(raw.into_iter().map(|(x, w)| (x, w / total)).collect())
}

/// Per-manifold two-photon offsets and occupation of the 14N nuclear spin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperfineConfig {
    /// Shift of the Raman resonance per unit of `m_n`, MHz.
    pub dip_spacing: f64,
    /// Weights of `m_n = -1, 0, +1`.
    pub weights: [f64; 3],
    /// Hyperfine splitting, MHz (reference value only).
    pub hyperfine_a: f64,
    /// Zeeman splitting of the spin states, MHz (reference value only; it is
    /// absorbed into the two-photon detuning).
    pub zeeman_wb: f64,
}

pub const MANIFOLDS: [i32; 3] = [-1, 0, 1];

impl HyperfineConfig {
    /// Random nuclear-spin orientation: each manifold holds 1/3.
    pub fn random_orientation() -> Self {
        Self {
            // the Raman transition changes m_s by 2 at fixed m_n
            dip_spacing: 2.0 * 2.2,
            weights: [1.0 / 3.0; 3],
            hyperfine_a: 2.2,
            zeeman_wb: 150.0,
        }
    }

    /// Nuclear spin prepared in manifold `m_n`.
    pub fn single(m_n: i32) -> Result<Self> {
        let idx = manifold_index(m_n)?;
        let mut weights = [0.0; 3];
        weights[idx] = 1.0;
        Ok(Self { weights, ..Self::random_orientation() })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dip_spacing > 0.0 && self.dip_spacing.is_finite()) {
            return Err(Error::InvalidSpec(format!("dip_spacing must be > 0, got {}", self.dip_spacing)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidSpec("hyperfine weights must be >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("hyperfine weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Two-photon detuning seen by manifold `m_n` for a given laser offset
    /// from the `m_n = 0` resonance, MHz.
    pub fn manifold_detuning(&self, laser_two_photon_offset: f64, m_n: i32) -> f64 {
        laser_two_photon_offset - m_n as f64 * self.dip_spacing
    }
}

pub fn manifold_index(m_n: i32) -> Result<usize> {
    match m_n {
        -1 => Ok(0),
        0 => Ok(1),
        1 => Ok(2),
        _ => Err(Error::InvalidArgument(format!("m_n must be -1, 0 or +1, got {m_n}"))),
    }
}

fn weighted_runs<F>(jobs: Vec<(f64, LambdaParams)>, experiment: &F) -> Result<ScanResult>
where
    F: Fn(&LambdaParams) -> Result<ScanResult> + Sync,
{
    let runs: Vec<Result<ScanResult>> = jobs.par_iter().map(|(_, p)| experiment(p)).collect();
    let mut parts = Vec::with_capacity(runs.len());
    for ((w, _), run) in jobs.iter().zip(runs) {
        parts.push((*w, run?));
    }
    ScanResult::weighted_sum(&parts)
}

/// Averages `experiment` over `delta_avg = base + offset`, offsets drawn from
/// `spec` (MHz). Field amplitudes are unchanged across the ensemble.
pub fn average_over_delta_avg<F>(base: &LambdaParams, spec: &GaussianSpec, experiment: F) -> Result<ScanResult>
where
    F: Fn(&LambdaParams) -> Result<ScanResult> + Sync,
{
    let jobs = gaussian_grid(spec)?
        .into_iter()
        .map(|(off, w)| (w, base.with_delta_avg(base.delta_avg + mhz_to_angular(off))))
        .collect();
    weighted_runs(jobs, &experiment)
}

/// Averages `experiment` over `delta_two_photon = base + offset`.
pub fn average_over_two_photon<F>(base: &LambdaParams, spec: &GaussianSpec, experiment: F) -> Result<ScanResult>
where
    F: Fn(&LambdaParams) -> Result<ScanResult> + Sync,
{
    let jobs = gaussian_grid(spec)?
        .into_iter()
        .map(|(off, w)| (w, base.with_delta_two_photon(base.delta_two_photon + mhz_to_angular(off))))
        .collect();
    weighted_runs(jobs, &experiment)
}

/// Weighted sum over the nuclear-spin manifolds. Manifold `m_n` runs at
/// two-photon detuning `laser_two_photon_offset - m_n * dip_spacing` (MHz);
/// manifolds with zero weight are skipped.
pub fn hyperfine_sum<F>(
    base: &LambdaParams,
    config: &HyperfineConfig,
    laser_two_photon_offset: f64,
    experiment: F,
) -> Result<ScanResult>
where
    F: Fn(&LambdaParams) -> Result<ScanResult> + Sync,
{
    config.validate()?;
    let jobs = MANIFOLDS
        .iter()
        .zip(config.weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|(&m_n, w)| {
            let delta = config.manifold_detuning(laser_two_photon_offset, m_n);
            (w, base.with_delta_two_photon(mhz_to_angular(delta)))
        })
        .collect();
    weighted_runs(jobs, &experiment)
}

/// All three broadening mechanisms at once. `None` switches a mechanism
/// off.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ensemble {
    pub delta_avg: Option<GaussianSpec>,
    pub two_photon: Option<GaussianSpec>,
    pub hyperfine: Option<HyperfineConfig>,
}

impl Ensemble {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.delta_avg {
            s.validate()?;
        }
        if let Some(s) = &self.two_photon {
            s.validate()?;
        }
        if let Some(h) = &self.hyperfine {
            h.validate()?;
        }
        Ok(())
    }

    /// Weighted members, grouped by one-photon detuning. Within a group
    /// members are ordered by manifold, then by two-photon offset.
    ///
    /// With hyperfine summation on, `base.delta_two_photon` is the laser
    /// offset from the `m_n = 0` resonance and manifold `m_n` sees
    /// `base.delta_two_photon - m_n * dip_spacing`.
    pub fn members(&self, base: &LambdaParams) -> Result<Vec<Vec<(f64, LambdaParams)>>> {
        self.validate()?;
        let point = [(0.0, 1.0)];
        let delta_grid = match &self.delta_avg {
            Some(s) => gaussian_grid(s)?,
            None => point.to_vec(),
        };
        let two_photon_grid = match &self.two_photon {
            Some(s) => gaussian_grid(s)?,
            None => point.to_vec(),
        };
        let manifolds: Vec<(f64, f64)> = match &self.hyperfine {
            Some(h) => MANIFOLDS
                .iter()
                .zip(h.weights)
                .filter(|(_, w)| *w > 0.0)
                .map(|(&m_n, w)| (w, base.delta_two_photon - m_n as f64 * mhz_to_angular(h.dip_spacing)))
                .collect(),
            None => vec![(1.0, base.delta_two_photon)],
        };
        Ok(delta_grid
            .iter()
            .map(|&(d_off, d_w)| {
                let with_delta = base.with_delta_avg(base.delta_avg + mhz_to_angular(d_off));
                let mut group = Vec::with_capacity(manifolds.len() * two_photon_grid.len());
                for &(m_w, delta_n) in &manifolds {
                    for &(s_off, s_w) in &two_photon_grid {
                        let p = with_delta.with_delta_two_photon(delta_n + mhz_to_angular(s_off));
                        group.push((d_w * m_w * s_w, p));
                    }
                }
                group
            })
            .collect())
    }

    pub fn size(&self) -> usize {
        let n = |s: &Option<GaussianSpec>| s.map_or(1, |s| if s.fwhm == 0.0 { 1 } else { s.n_points });
        let m = self.hyperfine.map_or(1, |h| h.weights.iter().filter(|w| **w > 0.0).count());
        n(&self.delta_avg) * n(&self.two_photon) * m
    }

    /// Weighted average of `run_batch` over all members. `run_batch` gets
    /// one group of [`Ensemble::members`] at a time and returns one scan per
    /// member; groups may run in parallel, the sum runs in member order.
    pub fn average<F>(&self, base: &LambdaParams, run_batch: F) -> Result<ScanResult>
    where
        F: Fn(&[LambdaParams]) -> Result<Vec<ScanResult>> + Sync,
    {
        let groups = self.members(base)?;
        let runs: Vec<Result<Vec<ScanResult>>> = groups
            .par_iter()
            .map(|g| {
                let params: Vec<LambdaParams> = g.iter().map(|(_, p)| *p).collect();
                run_batch(&params)
            })
            .collect();
        let mut parts = Vec::with_capacity(self.size());
        for (group, run) in groups.iter().zip(runs) {
            let scans = run?;
            if scans.len() != group.len() {
                return Err(Error::InvalidArgument("batch returned the wrong number of scans".into()));
            }
            parts.extend(group.iter().map(|(w, _)| *w).zip(scans));
        }
        ScanResult::weighted_sum(&parts)
    }
}
