//! Named experiments: Raman Rabi scans, delayed-pulse (STIRAP) scans,
//! Ramsey fringes, CPT spectra, period scaling and a fidelity estimate.
//!
//! Every experiment starts from `|g1><g1|`, reads populations of the final
//! state directly and, when configured, averages over the [`Ensemble`].

use std::f64::consts::TAU;

use crate::density::DensityMatrix;
use crate::dynamics::{angular_to_mhz, effective_rabi_frequency, mhz_to_angular, LambdaParams};
use crate::ensemble::{Ensemble, HyperfineConfig};
use crate::error::{Error, Result};
use crate::fitting::fit_damped_cosine;
use crate::propagate::{default_time_step_for, propagate_batch};
use crate::pulses::{make_rabi_pair, make_ramsey_sequence, make_stirap_pair, EnvelopeShape, PulseSequence};
use crate::scan::{ScanPoint, ScanResult, ScanVariable};
use crate::FieldSample;

/// Physics shared by all experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Nominal parameters. With hyperfine summation on, `delta_two_photon`
    /// is the laser offset from the `m_n = 0` resonance.
    pub params: LambdaParams,
    /// Peak Rabi frequencies, rad/us.
    pub peak_plus: f64,
    pub peak_minus: f64,
    /// Integration step; `None` picks [`default_time_step_for`] per group of
    /// ensemble members.
    pub dt: Option<f64>,
    pub ensemble: Ensemble,
}

impl SimConfig {
    /// NV rates, equal fields of `omega_mhz`, no broadening.
    pub fn nv(delta_avg_mhz: f64, delta_two_photon_mhz: f64, omega_mhz: f64) -> Self {
        let peak = mhz_to_angular(omega_mhz);
        Self {
            params: LambdaParams::nv_defaults(delta_avg_mhz, delta_two_photon_mhz),
            peak_plus: peak,
            peak_minus: peak,
            dt: None,
            ensemble: Ensemble::none(),
        }
    }

    pub fn with_ensemble(mut self, ensemble: Ensemble) -> Self {
        self.ensemble = ensemble;
        self
    }

    pub fn without_decay(mut self) -> Self {
        self.params = self.params.without_decay();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.peak_plus >= 0.0 && self.peak_minus >= 0.0 && self.peak_plus.is_finite() && self.peak_minus.is_finite()) {
            return Err(Error::InvalidArgument("peak Rabi frequencies must be finite and >= 0".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("time step must be > 0, got {dt}")));
            }
        }
        self.ensemble.validate()
    }

    /// Raman Rabi frequency of the nominal parameters, rad/us.
    pub fn rabi_frequency(&self) -> Result<f64> {
        effective_rabi_frequency(self.peak_plus, self.peak_minus, self.params.delta_avg.abs())
    }

    fn step_for(&self, group: &[LambdaParams], max_fields: FieldSample) -> f64 {
        self.dt.unwrap_or_else(|| {
            group
                .iter()
                .map(|p| default_time_step_for(p, max_fields))
                .fold(f64::INFINITY, f64::min)
        })
    }

    /// Key/value description used as scan metadata.
    pub fn describe(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let mut out = vec![
            kv("delta_avg_mhz", angular_to_mhz(p.delta_avg)),
            kv("delta_two_photon_mhz", angular_to_mhz(p.delta_two_photon)),
            kv("omega_plus_mhz", angular_to_mhz(self.peak_plus)),
            kv("omega_minus_mhz", angular_to_mhz(self.peak_minus)),
            kv("gamma_repop_mhz", angular_to_mhz(p.gamma_repop)),
            kv("gamma_opt_mhz", angular_to_mhz(p.gamma_opt)),
            kv("gamma_spin_mhz", angular_to_mhz(p.gamma_spin)),
            kv("leak_rate_mhz", angular_to_mhz(p.leak_rate)),
        ];
        if let Some(dt) = self.dt {
            out.push(kv("dt_us", dt));
        }
        if let Some(s) = &self.ensemble.delta_avg {
            out.push(kv("delta_avg_fwhm_mhz", s.fwhm));
            out.push(("delta_avg_points".into(), s.n_points.to_string()));
        }
        if let Some(s) = &self.ensemble.two_photon {
            out.push(kv("two_photon_fwhm_mhz", s.fwhm));
            out.push(("two_photon_points".into(), s.n_points.to_string()));
        }
        if let Some(h) = &self.ensemble.hyperfine {
            out.push(kv("dip_spacing_mhz", h.dip_spacing));
            out.push(("hyperfine_weights".into(), format!("{:?}", h.weights)));
        }
        out
    }
}

fn kv(key: &str, v: f64) -> (String, String) {
    (key.to_owned(), format!("{v}"))
}

fn ground_state() -> DensityMatrix {
    DensityMatrix::basis(0)
}

fn check_nonnegative(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        Some(v) => Err(Error::InvalidArgument(format!("{what} must be finite and >= 0, got {v}"))),
        None => Ok(()),
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Final state of `seq` for every member of `group`.
fn final_states(cfg: &SimConfig, seq: &PulseSequence, group: &[LambdaParams]) -> Result<Vec<DensityMatrix>> {
    let dt = cfg.step_for(group, seq.max_fields());
    Ok(propagate_batch(&ground_state(), seq, group, &[seq.span], dt)?
        .into_iter()
        .map(|mut traj| traj.pop().expect("one sample").1)
        .collect())
}

/// Runs `point(x)` (one pulse sequence per scan value) for a group of
/// members and assembles one scan per member.
fn per_point_scan(
    cfg: &SimConfig,
    xs: &[f64],
    var: &ScanVariable,
    group: &[LambdaParams],
    sequence: &(dyn Fn(f64) -> Result<PulseSequence> + Sync),
) -> Result<Vec<ScanResult>> {
    let mut points: Vec<Vec<ScanPoint>> = vec![Vec::with_capacity(xs.len()); group.len()];
    for &x in xs {
        let seq = sequence(x)?;
        for (member, rho) in final_states(cfg, &seq, group)?.iter().enumerate() {
            points[member].push(ScanPoint::from_state(x, rho));
        }
    }
    Ok(points.into_iter().map(|p| ScanResult::new(var.clone(), p)).collect())
}

fn finish(mut scan: ScanResult, experiment: &str, cfg: &SimConfig, extra: Vec<(String, String)>) -> ScanResult {
    scan.metadata = vec![("experiment".into(), experiment.into())];
    scan.metadata.extend(cfg.describe());
    scan.metadata.extend(extra);
    scan
}

/// Populations after two simultaneous square pulses of each duration (us).
pub fn rabi_scan(durations: &[f64], cfg: &SimConfig) -> Result<ScanResult> {
    cfg.validate()?;
    check_nonnegative(durations, "durations")?;
    let xs = sorted(durations);
    let var = ScanVariable::new("duration", "us");
    let t_max = xs.last().copied().unwrap_or(0.0);
    // square pulses: every duration is a prefix of the longest pulse
    let seq = if t_max > 0.0 {
        let plus = crate::pulses::Envelope::square(cfg.peak_plus, 0.0, t_max)?;
        let minus = crate::pulses::Envelope::square(cfg.peak_minus, 0.0, t_max)?;
        PulseSequence::new(vec![plus], vec![minus], t_max)?
    } else {
        make_rabi_pair(cfg.peak_plus, 0.0)?
    };
    let scan = cfg.ensemble.average(&cfg.params, |group| {
        let dt = cfg.step_for(group, FieldSample::new(cfg.peak_plus, cfg.peak_minus));
        let trajectories = propagate_batch(&ground_state(), &seq, group, &xs, dt)?;
        Ok(trajectories
            .into_iter()
            .map(|traj| {
                let points = traj.iter().map(|(t, rho)| ScanPoint::from_state(*t, rho)).collect();
                ScanResult::new(var.clone(), points)
            })
            .collect())
    })?;
    Ok(finish(scan, "rabi", cfg, Vec::new()))
}

/// Pulse geometry of the delay scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StirapGeometry {
    /// Width of each pulse, us.
    pub width: f64,
    /// Ramp length, us.
    pub t_rise: f64,
    pub ramp: EnvelopeShape,
}

impl StirapGeometry {
    pub fn new(t_rise: f64) -> Self {
        Self { width: 1.5, t_rise, ramp: EnvelopeShape::Trapezoid }
    }
}

/// Populations after the delayed pulse pair for each delay `T` (us).
/// The two pulses carry `peak_plus` and `peak_minus`.
pub fn stirap_scan(delays: &[f64], geometry: &StirapGeometry, cfg: &SimConfig) -> Result<ScanResult> {
    cfg.validate()?;
    check_nonnegative(delays, "delays")?;
    // validate the geometry once up front
    make_stirap_pair(1.0, geometry.width, geometry.t_rise, geometry.width, geometry.ramp)?;
    let xs = sorted(delays);
    let var = ScanVariable::new("delay", "us");
    let sequence = |delay: f64| -> Result<PulseSequence> {
        let mut seq = make_stirap_pair(cfg.peak_plus, geometry.width, geometry.t_rise, delay, geometry.ramp)?;
        for e in &mut seq.minus_envelopes {
            e.peak = cfg.peak_minus;
        }
        Ok(seq)
    };
    let scan = cfg
        .ensemble
        .average(&cfg.params, |group| per_point_scan(cfg, &xs, &var, group, &sequence))?;
    let extra = vec![
        kv("pulse_width_us", geometry.width),
        kv("t_rise_us", geometry.t_rise),
        ("ramp".into(), geometry.ramp.name().into()),
    ];
    Ok(finish(scan, "stirap", cfg, extra))
}

/// Ramsey fringes: two Raman pi/2 pulses at Rabi frequency
/// `omega_r_target` (rad/us) separated by each free evolution time (us).
///
/// The pulses are set up for the nominal parameters; ensemble members see
/// the same fields. The peak fields in `cfg` are not used.
pub fn ramsey_scan(taus: &[f64], omega_r_target: f64, cfg: &SimConfig) -> Result<ScanResult> {
    cfg.validate()?;
    check_nonnegative(taus, "free evolution times")?;
    let xs = sorted(taus);
    let var = ScanVariable::new("tau", "us");
    let sequence = |tau: f64| make_ramsey_sequence(omega_r_target, &cfg.params, tau);
    sequence(0.0)?;
    let scan = cfg
        .ensemble
        .average(&cfg.params, |group| per_point_scan(cfg, &xs, &var, group, &sequence))?;
    Ok(finish(scan, "ramsey", cfg, vec![kv("omega_r_mhz", angular_to_mhz(omega_r_target))]))
}

/// CPT spectrum: populations after a pulse pair of fixed `duration` (us)
/// for each laser two-photon offset (MHz) from the `m_n = 0` resonance,
/// summed over the nuclear-spin manifolds. Without a hyperfine
/// configuration the random orientation is used.
pub fn cpt_scan(offsets_mhz: &[f64], duration: f64, cfg: &SimConfig) -> Result<ScanResult> {
    cfg.validate()?;
    check_nonnegative(&[duration], "pulse duration")?;
    if offsets_mhz.iter().any(|o| !o.is_finite()) {
        return Err(Error::InvalidArgument("offsets must be finite".into()));
    }
    let xs = sorted(offsets_mhz);
    let var = ScanVariable::new("two_photon_offset", "MHz");
    let ensemble = Ensemble {
        hyperfine: Some(cfg.ensemble.hyperfine.unwrap_or_else(HyperfineConfig::random_orientation)),
        ..cfg.ensemble
    };
    let seq = if duration > 0.0 {
        let plus = crate::pulses::Envelope::square(cfg.peak_plus, 0.0, duration)?;
        let minus = crate::pulses::Envelope::square(cfg.peak_minus, 0.0, duration)?;
        PulseSequence::new(vec![plus], vec![minus], duration)?
    } else {
        make_rabi_pair(cfg.peak_plus, 0.0)?
    };
    let mut points = Vec::with_capacity(xs.len());
    for &offset in &xs {
        let base = cfg.params.with_delta_two_photon(mhz_to_angular(offset));
        let avg = ensemble.average(&base, |group| {
            Ok(final_states(cfg, &seq, group)?
                .iter()
                .map(|rho| ScanResult::new(var.clone(), vec![ScanPoint::from_state(offset, rho)]))
                .collect())
        })?;
        points.push(avg.points[0]);
    }
    let cfg_used = SimConfig { ensemble, ..*cfg };
    Ok(finish(ScanResult::new(var, points), "cpt", &cfg_used, vec![kv("pulse_duration_us", duration)]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodRow {
    /// One-photon detuning, GHz.
    pub delta_ghz: f64,
    /// Intensity of each field relative to the configured one.
    pub intensity_scale: f64,
    /// Fitted oscillation period, us.
    pub period: f64,
    /// `2 pi / omega_r` with `omega_r = omega_plus omega_minus / (2 delta)`,
    /// us.
    pub predicted_period: f64,
}

/// Number of periods and samples per period used by
/// [`period_vs_detuning`].
pub const PERIOD_SCAN_PERIODS: f64 = 4.0;
pub const PERIOD_SCAN_SAMPLES: usize = 32;

/// Fitted Raman Rabi period for every combination of detuning (GHz) and
/// intensity scale. Both fields scale as `sqrt(intensity_scale)`. Durations
/// cover [`PERIOD_SCAN_PERIODS`] predicted periods.
pub fn period_vs_detuning(delta_ghz: &[f64], intensity_scales: &[f64], cfg: &SimConfig) -> Result<Vec<PeriodRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(delta_ghz.len() * intensity_scales.len());
    for &d in delta_ghz {
        if d == 0.0 || !d.is_finite() {
            return Err(Error::DivisionByZero("period scan needs a nonzero detuning"));
        }
        for &scale in intensity_scales {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidArgument(format!("intensity scale must be > 0, got {scale}")));
            }
            let amp = scale.sqrt();
            let run = SimConfig {
                params: cfg.params.with_delta_avg(mhz_to_angular(1000.0 * d)),
                peak_plus: cfg.peak_plus * amp,
                peak_minus: cfg.peak_minus * amp,
                ..*cfg
            };
            let omega_r = run.rabi_frequency()?;
            if omega_r == 0.0 {
                return Err(Error::InvalidArgument("fields are off; no Rabi oscillation".into()));
            }
            let predicted = TAU / omega_r;
            let n = (PERIOD_SCAN_PERIODS * PERIOD_SCAN_SAMPLES as f64) as usize;
            let durations: Vec<f64> =
                (0..=n).map(|k| predicted * PERIOD_SCAN_PERIODS * k as f64 / n as f64).collect();
            let scan = rabi_scan(&durations, &run)?;
            let fit = fit_damped_cosine(&scan.g2_curve())?;
            rows.push(PeriodRow { delta_ghz: d, intensity_scale: scale, period: 1.0 / fit.frequency(), predicted_period: predicted });
        }
    }
    Ok(rows)
}

/// Peak transferred population within the first oscillation period,
/// divided by the fraction of the population taking part, clamped to
/// `[0, 1]`.
///
/// The period comes from a damped-cosine fit of `pop_g2`; the peak is the
/// largest sampled `pop_g2` in `[x0, x0 + period]`.
pub fn estimate_fidelity(scan: &ScanResult, participating_fraction: f64) -> Result<f64> {
    if !(participating_fraction > 0.0 && participating_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "participating fraction must lie in (0, 1], got {participating_fraction}"
        )));
    }
    let curve = scan.g2_curve();
    let fit = fit_damped_cosine(&curve).map_err(|e| match e {
        Error::NoOscillation => Error::InsufficientData("no oscillation detected".into()),
        other => other,
    })?;
    let period = 1.0 / fit.frequency();
    let x0 = curve.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x1 = curve.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if x1 - x0 < period {
        return Err(Error::InsufficientData(format!(
            "scan covers {} us, less than one period of {period} us",
            x1 - x0
        )));
    }
    let peak = curve
        .iter()
        .filter(|(x, _)| *x <= x0 + period)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((peak / participating_fraction).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::GaussianSpec;
    use crate::propagate::{default_time_step, propagate};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_duration_is_ground_state() {
        let cfg = SimConfig::nv(1500.0, 0.0, 46.0);
        let scan = rabi_scan(&[0.0], &cfg).unwrap();
        let p = scan.points[0];
        assert_eq!((p.pop_g1, p.pop_g2, p.pop_e), (1.0, 0.0, 0.0));
    }

    #[test]
    fn rabi_point_equals_single_propagation() {
        let cfg = SimConfig::nv(1500.0, 0.0, 46.0);
        let seq = make_rabi_pair(cfg.peak_plus, 0.7).unwrap();
        let dt = default_time_step(&cfg.params, &seq);
        let rho = propagate(&ground_state(), &seq, &cfg.params, &[0.7], dt).unwrap()[0].1;
        let single = rabi_scan(&[0.7], &cfg).unwrap();
        assert_eq!(single.points[0], ScanPoint::from_state(0.7, &rho));

        // other durations only add knots, which changes rounding
        let scan = rabi_scan(&[0.3, 1.1, 0.7], &cfg).unwrap();
        assert_eq!(scan.xs(), vec![0.3, 0.7, 1.1]);
        let [g1, g2, e] = rho.populations();
        let p = scan.points[1];
        assert_abs_diff_eq!(p.pop_g1, g1, epsilon = 1e-9);
        assert_abs_diff_eq!(p.pop_g2, g2, epsilon = 1e-9);
        assert_abs_diff_eq!(p.pop_e, e, epsilon = 1e-9);
        scan.check_invariants(true).unwrap();
    }

    #[test]
    fn rabi_frequency_follows_adiabatic_formula() {
        let cfg = SimConfig::nv(1500.0, 0.0, 46.0).without_decay();
        let f = angular_to_mhz(cfg.rabi_frequency().unwrap());
        assert_abs_diff_eq!(f, 0.7053, epsilon = 1e-4);
        let durations: Vec<f64> = (0..=160).map(|k| k as f64 * 0.05).collect();
        let scan = rabi_scan(&durations, &cfg).unwrap();
        let fit = fit_damped_cosine(&scan.g2_curve()).unwrap();
        assert!((fit.frequency() / f - 1.0).abs() < 0.03, "{}", fit.frequency());
    }

    #[test]
    fn separated_square_pulses_do_not_transfer() {
        let cfg = SimConfig::nv(900.0, 0.0, 48.0).without_decay();
        let scan = stirap_scan(&[3.0, 3.5], &StirapGeometry::new(0.0), &cfg).unwrap();
        for p in &scan.points {
            assert!(p.pop_g2 < 1e-3, "{}", p.pop_g2);
        }
    }

    #[test]
    fn square_delay_scan_is_symmetric() {
        let cfg = SimConfig::nv(900.0, 0.0, 48.0).without_decay();
        let g = StirapGeometry::new(0.0);
        let scan = stirap_scan(&[1.2, 1.8], &g, &cfg).unwrap();
        assert!((scan.points[0].pop_g2 - scan.points[1].pop_g2).abs() < 0.02);
    }

    #[test]
    fn ramsey_back_to_back_is_a_pi_pulse() {
        let cfg = SimConfig::nv(1000.0, 0.0, 0.0).without_decay();
        let scan = ramsey_scan(&[0.0], mhz_to_angular(2.5), &cfg).unwrap();
        assert!(scan.points[0].pop_g2 > 0.98, "{}", scan.points[0].pop_g2);
    }

    #[test]
    fn cpt_zero_duration_is_flat() {
        let cfg = SimConfig::nv(1500.0, 0.0, 46.0);
        let scan = cpt_scan(&[-4.4, 0.0, 2.2], 0.0, &cfg).unwrap();
        for p in &scan.points {
            assert_abs_diff_eq!(p.pop_g1, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn period_rows_and_scaling() {
        let cfg = SimConfig::nv(1000.0, 0.0, 20.0).without_decay();
        let rows = period_vs_detuning(&[1.0], &[1.0, 4.0], &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        // omega_r goes as sqrt(I+ I-): both intensities x4 is omega_r x4
        assert!((rows[0].period / rows[1].period - 4.0).abs() < 0.1, "{rows:?}");
        assert!(period_vs_detuning(&[0.0], &[1.0], &cfg).is_err());
    }

    #[test]
    fn fidelity_of_ideal_oscillation() {
        let cfg = SimConfig::nv(1500.0, 0.0, 46.0).without_decay();
        let period = TAU / cfg.rabi_frequency().unwrap();
        let durations: Vec<f64> = (0..=96).map(|k| 3.0 * period * k as f64 / 96.0).collect();
        let scan = rabi_scan(&durations, &cfg).unwrap();
        assert!(estimate_fidelity(&scan, 1.0).unwrap() > 0.99);
        let short: Vec<f64> = durations.iter().map(|d| d / 4.0).collect();
        let partial = rabi_scan(&short, &cfg).unwrap();
        assert!(estimate_fidelity(&partial, 1.0).is_err());
    }

    #[test]
    fn fidelity_of_flat_scan_fails() {
        let cfg = SimConfig::nv(1500.0, 0.0, 0.0);
        let durations: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let scan = rabi_scan(&durations, &cfg).unwrap();
        assert!(matches!(estimate_fidelity(&scan, 1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ensemble_scan_stays_in_bounds() {
        let cfg = SimConfig::nv(1500.0, 0.0, 46.0).with_ensemble(Ensemble {
            delta_avg: Some(GaussianSpec::new(500.0, 5, 3.0)),
            two_photon: Some(GaussianSpec::new(1.0, 5, 4.0)),
            hyperfine: None,
        });
        let durations: Vec<f64> = (0..10).map(|k| k as f64 * 0.2).collect();
        rabi_scan(&durations, &cfg).unwrap().check_invariants(true).unwrap();
    }
}
