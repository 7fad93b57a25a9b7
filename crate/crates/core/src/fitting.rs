//! Least-squares fits of oscillation curves.
//!
//! Two models are supported:
//!
//! * damped cosine with a linear background,
//!   `y = A exp(-t / tau_d) cos(2 pi f t + phi) + B + C t`;
//! * Gaussian-damped cosine (Ramsey free induction decay),
//!   `y = A exp(-(t / T2*)^2) cos(2 pi f t + phi) + B`.
//!
//! Times are in microseconds and frequencies in MHz (cycles per microsecond).
//! Fits are seeded from the strongest line of a discrete Fourier transform
//! and refined with damped Gauss-Newton (Levenberg-Marquardt) steps using a
//! finite-difference Jacobian.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Iteration cap of the optimizer.
pub const MAX_ITERATIONS: usize = 200;
/// Relative step size below which the optimizer stops.
pub const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub parameters: Vec<FitParameter>,
    /// Root-mean-square residual.
    pub residual_norm: f64,
    /// Residual at the seed, for comparison.
    pub seed_residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Raw model coefficients, see [`FitModel::evaluate`].
    pub coefficients: Vec<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn frequency(&self) -> f64 {
        self.get("frequency").expect("every model has a frequency")
    }

    pub fn amplitude(&self) -> f64 {
        self.get("amplitude").expect("every model has an amplitude")
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.model.evaluate(&self.coefficients, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// Coefficients `[A, f, phi, k, B, C]` with `k = 1 / tau_d`.
    DampedCosine,
    /// Coefficients `[A, a, f, phi, B]` with `a = 1 / T2*^2`.
    GaussianCosine,
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::DampedCosine => "damped-cosine",
            FitModel::GaussianCosine => "gaussian-cosine",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "damped-cosine" | "damped_cosine" => Some(FitModel::DampedCosine),
            "gaussian-cosine" | "gaussian_cosine" => Some(FitModel::GaussianCosine),
            _ => None,
        }
    }

    pub fn evaluate(&self, c: &[f64], t: f64) -> f64 {
        match self {
            FitModel::DampedCosine => c[0] * (-c[3] * t).exp() * (TAU * c[1] * t + c[2]).cos() + c[4] + c[5] * t,
            FitModel::GaussianCosine => c[0] * (-c[1] * t * t).exp() * (TAU * c[2] * t + c[3]).cos() + c[4],
        }
    }

    fn amplitude_phase_index(&self) -> (usize, usize) {
        match self {
            FitModel::DampedCosine => (0, 2),
            FitModel::GaussianCosine => (0, 3),
        }
    }
}

/// Fits `y = A exp(-t/tau_d) cos(2 pi f t + phi) + B + C t`.
pub fn fit_damped_cosine(points: &[(f64, f64)]) -> Result<FitResult> {
    let data = Data::new(points)?;
    let seed = data.seed()?;
    let k = data.envelope_slope(seed.frequency, false).max(0.0);
    let c0 = vec![seed.amplitude, seed.frequency, seed.phase, k, seed.offset, seed.slope];
    fit(&data, FitModel::DampedCosine, c0)
}

/// Fits `y = A exp(-(t/T2*)^2) cos(2 pi f t + phi) + B`.
pub fn fit_gaussian_cosine(points: &[(f64, f64)]) -> Result<FitResult> {
    let data = Data::new(points)?;
    let seed = data.seed()?;
    let floor = 0.1 / (data.window() * data.window());
    let a = data.envelope_slope(seed.frequency, true).max(floor);
    let offset = data.mean();
    let c0 = vec![seed.amplitude, a, seed.frequency, seed.phase, offset];
    fit(&data, FitModel::GaussianCosine, c0)
}

/// Fits either model by name.
pub fn fit_model(model: FitModel, points: &[(f64, f64)]) -> Result<FitResult> {
    match model {
        FitModel::DampedCosine => fit_damped_cosine(points),
        FitModel::GaussianCosine => fit_gaussian_cosine(points),
    }
}

/// Oscillation period `1 / f` from [`fit_damped_cosine`], in microseconds.
pub fn extract_period(points: &[(f64, f64)]) -> Result<f64> {
    Ok(1.0 / fit_damped_cosine(points)?.frequency())
}

struct Data {
    t: Vec<f64>,
    y: Vec<f64>,
}

struct Seed {
    amplitude: f64,
    frequency: f64,
    phase: f64,
    offset: f64,
    slope: f64,
}

impl Data {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 8 {
            return Err(Error::InsufficientData(format!("{} points, need at least 8", points.len())));
        }
        if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidArgument("non-finite data point".into()));
        }
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (t, y) = sorted.into_iter().unzip();
        let data = Self { t, y };
        if data.window() <= 0.0 {
            return Err(Error::InsufficientData("all samples at the same time".into()));
        }
        Ok(data)
    }

    fn window(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    fn mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// Least-squares line `y = b + c t`.
    fn trend(&self) -> (f64, f64) {
        let n = self.t.len() as f64;
        let tm = self.t.iter().sum::<f64>() / n;
        let ym = self.mean();
        let sxy: f64 = self.t.iter().zip(&self.y).map(|(t, y)| (t - tm) * (y - ym)).sum();
        let sxx: f64 = self.t.iter().map(|t| (t - tm).powi(2)).sum();
        let c = sxy / sxx;
        (ym - c * tm, c)
    }

    fn seed(&self) -> Result<Seed> {
        let (b, c) = self.trend();
        let resid: Vec<f64> = self.t.iter().zip(&self.y).map(|(t, y)| y - b - c * t).collect();
        let scale = self.y.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1e-300);
        let rms = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        if rms <= 1e-9 * scale {
            return Err(Error::NoOscillation);
        }

        let window = self.window();
        let f_min = 0.5 / window;
        let f_max = self.nyquist();
        if f_max <= f_min {
            return Err(Error::InsufficientData("sampling too sparse for any oscillation".into()));
        }
        let power = |f: f64| spectrum(&self.t, &resid, f).norm_sqr();
        // oversampled grid, then golden-section polish of the best bin
        let df = 0.125 / window;
        let n_grid = ((f_max - f_min) / df).ceil() as usize + 1;
        let (mut best_f, mut best_p) = (f_min, -1.0);
        for k in 0..n_grid {
            let f = (f_min + k as f64 * df).min(f_max);
            let p = power(f);
            if p > best_p {
                best_f = f;
                best_p = p;
            }
        }
        let f = golden_max(&power, (best_f - df).max(f_min * 0.5), (best_f + df).min(f_max));
        // a peak at the low edge of the band is indistinguishable from a
        // slow drift
        if f < f_min * 1.01 {
            return Err(Error::NoOscillation);
        }
        let s = spectrum(&self.t, &resid, f);
        let (lo, hi) = self.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
        Ok(Seed { amplitude: 0.5 * (hi - lo), frequency: f, phase: s.arg(), offset: b, slope: c })
    }

    fn nyquist(&self) -> f64 {
        let mut gaps: Vec<f64> = self.t.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
        gaps.sort_by(f64::total_cmp);
        0.5 / gaps[gaps.len() / 2]
    }

    /// Slope of `ln(half peak-to-peak)` against `t` (or `t^2`), one point
    /// per oscillation period; returned with the sign flipped so decay is
    /// positive.
    fn envelope_slope(&self, f: f64, squared: bool) -> f64 {
        let period = 1.0 / f;
        let t0 = self.t[0];
        let n_chunks = (self.window() / period).floor() as usize;
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for k in 0..n_chunks {
            let a = t0 + k as f64 * period;
            let b = a + period;
            let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0);
            for (t, y) in self.t.iter().zip(&self.y) {
                if *t >= a && *t < b {
                    lo = lo.min(*y);
                    hi = hi.max(*y);
                    count += 1;
                }
            }
            if count >= 3 && hi > lo {
                let mid = 0.5 * (a + b);
                xs.push(if squared { mid * mid } else { mid });
                ls.push((0.5 * (hi - lo)).ln());
            }
        }
        if xs.len() < 2 {
            return 0.0;
        }
        let n = xs.len() as f64;
        let xm = xs.iter().sum::<f64>() / n;
        let lm = ls.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ls).map(|(x, l)| (x - xm) * (l - lm)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
        if sxx > 0.0 {
            -sxy / sxx
        } else {
            0.0
        }
    }
}

fn spectrum(t: &[f64], y: &[f64], f: f64) -> num_complex::Complex64 {
    let w = TAU * f;
    t.iter()
        .zip(y)
        .map(|(t, y)| num_complex::Complex64::from_polar(*y, -w * t))
        .sum()
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

fn residuals(data: &Data, model: FitModel, c: &[f64]) -> DVector<f64> {
    DVector::from_iterator(data.t.len(), data.t.iter().zip(&data.y).map(|(t, y)| model.evaluate(c, *t) - y))
}

fn jacobian(data: &Data, model: FitModel, c: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(data.t.len(), c.len());
    let mut cp = c.to_vec();
    for j in 0..c.len() {
        let h = 1e-6 * c[j].abs().max(1e-3);
        cp[j] = c[j] + h;
        let up = residuals(data, model, &cp);
        cp[j] = c[j] - h;
        let down = residuals(data, model, &cp);
        cp[j] = c[j];
        jac.set_column(j, &((up - down) / (2.0 * h)));
    }
    jac
}

fn fit(data: &Data, model: FitModel, mut c: Vec<f64>) -> Result<FitResult> {
    let n = data.t.len() as f64;
    let mut r = residuals(data, model, &c);
    let mut cost = r.norm_squared();
    let seed_cost = cost;
    let mut lambda = -1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(data, model, &c);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let max_diag = jtj.diagonal().max();
        if lambda < 0.0 {
            lambda = 1e-3 * max_diag;
        }
        let mut accepted = false;
        while lambda <= 1e20 * max_diag.max(1e-300) {
            let mut a = jtj.clone();
            for i in 0..c.len() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(c, s)| c + s).collect();
            let r_trial = residuals(data, model, &trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial <= cost {
                let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small_step = step.norm() <= STEP_TOLERANCE * (c_norm + STEP_TOLERANCE);
                let stalled = cost - cost_trial <= 1e-15 * cost;
                c = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 3.0).max(1e-15 * max_diag);
                accepted = true;
                converged = small_step || stalled;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: the seed region's minimum is reached
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitNonConvergence { iterations });
    }
    normalize(model, &mut c);
    Ok(FitResult {
        model,
        parameters: named_parameters(model, &c),
        residual_norm: (cost / n).sqrt(),
        seed_residual_norm: (seed_cost / n).sqrt(),
        converged,
        iterations,
        coefficients: c,
    })
}

/// Amplitude made nonnegative, phase wrapped to `(-pi, pi]`, frequency
/// made nonnegative.
fn normalize(model: FitModel, c: &mut [f64]) {
    let (ia, ip) = model.amplitude_phase_index();
    let i_f = match model {
        FitModel::DampedCosine => 1,
        FitModel::GaussianCosine => 2,
    };
    if c[i_f] < 0.0 {
        c[i_f] = -c[i_f];
        c[ip] = -c[ip];
    }
    if c[ia] < 0.0 {
        c[ia] = -c[ia];
        c[ip] += PI;
    }
    c[ip] = wrap_phase(c[ip]);
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn param(name: &str, value: f64, unit: &str) -> FitParameter {
    FitParameter { name: name.into(), value, unit: unit.into() }
}

fn named_parameters(model: FitModel, c: &[f64]) -> Vec<FitParameter> {
    match model {
        FitModel::DampedCosine => vec![
            param("amplitude", c[0], ""),
            param("frequency", c[1], "MHz"),
            param("phase", c[2], "rad"),
            param("decay_time", if c[3] > 0.0 { 1.0 / c[3] } else { f64::INFINITY }, "us"),
            param("offset", c[4], ""),
            param("slope", c[5], "1/us"),
        ],
        FitModel::GaussianCosine => vec![
            param("amplitude", c[0], ""),
            param("t2_star", if c[1] > 0.0 { 1.0 / c[1].sqrt() } else { f64::INFINITY }, "us"),
            param("frequency", c[2], "MHz"),
            param("phase", c[3], "rad"),
            param("offset", c[4], ""),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
    }

    fn damped(a: f64, f: f64, phi: f64, tau: f64, b: f64, c: f64, ts: &[f64]) -> Vec<(f64, f64)> {
        ts.iter().map(|&t| (t, a * (-t / tau).exp() * (TAU * f * t + phi).cos() + b + c * t)).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn rabi_like_round_trip() {
        let ts = grid(10.0, 200);
        let pts = damped(1.0 / 3.0, 0.705, 0.0, 20.0, 2.0 / 3.0, 0.0, &ts);
        let fit = fit_damped_cosine(&pts).unwrap();
        assert!(fit.converged);
        assert!(rel(fit.amplitude(), 1.0 / 3.0) < 5e-3);
        assert!(rel(fit.frequency(), 0.705) < 5e-3);
        assert!(rel(fit.get("decay_time").unwrap(), 20.0) < 5e-3);
        assert!(rel(fit.get("offset").unwrap(), 2.0 / 3.0) < 5e-3);
        assert!(fit.get("slope").unwrap().abs() < 1e-6);
        assert!(fit.residual_norm <= fit.seed_residual_norm);
    }

    #[test]
    fn slope_is_absorbed() {
        let ts = grid(10.0, 200);
        let plain = fit_damped_cosine(&damped(0.5, 0.705, 0.3, 8.0, 0.5, 0.0, &ts)).unwrap();
        let sloped = fit_damped_cosine(&damped(0.5, 0.705, 0.3, 8.0, 0.5, 0.1, &ts)).unwrap();
        assert!(rel(sloped.frequency(), plain.frequency()) < 1e-6);
        assert!((sloped.get("slope").unwrap() - 0.1).abs() < 1e-6);
    }

    #[test]
    fn constant_data_has_no_oscillation() {
        let pts: Vec<(f64, f64)> = grid(5.0, 50).into_iter().map(|t| (t, 0.25)).collect();
        assert!(matches!(fit_damped_cosine(&pts), Err(Error::NoOscillation)));
        assert!(matches!(fit_gaussian_cosine(&pts), Err(Error::NoOscillation)));
        assert!(matches!(extract_period(&pts), Err(Error::NoOscillation)));
    }

    #[test]
    fn zero_amplitude_ramsey_has_no_oscillation() {
        let pts: Vec<(f64, f64)> = grid(3.0, 90).into_iter().map(|t| (t, 0.5)).collect();
        assert!(matches!(fit_gaussian_cosine(&pts), Err(Error::NoOscillation)));
    }

    #[test]
    fn ramsey_round_trip() {
        let ts = grid(3.0, 121);
        let pts: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| (t, 0.4 * (-(t / 1.0).powi(2)).exp() * (TAU * 1.4 * t + 0.2).cos() + 0.5))
            .collect();
        let fit = fit_gaussian_cosine(&pts).unwrap();
        assert!(rel(fit.get("t2_star").unwrap(), 1.0) < 0.01);
        assert!(rel(fit.frequency(), 1.4) < 0.01);
        assert!(rel(fit.amplitude(), 0.4) < 0.01);
        assert!((fit.get("phase").unwrap() - 0.2).abs() < 0.01);
    }

    #[test]
    fn period_of_pure_cosine() {
        let f: f64 = 0.705;
        let ts = grid(6.0, 150);
        let pts = damped(0.5, f, 0.0, f64::INFINITY, 0.5, 0.0, &ts);
        let period = extract_period(&pts).unwrap();
        assert!(rel(period, 1.0 / f) < 1e-3);
        assert!((1.0 / 0.705f64 - 1.418).abs() < 1e-3);
    }

    #[test]
    fn negative_amplitude_is_normalized() {
        let ts = grid(6.0, 150);
        let pts = damped(-0.5, 1.0, 0.0, 10.0, 0.5, 0.0, &ts);
        let fit = fit_damped_cosine(&pts).unwrap();
        assert!(fit.amplitude() > 0.0);
        let phi = fit.get("phase").unwrap();
        assert!((phi.abs() - PI).abs() < 1e-6, "phase {phi}");
        assert!(phi > -PI && phi <= PI);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_rejected() {
        let pts = vec![(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)];
        assert!(matches!(fit_damped_cosine(&pts), Err(Error::InsufficientData(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Heavily overdamped curves (less than about one cycle per decay
        // time) do not determine the frequency, so the sweep keeps
        // f * tau_d >= 1.
        #[test]
        fn damped_round_trip(
            f in 0.2f64..5.0,
            log_tau in 0.5f64.ln()..50f64.ln(),
            phi in -3.0f64..3.0,
            a in 0.1f64..1.0,
            b in -0.5f64..0.5,
        ) {
            let tau = log_tau.exp();
            prop_assume!(f * tau >= 1.0);
            // four periods at 16 points per period
            let t_max = 4.0 / f;
            let ts = grid(t_max, 65);
            let pts = damped(a, f, phi, tau, b, 0.0, &ts);
            let fit = fit_damped_cosine(&pts).unwrap();
            prop_assert!(rel(fit.frequency(), f) < 0.01, "f {} vs {}", fit.frequency(), f);
            prop_assert!(rel(fit.get("decay_time").unwrap(), tau) < 0.01, "tau {} vs {}", fit.get("decay_time").unwrap(), tau);
            prop_assert!(rel(fit.amplitude(), a) < 0.01);
            prop_assert!(fit.residual_norm <= fit.seed_residual_norm);
        }

        #[test]
        fn gaussian_round_trip(
            f in 0.2f64..5.0,
            t2 in 0.5f64..50.0,
            phi in -3.0f64..3.0,
            a in 0.1f64..1.0,
        ) {
            prop_assume!(f * t2 >= 1.0);
            let t_max = (4.0 / f).max(1.5 * t2.min(20.0 / f));
            let ts = grid(t_max, ((t_max * f * 16.0) as usize).max(65));
            let pts: Vec<(f64, f64)> = ts
                .iter()
                .map(|&t| (t, a * (-(t / t2).powi(2)).exp() * (TAU * f * t + phi).cos() + 0.5))
                .collect();
            let fit = fit_gaussian_cosine(&pts).unwrap();
            prop_assert!(rel(fit.frequency(), f) < 0.01);
            prop_assert!(rel(fit.get("t2_star").unwrap(), t2) < 0.01, "t2 {} vs {}", fit.get("t2_star").unwrap(), t2);
        }

        #[test]
        fn frequency_invariant_under_scaling(s in 0.1f64..10.0) {
            let ts = grid(8.0, 160);
            let base = damped(0.4, 0.9, 0.5, 6.0, 0.5, 0.0, &ts);
            let scaled: Vec<(f64, f64)> = base.iter().map(|(t, y)| (*t, s * y)).collect();
            let f0 = fit_damped_cosine(&base).unwrap().frequency();
            let f1 = fit_damped_cosine(&scaled).unwrap().frequency();
            prop_assert!(rel(f1, f0) < 1e-6);
        }
    }
}
