//! Fixed-step fourth-order Runge-Kutta integration of the master equation,
//! and a matrix-exponential reference propagator for constant fields.
//!
//! The integrator works on a packed real representation of the Hermitian
//! state (nine reals). Between consecutive knots (pulse breakpoints and
//! requested sample times) it takes `n` equal steps of length at most `dt`,
//! so every sample time is hit exactly and no step straddles a pulse edge.
//!
//! On knot intervals where both fields are constant the RK4 step is a fixed
//! 9x9 real matrix `M`; the `n` steps are then applied as `M^n` built by
//! repeated squaring. This is the same RK4 result up to rounding and makes
//! square-pulse experiments cheap.

use nalgebra::SMatrix;
use num_complex::Complex64 as C64;

use crate::density::DensityMatrix;
use crate::dynamics::{dissipator, hamiltonian, FieldSample, LambdaParams};
use crate::error::{Error, Result};
use crate::pulses::PulseSequence;

/// Largest phase advance per step, in radians, for the default step size.
pub const DEFAULT_STEP_PHASE: f64 = 0.025;
/// Upper bound on the default step when nothing in the problem is fast.
pub const MAX_DEFAULT_STEP: f64 = 1e-3;
/// Allowed trace drift before the run is declared unconverged.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

type Vec9 = [f64; 9];
type Mat9 = [[f64; 9]; 9];

/// Step such that `dt * (|delta| + omega_plus + omega_minus + 2 gamma + ...)`
/// stays at [`DEFAULT_STEP_PHASE`] for the largest fields in the sequence.
pub fn default_time_step(params: &LambdaParams, seq: &PulseSequence) -> f64 {
    default_time_step_for(params, seq.max_fields())
}

pub fn default_time_step_for(params: &LambdaParams, max_fields: FieldSample) -> f64 {
    let rate = params.delta_avg.abs()
        + 0.5 * params.delta_two_photon.abs()
        + max_fields.omega_plus
        + max_fields.omega_minus
        + 2.0 * params.gamma_repop
        + params.gamma_opt
        + params.leak_rate;
    if rate > 0.0 {
        (DEFAULT_STEP_PHASE / rate).min(MAX_DEFAULT_STEP)
    } else {
        MAX_DEFAULT_STEP
    }
}

/// Coefficients of the packed equation of motion.
#[derive(Clone, Copy)]
struct Kernel {
    d1: f64,
    d2: f64,
    repop: f64,
    exc_loss: f64,
    gamma_opt: f64,
    gamma_spin: f64,
}

impl Kernel {
    fn new(p: &LambdaParams) -> Self {
        Self {
            d1: p.delta_avg - 0.5 * p.delta_two_photon,
            d2: p.delta_avg + 0.5 * p.delta_two_photon,
            repop: p.gamma_repop,
            exc_loss: 2.0 * p.gamma_repop + p.leak_rate,
            gamma_opt: p.gamma_opt,
            gamma_spin: p.gamma_spin,
        }
    }

    /// Packed form of `-i[H, rho] + D(rho)`; layout as
    /// [`DensityMatrix::to_compact`].
    #[inline(always)]
    fn rhs(&self, f: FieldSample, x: &Vec9) -> Vec9 {
        let a = 0.5 * f.omega_minus;
        let b = 0.5 * f.omega_plus;
        let [p1, p2, p3, r12, i12, r13, i13, r23, i23] = *x;
        let dd = self.d1 - self.d2;
        // commutator K = H rho - rho H, upper triangle
        let k12_re = dd * r12 + a * r23 - b * r13;
        let k12_im = dd * i12 - a * i23 - b * i13;
        let k13_re = self.d1 * r13 + a * (p3 - p1) - b * r12;
        let k13_im = self.d1 * i13 - b * i12;
        let k23_re = self.d2 * r23 + b * (p3 - p2) - a * r12;
        let k23_im = self.d2 * i23 + a * i12;
        let go = self.gamma_opt;
        let gs = self.gamma_spin;
        [
            -2.0 * a * i13 + self.repop * p3,
            -2.0 * b * i23 + self.repop * p3,
            2.0 * (a * i13 + b * i23) - self.exc_loss * p3,
            k12_im - gs * r12,
            -k12_re - gs * i12,
            k13_im - go * r13,
            -k13_re - go * i13,
            k23_im - go * r23,
            -k23_re - go * i23,
        ]
    }

    #[inline(always)]
    fn rk4_step(&self, x: &Vec9, h: f64, f0: FieldSample, fm: FieldSample, f1: FieldSample) -> Vec9 {
        let k1 = self.rhs(f0, x);
        let k2 = self.rhs(fm, &axpy(x, 0.5 * h, &k1));
        let k3 = self.rhs(fm, &axpy(x, 0.5 * h, &k2));
        let k4 = self.rhs(f1, &axpy(x, h, &k3));
        let s = h / 6.0;
        let mut out = *x;
        for i in 0..9 {
            out[i] += s * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        out
    }

    /// One RK4 step with constant fields as a matrix acting on packed states.
    fn step_matrix(&self, f: FieldSample, h: f64) -> Mat9 {
        let mut m = [[0.0; 9]; 9];
        for j in 0..9 {
            let mut e = [0.0; 9];
            e[j] = 1.0;
            let col = self.rk4_step(&e, h, f, f, f);
            for i in 0..9 {
                m[i][j] = col[i];
            }
        }
        m
    }
}

#[inline(always)]
fn axpy(x: &Vec9, s: f64, k: &Vec9) -> Vec9 {
    let mut out = *x;
    for i in 0..9 {
        out[i] += s * k[i];
    }
    out
}

fn mat_mul(a: &Mat9, b: &Mat9) -> Mat9 {
    let mut c = [[0.0; 9]; 9];
    for i in 0..9 {
        for k in 0..9 {
            let aik = a[i][k];
            for j in 0..9 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

fn mat_vec(a: &Mat9, x: &Vec9) -> Vec9 {
    let mut y = [0.0; 9];
    for i in 0..9 {
        let mut s = 0.0;
        for j in 0..9 {
            s += a[i][j] * x[j];
        }
        y[i] = s;
    }
    y
}

fn mat_pow(m: &Mat9, mut n: u64) -> Mat9 {
    let mut result = [[0.0; 9]; 9];
    for (i, row) in result.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut base = *m;
    let mut first = true;
    while n > 0 {
        if n & 1 == 1 {
            result = if first { base } else { mat_mul(&result, &base) };
            first = false;
        }
        n >>= 1;
        if n > 0 {
            base = mat_mul(&base, &base);
        }
    }
    result
}

/// Remembers the last constant-field map so scans with evenly spaced
/// samples reuse it.
struct MapCache {
    key: Option<(u64, u64, u64, u64)>,
    map: Mat9,
}

impl MapCache {
    fn new() -> Self {
        Self { key: None, map: [[0.0; 9]; 9] }
    }

    fn get(&mut self, kernel: &Kernel, f: FieldSample, h: f64, n: u64) -> &Mat9 {
        let key = (f.omega_plus.to_bits(), f.omega_minus.to_bits(), h.to_bits(), n);
        if self.key != Some(key) {
            self.map = mat_pow(&kernel.step_matrix(f, h), n);
            self.key = Some(key);
        }
        &self.map
    }
}

fn steps_for(len: f64, dt: f64) -> u64 {
    // tolerate rounding in len/dt so an exact multiple is not bumped up
    ((len / dt) * (1.0 - 1e-12)).ceil().max(1.0) as u64
}

fn check_state(x: &Vec9, t: f64, leak: bool) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence { time: t, reason: "state became non-finite".into() });
    }
    let tr = x[0] + x[1] + x[2];
    let trace_bad = if leak { tr > 1.0 + TRACE_DRIFT_LIMIT || tr < -TRACE_DRIFT_LIMIT } else { (tr - 1.0).abs() > TRACE_DRIFT_LIMIT };
    if trace_bad {
        return Err(Error::NonConvergence { time: t, reason: format!("trace drifted to {tr}") });
    }
    if x[..3].iter().any(|&p| !(-TRACE_DRIFT_LIMIT..=1.0 + TRACE_DRIFT_LIMIT).contains(&p)) {
        return Err(Error::NonConvergence {
            time: t,
            reason: format!("population left [0, 1]: ({}, {}, {})", x[0], x[1], x[2]),
        });
    }
    Ok(())
}

fn check_inputs(seq: &PulseSequence, sample_times: &[f64], dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be > 0, got {dt}")));
    }
    for w in sample_times.windows(2) {
        if !(w[1] >= w[0]) {
            return Err(Error::InvalidArgument("sample times must be nondecreasing".into()));
        }
    }
    for &t in sample_times {
        if !(0.0..=seq.span).contains(&t) {
            return Err(Error::InvalidWindow { time: t, span: seq.span });
        }
    }
    Ok(())
}

/// Integrates the master equation from `t = 0` and returns the state at
/// each of `sample_times`.
///
/// `sample_times` must be nondecreasing and inside `[0, seq.span]`. The step
/// used between two knots is the largest value `<= dt` that divides the
/// interval evenly, so every sample time lies exactly on a step boundary.
/// Fields are evaluated at the RK4 stage times `t`, `t + h/2`, `t + h`.
pub fn propagate(
    rho0: &DensityMatrix,
    seq: &PulseSequence,
    params: &LambdaParams,
    sample_times: &[f64],
    dt: f64,
) -> Result<Vec<(f64, DensityMatrix)>> {
    check_inputs(seq, sample_times, dt)?;
    params.validate()?;

    let kernel = Kernel::new(params);
    let leak = params.leak_rate > 0.0;
    let breakpoints = seq.breakpoints();
    let mut cache = MapCache::new();
    let mut x = rho0.to_compact();
    let mut t = 0.0;
    let mut bp = breakpoints.iter().peekable();
    let mut out = Vec::with_capacity(sample_times.len());

    for &target in sample_times {
        while t < target {
            while bp.next_if(|&&b| b <= t).is_some() {}
            let next = bp.peek().map_or(target, |&&b| b.min(target));
            let seg = seq.segment(t, next);
            let n = steps_for(next - t, dt);
            let h = (next - t) / n as f64;
            match seg.constant() {
                Some(f) => {
                    x = mat_vec(cache.get(&kernel, f, h, n), &x);
                }
                None => {
                    let mut f0 = seg.fields(t);
                    for k in 0..n {
                        let t0 = t + k as f64 * h;
                        let t1 = if k + 1 == n { next } else { t + (k + 1) as f64 * h };
                        let fm = seg.fields(t0 + 0.5 * h);
                        let f1 = seg.fields(t1);
                        x = kernel.rk4_step(&x, h, f0, fm, f1);
                        f0 = f1;
                    }
                }
            }
            t = next;
            check_state(&x, t, leak)?;
        }
        out.push((target, DensityMatrix::from_compact(&x)));
    }
    Ok(out)
}

/// Members integrated side by side by [`propagate_batch`].
const LANES: usize = 8;

type Lanes = [f64; LANES];
type Vec9x = [Lanes; 9];

/// Kernel coefficients of up to [`LANES`] members, one per lane.
struct BatchKernel {
    d1: Lanes,
    d2: Lanes,
    repop: Lanes,
    exc_loss: Lanes,
    gamma_opt: Lanes,
    gamma_spin: Lanes,
}

impl BatchKernel {
    fn new(kernels: &[Kernel; LANES]) -> Self {
        Self {
            d1: kernels.each_ref().map(|k| k.d1),
            d2: kernels.each_ref().map(|k| k.d2),
            repop: kernels.each_ref().map(|k| k.repop),
            exc_loss: kernels.each_ref().map(|k| k.exc_loss),
            gamma_opt: kernels.each_ref().map(|k| k.gamma_opt),
            gamma_spin: kernels.each_ref().map(|k| k.gamma_spin),
        }
    }

    /// Same arithmetic as [`Kernel::rhs`], lane by lane.
    #[inline(always)]
    fn rhs(&self, f: FieldSample, x: &Vec9x) -> Vec9x {
        let a = 0.5 * f.omega_minus;
        let b = 0.5 * f.omega_plus;
        let mut out = [[0.0; LANES]; 9];
        for l in 0..LANES {
            let (d1, d2) = (self.d1[l], self.d2[l]);
            let (go, gs) = (self.gamma_opt[l], self.gamma_spin[l]);
            let (p1, p2, p3) = (x[0][l], x[1][l], x[2][l]);
            let (r12, i12, r13, i13, r23, i23) = (x[3][l], x[4][l], x[5][l], x[6][l], x[7][l], x[8][l]);
            let dd = d1 - d2;
            let k12_re = dd * r12 + a * r23 - b * r13;
            let k12_im = dd * i12 - a * i23 - b * i13;
            let k13_re = d1 * r13 + a * (p3 - p1) - b * r12;
            let k13_im = d1 * i13 - b * i12;
            let k23_re = d2 * r23 + b * (p3 - p2) - a * r12;
            let k23_im = d2 * i23 + a * i12;
            out[0][l] = -2.0 * a * i13 + self.repop[l] * p3;
            out[1][l] = -2.0 * b * i23 + self.repop[l] * p3;
            out[2][l] = 2.0 * (a * i13 + b * i23) - self.exc_loss[l] * p3;
            out[3][l] = k12_im - gs * r12;
            out[4][l] = -k12_re - gs * i12;
            out[5][l] = k13_im - go * r13;
            out[6][l] = -k13_re - go * i13;
            out[7][l] = k23_im - go * r23;
            out[8][l] = -k23_re - go * i23;
        }
        out
    }

    #[inline(always)]
    fn rk4_step(&self, x: &Vec9x, h: f64, f0: FieldSample, fm: FieldSample, f1: FieldSample) -> Vec9x {
        let k1 = self.rhs(f0, x);
        let k2 = self.rhs(fm, &axpy_lanes(x, 0.5 * h, &k1));
        let k3 = self.rhs(fm, &axpy_lanes(x, 0.5 * h, &k2));
        let k4 = self.rhs(f1, &axpy_lanes(x, h, &k3));
        let s = h / 6.0;
        let mut out = *x;
        for i in 0..9 {
            for l in 0..LANES {
                out[i][l] += s * (k1[i][l] + 2.0 * (k2[i][l] + k3[i][l]) + k4[i][l]);
            }
        }
        out
    }
}

#[inline(always)]
fn axpy_lanes(x: &Vec9x, s: f64, k: &Vec9x) -> Vec9x {
    let mut out = *x;
    for i in 0..9 {
        for l in 0..LANES {
            out[i][l] += s * k[i][l];
        }
    }
    out
}

/// [`propagate`] for several parameter sets sharing one pulse sequence,
/// one step size and one set of sample times. Returns one trajectory per
/// member, in input order.
///
/// Members are integrated in groups, several per step, which is much faster
/// than separate calls when the sequence has ramps. Each trajectory is
/// bit-identical to the corresponding [`propagate`] call.
pub fn propagate_batch(
    rho0: &DensityMatrix,
    seq: &PulseSequence,
    params: &[LambdaParams],
    sample_times: &[f64],
    dt: f64,
) -> Result<Vec<Vec<(f64, DensityMatrix)>>> {
    check_inputs(seq, sample_times, dt)?;
    for p in params {
        p.validate()?;
    }
    let mut out = Vec::with_capacity(params.len());
    for group in params.chunks(LANES) {
        out.extend(propagate_group(rho0, seq, group, sample_times, dt)?);
    }
    Ok(out)
}

type Trajectories = Result<Vec<Vec<(f64, DensityMatrix)>>>;

fn propagate_group(
    rho0: &DensityMatrix,
    seq: &PulseSequence,
    group: &[LambdaParams],
    sample_times: &[f64],
    dt: f64,
) -> Trajectories {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx512f") {
        // SAFETY: the required CPU feature was detected at run time.
        return unsafe { propagate_group_avx512(rho0, seq, group, sample_times, dt) };
    }
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at run time.
        return unsafe { propagate_group_avx2(rho0, seq, group, sample_times, dt) };
    }
    propagate_group_generic(rho0, seq, group, sample_times, dt)
}

// Same code compiled for wider vectors. No fused multiply-add is emitted
// without fast-math, so results match the generic build bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn propagate_group_avx2(
    rho0: &DensityMatrix,
    seq: &PulseSequence,
    group: &[LambdaParams],
    sample_times: &[f64],
    dt: f64,
) -> Trajectories {
    propagate_group_generic(rho0, seq, group, sample_times, dt)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn propagate_group_avx512(
    rho0: &DensityMatrix,
    seq: &PulseSequence,
    group: &[LambdaParams],
    sample_times: &[f64],
    dt: f64,
) -> Trajectories {
    propagate_group_generic(rho0, seq, group, sample_times, dt)
}

#[inline(always)]
fn propagate_group_generic(
    rho0: &DensityMatrix,
    seq: &PulseSequence,
    group: &[LambdaParams],
    sample_times: &[f64],
    dt: f64,
) -> Trajectories {
    let used = group.len();
    // idle lanes repeat the last member and are dropped at the end
    let kernels: [Kernel; LANES] = std::array::from_fn(|l| Kernel::new(&group[l.min(used - 1)]));
    let batch = BatchKernel::new(&kernels);
    let leaks: Vec<bool> = group.iter().map(|p| p.leak_rate > 0.0).collect();
    let mut caches: Vec<MapCache> = (0..used).map(|_| MapCache::new()).collect();
    let x0 = rho0.to_compact();
    let mut x: Vec9x = std::array::from_fn(|i| [x0[i]; LANES]);
    let breakpoints = seq.breakpoints();
    let mut bp = breakpoints.iter().peekable();
    let mut t = 0.0;
    let mut out: Vec<Vec<(f64, DensityMatrix)>> = (0..used).map(|_| Vec::with_capacity(sample_times.len())).collect();
    let lane = |x: &Vec9x, l: usize| -> Vec9 { std::array::from_fn(|i| x[i][l]) };

    for &target in sample_times {
        while t < target {
            while bp.next_if(|&&b| b <= t).is_some() {}
            let next = bp.peek().map_or(target, |&&b| b.min(target));
            let seg = seq.segment(t, next);
            let n = steps_for(next - t, dt);
            let h = (next - t) / n as f64;
            match seg.constant() {
                Some(f) => {
                    for (l, cache) in caches.iter_mut().enumerate() {
                        let y = mat_vec(cache.get(&kernels[l], f, h, n), &lane(&x, l));
                        for i in 0..9 {
                            x[i][l] = y[i];
                        }
                    }
                }
                None => {
                    let mut f0 = seg.fields(t);
                    for k in 0..n {
                        let t0 = t + k as f64 * h;
                        let t1 = if k + 1 == n { next } else { t + (k + 1) as f64 * h };
                        let fm = seg.fields(t0 + 0.5 * h);
                        let f1 = seg.fields(t1);
                        x = batch.rk4_step(&x, h, f0, fm, f1);
                        f0 = f1;
                    }
                }
            }
            t = next;
            for (l, &leak) in leaks.iter().enumerate() {
                check_state(&lane(&x, l), t, leak)?;
            }
        }
        for (l, traj) in out.iter_mut().enumerate() {
            traj.push((target, DensityMatrix::from_compact(&lane(&x, l))));
        }
    }
    Ok(out)
}

/// Final state only; see [`propagate`].
pub fn propagate_to_end(rho0: &DensityMatrix, seq: &PulseSequence, params: &LambdaParams, dt: f64) -> Result<DensityMatrix> {
    Ok(propagate(rho0, seq, params, &[seq.span], dt)?.pop().expect("one sample").1)
}

type CMat9 = SMatrix<C64, 9, 9>;

/// The equation of motion as a 9x9 complex matrix acting on the row-major
/// vectorization of `rho`, assembled from [`hamiltonian`] and [`dissipator`].
pub fn superoperator(params: &LambdaParams, fields: &FieldSample) -> CMat9 {
    let h = hamiltonian(params, fields);
    let mut l = CMat9::zeros();
    let minus_i = C64::new(0.0, -1.0);
    for j in 0..3 {
        for k in 0..3 {
            // column for basis matrix E_jk
            let mut e = DensityMatrix::zeros();
            e[(j, k)] = C64::new(1.0, 0.0);
            let d = dissipator(params, &e);
            let col = 3 * j + k;
            for a in 0..3 {
                for b in 0..3 {
                    // (H E_jk)_ab = H_aj delta_kb ; (E_jk H)_ab = delta_aj H_kb
                    let mut comm = C64::new(0.0, 0.0);
                    if k == b {
                        comm += h[a][j];
                    }
                    if a == j {
                        comm -= h[k][b];
                    }
                    l[(3 * a + b, col)] = minus_i * comm + d[a][b];
                }
            }
        }
    }
    l
}

/// Reference propagator for constant fields: `exp(L t)` applied to the
/// vectorized state.
pub fn piecewise_constant_oracle(rho0: &DensityMatrix, fields: &FieldSample, params: &LambdaParams, t: f64) -> DensityMatrix {
    let l = superoperator(params, fields) * C64::new(t, 0.0);
    let u = l.exp();
    let v = nalgebra::SVector::<C64, 9>::from_fn(|i, _| rho0.elements[i / 3][i % 3]);
    let w = u * v;
    let mut out = DensityMatrix::zeros();
    for i in 0..9 {
        out.elements[i / 3][i % 3] = w[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{EXC, G1, G2};
    use crate::dynamics::{dark_state_density, effective_rabi_frequency, mhz_to_angular, rhs};
    use crate::pulses::{make_rabi_pair, Envelope};
    use proptest::prelude::*;

    fn random_hermitian(seed: &[f64; 9]) -> DensityMatrix {
        DensityMatrix::from_compact(seed)
    }

    proptest! {
        #[test]
        fn packed_rhs_matches_matrix_rhs(
            x in proptest::array::uniform9(-1.0f64..1.0),
            delta in -50.0f64..50.0,
            dtp in -3.0f64..3.0,
            op in 0.0f64..10.0,
            om in 0.0f64..10.0,
            leak in 0.0f64..2.0,
        ) {
            let mut p = LambdaParams::nv_defaults(0.0, 0.0);
            p.delta_avg = delta;
            p.delta_two_photon = dtp;
            p.leak_rate = leak;
            let f = FieldSample::new(op, om);
            let rho = random_hermitian(&x);
            let full = rhs(&p, &f, &rho);
            let packed = DensityMatrix::from_compact(&Kernel::new(&p).rhs(f, &x));
            let full = DensityMatrix::from_elements(full);
            prop_assert!(full.max_abs_diff(&packed) < 1e-12);
        }

        #[test]
        fn rhs_is_linear(
            x in proptest::array::uniform9(-1.0f64..1.0),
            y in proptest::array::uniform9(-1.0f64..1.0),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let p = LambdaParams::nv_defaults(900.0, 1.3);
            let f = FieldSample::new(mhz_to_angular(40.0), mhz_to_angular(30.0));
            let (r1, r2) = (random_hermitian(&x), random_hermitian(&y));
            let combo = r1.scale(alpha) + r2.scale(beta);
            let lhs = DensityMatrix::from_elements(rhs(&p, &f, &combo));
            let rhs_sum = DensityMatrix::from_elements(rhs(&p, &f, &r1)).scale(alpha)
                + DensityMatrix::from_elements(rhs(&p, &f, &r2)).scale(beta);
            prop_assert!(lhs.max_abs_diff(&rhs_sum) < 1e-9);
        }

        #[test]
        fn rhs_traceless_and_hermitian(x in proptest::array::uniform9(-1.0f64..1.0)) {
            let p = LambdaParams::nv_defaults(1500.0, 0.4);
            let f = FieldSample::new(mhz_to_angular(46.0), mhz_to_angular(20.0));
            let r = DensityMatrix::from_elements(rhs(&p, &f, &random_hermitian(&x)));
            prop_assert!(r.trace().norm() < 1e-10);
            prop_assert!(r.hermiticity_error() < 1e-10);
        }
    }

    #[test]
    fn stationary_without_fields_or_decay() {
        let p = LambdaParams::lossless(mhz_to_angular(1500.0), 0.0);
        let seq = PulseSequence::empty(3.0).unwrap();
        let dt = default_time_step(&p, &seq);
        let out = propagate(&DensityMatrix::basis(G1), &seq, &p, &[0.0, 1.0, 3.0], dt).unwrap();
        for (_, rho) in out {
            assert!(rho.max_abs_diff(&DensityMatrix::basis(G1)) < 1e-14);
        }
    }

    #[test]
    fn excited_state_decays_at_twice_gamma() {
        let p = LambdaParams::nv_defaults(1500.0, 0.0);
        let seq = PulseSequence::empty(0.02).unwrap();
        let t = 0.0114;
        let dt = default_time_step(&p, &seq);
        let out = propagate(&DensityMatrix::basis(EXC), &seq, &p, &[t], dt).unwrap();
        let pe = out[0].1.population(EXC);
        let expected = (-2.0 * p.gamma_repop * t).exp();
        assert!((pe - expected).abs() < 1e-9, "{pe} vs {expected}");
        assert!((pe - (-1.0f64).exp()).abs() < 0.01);
        let oracle = piecewise_constant_oracle(&DensityMatrix::basis(EXC), &FieldSample::ZERO, &p, t);
        assert!((oracle.population(EXC) - expected).abs() < 1e-12);
    }

    #[test]
    fn one_rabi_period_returns_to_g1() {
        let p = LambdaParams::lossless(mhz_to_angular(1500.0), 0.0);
        let peak = mhz_to_angular(46.0);
        let wr = effective_rabi_frequency(peak, peak, p.delta_avg).unwrap();
        let period = std::f64::consts::TAU / wr;
        let seq = make_rabi_pair(peak, period).unwrap();
        let dt = default_time_step(&p, &seq);
        let rho = propagate_to_end(&DensityMatrix::basis(G1), &seq, &p, dt).unwrap();
        assert!(rho.population(G1) > 0.98, "g1 = {}", rho.population(G1));
        let half = propagate(&DensityMatrix::basis(G1), &seq, &p, &[0.5 * period], dt).unwrap();
        assert!(half[0].1.population(G2) > 0.98);
    }

    #[test]
    fn oracle_identity_without_dynamics() {
        let p = LambdaParams::lossless(0.0, 0.0);
        let rho = dark_state_density(1.0, 2.0).unwrap();
        let out = piecewise_constant_oracle(&rho, &FieldSample::ZERO, &p, 5.0);
        assert!(out.max_abs_diff(&rho) < 1e-14);
    }

    #[test]
    fn constant_segment_agrees_with_oracle() {
        let p = LambdaParams::nv_defaults(900.0, 0.8);
        let f = FieldSample::new(mhz_to_angular(48.0), mhz_to_angular(40.0));
        let seq = PulseSequence::new(
            vec![Envelope::square(f.omega_plus, 0.0, 0.1).unwrap()],
            vec![Envelope::square(f.omega_minus, 0.0, 0.1).unwrap()],
            0.1,
        )
        .unwrap();
        let rho0 = DensityMatrix::basis(G1);
        let dt = default_time_step(&p, &seq);
        let rk = propagate_to_end(&rho0, &seq, &p, dt).unwrap();
        let ex = piecewise_constant_oracle(&rho0, &f, &p, 0.1);
        assert!(rk.max_abs_diff(&ex) < 1e-8, "{}", rk.max_abs_diff(&ex));
    }

    #[test]
    fn power_path_matches_explicit_steps() {
        // A trapezoid with zero-length ramps is constant but routed through
        // the explicit loop when given a tiny ramp; compare both routes on
        // the flat part.
        let p = LambdaParams::nv_defaults(900.0, 0.3);
        let f = FieldSample::equal(mhz_to_angular(48.0));
        let kernel = Kernel::new(&p);
        let h = 1e-5;
        let n = 1000;
        let mut x = DensityMatrix::basis(G1).to_compact();
        for _ in 0..n {
            x = kernel.rk4_step(&x, h, f, f, f);
        }
        let y = mat_vec(&mat_pow(&kernel.step_matrix(f, h), n), &DensityMatrix::basis(G1).to_compact());
        for i in 0..9 {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_windows() {
        let p = LambdaParams::lossless(1.0, 0.0);
        let seq = PulseSequence::empty(1.0).unwrap();
        let rho = DensityMatrix::basis(G1);
        assert!(matches!(propagate(&rho, &seq, &p, &[1.5], 1e-3), Err(Error::InvalidWindow { .. })));
        assert!(matches!(propagate(&rho, &seq, &p, &[-0.1], 1e-3), Err(Error::InvalidWindow { .. })));
        assert!(propagate(&rho, &seq, &p, &[0.5, 0.2], 1e-3).is_err());
        assert!(propagate(&rho, &seq, &p, &[0.5], 0.0).is_err());
    }

    #[test]
    fn oversized_step_is_reported() {
        let p = LambdaParams::lossless(mhz_to_angular(1500.0), 0.0);
        let seq = make_rabi_pair(mhz_to_angular(46.0), 1.0).unwrap();
        let err = propagate(&DensityMatrix::basis(G1), &seq, &p, &[1.0], 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }), "{err:?}");
    }

    #[test]
    fn leak_reduces_trace() {
        let mut p = LambdaParams::nv_defaults(0.0, 0.0);
        p.leak_rate = 10.0;
        let seq = make_rabi_pair(mhz_to_angular(20.0), 0.5).unwrap();
        let dt = default_time_step(&p, &seq);
        let rho = propagate_to_end(&DensityMatrix::basis(G1), &seq, &p, dt).unwrap();
        assert!(rho.trace().re < 0.99);
        assert!(rho.min_eigenvalue() > -1e-9);
    }

    #[test]
    fn batch_matches_single_runs_bitwise() {
        let seq = crate::pulses::make_stirap_pair(
            mhz_to_angular(48.0),
            1.5,
            0.6,
            1.9,
            crate::pulses::EnvelopeShape::Sin2Ramp,
        )
        .unwrap();
        let members: Vec<LambdaParams> = (0..11)
            .map(|k| {
                let mut p = LambdaParams::nv_defaults(900.0 + 40.0 * k as f64, 0.3 * k as f64 - 1.5);
                p.leak_rate = if k == 4 { 0.5 } else { 0.0 };
                p
            })
            .collect();
        let dt = default_time_step(&members[10], &seq);
        let times = [0.2, 0.9, 1.9];
        let batch = propagate_batch(&DensityMatrix::basis(G1), &seq, &members, &times, dt).unwrap();
        assert_eq!(batch.len(), members.len());
        for (p, traj) in members.iter().zip(&batch) {
            let single = propagate(&DensityMatrix::basis(G1), &seq, p, &times, dt).unwrap();
            assert_eq!(&single, traj);
        }
    }
}
