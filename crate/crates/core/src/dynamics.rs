//! Rotating-frame Hamiltonian, dissipator and equation of motion of the
//! lambda system, plus the closed-form limits used to cross-check the
//! numerical propagator.
//!
//! All frequencies and rates here are angular, in rad/us.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;

use crate::density::{DensityMatrix, Mat3, EXC, G1, G2, ZERO3};
use crate::error::{Error, Result};

/// Optical decay and decoherence rate of the excited level, as an ordinary
/// frequency in MHz.
pub const NV_OPTICAL_RATE_MHZ: f64 = 7.0;
/// Intrinsic electron spin coherence time in us.
pub const NV_SPIN_T2_US: f64 = 200.0;

pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

pub fn angular_to_mhz(w: f64) -> f64 {
    w / TAU
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaParams {
    /// Average one-photon detuning of both fields from the excited level.
    pub delta_avg: f64,
    /// Detuning from two-photon (Raman) resonance.
    pub delta_two_photon: f64,
    /// Repopulation rate of each ground state from the excited level.
    pub gamma_repop: f64,
    /// Decay rate of the optical coherences.
    pub gamma_opt: f64,
    /// Decay rate of the ground-state coherence.
    pub gamma_spin: f64,
    /// Loss of excited population out of the three-level system.
    pub leak_rate: f64,
}

impl LambdaParams {
    /// No decay of any kind.
    pub fn lossless(delta_avg: f64, delta_two_photon: f64) -> Self {
        Self {
            delta_avg,
            delta_two_photon,
            gamma_repop: 0.0,
            gamma_opt: 0.0,
            gamma_spin: 0.0,
            leak_rate: 0.0,
        }
    }

    /// Diamond NV rates: 7 MHz optical decay and decoherence, spin coherence
    /// set by T2 = 200 us. Detunings given as ordinary frequencies in MHz.
    pub fn nv_defaults(delta_avg_mhz: f64, delta_two_photon_mhz: f64) -> Self {
        let gamma = mhz_to_angular(NV_OPTICAL_RATE_MHZ);
        Self {
            delta_avg: mhz_to_angular(delta_avg_mhz),
            delta_two_photon: mhz_to_angular(delta_two_photon_mhz),
            gamma_repop: gamma,
            gamma_opt: gamma,
            gamma_spin: 1.0 / NV_SPIN_T2_US,
            leak_rate: 0.0,
        }
    }

    pub fn with_delta_avg(mut self, delta_avg: f64) -> Self {
        self.delta_avg = delta_avg;
        self
    }

    pub fn with_delta_two_photon(mut self, delta_two_photon: f64) -> Self {
        self.delta_two_photon = delta_two_photon;
        self
    }

    pub fn without_decay(mut self) -> Self {
        self.gamma_repop = 0.0;
        self.gamma_opt = 0.0;
        self.gamma_spin = 0.0;
        self.leak_rate = 0.0;
        self
    }

    /// Rejects negative or non-finite rates. A dissipator with
    /// `gamma_opt < gamma_repop` is not completely positive; that case is
    /// only logged.
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("delta_avg", self.delta_avg),
            ("delta_two_photon", self.delta_two_photon),
            ("gamma_repop", self.gamma_repop),
            ("gamma_opt", self.gamma_opt),
            ("gamma_spin", self.gamma_spin),
            ("leak_rate", self.leak_rate),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} is not finite")));
            }
        }
        for (name, v) in &all[2..] {
            if *v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.gamma_opt < self.gamma_repop {
            log::warn!(
                "gamma_opt ({}) < gamma_repop ({}): dissipator is not completely positive",
                self.gamma_opt,
                self.gamma_repop
            );
        }
        Ok(())
    }
}

/// Instantaneous Rabi frequencies of the two fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub omega_plus: f64,
    pub omega_minus: f64,
}

impl FieldSample {
    pub const ZERO: FieldSample = FieldSample { omega_plus: 0.0, omega_minus: 0.0 };

    pub fn new(omega_plus: f64, omega_minus: f64) -> Self {
        Self { omega_plus, omega_minus }
    }

    pub fn equal(omega: f64) -> Self {
        Self::new(omega, omega)
    }
}

/// Rotating-wave Hamiltonian: ground states at `delta_avg -/+ delta_two_photon/2`,
/// the excited level at zero, `omega_minus/2` coupling g1-e and
/// `omega_plus/2` coupling g2-e.
pub fn hamiltonian(params: &LambdaParams, fields: &FieldSample) -> Mat3 {
    let d1 = params.delta_avg - 0.5 * params.delta_two_photon;
    let d2 = params.delta_avg + 0.5 * params.delta_two_photon;
    let a = C64::new(0.5 * fields.omega_minus, 0.0);
    let b = C64::new(0.5 * fields.omega_plus, 0.0);
    let z = C64::new(0.0, 0.0);
    [[d1.into(), z, a], [z, d2.into(), b], [a, b, z]]
}

/// Repopulation of both ground states from the excited level, decay of the
/// spin and optical coherences, and the optional leak of excited population.
pub fn dissipator(params: &LambdaParams, rho: &DensityMatrix) -> Mat3 {
    let r = &rho.elements;
    let pe = r[EXC][EXC];
    let gs = params.gamma_spin;
    let go = params.gamma_opt;
    let mut d = ZERO3;
    d[G1][G1] = pe * params.gamma_repop;
    d[G2][G2] = pe * params.gamma_repop;
    d[EXC][EXC] = -pe * (2.0 * params.gamma_repop + params.leak_rate);
    d[G1][G2] = -r[G1][G2] * gs;
    d[G2][G1] = -r[G2][G1] * gs;
    d[G1][EXC] = -r[G1][EXC] * go;
    d[EXC][G1] = -r[EXC][G1] * go;
    d[G2][EXC] = -r[G2][EXC] * go;
    d[EXC][G2] = -r[EXC][G2] * go;
    d
}

/// `d rho / dt = -i [H, rho] + D(rho)`.
pub fn rhs(params: &LambdaParams, fields: &FieldSample, rho: &DensityMatrix) -> Mat3 {
    let h = hamiltonian(params, fields);
    let r = &rho.elements;
    let mut out = dissipator(params, rho);
    let minus_i = C64::new(0.0, -1.0);
    for i in 0..3 {
        for j in 0..3 {
            let mut comm = C64::new(0.0, 0.0);
            for k in 0..3 {
                comm += h[i][k] * r[k][j] - r[i][k] * h[k][j];
            }
            out[i][j] += minus_i * comm;
        }
    }
    out
}

/// Ground-state Raman Rabi frequency in the far-detuned limit,
/// `omega_plus * omega_minus / (2 delta_avg)`.
pub fn effective_rabi_frequency(omega_plus: f64, omega_minus: f64, delta_avg: f64) -> Result<f64> {
    if delta_avg == 0.0 {
        return Err(Error::DivisionByZero("effective Rabi frequency needs a nonzero detuning"));
    }
    Ok(omega_plus * omega_minus / (2.0 * delta_avg))
}

/// Ground-state superposition decoupled from both fields, as amplitudes on
/// `(g1, g2)`.
///
/// The excited level couples to `omega_minus |g1> + omega_plus |g2>`, so the
/// orthogonal combination is `(omega_plus, -omega_minus)` normalized. Written
/// with the `omega_plus`-coupled state first this is the familiar
/// `omega_minus |+> - omega_plus |->`.
pub fn dark_state(omega_plus: f64, omega_minus: f64) -> Result<[f64; 2]> {
    let norm = omega_plus.hypot(omega_minus);
    if norm == 0.0 {
        return Err(Error::DegenerateInput("dark state undefined with both fields off"));
    }
    Ok([omega_plus / norm, -omega_minus / norm])
}

/// Projector onto [`dark_state`] embedded in the three-level space.
pub fn dark_state_density(omega_plus: f64, omega_minus: f64) -> Result<DensityMatrix> {
    let [c1, c2] = dark_state(omega_plus, omega_minus)?;
    Ok(DensityMatrix::from_ket([c1.into(), c2.into(), C64::new(0.0, 0.0)]))
}

pub type Mat2 = [[C64; 2]; 2];

/// Exact evolution of a two-level density matrix under
/// `H = (delta/2) sigma_z + (omega_r/2) sigma_x`, without decay.
pub fn effective_two_level_propagate(rho0: &Mat2, omega_r: f64, delta_two_photon: f64, t: f64) -> Mat2 {
    let gen = omega_r.hypot(delta_two_photon);
    let theta = 0.5 * gen * t;
    let (s, c) = theta.sin_cos();
    // U = cos(theta) I - i sin(theta) (n . sigma), n = (omega_r, 0, delta) / gen
    let (nx, nz) = if gen > 0.0 { (omega_r / gen, delta_two_photon / gen) } else { (0.0, 0.0) };
    let ci = C64::new(0.0, 1.0);
    let u: Mat2 = [
        [c - ci * s * nz, -ci * s * nx],
        [-ci * s * nx, c + ci * s * nz],
    ];
    let mut tmp = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                tmp[i][j] += u[i][k] * rho0[k][j];
            }
        }
    }
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                out[i][j] += tmp[i][k] * u[j][k].conj();
            }
        }
    }
    out
}
