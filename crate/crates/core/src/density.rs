//! Density matrices of the three-level system.
//!
//! Basis order is `(g1, g2, e)`: the two ground spin states followed by the
//! excited level. `g1` is the state coupled by the `omega_minus` field and
//! `g2` the one coupled by `omega_plus`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;

pub const G1: usize = 0;
pub const G2: usize = 1;
pub const EXC: usize = 2;

/// Tolerances used by [`DensityMatrix::validate`].
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Plain 3x3 complex matrix, row major.
pub type Mat3 = [[C64; 3]; 3];

pub(crate) const ZERO3: Mat3 = [[C64::new(0.0, 0.0); 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    pub elements: Mat3,
}

impl DensityMatrix {
    pub fn from_elements(elements: Mat3) -> Self {
        Self { elements }
    }

    pub fn zeros() -> Self {
        Self { elements: ZERO3 }
    }

    /// Projector onto basis state `k`.
    pub fn basis(k: usize) -> Self {
        let mut rho = Self::zeros();
        rho.elements[k][k] = C64::new(1.0, 0.0);
        rho
    }

    pub fn diagonal(p1: f64, p2: f64, p3: f64) -> Self {
        let mut rho = Self::zeros();
        rho.elements[0][0] = p1.into();
        rho.elements[1][1] = p2.into();
        rho.elements[2][2] = p3.into();
        rho
    }

    /// `|psi><psi|` for an (unnormalized) state vector.
    pub fn from_ket(psi: [C64; 3]) -> Self {
        let mut rho = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                rho.elements[i][j] = psi[i] * psi[j].conj();
            }
        }
        rho
    }

    pub fn population(&self, k: usize) -> f64 {
        self.elements[k][k].re
    }

    pub fn populations(&self) -> [f64; 3] {
        [self.population(G1), self.population(G2), self.population(EXC)]
    }

    pub fn trace(&self) -> C64 {
        self.elements[0][0] + self.elements[1][1] + self.elements[2][2]
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in i..3 {
                let d = (self.elements[i][j] - self.elements[j][i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_nalgebra();
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Checks the Hermitian, unit-trace and positivity invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(format!("not Hermitian (error {herm:e})"));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(format!("trace {tr} differs from 1"));
        }
        let lam = self.min_eigenvalue();
        if lam < -POSITIVITY_TOL {
            return Err(format!("negative eigenvalue {lam:e}"));
        }
        Ok(())
    }

    pub fn to_nalgebra(&self) -> Matrix3<C64> {
        Matrix3::from_fn(|i, j| self.elements[i][j])
    }

    pub fn from_nalgebra(m: &Matrix3<C64>) -> Self {
        let mut rho = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                rho.elements[i][j] = m[(i, j)];
            }
        }
        rho
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.elements[i][j] - other.elements[i][j]).norm());
            }
        }
        worst
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.elements.iter_mut() {
            for z in row.iter_mut() {
                *z *= s;
            }
        }
        out
    }

    /// Packs the Hermitian matrix into nine reals:
    /// `[p1, p2, p3, re12, im12, re13, im13, re23, im23]`.
    pub(crate) fn to_compact(&self) -> [f64; 9] {
        let e = &self.elements;
        [
            e[0][0].re, e[1][1].re, e[2][2].re,
            e[0][1].re, e[0][1].im,
            e[0][2].re, e[0][2].im,
            e[1][2].re, e[1][2].im,
        ]
    }

    pub(crate) fn from_compact(x: &[f64; 9]) -> Self {
        let z12 = C64::new(x[3], x[4]);
        let z13 = C64::new(x[5], x[6]);
        let z23 = C64::new(x[7], x[8]);
        Self {
            elements: [
                [x[0].into(), z12, z13],
                [z12.conj(), x[1].into(), z23],
                [z13.conj(), z23.conj(), x[2].into()],
            ],
        }
    }
}

impl Index<(usize, usize)> for DensityMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.elements[i][j]
    }
}

impl IndexMut<(usize, usize)> for DensityMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.elements[i][j]
    }
}

impl Add for DensityMatrix {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.elements[i][j] += rhs.elements[i][j];
            }
        }
        self
    }
}

impl Sub for DensityMatrix {
    type Output = Self;

    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.elements[i][j] -= rhs.elements[i][j];
            }
        }
        self
    }
}

impl Mul<f64> for DensityMatrix {
    type Output = Self;

    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_packing_is_lossless_for_hermitian_input() {
        let psi = [C64::new(0.6, 0.1), C64::new(-0.2, 0.5), C64::new(0.3, -0.4)];
        let rho = DensityMatrix::from_ket(psi);
        let back = DensityMatrix::from_compact(&rho.to_compact());
        assert!(rho.max_abs_diff(&back) < 1e-15);
    }

    #[test]
    fn pure_state_is_valid_after_normalization() {
        let psi = [C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 0.0)];
        let rho = DensityMatrix::from_ket(psi).scale(0.5);
        assert!(rho.validate().is_ok());
        assert!(rho.min_eigenvalue().abs() < 1e-12);
    }

    #[test]
    fn detects_negative_eigenvalue() {
        let rho = DensityMatrix::diagonal(1.1, -0.1, 0.0);
        assert!(rho.validate().unwrap_err().contains("negative"));
    }

    #[test]
    fn detects_non_hermitian() {
        let mut rho = DensityMatrix::basis(G1);
        rho[(0, 1)] = C64::new(0.1, 0.0);
        assert!(rho.hermiticity_error() > 0.09);
        assert!(rho.validate().is_err());
    }
}
