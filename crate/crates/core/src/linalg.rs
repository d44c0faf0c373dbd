//! Small fixed-size helpers on top of nalgebra.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};

use crate::error::{Error, Result};

/// Reciprocal condition number (after diagonal equilibration) below which a
/// symmetric matrix is treated as singular.
pub const RCOND_FLOOR: f64 = 1e-13;

pub fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverts a symmetric positive-definite 4x4 matrix.
///
/// The matrix is equilibrated to unit diagonal first so that the rank test
/// does not depend on the mixed position/velocity units.
pub fn spd_inverse(m: &Matrix4<f64>, what: &'static str) -> Result<Matrix4<f64>> {
    let m = symmetrize(m);
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular(what));
    }
    let mut d = Vector4::zeros();
    for k in 0..4 {
        if m[(k, k)] <= 0.0 {
            return Err(Error::Singular(what));
        }
        d[k] = 1.0 / m[(k, k)].sqrt();
    }
    let scaled = Matrix4::from_fn(|r, c| m[(r, c)] * d[r] * d[c]);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > RCOND_FLOOR * max) {
        return Err(Error::Singular(what));
    }
    let chol = scaled.cholesky().ok_or(Error::Singular(what))?;
    let inv_scaled = chol.inverse();
    Ok(symmetrize(&Matrix4::from_fn(|r, c| {
        inv_scaled[(r, c)] * d[r] * d[c]
    })))
}

/// Lower Cholesky factor of an SPD matrix, used to draw correlated Gaussians.
pub fn spd_sqrt(m: &Matrix4<f64>, what: &'static str) -> Result<Matrix4<f64>> {
    symmetrize(m)
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::Singular(what))
}

/// `diag(1, t0, 1, t0)`: puts velocity errors on the same footing as
/// position errors over one fusion period.
pub fn normalizer(t0: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, t0, 1.0, t0))
}

pub fn is_spd(m: &Matrix4<f64>, sym_tol: f64) -> bool {
    let asym = (m - m.transpose()).abs().max();
    if asym > sym_tol * m.abs().max().max(1.0) {
        return false;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min() > 0.0
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}
