use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix description used for JSON input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.dim == 0 || self.entries.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                got: self.entries.len(),
            });
        }
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &self.entries))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(m[(i, j)]);
            }
        }
        Self { dim: d, entries }
    }
}

/// Expansive dilation matrix with its spectral data.
#[derive(Debug, Clone)]
pub struct ExpansiveMatrix {
    entries: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log: Option<DMatrix<f64>>,
    abs_det: f64,
    min_modulus: f64,
    max_modulus: f64,
    lambda_minus: f64,
    lambda_plus: f64,
}

/// Eigenvalue moduli at or below `1 + EXPANSIVE_MARGIN` are rejected.
const EXPANSIVE_MARGIN: f64 = 1e-12;

impl ExpansiveMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.ncols() });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        let det = a.determinant();
        let scale = a.norm().max(f64::MIN_POSITIVE).powi(d as i32);
        if det == 0.0 || det.abs() <= 1e-14 * scale {
            return Err(Error::Singular);
        }
        let inverse = a.clone().try_inverse().ok_or(Error::Singular)?;
        let eig = a.complex_eigenvalues();
        let moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
        let min_modulus = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_modulus = moduli.iter().cloned().fold(0.0, f64::max);
        if min_modulus <= 1.0 + EXPANSIVE_MARGIN {
            return Err(Error::NotExpansive { min_modulus });
        }
        let log = real_log(&a).ok();
        Ok(Self {
            inverse,
            log,
            abs_det: det.abs(),
            min_modulus,
            max_modulus,
            lambda_minus: min_modulus.sqrt(),
            lambda_plus: 1.01 * max_modulus,
            entries: a,
        })
    }

    /// A* = Aᵀ, the dilation acting on frequencies.
    pub fn adjoint(&self) -> Self {
        Self::new(self.entries.transpose()).expect("the transpose of an expansive matrix is expansive")
    }

    pub fn from_spec(spec: &MatrixSpec) -> Result<Self> {
        Self::new(spec.to_matrix()?)
    }

    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::from_spec(&MatrixSpec { dim, entries: entries.to_vec() })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn abs_det(&self) -> f64 {
        self.abs_det
    }

    pub fn log(&self) -> Option<&DMatrix<f64>> {
        self.log.as_ref()
    }

    pub fn is_exponential(&self) -> bool {
        self.log.is_some()
    }

    pub fn min_modulus(&self) -> f64 {
        self.min_modulus
    }

    pub fn max_modulus(&self) -> f64 {
        self.max_modulus
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    pub fn zeta_minus(&self) -> f64 {
        self.lambda_minus.ln() / self.abs_det.ln()
    }

    pub fn zeta_plus(&self) -> f64 {
        self.lambda_plus.ln() / self.abs_det.ln()
    }

    pub fn spec(&self) -> MatrixSpec {
        MatrixSpec::from_matrix(&self.entries)
    }

    /// The transpose A*, which dilates the frequency side.
    pub fn transpose(&self) -> ExpansiveMatrix {
        Self {
            entries: self.entries.transpose(),
            inverse: self.inverse.transpose(),
            log: self.log.as_ref().map(|b| b.transpose()),
            ..*self
        }
    }

    /// Integer power A^k, negative k through the inverse.
    pub fn power(&self, k: i32) -> DMatrix<f64> {
        let base = if k >= 0 { &self.entries } else { &self.inverse };
        let mut out = DMatrix::identity(self.dim(), self.dim());
        let mut b = base.clone();
        let mut e = k.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                out = &out * &b;
            }
            e >>= 1;
            if e > 0 {
                b = &b * &b;
            }
        }
        out
    }

    /// A^s = exp(sB) for real s.
    pub fn fractional_power(&self, s: f64) -> Result<DMatrix<f64>> {
        if s == s.round() && s.abs() <= 64.0 {
            return Ok(self.power(s as i32));
        }
        let b = self.log.as_ref().ok_or_else(|| {
            Error::NotExponential("fractional powers need a real logarithm".into())
        })?;
        Ok((b * s).exp())
    }

    pub fn real_matrix_log(&self) -> Result<DMatrix<f64>> {
        self.log
            .clone()
            .ok_or_else(|| Error::NotExponential("eigenvalue on the closed negative real axis".into()))
    }
}

/// Real principal logarithm by inverse scaling and squaring.
pub fn real_log(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    for z in a.complex_eigenvalues().iter() {
        if z.re <= 0.0 && z.im.abs() <= 1e-10 * z.norm().max(1e-300) {
            return Err(Error::NotExponential(format!(
                "eigenvalue {:.6} lies on the closed negative real axis",
                z.re
            )));
        }
    }
    let id = DMatrix::<f64>::identity(d, d);
    let mut x = a.clone();
    let mut k = 0u32;
    while (&x - &id).norm() > 0.2 {
        x = sqrt_denman_beavers(&x)?;
        k += 1;
        if k > 60 {
            return Err(Error::NotExponential("square-root iteration did not contract".into()));
        }
    }
    // log X = 2 atanh(Z), Z = (X - I)(X + I)^{-1}
    let xp = (&x + &id).try_inverse().ok_or(Error::Singular)?;
    let z = (&x - &id) * xp;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z.clone();
    let mut m = 1.0;
    loop {
        term = &term * &z2;
        m += 2.0;
        let t = &term / m;
        sum += &t;
        if t.norm() <= 1e-18 * sum.norm().max(1e-300) || m > 400.0 {
            break;
        }
    }
    let out = sum * (2.0 * 2f64.powi(k as i32));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotExponential("logarithm not finite".into()));
    }
    Ok(out)
}

fn sqrt_denman_beavers(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = x.nrows();
    let mut y = x.clone();
    let mut z = DMatrix::<f64>::identity(d, d);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or(Error::Singular)?;
        let zi = z.clone().try_inverse().ok_or(Error::Singular)?;
        let y_next = (&y + &zi) * 0.5;
        let z_next = (&z + &yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    Err(Error::NotExponential("square-root iteration did not converge".into()))
}

/// Unique integer ℓ with D^{ℓ-1} < radius ≤ D^ℓ.
pub fn shell_level_for_radius(abs_det: f64, radius: f64) -> i32 {
    let mut l = (radius.ln() / abs_det.ln()).ceil() as i32;
    while abs_det.powi(l - 1) >= radius {
        l -= 1;
    }
    while abs_det.powi(l) < radius {
        l += 1;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unit_eigenvalue() {
        let r = ExpansiveMatrix::diagonal(&[1.0, 2.0]);
        assert!(matches!(r, Err(Error::NotExpansive { .. })));
    }

    #[test]
    fn rejects_singular() {
        let r = ExpansiveMatrix::from_rows(2, &[2.0, 4.0, 1.0, 2.0]);
        assert!(matches!(r, Err(Error::Singular)));
    }

    #[test]
    fn shear_is_expansive() {
        let a = ExpansiveMatrix::from_rows(2, &[2.0, 1.0, 0.0, 2.0]).unwrap();
        assert!((a.abs_det() - 4.0).abs() < 1e-12);
        assert!(a.is_exponential());
    }

    #[test]
    fn negative_scalar_has_no_log() {
        let a = ExpansiveMatrix::diagonal(&[-2.0]).unwrap();
        assert!(!a.is_exponential());
        assert!(a.fractional_power(0.5).is_err());
        assert!(a.fractional_power(2.0).is_ok());
    }

    #[test]
    fn level_for_radius() {
        assert_eq!(shell_level_for_radius(2.0, 1.0), 0);
        assert_eq!(shell_level_for_radius(2.0, 2.0), 1);
        assert_eq!(shell_level_for_radius(2.0, 3.0), 2);
        assert_eq!(shell_level_for_radius(2.0, 0.5), -1);
        assert_eq!(shell_level_for_radius(4.0, 0.3), 0);
    }
}
