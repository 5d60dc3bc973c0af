use nalgebra::DMatrix;

use super::ellipsoid::{matvec, unit_ball_volume, MAX_DIM};
use super::matrix::ExpansiveMatrix;
use crate::error::{Error, Result};

const BRACKET: i32 = 80;

/// Smooth homogeneous level function τ for a dilation M = exp(L):
/// τ(M^s ξ) = τ(ξ) + s, and {τ < 0} is an ellipsoid of volume 1.
///
/// The form P solves LᵀP + PL = I, so s ↦ (e^{-sL}ξ)ᵀP(e^{-sL}ξ) is strictly
/// decreasing and τ(ξ) is its unique crossing of the level c.
#[derive(Debug, Clone)]
pub struct HomogeneousGauge {
    matrix: ExpansiveMatrix,
    log: DMatrix<f64>,
    form: Vec<f64>,
    scale: f64,
    inv_powers: Vec<f64>,
}

impl HomogeneousGauge {
    pub fn new(matrix: &ExpansiveMatrix) -> Result<Self> {
        let d = matrix.dim();
        if d > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension {d} exceeds {MAX_DIM}")));
        }
        let log = matrix.real_matrix_log()?;
        // vec(LᵀP + PL) = (I⊗Lᵀ + Lᵀ⊗I) vec(P), column-major
        let lt = log.transpose();
        let id = DMatrix::<f64>::identity(d, d);
        let k = id.kronecker(&lt) + lt.kronecker(&id);
        let rhs = nalgebra::DVector::from_iterator(d * d, id.iter().cloned());
        let sol = k.lu().solve(&rhs).ok_or(Error::Singular)?;
        let p = DMatrix::from_column_slice(d, d, sol.as_slice());
        let p = (&p + p.transpose()) * 0.5;
        let det = p.determinant();
        if !(det > 0.0) {
            return Err(Error::Validation("gauge form is not positive definite".into()));
        }
        let scale = (det.sqrt() / unit_ball_volume(d)).powf(2.0 / d as f64);
        let mut form = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                form[i * d + j] = p[(i, j)];
            }
        }
        let mut inv_powers = vec![0.0; (2 * BRACKET as usize + 1) * d * d];
        for kk in -BRACKET..=BRACKET {
            let m = matrix.power(-kk);
            let off = (kk + BRACKET) as usize * d * d;
            for i in 0..d {
                for j in 0..d {
                    inv_powers[off + i * d + j] = m[(i, j)];
                }
            }
        }
        Ok(Self { matrix: matrix.clone(), log, form, scale, inv_powers })
    }

    pub fn matrix(&self) -> &ExpansiveMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn abs_det(&self) -> f64 {
        self.matrix.abs_det()
    }

    #[inline]
    fn quad(&self, y: &[f64]) -> f64 {
        let d = y.len();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.form[i * d + j] * y[j];
            }
            acc += y[i] * row;
        }
        acc
    }

    fn quad_at_power(&self, k: i32, xi: &[f64]) -> f64 {
        let d = self.dim();
        let off = (k + BRACKET) as usize * d * d;
        let mut y = [0.0; MAX_DIM];
        matvec(&self.inv_powers[off..off + d * d], d, xi, &mut y);
        self.quad(&y[..d])
    }

    /// τ(ξ); −∞ at the origin.
    pub fn level(&self, xi: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(xi.len(), d);
        let q0 = self.quad(xi);
        if q0 == 0.0 {
            return f64::NEG_INFINITY;
        }
        if d == 1 {
            let l = self.log[(0, 0)];
            return (q0 / self.scale).ln() / (2.0 * l);
        }
        // smallest k with q(M^{-k}ξ) < c, then τ ∈ [k-1, k)
        let (mut lo, mut hi) = (-BRACKET, BRACKET);
        if self.quad_at_power(lo, xi) < self.scale {
            return lo as f64;
        }
        if self.quad_at_power(hi, xi) >= self.scale {
            return hi as f64;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.quad_at_power(mid, xi) < self.scale {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let base = lo;
        let off = (base + BRACKET) as usize * d * d;
        let mut y = [0.0; MAX_DIM];
        matvec(&self.inv_powers[off..off + d * d], d, xi, &mut y);
        let y = nalgebra::DVector::from_column_slice(&y[..d]);
        let qa = self.quad(y.as_slice());
        let qb = self.quad_at_power(base + 1, xi);
        let lc = self.scale.ln();
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut u = ((qa / self.scale).ln() / (qa / qb).ln()).clamp(0.0, 1.0);
        for _ in 0..60 {
            let e = (&self.log * (-u)).exp();
            let z = &e * &y;
            let q = self.quad(z.as_slice());
            let phi = q.ln() - lc;
            if phi > 0.0 {
                a = u;
            } else {
                b = u;
            }
            let step = phi * q / z.norm_squared();
            let mut next = u + step;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            let done = (next - u).abs() <= 1e-15 || b - a <= 1e-15;
            u = next;
            if done {
                break;
            }
        }
        base as f64 + u
    }

    /// D^{τ(ξ)}, the smooth analogue of ρ_{A*}.
    pub fn radius(&self, xi: &[f64]) -> f64 {
        self.abs_det().powf(self.level(xi))
    }
}
