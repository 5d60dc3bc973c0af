use nalgebra::DMatrix;
use rand::Rng;

use super::matrix::{shell_level_for_radius, ExpansiveMatrix};
use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 8;
/// Shell indices are clamped to `[-SHELL_CLAMP, SHELL_CLAMP]`.
pub const SHELL_CLAMP: i32 = 64;
const POWER_RANGE: i32 = SHELL_CLAMP + 2;

/// Volume of the Euclidean unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    let mut v = [1.0, 2.0];
    for k in 2..=d {
        let next = 2.0 * std::f64::consts::PI / k as f64 * v[k % 2];
        v[k % 2] = next;
    }
    v[d % 2]
}

#[derive(Debug, Clone, Copy)]
pub struct EllipsoidOptions {
    /// Upper bound on cond(Q); the form is rejected beyond it.
    pub condition_limit: f64,
    /// Relative size below which series terms are dropped.
    pub series_tolerance: f64,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        Self { condition_limit: 1e12, series_tolerance: 1e-14 }
    }
}

/// Shell index of a nonzero point and whether it hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shell {
    pub level: i32,
    pub saturated: bool,
}

/// A metric ball A^ℓΩ + y.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub level: i32,
}

/// Ellipsoid Ω = {xᵀQx < c} with m(Ω) = 1 and the step quasi-norm ρ_A.
#[derive(Debug, Clone)]
pub struct QuasiNormStructure {
    matrix: ExpansiveMatrix,
    form: DMatrix<f64>,
    scale: f64,
    gap: f64,
    gap_exact: f64,
    chol: DMatrix<f64>,
    form_flat: Vec<f64>,
    inv_powers: Vec<f64>,
}

impl QuasiNormStructure {
    pub fn new(matrix: &ExpansiveMatrix) -> Result<Self> {
        Self::with_options(matrix, EllipsoidOptions::default())
    }

    pub fn with_options(matrix: &ExpansiveMatrix, opts: EllipsoidOptions) -> Result<Self> {
        let d = matrix.dim();
        if d > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension {d} exceeds {MAX_DIM}")));
        }
        let ainv = matrix.inverse();
        let mut form = DMatrix::<f64>::identity(d, d);
        let mut p = DMatrix::<f64>::identity(d, d);
        for _ in 0..200_000 {
            p = ainv * &p;
            let term = p.transpose() * &p;
            let tn = term.norm();
            form += term;
            if tn < opts.series_tolerance * form.norm() {
                break;
            }
        }
        form = (&form + form.transpose()) * 0.5;
        let eig = form.clone().symmetric_eigen();
        let emax = eig.eigenvalues.max();
        let emin = eig.eigenvalues.min();
        let condition = emax / emin;
        if !(emin > 0.0) || condition > opts.condition_limit {
            return Err(Error::IllConditioned { condition, limit: opts.condition_limit });
        }
        let det_q = form.determinant();
        let scale = (det_q.sqrt() / unit_ball_volume(d)).powf(2.0 / d as f64);
        let chol = form.clone().cholesky().ok_or(Error::Singular)?.l();

        let mut inv_powers = vec![0.0; (2 * POWER_RANGE as usize + 1) * d * d];
        for k in -POWER_RANGE..=POWER_RANGE {
            let m = matrix.power(-k);
            let off = (k + POWER_RANGE) as usize * d * d;
            for i in 0..d {
                for j in 0..d {
                    inv_powers[off + i * d + j] = m[(i, j)];
                }
            }
        }
        let mut form_flat = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                form_flat[i * d + j] = form[(i, j)];
            }
        }
        let mut s = Self {
            matrix: matrix.clone(),
            form,
            scale,
            gap: 1.0,
            gap_exact: 1.0,
            chol,
            form_flat,
            inv_powers,
        };
        s.certify_gap()?;
        Ok(s)
    }

    fn certify_gap(&mut self) -> Result<()> {
        let d = self.dim();
        let linv = self.chol.clone().try_inverse().ok_or(Error::Singular)?;
        let ainv = self.matrix.inverse();
        let m = &linv * ainv.transpose() * &self.form * ainv * linv.transpose();
        let lmax = m.symmetric_eigen().eigenvalues.max();
        let exact = 1.0 / lmax.sqrt();
        let mut r = 0.99 * exact;
        if r <= 1.0 {
            r = 0.5 * (1.0 + exact);
        }
        let boundary = self.boundary_sample(256 * d);
        let ainv_flat = self.inv_power_slice(1).to_vec();
        let mut y = [0.0; MAX_DIM];
        for _ in 0..64 {
            let ok = boundary.iter().all(|b| {
                let scaled: Vec<f64> = b.iter().map(|v| v * r).collect();
                matvec(&ainv_flat, d, &scaled, &mut y);
                self.quad(&y[..d]) < self.scale
            });
            if ok {
                self.gap = r;
                self.gap_exact = exact;
                return Ok(());
            }
            r = 1.0 + 0.5 * (r - 1.0);
        }
        Err(Error::Validation("expansion gap could not be certified".into()))
    }

    /// Deterministic points on ∂Ω.
    pub fn boundary_sample(&self, count: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let lt_inv = self.chol.transpose().try_inverse().expect("cholesky factor invertible");
        let mut rng = crate::rng::seeded(0x5eed_0b0d);
        (0..count)
            .map(|i| {
                let u: Vec<f64> = match d {
                    1 => vec![if i % 2 == 0 { 1.0 } else { -1.0 }],
                    2 => {
                        let t = std::f64::consts::TAU * i as f64 / count as f64;
                        vec![t.cos(), t.sin()]
                    }
                    _ => unit_sphere(&mut rng, d),
                };
                let v = &lt_inv * nalgebra::DVector::from_vec(u);
                v.iter().map(|x| x * self.scale.sqrt()).collect()
            })
            .collect()
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

    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Certified r with Ω ⊂ rΩ ⊂ AΩ.
    pub fn expansion_gap(&self) -> f64 {
        self.gap
    }

    /// Supremum of admissible r before the safety shrink.
    pub fn expansion_gap_exact(&self) -> f64 {
        self.gap_exact
    }

    /// Cholesky factor L with Q = LLᵀ.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// m(Ω) from the closed-form ellipsoid volume.
    pub fn volume(&self) -> f64 {
        let d = self.dim();
        unit_ball_volume(d) * self.scale.powf(d as f64 / 2.0) / self.form.determinant().sqrt()
    }

    /// xᵀQx.
    #[inline]
    pub fn quad(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.form_flat[i * d + j] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    #[inline]
    fn inv_power_slice(&self, k: i32) -> &[f64] {
        let d = self.dim();
        let off = (k + POWER_RANGE) as usize * d * d;
        &self.inv_powers[off..off + d * d]
    }

    /// Whether x ∈ A^kΩ for integer k in the precomputed range.
    #[inline]
    pub fn in_dilate(&self, k: i32, x: &[f64]) -> bool {
        let d = self.dim();
        let mut y = [0.0; MAX_DIM];
        matvec(self.inv_power_slice(k), d, x, &mut y);
        self.quad(&y[..d]) < self.scale
    }

    /// Shell index j with x ∈ A^{j+1}Ω \ A^jΩ, or None for x = 0.
    pub fn shell(&self, x: &[f64]) -> Option<Shell> {
        debug_assert_eq!(x.len(), self.dim());
        if x.iter().all(|v| *v == 0.0) {
            return None;
        }
        // smallest j with x ∈ A^{j+1}Ω; membership is monotone in j
        let (mut lo, mut hi) = (-SHELL_CLAMP, SHELL_CLAMP);
        if self.in_dilate(lo + 1, x) {
            return Some(Shell { level: lo, saturated: true });
        }
        if !self.in_dilate(hi + 1, x) {
            return Some(Shell { level: hi, saturated: true });
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.in_dilate(mid + 1, x) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(Shell { level: hi, saturated: false })
    }

    /// ρ_A(x).
    pub fn quasi_norm(&self, x: &[f64]) -> f64 {
        match self.shell(x) {
            None => 0.0,
            Some(s) => self.abs_det().powi(s.level),
        }
    }

    /// Quasi-norm together with the clamp flag.
    pub fn quasi_norm_flagged(&self, x: &[f64]) -> (f64, bool) {
        match self.shell(x) {
            None => (0.0, false),
            Some(s) => (self.abs_det().powi(s.level), s.saturated),
        }
    }

    pub fn metric_ball(&self, center: &[f64], radius: f64) -> Result<Ball> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter("ball radius must be positive".into()));
        }
        Ok(Ball { center: center.to_vec(), level: shell_level_for_radius(self.abs_det(), radius) })
    }

    /// Half-widths of the axis-aligned box around MΩ for a linear map M.
    pub fn bounding_half_widths(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let qinv = self.form.clone().try_inverse().expect("form is invertible");
        let g = m * qinv * m.transpose();
        (0..self.dim()).map(|i| (self.scale * g[(i, i)]).max(0.0).sqrt()).collect()
    }

    /// Uniform sample from A^kΩ.
    pub fn sample_in_dilate<R: Rng>(&self, rng: &mut R, k: i32) -> Vec<f64> {
        let d = self.dim();
        let u = unit_ball(rng, d);
        let lt_inv = self.chol.transpose().try_inverse().expect("cholesky factor invertible");
        let y = &lt_inv * nalgebra::DVector::from_vec(u) * self.scale.sqrt();
        let ak = self.matrix.power(k);
        (ak * y).iter().cloned().collect()
    }

    /// Smallest N ≥ 0 with A^{-t}Ω ⊂ A^NΩ for all t ∈ [0, 1).
    pub fn translation_overlap(&self) -> Result<i32> {
        if !self.matrix.is_exponential() {
            return Err(Error::NotExponential("translation overlap needs A^t".into()));
        }
        let linv = self.chol.clone().try_inverse().ok_or(Error::Singular)?;
        let linv_t = linv.transpose();
        for n in 0..=SHELL_CLAMP {
            let ok = (0..128).all(|i| {
                let t = i as f64 / 128.0;
                let m = match self.matrix.fractional_power(-(n as f64) - t) {
                    Ok(m) => m,
                    Err(_) => return false,
                };
                let g = &linv * m.transpose() * &self.form * &m * &linv_t;
                g.symmetric_eigen().eigenvalues.max() <= 1.0 + 1e-12
            });
            if ok {
                return Ok(n);
            }
        }
        Ok(SHELL_CLAMP)
    }
}

#[inline]
pub(crate) fn matvec(m: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += m[i * d + j] * x[j];
        }
        out[i] = acc;
    }
}

pub(crate) fn unit_ball<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() < 1.0 {
            return v;
        }
    }
}

fn unit_sphere<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v = unit_ball(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn dyadic_interval() {
        let a = ExpansiveMatrix::diagonal(&[2.0]).unwrap();
        let s = QuasiNormStructure::new(&a).unwrap();
        assert!((s.form()[(0, 0)] - 4.0 / 3.0).abs() < 1e-13);
        assert!((s.scale() - 1.0 / 3.0).abs() < 1e-13);
        assert!(s.in_dilate(0, &[0.4999]));
        assert!(!s.in_dilate(0, &[0.5001]));
    }

    #[test]
    fn clamps_extreme_points() {
        let a = ExpansiveMatrix::diagonal(&[2.0]).unwrap();
        let s = QuasiNormStructure::new(&a).unwrap();
        assert!(s.shell(&[1e30]).unwrap().saturated);
        assert!(s.shell(&[1e-30]).unwrap().saturated);
        assert!(!s.shell(&[1.0]).unwrap().saturated);
    }
}
