//! Peetre-type maximal functions, the sub-mean-value check and the
//! anisotropic Hardy–Littlewood maximal operator.
//!
//! The supremum over offsets splits into shells of ρ_A(A^s z): with B_k the
//! grid offsets satisfying ρ_A(A^s z) ≤ |det A|^k,
//!
//!   φ**(x) = max(|F(x)|, max_k (1 + |det A|^k)^{−β} · max_{z∈B_k} |F(x+z)|),
//!
//! which is exact because the weight only depends on the shell. The ball
//! maxima do not depend on β, so one [`PeetreStack`] serves every β.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansive::{QuasiNormStructure, MAX_DIM};
use crate::field::{GridSpec, ScaleBand};
use crate::window::{sliding_max, sliding_mean, Run, Stencil};

/// Boundary-dominance threshold for the truncation flag.
pub const TAIL_DOMINANCE: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct PeetreField {
    pub scale: f64,
    pub beta: f64,
    pub values: Vec<f64>,
    /// Some point had its supremum within 5% of the outermost shell term.
    pub truncated: bool,
    pub truncated_fraction: f64,
    /// The search ball was cut at the torus half-period.
    pub clipped: bool,
}

/// β-independent ball maxima of one band.
#[derive(Debug, Clone)]
pub struct PeetreStack {
    pub scale: f64,
    abs_det: f64,
    base: Vec<f64>,
    levels: Vec<i32>,
    ball_max: Vec<Vec<f64>>,
    clipped: bool,
}

/// Nested offset stencils {z : level(z) ≤ k} for k = k_min..=k_max; the
/// origin has no level and belongs to every stencil.
pub fn nested_stencils(
    grid: &GridSpec,
    half_cells: &[usize],
    k_max: i32,
    level_of: impl Fn(&[f64]) -> i32,
) -> (i32, Vec<Stencil>, bool) {
    let d = grid.dim;
    let h = grid.step();
    let half = grid.n / 2;
    let clipped = half_cells.iter().any(|&c| c >= half);
    let lo_w: Vec<isize> = half_cells.iter().map(|&c| -(c.min(half) as isize)).collect();
    let hi_w: Vec<isize> = half_cells.iter().map(|&c| c.min(half - 1) as isize).collect();
    let mut rows: Vec<(Vec<isize>, isize, Vec<i32>)> = Vec::new();
    let mut outer: Vec<isize> = lo_w[..d - 1].to_vec();
    let mut z = [0.0; MAX_DIM];
    let mut k_min = i32::MAX;
    'rows: loop {
        for a in 0..d - 1 {
            z[a] = outer[a] as f64 * h;
        }
        let row: Vec<i32> = (lo_w[d - 1]..=hi_w[d - 1])
            .map(|k| {
                z[d - 1] = k as f64 * h;
                if z[..d].iter().all(|v| *v == 0.0) {
                    i32::MIN
                } else {
                    let l = level_of(&z[..d]);
                    k_min = k_min.min(l);
                    l
                }
            })
            .collect();
        rows.push((outer.clone(), lo_w[d - 1], row));
        let mut a = d - 1;
        loop {
            if a == 0 {
                break 'rows;
            }
            a -= 1;
            outer[a] += 1;
            if outer[a] <= hi_w[a] {
                break;
            }
            outer[a] = lo_w[a];
        }
    }
    let k_min = k_min.min(k_max);
    let stencils = (k_min..=k_max)
        .map(|k| {
            let mut runs = Vec::new();
            let mut count = 0;
            for (outer, start, row) in &rows {
                let first = row.iter().position(|&l| l <= k);
                let last = row.iter().rposition(|&l| l <= k);
                if let (Some(a), Some(b)) = (first, last) {
                    let (lo, hi) = (start + a as isize, start + b as isize);
                    count += (hi - lo + 1) as usize;
                    runs.push(Run { outer: outer.clone(), lo, hi });
                }
            }
            Stencil::from_runs(runs, count, clipped)
        })
        .collect();
    (k_min, stencils, clipped)
}

impl PeetreStack {
    /// Ball maxima of |band| over shells k ≤ `search_shells` of ρ_A(A^s z).
    pub fn new(grid: &GridSpec, qn: &QuasiNormStructure, magnitudes: Vec<f64>, s: f64, search_shells: i32) -> Result<Self> {
        if search_shells < 1 {
            return Err(Error::InvalidParameter("search radius must be at least one shell".into()));
        }
        let d = grid.dim;
        let m = qn.matrix().fractional_power(s)?;
        let reach = qn.matrix().fractional_power(search_shells as f64 + 1.0 - s)?;
        let hw = qn.bounding_half_widths(&reach);
        let h = grid.step();
        let cells: Vec<usize> = hw.iter().map(|w| (w / h).floor() as usize + 1).collect();
        let flat: Vec<f64> = (0..d * d).map(|i| m[(i / d, i % d)]).collect();
        let (k_min, stencils, clipped) = nested_stencils(grid, &cells, search_shells, |z| {
            let mut y = [0.0; MAX_DIM];
            crate::expansive::matvec(&flat, d, z, &mut y);
            qn.shell(&y[..d]).map(|sh| sh.level).unwrap_or(i32::MIN)
        });
        let ball_max = stencils.iter().map(|st| sliding_max(grid, &magnitudes, st)).collect();
        Ok(Self {
            scale: s,
            abs_det: qn.abs_det(),
            base: magnitudes,
            levels: (k_min..=search_shells).collect(),
            ball_max,
            clipped,
        })
    }

    pub fn from_band(grid: &GridSpec, qn: &QuasiNormStructure, band: &ScaleBand, search_shells: i32) -> Result<Self> {
        Self::new(grid, qn, band.magnitudes(), band.scale, search_shells)
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn evaluate(&self, beta: f64) -> PeetreField {
        let weights: Vec<f64> = self.levels.iter().map(|&k| (1.0 + self.abs_det.powi(k)).powf(-beta)).collect();
        let last = self.levels.len() - 1;
        let mut flagged = 0usize;
        let values: Vec<f64> = (0..self.base.len())
            .map(|i| {
                let mut v = self.base[i];
                for (w, bm) in weights.iter().zip(&self.ball_max) {
                    v = v.max(w * bm[i]);
                }
                let tail = weights[last] * self.ball_max[last][i];
                if v > 0.0 && tail >= TAIL_DOMINANCE * v {
                    flagged += 1;
                }
                v
            })
            .collect();
        PeetreField {
            scale: self.scale,
            beta,
            truncated: flagged > 0,
            truncated_fraction: flagged as f64 / self.base.len() as f64,
            clipped: self.clipped,
            values,
        }
    }
}

/// φ**_{s,β} of a band over offsets with ρ_A(A^s z) ≤ |det A|^{search_shells}.
pub fn peetre_maximal(
    grid: &GridSpec,
    qn: &QuasiNormStructure,
    band: &ScaleBand,
    beta: f64,
    search_shells: i32,
) -> Result<PeetreField> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    Ok(PeetreStack::from_band(grid, qn, band, search_shells)?.evaluate(beta))
}

/// Both sides of the sub-mean-value inequality on sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubMeanReport {
    pub lhs: f64,
    pub rhs: f64,
    /// max over the sample of lhs/rhs; 0 when every lhs vanishes.
    pub ratio: f64,
    pub samples: usize,
}

/// (φ**(x))^q against |det A|^s ∫ |F(y)|^q (1+ρ_A(A^s(x−y)))^{−βq} dy.
pub fn check_submeanvalue(
    grid: &GridSpec,
    qn: &QuasiNormStructure,
    band: &ScaleBand,
    beta: f64,
    q: f64,
    search_shells: i32,
    sample: &[usize],
) -> Result<SubMeanReport> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter("q must be finite and positive".into()));
    }
    let pf = peetre_maximal(grid, qn, band, beta, search_shells)?;
    let d = grid.dim;
    let m = qn.matrix().fractional_power(band.scale)?;
    let flat: Vec<f64> = (0..d * d).map(|i| m[(i / d, i % d)]).collect();
    let mags = band.magnitudes();
    let powq: Vec<f64> = mags.iter().map(|v| v.powf(q)).collect();
    let n = grid.n as isize;
    let h = grid.step();
    let vol = grid.cell_volume();
    let dets = qn.abs_det().powf(band.scale);
    let mut mx = [0usize; MAX_DIM];
    let mut my = [0usize; MAX_DIM];
    let mut report = SubMeanReport { lhs: 0.0, rhs: 0.0, ratio: 0.0, samples: sample.len() };
    for &ix in sample {
        grid.unravel(ix, &mut mx);
        let mut integral = 0.0;
        for (iy, p) in powq.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            grid.unravel(iy, &mut my);
            let mut z = [0.0; MAX_DIM];
            for a in 0..d {
                // shortest periodic displacement x − y
                let mut k = mx[a] as isize - my[a] as isize;
                if k >= n / 2 {
                    k -= n;
                } else if k < -n / 2 {
                    k += n;
                }
                z[a] = k as f64 * h;
            }
            let mut y = [0.0; MAX_DIM];
            crate::expansive::matvec(&flat, d, &z[..d], &mut y);
            integral += p * (1.0 + qn.quasi_norm(&y[..d])).powf(-beta * q);
        }
        let lhs = pf.values[ix].powf(q);
        let rhs = dets * integral * vol;
        if lhs > 0.0 {
            let r = lhs / rhs;
            if r > report.ratio {
                report = SubMeanReport { lhs, rhs, ratio: r, samples: sample.len() };
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct MaximalField {
    pub values: Vec<f64>,
    pub clipped: bool,
}

/// sup over balls A^ℓΩ + w ∋ x (grid centres w, ℓ in `shells`) of the mean
/// of |source|.
pub fn hl_maximal(grid: &GridSpec, qn: &QuasiNormStructure, source: &[f64], shells: std::ops::RangeInclusive<i32>) -> Result<MaximalField> {
    if source.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: source.len() });
    }
    let abs: Vec<f64> = source.iter().map(|v| v.abs()).collect();
    let mut out = abs.clone();
    let mut clipped = false;
    for l in shells {
        let st = Stencil::dilated_ellipsoid(grid, qn, l as f64)?;
        clipped |= st.clipped();
        let mean = sliding_mean(grid, &abs, &st);
        // balls containing x have centres in x − A^ℓΩ = x + A^ℓΩ
        let best = sliding_max(grid, &mean, &st);
        for (o, b) in out.iter_mut().zip(best) {
            *o = o.max(b);
        }
    }
    Ok(MaximalField { values: out, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansive::ExpansiveMatrix;
    use num_complex::Complex64;

    fn setup(n: usize) -> (GridSpec, QuasiNormStructure) {
        let a = ExpansiveMatrix::diagonal(&[2.0, 2.0]).unwrap();
        (GridSpec::new(2, 4.0, n).unwrap(), QuasiNormStructure::new(&a).unwrap())
    }

    fn bump_band(grid: &GridSpec) -> ScaleBand {
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                Complex64::new((-(p[0] * p[0] + 2.0 * p[1] * p[1])).exp(), 0.0)
            })
            .collect();
        ScaleBand { scale: 0.0, values }
    }

    #[test]
    fn constant_band_is_fixed() {
        let (grid, qn) = setup(16);
        let band = ScaleBand { scale: 0.5, values: vec![Complex64::new(0.0, 2.0); grid.len()] };
        let pf = peetre_maximal(&grid, &qn, &band, 1.0, 2).unwrap();
        assert!(pf.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn large_beta_recovers_modulus() {
        let (grid, qn) = setup(32);
        let band = bump_band(&grid);
        let pf = peetre_maximal(&grid, &qn, &band, 64.0, 2).unwrap();
        let mags = band.magnitudes();
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        for (v, m) in pf.values.iter().zip(&mags) {
            assert!(*v >= *m);
            assert!(v - m <= 0.01 * peak);
        }
    }

    #[test]
    fn monotone_in_beta() {
        let (grid, qn) = setup(32);
        let band = bump_band(&grid);
        let stack = PeetreStack::from_band(&grid, &qn, &band, 3).unwrap();
        let a = stack.evaluate(0.5);
        let b = stack.evaluate(2.0);
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x >= y));
    }

    #[test]
    fn matches_direct_supremum() {
        let (grid, qn) = setup(16);
        let band = bump_band(&grid);
        let beta = 0.7;
        let pf = peetre_maximal(&grid, &qn, &band, beta, 1).unwrap();
        let mags = band.magnitudes();
        let h = grid.step();
        let mut m = [0usize; MAX_DIM];
        for ix in [0usize, 37, 100, 255] {
            grid.unravel(ix, &mut m);
            let mut best = 0.0f64;
            for iy in 0..grid.len() {
                let mut my = [0usize; MAX_DIM];
                grid.unravel(iy, &mut my);
                let z: Vec<f64> = (0..2)
                    .map(|a| {
                        let k = (my[a] as isize - m[a] as isize).rem_euclid(16);
                        (if k >= 8 { k - 16 } else { k }) as f64 * h
                    })
                    .collect();
                let rho = qn.quasi_norm(&z);
                if rho <= 4.0 {
                    best = best.max(mags[iy] / (1.0 + rho).powf(beta));
                }
            }
            assert!((pf.values[ix] - best).abs() < 1e-12, "{ix}: {} vs {best}", pf.values[ix]);
        }
    }

    #[test]
    fn hl_dominates_source() {
        let (grid, qn) = setup(16);
        let src: Vec<f64> = bump_band(&grid).magnitudes();
        let mf = hl_maximal(&grid, &qn, &src, -1..=1).unwrap();
        assert!(mf.values.iter().zip(&src).all(|(m, s)| m >= s));
    }
}
