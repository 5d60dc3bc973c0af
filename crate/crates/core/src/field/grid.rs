use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansive::{ExpansiveMatrix, HomogeneousGauge, MAX_DIM};

/// Periodic sample grid on the box [−extent, extent)^d with n points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub extent: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, extent: f64, n: usize) -> Result<Self> {
        let g = Self { dim, extent, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!("grid dimension {}", self.dim)));
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("grid size {} is not a power of two", self.n)));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid extent {}", self.extent)));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element h^d.
    pub fn cell_volume(&self) -> f64 {
        self.step().powi(self.dim as i32)
    }

    /// Frequency spacing 1/(2·extent).
    pub fn frequency_step(&self) -> f64 {
        0.5 / self.extent
    }

    /// Same box with twice the samples per axis.
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }

    /// Multi-index of a flat index, last axis fastest.
    #[inline]
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
    }

    #[inline]
    pub fn ravel(&self, m: &[usize]) -> usize {
        m.iter().fold(0, |acc, &v| acc * self.n + v)
    }

    /// Flat index of the periodic neighbour m + offset.
    #[inline]
    pub fn ravel_wrapped(&self, m: &[usize], offset: &[isize]) -> usize {
        let n = self.n as isize;
        m.iter()
            .zip(offset)
            .fold(0, |acc, (&v, &o)| acc * self.n + (v as isize + o).rem_euclid(n) as usize)
    }

    /// Spatial coordinate of a multi-index.
    #[inline]
    pub fn coord(&self, m: usize) -> f64 {
        -self.extent + m as f64 * self.step()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut m = [0usize; MAX_DIM];
        self.unravel(idx, &mut m);
        (0..self.dim).map(|a| self.coord(m[a])).collect()
    }

    /// Signed frequency index of an FFT bin.
    #[inline]
    pub fn signed_bin(&self, k: usize) -> isize {
        if k < self.n / 2 {
            k as isize
        } else {
            k as isize - self.n as isize
        }
    }

    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        let mut m = [0usize; MAX_DIM];
        self.unravel(idx, &mut m);
        (0..self.dim)
            .map(|a| self.signed_bin(m[a]) as f64 * self.frequency_step())
            .collect()
    }

    /// Nearest grid multi-index of a point (periodic), if it lies on the grid.
    pub fn grid_index_of(&self, x: &[f64], tol: f64) -> Option<usize> {
        let h = self.step();
        let mut m = [0usize; MAX_DIM];
        for a in 0..self.dim {
            let u = (x[a] + self.extent) / h;
            let r = u.round();
            if (u - r).abs() > tol {
                return None;
            }
            m[a] = (r as i64).rem_euclid(self.n as i64) as usize;
        }
        Some(self.ravel(&m[..self.dim]))
    }
}

/// N-dimensional FFT over a [`GridSpec`] with the physical normalisation
/// f̂(ξ_k) ≈ Σ_m f(x_m) e^{−2πi ξ_k·x_m} h^d.
#[derive(Clone)]
pub struct FftNd {
    spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("spec", &self.spec).finish()
    }
}

impl FftNd {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(spec.n),
            inverse: planner.plan_fft_inverse(spec.n),
            spec,
        }
    }

    fn raw(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.spec.n;
        let d = self.spec.dim;
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process(data);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..d.saturating_sub(1) {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (i, b) in buf.iter_mut().enumerate() {
                        *b = data[base + i * stride];
                    }
                    plan.process(&mut buf);
                    for (i, b) in buf.iter().enumerate() {
                        data[base + i * stride] = *b;
                    }
                }
            }
        }
    }

    fn alternate_signs(&self, data: &mut [Complex64]) {
        let mut m = [0usize; MAX_DIM];
        for (idx, v) in data.iter_mut().enumerate() {
            self.spec.unravel(idx, &mut m);
            let parity: usize = m[..self.spec.dim].iter().sum();
            if parity % 2 == 1 {
                *v = -*v;
            }
        }
    }

    /// Samples to spectrum.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.raw(&mut data, false);
        self.alternate_signs(&mut data);
        let w = self.spec.cell_volume();
        data.iter_mut().for_each(|v| *v *= w);
        data
    }

    /// Spectrum to samples.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut data = spectrum.to_vec();
        self.alternate_signs(&mut data);
        self.raw(&mut data, true);
        let w = (2.0 * self.spec.extent).powi(-(self.spec.dim as i32));
        data.iter_mut().for_each(|v| *v *= w);
        data
    }
}

/// A grid together with the gauge level of every frequency bin and FFT plans.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    spec: GridSpec,
    gauge: Arc<HomogeneousGauge>,
    levels: Arc<Vec<f64>>,
    nyquist_level: f64,
    fft: FftNd,
}

impl FrequencyGrid {
    /// Grid whose levels come from the gauge of A*.
    pub fn for_matrix(spec: GridSpec, a: &ExpansiveMatrix) -> Result<Self> {
        Self::new(spec, Arc::new(HomogeneousGauge::new(&a.adjoint())?))
    }

    /// `gauge` must be homogeneous for the frequency dilation A*.
    pub fn new(spec: GridSpec, gauge: Arc<HomogeneousGauge>) -> Result<Self> {
        spec.validate()?;
        if gauge.dim() != spec.dim {
            return Err(Error::DimensionMismatch { expected: spec.dim, got: gauge.dim() });
        }
        let levels: Vec<f64> = (0..spec.len()).map(|i| gauge.level(&spec.frequency(i))).collect();
        let mut m = [0usize; MAX_DIM];
        let mut nyquist_level = f64::INFINITY;
        for (i, l) in levels.iter().enumerate() {
            spec.unravel(i, &mut m);
            if m[..spec.dim].contains(&(spec.n / 2)) {
                nyquist_level = nyquist_level.min(*l);
            }
        }
        Ok(Self { spec, gauge, levels: Arc::new(levels), nyquist_level, fft: FftNd::new(spec) })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn gauge(&self) -> &Arc<HomogeneousGauge> {
        &self.gauge
    }

    /// τ(ξ_k) in FFT order; −∞ at the zero bin.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Smallest level among bins on the Nyquist boundary.
    pub fn nyquist_level(&self) -> f64 {
        self.nyquist_level
    }

    /// Smallest level of a nonzero bin.
    pub fn lowest_level(&self) -> f64 {
        self.levels.iter().cloned().filter(|l| l.is_finite()).fold(f64::INFINITY, f64::min)
    }

    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.fft.forward(values)
    }

    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        self.fft.inverse(spectrum)
    }

    /// Same box and gauge, twice the samples per axis.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.spec.refined(), self.gauge.clone())
    }

    pub fn with_spec(&self, spec: GridSpec) -> Result<Self> {
        Self::new(spec, self.gauge.clone())
    }
}
