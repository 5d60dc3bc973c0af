//! Band-limited sampled fields and the FFT convolution bank.

mod grid;
pub mod io;

pub use grid::{FftNd, FrequencyGrid, GridSpec};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analyzers::SpectralProfile;
use crate::error::{Error, Result};

/// Spectral energy above the band limit is below this fraction of the total.
pub const BAND_ENERGY_TOLERANCE: f64 = 1e-10;

/// Samples of a band-limited field together with its spectrum.
#[derive(Debug, Clone)]
pub struct SampledField {
    grid: GridSpec,
    values: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    band_limit: f64,
}

impl SampledField {
    /// From spatial samples; the band limit is measured from the spectrum.
    pub fn from_values(grid: &FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        check_len(grid.spec(), values.len())?;
        let spectrum = grid.forward(&values);
        let band_limit = measured_band_limit(grid, &spectrum);
        Ok(Self { grid: *grid.spec(), values, spectrum, band_limit })
    }

    /// From spectral samples f̂(ξ_k) in FFT order.
    pub fn from_spectrum(grid: &FrequencyGrid, spectrum: Vec<Complex64>) -> Result<Self> {
        check_len(grid.spec(), spectrum.len())?;
        let values = grid.inverse(&spectrum);
        let band_limit = measured_band_limit(grid, &spectrum);
        Ok(Self { grid: *grid.spec(), values, spectrum, band_limit })
    }

    /// From spectral samples with a known analytic band limit.
    pub fn from_spectrum_with_band(grid: &FrequencyGrid, spectrum: Vec<Complex64>, band_limit: f64) -> Result<Self> {
        check_len(grid.spec(), spectrum.len())?;
        let values = grid.inverse(&spectrum);
        Ok(Self { grid: *grid.spec(), values, spectrum, band_limit })
    }

    pub fn zeros(grid: &FrequencyGrid) -> Self {
        let n = grid.spec().len();
        Self {
            grid: *grid.spec(),
            values: vec![Complex64::new(0.0, 0.0); n],
            spectrum: vec![Complex64::new(0.0, 0.0); n],
            band_limit: f64::NEG_INFINITY,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Outer gauge level of the spectral support.
    pub fn band_limit(&self) -> f64 {
        self.band_limit
    }

    /// ‖f‖₂ by grid quadrature.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// ⟨f, g⟩ = ∫ f ḡ.
    pub fn inner(&self, other: &SampledField) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum::<Complex64>()
            * self.grid.cell_volume()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            spectrum: self.spectrum.iter().map(|v| v * c).collect(),
            band_limit: if c == Complex64::new(0.0, 0.0) { f64::NEG_INFINITY } else { self.band_limit },
        }
    }

    /// a·f + b·g.
    pub fn combine(&self, a: Complex64, other: &SampledField, b: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            spectrum: self.spectrum.iter().zip(&other.spectrum).map(|(x, y)| a * x + b * y).collect(),
            band_limit: self.band_limit.max(other.band_limit),
        }
    }
}

fn check_len(spec: &GridSpec, len: usize) -> Result<()> {
    if len != spec.len() {
        return Err(Error::DimensionMismatch { expected: spec.len(), got: len });
    }
    Ok(())
}

/// Smallest level L with spectral energy above L below the tolerance.
fn measured_band_limit(grid: &FrequencyGrid, spectrum: &[Complex64]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = grid
        .levels()
        .iter()
        .zip(spectrum)
        .map(|(l, v)| (*l, v.norm_sqr()))
        .filter(|(_, e)| *e > 0.0)
        .collect();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return f64::NEG_INFINITY;
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tail = 0.0;
    for (l, e) in &pairs {
        tail += e;
        if tail > BAND_ENERGY_TOLERANCE * total {
            return *l;
        }
    }
    f64::NEG_INFINITY
}

/// Samples of f ∗ P_s, where P̂_s(ξ) = P̂((A*)^{−s}ξ).
#[derive(Debug, Clone)]
pub struct ScaleBand {
    pub scale: f64,
    pub values: Vec<Complex64>,
}

impl ScaleBand {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

/// Fails when the filtered spectrum would reach the Nyquist boundary.
pub fn aliasing_check(grid: &FrequencyGrid, band_limit: f64, profile: &SpectralProfile, s: f64) -> Result<()> {
    let top = (profile.hi + s).min(band_limit);
    if profile.lo + s >= band_limit {
        return Ok(());
    }
    if top >= grid.nyquist_level() {
        return Err(Error::Aliasing { scale: s, level: top, limit: grid.nyquist_level() });
    }
    Ok(())
}

/// Filters a spectrum by P̂((A*)^{−s}·) and returns spatial samples.
pub fn filter_spectrum(grid: &FrequencyGrid, spectrum: &[Complex64], profile: &SpectralProfile, s: f64) -> Vec<Complex64> {
    let filtered: Vec<Complex64> = spectrum
        .iter()
        .zip(grid.levels())
        .map(|(v, t)| {
            let p = profile.at_level(t - s);
            if p == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                v * p
            }
        })
        .collect();
    grid.inverse(&filtered)
}

pub fn convolve_scale(grid: &FrequencyGrid, f: &SampledField, profile: &SpectralProfile, s: f64) -> Result<ScaleBand> {
    if f.grid() != grid.spec() {
        return Err(Error::InvalidParameter("field and frequency grid differ".into()));
    }
    aliasing_check(grid, f.band_limit(), profile, s)?;
    Ok(ScaleBand { scale: s, values: filter_spectrum(grid, f.spectrum(), profile, s) })
}

pub fn scale_bank(grid: &FrequencyGrid, f: &SampledField, profile: &SpectralProfile, scales: &[f64]) -> Result<Vec<ScaleBand>> {
    for &s in scales {
        aliasing_check(grid, f.band_limit(), profile, s)?;
    }
    if f.grid() != grid.spec() {
        return Err(Error::InvalidParameter("field and frequency grid differ".into()));
    }
    Ok(scales
        .par_iter()
        .map(|&s| ScaleBand { scale: s, values: filter_spectrum(grid, f.spectrum(), profile, s) })
        .collect())
}
