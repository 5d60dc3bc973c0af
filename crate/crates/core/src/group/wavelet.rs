use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzers::{AdmissibleVector, SpectralProfile};
use crate::error::{Error, Result};
use crate::field::{aliasing_check, filter_spectrum, FrequencyGrid, SampledField};

use super::grid::{GroupArray, GroupGrid};

/// Samples of W_ψf(x, s) = ⟨f, π(x, s)ψ⟩.
#[derive(Debug, Clone)]
pub struct WaveletField {
    pub analyzer: AdmissibleVector,
    pub array: GroupArray,
}

fn check_grids(fgrid: &FrequencyGrid, ggrid: &GroupGrid) -> Result<()> {
    if fgrid.spec() != &ggrid.spatial {
        return Err(Error::InvalidParameter("group grid and frequency grid differ".into()));
    }
    Ok(())
}

/// Scale range where W_ψf can be nonzero for a spectrum inside levels [lo, hi].
pub fn wavelet_support(psi: &SpectralProfile, lo: f64, hi: f64) -> (f64, f64) {
    (psi.lo - hi, psi.hi - lo)
}

/// W_ψf(·, s) = |det A|^{s/2} f ∗ ψ*_{−s}, computed spectrally per slice.
pub fn wavelet_transform(fgrid: &FrequencyGrid, f: &SampledField, psi: &AdmissibleVector, ggrid: &GroupGrid) -> Result<WaveletField> {
    check_grids(fgrid, ggrid)?;
    if f.grid() != fgrid.spec() {
        return Err(Error::InvalidParameter("field and frequency grid differ".into()));
    }
    let abs_det = fgrid.gauge().abs_det();
    for s in ggrid.scales() {
        aliasing_check(fgrid, f.band_limit(), &psi.psi, -s)?;
    }
    let slices = ggrid
        .scales()
        .par_iter()
        .map(|&s| {
            let c = abs_det.powf(0.5 * s);
            // ψ̂ is real, so ψ* has the same multiplier
            filter_spectrum(fgrid, f.spectrum(), &psi.psi, -s).into_iter().map(|v| v * c).collect()
        })
        .collect();
    Ok(WaveletField { analyzer: *psi, array: GroupArray { grid: *ggrid, slices } })
}

/// The band-limited function with spectrum profile(τ(ξ)).
pub fn profile_field(fgrid: &FrequencyGrid, profile: &SpectralProfile) -> Result<SampledField> {
    if profile.hi >= fgrid.nyquist_level() {
        return Err(Error::Aliasing { scale: 0.0, level: profile.hi, limit: fgrid.nyquist_level() });
    }
    let spectrum = fgrid.levels().iter().map(|&t| Complex64::new(profile.at_level(t), 0.0)).collect();
    SampledField::from_spectrum_with_band(fgrid, spectrum, profile.hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IsometryReport {
    pub field_norm: f64,
    pub transform_norm: f64,
    /// |‖W_ψf‖ − ‖f‖| / ‖f‖.
    pub relative_error: f64,
}

pub fn isometry_check(fgrid: &FrequencyGrid, f: &SampledField, w: &WaveletField) -> IsometryReport {
    let a = f.l2_norm();
    let b = w.array.l2_norm(fgrid.gauge().abs_det());
    IsometryReport { field_norm: a, transform_norm: b, relative_error: if a > 0.0 { (b - a).abs() / a } else { b } }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReproducingReport {
    /// ‖W_φf − W_ψf ∗ W_φψ‖₂ / ‖W_φf‖₂ over G_A.
    pub relative_l2: f64,
    pub relative_sup: f64,
    pub reference_norm: f64,
}

/// W_ψf ∗ W_φψ by quadrature over the scale nodes of `ggrid`; the spatial
/// integral of each pair of slices is done in frequency, where
/// y ↦ W_φψ(A^{−t}(x − y), s − t) has the explicit spectrum
/// |det A|^{t + (s−t)/2} ψ̂((A*)^tξ) φ̂((A*)^sξ).
pub fn group_convolve_with_cross(fgrid: &FrequencyGrid, w_psi: &WaveletField, phi: &AdmissibleVector) -> Result<GroupArray> {
    let ggrid = w_psi.array.grid;
    check_grids(fgrid, &ggrid)?;
    let abs_det = fgrid.gauge().abs_det();
    let psi = w_psi.analyzer.psi;
    let spectra: Vec<Vec<Complex64>> = w_psi.array.slices.par_iter().map(|sl| fgrid.forward(sl)).collect();
    let levels = fgrid.levels();
    let ts = ggrid.scales();
    let slices = ts
        .par_iter()
        .map(|&s| {
            let mut acc = vec![Complex64::new(0.0, 0.0); levels.len()];
            for (k, &t) in ts.iter().enumerate() {
                // Haar weight |det A|^{−t} cancels the Jacobian |det A|^t
                let c = ggrid.ds * abs_det.powf(0.5 * (s - t));
                for ((a, v), &lv) in acc.iter_mut().zip(&spectra[k]).zip(levels) {
                    if *v == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let g = psi.at_level(lv + t) * phi.psi.at_level(lv + s);
                    if g != 0.0 {
                        *a += v * (c * g);
                    }
                }
            }
            fgrid.inverse(&acc)
        })
        .collect();
    Ok(GroupArray { grid: ggrid, slices })
}

/// Compares W_φf with W_ψf ∗ W_φψ on the group grid.
pub fn reproducing_check(
    fgrid: &FrequencyGrid,
    f: &SampledField,
    phi: &AdmissibleVector,
    psi: &AdmissibleVector,
    ggrid: &GroupGrid,
) -> Result<ReproducingReport> {
    let lhs = wavelet_transform(fgrid, f, phi, ggrid)?;
    let w_psi = wavelet_transform(fgrid, f, psi, ggrid)?;
    let rhs = group_convolve_with_cross(fgrid, &w_psi, phi)?;
    let abs_det = fgrid.gauge().abs_det();
    let diff = lhs.array.combine(Complex64::new(1.0, 0.0), &rhs, Complex64::new(-1.0, 0.0))?;
    let r = lhs.array.l2_norm(abs_det);
    let m = lhs.array.max_abs();
    Ok(ReproducingReport {
        relative_l2: if r > 0.0 { diff.l2_norm(abs_det) / r } else { diff.l2_norm(abs_det) },
        relative_sup: if m > 0.0 { diff.max_abs() / m } else { diff.max_abs() },
        reference_norm: r,
    })
}
