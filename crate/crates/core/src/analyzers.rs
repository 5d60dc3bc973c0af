//! Fourier-side analyzers: smooth shell profiles in the gauge level
//! t = τ(ξ), Calderón pairs and admissible vectors.
//!
//! Dilation by (A*)^s acts on profiles as the shift t ↦ t + s, so every
//! profile is a function of one real variable composed with the gauge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FrequencyGrid, GridSpec};
use crate::expansive::HomogeneousGauge;

/// Shape of a profile in the level variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShellShape {
    /// exp(1 − 1/(1−u²)) on (lo, hi), peak 1 at the centre.
    Bump,
    /// Bump divided by Σ_k Bump(t+k)², the Calderón dual of [`ShellShape::Bump`].
    CalderonDual,
    /// Bump divided by sqrt(Σ_k Bump(t+k)²); its integer translates are a
    /// partition of unity in squares.
    Tight,
}

/// ĝ(ξ) = gain · shape(τ(ξ)) supported in lo < τ(ξ) < hi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub shape: ShellShape,
    pub lo: f64,
    pub hi: f64,
    pub gain: f64,
}

/// JSON form of a profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileDocument {
    pub shape: String,
    pub params: SpectralProfile,
    pub grid_spec: Option<GridSpec>,
}

#[inline]
pub fn bump(t: f64, lo: f64, hi: f64) -> f64 {
    if !(t > lo && t < hi) {
        return 0.0;
    }
    let u = (2.0 * t - lo - hi) / (hi - lo);
    let v = 1.0 - u * u;
    if v <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / v).exp()
    }
}

/// Σ_k bump(t+k)² over all integer k.
#[inline]
pub fn periodized_square(t: f64, lo: f64, hi: f64) -> f64 {
    let k0 = (lo - t).floor() as i64;
    let k1 = (hi - t).ceil() as i64;
    (k0..=k1).map(|k| bump(t + k as f64, lo, hi).powi(2)).sum()
}

impl SpectralProfile {
    pub fn new(shape: ShellShape, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("profile support ({lo}, {hi})")));
        }
        if shape != ShellShape::Bump && hi - lo <= 1.0 {
            return Err(Error::InvalidParameter(
                "dual profiles need a support wider than one level".into(),
            ));
        }
        Ok(Self { shape, lo, hi, gain: 1.0 })
    }

    pub fn bump(lo: f64, hi: f64) -> Result<Self> {
        Self::new(ShellShape::Bump, lo, hi)
    }

    pub fn with_gain(self, gain: f64) -> Self {
        Self { gain, ..self }
    }

    /// Value at gauge level t.
    #[inline]
    pub fn at_level(&self, t: f64) -> f64 {
        let b = bump(t, self.lo, self.hi);
        if b == 0.0 {
            return 0.0;
        }
        let v = match self.shape {
            ShellShape::Bump => b,
            ShellShape::CalderonDual => b / periodized_square(t, self.lo, self.hi),
            ShellShape::Tight => b / periodized_square(t, self.lo, self.hi).sqrt(),
        };
        self.gain * v
    }

    /// ĝ(ξ).
    pub fn eval(&self, gauge: &HomogeneousGauge, xi: &[f64]) -> f64 {
        self.at_level(gauge.level(xi))
    }

    /// Inner and outer gauge radii D^lo, D^hi.
    pub fn annulus(&self, abs_det: f64) -> (f64, f64) {
        (abs_det.powf(self.lo), abs_det.powf(self.hi))
    }

    /// Samples of ĝ((A*)^{−s}ξ) on the grid, FFT order.
    pub fn samples(&self, grid: &FrequencyGrid, s: f64) -> Vec<f64> {
        grid.levels().iter().map(|t| self.at_level(t - s)).collect()
    }

    /// Profile dilated by (A*)^k: support shifts by k levels.
    pub fn shifted(&self, k: f64) -> Self {
        Self { lo: self.lo + k, hi: self.hi + k, ..*self }
    }

    pub fn document(&self, grid: Option<GridSpec>) -> ProfileDocument {
        ProfileDocument { shape: "log-shell-bump".into(), params: *self, grid_spec: grid }
    }

    /// ∫ ĝ(t)² dt by the composite rule with step `ds`, dropping nodes whose
    /// integrand is below 1e−14.
    pub fn square_integral(&self, ds: f64) -> f64 {
        let m = ((self.hi - self.lo) / ds).ceil() as usize;
        (0..=m)
            .map(|i| self.at_level(self.lo + i as f64 * ds).powi(2))
            .filter(|v| *v >= 1e-14)
            .sum::<f64>()
            * ds
    }
}

/// Default discrete analyzer: bump on gauge radii [1, D²].
pub fn default_profile() -> SpectralProfile {
    SpectralProfile { shape: ShellShape::Bump, lo: 0.0, hi: 2.0, gain: 1.0 }
}

/// Checks that every nonzero grid frequency is seen by some dilate with
/// magnitude ≥ 0.1 and returns the profile.
pub fn make_covering_profile(grid: &FrequencyGrid, profile: SpectralProfile) -> Result<SpectralProfile> {
    for (idx, &t) in grid.levels().iter().enumerate() {
        if !t.is_finite() {
            continue;
        }
        let k0 = (profile.lo - t).floor() as i64;
        let k1 = (profile.hi - t).ceil() as i64;
        let best = (k0..=k1).map(|k| profile.at_level(t + k as f64).abs()).fold(0.0, f64::max);
        if best < 0.1 {
            return Err(Error::CoverageGap { xi: grid.spec().frequency(idx) });
        }
    }
    Ok(profile)
}

/// Discrete analyzing pair (φ, ψ) with Σ_j φ̂((A*)^jξ)ψ̂((A*)^jξ) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzingPair {
    pub phi: SpectralProfile,
    pub psi: SpectralProfile,
    pub overlap: i32,
}

impl AnalyzingPair {
    /// Calderón product Σ_{|k|≤N} φ̂ψ̂ at level t, the reproducing window.
    pub fn window_at_level(&self, t: f64) -> f64 {
        (-self.overlap..=self.overlap)
            .map(|k| self.phi.at_level(t + k as f64) * self.psi.at_level(t + k as f64))
            .sum()
    }
}

pub fn make_analyzing_pair(grid: &FrequencyGrid, phi: SpectralProfile) -> Result<AnalyzingPair> {
    if phi.shape != ShellShape::Bump {
        return Err(Error::InvalidParameter("analyzing pairs are built from a bump".into()));
    }
    for (idx, &t) in grid.levels().iter().enumerate() {
        if t > phi.lo && t < phi.hi {
            let den = periodized_square(t, phi.lo, phi.hi);
            if den < 1e-12 {
                return Err(Error::DivisionUnderflow { xi: grid.spec().frequency(idx), value: den });
            }
        }
    }
    let psi = SpectralProfile { shape: ShellShape::CalderonDual, gain: 1.0 / phi.gain, ..phi };
    Ok(AnalyzingPair { phi, psi, overlap: (phi.hi - phi.lo).ceil() as i32 })
}

/// Quadrature step used for admissibility normalisation.
pub const ADMISSIBLE_STEP: f64 = 1.0 / 64.0;

/// Admissible wavelet: ∫ |ψ̂((A*)^sξ)|² ds = 1 for ξ ≠ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleVector {
    pub psi: SpectralProfile,
    pub ds: f64,
}

pub fn make_admissible(g: SpectralProfile, ds: f64) -> Result<AdmissibleVector> {
    if !(ds > 0.0 && ds <= 1.0 / 32.0) {
        return Err(Error::InvalidParameter(format!("admissibility step {ds} must be in (0, 1/32]")));
    }
    let integral = g.square_integral(ds);
    if !(integral > 0.0) {
        return Err(Error::CoverageGap { xi: vec![] });
    }
    let psi = g.with_gain(g.gain / integral.sqrt());
    Ok(AdmissibleVector { psi, ds })
}
