//! Reproducible band-limited test fields built from wavelet atoms.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analyzers::SpectralProfile;
use crate::error::{Error, Result};
use crate::field::{FrequencyGrid, SampledField};
use crate::group::{Group, GroupPoint};

/// c · π(x, s)g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub coef: Complex64,
    pub at: GroupPoint,
}

/// f = Σ c_i π(x_i, s_i) g with the analytic spectrum
/// f̂(ξ) = Σ c_i |det A|^{s_i/2} e^{−2πi x_i·ξ} ĝ((A*)^{s_i} ξ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomField {
    pub generator: SpectralProfile,
    pub atoms: Vec<Atom>,
}

impl AtomField {
    pub fn single(generator: SpectralProfile, at: GroupPoint) -> Self {
        Self { generator, atoms: vec![Atom { coef: Complex64::new(1.0, 0.0), at }] }
    }

    /// Gauge levels (lo, hi) containing the spectrum.
    pub fn band(&self) -> (f64, f64) {
        let smin = self.atoms.iter().map(|a| a.at.s).fold(f64::INFINITY, f64::min);
        let smax = self.atoms.iter().map(|a| a.at.s).fold(f64::NEG_INFINITY, f64::max);
        (self.generator.lo - smax, self.generator.hi - smin)
    }

    pub fn spectrum_at(&self, abs_det: f64, xi: &[f64], level: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.atoms {
            let g = self.generator.at_level(level + a.at.s);
            if g == 0.0 {
                continue;
            }
            let phase: f64 = a.at.x.iter().zip(xi).map(|(x, k)| x * k).sum();
            acc += a.coef * abs_det.powf(a.at.s / 2.0) * g * Complex64::from_polar(1.0, -std::f64::consts::TAU * phase);
        }
        acc
    }

    pub fn sample(&self, grid: &FrequencyGrid) -> Result<SampledField> {
        if self.atoms.is_empty() {
            return Ok(SampledField::zeros(grid));
        }
        let (_, top) = self.band();
        if top >= grid.nyquist_level() {
            return Err(Error::Aliasing { scale: 0.0, level: top, limit: grid.nyquist_level() });
        }
        let spec = grid.spec();
        let abs_det = grid.gauge().abs_det();
        let spectrum: Vec<Complex64> = grid
            .levels()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if t.is_finite() {
                    self.spectrum_at(abs_det, &spec.frequency(i), t)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        SampledField::from_spectrum_with_band(grid, spectrum, top)
    }

    /// π(h) f, moving every atom by left multiplication.
    pub fn translate(&self, group: &Group, h: &GroupPoint) -> Self {
        Self {
            generator: self.generator,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { coef: a.coef, at: group.mul(h, &a.at) })
                .collect(),
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            generator: self.generator,
            atoms: self.atoms.iter().map(|a| Atom { coef: a.coef * c, at: a.at.clone() }).collect(),
        }
    }

    pub fn sum(&self, other: &AtomField) -> Result<Self> {
        if self.generator != other.generator {
            return Err(Error::InvalidParameter("atom fields use different generators".into()));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Ok(Self { generator: self.generator, atoms })
    }
}

/// Parameters of a generated suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SuiteSpec {
    pub count: usize,
    pub seed: u64,
    pub atoms_per_field: usize,
    /// Scale range [s_min, s_max] for atom positions.
    pub scale_range: [f64; 2],
    /// Atom centres are uniform in [−spread, spread]^d.
    pub spread: f64,
    pub generator: SpectralProfile,
    /// Prepend the deterministic fixtures.
    pub fixtures: bool,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            count: 8,
            seed: 42,
            atoms_per_field: 4,
            scale_range: [-1.0, 1.0],
            spread: 1.0,
            generator: SpectralProfile::bump(0.0, 1.5).expect("valid bump"),
            fixtures: true,
        }
    }
}

/// Fixtures first (when enabled), then seeded random atom sums, `count` total.
pub fn suite_generate(spec: &SuiteSpec, dim: usize) -> Vec<AtomField> {
    let mut out = Vec::with_capacity(spec.count);
    let [s0, s1] = spec.scale_range;
    let mid = 0.5 * (s0 + s1);
    if spec.fixtures {
        // single band, centred
        out.push(AtomField::single(spec.generator, GroupPoint::new(vec![0.0; dim], mid)));
        // translated and dilated copy
        let mut x = vec![0.0; dim];
        x[0] = 0.5 * spec.spread;
        out.push(AtomField::single(spec.generator, GroupPoint::new(x, s0)));
    }
    let mut rng = crate::rng::seeded(spec.seed);
    while out.len() < spec.count {
        let atoms = (0..spec.atoms_per_field.max(1))
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-spec.spread..=spec.spread)).collect();
                let s = if s1 > s0 { rng.random_range(s0..=s1) } else { s0 };
                let coef = Complex64::from_polar(rng.random_range(0.25..1.0), rng.random_range(0.0..std::f64::consts::TAU));
                Atom { coef, at: GroupPoint::new(x, s) }
            })
            .collect();
        out.push(AtomField { generator: spec.generator, atoms });
    }
    out.truncate(spec.count);
    out
}
