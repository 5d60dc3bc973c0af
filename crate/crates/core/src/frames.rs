//! Discrete frames π(γ)ψ indexed by a lattice Γ ⊂ G_A, the frame algorithm,
//! Gramian duals for the moment problem, and molecule envelopes.
//!
//! Fields live on the periodic box of the grid, so spatial positions of Γ are
//! kept inside the fundamental box and membership tests use periodic images.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzers::AdmissibleVector;
use crate::error::{Error, Result};
use crate::expansive::{QuasiNormStructure, MAX_DIM};
use crate::field::{FrequencyGrid, SampledField};
use crate::group::{
    pti_norm, wavelet_support, wavelet_transform, wiener_amalgam_norm, ControlWeight, Group, GroupArray, GroupGrid,
    GroupPoint, Neighborhood, VSampler,
};
use crate::norms::{NormParams, NormReport};
use crate::suite::AtomField;

const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    /// G_A = ⋃ γU with bounded multiplicity.
    Covering,
    /// γU ∩ γ′U = ∅ for γ ≠ γ′.
    Separated,
}

/// Finite Γ = {(A^{s_k}(a·m), s_k)} with s_k = k·b, positions in the
/// fundamental box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexSet {
    pub gamma: Vec<GroupPoint>,
    pub u: Neighborhood,
    pub kind: IndexKind,
    pub density: f64,
    pub spatial_step: f64,
    pub scale_step: f64,
    pub extent: f64,
    /// Largest #(Γ ∩ gU) over the domain nodes.
    pub multiplicity: usize,
    /// Fraction of domain nodes inside some γU.
    pub coverage: f64,
}

impl IndexSet {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Row-major A^{−s} for every distinct scale of a point list.
struct ScaleTable {
    dim: usize,
    inv: Vec<[f64; MAX_DIM * MAX_DIM]>,
    of: Vec<usize>,
}

fn flat(m: &DMatrix<f64>) -> [f64; MAX_DIM * MAX_DIM] {
    let mut out = [0.0; MAX_DIM * MAX_DIM];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * MAX_DIM + j] = m[(i, j)];
        }
    }
    out
}

fn apply(m: &[f64; MAX_DIM * MAX_DIM], d: usize, v: &[f64]) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    for i in 0..d {
        out[i] = (0..d).map(|j| m[i * MAX_DIM + j] * v[j]).sum();
    }
    out
}

impl ScaleTable {
    fn new(group: &Group, points: &[GroupPoint]) -> Self {
        let mut index: BTreeMap<u64, usize> = BTreeMap::new();
        let mut scales = Vec::new();
        let of = points
            .iter()
            .map(|p| {
                *index.entry(p.s.to_bits()).or_insert_with(|| {
                    scales.push(p.s);
                    scales.len() - 1
                })
            })
            .collect();
        Self {
            dim: group.dim(),
            inv: scales.iter().map(|&s| flat(&group.power(-s))).collect(),
            of,
        }
    }
}

/// Periodic image offsets {−1, 0, 1}^d.
fn images(d: usize) -> Vec<[f64; MAX_DIM]> {
    let mut out = Vec::with_capacity(3usize.pow(d as u32));
    for code in 0..3usize.pow(d as u32) {
        let mut k = [0.0; MAX_DIM];
        let mut c = code;
        for v in k.iter_mut().take(d) {
            *v = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        out.push(k);
    }
    out
}

fn half_open(v: f64, r: f64) -> bool {
    v + BOUNDARY_EPS >= -r && v + BOUNDARY_EPS < r
}

/// γ^{−1}g ∈ U for some periodic image of g.
#[allow(clippy::too_many_arguments)]
fn in_neighborhood(
    table: &ScaleTable,
    i: usize,
    gamma: &GroupPoint,
    gx: &[f64],
    gs: f64,
    u: &Neighborhood,
    extent: f64,
    shifts: &[[f64; MAX_DIM]],
) -> bool {
    if !half_open(gs - gamma.s, u.b) {
        return false;
    }
    let d = table.dim;
    let inv = &table.inv[table.of[i]];
    let mut diff = [0.0; MAX_DIM];
    shifts.iter().any(|k| {
        for a in 0..d {
            diff[a] = gx[a] - gamma.x[a] + 2.0 * extent * k[a];
        }
        let y = apply(inv, d, &diff[..d]);
        y[..d].iter().all(|v| half_open(*v, u.a))
    })
}

fn lattice(group: &Group, domain: &GroupGrid, u: &Neighborhood, density: f64) -> Result<(Vec<GroupPoint>, f64, f64)> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidParameter(format!("density factor {density} must be positive")));
    }
    if !(u.a > 0.0 && u.b > 0.0) {
        return Err(Error::InvalidParameter("neighborhood must have positive size".into()));
    }
    let a = 2.0 * u.a / density;
    let b = 2.0 * u.b / density;
    let d = domain.spatial.dim;
    let e = domain.spatial.extent;
    let lo = domain.scale(0);
    let hi = domain.scale(domain.count - 1);
    let mut gamma = Vec::new();
    for k in (lo / b).floor() as i64..=(hi / b).ceil() as i64 {
        let s = k as f64 * b;
        let inv = group.power(-s);
        let fwd = group.power(s);
        let bound: Vec<i64> = (0..d)
            .map(|i| ((0..d).map(|j| inv[(i, j)].abs()).sum::<f64>() * e / a).ceil() as i64 + 1)
            .collect();
        let mut m: Vec<i64> = bound.iter().map(|b| -b).collect();
        'outer: loop {
            let am: Vec<f64> = m.iter().map(|v| a * *v as f64).collect();
            let x: Vec<f64> = (0..d).map(|i| (0..d).map(|j| fwd[(i, j)] * am[j]).sum()).collect();
            if x.iter().all(|v| *v + BOUNDARY_EPS >= -e && *v + BOUNDARY_EPS < e) {
                gamma.push(GroupPoint::new(x, s));
            }
            for i in (0..d).rev() {
                if m[i] < bound[i] {
                    m[i] += 1;
                    continue 'outer;
                }
                m[i] = -bound[i];
            }
            break;
        }
    }
    Ok((gamma, a, b))
}

/// Interiors of γU and γ′U meet, tested by separating axes (the box
/// normals and the face normals of the image parallelotope; exact for d ≤ 2).
fn overlaps(group: &Group, u: &Neighborhood, g1: &GroupPoint, g2: &GroupPoint, extent: f64, shifts: &[[f64; MAX_DIM]]) -> bool {
    let t = g2.s - g1.s;
    if t.abs() >= 2.0 * u.b - BOUNDARY_EPS {
        return false;
    }
    let d = g1.x.len();
    let at = group.power(t);
    let ati = group.power(-t);
    let g1i = group.inv(g1);
    let mut axes: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    axes.extend((0..d).map(|i| (0..d).map(|j| ati[(i, j)]).collect::<Vec<f64>>()));
    shifts.iter().any(|k| {
        let moved = GroupPoint::new((0..d).map(|a| g2.x[a] + 2.0 * extent * k[a]).collect(), g2.s);
        let h = group.mul(&g1i, &moved);
        !axes.iter().any(|n| {
            let r_box = u.a * n.iter().map(|v| v.abs()).sum::<f64>();
            let c: f64 = n.iter().zip(&h.x).map(|(a, b)| a * b).sum();
            let r_par = u.a * (0..d).map(|j| (0..d).map(|i| n[i] * at[(i, j)]).sum::<f64>().abs()).sum::<f64>();
            (c.abs() - (r_box + r_par)) >= -BOUNDARY_EPS
        })
    })
}

/// Multiplicity and coverage over the domain nodes, with the first hole.
fn density_stats(group: &Group, domain: &GroupGrid, u: &Neighborhood, gamma: &[GroupPoint]) -> (usize, f64, Option<GroupPoint>) {
    let table = ScaleTable::new(group, gamma);
    let shifts = images(domain.spatial.dim);
    let extent = domain.spatial.extent;
    let nodes = domain.count * domain.spatial.len();
    let counts: Vec<usize> = (0..nodes)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx / domain.spatial.len(), idx % domain.spatial.len());
            let s = domain.scale(i);
            let x = domain.spatial.point(k);
            gamma
                .iter()
                .enumerate()
                .filter(|(j, g)| in_neighborhood(&table, *j, g, &x, s, u, extent, &shifts))
                .count()
        })
        .collect();
    let covered = counts.iter().filter(|c| **c > 0).count();
    let hole = counts.iter().position(|c| *c == 0).map(|idx| {
        let (i, k) = (idx / domain.spatial.len(), idx % domain.spatial.len());
        GroupPoint::new(domain.spatial.point(k), domain.scale(i))
    });
    let coverage = if nodes == 0 { 1.0 } else { covered as f64 / nodes as f64 };
    (counts.into_iter().max().unwrap_or(0), coverage, hole)
}

/// Lattice Γ with spatial step 2a/density and scale step 2b/density for
/// U = [−a, a)^d × [−b, b); the requested kind is verified on the domain.
pub fn sample_index_set(group: &Group, domain: &GroupGrid, u: &Neighborhood, kind: IndexKind, density: f64) -> Result<IndexSet> {
    let (gamma, a, b) = lattice(group, domain, u, density)?;
    let (multiplicity, coverage, hole) = density_stats(group, domain, u, &gamma);
    let extent = domain.spatial.extent;
    match kind {
        IndexKind::Covering => {
            if let Some(h) = hole {
                return Err(Error::VerificationFailed(format!(
                    "covering has a hole at x = {:?}, s = {} (coverage {coverage})",
                    h.x, h.s
                )));
            }
        }
        IndexKind::Separated => {
            let shifts = images(domain.spatial.dim);
            let clash = (0..gamma.len()).into_par_iter().find_map_first(|i| {
                (i + 1..gamma.len())
                    .find(|&j| overlaps(group, u, &gamma[i], &gamma[j], extent, &shifts))
                    .map(|j| (i, j))
            });
            if let Some((i, j)) = clash {
                return Err(Error::VerificationFailed(format!(
                    "γU and γ′U meet for γ = ({:?}, {}) and γ′ = ({:?}, {})",
                    gamma[i].x, gamma[i].s, gamma[j].x, gamma[j].s
                )));
            }
        }
    }
    Ok(IndexSet { gamma, u: *u, kind, density, spatial_step: a, scale_step: b, extent, multiplicity, coverage })
}

struct ScaleGroup {
    scale: f64,
    members: Vec<usize>,
    /// (frequency index, |det A|^{s/2} ψ̂((A*)^sξ)) where nonzero.
    active: Vec<(usize, f64)>,
}

/// Analysis and synthesis with the atoms π(γ)ψ, evaluated spectrally.
pub struct FrameOperator {
    fgrid: FrequencyGrid,
    psi: AdmissibleVector,
    gamma: Vec<GroupPoint>,
    groups: Vec<ScaleGroup>,
    freqs: Vec<Vec<f64>>,
}

impl FrameOperator {
    pub fn new(fgrid: &FrequencyGrid, psi: &AdmissibleVector, gamma: &[GroupPoint]) -> Result<Self> {
        let spec = fgrid.spec();
        let abs_det = fgrid.gauge().abs_det();
        let mut by_scale: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, g) in gamma.iter().enumerate() {
            if g.x.len() != spec.dim {
                return Err(Error::DimensionMismatch { expected: spec.dim, got: g.x.len() });
            }
            if psi.psi.hi - g.s >= fgrid.nyquist_level() {
                return Err(Error::Aliasing { scale: g.s, level: psi.psi.hi - g.s, limit: fgrid.nyquist_level() });
            }
            by_scale.entry(g.s.to_bits()).or_default().push(i);
        }
        let groups = by_scale
            .into_values()
            .map(|members| {
                let s = gamma[members[0]].s;
                let c = abs_det.powf(0.5 * s);
                let active = fgrid
                    .levels()
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &t)| {
                        let p = if t.is_finite() { psi.psi.at_level(t + s) } else { 0.0 };
                        (p != 0.0).then_some((k, c * p))
                    })
                    .collect();
                ScaleGroup { scale: s, members, active }
            })
            .collect();
        Ok(Self {
            fgrid: fgrid.clone(),
            psi: *psi,
            gamma: gamma.to_vec(),
            groups,
            freqs: (0..spec.len()).map(|k| spec.frequency(k)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn gamma(&self) -> &[GroupPoint] {
        &self.gamma
    }

    pub fn analyzer(&self) -> &AdmissibleVector {
        &self.psi
    }

    fn phase(&self, k: usize, x: &[f64]) -> Complex64 {
        let p: f64 = self.freqs[k].iter().zip(x).map(|(a, b)| a * b).sum();
        Complex64::from_polar(1.0, std::f64::consts::TAU * p)
    }

    /// c_γ = ⟨f, π(γ)ψ⟩, the trigonometric interpolant of W_ψf(·, s_γ) at x_γ.
    pub fn analysis(&self, f: &SampledField) -> Result<Vec<Complex64>> {
        if f.grid() != self.fgrid.spec() {
            return Err(Error::InvalidParameter("field and frequency grid differ".into()));
        }
        let spectrum = f.spectrum();
        let dxi = (2.0 * self.fgrid.spec().extent).powi(-(self.fgrid.spec().dim as i32));
        let mut out = vec![Complex64::new(0.0, 0.0); self.gamma.len()];
        for g in &self.groups {
            let weighted: Vec<(usize, Complex64)> = g
                .active
                .iter()
                .filter(|(k, _)| spectrum[*k] != Complex64::new(0.0, 0.0))
                .map(|&(k, w)| (k, spectrum[k] * w * dxi))
                .collect();
            let vals: Vec<Complex64> = g
                .members
                .par_iter()
                .map(|&i| weighted.iter().map(|&(k, v)| v * self.phase(k, &self.gamma[i].x)).sum())
                .collect();
            for (&i, v) in g.members.iter().zip(vals) {
                out[i] = v;
            }
        }
        Ok(out)
    }

    /// Σ c_γ π(γ)ψ.
    pub fn synthesis(&self, c: &[Complex64]) -> Result<SampledField> {
        if c.len() != self.gamma.len() {
            return Err(Error::DimensionMismatch { expected: self.gamma.len(), got: c.len() });
        }
        let n = self.fgrid.spec().len();
        let mut band = f64::NEG_INFINITY;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
        for g in &self.groups {
            if g.members.iter().all(|&i| c[i] == Complex64::new(0.0, 0.0)) {
                continue;
            }
            band = band.max(self.psi.psi.hi - g.scale);
            let parts: Vec<(usize, Complex64)> = g
                .active
                .par_iter()
                .map(|&(k, w)| {
                    let s: Complex64 = g.members.iter().map(|&i| c[i] * self.phase(k, &self.gamma[i].x).conj()).sum();
                    (k, s * w)
                })
                .collect();
            for (k, v) in parts {
                spectrum[k] += v;
            }
        }
        SampledField::from_spectrum_with_band(&self.fgrid, spectrum, band)
    }

    /// S f = Σ ⟨f, π(γ)ψ⟩ π(γ)ψ.
    pub fn apply(&self, f: &SampledField) -> Result<SampledField> {
        self.synthesis(&self.analysis(f)?)
    }

    pub fn atom(&self, i: usize) -> Result<SampledField> {
        let mut c = vec![Complex64::new(0.0, 0.0); self.len()];
        c[i] = Complex64::new(1.0, 0.0);
        self.synthesis(&c)
    }
}

/// ⟨f, π(γ)ψ⟩ for every γ.
pub fn analysis(fgrid: &FrequencyGrid, f: &SampledField, psi: &AdmissibleVector, gamma: &[GroupPoint]) -> Result<Vec<Complex64>> {
    FrameOperator::new(fgrid, psi, gamma)?.analysis(f)
}

/// Σ c_i atoms_i.
pub fn synthesis(fgrid: &FrequencyGrid, c: &[Complex64], atoms: &[SampledField]) -> Result<SampledField> {
    if c.len() != atoms.len() {
        return Err(Error::DimensionMismatch { expected: atoms.len(), got: c.len() });
    }
    let mut out = SampledField::zeros(fgrid);
    for (ci, a) in c.iter().zip(atoms) {
        if *ci != Complex64::new(0.0, 0.0) {
            out = out.combine(Complex64::new(1.0, 0.0), a, *ci);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameBounds {
    pub a_lo: f64,
    pub b_hi: f64,
    pub rayleigh_min: f64,
    pub rayleigh_max: f64,
    pub power_estimate: f64,
    /// Smallest Rayleigh quotient met by power iteration of B − S started
    /// from the suite, i.e. inside the subspace the frame algorithm reaches.
    pub reachable_min: f64,
}

impl FrameBounds {
    /// (B − A)/(B + A), the contraction factor of the frame algorithm.
    pub fn contraction(&self) -> f64 {
        (self.b_hi - self.a_lo) / (self.b_hi + self.a_lo)
    }
}

/// Extremes of Σ|c_γ|²/‖f‖² over the suite. B is raised to the power
/// iteration estimate of ‖S‖ started from seeded noise, and A lowered to
/// the smallest eigenvalue estimate reachable from the suite.
pub fn frame_bounds(op: &FrameOperator, suite: &[SampledField], power_iterations: usize, seed: u64) -> Result<FrameBounds> {
    if suite.is_empty() {
        return Err(Error::InvalidParameter("frame bounds need a nonempty suite".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for f in suite {
        let n2 = f.l2_norm().powi(2);
        if n2 == 0.0 {
            continue;
        }
        let e: f64 = op.analysis(f)?.iter().map(|c| c.norm_sqr()).sum();
        lo = lo.min(e / n2);
        hi = hi.max(e / n2);
    }
    if lo.is_infinite() {
        lo = 0.0;
    }
    let mut power: f64 = 0.0;
    let mut reachable = lo;
    use rand::Rng;
    let mut rng = crate::rng::seeded(seed);
    if !op.is_empty() && power_iterations > 0 {
        let n = op.fgrid.spec().len();
        let noise = (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let mut v = SampledField::from_values(&op.fgrid, noise)?;
        for _ in 0..power_iterations {
            let sv = op.apply(&v)?;
            let norm = sv.l2_norm();
            if norm == 0.0 {
                break;
            }
            let vn = v.l2_norm();
            power = sv.inner(&v).re / (vn * vn);
            v = sv.scaled(Complex64::new(1.0 / norm, 0.0));
        }
        let shift = hi.max(power) * (1.0 + 1e-3);
        let mut v = SampledField::zeros(&op.fgrid);
        for f in suite {
            v = v.combine(Complex64::new(1.0, 0.0), f, Complex64::new(rng.random_range(0.5..1.5), 0.0));
        }
        for _ in 0..power_iterations {
            let vn = v.l2_norm();
            if vn == 0.0 {
                break;
            }
            let sv = op.apply(&v)?;
            reachable = reachable.min(sv.inner(&v).re / (vn * vn));
            v = v.combine(Complex64::new(shift / vn, 0.0), &sv, Complex64::new(-1.0 / vn, 0.0));
        }
    }
    Ok(FrameBounds {
        a_lo: lo.min(reachable),
        b_hi: hi.max(power),
        rayleigh_min: lo,
        rayleigh_max: hi,
        power_estimate: power,
        reachable_min: reachable,
    })
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub field: SampledField,
    /// Dual coefficients d with f̃ = Σ d_γ π(γ)ψ.
    pub coefficients: Vec<Complex64>,
    /// ‖f − f_k‖₂/‖f‖₂ for f_1 = λSf, f_2, ….
    pub errors: Vec<f64>,
    pub lambda: f64,
    /// Geometric decay rate fitted over the errors above the round-off floor.
    pub ratio: f64,
    pub predicted_ratio: f64,
}

/// Errors below this are treated as converged.
pub const RECONSTRUCTION_FLOOR: f64 = 1e-13;

/// Frame algorithm f_{k+1} = f_k + λ(Sf − Sf_k) with λ = 2/(A + B), run for
/// `iterations` steps after f_1 = λSf or until the error falls below `tolerance`.
pub fn dual_reconstruct(op: &FrameOperator, f: &SampledField, bounds: &FrameBounds, iterations: usize, tolerance: f64) -> Result<Reconstruction> {
    if !(bounds.a_lo > 0.0) {
        return Err(Error::InvalidParameter("frame algorithm needs a positive lower frame bound".into()));
    }
    let lambda = 2.0 / (bounds.a_lo + bounds.b_hi);
    let norm = f.l2_norm();
    let zero = Complex64::new(0.0, 0.0);
    if norm == 0.0 {
        return Ok(Reconstruction {
            field: SampledField::zeros(&op.fgrid),
            coefficients: vec![zero; op.len()],
            errors: vec![0.0],
            lambda,
            ratio: 0.0,
            predicted_ratio: bounds.contraction(),
        });
    }
    let target = op.analysis(f)?;
    let mut d: Vec<Complex64> = target.iter().map(|c| c * lambda).collect();
    let mut fk = op.synthesis(&d)?;
    let error = |g: &SampledField| g.combine(Complex64::new(1.0, 0.0), f, Complex64::new(-1.0, 0.0)).l2_norm() / norm;
    let mut errors = vec![error(&fk)];
    let mut rising = 0;
    for it in 0..iterations {
        if *errors.last().unwrap() <= tolerance {
            break;
        }
        let ck = op.analysis(&fk)?;
        for ((di, t), c) in d.iter_mut().zip(&target).zip(&ck) {
            *di += (t - c) * lambda;
        }
        fk = op.synthesis(&d)?;
        let e = error(&fk);
        rising = if e > *errors.last().unwrap() { rising + 1 } else { 0 };
        errors.push(e);
        if rising >= 3 {
            return Err(Error::Diverged { iteration: it + 1, residual: e });
        }
    }
    let m = errors.iter().rposition(|e| *e > RECONSTRUCTION_FLOOR).unwrap_or(0);
    let ratio = if m == 0 { 0.0 } else { (errors[m] / errors[0]).powf(1.0 / m as f64) };
    Ok(Reconstruction { field: fk, coefficients: d, errors, lambda, ratio, predicted_ratio: bounds.contraction() })
}

/// Default limit on the Gramian condition number.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Relative eigenvalue cutoff of the Gramian pseudo-inverse.
pub const GRAMIAN_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MomentSolution {
    pub field: SampledField,
    /// d with f = Σ d_γ π(γ)ψ.
    pub coefficients: Vec<Complex64>,
    /// |⟨f, π(γ)ψ⟩ − c_γ|.
    pub residuals: Vec<f64>,
    pub condition: f64,
    pub rank: usize,
    /// Pseudo-inverse of G_{ij} = ⟨π(γ_j)ψ, π(γ_i)ψ⟩.
    pub pinv: DMatrix<Complex64>,
    /// φ_γ = Σ_j (G⁺)_{jγ} π(γ_j)ψ.
    pub duals: Vec<SampledField>,
}

impl MomentSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

fn components(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if edge(i, j) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// f = Σ c_γ φ_γ with Gramian duals φ_γ inside span{π(γ)ψ}, so that
/// ⟨f, π(γ)ψ⟩ = c_γ when the Gramian is invertible. The Gramian is split
/// into its exactly decoupled blocks before inversion.
pub fn moment_problem(op: &FrameOperator, c: &[Complex64], condition_limit: f64) -> Result<MomentSolution> {
    let m = op.len();
    if c.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: c.len() });
    }
    let zero = Complex64::new(0.0, 0.0);
    let atoms: Vec<SampledField> = (0..m).map(|i| op.atom(i)).collect::<Result<_>>()?;
    let dxi = (2.0 * op.fgrid.spec().extent).powi(-(op.fgrid.spec().dim as i32));
    let entries: Vec<Complex64> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            atoms[j].spectrum().iter().zip(atoms[i].spectrum()).map(|(a, b)| a * b.conj()).sum::<Complex64>() * dxi
        })
        .collect();
    let gram = DMatrix::from_row_slice(m, m, &entries);
    let blocks = components(m, |i, j| gram[(i, j)] != zero);
    let mut eig = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let sub = DMatrix::from_fn(b.len(), b.len(), |r, s| gram[(b[r], b[s])]);
        let e = nalgebra::SymmetricEigen::new(sub);
        eig.push(e);
    }
    let lmax = eig.iter().flat_map(|e| e.eigenvalues.iter().cloned()).fold(0.0, f64::max);
    let lmin = eig.iter().flat_map(|e| e.eigenvalues.iter().cloned()).fold(f64::INFINITY, f64::min);
    let condition = if m == 0 {
        1.0
    } else if lmin > 0.0 {
        lmax / lmin
    } else {
        f64::INFINITY
    };
    if condition > condition_limit {
        return Err(Error::IllConditioned { condition, limit: condition_limit });
    }
    let mut pinv = DMatrix::from_element(m, m, zero);
    let mut rank = 0;
    for (b, e) in blocks.iter().zip(&eig) {
        let v = &e.eigenvectors;
        for (k, &l) in e.eigenvalues.iter().enumerate() {
            if l <= GRAMIAN_CUTOFF * lmax {
                continue;
            }
            rank += 1;
            for (r, &br) in b.iter().enumerate() {
                for (s, &bs) in b.iter().enumerate() {
                    pinv[(br, bs)] += v[(r, k)] * v[(s, k)].conj() / l;
                }
            }
        }
    }
    let cv = nalgebra::DVector::from_column_slice(c);
    let d: Vec<Complex64> = (&pinv * cv).iter().cloned().collect();
    let field = op.synthesis(&d)?;
    let back = op.analysis(&field)?;
    let residuals = back.iter().zip(c).map(|(a, b)| (a - b).norm()).collect();
    let duals = (0..m)
        .map(|g| op.synthesis(&(0..m).map(|j| pinv[(j, g)]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentSolution { field, coefficients: d, residuals, condition, rank, pinv, duals })
}

/// Φ(h) = Σ_δ m_δ |W_ψψ(δh)|, a finite combination of left translates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MolecularEnvelope {
    pub terms: Vec<(GroupPoint, f64)>,
}

fn point_key(p: &GroupPoint) -> (Vec<i64>, i64) {
    (p.x.iter().map(|v| (v * 1e9).round() as i64).collect(), (p.s * 1e9).round() as i64)
}

impl MolecularEnvelope {
    pub fn identity(dim: usize) -> Self {
        Self { terms: vec![(GroupPoint::identity(dim), 1.0)] }
    }

    /// From |W_ψφ_γ(g)| ≤ Σ_j |(G⁺)_{jγ}| |W_ψψ(γ_j^{−1}γ · γ^{−1}g)|, taking
    /// the largest coefficient for every distinct δ = γ_j^{−1}γ.
    pub fn from_duals(group: &Group, gamma: &[GroupPoint], pinv: &DMatrix<Complex64>) -> Self {
        let mut best: HashMap<(Vec<i64>, i64), (GroupPoint, f64)> = HashMap::new();
        for (j, gj) in gamma.iter().enumerate() {
            let gji = group.inv(gj);
            for (g, gg) in gamma.iter().enumerate() {
                let w = pinv[(j, g)].norm();
                if w == 0.0 {
                    continue;
                }
                let delta = group.mul(&gji, gg);
                let e = best.entry(point_key(&delta)).or_insert((delta, 0.0));
                e.1 = e.1.max(w);
            }
        }
        let mut terms: Vec<(GroupPoint, f64)> = best.into_values().collect();
        terms.sort_by_key(|t| point_key(&t.0));
        Self { terms }
    }

    /// Samples of h ↦ Φ(η^{−1}h) on a group grid, using
    /// W_ψψ(δη^{−1}h) = W_ψ(π(ηδ^{−1})ψ)(h). Translates that cannot be
    /// sampled without aliasing are left out; the count is returned.
    pub fn translated_samples(
        &self,
        fgrid: &FrequencyGrid,
        group: &Group,
        psi: &AdmissibleVector,
        eta: &GroupPoint,
        ggrid: &GroupGrid,
    ) -> Result<(Vec<Vec<f64>>, usize)> {
        let n = ggrid.spatial.len();
        let mut acc = vec![vec![0.0f64; n]; ggrid.count];
        let mut skipped = 0;
        for (delta, w) in &self.terms {
            let at = group.mul(eta, &group.inv(delta));
            let atom = match AtomField::single(psi.psi, at).sample(fgrid) {
                Ok(a) => a,
                Err(Error::Aliasing { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let wt = match wavelet_transform(fgrid, &atom, psi, ggrid) {
                Ok(wt) => wt,
                Err(Error::Aliasing { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (a, sl) in acc.iter_mut().zip(&wt.array.slices) {
                a.iter_mut().zip(sl).for_each(|(x, v)| *x += w * v.norm());
            }
        }
        Ok((acc, skipped))
    }
}

/// Members φ_γ with a common envelope Φ relative to ψ.
#[derive(Debug, Clone)]
pub struct MolecularSystem {
    pub gamma: Vec<GroupPoint>,
    pub members: Vec<SampledField>,
    pub envelope: MolecularEnvelope,
    pub reference: AdmissibleVector,
}

impl MolecularSystem {
    /// The atoms π(γ)ψ with Φ = |W_ψψ|.
    pub fn atoms(op: &FrameOperator) -> Result<Self> {
        Ok(Self {
            gamma: op.gamma.clone(),
            members: (0..op.len()).map(|i| op.atom(i)).collect::<Result<_>>()?,
            envelope: MolecularEnvelope::identity(op.fgrid.spec().dim),
            reference: op.psi,
        })
    }

    /// Gramian duals of a moment solution.
    pub fn duals(op: &FrameOperator, group: &Group, sol: &MomentSolution) -> Self {
        Self {
            gamma: op.gamma.clone(),
            members: sol.duals.clone(),
            envelope: MolecularEnvelope::from_duals(group, &op.gamma, &sol.pinv),
            reference: op.psi,
        }
    }

    /// Group grid covering the scales where W_ψφ_γ and Φ can be nonzero.
    pub fn support_grid(&self, fgrid: &FrequencyGrid, ds: f64) -> Result<GroupGrid> {
        let psi = self.reference.psi;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for g in &self.gamma {
            lo = lo.min(psi.lo - g.s);
            hi = hi.max(psi.hi - g.s);
        }
        for (d, _) in &self.envelope.terms {
            lo = lo.min(psi.lo + d.s);
            hi = hi.max(psi.hi + d.s);
        }
        if lo > hi {
            lo = psi.lo;
            hi = psi.hi;
        }
        let (a, b) = wavelet_support(&psi, lo, hi);
        GroupGrid::covering(*fgrid.spec(), a, b, ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub member: usize,
    pub at: GroupPoint,
    pub value: f64,
    pub envelope: f64,
}

/// Relative round-off floor for the envelope inequality.
pub const ENVELOPE_FLOOR: f64 = 1e-12;
/// Multiplicative slack of the envelope inequality.
pub const ENVELOPE_SLACK: f64 = 1e-9;
/// Violations listed in a report.
pub const LISTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MoleculeReport {
    pub members: usize,
    pub checked: usize,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    /// Largest |W_ψφ_γ(g)| / Φ(γ^{−1}g) where Φ is positive.
    pub max_ratio: f64,
    pub skipped_terms: usize,
    pub amalgam_norm: f64,
    pub pass: bool,
}

/// Weighted amalgam data for the envelope norm.
#[derive(Debug, Clone)]
pub struct AmalgamSpec<'a> {
    pub weight: &'a ControlWeight,
    pub sampler: &'a VSampler,
    pub neighborhood: Neighborhood,
    pub r: f64,
}

/// |W_ψφ_γ(g)| ≤ Φ(γ^{−1}g)(1 + 1e−9) at every node of `ggrid`, up to a
/// round-off floor of 1e−12 times the peak of |W_ψφ_γ|, and ‖Φ‖ in the
/// weighted amalgam space.
pub fn molecule_check(
    fgrid: &FrequencyGrid,
    qn: &QuasiNormStructure,
    group: &Group,
    system: &MolecularSystem,
    ggrid: &GroupGrid,
    amalgam: &AmalgamSpec<'_>,
) -> Result<MoleculeReport> {
    if system.members.len() != system.gamma.len() {
        return Err(Error::DimensionMismatch { expected: system.gamma.len(), got: system.members.len() });
    }
    let psi = &system.reference;
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut max_ratio: f64 = 0.0;
    let mut skipped_terms = 0;
    let mut checked = 0;
    for (m, (gamma, member)) in system.gamma.iter().zip(&system.members).enumerate() {
        let w = wavelet_transform(fgrid, member, psi, ggrid)?;
        let peak = w.array.max_abs();
        let (env, skipped) = system.envelope.translated_samples(fgrid, group, psi, gamma, ggrid)?;
        skipped_terms += skipped;
        for (i, (sl, ev)) in w.array.slices.iter().zip(&env).enumerate() {
            for (k, (v, e)) in sl.iter().zip(ev).enumerate() {
                checked += 1;
                let a = v.norm();
                if *e > 0.0 {
                    max_ratio = max_ratio.max(a / e);
                }
                if a > e * (1.0 + ENVELOPE_SLACK) + ENVELOPE_FLOOR * peak {
                    violation_count += 1;
                    if violations.len() < LISTED_VIOLATIONS {
                        violations.push(Violation {
                            member: m,
                            at: GroupPoint::new(ggrid.spatial.point(k), ggrid.scale(i)),
                            value: a,
                            envelope: *e,
                        });
                    }
                }
            }
        }
    }
    let amalgam_norm = if system.envelope.terms.is_empty() {
        0.0
    } else {
        let id = GroupPoint::identity(group.dim());
        let (env, skipped) = system.envelope.translated_samples(fgrid, group, psi, &id, ggrid)?;
        skipped_terms += skipped;
        let arr = GroupArray {
            grid: *ggrid,
            slices: env.into_iter().map(|sl| sl.into_iter().map(|v| Complex64::new(v, 0.0)).collect()).collect(),
        };
        wiener_amalgam_norm(qn, group, &arr, &amalgam.neighborhood, amalgam.weight, amalgam.sampler, amalgam.r)?
    };
    Ok(MoleculeReport {
        members: system.members.len(),
        checked,
        violation_count,
        violations,
        max_ratio,
        skipped_terms,
        amalgam_norm,
        pass: violation_count == 0 && amalgam_norm.is_finite(),
    })
}

/// ‖c‖ = ‖Σ |c_γ| 𝟙_{γU}‖ in the Peetre-type space on `ggrid`.
pub fn sequence_norm(
    qn: &QuasiNormStructure,
    group: &Group,
    index: &IndexSet,
    c: &[f64],
    ggrid: &GroupGrid,
    params: &NormParams,
) -> Result<NormReport> {
    if c.len() != index.gamma.len() {
        return Err(Error::DimensionMismatch { expected: index.gamma.len(), got: c.len() });
    }
    let table = ScaleTable::new(group, &index.gamma);
    let shifts = images(ggrid.spatial.dim);
    let n = ggrid.spatial.len();
    let slices = (0..ggrid.count)
        .into_par_iter()
        .map(|i| {
            let s = ggrid.scale(i);
            (0..n)
                .map(|k| {
                    let x = ggrid.spatial.point(k);
                    let v: f64 = index
                        .gamma
                        .iter()
                        .enumerate()
                        .filter(|(j, g)| c[*j] != 0.0 && in_neighborhood(&table, *j, g, &x, s, &index.u, index.extent, &shifts))
                        .map(|(j, _)| c[j].abs())
                        .sum();
                    Complex64::new(v, 0.0)
                })
                .collect()
        })
        .collect();
    pti_norm(qn, &GroupArray { grid: *ggrid, slices }, params)
}

#[cfg(test)]
mod tests {

    use super::*;
    use crate::analyzers::{make_admissible, SpectralProfile};
    use crate::expansive::ExpansiveMatrix;
    use crate::field::GridSpec;

    struct Line {
        group: Group,
        fgrid: FrequencyGrid,
        qn: QuasiNormStructure,
        psi: AdmissibleVector,
    }

    fn line() -> Line {
        let a = ExpansiveMatrix::diagonal(&[2.0]).unwrap();
        Line {
            group: Group::new(&a).unwrap(),
            fgrid: FrequencyGrid::for_matrix(GridSpec::new(1, 8.0, 256).unwrap(), &a).unwrap(),
            qn: QuasiNormStructure::new(&a).unwrap(),
            psi: make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap(),
        }
    }

    fn domain(l: &Line, lo: f64, hi: f64) -> GroupGrid {
        GroupGrid::covering(*l.fgrid.spec(), lo, hi, 0.125).unwrap()
    }

    #[test]
    fn coarse_lattice_is_separated_not_covering() {
        let l = line();
        let dom = domain(&l, 0.0, 2.0);
        let u = Neighborhood::default();
        assert!(sample_index_set(&l.group, &dom, &u, IndexKind::Separated, 0.5).is_ok());
        assert!(matches!(
            sample_index_set(&l.group, &dom, &u, IndexKind::Covering, 0.5),
            Err(Error::VerificationFailed(_))
        ));
        let fine = sample_index_set(&l.group, &dom, &u, IndexKind::Covering, 2.0).unwrap();
        assert_eq!(fine.coverage, 1.0);
        // two steps per side of U in each direction
        assert!(fine.multiplicity <= 4, "{}", fine.multiplicity);
        assert!(matches!(
            sample_index_set(&l.group, &dom, &u, IndexKind::Separated, 2.0),
            Err(Error::VerificationFailed(_))
        ));
    }

    #[test]
    fn analysis_of_an_atom_is_its_energy() {
        let l = line();
        let gamma = vec![GroupPoint::new(vec![0.5], 0.0), GroupPoint::new(vec![-2.0], 1.0)];
        let op = FrameOperator::new(&l.fgrid, &l.psi, &gamma).unwrap();
        let atom = AtomField::single(l.psi.psi, gamma[0].clone()).sample(&l.fgrid).unwrap();
        let c = op.analysis(&atom).unwrap();
        let e = atom.l2_norm().powi(2);
        assert!((c[0].re - e).abs() < 1e-10 * e && c[0].im.abs() < 1e-10 * e);
        let direct = atom.inner(&op.atom(1).unwrap());
        assert!((c[1] - direct).norm() < 1e-10 * e);
        assert!(op.analysis(&SampledField::zeros(&l.fgrid)).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn synthesis_of_basis_vector_is_atom() {
        let l = line();
        let gamma = vec![GroupPoint::new(vec![1.25], 0.5)];
        let op = FrameOperator::new(&l.fgrid, &l.psi, &gamma).unwrap();
        let a = op.atom(0).unwrap();
        let b = AtomField::single(l.psi.psi, gamma[0].clone()).sample(&l.fgrid).unwrap();
        let diff = a.combine(Complex64::new(1.0, 0.0), &b, Complex64::new(-1.0, 0.0)).l2_norm();
        assert!(diff < 1e-12 * b.l2_norm());
        let generic = synthesis(&l.fgrid, &[Complex64::new(2.0, 0.0)], std::slice::from_ref(&b)).unwrap();
        assert!((generic.l2_norm() - 2.0 * b.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn single_atom_moment_problem() {
        let l = line();
        let gamma = vec![GroupPoint::new(vec![0.0], 0.0)];
        let op = FrameOperator::new(&l.fgrid, &l.psi, &gamma).unwrap();
        let c = [Complex64::new(0.7, -0.2)];
        let sol = moment_problem(&op, &c, CONDITION_LIMIT).unwrap();
        let e = op.atom(0).unwrap().l2_norm().powi(2);
        assert!((sol.coefficients[0] - c[0] / e).norm() < 1e-12);
        assert!(sol.max_residual() < 1e-12);
    }

    #[test]
    fn frame_algorithm_reconstructs() {
        let l = line();
        let dom = domain(&l, -1.5, 3.0);
        let set = sample_index_set(&l.group, &dom, &Neighborhood::default(), IndexKind::Covering, 8.0).unwrap();
        let op = FrameOperator::new(&l.fgrid, &l.psi, &set.gamma).unwrap();
        let gen = SpectralProfile::bump(0.0, 1.5).unwrap();
        let f = AtomField::single(gen, GroupPoint::new(vec![0.3], 0.5)).sample(&l.fgrid).unwrap();
        let b = frame_bounds(&op, std::slice::from_ref(&f), 20, 1).unwrap();
        assert!(b.a_lo <= b.rayleigh_min && b.a_lo > 0.0);
        let rec = dual_reconstruct(&op, &f, &b, 50, 1e-10).unwrap();
        assert!(rec.errors.iter().any(|e| *e <= 1e-3), "{:?} {b:?}", rec.errors);
        assert!(rec.ratio <= rec.predicted_ratio + 0.05, "{} {}", rec.ratio, rec.predicted_ratio);
        let zero = dual_reconstruct(&op, &SampledField::zeros(&l.fgrid), &b, 5, 1e-6).unwrap();
        assert_eq!(zero.errors, vec![0.0]);
    }

    #[test]
    fn gramian_duals_are_molecules() {
        let l = line();
        let dom = domain(&l, 0.0, 1.5);
        let set = sample_index_set(&l.group, &dom, &Neighborhood::default(), IndexKind::Separated, 1.0).unwrap();
        assert_eq!(set.len(), 10);
        let op = FrameOperator::new(&l.fgrid, &l.psi, &set.gamma).unwrap();
        let c: Vec<Complex64> = (0..op.len()).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect();
        let sol = moment_problem(&op, &c, CONDITION_LIMIT).unwrap();
        assert!(sol.max_residual() < 1e-6);
        let sys = MolecularSystem::duals(&op, &l.group, &sol);
        let gg = sys.support_grid(&l.fgrid, 0.125).unwrap();
        let cw = ControlWeight::new(2.0, 0.0, 2.0, 2.0).unwrap();
        let sampler = VSampler::new(&l.qn, 4, 8, 1).unwrap();
        let spec = AmalgamSpec { weight: &cw, sampler: &sampler, neighborhood: Neighborhood::default(), r: 1.0 };
        let rep = molecule_check(&l.fgrid, &l.qn, &l.group, &sys, &gg, &spec).unwrap();
        assert!(rep.pass, "{rep:?}");

        let mut spiked = sys.clone();
        let far = GroupPoint::new(vec![sys.gamma[0].x[0] + 4.0], sys.gamma[0].s);
        let spike = AtomField::single(l.psi.psi, far).sample(&l.fgrid).unwrap();
        spiked.members[0] = spiked.members[0].combine(Complex64::new(1.0, 0.0), &spike, Complex64::new(10.0, 0.0));
        let bad = molecule_check(&l.fgrid, &l.qn, &l.group, &spiked, &gg, &spec).unwrap();
        assert!(!bad.pass && bad.violations.iter().all(|v| v.member == 0));
    }

    #[test]
    fn sequence_norm_is_solid() {
        let l = line();
        let dom = domain(&l, 0.0, 2.0);
        let set = sample_index_set(&l.group, &dom, &Neighborhood::default(), IndexKind::Separated, 1.0).unwrap();
        let gg = GroupGrid::covering(*l.fgrid.spec(), -1.0, 3.0, 0.125).unwrap();
        let params = NormParams { alpha: 0.0, q: 2.0, beta: 1.0, ell_min: 0, ell_max: 1, ..NormParams::default() };
        let zero = vec![0.0; set.len()];
        assert_eq!(sequence_norm(&l.qn, &l.group, &set, &zero, &gg, &params).unwrap().value, 0.0);
        let small: Vec<f64> = (0..set.len()).map(|i| 0.5 + 0.1 * i as f64).collect();
        let big: Vec<f64> = small.iter().map(|v| v * 1.5 + 0.1).collect();
        let a = sequence_norm(&l.qn, &l.group, &set, &small, &gg, &params).unwrap().value;
        let b = sequence_norm(&l.qn, &l.group, &set, &big, &gg, &params).unwrap().value;
        assert!(a > 0.0 && a <= b);
    }
}
