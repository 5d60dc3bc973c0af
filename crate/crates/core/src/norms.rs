//! Endpoint Triebel–Lizorkin and Besov quasi-norms on sampled fields, their
//! Peetre-type characterizations and the window comparisons.
//!
//! Every norm is a supremum over windows W = A^ℓ([0,1]^d + k) (or A^ℓΩ + w)
//! lying inside the reliable box |x_a| ≤ fraction·extent, of an average of
//! a per-ℓ integrand assembled from a bank of band magnitudes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analyzers::SpectralProfile;
use crate::error::{Error, Result};
use crate::expansive::{QuasiNormStructure, MAX_DIM};
use crate::field::{aliasing_check, FrequencyGrid, GridSpec, SampledField};
use crate::peetre::PeetreStack;
use crate::window::{sliding_mean, Stencil};

/// Relative size of the last retained term that raises the tail flag.
pub const TAIL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// A^ℓ([0,1]^d + k), k ∈ ℤ^d.
    Cube,
    /// A^ℓΩ + w with grid centres w.
    Ball,
}

/// Serde for an exponent in (0, ∞], written as a number or "inf".
pub mod exponent {
    use super::*;

    pub fn serialize<S: Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if q.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*q)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => parse(&t).map_err(serde::de::Error::custom),
        }
    }

    /// "inf", "infinity", "∞" or a decimal / fraction such as "1/2".
    pub fn parse(t: &str) -> std::result::Result<f64, String> {
        let t = t.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => return Ok(f64::INFINITY),
            _ => {}
        }
        if let Some((a, b)) = t.split_once('/') {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad exponent {t}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad exponent {t}"))?;
            return Ok(a / b);
        }
        t.parse().map_err(|_| format!("bad exponent {t}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct NormParams {
    pub alpha: f64,
    #[serde(with = "exponent")]
    pub q: f64,
    pub beta: f64,
    /// Bands j ≤ J are retained; Besov uses |j| ≤ J.
    pub j_max: i32,
    pub ell_min: i32,
    pub ell_max: i32,
    pub window: WindowKind,
    /// Step of the continuous-scale quadrature; None picks 1/8, or 1/16 for q < 1.
    pub ds: Option<f64>,
    /// Peetre search radius in shells of ρ_A(A^s ·).
    pub search_shells: i32,
    /// Windows must lie in |x_a| ≤ reliable_fraction · extent.
    pub reliable_fraction: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            q: 2.0,
            beta: 1.0,
            j_max: 4,
            ell_min: 0,
            ell_max: 2,
            window: WindowKind::Cube,
            ds: None,
            search_shells: 3,
            reliable_fraction: 0.75,
        }
    }
}

impl NormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) || self.q.is_nan() {
            return Err(Error::InvalidParameter(format!("q = {} must be in (0, inf]", self.q)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {} must be positive", self.beta)));
        }
        if self.ell_min > self.ell_max {
            return Err(Error::InvalidParameter(format!("empty window range [{}, {}]", self.ell_min, self.ell_max)));
        }
        if !(self.reliable_fraction > 0.0 && self.reliable_fraction <= 1.0) {
            return Err(Error::InvalidParameter("reliable fraction must be in (0, 1]".into()));
        }
        if let Some(ds) = self.ds {
            if !(ds > 0.0 && ds <= 1.0) || (1.0 / ds).fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("ds = {ds} must divide 1")));
            }
        }
        if self.search_shells < 1 {
            return Err(Error::InvalidParameter("search radius must be at least one shell".into()));
        }
        Ok(())
    }

    /// β > 1/q for finite q, β > 1 for q = ∞.
    pub fn validate_characterization(&self) -> Result<()> {
        self.validate()?;
        let bound = if self.q.is_infinite() { 1.0 } else { 1.0 / self.q };
        if self.beta <= bound {
            return Err(Error::InvalidParameter(format!("beta = {} must exceed {bound}", self.beta)));
        }
        Ok(())
    }

    pub fn effective_ds(&self) -> f64 {
        self.ds.unwrap_or(if self.q < 1.0 { 1.0 / 16.0 } else { 1.0 / 8.0 })
    }

    /// The β used by the characterization runs: 1/q + 1/2, or 2 at q = ∞.
    pub fn default_beta(q: f64) -> f64 {
        if q.is_infinite() {
            2.0
        } else {
            1.0 / q + 0.5
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormReport {
    pub value: f64,
    /// ℓ of the attaining window.
    pub ell: i32,
    /// k for cube windows, the centre w for balls.
    pub anchor: Vec<f64>,
    /// Scale attaining an inner supremum (q = ∞ and Besov).
    pub scale: Option<f64>,
    pub ell_saturated: bool,
    /// The attaining window touches the edge of the reliable region.
    pub anchor_saturated: bool,
    pub scale_saturated: bool,
    /// The last retained scale contributes more than 1e−6 of the inner sum.
    pub tail: bool,
    /// Peetre suprema dominated by the outermost search shell.
    pub truncated: bool,
    /// Peetre search cut at the torus half-period.
    pub clipped: bool,
}

impl NormReport {
    fn zero() -> Self {
        Self {
            value: 0.0,
            ell: 0,
            anchor: vec![],
            scale: None,
            ell_saturated: false,
            anchor_saturated: false,
            scale_saturated: false,
            tail: false,
            truncated: false,
            clipped: false,
        }
    }
}

/// Band magnitudes |F_s| at a list of scales with quadrature weights.
#[derive(Debug, Clone)]
pub struct Bank {
    pub scales: Vec<f64>,
    /// 1 for the discrete sum, Δs for midpoint quadrature.
    pub weights: Vec<f64>,
    pub magnitudes: Vec<Vec<f64>>,
    pub truncated: bool,
    pub clipped: bool,
}

impl Bank {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// Windows of one level ℓ.
#[derive(Debug, Clone)]
enum Windows {
    Cube { anchors: Vec<Vec<i64>>, members: Vec<Vec<usize>>, edge: Vec<bool> },
    Ball { stencil: Stencil, centres: Vec<usize>, edge: Vec<bool> },
}

#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub ell: i32,
    windows: Windows,
}

fn in_box(x: &[f64], r: f64) -> bool {
    x.iter().all(|v| v.abs() <= r + 1e-12)
}

impl WindowPlan {
    pub fn new(grid: &GridSpec, qn: &QuasiNormStructure, ell: i32, kind: WindowKind, fraction: f64) -> Result<Self> {
        let d = grid.dim;
        let r = fraction * grid.extent;
        let windows = match kind {
            WindowKind::Cube => {
                let a = qn.matrix().power(ell);
                let ainv = qn.matrix().power(-ell);
                let corners: Vec<Vec<f64>> = (0..1usize << d)
                    .map(|mask| (0..d).map(|i| ((mask >> i) & 1) as f64).collect())
                    .collect();
                let mut bins: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
                let mut valid_cache: BTreeMap<Vec<i64>, bool> = BTreeMap::new();
                let mut valid = |k: &[i64]| -> bool {
                    *valid_cache.entry(k.to_vec()).or_insert_with(|| {
                        corners.iter().all(|c| {
                            let v: Vec<f64> = (0..d).map(|i| k[i] as f64 + c[i]).collect();
                            let y: Vec<f64> = (0..d).map(|i| (0..d).map(|j| a[(i, j)] * v[j]).sum()).collect();
                            in_box(&y, r)
                        })
                    })
                };
                for idx in 0..grid.len() {
                    let x = grid.point(idx);
                    if !in_box(&x, r) {
                        continue;
                    }
                    let k: Vec<i64> = (0..d)
                        .map(|i| (0..d).map(|j| ainv[(i, j)] * x[j]).sum::<f64>().floor() as i64)
                        .collect();
                    if valid(&k) {
                        bins.entry(k).or_default().push(idx);
                    }
                }
                let anchors: Vec<Vec<i64>> = bins.keys().cloned().collect();
                let edge = anchors
                    .iter()
                    .map(|k| {
                        (0..d).any(|i| {
                            [-1, 1].iter().any(|&dk| {
                                let mut n = k.clone();
                                n[i] += dk;
                                !valid(&n)
                            })
                        })
                    })
                    .collect();
                Windows::Cube { anchors, members: bins.into_values().collect(), edge }
            }
            WindowKind::Ball => {
                let stencil = Stencil::dilated_ellipsoid(grid, qn, ell as f64)?;
                let hw = qn.bounding_half_widths(&qn.matrix().power(ell));
                let h = grid.step();
                let fits = |x: &[f64]| (0..d).all(|i| x[i].abs() + hw[i] <= r + 1e-12);
                let mut centres = Vec::new();
                let mut edge = Vec::new();
                for idx in 0..grid.len() {
                    let x = grid.point(idx);
                    if !fits(&x) {
                        continue;
                    }
                    centres.push(idx);
                    edge.push((0..d).any(|i| {
                        [-h, h].iter().any(|dx| {
                            let mut y = x.clone();
                            y[i] += dx;
                            !fits(&y)
                        })
                    }));
                }
                Windows::Ball { stencil, centres, edge }
            }
        };
        Ok(Self { ell, windows })
    }

    pub fn len(&self) -> usize {
        match &self.windows {
            Windows::Cube { anchors, .. } => anchors.len(),
            Windows::Ball { centres, .. } => centres.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean of `data` over every window.
    pub fn averages(&self, grid: &GridSpec, data: &[f64]) -> Vec<f64> {
        match &self.windows {
            Windows::Cube { members, .. } => members
                .iter()
                .map(|m| m.iter().map(|&i| data[i]).sum::<f64>() / m.len() as f64)
                .collect(),
            Windows::Ball { stencil, centres, .. } => {
                if centres.is_empty() {
                    return vec![];
                }
                let mean = sliding_mean(grid, data, stencil);
                centres.iter().map(|&c| mean[c]).collect()
            }
        }
    }

    /// Mean of `data` over window `i` only.
    pub fn average_at(&self, grid: &GridSpec, data: &[f64], i: usize) -> f64 {
        match &self.windows {
            Windows::Cube { members, .. } => members[i].iter().map(|&j| data[j]).sum::<f64>() / members[i].len() as f64,
            Windows::Ball { stencil, centres, .. } => {
                let mut m = [0usize; MAX_DIM];
                grid.unravel(centres[i], &mut m);
                let mut acc = 0.0;
                for run in &stencil.runs {
                    let mut off = run.outer.clone();
                    off.push(0);
                    for k in run.lo..=run.hi {
                        *off.last_mut().unwrap() = k;
                        acc += data[grid.ravel_wrapped(&m[..grid.dim], &off)];
                    }
                }
                acc / stencil.count() as f64
            }
        }
    }

    pub fn anchor(&self, grid: &GridSpec, i: usize) -> Vec<f64> {
        match &self.windows {
            Windows::Cube { anchors, .. } => anchors[i].iter().map(|&k| k as f64).collect(),
            Windows::Ball { centres, .. } => grid.point(centres[i]),
        }
    }

    pub fn on_edge(&self, i: usize) -> bool {
        match &self.windows {
            Windows::Cube { edge, .. } | Windows::Ball { edge, .. } => edge[i],
        }
    }
}

/// Window plans for ℓ in [ell_min, ell_max].
pub fn window_plans(grid: &GridSpec, qn: &QuasiNormStructure, params: &NormParams) -> Result<Vec<WindowPlan>> {
    let plans: Vec<WindowPlan> = (params.ell_min..=params.ell_max)
        .into_par_iter()
        .map(|l| WindowPlan::new(grid, qn, l, params.window, params.reliable_fraction))
        .collect::<Result<_>>()?;
    if plans.iter().all(|p| p.is_empty()) {
        return Err(Error::WindowOutOfDomain);
    }
    Ok(plans)
}

/// Integer scales j_lo..=J covering every inner sum and the Besov range.
pub fn discrete_scales(params: &NormParams) -> Vec<f64> {
    let lo = (-params.ell_max).min(-params.j_max);
    (lo..=params.j_max).map(|j| j as f64).collect()
}

/// Midpoints (m + ½)Δs in (−ell_max, J).
pub fn continuous_scales(params: &NormParams) -> Vec<f64> {
    let ds = params.effective_ds();
    let lo = (-params.ell_max as f64 / ds).round() as i64;
    let hi = (params.j_max as f64 / ds).round() as i64;
    (lo..hi).map(|m| (m as f64 + 0.5) * ds).collect()
}

/// Spatial samples of f ∗ φ_s, or None when the band vanishes identically.
fn band_values(grid: &FrequencyGrid, f: &SampledField, phi: &SpectralProfile, s: f64) -> Result<Option<Vec<Complex64>>> {
    aliasing_check(grid, f.band_limit(), phi, s)?;
    let mut any = false;
    let filtered: Vec<Complex64> = f
        .spectrum()
        .iter()
        .zip(grid.levels())
        .map(|(v, t)| {
            let p = phi.at_level(t - s);
            if p == 0.0 || *v == Complex64::new(0.0, 0.0) {
                Complex64::new(0.0, 0.0)
            } else {
                any = true;
                v * p
            }
        })
        .collect();
    Ok(any.then(|| grid.inverse(&filtered)))
}

/// |f ∗ φ_s| at each scale.
pub fn magnitude_bank(grid: &FrequencyGrid, f: &SampledField, phi: &SpectralProfile, scales: &[f64], weight: f64) -> Result<Bank> {
    if f.grid() != grid.spec() {
        return Err(Error::InvalidParameter("field and frequency grid differ".into()));
    }
    let n = grid.spec().len();
    let magnitudes = scales
        .par_iter()
        .map(|&s| {
            Ok(band_values(grid, f, phi, s)?
                .map(|v| v.iter().map(|c| c.norm()).collect())
                .unwrap_or_else(|| vec![0.0; n]))
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Bank { scales: scales.to_vec(), weights: vec![weight; scales.len()], magnitudes, truncated: false, clipped: false })
}

/// β-independent Peetre data for a list of scales.
#[derive(Debug, Clone)]
pub struct PeetreBank {
    pub scales: Vec<f64>,
    pub weight: f64,
    stacks: Vec<Option<PeetreStack>>,
    len: usize,
}

impl PeetreBank {
    pub fn new(
        grid: &FrequencyGrid,
        qn: &QuasiNormStructure,
        f: &SampledField,
        phi: &SpectralProfile,
        scales: &[f64],
        weight: f64,
        search_shells: i32,
    ) -> Result<Self> {
        let stacks = scales
            .par_iter()
            .map(|&s| match band_values(grid, f, phi, s)? {
                None => Ok(None),
                Some(v) => {
                    let mags = v.iter().map(|c| c.norm()).collect();
                    Ok(Some(PeetreStack::new(grid.spec(), qn, mags, s, search_shells)?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scales: scales.to_vec(), weight, stacks, len: grid.spec().len() })
    }

    /// φ**_{s,β} at every scale.
    pub fn evaluate(&self, beta: f64) -> Bank {
        let mut truncated = false;
        let mut clipped = false;
        let magnitudes = self
            .stacks
            .iter()
            .map(|st| match st {
                None => vec![0.0; self.len],
                Some(st) => {
                    let pf = st.evaluate(beta);
                    truncated |= pf.truncated;
                    clipped |= pf.clipped;
                    pf.values
                }
            })
            .collect();
        Bank {
            scales: self.scales.clone(),
            weights: vec![self.weight; self.scales.len()],
            magnitudes,
            truncated,
            clipped,
        }
    }
}

/// sup_{ℓ, W} ( ⨍_W Σ_{s ≥ −ℓ, s ≤ J} w_s (|det A|^{αs} B_s)^q )^{1/q}, or for
/// q = ∞ sup_{ℓ, W} sup_{s ≥ −ℓ} ⨍_W |det A|^{αs} B_s.
pub fn tl_from_bank(grid: &GridSpec, abs_det: f64, bank: &Bank, plans: &[WindowPlan], alpha: f64, q: f64, j_max: i32) -> NormReport {
    let (ell_min, ell_max) = (plans.first().map_or(0, |p| p.ell), plans.last().map_or(0, |p| p.ell));
    let jm = j_max as f64 + 1e-9;
    let active: Vec<usize> = (0..bank.len()).filter(|&i| bank.scales[i] <= jm).collect();
    let mut rep = if q.is_infinite() {
        tl_inf_core(grid, abs_det, bank, plans, alpha, &active)
    } else {
        tl_q_core(grid, abs_det, bank, plans, alpha, q, &active)
    };
    rep.ell_saturated = rep.value > 0.0 && (rep.ell == ell_min || rep.ell == ell_max) && ell_min != ell_max;
    rep.truncated = bank.truncated;
    rep.clipped = bank.clipped;
    rep
}

fn tl_q_core(grid: &GridSpec, abs_det: f64, bank: &Bank, plans: &[WindowPlan], alpha: f64, q: f64, active: &[usize]) -> NormReport {
    let n = grid.len();
    let terms: Vec<Option<Vec<f64>>> = active
        .par_iter()
        .map(|&i| {
            let m = &bank.magnitudes[i];
            if m.iter().all(|v| *v == 0.0) {
                return None;
            }
            let w = bank.weights[i];
            let c = abs_det.powf(alpha * bank.scales[i]);
            Some(m.iter().map(|v| w * (c * v).powf(q)).collect())
        })
        .collect();
    let last = active.iter().rposition(|_| true);
    let best = plans
        .par_iter()
        .map(|plan| {
            let lower = -plan.ell as f64 - 1e-9;
            let mut g = vec![0.0; n];
            for (k, &i) in active.iter().enumerate() {
                if bank.scales[i] < lower {
                    continue;
                }
                if let Some(t) = &terms[k] {
                    g.iter_mut().zip(t).for_each(|(a, b)| *a += b);
                }
            }
            let avg = plan.averages(grid, &g);
            let mut best: Option<(usize, f64)> = None;
            for (w, v) in avg.into_iter().enumerate() {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((w, v));
                }
            }
            best.map(|(w, v)| (plan.ell, w, v))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(i32, usize, f64)>, |acc, c| match acc {
            Some(a) if a.2 >= c.2 => Some(a),
            _ => Some(c),
        });
    let Some((ell, w, v)) = best else {
        return NormReport::zero();
    };
    let plan = plans.iter().find(|p| p.ell == ell).unwrap();
    let mut rep = NormReport::zero();
    rep.value = v.max(0.0).powf(1.0 / q);
    rep.ell = ell;
    rep.anchor = plan.anchor(grid, w);
    rep.anchor_saturated = plan.on_edge(w);
    if let Some(k) = last {
        if let Some(t) = &terms[k] {
            rep.tail = v > 0.0 && plan.average_at(grid, t, w) > TAIL_TOLERANCE * v;
        }
    }
    rep
}

fn tl_inf_core(grid: &GridSpec, abs_det: f64, bank: &Bank, plans: &[WindowPlan], alpha: f64, active: &[usize]) -> NormReport {
    let top = active.last().map(|&i| bank.scales[i]);
    let best = plans
        .par_iter()
        .map(|plan| {
            let lower = -plan.ell as f64 - 1e-9;
            let mut best: Option<(usize, usize, f64)> = None;
            for &i in active {
                if bank.scales[i] < lower || bank.magnitudes[i].iter().all(|v| *v == 0.0) {
                    continue;
                }
                let c = abs_det.powf(alpha * bank.scales[i]);
                for (w, v) in plan.averages(grid, &bank.magnitudes[i]).into_iter().enumerate() {
                    let v = c * v;
                    if best.is_none_or(|(_, _, b)| v > b) {
                        best = Some((i, w, v));
                    }
                }
            }
            best.map(|(i, w, v)| (plan.ell, i, w, v))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(i32, usize, usize, f64)>, |acc, c| match acc {
            Some(a) if a.3 >= c.3 => Some(a),
            _ => Some(c),
        });
    let Some((ell, i, w, v)) = best else {
        return NormReport::zero();
    };
    let plan = plans.iter().find(|p| p.ell == ell).unwrap();
    let mut rep = NormReport::zero();
    rep.value = v;
    rep.ell = ell;
    rep.anchor = plan.anchor(grid, w);
    rep.anchor_saturated = plan.on_edge(w);
    rep.scale = Some(bank.scales[i]);
    rep.scale_saturated = Some(bank.scales[i]) == top;
    rep.tail = rep.scale_saturated;
    rep
}

/// max_{|j| ≤ J} |det A|^{αj} max over the reliable box of |f ∗ φ_j|.
pub fn besov_from_bank(grid: &GridSpec, abs_det: f64, bank: &Bank, alpha: f64, j_max: i32, fraction: f64) -> NormReport {
    let r = fraction * grid.extent;
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| in_box(&grid.point(i), r)).collect();
    let jm = j_max as f64 + 1e-9;
    let mut rep = NormReport::zero();
    let mut arg = None;
    for (i, s) in bank.scales.iter().enumerate() {
        if s.abs() > jm {
            continue;
        }
        let c = abs_det.powf(alpha * s);
        for &p in &inside {
            let v = c * bank.magnitudes[i][p];
            if v > rep.value {
                rep.value = v;
                arg = Some((i, p));
            }
        }
    }
    if let Some((i, p)) = arg {
        rep.scale = Some(bank.scales[i]);
        rep.scale_saturated = (bank.scales[i].abs() - j_max as f64).abs() < 1e-9;
        rep.anchor = grid.point(p);
    }
    rep
}

/// Shared inputs of the field-side norms.
pub struct NormContext<'a> {
    pub grid: &'a FrequencyGrid,
    pub qn: &'a QuasiNormStructure,
    pub phi: SpectralProfile,
    pub params: NormParams,
    plans: Vec<WindowPlan>,
}

impl<'a> NormContext<'a> {
    pub fn new(grid: &'a FrequencyGrid, qn: &'a QuasiNormStructure, phi: SpectralProfile, params: NormParams) -> Result<Self> {
        params.validate()?;
        if grid.spec().dim != qn.dim() {
            return Err(Error::DimensionMismatch { expected: qn.dim(), got: grid.spec().dim });
        }
        let plans = window_plans(grid.spec(), qn, &params)?;
        Ok(Self { grid, qn, phi, params, plans })
    }

    pub fn plans(&self) -> &[WindowPlan] {
        &self.plans
    }

    pub fn bank(&self, f: &SampledField) -> Result<Bank> {
        magnitude_bank(self.grid, f, &self.phi, &discrete_scales(&self.params), 1.0)
    }

    pub fn peetre_bank(&self, f: &SampledField, discrete: bool) -> Result<PeetreBank> {
        let (scales, w) = if discrete {
            (discrete_scales(&self.params), 1.0)
        } else {
            (continuous_scales(&self.params), self.params.effective_ds())
        };
        PeetreBank::new(self.grid, self.qn, f, &self.phi, &scales, w, self.params.search_shells)
    }

    pub fn tl(&self, bank: &Bank, alpha: f64, q: f64) -> NormReport {
        tl_from_bank(self.grid.spec(), self.qn.abs_det(), bank, &self.plans, alpha, q, self.params.j_max)
    }

    pub fn besov(&self, bank: &Bank, alpha: f64) -> NormReport {
        besov_from_bank(self.grid.spec(), self.qn.abs_det(), bank, alpha, self.params.j_max, self.params.reliable_fraction)
    }

    pub fn tl_norm_q(&self, f: &SampledField) -> Result<NormReport> {
        if self.params.q.is_infinite() {
            return Err(Error::InvalidParameter("tl_norm_q needs a finite q".into()));
        }
        Ok(self.tl(&self.bank(f)?, self.params.alpha, self.params.q))
    }

    pub fn tl_norm_inf(&self, f: &SampledField) -> Result<NormReport> {
        Ok(self.tl(&self.bank(f)?, self.params.alpha, f64::INFINITY))
    }

    pub fn besov_norm(&self, f: &SampledField) -> Result<NormReport> {
        Ok(self.besov(&self.bank(f)?, self.params.alpha))
    }

    pub fn tl_peetre_norm(&self, f: &SampledField, discrete: bool) -> Result<NormReport> {
        self.params.validate_characterization()?;
        let bank = self.peetre_bank(f, discrete)?.evaluate(self.params.beta);
        Ok(self.tl(&bank, self.params.alpha, self.params.q))
    }

    /// tl_norm_inf / tl_norm_q and besov / tl_norm_inf; None for 0/0.
    pub fn embedding_check(&self, f: &SampledField) -> Result<EmbeddingReport> {
        if self.params.q.is_infinite() {
            return Err(Error::InvalidParameter("embedding check needs a finite q".into()));
        }
        let bank = self.bank(f)?;
        let tl_q = self.tl(&bank, self.params.alpha, self.params.q).value;
        let tl_inf = self.tl(&bank, self.params.alpha, f64::INFINITY).value;
        let besov = self.besov(&bank, self.params.alpha).value;
        Ok(EmbeddingReport { tl_q, tl_inf, besov, inf_over_q: ratio(tl_inf, tl_q), besov_over_inf: ratio(besov, tl_inf) })
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmbeddingReport {
    pub tl_q: f64,
    pub tl_inf: f64,
    pub besov: f64,
    pub inf_over_q: Option<f64>,
    pub besov_over_inf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowComparison {
    pub cube: f64,
    pub ball: f64,
    /// cube / ball; None when both vanish.
    pub ratio: Option<f64>,
}

fn sup_average(grid: &GridSpec, plans: &[WindowPlan], data: &[f64]) -> f64 {
    plans
        .iter()
        .flat_map(|p| p.averages(grid, data))
        .fold(0.0, f64::max)
}

/// sup of cube averages against sup of ball averages of a nonnegative array.
pub fn window_equivalence_check(
    grid: &GridSpec,
    qn: &QuasiNormStructure,
    data: &[f64],
    ell: (i32, i32),
    fraction: f64,
) -> Result<WindowComparison> {
    if data.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: data.len() });
    }
    if data.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("window comparison needs a nonnegative array".into()));
    }
    let mut params = NormParams { ell_min: ell.0, ell_max: ell.1, reliable_fraction: fraction, ..Default::default() };
    let cube = window_plans(grid, qn, &params)?;
    params.window = WindowKind::Ball;
    let ball = window_plans(grid, qn, &params)?;
    let (c, b) = (sup_average(grid, &cube, data), sup_average(grid, &ball, data));
    Ok(WindowComparison { cube: c, ball: b, ratio: ratio(c, b) })
}

/// The j-indexed comparison: sup_{ℓ,W} sup_{j ≥ −ℓ} ⨍_W B_j for both window kinds.
pub fn window_equivalence_bank(
    grid: &GridSpec,
    qn: &QuasiNormStructure,
    bank: &Bank,
    ell: (i32, i32),
    j_max: i32,
    fraction: f64,
) -> Result<WindowComparison> {
    let mut params = NormParams { ell_min: ell.0, ell_max: ell.1, reliable_fraction: fraction, ..Default::default() };
    let cube = window_plans(grid, qn, &params)?;
    params.window = WindowKind::Ball;
    let ball = window_plans(grid, qn, &params)?;
    let c = tl_from_bank(grid, qn.abs_det(), bank, &cube, 0.0, f64::INFINITY, j_max).value;
    let b = tl_from_bank(grid, qn.abs_det(), bank, &ball, 0.0, f64::INFINITY, j_max).value;
    Ok(WindowComparison { cube: c, ball: b, ratio: ratio(c, b) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansive::ExpansiveMatrix;
    use crate::group::GroupPoint;
    use crate::suite::AtomField;

    fn setup() -> (FrequencyGrid, QuasiNormStructure) {
        let a = ExpansiveMatrix::diagonal(&[2.0, 2.0]).unwrap();
        let grid = FrequencyGrid::for_matrix(GridSpec::new(2, 8.0, 32).unwrap(), &a).unwrap();
        (grid, QuasiNormStructure::new(&a).unwrap())
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!(exponent::parse("inf").unwrap(), f64::INFINITY);
        assert_eq!(exponent::parse("1/2").unwrap(), 0.5);
        let p: NormParams = serde_json::from_str(r#"{"q":"inf"}"#).unwrap();
        assert!(p.q.is_infinite());
        let back: NormParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn characterization_constraint() {
        let p = NormParams { q: 2.0, beta: 0.5, ..Default::default() };
        assert!(p.validate_characterization().is_err());
        let p = NormParams { q: f64::INFINITY, beta: 1.0, ..Default::default() };
        assert!(p.validate_characterization().is_err());
        assert!(NormParams { q: f64::INFINITY, beta: 2.0, ..Default::default() }.validate_characterization().is_ok());
    }

    #[test]
    fn constant_windows_average_one() {
        let (grid, qn) = setup();
        let ones = vec![1.0; grid.spec().len()];
        let cmp = window_equivalence_check(grid.spec(), &qn, &ones, (0, 2), 0.75).unwrap();
        assert!((cmp.cube - 1.0).abs() < 1e-12 && (cmp.ball - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_and_homogeneity() {
        let (grid, qn) = setup();
        let ctx = NormContext::new(&grid, &qn, crate::analyzers::default_profile(), NormParams::default()).unwrap();
        let zero = SampledField::zeros(&grid);
        assert_eq!(ctx.tl_norm_q(&zero).unwrap().value, 0.0);
        assert_eq!(ctx.besov_norm(&zero).unwrap().value, 0.0);
        let g = SpectralProfile::bump(0.0, 1.0).unwrap();
        let f = AtomField::single(g, GroupPoint::new(vec![0.0, 0.0], 0.5)).sample(&grid).unwrap();
        let a = ctx.tl_norm_q(&f).unwrap().value;
        let b = ctx.tl_norm_q(&f.scaled(Complex64::new(0.0, -3.0))).unwrap().value;
        assert!(a > 0.0);
        assert!((b - 3.0 * a).abs() < 1e-12 * b);
        let inf = ctx.tl_norm_inf(&f).unwrap().value;
        assert!(inf <= ctx.besov_norm(&f).unwrap().value);
    }

    #[test]
    fn no_window_is_an_error() {
        let (grid, qn) = setup();
        let p = NormParams { ell_min: 6, ell_max: 6, ..Default::default() };
        assert!(matches!(window_plans(grid.spec(), &qn, &p), Err(Error::WindowOutOfDomain)));
    }
}
