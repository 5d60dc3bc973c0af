//! Sliding-window kernels on the periodic grid: maxima and means over convex
//! offset sets stored as runs along the last axis.

use crate::expansive::{QuasiNormStructure, MAX_DIM};
use crate::field::GridSpec;

/// Offsets with fixed leading coordinates and last coordinate in [lo, hi].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub outer: Vec<isize>,
    pub lo: isize,
    pub hi: isize,
}

/// Finite offset set in grid units, decomposed into runs.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub runs: Vec<Run>,
    count: usize,
    clipped: bool,
}

impl Stencil {
    /// Only the origin.
    pub fn origin(dim: usize) -> Self {
        Self { runs: vec![Run { outer: vec![0; dim - 1], lo: 0, hi: 0 }], count: 1, clipped: false }
    }

    pub fn from_runs(runs: Vec<Run>, count: usize, clipped: bool) -> Self {
        Self { runs, count, clipped }
    }

    /// Offsets whose physical displacement satisfies `pred`, searched in the
    /// box |z_a| ≤ half_cells[a] and clipped to one period of the torus.
    pub fn from_predicate(grid: &GridSpec, half_cells: &[usize], pred: impl Fn(&[f64]) -> bool) -> Self {
        let d = grid.dim;
        let half = grid.n / 2;
        let h = grid.step();
        let clipped = half_cells.iter().any(|&c| c >= half);
        // one full period at most: offsets in [−n/2, n/2 − 1]
        let lo_w: Vec<isize> = half_cells.iter().map(|&c| -(c.min(half) as isize)).collect();
        let hi_w: Vec<isize> = half_cells.iter().map(|&c| c.min(half - 1) as isize).collect();
        let mut runs = Vec::new();
        let mut count = 0;
        let mut outer: Vec<isize> = lo_w[..d - 1].to_vec();
        let mut z = [0.0; MAX_DIM];
        loop {
            for a in 0..d - 1 {
                z[a] = outer[a] as f64 * h;
            }
            let mut lo = None;
            let mut hi = None;
            for k in lo_w[d - 1]..=hi_w[d - 1] {
                z[d - 1] = k as f64 * h;
                if pred(&z[..d]) {
                    if lo.is_none() {
                        lo = Some(k);
                    }
                    hi = Some(k);
                }
            }
            if let (Some(lo), Some(hi)) = (lo, hi) {
                count += (hi - lo + 1) as usize;
                runs.push(Run { outer: outer.clone(), lo, hi });
            }
            // advance odometer over the leading axes
            let mut a = d - 1;
            loop {
                if a == 0 {
                    return Self { runs, count, clipped };
                }
                a -= 1;
                outer[a] += 1;
                if outer[a] <= hi_w[a] {
                    break;
                }
                outer[a] = lo_w[a];
            }
        }
    }

    /// Offsets z with A^{−m} z ∈ Ω, that is the ball A^mΩ centred at 0.
    pub fn dilated_ellipsoid(grid: &GridSpec, qn: &QuasiNormStructure, m: f64) -> crate::Result<Self> {
        let am = qn.matrix().fractional_power(m)?;
        let ainv = qn.matrix().fractional_power(-m)?;
        let hw = qn.bounding_half_widths(&am);
        let h = grid.step();
        let cells: Vec<usize> = hw.iter().map(|w| (w / h).floor() as usize + 1).collect();
        let d = grid.dim;
        let flat: Vec<f64> = (0..d * d).map(|i| ainv[(i / d, i % d)]).collect();
        let c = qn.scale();
        Ok(Self::from_predicate(grid, &cells, |z| {
            let mut y = [0.0; MAX_DIM];
            crate::expansive::matvec(&flat, d, z, &mut y);
            qn.quad(&y[..d]) < c
        }))
    }

    /// Number of offsets.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Whether the search box was cut at the torus half-period.
    pub fn clipped(&self) -> bool {
        self.clipped
    }
}

fn line_count(grid: &GridSpec) -> usize {
    grid.len() / grid.n
}

/// Flat start index of the line reached from `line` by shifting the leading
/// coordinates by `outer`.
#[inline]
fn shifted_line(grid: &GridSpec, line: usize, outer: &[isize]) -> usize {
    let d = grid.dim;
    if d == 1 {
        return 0;
    }
    let n = grid.n as isize;
    let mut m = [0isize; MAX_DIM];
    let mut l = line;
    for a in (0..d - 1).rev() {
        m[a] = (l % grid.n) as isize;
        l /= grid.n;
    }
    let mut out = 0usize;
    for a in 0..d - 1 {
        out = out * grid.n + (m[a] + outer[a]).rem_euclid(n) as usize;
    }
    out
}

/// Circular sparse table of range maxima along the last axis.
struct LineMaxTable {
    n: usize,
    levels: Vec<Vec<f64>>,
}

impl LineMaxTable {
    fn new(grid: &GridSpec, data: &[f64]) -> Self {
        let n = grid.n;
        let mut levels = vec![data.to_vec()];
        let mut p = 1;
        while p < n {
            let prev = levels.last().unwrap();
            let mut next = vec![0.0; data.len()];
            for base in (0..data.len()).step_by(n) {
                for i in 0..n {
                    let j = (i + p) % n;
                    next[base + i] = prev[base + i].max(prev[base + j]);
                }
            }
            levels.push(next);
            p <<= 1;
        }
        Self { n, levels }
    }

    /// Maximum over the circular range [a, a+len) of the line at `base`.
    #[inline]
    fn query(&self, base: usize, a: usize, len: usize) -> f64 {
        let len = len.min(self.n);
        let p = usize::BITS - 1 - len.leading_zeros();
        let t = &self.levels[p as usize];
        let b = (a + len - (1 << p)) % self.n;
        t[base + a].max(t[base + b])
    }
}

/// out(x) = max_{z ∈ S} data(x + z).
pub fn sliding_max(grid: &GridSpec, data: &[f64], stencil: &Stencil) -> Vec<f64> {
    let n = grid.n;
    let table = LineMaxTable::new(grid, data);
    let mut out = vec![f64::NEG_INFINITY; data.len()];
    for run in &stencil.runs {
        let len = (run.hi - run.lo + 1) as usize;
        for line in 0..line_count(grid) {
            let src = shifted_line(grid, line, &run.outer) * n;
            let dst = line * n;
            for i in 0..n {
                let a = (i as isize + run.lo).rem_euclid(n as isize) as usize;
                let v = table.query(src, a, len);
                if v > out[dst + i] {
                    out[dst + i] = v;
                }
            }
        }
    }
    out
}

/// out(x) = mean_{z ∈ S} data(x + z).
pub fn sliding_mean(grid: &GridSpec, data: &[f64], stencil: &Stencil) -> Vec<f64> {
    let n = grid.n;
    let mut prefix = vec![0.0; line_count(grid) * (n + 1)];
    for line in 0..line_count(grid) {
        let p = &mut prefix[line * (n + 1)..(line + 1) * (n + 1)];
        for i in 0..n {
            p[i + 1] = p[i] + data[line * n + i];
        }
    }
    let mut out = vec![0.0; data.len()];
    for run in &stencil.runs {
        let len = ((run.hi - run.lo + 1) as usize).min(n);
        for line in 0..line_count(grid) {
            let src = shifted_line(grid, line, &run.outer);
            let p = &prefix[src * (n + 1)..(src + 1) * (n + 1)];
            let dst = line * n;
            for i in 0..n {
                let a = (i as isize + run.lo).rem_euclid(n as isize) as usize;
                let s = if a + len <= n { p[a + len] - p[a] } else { p[n] - p[a] + p[a + len - n] };
                out[dst + i] += s;
            }
        }
    }
    let c = stencil.count() as f64;
    out.iter_mut().for_each(|v| *v /= c);
    out
}
