use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;

use super::GroupPoint;

/// Spatial grid × uniform scale nodes s_i = s0 + i·ds, i < count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupGrid {
    pub spatial: GridSpec,
    pub s0: f64,
    pub ds: f64,
    pub count: usize,
}

impl GroupGrid {
    pub fn new(spatial: GridSpec, s0: f64, ds: f64, count: usize) -> Result<Self> {
        spatial.validate()?;
        if !(ds > 0.0 && ds.is_finite()) || count == 0 || !s0.is_finite() {
            return Err(Error::InvalidParameter(format!("scale grid s0={s0} ds={ds} count={count}")));
        }
        Ok(Self { spatial, s0, ds, count })
    }

    /// Midpoint nodes of [lo, hi] widened outward to multiples of ds.
    pub fn covering(spatial: GridSpec, lo: f64, hi: f64, ds: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!("empty scale range [{lo}, {hi}]")));
        }
        let a = (lo / ds).floor();
        let b = (hi / ds).ceil();
        Self::new(spatial, (a + 0.5) * ds, ds, (b - a) as usize)
    }

    pub fn scale(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }

    pub fn scales(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.scale(i)).collect()
    }

    /// Index of a node, if s lies on the scale lattice within the range.
    pub fn index_of(&self, s: f64) -> Option<usize> {
        let u = (s - self.s0) / self.ds;
        let r = u.round();
        ((u - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.count).then_some(r as usize)
    }

    /// Haar weight |det A|^{−s}·h^d·ds of the nodes on slice i.
    pub fn haar_weight(&self, abs_det: f64, i: usize) -> f64 {
        abs_det.powf(-self.scale(i)) * self.spatial.cell_volume() * self.ds
    }

    /// ∫ F dμ by the node quadrature.
    pub fn integrate(&self, abs_det: f64, f: impl Fn(&GroupPoint) -> f64) -> f64 {
        (0..self.count)
            .map(|i| {
                let s = self.scale(i);
                let w = self.haar_weight(abs_det, i);
                (0..self.spatial.len()).map(|k| f(&GroupPoint::new(self.spatial.point(k), s))).sum::<f64>() * w
            })
            .sum()
    }

    /// Same box and scale range at twice the resolution in x and s.
    pub fn refined(&self) -> Self {
        let lo = self.s0 - 0.5 * self.ds;
        let ds = 0.5 * self.ds;
        Self { spatial: self.spatial.refined(), s0: lo + 0.5 * ds, ds, count: 2 * self.count }
    }
}

/// Complex samples F(x, s_i) on a [`GroupGrid`], one slice per scale node.
#[derive(Debug, Clone)]
pub struct GroupArray {
    pub grid: GroupGrid,
    pub slices: Vec<Vec<Complex64>>,
}

impl GroupArray {
    pub fn zeros(grid: GroupGrid) -> Self {
        Self { grid, slices: vec![vec![Complex64::new(0.0, 0.0); grid.spatial.len()]; grid.count] }
    }

    pub fn from_fn(grid: GroupGrid, f: impl Fn(&GroupPoint) -> Complex64) -> Self {
        let slices = (0..grid.count)
            .map(|i| {
                let s = grid.scale(i);
                (0..grid.spatial.len()).map(|k| f(&GroupPoint::new(grid.spatial.point(k), s))).collect()
            })
            .collect();
        Self { grid, slices }
    }

    pub fn magnitudes(&self, i: usize) -> Vec<f64> {
        self.slices[i].iter().map(|v| v.norm()).collect()
    }

    /// ‖F‖_{L²(G_A)}.
    pub fn l2_norm(&self, abs_det: f64) -> f64 {
        self.slices
            .iter()
            .enumerate()
            .map(|(i, sl)| sl.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.haar_weight(abs_det, i))
            .sum::<f64>()
            .sqrt()
    }

    /// Σ |F|² per slice with Haar weights.
    pub fn slice_energy(&self, abs_det: f64) -> Vec<f64> {
        self.slices
            .iter()
            .enumerate()
            .map(|(i, sl)| sl.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.haar_weight(abs_det, i))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn combine(&self, a: Complex64, other: &GroupArray, b: Complex64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter("group arrays live on different grids".into()));
        }
        let slices = self
            .slices
            .iter()
            .zip(&other.slices)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        Ok(Self { grid: self.grid, slices })
    }

    /// Drops outer slices carrying less than `tol` of the total energy.
    pub fn trimmed(&self, abs_det: f64, tol: f64) -> Self {
        let e = self.slice_energy(abs_det);
        let total: f64 = e.iter().sum();
        if total == 0.0 {
            return self.clone();
        }
        let (mut lo, mut hi) = (0, self.grid.count);
        let mut dropped = 0.0;
        loop {
            let left = if lo < hi { e[lo] } else { f64::INFINITY };
            let right = if hi > lo { e[hi - 1] } else { f64::INFINITY };
            let next = left.min(right);
            if hi - lo <= 1 || dropped + next > tol * total {
                break;
            }
            dropped += next;
            if left <= right {
                lo += 1;
            } else {
                hi -= 1;
            }
        }
        let grid = GroupGrid { s0: self.grid.scale(lo), count: hi - lo, ..self.grid };
        Self { grid, slices: self.slices[lo..hi].to_vec() }
    }
}
