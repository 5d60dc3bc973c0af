use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansive::{QuasiNormStructure, MAX_DIM};
use crate::field::GridSpec;
use crate::window::{sliding_max, Stencil};

use super::grid::GroupArray;
use super::weights::{ControlWeight, VSampler};
use super::{Group, GroupPoint};

/// Q = [−a, a)^d × [−b, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub a: f64,
    pub b: f64,
}

impl Default for Neighborhood {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// sup_{u∈Q} |F(gu)|.
    Left,
    /// sup_{u,v∈Q} |F(ugv)|.
    Two,
}

/// Sampled maximal function on the nodes of a group grid.
#[derive(Debug, Clone)]
pub struct MaximalArray {
    pub grid: super::GroupGrid,
    pub slices: Vec<Vec<f64>>,
}

fn scale_offsets(grid: &super::GroupGrid, q: &Neighborhood) -> Result<std::ops::Range<i64>> {
    let kb = q.b / grid.ds;
    if (kb - kb.round()).abs() > 1e-9 || q.a < 0.0 || q.b < 0.0 {
        return Err(Error::InvalidParameter(format!("neighborhood b = {} is not a multiple of the scale step", q.b)));
    }
    let kb = kb.round() as i64;
    Ok(if kb == 0 { 0..1 } else { -kb..kb })
}

/// Grid offsets z with M z ∈ [−a, a)^d for the linear map M.
fn box_stencil(spatial: &GridSpec, m: &nalgebra::DMatrix<f64>, minv: &nalgebra::DMatrix<f64>, a: f64) -> Stencil {
    let d = spatial.dim;
    let h = spatial.step();
    let cells: Vec<usize> = (0..d)
        .map(|i| ((0..d).map(|j| minv[(i, j)].abs()).sum::<f64>() * a / h).floor() as usize + 1)
        .collect();
    Stencil::from_predicate(spatial, &cells, |z| {
        (0..d).all(|i| {
            let v: f64 = (0..d).map(|j| m[(i, j)] * z[j]).sum();
            v >= -a - 1e-12 && v < a - 1e-12
        })
    })
}

fn left_maximal(group: &Group, f: &[Vec<f64>], grid: &super::GroupGrid, q: &Neighborhood) -> Result<Vec<Vec<f64>>> {
    let ks = scale_offsets(grid, q)?;
    let spatial = grid.spatial;
    let count = grid.count as i64;
    Ok((0..grid.count)
        .into_par_iter()
        .map(|i| {
            let s = grid.scale(i);
            // gu = (x + A^s u_x, s + u_s): offsets z = A^s u_x
            let st = box_stencil(&spatial, &group.power(-s), &group.power(s), q.a);
            let mut out = vec![0.0f64; spatial.len()];
            for k in ks.clone() {
                let j = i as i64 + k;
                if j < 0 || j >= count {
                    continue;
                }
                let m = sliding_max(&spatial, &f[j as usize], &st);
                out.iter_mut().zip(m).for_each(|(o, v)| *o = o.max(v));
            }
            out
        })
        .collect())
}

/// Largest value over the grid cell containing a point, periodically.
fn cell_max(spatial: &GridSpec, data: &[f64], x: &[f64]) -> f64 {
    let d = spatial.dim;
    let h = spatial.step();
    let n = spatial.n as i64;
    let mut base = [0i64; MAX_DIM];
    let mut exact = [false; MAX_DIM];
    for a in 0..d {
        let u = (x[a] + spatial.extent) / h;
        let r = u.round();
        if (u - r).abs() < 1e-9 {
            base[a] = r as i64;
            exact[a] = true;
        } else {
            base[a] = u.floor() as i64;
        }
    }
    let mut best = 0.0f64;
    let mut m = [0usize; MAX_DIM];
    for mask in 0..1usize << d {
        if (0..d).any(|a| exact[a] && (mask >> a) & 1 == 1) {
            continue;
        }
        for a in 0..d {
            m[a] = (base[a] + ((mask >> a) & 1) as i64).rem_euclid(n) as usize;
        }
        best = best.max(data[spatial.ravel(&m[..d])]);
    }
    best
}

/// M_Q^L F or the two-sided M_Q F on the grid nodes. For the two-sided
/// version the left factor moves x to u_x + A^{u_s}x, which is read off the
/// box maximum of the left-sided function, taking the largest value of the
/// grid cell containing an off-grid point.
pub fn local_maximal(group: &Group, f: &GroupArray, q: &Neighborhood, side: Side) -> Result<MaximalArray> {
    let grid = f.grid;
    let spatial = grid.spatial;
    let mags: Vec<Vec<f64>> = (0..grid.count).map(|i| f.magnitudes(i)).collect();
    let left = left_maximal(group, &mags, &grid, q)?;
    if side == Side::Left {
        return Ok(MaximalArray { grid, slices: left });
    }
    let ks = scale_offsets(&grid, q)?;
    let id = nalgebra::DMatrix::<f64>::identity(spatial.dim, spatial.dim);
    let boxst = box_stencil(&spatial, &id, &id, q.a);
    let boxed: Vec<Vec<f64>> = left.par_iter().map(|h| sliding_max(&spatial, h, &boxst)).collect();
    let count = grid.count as i64;
    let points: Vec<Vec<f64>> = (0..spatial.len()).map(|k| spatial.point(k)).collect();
    let slices = (0..grid.count)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0f64; spatial.len()];
            for k in ks.clone() {
                let j = i as i64 + k;
                if j < 0 || j >= count {
                    continue;
                }
                let us = k as f64 * grid.ds;
                let src = &boxed[j as usize];
                if k == 0 {
                    out.iter_mut().zip(src).for_each(|(o, v)| *o = o.max(*v));
                    continue;
                }
                let m = group.power(us);
                for (o, x) in out.iter_mut().zip(&points) {
                    let y: Vec<f64> = (0..spatial.dim).map(|r| (0..spatial.dim).map(|c| m[(r, c)] * x[c]).sum()).collect();
                    *o = o.max(cell_max(&spatial, src, &y));
                }
            }
            out
        })
        .collect();
    Ok(MaximalArray { grid, slices })
}

/// ‖M_Q F‖_{L^r_w} = (∫ (M_Q F · w)^r dμ)^{1/r}.
#[allow(clippy::too_many_arguments)]
pub fn wiener_amalgam_norm(
    qn: &QuasiNormStructure,
    group: &Group,
    f: &GroupArray,
    q: &Neighborhood,
    cw: &ControlWeight,
    sampler: &VSampler,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("amalgam exponent r = {r}")));
    }
    let m = local_maximal(group, f, q, Side::Two)?;
    let grid = f.grid;
    let abs_det = qn.abs_det();
    let parts: Vec<f64> = (0..grid.count)
        .into_par_iter()
        .map(|i| {
            let s = grid.scale(i);
            let hw = grid.haar_weight(abs_det, i);
            m.slices[i]
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.0)
                .map(|(k, v)| {
                    let g = GroupPoint::new(grid.spatial.point(k), s);
                    (v * cw.eval(qn, group, sampler, &g)).powf(r) * hw
                })
                .sum::<f64>()
        })
        .collect();
    Ok(parts.iter().sum::<f64>().powf(1.0 / r))
}
