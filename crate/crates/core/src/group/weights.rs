use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansive::QuasiNormStructure;

use super::{Group, GroupPoint};

/// Fixed log-shell sample used for every evaluation of v, so that v is a
/// deterministic function of its argument.
#[derive(Debug, Clone)]
pub struct VSampler {
    shells: i32,
    points: Vec<(Vec<f64>, i32)>,
}

impl VSampler {
    /// `per_shell` uniform points of A^kΩ for each k in [−shells, shells].
    pub fn new(qn: &QuasiNormStructure, shells: i32, per_shell: usize, seed: u64) -> Result<Self> {
        if shells < 1 || per_shell == 0 {
            return Err(Error::InvalidParameter("v sampler needs shells and points".into()));
        }
        let mut rng = crate::rng::seeded(seed);
        let mut points = Vec::with_capacity((2 * shells as usize + 1) * per_shell);
        for k in -shells..=shells {
            for _ in 0..per_shell {
                points.push((qn.sample_in_dilate(&mut rng, k), k));
            }
        }
        Ok(Self { shells, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// v(y, t) = sup_w (1 + ρ_A(w)) / (1 + ρ_A(A^t w − y)), after substituting
/// w = A^{−u}z in the defining supremum over (z, u). Candidates are the
/// sample points and w = A^{−t}(y + e) for sample offsets e; the flag marks
/// a maximum attained on the outermost sampled shell.
pub fn weight_v(qn: &QuasiNormStructure, group: &Group, sampler: &VSampler, y: &[f64], t: f64) -> (f64, bool) {
    let at = group.power(t);
    let ainv = group.power(-t);
    let d = y.len();
    let apply = |m: &nalgebra::DMatrix<f64>, v: &[f64]| -> Vec<f64> {
        (0..d).map(|i| (0..d).map(|j| m[(i, j)] * v[j]).sum()).collect()
    };
    // w = A^{−t}y makes the denominator 1
    let mut best = 1.0 + qn.quasi_norm(&apply(&ainv, y));
    let mut saturated = false;
    for (e, k) in &sampler.points {
        let w = e;
        let aw = apply(&at, w);
        let diff: Vec<f64> = aw.iter().zip(y).map(|(a, b)| a - b).collect();
        let r1 = (1.0 + qn.quasi_norm(w)) / (1.0 + qn.quasi_norm(&diff));
        let ye: Vec<f64> = y.iter().zip(e).map(|(a, b)| a + b).collect();
        let r2 = (1.0 + qn.quasi_norm(&apply(&ainv, &ye))) / (1.0 + qn.quasi_norm(e));
        let r = r1.max(r2);
        if r > best {
            best = r;
            saturated = k.abs() == sampler.shells;
        }
    }
    (best, saturated)
}

/// θ_σ(s) = σ₁^s for s ≥ 0 and σ₂^s for s < 0.
pub fn theta(sigma: [f64; 2], s: f64) -> f64 {
    if s >= 0.0 {
        sigma[0].powf(s)
    } else {
        sigma[1].powf(s)
    }
}

/// Ξ_{σ,L}(x, s) = θ_σ(s) (1 + min{ρ_A(x), ρ_A(A^{−s}x)})^{−L}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub sigma: [f64; 2],
    pub l: f64,
}

impl EnvelopeSpec {
    pub fn eval(&self, qn: &QuasiNormStructure, group: &Group, g: &GroupPoint) -> f64 {
        let r = qn.quasi_norm(&g.x).min(qn.quasi_norm(&group.act(-g.s, &g.x)));
        theta(self.sigma, g.s) * (1.0 + r).powf(-self.l)
    }
}

/// The standard control weight built from the translation bounds, with the
/// sampled v in place of a continuous regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ControlWeight {
    pub abs_det: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(with = "crate::norms::exponent")]
    pub q: f64,
    pub r: f64,
    pub gamma: f64,
    pub delta: f64,
    pub zeta: f64,
    pub sigma: [f64; 2],
    pub kappa: [f64; 2],
    /// α ≥ −(1/r + β − 3/q)/2 (α ≥ −β/2 at q = ∞).
    pub upper_branch: bool,
}

impl ControlWeight {
    pub fn new(abs_det: f64, alpha: f64, beta: f64, q: f64) -> Result<Self> {
        if !(q > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("control weight needs q > 0, beta > 0 (q={q}, beta={beta})")));
        }
        let r = q.min(1.0);
        let d = abs_det;
        let cw = if q.is_infinite() {
            let upper = alpha >= -beta / 2.0;
            Self {
                abs_det,
                alpha,
                beta,
                q,
                r,
                gamma: alpha,
                delta: alpha - 1.0,
                zeta: alpha,
                sigma: [d.powf(1.0 + alpha.abs()), d.powf(-alpha.abs())],
                kappa: if upper {
                    [d.powf(1.0 + alpha + beta), d.powf(-(alpha + beta))]
                } else {
                    [d.powf(-(alpha - 1.0)), d.powf(alpha)]
                },
                upper_branch: upper,
            }
        } else {
            let g = (alpha - 1.0 / q).abs();
            let upper = alpha >= -(1.0 / r + beta - 3.0 / q) / 2.0;
            Self {
                abs_det,
                alpha,
                beta,
                q,
                r,
                gamma: alpha - 1.0 / q,
                delta: alpha - 2.0 / q,
                zeta: alpha - 1.0 / q,
                sigma: [d.powf(1.0 / r + g), d.powf(-g)],
                kappa: if upper {
                    [d.powf(1.0 / r + alpha + beta - 1.0 / q), d.powf(-(alpha + beta - 1.0 / q))]
                } else {
                    [d.powf(-(alpha - 2.0 / q)), d.powf(1.0 / r + alpha - 2.0 / q)]
                },
                upper_branch: upper,
            }
        };
        Ok(cw)
    }

    fn a(&self, tau: f64, s: f64) -> f64 {
        self.abs_det.powf(s * tau)
    }

    /// w at a point with scale s, given v there and at its inverse.
    pub fn eval_with(&self, s: f64, v: f64, v_inv: f64) -> f64 {
        let ir = 1.0 / self.r;
        let (g, de, z, b) = (self.gamma, self.delta, self.zeta, self.beta);
        let vb = v.powf(b);
        let vib = v_inv.powf(b);
        [
            1.0,
            self.a(ir, s),
            self.a(g, s),
            self.a(-g, s),
            self.a(g + ir, s),
            self.a(ir - g, s),
            self.a(de + ir, s) * vib,
            self.a(-de, s) * vb,
            self.a(z + ir, s) * vib,
            self.a(-z, s) * vb,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn eval(&self, qn: &QuasiNormStructure, group: &Group, sampler: &VSampler, g: &GroupPoint) -> f64 {
        let gi = group.inv(g);
        let v = weight_v(qn, group, sampler, &g.x, g.s).0;
        let vi = weight_v(qn, group, sampler, &gi.x, gi.s).0;
        self.eval_with(g.s, v, vi)
    }

    /// Ξ_{σ,0} + Ξ_{κ,−β}.
    pub fn envelope(&self, qn: &QuasiNormStructure, group: &Group, g: &GroupPoint) -> f64 {
        EnvelopeSpec { sigma: self.sigma, l: 0.0 }.eval(qn, group, g)
            + EnvelopeSpec { sigma: self.kappa, l: -self.beta }.eval(qn, group, g)
    }

    /// |w(g) − Δ^{1/r}(g^{−1}) w(g^{−1})| / w(g).
    pub fn symmetry_defect(&self, qn: &QuasiNormStructure, group: &Group, sampler: &VSampler, g: &GroupPoint) -> f64 {
        let gi = group.inv(g);
        let v = weight_v(qn, group, sampler, &g.x, g.s).0;
        let vi = weight_v(qn, group, sampler, &gi.x, gi.s).0;
        let w = self.eval_with(g.s, v, vi);
        let w_inv = self.eval_with(gi.s, vi, v);
        let delta = group.modular(&gi).powf(1.0 / self.r);
        (w - delta * w_inv).abs() / w
    }
}

/// Random group point with s uniform in [−s_max, s_max] and x on a random
/// shell in [−levels, levels].
pub fn sample_group_point<R: Rng>(qn: &QuasiNormStructure, rng: &mut R, s_max: f64, levels: i32) -> GroupPoint {
    let s = rng.random_range(-s_max..=s_max);
    let (x, _) = crate::expansive::sample_shell_point(qn, rng, levels);
    GroupPoint::new(x, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnvelopeReport {
    pub min: f64,
    pub max: f64,
    pub samples: usize,
    pub upper_branch: bool,
}

/// min and max of w / (Ξ_{σ,0} + Ξ_{κ,−β}) over sampled group points.
#[allow(clippy::too_many_arguments)]
pub fn envelope_compare(
    cw: &ControlWeight,
    qn: &QuasiNormStructure,
    group: &Group,
    sampler: &VSampler,
    samples: usize,
    seed: u64,
    s_max: f64,
    levels: i32,
) -> EnvelopeReport {
    let mut rng = crate::rng::seeded(seed);
    let points: Vec<GroupPoint> = (0..samples).map(|_| sample_group_point(qn, &mut rng, s_max, levels)).collect();
    use rayon::prelude::*;
    let ratios: Vec<f64> = points
        .par_iter()
        .map(|g| cw.eval(qn, group, sampler, g) / cw.envelope(qn, group, g))
        .collect();
    EnvelopeReport {
        min: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        max: ratios.iter().cloned().fold(0.0, f64::max),
        samples,
        upper_branch: cw.upper_branch,
    }
}
