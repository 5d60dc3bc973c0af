use rand::Rng;

use super::ellipsoid::QuasiNormStructure;

/// ν_β(x) = (1 + ρ_A(x))^β.
#[derive(Debug, Clone, Copy)]
pub struct WeightNu {
    pub beta: f64,
}

impl WeightNu {
    pub fn new(beta: f64) -> Self {
        Self { beta }
    }

    pub fn eval(&self, s: &QuasiNormStructure, x: &[f64]) -> f64 {
        (1.0 + s.quasi_norm(x)).powf(self.beta)
    }
}

/// Random point on a random shell in `[-levels, levels]`.
pub fn sample_shell_point<R: Rng>(s: &QuasiNormStructure, rng: &mut R, levels: i32) -> (Vec<f64>, i32) {
    let k = rng.random_range(-levels..=levels);
    (s.sample_in_dilate(rng, k), k)
}

/// Pairs (x, y) with shells at most two levels apart, where the extremal
/// configurations of quasi-norm inequalities live.
fn sample_pair<R: Rng>(s: &QuasiNormStructure, rng: &mut R, levels: i32) -> (Vec<f64>, Vec<f64>) {
    let (x, k) = sample_shell_point(s, rng, levels);
    let k2 = k + rng.random_range(-2..=2);
    let y = s.sample_in_dilate(rng, k2);
    (x, y)
}

/// Empirical C = max ρ(x+y)/(ρ(x)+ρ(y)) over `samples` random pairs.
pub fn measure_quasi_triangle(s: &QuasiNormStructure, samples: usize, seed: u64) -> f64 {
    let mut rng = crate::rng::seeded(seed);
    let mut c = 1.0f64;
    for _ in 0..samples {
        let (x, y) = sample_pair(s, &mut rng, 8);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let den = s.quasi_norm(&x) + s.quasi_norm(&y);
        if den > 0.0 {
            c = c.max(s.quasi_norm(&sum) / den);
        }
    }
    c
}

/// Empirical K with ν_β(x+y) ≤ K ν_β(x) ν_β(y).
pub fn measure_nu_submultiplicativity(s: &QuasiNormStructure, beta: f64, samples: usize, seed: u64) -> f64 {
    let nu = WeightNu::new(beta);
    let mut rng = crate::rng::seeded(seed);
    let mut k = 1.0f64;
    for _ in 0..samples {
        let (x, y) = sample_pair(s, &mut rng, 8);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        k = k.max(nu.eval(s, &sum) / (nu.eval(s, &x) * nu.eval(s, &y)));
    }
    k
}
