use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expansive::ExpansiveMatrix;

/// Element (x, s) of G_A = ℝ^d ⋊_A ℝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub s: f64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, s: f64) -> Self {
        Self { x, s }
    }

    pub fn identity(dim: usize) -> Self {
        Self { x: vec![0.0; dim], s: 0.0 }
    }
}

/// Group operations of G_A for an exponential expansive matrix.
#[derive(Debug, Clone)]
pub struct Group {
    matrix: ExpansiveMatrix,
}

impl Group {
    pub fn new(matrix: &ExpansiveMatrix) -> Result<Self> {
        matrix.real_matrix_log()?;
        Ok(Self { matrix: matrix.clone() })
    }

    pub fn matrix(&self) -> &ExpansiveMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn abs_det(&self) -> f64 {
        self.matrix.abs_det()
    }

    pub fn power(&self, s: f64) -> DMatrix<f64> {
        self.matrix.fractional_power(s).expect("group matrix is exponential")
    }

    /// A^s y.
    pub fn act(&self, s: f64, y: &[f64]) -> Vec<f64> {
        if s == 0.0 {
            return y.to_vec();
        }
        (self.power(s) * DVector::from_column_slice(y)).iter().cloned().collect()
    }

    /// (x, s)(y, t) = (x + A^s y, s + t).
    pub fn mul(&self, g: &GroupPoint, h: &GroupPoint) -> GroupPoint {
        let ay = self.act(g.s, &h.x);
        GroupPoint { x: g.x.iter().zip(&ay).map(|(a, b)| a + b).collect(), s: g.s + h.s }
    }

    /// (x, s)^{−1} = (−A^{−s}x, −s).
    pub fn inv(&self, g: &GroupPoint) -> GroupPoint {
        GroupPoint { x: self.act(-g.s, &g.x).into_iter().map(|v| -v).collect(), s: -g.s }
    }

    /// Δ(x, s) = |det A|^{−s}.
    pub fn modular(&self, g: &GroupPoint) -> f64 {
        self.abs_det().powf(-g.s)
    }
}
