//! Expansive dilations: validation, real logarithm, fractional powers, the
//! canonical ellipsoid with its step quasi-norm ρ_A, and the smooth
//! frequency-side gauge.

mod ellipsoid;
mod gauge;
mod matrix;
mod weight;

pub use ellipsoid::{
    unit_ball_volume, Ball, EllipsoidOptions, QuasiNormStructure, Shell, MAX_DIM, SHELL_CLAMP,
};
pub(crate) use ellipsoid::matvec;
pub use gauge::HomogeneousGauge;
pub use matrix::{real_log, shell_level_for_radius, ExpansiveMatrix, MatrixSpec};
pub use weight::{measure_nu_submultiplicativity, measure_quasi_triangle, sample_shell_point, WeightNu};
