//! Anisotropic Triebel–Lizorkin and Besov analysis at p = ∞ for expansive
//! dilation matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analyzers;
pub mod error;
pub mod experiment;
pub mod expansive;
pub mod field;
pub mod frames;
pub mod group;
pub mod norms;
pub mod peetre;
pub mod rng;
pub mod suite;
pub mod window;

pub use error::{Error, Result};
pub use expansive::{ExpansiveMatrix, HomogeneousGauge, MatrixSpec, QuasiNormStructure, WeightNu};
