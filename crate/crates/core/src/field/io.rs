//! Field container: a JSON header next to a raw little-endian complex payload.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Complex64,
    Complex128,
}

impl Dtype {
    fn bytes(&self) -> usize {
        match self {
            Dtype::Complex64 => 8,
            Dtype::Complex128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldHeader {
    pub format: String,
    /// "field" for spatial samples, "group" for (x, s) arrays.
    pub kind: String,
    pub dtype: Dtype,
    pub grid: GridSpec,
    /// Scale nodes of a group array, outermost axis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_limit: Option<f64>,
    pub payload: String,
    pub length: usize,
}

pub const FORMAT_TAG: &str = "tlinf-field/1";

#[derive(Debug, Clone)]
pub struct FieldFile {
    pub header: FieldHeader,
    pub values: Vec<Complex64>,
}

fn payload_path(header_path: &Path, name: &str) -> PathBuf {
    header_path.parent().map(|p| p.join(name)).unwrap_or_else(|| PathBuf::from(name))
}

/// Writes `<path>` (JSON) and `<path stem>.bin`.
pub fn write_field(path: &Path, mut header: FieldHeader, values: &[Complex64]) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad field path {}", path.display())))?;
    header.payload = format!("{stem}.bin");
    header.length = values.len();
    header.format = FORMAT_TAG.into();
    let mut bytes = Vec::with_capacity(values.len() * header.dtype.bytes());
    for v in values {
        match header.dtype {
            Dtype::Complex64 => {
                bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
            Dtype::Complex128 => {
                bytes.extend_from_slice(&v.re.to_le_bytes());
                bytes.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    fs::write(payload_path(path, &header.payload), bytes)?;
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    if header.format != FORMAT_TAG {
        return Err(Error::Validation(format!("unknown field format {}", header.format)));
    }
    header.grid.validate()?;
    let bytes = fs::read(payload_path(path, &header.payload))?;
    let w = header.dtype.bytes();
    if bytes.len() != header.length * w {
        return Err(Error::DimensionMismatch { expected: header.length * w, got: bytes.len() });
    }
    let values = bytes
        .chunks_exact(w)
        .map(|c| match header.dtype {
            Dtype::Complex64 => Complex64::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            ),
            Dtype::Complex128 => Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            ),
        })
        .collect();
    Ok(FieldFile { header, values })
}

impl FieldHeader {
    pub fn field(grid: GridSpec, band_limit: Option<f64>) -> Self {
        Self {
            format: FORMAT_TAG.into(),
            kind: "field".into(),
            dtype: Dtype::Complex128,
            grid,
            scales: vec![],
            band_limit,
            payload: String::new(),
            length: 0,
        }
    }

    pub fn group(grid: GridSpec, scales: Vec<f64>) -> Self {
        Self { kind: "group".into(), scales, ..Self::field(grid, None) }
    }
}
