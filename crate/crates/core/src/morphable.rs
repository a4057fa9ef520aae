//! Linear morphable face model and the 257-scalar coefficient layout.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::camera::Pose;
use crate::error::{Error, Result};

pub const IDENTITY_DIM: usize = 80;
pub const EXPRESSION_DIM: usize = 64;
pub const TEXTURE_DIM: usize = 80;
pub const POSE_DIM: usize = 6;
pub const LIGHTING_SH_DIM: usize = 27;
pub const COEFFICIENT_DIM: usize =
    IDENTITY_DIM + EXPRESSION_DIM + TEXTURE_DIM + POSE_DIM + LIGHTING_SH_DIM;

/// Mean shape plus identity and expression PCA bases, all with `3N` rows
/// laid out as `[x0, y0, z0, x1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableBasis {
    mean_shape: DVector<f64>,
    identity_basis: DMatrix<f64>,
    expression_basis: DMatrix<f64>,
}

impl MorphableBasis {
    pub fn new(
        mean_shape: DVector<f64>,
        identity_basis: DMatrix<f64>,
        expression_basis: DMatrix<f64>,
    ) -> Result<Self> {
        let rows = mean_shape.len();
        if rows == 0 || !rows.is_multiple_of(3) {
            return Err(Error::validation(format!(
                "mean shape length {rows} is not a positive multiple of 3"
            )));
        }
        if identity_basis.ncols() != IDENTITY_DIM || expression_basis.ncols() != EXPRESSION_DIM {
            return Err(Error::validation(format!(
                "basis has {} identity and {} expression columns, expected {IDENTITY_DIM} and {EXPRESSION_DIM}",
                identity_basis.ncols(),
                expression_basis.ncols()
            )));
        }
        if identity_basis.nrows() != rows || expression_basis.nrows() != rows {
            return Err(Error::validation("basis row counts differ from the mean shape"));
        }
        Ok(MorphableBasis {
            mean_shape,
            identity_basis,
            expression_basis,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mean_shape.len() / 3
    }

    pub fn mean_shape(&self) -> &DVector<f64> {
        &self.mean_shape
    }

    pub fn identity_basis(&self) -> &DMatrix<f64> {
        &self.identity_basis
    }

    pub fn expression_basis(&self) -> &DMatrix<f64> {
        &self.expression_basis
    }

    /// Writes `<stem>.bin` (little-endian f64: mean, identity columns, expression
    /// columns) and the JSON sidecar at `sidecar`.
    pub fn save(&self, sidecar: &Path) -> Result<()> {
        let data_name = sidecar
            .with_extension("bin")
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::validation("basis sidecar path has no file name"))?;
        let meta = BasisSidecar {
            vertex_count: self.vertex_count(),
            identity_components: IDENTITY_DIM,
            expression_components: EXPRESSION_DIM,
            data: data_name.clone(),
        };
        let mut values = Vec::with_capacity(self.mean_shape.len() * (1 + IDENTITY_DIM + EXPRESSION_DIM));
        values.extend(self.mean_shape.iter());
        values.extend(self.identity_basis.iter());
        values.extend(self.expression_basis.iter());
        let bin_path = sidecar.with_file_name(data_name);
        write_f64_le(&bin_path, &values)?;
        let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
        std::fs::write(sidecar, json).map_err(|e| Error::io(sidecar, e))
    }

    /// Data file named by a sidecar.
    pub fn data_path(sidecar: &Path) -> Result<PathBuf> {
        let text = std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
        let meta: BasisSidecar =
            serde_json::from_str(&text).map_err(|e| Error::format(sidecar, e.to_string()))?;
        Ok(sidecar.with_file_name(&meta.data))
    }

    pub fn load(sidecar: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
        let meta: BasisSidecar =
            serde_json::from_str(&text).map_err(|e| Error::format(sidecar, e.to_string()))?;
        if meta.identity_components != IDENTITY_DIM || meta.expression_components != EXPRESSION_DIM {
            return Err(Error::format(sidecar, "unexpected component counts"));
        }
        let bin_path: PathBuf = sidecar.with_file_name(&meta.data);
        let values = read_f64_le(&bin_path)?;
        let rows = 3 * meta.vertex_count;
        let expected = rows * (1 + IDENTITY_DIM + EXPRESSION_DIM);
        if values.len() != expected {
            return Err(Error::format(
                &bin_path,
                format!("holds {} values, sidecar implies {expected}", values.len()),
            ));
        }
        let mean = DVector::from_column_slice(&values[..rows]);
        let id_end = rows * (1 + IDENTITY_DIM);
        let identity = DMatrix::from_column_slice(rows, IDENTITY_DIM, &values[rows..id_end]);
        let expression = DMatrix::from_column_slice(rows, EXPRESSION_DIM, &values[id_end..]);
        MorphableBasis::new(mean, identity, expression)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisSidecar {
    vertex_count: usize,
    identity_components: usize,
    expression_components: usize,
    /// File name of the binary payload, relative to the sidecar.
    data: String,
}

/// `S = S_mean + I_base·c_i + E_base·c_e`
pub fn synthesize_shape(
    basis: &MorphableBasis,
    identity: &[f64],
    expression: &[f64],
) -> Result<DVector<f64>> {
    if identity.len() != IDENTITY_DIM || expression.len() != EXPRESSION_DIM {
        return Err(Error::validation(format!(
            "coefficient lengths {} / {} do not match the basis ({IDENTITY_DIM} / {EXPRESSION_DIM})",
            identity.len(),
            expression.len()
        )));
    }
    let mut shape = basis.mean_shape.clone();
    shape.gemv(1.0, &basis.identity_basis, &DVector::from_column_slice(identity), 1.0);
    shape.gemv(1.0, &basis.expression_basis, &DVector::from_column_slice(expression), 1.0);
    Ok(shape)
}

/// The 257 regressed scalars, split by role.
///
/// Only `identity`, `expression` and `pose` drive this crate; `texture` and
/// `lighting_sh` are carried through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub identity: Vec<f64>,
    pub expression: Vec<f64>,
    pub texture: Vec<f64>,
    pub pose: Vec<f64>,
    pub lighting_sh: Vec<f64>,
}

pub fn split_coefficients(raw: &[f64]) -> Result<CoefficientVector> {
    if raw.len() != COEFFICIENT_DIM {
        return Err(Error::validation(format!(
            "coefficient vector has {} values, expected {COEFFICIENT_DIM}",
            raw.len()
        )));
    }
    let (identity, rest) = raw.split_at(IDENTITY_DIM);
    let (expression, rest) = rest.split_at(EXPRESSION_DIM);
    let (texture, rest) = rest.split_at(TEXTURE_DIM);
    let (pose, lighting_sh) = rest.split_at(POSE_DIM);
    Ok(CoefficientVector {
        identity: identity.to_vec(),
        expression: expression.to_vec(),
        texture: texture.to_vec(),
        pose: pose.to_vec(),
        lighting_sh: lighting_sh.to_vec(),
    })
}

impl CoefficientVector {
    pub fn to_vec(&self) -> Vec<f64> {
        [
            &self.identity[..],
            &self.expression,
            &self.texture,
            &self.pose,
            &self.lighting_sh,
        ]
        .concat()
    }

    pub fn pose(&self) -> Result<Pose> {
        Pose::from_slice(&self.pose)
    }

    /// Reads a JSON array or a flat little-endian f64 file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let raw: Vec<f64> = if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'[') {
            serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?
        } else {
            decode_f64_le(&bytes).map_err(|m| Error::format(path, m))?
        };
        split_coefficients(&raw).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_f64_le(&bytes).map_err(|m| Error::format(path, m))
}

pub fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_f64_le(bytes: &[u8]) -> std::result::Result<Vec<f64>, String> {
    if !bytes.len().is_multiple_of(8) {
        return Err(format!("length {} is not a multiple of 8", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
