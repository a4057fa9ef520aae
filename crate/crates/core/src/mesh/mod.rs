//! Triangle meshes, OBJ input/output, vertex normals, landmark pairs and
//! similarity alignment.

mod align;
mod obj;

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{procrustes_align, SimilarityTransform};
pub use obj::{load_obj, load_obj_file, write_obj, write_obj_file};

pub type Point3 = Vector3<f64>;

/// Indexed triangle mesh with optional per-vertex UVs and normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub uvs: Option<Vec<Vector2<f64>>>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl Mesh {
    /// Builds and validates a mesh.
    pub fn new(
        vertices: Vec<Point3>,
        triangles: Vec<[usize; 3]>,
        uvs: Option<Vec<Vector2<f64>>>,
    ) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            uvs,
            normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::validation(format!(
                    "triangle {t} references vertex {:?} but the mesh has {n} vertices",
                    tri
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::validation(format!(
                    "triangle {t} repeats a vertex: {:?}",
                    tri
                )));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::validation("non-finite vertex position"));
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != n {
                return Err(Error::validation(format!(
                    "{} UVs for {n} vertices",
                    uvs.len()
                )));
            }
            if let Some(i) = uvs
                .iter()
                .position(|uv| !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y))
            {
                return Err(Error::validation(format!(
                    "UV of vertex {i} lies outside [0,1]: {:?}",
                    uvs[i]
                )));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::validation("normal count differs from vertex count"));
            }
            if normals.iter().any(|nrm| (nrm.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::validation("normals must have unit length"));
            }
        }
        Ok(())
    }

    pub fn require_uvs(&self) -> Result<&[Vector2<f64>]> {
        self.uvs
            .as_deref()
            .ok_or_else(|| Error::validation("mesh has no UV coordinates"))
    }

    /// Normals from the mesh if present, computed otherwise.
    pub fn normals_or_computed(&self) -> Vec<Vector3<f64>> {
        match &self.normals {
            Some(n) => n.clone(),
            None => compute_vertex_normals(self),
        }
    }

    pub fn with_computed_normals(mut self) -> Self {
        self.normals = Some(compute_vertex_normals(&self));
        self
    }

    /// Axis-aligned bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        bounding_diagonal(&self.vertices)
    }

    /// Flat `[x0, y0, z0, x1, ...]` vertex buffer.
    pub fn flat_vertices(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn transformed(&self, transform: &SimilarityTransform) -> Mesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = transform.apply(v);
        }
        if let Some(normals) = &mut out.normals {
            for n in normals {
                *n = transform.rotation * *n;
            }
        }
        out
    }
}

pub(crate) fn bounding_diagonal(points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Area-weighted vertex normals. Vertices whose accumulated normal vanishes get +Z.
pub fn compute_vertex_normals(mesh: &Mesh) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); mesh.vertices.len()];
    for tri in &mesh.triangles {
        let [a, b, c] = tri.map(|i| mesh.vertices[i]);
        // Cross product length is twice the area, so summing it weights by area.
        let n = (b - a).cross(&(c - a));
        for &i in tri {
            acc[i] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}

/// Paired vertex indices between a source (morphable-model) mesh and a target (game) mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkCorrespondence {
    pub pairs: Vec<[usize; 2]>,
}

/// Landmark count used by the standard 68-point face layout.
pub const DEFAULT_LANDMARK_COUNT: usize = 68;

impl LandmarkCorrespondence {
    pub fn new(pairs: Vec<[usize; 2]>) -> Result<Self> {
        let lm = LandmarkCorrespondence { pairs };
        lm.check_unique()?;
        Ok(lm)
    }

    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    fn check_unique(&self) -> Result<()> {
        let mut src: Vec<usize> = self.pairs.iter().map(|p| p[0]).collect();
        let mut dst: Vec<usize> = self.pairs.iter().map(|p| p[1]).collect();
        src.sort_unstable();
        dst.sort_unstable();
        if src.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate source landmark index"));
        }
        if dst.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate target landmark index"));
        }
        Ok(())
    }

    /// Checks the indices against the source and target vertex counts.
    pub fn validate(&self, source_vertices: usize, target_vertices: usize) -> Result<()> {
        self.check_unique()?;
        for (k, [s, t]) in self.pairs.iter().enumerate() {
            if *s >= source_vertices {
                return Err(Error::validation(format!(
                    "landmark pair {k}: source index {s} out of range ({source_vertices} vertices)"
                )));
            }
            if *t >= target_vertices {
                return Err(Error::validation(format!(
                    "landmark pair {k}: target index {t} out of range ({target_vertices} vertices)"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lm: LandmarkCorrespondence = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("landmark JSON: {e}")))?;
        lm.check_unique()?;
        Ok(lm)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landmarks serialize")
    }
}
