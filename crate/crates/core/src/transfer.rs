//! RBF shape transfer from the morphable-model mesh to the game mesh.
//!
//! The offset field `f(x) = Σ wᵢ φ(‖x − cᵢ‖)` is centered on the game-mesh
//! landmarks and interpolates the displacement from each game landmark to its
//! (similarity-aligned) morphable-model counterpart. Every game vertex then moves
//! to `x + f(x)`; triangles and UVs are left untouched.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{procrustes_align, LandmarkCorrespondence, Mesh, Point3, SimilarityTransform};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `φ(r) = exp(−(r/σ)²)`
    Gaussian,
    /// `φ(r) = r`
    ThinPlateLinear,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "thin_plate_linear" | "linear" => Ok(KernelKind::ThinPlateLinear),
            other => Err(Error::validation(format!("unknown RBF kernel {other:?}"))),
        }
    }
}

/// Kernel choice. `None` for `sigma` or `regularization` means "derive from the centers".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernelConfig {
    pub kind: KernelKind,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub regularization: Option<f64>,
}

impl Default for RbfKernelConfig {
    fn default() -> Self {
        RbfKernelConfig {
            kind: KernelKind::Gaussian,
            sigma: None,
            regularization: None,
        }
    }
}

impl RbfKernelConfig {
    pub fn gaussian(sigma: Option<f64>, regularization: f64) -> Self {
        RbfKernelConfig {
            kind: KernelKind::Gaussian,
            sigma,
            regularization: Some(regularization),
        }
    }

    pub fn exact(kind: KernelKind) -> Self {
        RbfKernelConfig {
            kind,
            sigma: None,
            regularization: Some(0.0),
        }
    }

    /// Fills in automatic values: σ is the mean pairwise center distance and
    /// the regularization is `1e-8 · σ_mean²`.
    pub fn resolve(&self, centers: &[Point3]) -> Result<ResolvedKernel> {
        let needs_spacing = self.regularization.is_none()
            || (self.kind == KernelKind::Gaussian && self.sigma.is_none());
        let spacing = if needs_spacing {
            mean_pairwise_distance(centers)
        } else {
            0.0
        };
        let sigma = match self.kind {
            KernelKind::Gaussian => {
                // A lone center has no spacing; any width interpolates it.
                let auto = if centers.len() < 2 { 1.0 } else { spacing };
                let s = self.sigma.unwrap_or(auto);
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::validation(format!("gaussian sigma must be positive, got {s}")));
                }
                s
            }
            KernelKind::ThinPlateLinear => self.sigma.unwrap_or(1.0),
        };
        let regularization = self.regularization.unwrap_or(1e-8 * spacing * spacing);
        if !(regularization >= 0.0 && regularization.is_finite()) {
            return Err(Error::validation("regularization must be non-negative"));
        }
        Ok(ResolvedKernel {
            kind: self.kind,
            sigma,
            regularization,
        })
    }
}

/// Kernel with every parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedKernel {
    pub kind: KernelKind,
    pub sigma: f64,
    pub regularization: f64,
}

impl ResolvedKernel {
    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                let q = r / self.sigma;
                (-q * q).exp()
            }
            KernelKind::ThinPlateLinear => r,
        }
    }
}

pub fn mean_pairwise_distance(points: &[Point3]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += (points[i] - points[j]).norm();
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Solved RBF offset field.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfDeformation {
    pub kernel: ResolvedKernel,
    pub centers: Vec<Point3>,
    /// One weight per center and output coordinate.
    pub weights: Vec<Vector3<f64>>,
}

/// Solves `(Φ + reg·I)·W = offsets` with `Φᵢⱼ = φ(‖cᵢ − cⱼ‖)` by LU with partial pivoting.
pub fn solve_rbf(
    centers: &[Point3],
    offsets: &[Vector3<f64>],
    config: &RbfKernelConfig,
) -> Result<RbfDeformation> {
    let m = centers.len();
    if m == 0 {
        return Err(Error::validation("RBF needs at least one center"));
    }
    if offsets.len() != m {
        return Err(Error::validation(format!(
            "{} offsets for {m} centers",
            offsets.len()
        )));
    }
    if centers.iter().chain(offsets).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::validation("RBF inputs must be finite"));
    }
    for i in 0..m {
        for j in i + 1..m {
            if centers[i] == centers[j] {
                return Err(Error::validation(format!(
                    "RBF centers {i} and {j} coincide"
                )));
            }
        }
    }
    let kernel = config.resolve(centers)?;

    let phi = DMatrix::from_fn(m, m, |i, j| {
        let v = kernel.phi((centers[i] - centers[j]).norm());
        if i == j {
            v + kernel.regularization
        } else {
            v
        }
    });
    let rhs = DMatrix::from_fn(m, 3, |i, k| offsets[i][k]);
    let solution = phi.clone().lu().solve(&rhs).ok_or_else(|| {
        Error::Solver("RBF system is singular; use a positive regularization".into())
    })?;
    if solution.iter().any(|w| !w.is_finite()) {
        return Err(Error::Solver(
            "RBF system is numerically singular; use a positive regularization".into(),
        ));
    }
    let weights = (0..m)
        .map(|i| Vector3::new(solution[(i, 0)], solution[(i, 1)], solution[(i, 2)]))
        .collect();
    Ok(RbfDeformation {
        kernel,
        centers: centers.to_vec(),
        weights,
    })
}

/// `f(x) = Σᵢ wᵢ φ(‖x − cᵢ‖)`
pub fn evaluate_rbf(deformation: &RbfDeformation, x: &Point3) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for (c, w) in deformation.centers.iter().zip(&deformation.weights) {
        out += w * deformation.kernel.phi((x - c).norm());
    }
    out
}

/// Evaluates the field at many points, in parallel when enabled.
pub fn evaluate_rbf_many(deformation: &RbfDeformation, points: &[Point3]) -> Vec<Vector3<f64>> {
    par::map_slice(points, |p| evaluate_rbf(deformation, p))
}

/// Result of [`transfer_shape`].
#[derive(Debug, Clone)]
pub struct ShapeTransfer {
    pub mesh: Mesh,
    /// Maps morphable-model coordinates into the game-mesh frame.
    pub alignment: SimilarityTransform,
    pub deformation: RbfDeformation,
}

/// Deforms `game_mesh` so its landmarks follow the morphable-model shape.
///
/// `mm_vertices` is the flat `3N` shape vector. Correspondence pairs are
/// `[morphable-model index, game-mesh index]`.
pub fn transfer_shape(
    game_mesh: &Mesh,
    correspondence: &LandmarkCorrespondence,
    mm_vertices: &[f64],
    config: &RbfKernelConfig,
) -> Result<ShapeTransfer> {
    if !mm_vertices.len().is_multiple_of(3) {
        return Err(Error::validation(format!(
            "morphable shape length {} is not a multiple of 3",
            mm_vertices.len()
        )));
    }
    let mm_count = mm_vertices.len() / 3;
    correspondence.validate(mm_count, game_mesh.vertex_count())?;

    let mm_landmarks: Vec<Point3> = correspondence
        .pairs
        .iter()
        .map(|[s, _]| Vector3::new(mm_vertices[3 * s], mm_vertices[3 * s + 1], mm_vertices[3 * s + 2]))
        .collect();
    let game_landmarks: Vec<Point3> = correspondence
        .pairs
        .iter()
        .map(|[_, t]| game_mesh.vertices[*t])
        .collect();

    let alignment = procrustes_align(&mm_landmarks, &game_landmarks, true)?;
    let offsets: Vec<Vector3<f64>> = mm_landmarks
        .iter()
        .zip(&game_landmarks)
        .map(|(m, g)| alignment.apply(m) - g)
        .collect();
    let deformation = solve_rbf(&game_landmarks, &offsets, config)?;

    let displacement = evaluate_rbf_many(&deformation, &game_mesh.vertices);
    let mut mesh = game_mesh.clone();
    for (v, d) in mesh.vertices.iter_mut().zip(&displacement) {
        *v += d;
    }
    // Positions moved, so any stored normals are stale.
    mesh.normals = None;
    Ok(ShapeTransfer {
        mesh,
        alignment,
        deformation,
    })
}
