//! Closed-form similarity alignment of paired point sets.

use nalgebra::{Matrix3, Vector3};

use super::Point3;
use crate::error::{Error, Result};

/// `x ↦ scale · rotation · x + translation`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }
}

/// Finds the similarity (or rigid, when `with_scale` is false) transform that
/// minimizes `Σ ‖s·R·xᵢ + t − yᵢ‖²`, excluding reflections.
pub fn procrustes_align(
    source: &[Point3],
    target: &[Point3],
    with_scale: bool,
) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::validation(format!(
            "point sets differ in size: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::validation("alignment needs at least 3 point pairs"));
    }
    let n = source.len() as f64;
    let mu_s: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / n;
    let mu_t: Vector3<f64> = target.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        let dt = t - mu_t;
        cov += dt * ds.transpose();
        src_cov += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    src_cov /= n;
    var_s /= n;

    check_spread(&src_cov, "source")?;
    let mut tgt_cov = Matrix3::zeros();
    for t in target {
        let dt = t - mu_t;
        tgt_cov += dt * dt.transpose();
    }
    check_spread(&(tgt_cov / n), "target")?;

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let sv = svd.singular_values;

    // nalgebra does not sort singular values; locate the smallest one for the
    // reflection correction.
    let smallest = (0..3)
        .min_by(|&a, &b| sv[a].total_cmp(&sv[b]))
        .unwrap_or(2);
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = u * d * v_t;
    let scale = if with_scale {
        (0..3).map(|i| sv[i] * d[(i, i)]).sum::<f64>() / var_s
    } else {
        1.0
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::SingularConfiguration(format!(
            "alignment produced non-positive scale {scale}"
        )));
    }
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Rejects coincident or collinear configurations.
fn check_spread(cov: &Matrix3<f64>, which: &str) -> Result<()> {
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::SingularConfiguration(format!(
            "{which} points are coincident or collinear"
        )));
    }
    Ok(())
}
