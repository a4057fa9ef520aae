//! Rigid head pose and pinhole projection.
//!
//! Conventions: the camera looks down +Z, image x grows to the right and image y
//! grows downward. Pose angles are intrinsic X-Y-Z Euler angles in radians, so the
//! rotation matrix is `Rx(rx) · Ry(ry) · Rz(rz)`. A model point `p` lands at
//! `R·p + t` in camera coordinates.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl Default for Pose {
    fn default() -> Self {
        Pose {
            rotation: [0.0; 3],
            translation: [0.0; 3],
        }
    }
}

impl Pose {
    pub fn new(rotation: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        let pose = Pose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Six pose scalars in coefficient-vector order: three angles then translation.
    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != 6 {
            return Err(Error::validation(format!("pose has {} values, expected 6", p.len())));
        }
        Pose::new([p[0], p[1], p[2]], [p[3], p[4], p[5]])
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .rotation
            .iter()
            .chain(&self.translation)
            .any(|v| !v.is_finite())
        {
            return Err(Error::validation("pose values must be finite"));
        }
        if self.rotation.iter().any(|a| a.abs() > TAU) {
            return Err(Error::validation("pose angles must lie within ±2π"));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let [rx, ry, rz] = self.rotation;
        let x = Rotation3::from_axis_angle(&Vector3::x_axis(), rx);
        let y = Rotation3::from_axis_angle(&Vector3::y_axis(), ry);
        let z = Rotation3::from_axis_angle(&Vector3::z_axis(), rz);
        *(x * y * z).matrix()
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pose: Pose =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        pose.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(pose)
    }
}

/// Model-to-camera transform precomputed from a [`Pose`].
#[derive(Debug, Clone, Copy)]
pub struct ViewTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl From<&Pose> for ViewTransform {
    fn from(pose: &Pose) -> Self {
        ViewTransform {
            rotation: pose.rotation_matrix(),
            translation: pose.translation_vector(),
        }
    }
}

impl ViewTransform {
    #[inline]
    pub fn point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn direction(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }
}

/// Pinhole camera with square pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    /// Focal length in pixels.
    pub focal_length: f64,
    pub principal_point: [f64; 2],
    /// Width and height in pixels.
    pub image_size: [usize; 2],
}

/// Points closer than this to the camera plane are not projected.
pub const NEAR_PLANE: f64 = 1e-6;

impl PinholeCamera {
    pub fn new(focal_length: f64, principal_point: [f64; 2], image_size: [usize; 2]) -> Result<Self> {
        let cam = PinholeCamera {
            focal_length,
            principal_point,
            image_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered camera with a focal length of twice the image width.
    pub fn centered(width: usize, height: usize) -> Self {
        PinholeCamera {
            focal_length: 2.0 * width as f64,
            principal_point: [width as f64 / 2.0, height as f64 / 2.0],
            image_size: [width, height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0 && self.focal_length.is_finite()) {
            return Err(Error::validation("focal length must be positive"));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(Error::validation("image size must be non-zero"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.image_size[0]
    }

    pub fn height(&self) -> usize {
        self.image_size[1]
    }

    /// Projects a camera-space point to continuous pixel coordinates, where the
    /// pixel `(i, j)` spans `[i, i+1) × [j, j+1)`. `None` behind the near plane.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= NEAR_PLANE {
            return None;
        }
        Some(Vector2::new(
            self.focal_length * p.x / p.z + self.principal_point[0],
            self.focal_length * p.y / p.z + self.principal_point[1],
        ))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam: PinholeCamera =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cam.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(cam)
    }
}
