//! Game-character face creation from a single portrait.
//!
//! The crate covers the non-neural half of the pipeline:
//!
//! * [`morphable`] synthesizes a face shape from identity/expression coefficients.
//! * [`transfer`] moves that shape onto the fixed game-mesh topology with RBF interpolation.
//! * [`uv`] and [`poisson`] build a coarse texture map from the portrait.
//! * [`raster`] and [`render`] form a deterministic software renderer with analytic
//!   gradients for texture texels and Phong lighting.
//! * [`loss`] holds the training objectives and the PSNR/SSIM metrics.
//! * [`pipeline`] wires the stages together behind a TOML configuration.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and plain iteration otherwise. Results are bitwise identical
//! either way.

pub mod camera;
pub mod error;
pub mod image;
pub mod loss;
pub mod mesh;
pub mod morphable;
pub mod par;
pub mod pipeline;
pub mod poisson;
pub mod raster;
pub mod render;
pub mod template;
pub mod transfer;
pub mod uv;

pub use crate::camera::{PinholeCamera, Pose};
pub use crate::error::{Error, Result};
pub use crate::image::{Image, MaskSpace, SkinMask, TextureMap};
pub use crate::mesh::{LandmarkCorrespondence, Mesh, SimilarityTransform};
pub use crate::render::PhongLighting;
