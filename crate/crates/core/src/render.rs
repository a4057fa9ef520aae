//! Blinn-Phong shading on top of [`crate::raster`] and its analytic backward pass.
//!
//! Lighting is expressed in camera space. Per covered pixel:
//!
//! ```text
//! c = albedo ⊙ (ambient + diffuse · max(0, n·l)) + specular · max(0, n·h)^shininess
//! ```
//!
//! clamped to [0, 1], where `albedo` is a bilinear texture sample at the
//! interpolated UV and `h = normalize(l + v)`. Gradients hold rasterization fixed.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{PinholeCamera, Pose, ViewTransform};
use crate::error::{Error, Result};
use crate::image::{uv_to_texel, BilinearTaps, Image, TextureMap};
use crate::mesh::Mesh;
use crate::par;
use crate::raster::{rasterize_projected, FrameBuffers, ProjectedMesh, NO_TRIANGLE};

pub const DEFAULT_SHININESS: f64 = 16.0;

/// Single directional light plus ambient term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhongLighting {
    /// Unit vector from the surface toward the light, camera frame.
    pub light_direction: [f64; 3],
    pub ambient_rgb: [f64; 3],
    pub diffuse_rgb: [f64; 3],
    pub specular_rgb: [f64; 3],
    #[serde(default = "default_shininess")]
    pub shininess: f64,
}

fn default_shininess() -> f64 {
    DEFAULT_SHININESS
}

impl Default for PhongLighting {
    fn default() -> Self {
        PhongLighting {
            light_direction: [0.0, 0.0, -1.0],
            ambient_rgb: [0.4; 3],
            diffuse_rgb: [0.6; 3],
            specular_rgb: [0.0; 3],
            shininess: DEFAULT_SHININESS,
        }
    }
}

impl PhongLighting {
    /// Ambient-only white light: the image shows the raw albedo.
    pub fn unlit() -> Self {
        PhongLighting {
            light_direction: [0.0, 0.0, -1.0],
            ambient_rgb: [1.0; 3],
            diffuse_rgb: [0.0; 3],
            specular_rgb: [0.0; 3],
            shininess: DEFAULT_SHININESS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = Vector3::from(self.light_direction);
        if (l.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "light direction must be a unit vector, has length {}",
                l.norm()
            )));
        }
        let colors = self
            .ambient_rgb
            .iter()
            .chain(&self.diffuse_rgb)
            .chain(&self.specular_rgb);
        for c in colors {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::validation("lighting colors must lie in [0,1]"));
            }
        }
        if !(self.shininess > 0.0 && self.shininess.is_finite()) {
            return Err(Error::validation("shininess must be positive"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let l: PhongLighting =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        l.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub clear_color: [f64; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            clear_color: [0.0; 3],
        }
    }
}

/// Camera-space attributes shared by shading and its backward pass.
struct ShadingInputs<'a> {
    proj: ProjectedMesh,
    normals: Vec<Vector3<f64>>,
    mesh: &'a Mesh,
    texture: &'a Image,
    light: Vector3<f64>,
    lighting: &'a PhongLighting,
}

impl<'a> ShadingInputs<'a> {
    fn new(
        mesh: &'a Mesh,
        pose: &Pose,
        camera: &PinholeCamera,
        texture: &'a TextureMap,
        lighting: &'a PhongLighting,
    ) -> Result<Self> {
        mesh.require_uvs()?;
        let view = ViewTransform::from(pose);
        let normals = mesh
            .normals_or_computed()
            .iter()
            .map(|n| view.direction(n))
            .collect();
        Ok(ShadingInputs {
            proj: ProjectedMesh::new(mesh, pose, camera),
            normals,
            mesh,
            texture: &texture.rgb,
            light: Vector3::from(lighting.light_direction).normalize(),
            lighting,
        })
    }
}

/// Intermediate quantities of one shaded pixel.
struct PixelShading {
    taps: BilinearTaps,
    albedo: [f64; 3],
    normal: Vector3<f64>,
    half: Vector3<f64>,
    /// `‖l + v‖`
    half_len: f64,
    n_dot_l: f64,
    n_dot_h: f64,
    /// `max(0, n·h)^shininess`
    spec: f64,
    raw: [f64; 3],
}

fn shade_pixel(inputs: &ShadingInputs, tri: usize, bary: &[f64; 3]) -> PixelShading {
    let t = inputs.mesh.triangles[tri];
    let uvs = inputs.mesh.uvs.as_ref().expect("uvs checked");
    let mut u = 0.0;
    let mut v = 0.0;
    let mut p = Vector3::zeros();
    let mut n = Vector3::zeros();
    for k in 0..3 {
        u += bary[k] * uvs[t[k]].x;
        v += bary[k] * uvs[t[k]].y;
        p += bary[k] * inputs.proj.camera_vertices[t[k]];
        n += bary[k] * inputs.normals[t[k]];
    }
    let len = n.norm();
    let normal = if len > 1e-12 {
        n / len
    } else {
        let f = inputs.proj.face_normal(&t);
        let f = f / f.norm().max(f64::MIN_POSITIVE);
        if f.dot(&p) > 0.0 {
            -f
        } else {
            f
        }
    };

    let tex = inputs.texture;
    let (tx, ty) = uv_to_texel(u, v, tex.width(), tex.height());
    let taps = tex.bilinear_taps(tx, ty);
    let mut albedo = [0.0; 3];
    for k in 0..4 {
        let base = taps.pixel[k] * 3;
        for (c, a) in albedo.iter_mut().enumerate() {
            *a += taps.weight[k] * tex.data()[base + c];
        }
    }

    let view_dir = -p / p.norm();
    let l = inputs.light;
    let lv = l + view_dir;
    let half_len = lv.norm();
    let half = if half_len > 1e-12 { lv / half_len } else { normal };
    let n_dot_l = normal.dot(&l);
    let n_dot_h = if half_len > 1e-12 { normal.dot(&half) } else { 0.0 };
    let spec = if n_dot_h > 0.0 {
        n_dot_h.powf(inputs.lighting.shininess)
    } else {
        0.0
    };
    let diff = n_dot_l.max(0.0);
    let lt = inputs.lighting;
    let raw = [0, 1, 2].map(|c| {
        albedo[c] * (lt.ambient_rgb[c] + lt.diffuse_rgb[c] * diff) + lt.specular_rgb[c] * spec
    });
    PixelShading {
        taps,
        albedo,
        normal,
        half,
        half_len,
        n_dot_l,
        n_dot_h,
        spec,
        raw,
    }
}

fn check_buffers(buffers: &FrameBuffers, mesh: &Mesh, camera: &PinholeCamera) -> Result<()> {
    let n = buffers.pixel_count();
    if buffers.width != camera.width() || buffers.height != camera.height() {
        return Err(Error::validation("frame buffers do not match the camera size"));
    }
    if buffers.triangle_id.len() != n || buffers.barycentric.len() != n || buffers.coverage.len() != n {
        return Err(Error::validation("frame buffer arrays have inconsistent sizes"));
    }
    let tris = mesh.triangle_count() as u32;
    if buffers
        .triangle_id
        .iter()
        .any(|&t| t != NO_TRIANGLE && t >= tris)
    {
        return Err(Error::validation("frame buffers reference triangles not in the mesh"));
    }
    Ok(())
}

/// Fills `buffers.color` by shading every covered pixel.
#[allow(clippy::too_many_arguments)]
pub fn shade(
    buffers: &mut FrameBuffers,
    mesh: &Mesh,
    pose: &Pose,
    camera: &PinholeCamera,
    texture: &TextureMap,
    lighting: &PhongLighting,
    options: &RenderOptions,
) -> Result<()> {
    check_buffers(buffers, mesh, camera)?;
    let inputs = ShadingInputs::new(mesh, pose, camera, texture, lighting)?;
    let width = buffers.width;
    let (tri_ids, barys) = (&buffers.triangle_id, &buffers.barycentric);
    par::for_each_row(buffers.color.data_mut(), width * 3, |y, row| {
        for x in 0..width {
            let i = y * width + x;
            let out = &mut row[3 * x..3 * x + 3];
            if tri_ids[i] == NO_TRIANGLE {
                out.copy_from_slice(&options.clear_color);
                continue;
            }
            let s = shade_pixel(&inputs, tri_ids[i] as usize, &barys[i]);
            for c in 0..3 {
                out[c] = s.raw[c].clamp(0.0, 1.0);
            }
        }
    });
    Ok(())
}

/// Rasterizes and shades in one call.
pub fn render(
    mesh: &Mesh,
    texture: &TextureMap,
    pose: &Pose,
    camera: &PinholeCamera,
    lighting: &PhongLighting,
    options: &RenderOptions,
) -> Result<FrameBuffers> {
    mesh.validate()?;
    camera.validate()?;
    mesh.require_uvs()?;
    let proj = ProjectedMesh::new(mesh, pose, camera);
    let mut buffers = rasterize_projected(mesh, &proj, camera);
    shade(&mut buffers, mesh, pose, camera, texture, lighting, options)?;
    Ok(buffers)
}

/// Gradients of a scalar objective with respect to texture and lighting.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub d_texture: Image,
    pub d_ambient: [f64; 3],
    pub d_diffuse: [f64; 3],
    pub d_specular: [f64; 3],
    /// Projected onto the tangent plane of the unit sphere at the light direction.
    pub d_light_direction: [f64; 3],
    pub d_shininess: f64,
}

#[derive(Default, Clone, Copy)]
struct LightingGrad {
    ambient: [f64; 3],
    diffuse: [f64; 3],
    specular: [f64; 3],
    light: [f64; 3],
    shininess: f64,
}

impl LightingGrad {
    fn add(&mut self, o: &LightingGrad) {
        for c in 0..3 {
            self.ambient[c] += o.ambient[c];
            self.diffuse[c] += o.diffuse[c];
            self.specular[c] += o.specular[c];
            self.light[c] += o.light[c];
        }
        self.shininess += o.shininess;
    }
}

/// Back-propagates per-pixel color gradients `upstream` through shading and
/// texture sampling. Channels whose pre-clamp value left [0, 1] pass no gradient.
#[allow(clippy::too_many_arguments)]
pub fn render_backward(
    buffers: &FrameBuffers,
    mesh: &Mesh,
    pose: &Pose,
    camera: &PinholeCamera,
    texture: &TextureMap,
    lighting: &PhongLighting,
    upstream: &Image,
) -> Result<RenderGradients> {
    check_buffers(buffers, mesh, camera)?;
    if upstream.width() != buffers.width
        || upstream.height() != buffers.height
        || upstream.channels() != 3
    {
        return Err(Error::validation("upstream gradient shape differs from the frame buffers"));
    }
    let inputs = ShadingInputs::new(mesh, pose, camera, texture, lighting)?;
    let width = buffers.width;
    let lt = lighting;

    // Per row: lighting partial sums and texel contributions, reduced in row order.
    let rows = par::map_range(buffers.height, |y| {
        let mut grad = LightingGrad::default();
        let mut texels: Vec<(usize, [f64; 3])> = Vec::new();
        for x in 0..width {
            let i = y * width + x;
            let tri = buffers.triangle_id[i];
            if tri == NO_TRIANGLE {
                continue;
            }
            let g_in = upstream.pixel(x, y);
            if g_in.iter().all(|g| *g == 0.0) {
                continue;
            }
            let s = shade_pixel(&inputs, tri as usize, &buffers.barycentric[i]);
            let g: [f64; 3] = [0, 1, 2].map(|c| {
                if (0.0..=1.0).contains(&s.raw[c]) {
                    g_in[c]
                } else {
                    0.0
                }
            });
            let diff = s.n_dot_l.max(0.0);
            let mut d_ndotl = 0.0;
            let mut d_spec = 0.0;
            let mut d_albedo = [0.0; 3];
            for c in 0..3 {
                grad.ambient[c] += g[c] * s.albedo[c];
                grad.diffuse[c] += g[c] * s.albedo[c] * diff;
                grad.specular[c] += g[c] * s.spec;
                d_albedo[c] = g[c] * (lt.ambient_rgb[c] + lt.diffuse_rgb[c] * diff);
                if s.n_dot_l > 0.0 {
                    d_ndotl += g[c] * s.albedo[c] * lt.diffuse_rgb[c];
                }
                d_spec += g[c] * lt.specular_rgb[c];
            }
            if s.n_dot_h > 0.0 && d_spec != 0.0 {
                grad.shininess += d_spec * s.spec * s.n_dot_h.ln();
                let d_ndoth = d_spec * lt.shininess * s.n_dot_h.powf(lt.shininess - 1.0);
                let dh = (s.normal - s.n_dot_h * s.half) / s.half_len;
                for c in 0..3 {
                    grad.light[c] += d_ndoth * dh[c];
                }
            }
            for c in 0..3 {
                grad.light[c] += d_ndotl * s.normal[c];
            }
            for k in 0..4 {
                let w = s.taps.weight[k];
                if w != 0.0 {
                    texels.push((s.taps.pixel[k], d_albedo.map(|d| d * w)));
                }
            }
        }
        (grad, texels)
    });

    let mut total = LightingGrad::default();
    let mut d_texture = Image::new(texture.width(), texture.height(), 3);
    for (grad, texels) in rows {
        total.add(&grad);
        let data = d_texture.data_mut();
        for (p, d) in texels {
            for c in 0..3 {
                data[3 * p + c] += d[c];
            }
        }
    }

    let l = inputs.light;
    let gl = Vector3::from(total.light);
    let tangent = gl - gl.dot(&l) * l;
    Ok(RenderGradients {
        d_texture,
        d_ambient: total.ambient,
        d_diffuse: total.diffuse,
        d_specular: total.specular,
        d_light_direction: [tangent.x, tangent.y, tangent.z],
        d_shininess: total.shininess,
    })
}
