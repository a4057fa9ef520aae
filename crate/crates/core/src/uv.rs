//! Coarse texture construction: skin-tone transfer, perspective unwrap into UV
//! space, symmetry fill, Gaussian blur and the composed coarse-texture stage.

use nalgebra::{Vector2, Vector3};

use crate::camera::{PinholeCamera, Pose};
use crate::error::{Error, Result};
use crate::image::{uv_to_texel, BilinearTaps, Image, MaskSpace, SkinMask, TextureMap};
use crate::mesh::Mesh;
use crate::par;
use crate::poisson::{poisson_blend, PoissonOptions, PoissonReport};
use crate::raster::{rasterize_projected, ProjectedMesh, NO_TRIANGLE};

/// Blur σ at the reference 1024-texel width; scaled linearly with width.
pub const REFERENCE_BLUR_SIGMA: f64 = 5.0;

pub fn default_blur_sigma(width: usize) -> f64 {
    REFERENCE_BLUR_SIGMA * width as f64 / 1024.0
}

fn masked_mean(image: &Image, mask: &SkinMask) -> Result<[f64; 3]> {
    mask.check_fits(image, "masked mean")?;
    if image.channels() < 3 {
        return Err(Error::validation("masked mean needs an RGB raster"));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::validation("skin mask has no set pixels"));
    }
    let mut sum = [0.0; 3];
    for (i, _) in mask.bits.iter().enumerate().filter(|(_, b)| **b) {
        let base = i * image.channels();
        for c in 0..3 {
            sum[c] += image.data()[base + c];
        }
    }
    Ok(sum.map(|s| s / n as f64))
}

/// Per-channel mean over the masked pixels of a portrait.
pub fn mean_skin_color(image: &Image, mask: &SkinMask) -> Result<[f64; 3]> {
    mask.check_space(MaskSpace::Image, "mean_skin_color")?;
    masked_mean(image, mask)
}

/// Shifts every texel by `target − mean(template over mask)` and clamps to [0, 1].
pub fn transfer_skin_tone(
    template: &TextureMap,
    template_mask: &SkinMask,
    target_rgb: [f64; 3],
) -> Result<TextureMap> {
    template_mask.check_space(MaskSpace::Uv, "transfer_skin_tone")?;
    let mean = masked_mean(&template.rgb, template_mask)?;
    let offset = [0, 1, 2].map(|c| target_rgb[c] - mean[c]);
    let mut rgb = template.rgb.clone();
    for px in rgb.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] + offset[c]).clamp(0.0, 1.0);
        }
    }
    Ok(TextureMap {
        rgb,
        validity: template.validity.clone(),
    })
}

/// Which UV triangle covers each texel, with its barycentric weights.
#[derive(Debug, Clone)]
pub struct UvCoverage {
    pub width: usize,
    pub height: usize,
    /// Lowest-index covering triangle, or [`NO_TRIANGLE`].
    pub triangle: Vec<u32>,
    pub barycentric: Vec<[f64; 3]>,
}

impl UvCoverage {
    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|&&t| t != NO_TRIANGLE).count()
    }

    /// Coverage as a UV-space mask.
    pub fn mask(&self) -> SkinMask {
        SkinMask {
            width: self.width,
            height: self.height,
            bits: self.triangle.iter().map(|&t| t != NO_TRIANGLE).collect(),
            space: MaskSpace::Uv,
        }
    }
}

#[inline]
fn edge(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[inline]
fn is_top_left(a: Vector2<f64>, b: Vector2<f64>) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Rasterizes the mesh's UV layout at texel centers, first triangle wins.
pub fn uv_coverage(mesh: &Mesh, width: usize, height: usize) -> Result<UvCoverage> {
    let uvs = mesh.require_uvs()?;
    struct Setup {
        id: u32,
        s: [Vector2<f64>; 3],
        slot: [usize; 3],
        area: f64,
        top_left: [bool; 3],
        x0: usize,
        x1: usize,
    }
    let mut setups = Vec::new();
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); height];
    for (id, tri) in mesh.triangles.iter().enumerate() {
        let mut s = tri.map(|i| {
            let (x, y) = uv_to_texel(uvs[i].x, uvs[i].y, width, height);
            Vector2::new(x, y)
        });
        let mut slot = [0, 1, 2];
        let mut area = edge(s[0], s[1], s[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            s.swap(1, 2);
            slot.swap(1, 2);
            area = -area;
        }
        let lo = |f: fn(&Vector2<f64>) -> f64| s.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = |f: fn(&Vector2<f64>) -> f64| s.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let x0 = lo(|p| p.x).ceil().max(0.0);
        let x1 = hi(|p| p.x).floor().min(width as f64 - 1.0);
        let y0 = lo(|p| p.y).ceil().max(0.0);
        let y1 = hi(|p| p.y).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let k = setups.len() as u32;
        for bin in &mut bins[y0 as usize..=y1 as usize] {
            bin.push(k);
        }
        setups.push(Setup {
            id: id as u32,
            s,
            slot,
            area,
            top_left: [is_top_left(s[1], s[2]), is_top_left(s[2], s[0]), is_top_left(s[0], s[1])],
            x0: x0 as usize,
            x1: x1 as usize,
        });
    }

    let rows = par::map_range(height, |y| {
        let mut tri = vec![NO_TRIANGLE; width];
        let mut bary = vec![[0.0; 3]; width];
        for &k in &bins[y] {
            let t = &setups[k as usize];
            for x in t.x0..=t.x1 {
                if tri[x] != NO_TRIANGLE && tri[x] < t.id {
                    continue;
                }
                let p = Vector2::new(x as f64, y as f64);
                let e = [edge(t.s[1], t.s[2], p), edge(t.s[2], t.s[0], p), edge(t.s[0], t.s[1], p)];
                if !(0..3).all(|i| e[i] > 0.0 || (e[i] == 0.0 && t.top_left[i])) {
                    continue;
                }
                let mut b = [0.0; 3];
                for i in 0..3 {
                    b[t.slot[i]] = e[i] / t.area;
                }
                tri[x] = t.id;
                bary[x] = b;
            }
        }
        (tri, bary)
    });
    let mut triangle = Vec::with_capacity(width * height);
    let mut barycentric = Vec::with_capacity(width * height);
    for (t, b) in rows {
        triangle.extend(t);
        barycentric.extend(b);
    }
    Ok(UvCoverage {
        width,
        height,
        triangle,
        barycentric,
    })
}

/// Why a texel did not receive a photo sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TexelStatus {
    Valid,
    Uncovered,
    BackFacing,
    OutsideImage,
    Occluded,
}

/// Unwrap output with per-texel diagnostics.
#[derive(Debug, Clone)]
pub struct Unwrap {
    pub texture: TextureMap,
    pub status: Vec<TexelStatus>,
    /// Image-space bilinear taps used by each valid texel.
    pub taps: Vec<Option<BilinearTaps>>,
}

impl Unwrap {
    pub fn count(&self, status: TexelStatus) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }
}

/// Projects the portrait into the mesh's UV layout. See [`unwrap_detailed`].
pub fn unwrap_to_uv(
    image: &Image,
    mesh: &Mesh,
    pose: &Pose,
    camera: &PinholeCamera,
    uv_size: usize,
) -> Result<TextureMap> {
    Ok(unwrap_detailed(image, mesh, pose, camera, uv_size)?.texture)
}

/// Samples the portrait for every UV texel whose surface point is visible.
///
/// A texel is valid when its triangle faces the camera, the projected point
/// lies inside the image, every bilinear tap with nonzero weight lands on a
/// pixel covered by the mesh, and the surface point is not behind the z-buffer
/// surface at that location (bias `1e-4` of the visible depth range). Triangles
/// sharing a vertex position with the texel's triangle never count as occluders.
pub fn unwrap_detailed(
    image: &Image,
    mesh: &Mesh,
    pose: &Pose,
    camera: &PinholeCamera,
    uv_size: usize,
) -> Result<Unwrap> {
    if image.pixel_count() == 0 || image.channels() != 3 {
        return Err(Error::validation("unwrap needs a non-empty RGB image"));
    }
    if uv_size == 0 {
        return Err(Error::validation("uv_size must be positive"));
    }
    if camera.width() != image.width() || camera.height() != image.height() {
        return Err(Error::validation(format!(
            "camera image size {}x{} differs from the portrait {}x{}",
            camera.width(),
            camera.height(),
            image.width(),
            image.height()
        )));
    }
    let coverage = uv_coverage(mesh, uv_size, uv_size)?;
    let proj = ProjectedMesh::new(mesh, pose, camera);
    let zbuf = rasterize_projected(mesh, &proj, camera);
    let (w, h) = (image.width(), image.height());

    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &d in zbuf.depth.iter().filter(|d| d.is_finite()) {
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let bias = if dmax >= dmin {
        1e-4 * (dmax - dmin) + 1e-12 * dmax
    } else {
        0.0
    };
    let front: Vec<bool> = par::map_slice(&mesh.triangles, |t| proj.is_front_facing(t));
    let touches = |a: usize, b: usize| {
        let (ta, tb) = (&mesh.triangles[a], &mesh.triangles[b]);
        ta.iter()
            .any(|&i| tb.iter().any(|&j| i == j || mesh.vertices[i] == mesh.vertices[j]))
    };

    let texels = par::map_range(uv_size * uv_size, |i| -> (TexelStatus, Option<BilinearTaps>, [f64; 3]) {
        let t = coverage.triangle[i];
        if t == NO_TRIANGLE {
            return (TexelStatus::Uncovered, None, [0.0; 3]);
        }
        let t = t as usize;
        if !front[t] {
            return (TexelStatus::BackFacing, None, [0.0; 3]);
        }
        let b = coverage.barycentric[i];
        let tri = mesh.triangles[t];
        let p: Vector3<f64> = (0..3).map(|k| proj.camera_vertices[tri[k]] * b[k]).sum();
        let Some(px) = camera.project(&p) else {
            return (TexelStatus::OutsideImage, None, [0.0; 3]);
        };
        let (sx, sy) = (px.x - 0.5, px.y - 0.5);
        if !(sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64) {
            return (TexelStatus::OutsideImage, None, [0.0; 3]);
        }
        let taps = image.bilinear_taps(sx, sy);
        if (0..4).any(|k| taps.weight[k] > 0.0 && !zbuf.coverage[taps.pixel[k]]) {
            return (TexelStatus::Occluded, None, [0.0; 3]);
        }
        let nearest = (px.y.floor() as usize).min(h - 1) * w + (px.x.floor() as usize).min(w - 1);
        let front_id = zbuf.triangle_id[nearest];
        if front_id == NO_TRIANGLE {
            return (TexelStatus::Occluded, None, [0.0; 3]);
        }
        let front_id = front_id as usize;
        if front_id != t && !touches(front_id, t) {
            let occluder = proj
                .depth_at(&mesh.triangles[front_id], px)
                .unwrap_or(zbuf.depth[nearest]);
            if p.z > occluder + bias {
                return (TexelStatus::Occluded, None, [0.0; 3]);
            }
        }
        let mut rgb = [0.0; 3];
        for k in 0..4 {
            for c in 0..3 {
                rgb[c] += taps.weight[k] * image.data()[taps.pixel[k] * 3 + c];
            }
        }
        (TexelStatus::Valid, Some(taps), rgb.map(|v| v.clamp(0.0, 1.0)))
    });

    let mut rgb = Image::new(uv_size, uv_size, 3);
    let mut status = Vec::with_capacity(texels.len());
    let mut taps = Vec::with_capacity(texels.len());
    let mut validity = Vec::with_capacity(texels.len());
    for (i, (s, tp, c)) in texels.into_iter().enumerate() {
        rgb.data_mut()[i * 3..i * 3 + 3].copy_from_slice(&c);
        validity.push(s == TexelStatus::Valid);
        status.push(s);
        taps.push(tp);
    }
    Ok(Unwrap {
        texture: TextureMap {
            rgb,
            validity: Some(validity),
        },
        status,
        taps,
    })
}

/// Copies each valid texel into its invalid horizontal mirror.
///
/// Mirrors use the input validity only, so the operation is idempotent. A
/// texture without a validity mask is returned unchanged.
pub fn symmetry_fill(texture: &TextureMap) -> TextureMap {
    let Some(valid) = &texture.validity else {
        return texture.clone();
    };
    let (w, h) = (texture.width(), texture.height());
    let mut out = texture.clone();
    let out_valid = out.validity.as_mut().expect("validity present");
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = y * w + (w - 1 - x);
            if !valid[i] && valid[m] {
                out_valid[i] = true;
                let src = texture.rgb.pixel(w - 1 - x, y).to_vec();
                out.rgb.pixel_mut(x, y).copy_from_slice(&src);
            }
        }
    }
    out
}

/// Normalized 1-D Gaussian kernel of radius `⌈3σ⌉`, index 0 at offset `-radius`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("blur sigma must be positive, got {sigma}")))
    }
}

/// Separable Gaussian blur with clamp-to-edge borders, any channel count.
pub fn gaussian_blur_image(image: &Image, sigma: f64) -> Result<Image> {
    check_sigma(sigma)?;
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    if w == 0 || h == 0 {
        return Ok(image.clone());
    }
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horiz = Image::new(w, h, ch);
    par::for_each_row(horiz.data_mut(), w * ch, |y, row| {
        for x in 0..w {
            for (k, wk) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + k as isize - r, w);
                let src = image.index(sx, y);
                for c in 0..ch {
                    row[x * ch + c] += wk * image.data()[src + c];
                }
            }
        }
    });
    let mut out = Image::new(w, h, ch);
    par::for_each_row(out.data_mut(), w * ch, |y, row| {
        for (k, wk) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - r, h);
            let src = &horiz.data()[sy * w * ch..(sy + 1) * w * ch];
            for (o, s) in row.iter_mut().zip(src) {
                *o += wk * s;
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`gaussian_blur_image`]: maps an output gradient to the input.
pub fn gaussian_blur_adjoint(grad: &Image, sigma: f64) -> Result<Image> {
    check_sigma(sigma)?;
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h, ch) = (grad.width(), grad.height(), grad.channels());
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    // Transpose of the vertical pass: scatter rows.
    let mut vert = Image::new(w, h, ch);
    for y in 0..h {
        for (k, wk) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - r, h);
            for i in 0..w * ch {
                vert.data_mut()[sy * w * ch + i] += wk * grad.data()[y * w * ch + i];
            }
        }
    }
    // Transpose of the horizontal pass: scatter within each row.
    let mut out = Image::new(w, h, ch);
    par::for_each_row(out.data_mut(), w * ch, |y, row| {
        for x in 0..w {
            for (k, wk) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + k as isize - r, w);
                for c in 0..ch {
                    row[sx * ch + c] += wk * vert.data()[(y * w + x) * ch + c];
                }
            }
        }
    });
    Ok(out)
}

/// Blurs a texture map; validity is carried over unchanged.
pub fn gaussian_blur(texture: &TextureMap, sigma: f64) -> Result<TextureMap> {
    let mut rgb = gaussian_blur_image(&texture.rgb, sigma)?;
    rgb.clamp_unit();
    Ok(TextureMap {
        rgb,
        validity: texture.validity.clone(),
    })
}

/// Bilinear resample with texel centers aligned at both resolutions.
pub fn resample(image: &Image, width: usize, height: usize) -> Image {
    if image.width() == width && image.height() == height {
        return image.clone();
    }
    let sx = image.width() as f64 / width as f64;
    let sy = image.height() as f64 / height as f64;
    let ch = image.channels();
    let mut out = Image::new(width, height, ch);
    par::for_each_row(out.data_mut(), width * ch, |y, row| {
        for x in 0..width {
            image.sample_bilinear(
                (x as f64 + 0.5) * sx - 0.5,
                (y as f64 + 0.5) * sy - 0.5,
                &mut row[x * ch..(x + 1) * ch],
            );
        }
    });
    out
}

fn resample_mask(mask: &SkinMask, width: usize, height: usize) -> SkinMask {
    if mask.width == width && mask.height == height {
        return mask.clone();
    }
    SkinMask::from_fn(width, height, mask.space, |x, y| {
        let mx = ((x as f64 + 0.5) * mask.width as f64 / width as f64) as usize;
        let my = ((y as f64 + 0.5) * mask.height as f64 / height as f64) as usize;
        mask.at(mx.min(mask.width - 1), my.min(mask.height - 1))
    })
}

#[derive(Debug, Clone)]
pub struct CoarseTexture {
    /// Complete texture; no validity mask.
    pub texture: TextureMap,
    /// Texels that took photo data before the symmetry fill.
    pub photo_texels: usize,
    /// Texels in the Poisson region (photo plus mirrored photo).
    pub blended_texels: usize,
    pub poisson: Option<PoissonReport>,
}

/// Builds the coarse texture for a portrait.
///
/// Steps: shift the template to the portrait's mean skin color; unwrap the
/// portrait; keep only texels whose bilinear taps all lie in the image skin
/// mask; drop the outermost texel ring; mirror the result into its invalid
/// half; Poisson-blend that region into the toned template.
#[allow(clippy::too_many_arguments)]
pub fn create_coarse_texture(
    image: &Image,
    image_skin_mask: &SkinMask,
    mesh: &Mesh,
    pose: &Pose,
    camera: &PinholeCamera,
    template: &TextureMap,
    template_uv_mask: &SkinMask,
    uv_size: usize,
    poisson: &PoissonOptions,
) -> Result<CoarseTexture> {
    image_skin_mask.check_space(MaskSpace::Image, "create_coarse_texture")?;
    image_skin_mask.check_fits(image, "create_coarse_texture")?;
    template_uv_mask.check_space(MaskSpace::Uv, "create_coarse_texture")?;
    template_uv_mask.check_fits(&template.rgb, "create_coarse_texture")?;

    let skin = mean_skin_color(image, image_skin_mask)?;
    let template = TextureMap {
        rgb: resample(&template.rgb, uv_size, uv_size),
        validity: None,
    };
    let template_mask = resample_mask(template_uv_mask, uv_size, uv_size);
    let toned = transfer_skin_tone(&template, &template_mask, skin)?;

    let unwrap = unwrap_detailed(image, mesh, pose, camera, uv_size)?;
    let mut validity = unwrap.texture.validity.clone().expect("unwrap sets validity");
    for (i, v) in validity.iter_mut().enumerate() {
        let (x, y) = (i % uv_size, i / uv_size);
        let border = x == 0 || y == 0 || x + 1 == uv_size || y + 1 == uv_size;
        let in_skin = unwrap.taps[i].is_some_and(|t| {
            (0..4).all(|k| t.weight[k] == 0.0 || image_skin_mask.bits[t.pixel[k]])
        });
        *v = *v && in_skin && !border;
    }
    let photo_texels = validity.iter().filter(|v| **v).count();
    if photo_texels == 0 {
        return Ok(CoarseTexture {
            texture: toned,
            photo_texels: 0,
            blended_texels: 0,
            poisson: None,
        });
    }

    let filled = symmetry_fill(&TextureMap {
        rgb: unwrap.texture.rgb,
        validity: Some(validity),
    });
    let region_bits = filled.validity.clone().expect("validity kept");
    let region = SkinMask::new(uv_size, uv_size, region_bits, MaskSpace::Uv)?;
    let source = pad_outward(&filled.rgb, &region);
    let blend = poisson_blend(
        &TextureMap {
            rgb: source,
            validity: None,
        },
        &toned,
        &region,
        poisson,
    )?;
    Ok(CoarseTexture {
        texture: TextureMap {
            rgb: blend.texture.rgb,
            validity: None,
        },
        photo_texels,
        blended_texels: region.count(),
        poisson: Some(blend.report),
    })
}

/// Fills texels just outside `region` with the mean of their in-region
/// 4-neighbors, so the blend's guidance field is flat across the boundary.
fn pad_outward(rgb: &Image, region: &SkinMask) -> Image {
    let (w, h) = (rgb.width(), rgb.height());
    let mut out = rgb.clone();
    par::for_each_row(out.data_mut(), w * 3, |y, row| {
        for x in 0..w {
            if region.at(x, y) {
                continue;
            }
            let mut sum = [0.0; 3];
            let mut n = 0.0;
            let neighbors = [
                (x > 0).then(|| (x - 1, y)),
                (x + 1 < w).then_some((x + 1, y)),
                (y > 0).then(|| (x, y - 1)),
                (y + 1 < h).then_some((x, y + 1)),
            ];
            for (nx, ny) in neighbors.into_iter().flatten() {
                if region.at(nx, ny) {
                    let p = rgb.pixel(nx, ny);
                    for c in 0..3 {
                        sum[c] += p[c];
                    }
                    n += 1.0;
                }
            }
            if n > 0.0 {
                for c in 0..3 {
                    row[x * 3 + c] = sum[c] / n;
                }
            }
        }
    });
    out
}
