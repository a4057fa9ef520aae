//! Procedural sample assets.
//!
//! The game head is a latitude/longitude grid over a deformed ellipsoid, cut
//! into UV charts whose layout is mirror-symmetric about `u = 0.5`; eye and
//! mouth slits are open. The morphable model is a denser single-chart face on
//! the same surface, placed in its own similarity frame, with smooth random
//! identity and expression bases. Everything is seeded, so regenerating always
//! gives identical assets.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{PinholeCamera, Pose};
use crate::error::Result;
use crate::image::{uv_to_texel, Image, MaskSpace, SkinMask, TextureMap};
use crate::mesh::{LandmarkCorrespondence, Mesh, SimilarityTransform, DEFAULT_LANDMARK_COUNT};
use crate::morphable::{
    synthesize_shape, MorphableBasis, COEFFICIENT_DIM, EXPRESSION_DIM, IDENTITY_DIM,
    LIGHTING_SH_DIM, TEXTURE_DIM,
};
use crate::par;
use crate::render::{render, PhongLighting, RenderOptions};
use crate::transfer::{transfer_shape, RbfKernelConfig};

pub const GAME_VERTEX_COUNT: usize = 8520;
pub const GAME_TRIANGLE_COUNT: usize = 16020;

/// Longitude cells around the head.
const COLUMNS: i32 = 136;
const PHI_BOTTOM: f64 = -70.0;
const PHI_SPLIT: f64 = 62.0;
const PHI_TOP: f64 = 86.0;
const MID_ROWS: i32 = 50;
const TOP_ROWS: i32 = 9;
/// Mid-band row holding the eye slits and the mouth slit.
const EYE_ROW: i32 = 31;
const MOUTH_ROW: i32 = 17;

/// Morphable-model frame: canonical head scaled and shifted.
const MM_SCALE: f64 = 95.0;
const MM_OFFSET: [f64; 3] = [2.0, -5.0, 10.0];
/// Camera distance in canonical head units.
const VIEW_DISTANCE: f64 = 6.0;

fn cell_angle() -> f64 {
    2.0 * PI / COLUMNS as f64
}

/// Point on the canonical head surface; `theta`/`phi` in radians. The face
/// looks toward +z and y points up.
pub fn head_surface(theta: f64, phi: f64) -> Vector3<f64> {
    let (a, b, c) = (0.8, 1.0, 0.9);
    let mut x = a * phi.cos() * theta.sin();
    let y = b * phi.sin();
    let mut z = c * phi.cos() * theta.cos();
    if y < -0.2 {
        let t = ((-0.2 - y) / 0.8).min(1.0);
        x *= 1.0 - 0.3 * t * t;
        z *= 1.0 - 0.1 * t * t;
    }
    if z > 0.0 {
        z += 0.16 * (-(x * x) / (2.0 * 0.07 * 0.07) - (y + 0.02).powi(2) / (2.0 * 0.14 * 0.14)).exp();
    }
    Vector3::new(x, y, z)
}

/// One rectangular UV chart of the game head.
#[derive(Debug, Clone, Copy)]
struct Chart {
    first_cell: i32,
    cells: i32,
    phi: (f64, f64),
    rows: i32,
    u: (f64, f64),
    v: (f64, f64),
    /// Face chart: carries the slits.
    face: bool,
}

impl Chart {
    fn theta(&self, k: f64) -> f64 {
        (self.first_cell as f64 + k) * cell_angle()
    }

    fn contains_uv(&self, u: f64, v: f64) -> bool {
        (self.u.0..=self.u.1).contains(&u) && (self.v.0..=self.v.1).contains(&v)
    }

    /// Squared UV distance to the chart rectangle.
    fn uv_distance2(&self, u: f64, v: f64) -> f64 {
        let du = (self.u.0 - u).max(0.0).max(u - self.u.1);
        let dv = (self.v.0 - v).max(0.0).max(v - self.v.1);
        du * du + dv * dv
    }

    /// Surface angles (degrees) at a UV point, clamped into the chart.
    fn angles_deg(&self, u: f64, v: f64) -> (f64, f64) {
        let s = ((u - self.u.0) / (self.u.1 - self.u.0)).clamp(0.0, 1.0);
        let t = ((v - self.v.0) / (self.v.1 - self.v.0)).clamp(0.0, 1.0);
        let theta = self.theta(s * self.cells as f64).to_degrees();
        let phi = self.phi.0 + t * (self.phi.1 - self.phi.0);
        (wrap_degrees(theta), phi)
    }
}

fn wrap_degrees(a: f64) -> f64 {
    let mut a = a % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

fn charts() -> [Chart; 6] {
    let mid = |first_cell, cells, u, v, face| Chart {
        first_cell,
        cells,
        phi: (PHI_BOTTOM, PHI_SPLIT),
        rows: MID_ROWS,
        u,
        v,
        face,
    };
    let top = |first_cell, v| Chart {
        first_cell,
        cells: 68,
        phi: (PHI_SPLIT, PHI_TOP),
        rows: TOP_ROWS,
        u: (0.1, 0.9),
        v,
        face: false,
    };
    [
        mid(-28, 56, (0.15, 0.85), (0.36, 0.99), true),
        mid(28, 24, (0.86, 0.99), (0.36, 0.99), false),
        mid(-52, 24, (0.01, 0.14), (0.36, 0.99), false),
        mid(52, 32, (0.35, 0.65), (0.10, 0.34), false),
        top(-34, (0.055, 0.09)),
        top(34, (0.01, 0.045)),
    ]
}

fn is_slit(chart: &Chart, cell: i32, row: i32) -> bool {
    if !chart.face {
        return false;
    }
    let j = chart.first_cell + cell;
    (row == EYE_ROW && ((6..10).contains(&j) || (-10..-6).contains(&j)))
        || (row == MOUTH_ROW && (-3..3).contains(&j))
}

/// The bundled game head: 8,520 vertices, 16,020 triangles, per-vertex UVs.
pub fn game_head() -> Mesh {
    let mut vertices = Vec::with_capacity(GAME_VERTEX_COUNT);
    let mut uvs = Vec::with_capacity(GAME_VERTEX_COUNT);
    let mut triangles = Vec::with_capacity(GAME_TRIANGLE_COUNT);
    for chart in charts() {
        let base = vertices.len();
        let stride = (chart.cells + 1) as usize;
        for r in 0..=chart.rows {
            let t = r as f64 / chart.rows as f64;
            let phi = (chart.phi.0 + t * (chart.phi.1 - chart.phi.0)).to_radians();
            for k in 0..=chart.cells {
                let s = k as f64 / chart.cells as f64;
                vertices.push(head_surface(chart.theta(k as f64), phi));
                uvs.push(Vector2::new(
                    chart.u.0 + s * (chart.u.1 - chart.u.0),
                    chart.v.0 + t * (chart.v.1 - chart.v.0),
                ));
            }
        }
        for r in 0..chart.rows {
            for k in 0..chart.cells {
                if is_slit(&chart, k, r) {
                    continue;
                }
                let i00 = base + r as usize * stride + k as usize;
                let (i10, i01) = (i00 + 1, i00 + stride);
                let i11 = i01 + 1;
                for tri in [[i00, i10, i11], [i00, i11, i01]] {
                    triangles.push(outward(&vertices, tri));
                }
            }
        }
    }
    Mesh {
        vertices,
        triangles,
        uvs: Some(uvs),
        normals: None,
    }
}

/// Orders a triangle so its normal points away from the head center.
fn outward(vertices: &[Vector3<f64>], tri: [usize; 3]) -> [usize; 3] {
    let [a, b, c] = tri.map(|i| vertices[i]);
    let n = (b - a).cross(&(c - a));
    if n.dot(&(a + b + c)) >= 0.0 {
        tri
    } else {
        [tri[0], tri[2], tri[1]]
    }
}

/// 68 facial landmarks as (theta, phi) in degrees, in the usual 68-point order.
pub fn landmark_angles() -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(DEFAULT_LANDMARK_COUNT);
    for i in 0..17 {
        let t = (i as f64 - 8.0) / 8.0;
        out.push((70.0 * t, -10.0 - 45.0 * (1.0 - t * t)));
    }
    for i in 0..5 {
        let s = i as f64 / 4.0;
        out.push((-40.0 + 32.0 * s, 20.0 + 4.0 * (PI * s).sin()));
    }
    for i in 0..5 {
        let s = i as f64 / 4.0;
        out.push((8.0 + 32.0 * s, 20.0 + 4.0 * (PI * (1.0 - s)).sin()));
    }
    for phi in [16.0, 10.0, 4.0, -2.0] {
        out.push((0.0, phi));
    }
    for (theta, phi) in [(-8.0, -6.0), (-4.0, -8.0), (0.0, -9.0), (4.0, -8.0), (8.0, -6.0)] {
        out.push((theta, phi));
    }
    for center in [-21.0, 21.0] {
        for a in [180.0f64, 120.0, 60.0, 0.0, -60.0, -120.0] {
            let a = a.to_radians();
            out.push((center + 7.0 * a.cos(), 13.0 + 2.2 * a.sin()));
        }
    }
    for k in 0..12 {
        let a = PI - k as f64 * PI / 6.0;
        out.push((12.0 * a.cos(), -24.0 + 5.5 * a.sin()));
    }
    for k in 0..8 {
        let a = PI - k as f64 * PI / 4.0;
        out.push((7.0 * a.cos(), -24.0 + 2.2 * a.sin()));
    }
    out
}

/// For each target point, the nearest vertex whose position no earlier
/// landmark has taken. Ties go to the lower index.
fn snap_landmarks(vertices: &[Vector3<f64>], targets: &[Vector3<f64>]) -> Vec<usize> {
    let mut taken: Vec<Vector3<f64>> = Vec::new();
    targets
        .iter()
        .map(|t| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (i, v) in vertices.iter().enumerate() {
                let d = (v - t).norm_squared();
                if d < best.0 && !taken.contains(v) {
                    best = (d, i);
                }
            }
            taken.push(vertices[best.1]);
            best.1
        })
        .collect()
}

/// Morphable-model grid: theta in [-80°, 80°] over 64 cells, phi over the mid band in 50 cells.
const MM_COLUMNS: usize = 64;
const MM_ROWS: usize = 50;

fn mm_grid_angles() -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity((MM_COLUMNS + 1) * (MM_ROWS + 1));
    for r in 0..=MM_ROWS {
        let phi = PHI_BOTTOM + (PHI_SPLIT - PHI_BOTTOM) * r as f64 / MM_ROWS as f64;
        for k in 0..=MM_COLUMNS {
            out.push((-80.0 + 160.0 * k as f64 / MM_COLUMNS as f64, phi));
        }
    }
    out
}

/// Similarity taking canonical head coordinates into the morphable-model frame.
pub fn morphable_frame() -> SimilarityTransform {
    SimilarityTransform {
        scale: MM_SCALE,
        rotation: nalgebra::Matrix3::identity(),
        translation: Vector3::from(MM_OFFSET),
    }
}

/// Canonical-frame morphable-model mesh (no UVs).
pub fn morphable_mesh() -> Mesh {
    let vertices = mm_grid_angles()
        .into_iter()
        .map(|(t, p)| head_surface(t.to_radians(), p.to_radians()))
        .collect::<Vec<_>>();
    let stride = MM_COLUMNS + 1;
    let mut triangles = Vec::with_capacity(2 * MM_COLUMNS * MM_ROWS);
    for r in 0..MM_ROWS {
        for k in 0..MM_COLUMNS {
            let i00 = r * stride + k;
            let (i10, i01) = (i00 + 1, i00 + stride);
            for tri in [[i00, i10, i01 + 1], [i00, i01 + 1, i01]] {
                triangles.push(outward(&vertices, tri));
            }
        }
    }
    Mesh {
        vertices,
        triangles,
        uvs: None,
        normals: None,
    }
}

/// Seeded morphable basis over [`morphable_mesh`], expressed in [`morphable_frame`].
pub fn morphable_basis(seed: u64) -> MorphableBasis {
    let angles = mm_grid_angles();
    let frame = morphable_frame();
    let canonical = morphable_mesh().vertices;
    let mean = DVector::from_iterator(
        3 * canonical.len(),
        canonical.iter().flat_map(|v| {
            let p = frame.apply(v);
            [p.x, p.y, p.z]
        }),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let column = |center: (f64, f64), width: f64, amplitude: f64, rng: &mut ChaCha8Rng| {
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let mut col = Vec::with_capacity(mean.len());
        for (t, p) in &angles {
            let d2 = (t - center.0).powi(2) + (p - center.1).powi(2);
            let w = amplitude * MM_SCALE * (-d2 / (2.0 * width * width)).exp();
            col.extend([w * dir.x, w * dir.y, w * dir.z]);
        }
        col
    };
    let mut identity = Vec::with_capacity(mean.len() * IDENTITY_DIM);
    for _ in 0..IDENTITY_DIM {
        let c = (rng.random_range(-70.0..70.0), rng.random_range(-60.0..50.0));
        let width = rng.random_range(15.0..40.0);
        identity.extend(column(c, width, 0.012, &mut rng));
    }
    let mut expression = Vec::with_capacity(mean.len() * EXPRESSION_DIM);
    for k in 0..EXPRESSION_DIM {
        // Alternate between mouth and eye/brow regions.
        let c = if k % 2 == 0 {
            (rng.random_range(-25.0..25.0), rng.random_range(-40.0..-12.0))
        } else {
            (rng.random_range(-35.0..35.0), rng.random_range(8.0..26.0))
        };
        let width = rng.random_range(6.0..16.0);
        expression.extend(column(c, width, 0.008, &mut rng));
    }
    let rows = mean.len();
    MorphableBasis::new(
        mean,
        DMatrix::from_vec(rows, IDENTITY_DIM, identity),
        DMatrix::from_vec(rows, EXPRESSION_DIM, expression),
    )
    .expect("generated basis is well formed")
}

/// Landmark pairs `[morphable index, game index]` for the procedural meshes.
pub fn landmark_correspondence() -> LandmarkCorrespondence {
    let targets: Vec<Vector3<f64>> = landmark_angles()
        .into_iter()
        .map(|(t, p)| head_surface(t.to_radians(), p.to_radians()))
        .collect();
    let mm = snap_landmarks(&morphable_mesh().vertices, &targets);
    let game = snap_landmarks(&game_head().vertices, &targets);
    LandmarkCorrespondence::new(mm.into_iter().zip(game).map(|(a, b)| [a, b]).collect())
        .expect("snapped landmarks are distinct")
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
}

/// Weight of a soft-edged ellipse: 1 inside, 0 beyond a 2° feather.
fn ellipse(theta: f64, phi: f64, center: (f64, f64), radius: (f64, f64)) -> f64 {
    let d = (((theta - center.0) / radius.0).powi(2) + ((phi - center.1) / radius.1).powi(2)).sqrt();
    let feather = 2.0 / radius.0.min(radius.1);
    1.0 - smoothstep(1.0 - feather, 1.0, d)
}

fn brow_weight(theta: f64, phi: f64) -> f64 {
    let t = theta.abs();
    if !(4.0..=44.0).contains(&t) {
        return 0.0;
    }
    let s = ((t - 8.0) / 32.0).clamp(0.0, 1.0);
    let center = 20.0 + 4.0 * (PI * s).sin();
    let along = 1.0 - smoothstep(38.0, 44.0, t) - (1.0 - smoothstep(4.0, 9.0, t));
    along.max(0.0) * (1.0 - smoothstep(0.6, 2.2, (phi - center).abs()))
}

const SKIN: [f64; 3] = [0.80, 0.62, 0.52];
const HAIR: [f64; 3] = [0.22, 0.15, 0.10];

fn hairline(theta: f64) -> f64 {
    40.0 + 8.0 * (theta.to_radians().cos() - 1.0)
}

fn hair_weight(theta: f64, phi: f64) -> f64 {
    let back = smoothstep(95.0, 105.0, theta.abs());
    let top = smoothstep(hairline(theta) - 2.0, hairline(theta) + 2.0, phi);
    back.max(top)
}

/// Feature weights at a surface angle: eyes, brows, lips, hair.
struct Features {
    eye: f64,
    iris: f64,
    brow: f64,
    lips: f64,
    hair: f64,
}

fn features(theta: f64, phi: f64) -> Features {
    let side = if theta < 0.0 { -21.0 } else { 21.0 };
    Features {
        eye: ellipse(theta, phi, (side, 13.0), (8.0, 3.2)),
        iris: ellipse(theta, phi, (side, 13.0), (2.8, 2.8)),
        brow: brow_weight(theta, phi),
        lips: ellipse(theta, phi, (0.0, -24.0), (13.0, 6.0)),
        hair: hair_weight(theta, phi),
    }
}

fn face_color(theta: f64, phi: f64) -> [f64; 3] {
    let shade = 0.03 * (phi.to_radians() * 1.5).cos() - 0.02 * (theta.to_radians()).sin().powi(2);
    let mut c = SKIN.map(|v| v + shade);
    let cheek = (-(((theta.abs() - 30.0) / 10.0).powi(2) + ((phi + 8.0) / 8.0).powi(2))).exp();
    c = mix(c, [0.86, 0.58, 0.50], 0.5 * cheek);
    let f = features(theta, phi);
    c = mix(c, [0.72, 0.36, 0.36], f.lips);
    c = mix(c, [0.92, 0.91, 0.88], f.eye);
    c = mix(c, [0.28, 0.20, 0.14], f.eye * f.iris);
    c = mix(c, [0.26, 0.18, 0.13], f.brow);
    c = mix(c, HAIR, f.hair);
    c.map(|v| v.clamp(0.0, 1.0))
}

/// Chart under a UV point, or the nearest chart for gutter texels.
fn chart_at(u: f64, v: f64) -> (Chart, bool) {
    let all = charts();
    if let Some(c) = all.iter().find(|c| c.contains_uv(u, v)) {
        return (*c, true);
    }
    let mut best = all[0];
    let mut dist = f64::INFINITY;
    for c in all {
        let d = c.uv_distance2(u, v);
        if d < dist {
            dist = d;
            best = c;
        }
    }
    (best, false)
}

fn texel_uv(x: usize, y: usize, size: usize) -> (f64, f64) {
    ((x as f64 + 0.5) / size as f64, 1.0 - (y as f64 + 0.5) / size as f64)
}

/// Procedural template texture with its UV skin mask. Colors and mask are
/// mirror-symmetric; gutters between charts take the nearest chart's colors.
pub fn template_texture(size: usize) -> (TextureMap, SkinMask) {
    let rows = par::map_range(size, |y| {
        let mut colors = Vec::with_capacity(size * 3);
        let mut mask = Vec::with_capacity(size);
        for x in 0..size {
            // Evaluate the left half only and mirror it, so symmetry is exact.
            let (u, v) = texel_uv(x.min(size - 1 - x), y, size);
            let (chart, inside) = chart_at(u, v);
            let (theta, phi) = chart.angles_deg(u, v);
            colors.extend(face_color(theta, phi));
            let f = features(theta, phi);
            let feature = f.eye.max(f.brow).max(f.lips).max(f.hair);
            mask.push(inside && chart.phi.0 < PHI_SPLIT && feature < 0.02 && phi > -62.0);
        }
        (colors, mask)
    });
    let mut data = Vec::with_capacity(size * size * 3);
    let mut bits = Vec::with_capacity(size * size);
    for (colors, mask) in rows {
        data.extend(colors);
        bits.extend(mask);
    }
    (
        TextureMap {
            rgb: Image::from_vec(size, size, 3, data).expect("texture size"),
            validity: None,
        },
        SkinMask {
            width: size,
            height: size,
            bits,
            space: MaskSpace::Uv,
        },
    )
}

/// Ground-truth face texture for the sample subject: the template with a
/// different skin tone and an asymmetric mole.
pub fn subject_texture(size: usize) -> TextureMap {
    let (mut tex, _) = template_texture(size);
    let mole = |theta: f64, phi: f64| ellipse(theta, phi, (-30.0, -14.0), (2.5, 2.5));
    for y in 0..size {
        for x in 0..size {
            let (u, v) = texel_uv(x, y, size);
            let (chart, _) = chart_at(u, v);
            let (theta, phi) = chart.angles_deg(u, v);
            let px = tex.rgb.pixel_mut(x, y);
            let hair = hair_weight(theta, phi);
            let shift = [-0.07, -0.06, -0.05].map(|d| d * (1.0 - hair));
            for c in 0..3 {
                px[c] = (px[c] + shift[c]).clamp(0.0, 1.0);
            }
            let m = mole(theta, phi);
            let mixed = mix([px[0], px[1], px[2]], [0.35, 0.22, 0.16], m);
            px.copy_from_slice(&mixed);
        }
    }
    tex
}

/// Deterministic 257-value coefficient vector for the sample subject.
pub fn sample_coefficients(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Vec::with_capacity(COEFFICIENT_DIM);
    c.extend((0..IDENTITY_DIM).map(|_| rng.random_range(-1.0..1.0)));
    c.extend((0..EXPRESSION_DIM).map(|_| rng.random_range(-0.8..0.8)));
    c.extend((0..TEXTURE_DIM).map(|_| rng.random_range(-0.5..0.5)));
    let pose = Pose {
        rotation: [PI + 0.06, 0.22, 0.02],
        translation: [0.0; 3],
    };
    let r = pose.rotation_matrix();
    let t = Vector3::new(0.0, 0.0, VIEW_DISTANCE * MM_SCALE) - r * Vector3::from(MM_OFFSET);
    c.extend(pose.rotation);
    c.extend([t.x, t.y, t.z]);
    c.extend((0..LIGHTING_SH_DIM).map(|k| if k % 9 == 0 { 0.8 } else { rng.random_range(-0.1..0.1) }));
    c
}

/// Lighting used to photograph the sample subject.
pub fn sample_lighting() -> PhongLighting {
    let l = Vector3::new(0.3, -0.4, -0.866).normalize();
    PhongLighting {
        light_direction: [l.x, l.y, l.z],
        ambient_rgb: [0.85; 3],
        diffuse_rgb: [0.15; 3],
        specular_rgb: [0.0; 3],
        ..PhongLighting::default()
    }
}

/// Kernel for the sample transfer. The automatic width with the near-zero
/// default regularization overshoots wildly away from a dense landmark set;
/// a little smoothing keeps the field bounded.
pub fn sample_kernel() -> RbfKernelConfig {
    RbfKernelConfig::gaussian(None, 1e-3)
}

pub const SAMPLE_BACKGROUND: [f64; 3] = [0.18, 0.22, 0.27];
pub const SAMPLE_SEED: u64 = 20;

/// Complete synthetic input set for the pipeline.
#[derive(Debug, Clone)]
pub struct SampleScene {
    pub game_mesh: Mesh,
    pub landmarks: LandmarkCorrespondence,
    pub basis: MorphableBasis,
    pub coefficients: Vec<f64>,
    pub template: TextureMap,
    pub template_mask: SkinMask,
    pub subject_texture: TextureMap,
    pub portrait: Image,
    pub portrait_mask: SkinMask,
    pub camera: PinholeCamera,
    pub lighting: PhongLighting,
}

/// Builds the sample inputs: the subject is the transferred game head textured
/// with [`subject_texture`] and rendered with the coefficient pose.
pub fn sample_scene(image_size: usize, uv_size: usize) -> Result<SampleScene> {
    let game_mesh = game_head();
    let landmarks = landmark_correspondence();
    let basis = morphable_basis(SAMPLE_SEED);
    let coefficients = sample_coefficients(SAMPLE_SEED);
    let split = crate::morphable::split_coefficients(&coefficients)?;
    let shape = synthesize_shape(&basis, &split.identity, &split.expression)?;
    let transfer = transfer_shape(
        &game_mesh,
        &landmarks,
        shape.as_slice(),
        &sample_kernel(),
    )?;
    let posed = transfer.mesh.transformed(&transfer.alignment.inverse());
    let pose = split.pose()?;
    let camera = PinholeCamera::centered(image_size, image_size);
    let lighting = sample_lighting();
    let (template, template_mask) = template_texture(uv_size);
    let subject = subject_texture(uv_size);
    let options = RenderOptions {
        clear_color: SAMPLE_BACKGROUND,
    };
    let photo = render(&posed, &subject, &pose, &camera, &lighting, &options)?;

    // Skin pixels: covered pixels whose surface point is skin in UV space.
    let mask_tex = TextureMap {
        rgb: Image::from_fn_rgb(uv_size, uv_size, |x, y| {
            [if template_mask.at(x, y) { 1.0 } else { 0.0 }; 3]
        }),
        validity: None,
    };
    let mask_render = render(&posed, &mask_tex, &pose, &camera, &PhongLighting::unlit(), &RenderOptions::default())?;
    let portrait_mask = SkinMask {
        width: image_size,
        height: image_size,
        bits: (0..image_size * image_size)
            .map(|i| photo.coverage[i] && mask_render.color.data()[i * 3] > 0.5)
            .collect(),
        space: MaskSpace::Image,
    };
    Ok(SampleScene {
        game_mesh,
        landmarks,
        basis,
        coefficients,
        template,
        template_mask,
        subject_texture: subject,
        portrait: photo.color,
        portrait_mask,
        camera,
        lighting,
    })
}

/// UV coordinate of a surface angle on the game head's charts, if any chart covers it.
pub fn surface_uv(theta_deg: f64, phi_deg: f64) -> Option<Vector2<f64>> {
    let cell = theta_deg.to_radians() / cell_angle();
    for chart in charts() {
        for shift in [0.0, COLUMNS as f64, -(COLUMNS as f64)] {
            let k = cell + shift - chart.first_cell as f64;
            let t = (phi_deg - chart.phi.0) / (chart.phi.1 - chart.phi.0);
            if (0.0..=chart.cells as f64).contains(&k) && (0.0..=1.0).contains(&t) {
                let s = k / chart.cells as f64;
                return Some(Vector2::new(
                    chart.u.0 + s * (chart.u.1 - chart.u.0),
                    chart.v.0 + t * (chart.v.1 - chart.v.0),
                ));
            }
        }
    }
    None
}

/// Texel under a surface angle for a square texture of `size`.
pub fn surface_texel(theta_deg: f64, phi_deg: f64, size: usize) -> Option<(f64, f64)> {
    surface_uv(theta_deg, phi_deg).map(|uv| uv_to_texel(uv.x, uv.y, size, size))
}
