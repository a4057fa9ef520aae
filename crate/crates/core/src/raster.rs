//! Hard z-buffer rasterization.
//!
//! Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`. Shared edges
//! follow the top-left fill rule, back-facing triangles are culled, triangles
//! crossing the near plane are skipped, and depth ties go to the lower triangle
//! index. Rows are rasterized independently, so output does not depend on the
//! thread count.

use nalgebra::{Vector2, Vector3};

use crate::camera::{PinholeCamera, Pose, ViewTransform, NEAR_PLANE};
use crate::image::Image;
use crate::mesh::Mesh;
use crate::par;

/// `triangle_id` value for uncovered pixels.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Per-pixel geometry buffers plus the shaded color.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub width: usize,
    pub height: usize,
    pub color: Image,
    /// Camera-space z of the visible surface; `f64::INFINITY` when uncovered.
    pub depth: Vec<f64>,
    pub coverage: Vec<bool>,
    pub triangle_id: Vec<u32>,
    /// Perspective-correct barycentric weights in the triangle's vertex order.
    pub barycentric: Vec<[f64; 3]>,
}

impl FrameBuffers {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Pixels that are covered but have an uncovered 4-neighbor or 8-neighbor.
    pub fn coverage_boundary(&self) -> Vec<bool> {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![false; self.pixel_count()];
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if !self.coverage[i] {
                    continue;
                }
                'n: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h || !self.coverage[(ny * w + nx) as usize] {
                            out[i] = true;
                            break 'n;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Mesh vertices moved into camera space and projected.
#[derive(Debug, Clone)]
pub struct ProjectedMesh {
    pub camera_vertices: Vec<Vector3<f64>>,
    /// Pixel coordinates; `None` for vertices behind the near plane.
    pub screen: Vec<Option<Vector2<f64>>>,
}

impl ProjectedMesh {
    pub fn new(mesh: &Mesh, pose: &Pose, camera: &PinholeCamera) -> Self {
        let view = ViewTransform::from(pose);
        let camera_vertices: Vec<Vector3<f64>> =
            mesh.vertices.iter().map(|v| view.point(v)).collect();
        let screen = camera_vertices.iter().map(|p| camera.project(p)).collect();
        ProjectedMesh {
            camera_vertices,
            screen,
        }
    }

    /// Camera-space face normal (unnormalized) of a triangle.
    pub fn face_normal(&self, tri: &[usize; 3]) -> Vector3<f64> {
        let [a, b, c] = tri.map(|i| self.camera_vertices[i]);
        (b - a).cross(&(c - a))
    }

    /// True when the triangle faces the camera at the origin.
    pub fn is_front_facing(&self, tri: &[usize; 3]) -> bool {
        self.face_normal(tri).dot(&(-self.camera_vertices[tri[0]])) > 0.0
    }

    /// Perspective-correct depth of `tri` at a screen point, if the triangle projects.
    pub fn depth_at(&self, tri: &[usize; 3], point: Vector2<f64>) -> Option<f64> {
        let s = [self.screen[tri[0]]?, self.screen[tri[1]]?, self.screen[tri[2]]?];
        let area = edge(s[0], s[1], s[2]);
        if area == 0.0 {
            return None;
        }
        let l = [
            edge(s[1], s[2], point) / area,
            edge(s[2], s[0], point) / area,
            edge(s[0], s[1], point) / area,
        ];
        let inv: f64 = (0..3)
            .map(|k| l[k] / self.camera_vertices[tri[k]].z)
            .sum();
        (inv > 0.0).then(|| 1.0 / inv)
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

struct TriangleSetup {
    id: u32,
    /// Screen vertices ordered for a positive edge-function area.
    s: [Vector2<f64>; 3],
    /// Original vertex slot of each ordered vertex.
    slot: [usize; 3],
    inv_z: [f64; 3],
    area: f64,
    top_left: [bool; 3],
    x_range: (usize, usize),
}

impl TriangleSetup {
    fn new(id: usize, tri: &[usize; 3], proj: &ProjectedMesh, width: usize) -> Option<(Self, usize, usize)> {
        if !proj.is_front_facing(tri) {
            return None;
        }
        let mut s = [proj.screen[tri[0]]?, proj.screen[tri[1]]?, proj.screen[tri[2]]?];
        let mut slot = [0, 1, 2];
        let mut area = edge(s[0], s[1], s[2]);
        if area == 0.0 || !area.is_finite() {
            return None;
        }
        if area < 0.0 {
            s.swap(1, 2);
            slot.swap(1, 2);
            area = -area;
        }
        let inv_z = slot.map(|k| 1.0 / proj.camera_vertices[tri[k]].z);
        let min_x = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0);
        let x1 = (max_x - 0.5).floor();
        if x1 < 0.0 || x0 >= width as f64 || x0 > x1 {
            return None;
        }
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor();
        if y1 < 0.0 || y0 > y1 {
            return None;
        }
        let top_left = [
            is_top_left(s[1], s[2]),
            is_top_left(s[2], s[0]),
            is_top_left(s[0], s[1]),
        ];
        Some((
            TriangleSetup {
                id: id as u32,
                s,
                slot,
                inv_z,
                area,
                top_left,
                x_range: (x0 as usize, (x1 as usize).min(width - 1)),
            },
            y0 as usize,
            y1 as usize,
        ))
    }
}

struct RowSamples {
    depth: Vec<f64>,
    triangle_id: Vec<u32>,
    barycentric: Vec<[f64; 3]>,
}

/// Rasterizes `mesh` seen through `pose` and `camera` at the camera's image size.
///
/// The color buffer is left black; see [`crate::render::shade`].
pub fn rasterize(mesh: &Mesh, pose: &Pose, camera: &PinholeCamera) -> FrameBuffers {
    let proj = ProjectedMesh::new(mesh, pose, camera);
    rasterize_projected(mesh, &proj, camera)
}

pub fn rasterize_projected(mesh: &Mesh, proj: &ProjectedMesh, camera: &PinholeCamera) -> FrameBuffers {
    let (width, height) = (camera.width(), camera.height());
    let mut setups = Vec::new();
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); height];
    for (id, tri) in mesh.triangles.iter().enumerate() {
        if let Some((setup, y0, y1)) = TriangleSetup::new(id, tri, proj, width) {
            let k = setups.len() as u32;
            for bin in bins.iter_mut().take(y1.min(height.saturating_sub(1)) + 1).skip(y0) {
                bin.push(k);
            }
            setups.push(setup);
        }
    }

    let rows = par::map_range(height, |y| {
        let mut row = RowSamples {
            depth: vec![f64::INFINITY; width],
            triangle_id: vec![NO_TRIANGLE; width],
            barycentric: vec![[0.0; 3]; width],
        };
        let py = y as f64 + 0.5;
        for &k in &bins[y] {
            let t = &setups[k as usize];
            for x in t.x_range.0..=t.x_range.1 {
                let p = Vector2::new(x as f64 + 0.5, py);
                let e = [edge(t.s[1], t.s[2], p), edge(t.s[2], t.s[0], p), edge(t.s[0], t.s[1], p)];
                let inside = (0..3).all(|i| e[i] > 0.0 || (e[i] == 0.0 && t.top_left[i]));
                if !inside {
                    continue;
                }
                let l = e.map(|v| v / t.area);
                let wz = [l[0] * t.inv_z[0], l[1] * t.inv_z[1], l[2] * t.inv_z[2]];
                let inv = wz[0] + wz[1] + wz[2];
                let z = 1.0 / inv;
                if z < NEAR_PLANE || z >= row.depth[x] {
                    continue;
                }
                let mut bary = [0.0; 3];
                for i in 0..3 {
                    bary[t.slot[i]] = wz[i] / inv;
                }
                row.depth[x] = z;
                row.triangle_id[x] = t.id;
                row.barycentric[x] = bary;
            }
        }
        row
    });

    let n = width * height;
    let mut depth = Vec::with_capacity(n);
    let mut triangle_id = Vec::with_capacity(n);
    let mut barycentric = Vec::with_capacity(n);
    for row in rows {
        depth.extend(row.depth);
        triangle_id.extend(row.triangle_id);
        barycentric.extend(row.barycentric);
    }
    let coverage = triangle_id.iter().map(|&t| t != NO_TRIANGLE).collect();
    FrameBuffers {
        width,
        height,
        color: Image::new(width, height, 3),
        depth,
        coverage,
        triangle_id,
        barycentric,
    }
}
