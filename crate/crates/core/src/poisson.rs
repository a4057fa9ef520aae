//! Gradient-domain (Poisson) blending solved per channel by Jacobi-preconditioned
//! conjugate gradient on the 5-point Laplacian.
//!
//! Inside the region the output satisfies `Δout = Δsource`; on the ring of
//! texels just outside it the output equals the target. The solver works on the
//! correction `out − source`, whose right-hand side only involves the boundary
//! mismatch `target − source`, so identical inputs need zero iterations.
//! The reported residual is the full system's, recomputed from scratch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, MaskSpace, SkinMask, TextureMap};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonOptions {
    /// Stop once the residual is within `tolerance` relative to both the full
    /// right-hand side and the correction's.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions {
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

/// Convergence record of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSolve {
    pub iterations: usize,
    /// `‖A·x − b‖ / ‖b‖` of the unclamped solution; 0 when `b = 0`.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonReport {
    pub unknowns: usize,
    pub channels: Vec<ChannelSolve>,
}

impl PoissonReport {
    pub fn max_relative_residual(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.relative_residual)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct PoissonBlend {
    /// Blended texture, clamped to [0, 1]. Keeps the target's validity mask.
    pub texture: TextureMap,
    /// Unclamped solution, useful for checking against other solvers.
    pub raw: Image,
    pub report: PoissonReport,
}

const OUTSIDE: u32 = u32::MAX;

/// Region unknowns and their 4-neighborhoods.
struct Stencil {
    width: usize,
    /// Texel index of each unknown.
    texel: Vec<usize>,
    /// Unknown index of each neighbor (left, right, up, down), or [`OUTSIDE`].
    neighbor: Vec<[u32; 4]>,
}

impl Stencil {
    fn new(region: &SkinMask) -> Result<Self> {
        let (w, h) = (region.width, region.height);
        let mut index = vec![OUTSIDE; w * h];
        let mut texel = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if region.at(x, y) {
                    if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                        return Err(Error::validation(format!(
                            "blend region touches the texture border at ({x}, {y})"
                        )));
                    }
                    index[y * w + x] = texel.len() as u32;
                    texel.push(y * w + x);
                }
            }
        }
        let neighbor = texel
            .iter()
            .map(|&t| [t - 1, t + 1, t - w, t + w].map(|q| index[q]))
            .collect();
        Ok(Stencil {
            width: w,
            texel,
            neighbor,
        })
    }

    fn neighbor_texels(&self, t: usize) -> [usize; 4] {
        [t - 1, t + 1, t - self.width, t + self.width]
    }

    /// `y = A·x` with `A` the negated 5-point Laplacian restricted to the region.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nb = &self.neighbor;
        par::for_each_row(y, 1024, |chunk, out| {
            let base = chunk * 1024;
            for (k, o) in out.iter_mut().enumerate() {
                let i = base + k;
                let mut v = 4.0 * x[i];
                for &q in &nb[i] {
                    if q != OUTSIDE {
                        v -= x[q as usize];
                    }
                }
                *o = v;
            }
        });
    }
}

/// Blends `source` into `target` over `region`.
pub fn poisson_blend(
    source: &TextureMap,
    target: &TextureMap,
    region: &SkinMask,
    options: &PoissonOptions,
) -> Result<PoissonBlend> {
    source.rgb.check_same_shape(&target.rgb, "poisson_blend")?;
    region.check_space(MaskSpace::Uv, "poisson_blend")?;
    region.check_fits(&target.rgb, "poisson_blend")?;
    let stencil = Stencil::new(region)?;
    let channels = source.rgb.channels();

    let solves = par::map_range(channels, |c| solve_channel(&stencil, &source.rgb, &target.rgb, c, options));

    let mut raw = target.rgb.clone();
    let mut report = PoissonReport {
        unknowns: stencil.texel.len(),
        channels: Vec::with_capacity(channels),
    };
    for (c, solved) in solves.into_iter().enumerate() {
        let (values, info) = solved?;
        for (k, &t) in stencil.texel.iter().enumerate() {
            raw.data_mut()[t * channels + c] = values[k];
        }
        report.channels.push(info);
    }
    let mut out = raw.clone();
    out.clamp_unit();
    Ok(PoissonBlend {
        texture: TextureMap {
            rgb: out,
            validity: target.validity.clone(),
        },
        raw,
        report,
    })
}

fn solve_channel(
    stencil: &Stencil,
    source: &Image,
    target: &Image,
    c: usize,
    options: &PoissonOptions,
) -> Result<(Vec<f64>, ChannelSolve)> {
    let ch = source.channels();
    let s = |t: usize| source.data()[t * ch + c];
    let g = |t: usize| target.data()[t * ch + c];
    let n = stencil.texel.len();

    // Full system right-hand side b and the correction right-hand side.
    let mut b = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for (k, &t) in stencil.texel.iter().enumerate() {
        let nb = stencil.neighbor_texels(t);
        for (j, &q) in nb.iter().enumerate() {
            b[k] += s(t) - s(q);
            if stencil.neighbor[k][j] == OUTSIDE {
                b[k] += g(q);
                rhs[k] += g(q) - s(q);
            }
        }
    }
    let b_norm = par::dot(&b, &b).sqrt();
    let src: Vec<f64> = stencil.texel.iter().map(|&t| s(t)).collect();
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            ChannelSolve {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    // Both systems share the residual, so stopping relative to the smaller
    // right-hand side meets the tolerance for each of them.
    let threshold = options.tolerance * par::dot(&rhs, &rhs).sqrt().min(b_norm);
    let mut x = vec![0.0; n];
    let mut r = rhs;
    let mut iterations = 0;
    if threshold > 0.0 {
        // Jacobi preconditioner: the diagonal is 4 everywhere.
        let mut z: Vec<f64> = r.iter().map(|v| v / 4.0).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = par::dot(&r, &z);
        loop {
            if iterations >= options.max_iterations {
                let res = par::dot(&r, &r).sqrt() / b_norm;
                return Err(Error::Solver(format!(
                    "poisson CG did not converge in {} iterations (relative residual {res:.3e})",
                    options.max_iterations
                )));
            }
            stencil.apply(&p, &mut ap);
            let alpha = rz / par::dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if par::dot(&r, &r).sqrt() <= threshold {
                break;
            }
            for i in 0..n {
                z[i] = r[i] / 4.0;
            }
            let rz_next = par::dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    let values: Vec<f64> = src.iter().zip(&x).map(|(s, c)| s + c).collect();
    // Residual of the full system, recomputed from scratch.
    let mut av = vec![0.0; n];
    stencil.apply(&values, &mut av);
    let res2 = par::sum_range(n, |i| (av[i] - b[i]) * (av[i] - b[i]));
    Ok((
        values,
        ChannelSolve {
            iterations,
            relative_residual: res2.sqrt() / b_norm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_texture(w: usize, h: usize, seed: u64) -> TextureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.random()).collect();
        TextureMap::new(Image::from_vec(w, h, 3, data).unwrap()).unwrap()
    }

    fn interior(w: usize, h: usize) -> SkinMask {
        SkinMask::from_fn(w, h, MaskSpace::Uv, |x, y| x > 0 && y > 0 && x + 1 < w && y + 1 < h)
    }

    #[test]
    fn identical_inputs_return_target_exactly() {
        let tex = random_texture(16, 12, 1);
        let out = poisson_blend(&tex, &tex, &interior(16, 12), &PoissonOptions::default()).unwrap();
        assert_eq!(out.texture.rgb, tex.rgb);
        assert!(out.report.channels.iter().all(|c| c.iterations == 0));
    }

    #[test]
    fn constant_inputs_give_target_constant() {
        let source = TextureMap::constant(12, [0.2, 0.9, 0.5]);
        let target = TextureMap::constant(12, [0.6, 0.3, 0.1]);
        let out = poisson_blend(&source, &target, &interior(12, 12), &PoissonOptions::default()).unwrap();
        for (a, b) in out.texture.rgb.data().iter().zip(target.rgb.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(out.report.max_relative_residual() <= 1e-6);
    }

    #[test]
    fn border_region_is_rejected() {
        let tex = TextureMap::constant(8, [0.5; 3]);
        let full = SkinMask::full(8, 8, MaskSpace::Uv);
        assert!(matches!(
            poisson_blend(&tex, &tex, &full, &PoissonOptions::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let source = random_texture(32, 32, 2);
        let target = TextureMap::constant(32, [0.5; 3]);
        let opts = PoissonOptions {
            tolerance: 1e-12,
            max_iterations: 2,
        };
        match poisson_blend(&source, &target, &interior(32, 32), &opts) {
            Err(Error::Solver(msg)) => assert!(msg.contains("residual")),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_mask_space_is_rejected() {
        let tex = TextureMap::constant(8, [0.5; 3]);
        let mut m = interior(8, 8);
        m.space = MaskSpace::Image;
        assert!(poisson_blend(&tex, &tex, &m, &PoissonOptions::default()).is_err());
    }
}
