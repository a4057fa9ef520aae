//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every check uses its own oracle rather
//! than the library's internals.

use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use charface::camera::{PinholeCamera, Pose};
use charface::image::{Image, MaskSpace, SkinMask, TextureMap};
use charface::loss::{
    adversarial_discriminator_loss, adversarial_generator_loss, perceptual_loss, pixel_loss_image,
    pixel_loss_texture, psnr, skin_std_loss, ssim, style_loss, symmetry_loss, total_generator_loss, ConvExtractor,
    ConvLayer, FeatureExtractor, LossComponents, LossWeights,
};
use charface::mesh::{load_obj_file, LandmarkCorrespondence, Mesh};
use charface::morphable::{split_coefficients, synthesize_shape, COEFFICIENT_DIM};
use charface::pipeline::{PipelineConfig, DEFAULT_UV_SIZE};
use charface::poisson::{poisson_blend, PoissonOptions};
use charface::render::{render, render_backward, PhongLighting, RenderOptions};
use charface::template::{
    morphable_basis, sample_coefficients, sample_kernel, sample_scene, SampleScene, SAMPLE_SEED,
};
use charface::transfer::{evaluate_rbf, solve_rbf, transfer_shape, KernelKind, RbfKernelConfig};
use charface::uv::{create_coarse_texture, unwrap_detailed};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("RBF exactness", rbf_exactness),
        ("shape-transfer landmark snap", landmark_snap),
        ("Poisson oracle", poisson_oracle),
        ("renderer gradient check", renderer_gradients),
        ("round trip", round_trip),
        ("loss-formula oracles", loss_oracles),
        ("published constants", published_constants),
        ("metrics sanity", metrics_sanity),
        ("end-to-end determinism", determinism),
    ];
    let mut failures = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail} [{secs:.1}s]", n + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {} FAIL {name}: {why} [{secs:.1}s]", n + 1);
            }
        }
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}

fn asset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name)
}

fn random_point(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
    Image::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------- 1

fn rbf_exactness() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(4..=68);
        let centers: Vec<_> = (0..m).map(|_| random_point(&mut rng, 1.0)).collect();
        let offsets: Vec<_> = (0..m).map(|_| random_point(&mut rng, 0.2)).collect();
        let d = solve_rbf(&centers, &offsets, &RbfKernelConfig::exact(KernelKind::Gaussian))
            .map_err(|e| format!("instance {seed}: {e}"))?;
        let scale = offsets.iter().map(|o| o.norm()).fold(0.0, f64::max);
        for (c, o) in centers.iter().zip(&offsets) {
            worst = worst.max((evaluate_rbf(&d, c) - o).norm() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-6, "worst relative miss {worst:.2e}");
    ensure!(secs < 5.0, "took {secs:.2}s");
    Ok(format!("100 instances, worst relative miss {worst:.1e}, {secs:.2}s"))
}

// ---------------------------------------------------------------- 2

fn landmark_snap() -> Check {
    let game = load_obj_file(&asset("game_head.obj")).map_err(|e| e.to_string())?;
    let lm = LandmarkCorrespondence::load(&asset("landmarks.json")).map_err(|e| e.to_string())?;
    ensure!(lm.count() == 68, "{} landmark pairs", lm.count());
    let basis = morphable_basis(SAMPLE_SEED);
    let c = split_coefficients(&sample_coefficients(SAMPLE_SEED)).unwrap();
    let shape = synthesize_shape(&basis, &c.identity, &c.expression).unwrap();
    let out = transfer_shape(&game, &lm, shape.as_slice(), &RbfKernelConfig::exact(KernelKind::Gaussian))
        .map_err(|e| e.to_string())?;
    let diameter = game.diameter();
    let mut worst: f64 = 0.0;
    for &[s, t] in &lm.pairs {
        let target = out.alignment.apply(&Vector3::new(shape[3 * s], shape[3 * s + 1], shape[3 * s + 2]));
        worst = worst.max((out.mesh.vertices[t] - target).norm() / diameter);
    }
    ensure!(worst <= 1e-5, "worst landmark miss {worst:.2e} of the diameter");
    ensure!(out.mesh.triangles == game.triangles, "triangles changed");
    ensure!(out.mesh.uvs == game.uvs, "uvs changed");
    Ok(format!("worst miss {worst:.1e} × diameter, topology unchanged"))
}

// ---------------------------------------------------------------- 3

/// Gauss–Jordan on the explicit region system.
fn dense_poisson(source: &Image, target: &Image, region: &SkinMask, c: usize) -> Vec<f64> {
    let n = region.width;
    let mut index = vec![usize::MAX; n * n];
    let mut unknowns = Vec::new();
    for i in 0..n * n {
        if region.bits[i] {
            index[i] = unknowns.len();
            unknowns.push(i);
        }
    }
    let m = unknowns.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (row, &p) in unknowns.iter().enumerate() {
        let (x, y) = (p % n, p / n);
        a[row][row] = 4.0;
        for (qx, qy) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
            let q = qy * n + qx;
            a[row][m] += source.get(x, y, c) - source.get(qx, qy, c);
            if region.bits[q] {
                a[row][index[q]] -= 1.0;
            } else {
                a[row][m] += target.get(qx, qy, c);
            }
        }
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..=m {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut out: Vec<f64> = (0..n * n).map(|i| target.data()[3 * i + c]).collect();
    for (row, &p) in unknowns.iter().enumerate() {
        out[p] = a[row][m] / a[row][row];
    }
    out
}

fn poisson_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_res): (f64, f64) = (0.0, 0.0);
    for instance in 0..20 {
        let source = TextureMap::new(random_image(&mut rng, 8, 8, 3)).unwrap();
        let target = TextureMap::new(random_image(&mut rng, 8, 8, 3)).unwrap();
        let mut bits = vec![false; 64];
        for y in 1..7 {
            for x in 1..7 {
                bits[y * 8 + x] = rng.random_bool(0.6);
            }
        }
        bits[4 * 8 + 4] = true;
        let region = SkinMask::new(8, 8, bits, MaskSpace::Uv).unwrap();
        let out = poisson_blend(&source, &target, &region, &PoissonOptions::default())
            .map_err(|e| format!("instance {instance}: {e}"))?;
        worst_res = worst_res.max(out.report.max_relative_residual());
        for c in 0..3 {
            let oracle = dense_poisson(&source.rgb, &target.rgb, &region, c);
            for (i, o) in oracle.iter().enumerate() {
                worst = worst.max((out.raw.data()[3 * i + c] - o).abs());
            }
        }
    }
    ensure!(worst <= 1e-6, "max-abs deviation from the dense solve {worst:.2e}");
    ensure!(worst_res <= 1e-6, "residual diagnostic {worst_res:.2e}");
    Ok(format!("20 instances, max-abs {worst:.1e}, residual ≤ {worst_res:.1e}"))
}

// ---------------------------------------------------------------- 4

struct Scene {
    mesh: Mesh,
    texture: TextureMap,
    lighting: PhongLighting,
    pose: Pose,
    camera: PinholeCamera,
    upstream: Image,
}

const GREY: RenderOptions = RenderOptions { clear_color: [0.5; 3] };

/// Bumpy 5×5-cell sheet (50 triangles) facing the camera.
fn gradient_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = 5;
    let (mut vertices, mut uvs, mut triangles) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..=cells {
        for i in 0..=cells {
            let (u, v) = (i as f64 / cells as f64, j as f64 / cells as f64);
            vertices.push(Vector3::new(u - 0.5, 0.5 - v, rng.random_range(-0.06..0.06)));
            uvs.push(Vector2::new(u, 1.0 - v));
        }
    }
    for j in 0..cells {
        for i in 0..cells {
            let a = j * (cells + 1) + i;
            triangles.push([a, a + 1, a + cells + 1]);
            triangles.push([a + 1, a + cells + 2, a + cells + 1]);
        }
    }
    let mesh = Mesh::new(vertices, triangles, Some(uvs)).unwrap();
    let texture = TextureMap::new(Image::from_vec(64, 64, 3, (0..64 * 64 * 3).map(|_| rng.random_range(0.2..0.8)).collect()).unwrap()).unwrap();
    let l = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), -1.0).normalize();
    let lighting = PhongLighting {
        light_direction: [l.x, l.y, l.z],
        ambient_rgb: [0, 1, 2].map(|_| rng.random_range(0.1..0.3)),
        diffuse_rgb: [0, 1, 2].map(|_| rng.random_range(0.2..0.4)),
        specular_rgb: [0, 1, 2].map(|_| rng.random_range(0.0..0.2)),
        shininess: rng.random_range(4.0..24.0),
    };
    let pose = Pose::new(
        [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.3..0.3)],
        [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 2.5],
    )
    .unwrap();
    let camera = PinholeCamera::centered(40, 40);
    let frame = render(&mesh, &texture, &pose, &camera, &lighting, &GREY).unwrap();
    let boundary = frame.coverage_boundary();
    let mut upstream = Image::new(40, 40, 3);
    for i in 0..1600 {
        if frame.coverage[i] && !boundary[i] {
            for c in 0..3 {
                upstream.data_mut()[3 * i + c] = rng.random_range(-1.0..1.0);
            }
        }
    }
    Scene {
        mesh,
        texture,
        lighting,
        pose,
        camera,
        upstream,
    }
}

fn scene_objective(s: &Scene, texture: &TextureMap, lighting: &PhongLighting) -> f64 {
    let frame = render(&s.mesh, texture, &s.pose, &s.camera, lighting, &GREY).unwrap();
    frame.color.data().iter().zip(s.upstream.data()).map(|(a, b)| a * b).sum()
}

fn renderer_gradients() -> Check {
    const H: f64 = 1e-4;
    let start = Instant::now();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, numeric: f64, what: String| -> Result<(), String> {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max(err);
        checked += 1;
        ensure!(err <= 1e-4, "{what}: analytic {analytic:e} vs numeric {numeric:e}");
        Ok(())
    };
    for seed in 0..10 {
        let s = gradient_scene(seed);
        let frame = render(&s.mesh, &s.texture, &s.pose, &s.camera, &s.lighting, &GREY).unwrap();
        ensure!(
            frame.color.data().iter().all(|v| *v > 0.0 && *v < 1.0),
            "scene {seed} clamps; the check needs an unclamped scene"
        );
        let g = render_backward(&frame, &s.mesh, &s.pose, &s.camera, &s.texture, &s.lighting, &s.upstream)
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let touched: Vec<usize> = (0..g.d_texture.data().len()).filter(|&i| g.d_texture.data()[i] != 0.0).collect();
        ensure!(!touched.is_empty(), "scene {seed} has no texture gradient");
        let mut picks: Vec<usize> = (0..40).map(|_| touched[rng.random_range(0..touched.len())]).collect();
        picks.extend((0..8).map(|_| rng.random_range(0..g.d_texture.data().len())));
        for i in picks {
            let f = |h: f64| {
                let mut t = s.texture.clone();
                t.rgb.data_mut()[i] += h;
                scene_objective(&s, &t, &s.lighting)
            };
            compare(g.d_texture.data()[i], (f(H) - f(-H)) / (2.0 * H), format!("scene {seed} texel {i}"))?;
        }
        let lit = |edit: &dyn Fn(&mut PhongLighting, f64)| {
            let f = |h: f64| {
                let mut l = s.lighting;
                edit(&mut l, h);
                scene_objective(&s, &s.texture, &l)
            };
            (f(H) - f(-H)) / (2.0 * H)
        };
        for c in 0..3 {
            compare(g.d_ambient[c], lit(&|l, h| l.ambient_rgb[c] += h), format!("scene {seed} ambient {c}"))?;
            compare(g.d_diffuse[c], lit(&|l, h| l.diffuse_rgb[c] += h), format!("scene {seed} diffuse {c}"))?;
            compare(g.d_specular[c], lit(&|l, h| l.specular_rgb[c] += h), format!("scene {seed} specular {c}"))?;
            compare(
                g.d_light_direction[c],
                lit(&|l, h| l.light_direction[c] += h),
                format!("scene {seed} light direction {c}"),
            )?;
        }
        compare(g.d_shininess, lit(&|l, h| l.shininess += h), format!("scene {seed} shininess"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("10 scenes, {checked} partials, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

fn masked_psnr(a: &Image, b: &Image, keep: impl Fn(usize) -> bool) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.pixel_count() {
        if keep(i) {
            for c in 0..3 {
                sum += (a.data()[3 * i + c] - b.data()[3 * i + c]).powi(2);
            }
            n += 3;
        }
    }
    10.0 * (n as f64 / sum).log10()
}

fn posed_sample(scene: &SampleScene) -> (Mesh, Pose) {
    let c = split_coefficients(&scene.coefficients).unwrap();
    let shape = synthesize_shape(&scene.basis, &c.identity, &c.expression).unwrap();
    let t = transfer_shape(&scene.game_mesh, &scene.landmarks, shape.as_slice(), &sample_kernel()).unwrap();
    (t.mesh.transformed(&t.alignment.inverse()), c.pose().unwrap())
}

fn unlit(scene: &SampleScene, mesh: &Mesh, pose: &Pose, texture: &TextureMap) -> Image {
    render(mesh, texture, pose, &scene.camera, &PhongLighting::unlit(), &RenderOptions::default())
        .unwrap()
        .color
}

fn round_trip() -> Check {
    let scene = sample_scene(512, 256).map_err(|e| e.to_string())?;
    let (mesh, pose) = posed_sample(&scene);
    let photo = unlit(&scene, &mesh, &pose, &scene.subject_texture);
    let u = unwrap_detailed(&photo, &mesh, &pose, &scene.camera, 256).map_err(|e| e.to_string())?;
    let valid = u.texture.validity.clone().unwrap();
    let unwrap_db = masked_psnr(&u.texture.rgb, &scene.subject_texture.rgb, |i| valid[i]);
    ensure!(unwrap_db > 30.0, "unwrap PSNR {unwrap_db:.2} dB on {} valid texels", u.texture.valid_count());

    let scene = sample_scene(256, 256).map_err(|e| e.to_string())?;
    let (mesh, pose) = posed_sample(&scene);
    let photo = unlit(&scene, &mesh, &pose, &scene.subject_texture);
    let coarse = create_coarse_texture(
        &photo,
        &scene.portrait_mask,
        &mesh,
        &pose,
        &scene.camera,
        &scene.template,
        &scene.template_mask,
        256,
        &PoissonOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let again = unlit(&scene, &mesh, &pose, &coarse.texture);
    let loop_db = masked_psnr(&again, &photo, |i| scene.portrait_mask.bits[i]);
    ensure!(loop_db > 28.0, "closed-loop PSNR {loop_db:.2} dB on the skin region");
    Ok(format!(
        "unwrap {unwrap_db:.1} dB on {} texels, closed loop {loop_db:.1} dB on {} skin pixels",
        u.texture.valid_count(),
        scene.portrait_mask.count()
    ))
}

// ---------------------------------------------------------------- 6

/// `[channel][y][x]` tensor used by the oracles.
type Tensor = Vec<Vec<Vec<f64>>>;

fn tensor(img: &Image) -> Tensor {
    (0..img.channels())
        .map(|c| (0..img.height()).map(|y| (0..img.width()).map(|x| img.get(x, y, c)).collect()).collect())
        .collect()
}

fn conv_oracle(layer: &ConvLayer, input: &Tensor) -> Tensor {
    let (h, w) = (input[0].len() as isize, input[0][0].len() as isize);
    let (oh, ow) = ((h + 1) / 2, (w + 1) / 2);
    (0..layer.out_channels)
        .map(|o| {
            (0..oh)
                .map(|oy| {
                    (0..ow)
                        .map(|ox| {
                            let mut v = layer.bias[o];
                            for (i, plane) in input.iter().enumerate() {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let (y, x) = (2 * oy + ky as isize - 1, 2 * ox + kx as isize - 1);
                                        if y >= 0 && y < h && x >= 0 && x < w {
                                            v += layer.weights[((o * layer.in_channels + i) * 3 + ky) * 3 + kx]
                                                * plane[y as usize][x as usize];
                                        }
                                    }
                                }
                            }
                            v.max(0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn features_oracle(fx: &ConvExtractor, img: &Image) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = Vec::new();
    for layer in &fx.layers {
        let next = conv_oracle(layer, out.last().unwrap_or(&tensor(img)));
        out.push(next);
    }
    out
}

fn flat(t: &Tensor) -> impl Iterator<Item = f64> + '_ {
    t.iter().flatten().flatten().copied()
}

fn gram_oracle(t: &Tensor) -> Vec<Vec<f64>> {
    let n = (t.len() * t[0].len() * t[0][0].len()) as f64;
    t.iter()
        .map(|a| {
            t.iter()
                .map(|b| {
                    let mut s = 0.0;
                    for (ra, rb) in a.iter().zip(b) {
                        for (x, y) in ra.iter().zip(rb) {
                            s += x * y;
                        }
                    }
                    s / n
                })
                .collect()
        })
        .collect()
}

fn loss_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut close = |got: f64, want: f64, what: &str| -> Result<(), String> {
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "{what}: {got} vs oracle {want}");
        Ok(())
    };
    let extractors = [ConvExtractor::seeded(&[3, 4, 6], 11), ConvExtractor::default()];
    for trial in 0..5 {
        let a = random_image(&mut rng, 8, 8, 3);
        let b = random_image(&mut rng, 8, 8, 3);
        let mut bits: Vec<bool> = (0..64).map(|_| rng.random_bool(0.5)).collect();
        bits[0] = true;
        bits[63] = true;
        let l1 = |i: usize| (0..3).map(|c| (a.data()[3 * i + c] - b.data()[3 * i + c]).abs()).sum::<f64>();

        let image_mask = SkinMask::new(8, 8, bits.clone(), MaskSpace::Image).unwrap();
        let masked: Vec<usize> = (0..64).filter(|&i| bits[i]).collect();
        let want = masked.iter().map(|&i| l1(i)).sum::<f64>() / masked.len() as f64;
        close(pixel_loss_image(&a, &b, &image_mask).unwrap(), want, "image L1")?;
        close(pixel_loss_texture(&a, &b).unwrap(), (0..64).map(l1).sum::<f64>() / 64.0, "texture L1")?;

        for fx in &extractors {
            let (fa, fb) = (features_oracle(fx, &a), features_oracle(fx, &b));
            let perc: f64 = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| {
                    let n = flat(x).count() as f64;
                    flat(x).zip(flat(y)).map(|(p, q)| (p - q).abs()).sum::<f64>() / n
                })
                .sum();
            close(perceptual_loss(&a, &b, fx).unwrap(), perc, "perceptual")?;
            let style: f64 = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| {
                    let (gx, gy) = (gram_oracle(x), gram_oracle(y));
                    gx.iter().flatten().zip(gy.iter().flatten()).map(|(p, q)| (p - q).abs()).sum::<f64>()
                })
                .sum::<f64>()
                / fa.len() as f64;
            close(style_loss(&a, &b, fx).unwrap(), style, "style")?;
        }

        let mut sym = 0.0;
        for y in 0..8 {
            for x in 0..4 {
                for c in 0..3 {
                    sym += (a.get(x, y, c) - a.get(7 - x, y, c)).abs();
                }
            }
        }
        close(symmetry_loss(&a), 2.0 / 64.0 * sym, "symmetry")?;

        let uv_mask = SkinMask::new(8, 8, bits.clone(), MaskSpace::Uv).unwrap();
        let mut std_sum = 0.0;
        for c in 0..3 {
            let vals: Vec<f64> = masked.iter().map(|&i| a.data()[3 * i + c]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            std_sum += (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        }
        close(skin_std_loss(&a, &uv_mask).unwrap(), std_sum / 3.0, "skin std")?;

        let (real, fake) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        close(adversarial_generator_loss(fake), -f64::ln(fake), "generator adversarial")?;
        close(
            adversarial_discriminator_loss(real, fake),
            -f64::ln(real) - f64::ln(1.0 - fake),
            "discriminator adversarial",
        )?;

        // Exact identities.
        ensure!(pixel_loss_image(&a, &a, &image_mask).unwrap() == 0.0, "trial {trial}: L1(x, x) ≠ 0");
        ensure!(pixel_loss_texture(&a, &a).unwrap() == 0.0, "trial {trial}: texture L1(x, x) ≠ 0");
        for fx in &extractors {
            ensure!(perceptual_loss(&a, &a, fx).unwrap() == 0.0, "perceptual(x, x) ≠ 0");
            ensure!(style_loss(&a, &a, fx).unwrap() == 0.0, "style(x, x) ≠ 0");
        }
        let mirrored = Image::from_fn_rgb(8, 8, |x, y| a.rgb(x.min(7 - x), y));
        ensure!(symmetry_loss(&mirrored) == 0.0, "symmetry of a mirror-symmetric texture ≠ 0");
        let constant = Image::filled(8, 8, 3, rng.random_range(0.0..1.0));
        ensure!(skin_std_loss(&constant, &uv_mask).unwrap() == 0.0, "std of a constant texture ≠ 0");
    }
    close(adversarial_generator_loss(0.5), LN_2, "generator at 0.5")?;
    close(adversarial_discriminator_loss(0.5, 0.5), 2.0 * LN_2, "discriminator at 0.5")?;

    let weights = LossWeights::default();
    let zero = total_generator_loss(&LossComponents::default(), &weights).unwrap();
    ensure!(zero.total == 0.0, "all-zero components give {}", zero.total);
    let unit = total_generator_loss(&LossComponents::uniform(1.0), &weights).unwrap();
    ensure!((unit.total - 13.102).abs() <= 1e-9, "unit components give {}", unit.total);
    let identity = charface::loss::IdentityExtractor;
    let (x, y) = (random_image(&mut rng, 8, 8, 3), random_image(&mut rng, 8, 8, 3));
    let mean_l1 = x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()).sum::<f64>() / 192.0;
    ensure!(identity.extract(&x).len() == 1, "identity extractor has one layer");
    close(perceptual_loss(&x, &y, &identity).unwrap(), mean_l1, "perceptual with identity extractor")?;
    Ok(format!("all operations within {worst:.1e} of direct summation; unit total = {}", unit.total))
}

// ---------------------------------------------------------------- 7

fn published_constants() -> Check {
    let w = LossWeights::default();
    let got = [w.lambda_l1, w.lambda_perc, w.lambda_sty, w.lambda_sym, w.lambda_std, w.lambda_adv];
    ensure!(got == [3.0, 1.0, 1.0, 0.1, 3.0, 0.001], "default weights {got:?}");

    let minimal = r#"
output_dir = "out"
[inputs]
game_mesh = "g.obj"
morphable_basis = "b.json"
landmarks = "l.json"
coefficients = "c.json"
portrait = "p.png"
portrait_mask = "pm.png"
template_texture = "t.png"
template_mask = "tm.png"
"#;
    let cfg = PipelineConfig::from_toml(minimal, Path::new(".")).map_err(|e| e.to_string())?;
    ensure!(cfg.uv_size == 1024 && DEFAULT_UV_SIZE == 1024, "default texture size {}", cfg.uv_size);
    ensure!(cfg.weights == w, "config default weights differ");

    let raw: Vec<f64> = (0..COEFFICIENT_DIM).map(|i| i as f64).collect();
    ensure!(COEFFICIENT_DIM == 257, "coefficient length {COEFFICIENT_DIM}");
    let c = split_coefficients(&raw).map_err(|e| e.to_string())?;
    let lens = [c.identity.len(), c.expression.len(), c.texture.len(), c.pose.len(), c.lighting_sh.len()];
    ensure!(lens == [80, 64, 80, 6, 27], "block sizes {lens:?}");
    ensure!(
        c.identity[0] == 0.0 && c.expression[0] == 80.0 && c.texture[0] == 144.0 && c.pose[0] == 224.0 && c.lighting_sh[0] == 230.0,
        "blocks start at the wrong offsets"
    );

    let mesh = load_obj_file(&asset("game_head.obj")).map_err(|e| e.to_string())?;
    mesh.validate().map_err(|e| e.to_string())?;
    ensure!(
        mesh.vertex_count() == 8520 && mesh.triangle_count() == 16020,
        "bundled mesh has {} vertices / {} triangles",
        mesh.vertex_count(),
        mesh.triangle_count()
    );
    Ok("weights (3, 1, 1, 0.1, 3, 0.001), uv 1024², split (80, 64, 80, 6, 27), mesh 8520 / 16020".into())
}

// ---------------------------------------------------------------- 8

fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let g: Vec<f64> = (0..11).map(|k| (-((k as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..3 {
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = g[i] * g[j] / (gs * gs);
                        let (p, q) = (a.get(x0 + i, y0 + j, c), b.get(x0 + i, y0 + j, c));
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

fn metrics_sanity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let (w, h) = (rng.random_range(11..24), rng.random_range(11..24));
        let a = random_image(&mut rng, w, h, 3);
        let noise = rng.random_range(0.01..0.3);
        let b = Image::from_vec(
            w,
            h,
            3,
            a.data().iter().map(|v| (v + rng.random_range(-noise..noise)).clamp(0.0, 1.0)).collect(),
        )
        .unwrap();
        ensure!(ssim(&a, &a).unwrap() == 1.0, "image {k}: ssim(x, x) = {}", ssim(&a, &a).unwrap());
        ensure!(psnr(&a, &a).unwrap() == 99.0, "image {k}: psnr(x, x) = {}", psnr(&a, &a).unwrap());
        let mse = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.data().len() as f64;
        let dp = (psnr(&a, &b).unwrap() - 10.0 * (1.0 / mse).log10()).abs();
        let ds = (ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs();
        worst = worst.max(dp).max(ds);
        ensure!(dp <= 1e-6 && ds <= 1e-6, "image {k}: psnr off by {dp:.2e}, ssim off by {ds:.2e}");
    }
    Ok(format!("10 images, identities exact, worst oracle deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 9

fn charface(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_charface"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "charface {args:?} exited with {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let sample = root.join("sample");
    charface(
        &["sample", "--dir", sample.to_str().unwrap(), "--image-size", "256", "--uv-size", "512"],
        "1",
    )?;
    let config = sample.join("pipeline.toml");
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out = root.join(format!("out-{threads}"));
        charface(
            &["pipeline", "--config", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()],
            threads,
        )?;
        runs.push(out);
    }
    let artifacts = ["mesh.obj", "coarse_texture.png", "preview.png", "loss_report.json"];
    for name in artifacts {
        let a = std::fs::read(runs[0].join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(runs[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure!(a == b, "{name} differs between 1 and 4 threads");
    }
    let hash = |p: &Path| -> Result<String, String> {
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p.join("manifest.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        Ok(m["config_hash"].as_str().unwrap_or_default().to_string())
    };
    ensure!(hash(&runs[0])? == hash(&runs[1])?, "config hashes differ");
    Ok(format!("{} artifacts bitwise identical with 1 and 4 threads", artifacts.len()))
}
