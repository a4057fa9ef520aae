//! Closed loops through the renderer and the UV pipeline on the sample head.

use charface::camera::Pose;
use charface::image::{Image, SkinMask};
use charface::mesh::Mesh;
use charface::morphable::{split_coefficients, synthesize_shape};
use charface::poisson::PoissonOptions;
use charface::render::{render, PhongLighting, RenderOptions};
use charface::template::{sample_kernel, sample_scene, SampleScene};
use charface::transfer::transfer_shape;
use charface::uv::{create_coarse_texture, unwrap_detailed};

/// PSNR over the selected pixels only.
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
    assert!(n > 0);
    10.0 * (1.0 / (sum / n as f64)).log10()
}

fn posed(scene: &SampleScene) -> (Mesh, Pose) {
    let c = split_coefficients(&scene.coefficients).unwrap();
    let shape = synthesize_shape(&scene.basis, &c.identity, &c.expression).unwrap();
    let t = transfer_shape(&scene.game_mesh, &scene.landmarks, shape.as_slice(), &sample_kernel()).unwrap();
    (t.mesh.transformed(&t.alignment.inverse()), c.pose().unwrap())
}

fn unlit(scene: &SampleScene, mesh: &Mesh, pose: &Pose, texture: &charface::TextureMap) -> Image {
    render(mesh, texture, pose, &scene.camera, &PhongLighting::unlit(), &RenderOptions::default())
        .unwrap()
        .color
}

#[test]
fn unwrap_of_render_recovers_the_texture() {
    let scene = sample_scene(512, 256).unwrap();
    let (mesh, pose) = posed(&scene);
    let photo = unlit(&scene, &mesh, &pose, &scene.subject_texture);
    let u = unwrap_detailed(&photo, &mesh, &pose, &scene.camera, 256).unwrap();
    let valid = u.texture.validity.as_ref().unwrap();
    assert!(u.texture.valid_count() > 5000);
    let p = masked_psnr(&u.texture.rgb, &scene.subject_texture.rgb, |i| valid[i]);
    assert!(p > 30.0, "unwrap PSNR {p:.2} dB");
}

#[test]
fn coarse_texture_closes_the_render_loop() {
    let scene = sample_scene(256, 256).unwrap();
    let (mesh, pose) = posed(&scene);
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
    .unwrap();
    let again = unlit(&scene, &mesh, &pose, &coarse.texture);
    let skin: &SkinMask = &scene.portrait_mask;
    let p = masked_psnr(&again, &photo, |i| skin.bits[i]);
    assert!(p > 28.0, "loop PSNR {p:.2} dB");
}

/// Wall-clock budget; run with `cargo test --release -- --ignored`.
#[test]
#[ignore]
fn coarse_texture_at_1024_within_budget() {
    let scene = sample_scene(512, 1024).unwrap();
    let (mesh, pose) = posed(&scene);
    let start = std::time::Instant::now();
    create_coarse_texture(
        &scene.portrait,
        &scene.portrait_mask,
        &mesh,
        &pose,
        &scene.camera,
        &scene.template,
        &scene.template_mask,
        1024,
        &PoissonOptions::default(),
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "coarse texture took {secs:.1}s");
}
