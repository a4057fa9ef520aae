use std::fmt;
use std::path::Path;

use charface::camera::{PinholeCamera, Pose};
use charface::image::{BitDepth, Image, MaskSpace, SkinMask, TextureMap};
use charface::loss::LossWeights;
use charface::mesh::{load_obj_file, write_obj_file, LandmarkCorrespondence, Mesh};
use charface::morphable::{read_f64_le, synthesize_shape, CoefficientVector, MorphableBasis};
use charface::pipeline::{
    evaluate_losses, run_pipeline, write_sample, ImageMetrics, LossInputs, PipelineConfig,
};
use charface::poisson::{poisson_blend, PoissonOptions};
use charface::render::{render, PhongLighting, RenderOptions};
use charface::transfer::{transfer_shape, KernelKind, RbfKernelConfig};
use charface::uv::{create_coarse_texture, default_blur_sigma, unwrap_detailed, TexelStatus};
use charface::Error;
use serde_json::{json, Value};

use crate::{
    BlendArgs, Cli, CoarseTextureArgs, Command, Depth, KernelArg, LossEvalArgs, MetricsArgs, PipelineArgs,
    RenderArgs, SampleArgs, TransferArgs, UnwrapArgs, ViewArgs,
};

/// A failed stage and its cause.
#[derive(Debug)]
pub struct Failure {
    stage: &'static str,
    error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        if self.error.is_invalid_input() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

type Outcome<T> = Result<T, Failure>;

trait InStage<T> {
    fn stage(self, stage: &'static str) -> Outcome<T>;
}

impl<T> InStage<T> for charface::Result<T> {
    fn stage(self, stage: &'static str) -> Outcome<T> {
        self.map_err(|error| Failure { stage, error })
    }
}

pub fn run(cli: &Cli) -> Outcome<()> {
    let report = match &cli.command {
        Command::Transfer(a) => transfer(a),
        Command::Unwrap(a) => unwrap(a),
        Command::Blend(a) => blend(a),
        Command::CoarseTexture(a) => coarse_texture(a),
        Command::Render(a) => render_cmd(a),
        Command::LossEval(a) => loss_eval(a),
        Command::Metrics(a) => metrics(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Sample(a) => sample(a),
    }?;
    emit(cli.json, &report);
    Ok(())
}

fn emit(as_json: bool, report: &Value) {
    if as_json {
        println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
        return;
    }
    match report {
        Value::Object(map) => {
            for (k, v) in map {
                match v {
                    Value::String(s) => println!("{k}: {s}"),
                    other => println!("{k}: {other}"),
                }
            }
        }
        other => println!("{other}"),
    }
}

fn depth(d: Depth) -> BitDepth {
    match d {
        Depth::Eight => BitDepth::Eight,
        Depth::Sixteen => BitDepth::Sixteen,
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn auto_or_number(name: &str, raw: &str) -> charface::Result<Option<f64>> {
    if raw == "auto" {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| invalid(format!("--{name} must be `auto` or a number, got {raw:?}")))
}

/// Flat value list: JSON array or little-endian f64.
fn read_values(path: &Path) -> charface::Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'[') {
        serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    } else {
        read_f64_le(path)
    }
}

/// Pose JSON object, or the pose block of a coefficient vector.
fn load_pose(path: &Path) -> charface::Result<Pose> {
    let text = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if text.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        Pose::load(path)
    } else {
        CoefficientVector::load(path)?.pose()
    }
}

fn load_view(view: &ViewArgs, width: usize, height: usize) -> charface::Result<(Pose, PinholeCamera)> {
    let pose = load_pose(&view.pose)?;
    let camera = match &view.camera {
        Some(p) => PinholeCamera::load(p)?,
        None => PinholeCamera::centered(width, height),
    };
    Ok((pose, camera))
}

fn load_texture(path: &Path) -> charface::Result<TextureMap> {
    TextureMap::new(Image::load_png(path)?)
}

fn transfer(a: &TransferArgs) -> Outcome<Value> {
    let (game, landmarks, mm, kernel) = (|| -> charface::Result<_> {
        let game = load_obj_file(&a.game_mesh)?;
        let landmarks = LandmarkCorrespondence::load(&a.landmarks)?;
        let mm = match (&a.mm_vertices, &a.basis, &a.coefficients) {
            (Some(p), _, _) => read_values(p)?,
            (None, Some(b), Some(c)) => {
                let basis = MorphableBasis::load(b)?;
                let coeffs = CoefficientVector::load(c)?;
                synthesize_shape(&basis, &coeffs.identity, &coeffs.expression)?
                    .as_slice()
                    .to_vec()
            }
            _ => return Err(invalid("give --mm-vertices or --basis with --coefficients")),
        };
        let kernel = RbfKernelConfig {
            kind: match a.kernel {
                KernelArg::Gaussian => KernelKind::Gaussian,
                KernelArg::ThinPlateLinear => KernelKind::ThinPlateLinear,
            },
            sigma: auto_or_number("sigma", &a.sigma)?,
            regularization: auto_or_number("regularization", &a.regularization)?,
        };
        Ok((game, landmarks, mm, kernel))
    })()
    .stage("load")?;
    let result = transfer_shape(&game, &landmarks, &mm, &kernel).stage("transfer")?;
    let max_disp = game
        .vertices
        .iter()
        .zip(&result.mesh.vertices)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let mesh: Mesh = if a.morphable_frame {
        result.mesh.transformed(&result.alignment.inverse())
    } else {
        result.mesh
    };
    write_obj_file(&mesh, &a.output).stage("write")?;
    Ok(json!({
        "output": a.output,
        "vertices": mesh.vertex_count(),
        "triangles": mesh.triangle_count(),
        "kernel": result.deformation.kernel,
        "alignment_scale": result.alignment.scale,
        "max_vertex_displacement": max_disp,
    }))
}

fn unwrap(a: &UnwrapArgs) -> Outcome<Value> {
    let (image, mesh, pose, camera) = (|| -> charface::Result<_> {
        let image = Image::load_png(&a.image)?;
        let mesh = load_obj_file(&a.mesh)?;
        let (pose, camera) = load_view(&a.view, image.width(), image.height())?;
        Ok((image, mesh, pose, camera))
    })()
    .stage("load")?;
    let u = unwrap_detailed(&image, &mesh, &pose, &camera, a.uv_size).stage("unwrap")?;
    u.texture.rgb.save_png(&a.output, depth(a.bit_depth)).stage("write")?;
    if let Some(v) = &a.validity {
        let bits = u.status.iter().map(|s| *s == TexelStatus::Valid).collect();
        SkinMask::new(a.uv_size, a.uv_size, bits, MaskSpace::Uv)
            .and_then(|m| m.save_png(v))
            .stage("write")?;
    }
    Ok(json!({
        "output": a.output,
        "uv_size": a.uv_size,
        "valid": u.count(TexelStatus::Valid),
        "uncovered": u.count(TexelStatus::Uncovered),
        "back_facing": u.count(TexelStatus::BackFacing),
        "outside_image": u.count(TexelStatus::OutsideImage),
        "occluded": u.count(TexelStatus::Occluded),
    }))
}

fn blend(a: &BlendArgs) -> Outcome<Value> {
    let (source, target, mask) = (|| -> charface::Result<_> {
        Ok((
            load_texture(&a.source)?,
            load_texture(&a.target)?,
            SkinMask::load_png(&a.mask, MaskSpace::Uv)?,
        ))
    })()
    .stage("load")?;
    let options = PoissonOptions {
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
    };
    let out = poisson_blend(&source, &target, &mask, &options).stage("blend")?;
    out.texture.rgb.save_png(&a.output, depth(a.bit_depth)).stage("write")?;
    Ok(json!({
        "output": a.output,
        "unknowns": out.report.unknowns,
        "channels": out.report.channels,
        "max_relative_residual": out.report.max_relative_residual(),
    }))
}

fn coarse_texture(a: &CoarseTextureArgs) -> Outcome<Value> {
    let (image, mask, mesh, pose, camera, template, template_mask) = (|| -> charface::Result<_> {
        let image = Image::load_png(&a.image)?;
        let mask = SkinMask::load_png(&a.mask, MaskSpace::Image)?;
        let mesh = load_obj_file(&a.mesh)?;
        let (pose, camera) = load_view(&a.view, image.width(), image.height())?;
        let template = load_texture(&a.template)?;
        let template_mask = SkinMask::load_png(&a.template_mask, MaskSpace::Uv)?;
        Ok((image, mask, mesh, pose, camera, template, template_mask))
    })()
    .stage("load")?;
    let out = create_coarse_texture(
        &image,
        &mask,
        &mesh,
        &pose,
        &camera,
        &template,
        &template_mask,
        a.uv_size,
        &PoissonOptions::default(),
    )
    .stage("coarse-texture")?;
    out.texture.rgb.save_png(&a.output, depth(a.bit_depth)).stage("write")?;
    Ok(json!({
        "output": a.output,
        "uv_size": a.uv_size,
        "photo_texels": out.photo_texels,
        "blended_texels": out.blended_texels,
        "poisson": out.poisson,
    }))
}

fn render_cmd(a: &RenderArgs) -> Outcome<Value> {
    let (mesh, texture, pose, camera, lighting) = (|| -> charface::Result<_> {
        let mesh = load_obj_file(&a.mesh)?;
        let texture = load_texture(&a.texture)?;
        let (pose, camera) = load_view(&a.view, a.size, a.size)?;
        let lighting = match &a.lighting {
            Some(p) => PhongLighting::load(p)?,
            None => PhongLighting::default(),
        };
        if a.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(invalid("--background components must lie in [0, 1]"));
        }
        Ok((mesh, texture, pose, camera, lighting))
    })()
    .stage("load")?;
    let options = RenderOptions {
        clear_color: [a.background[0], a.background[1], a.background[2]],
    };
    let frame = render(&mesh, &texture, &pose, &camera, &lighting, &options).stage("render")?;
    frame.color.save_png(&a.output, depth(a.bit_depth)).stage("write")?;
    Ok(json!({
        "output": a.output,
        "width": camera.width(),
        "height": camera.height(),
        "covered_pixels": frame.coverage.iter().filter(|c| **c).count(),
    }))
}

fn loss_eval(a: &LossEvalArgs) -> Outcome<Value> {
    let loaded = (|| -> charface::Result<_> {
        let input = Image::load_png(&a.input)?;
        let rendered = Image::load_png(&a.render)?;
        let texture = Image::load_png(&a.texture)?;
        let gt = a.gt.as_deref().map(Image::load_png).transpose()?;
        let mask = SkinMask::load_png(&a.mask, MaskSpace::Image)?;
        let uv_mask = match &a.uv_mask {
            Some(p) => SkinMask::load_png(p, MaskSpace::Uv)?,
            None => SkinMask::full(texture.width(), texture.height(), MaskSpace::Uv),
        };
        let weights = match &a.weights {
            Some(p) => LossWeights::load(p)?,
            None => LossWeights::default(),
        };
        Ok((input, rendered, texture, gt, mask, uv_mask, weights))
    })()
    .stage("load")?;
    let (input, rendered, texture, gt, mask, uv_mask, weights) = loaded;
    let sigma = a.blur_sigma.unwrap_or_else(|| default_blur_sigma(texture.width()));
    let eval = evaluate_losses(
        &LossInputs {
            portrait: &input,
            render: &rendered,
            image_mask: &mask,
            texture: &texture,
            ground_truth: gt.as_ref(),
            uv_mask: &uv_mask,
        },
        &weights,
        sigma,
    )
    .stage("loss")?;
    Ok(json!({
        "components": eval.components,
        "terms": eval.breakdown.terms,
        "total": eval.breakdown.total,
    }))
}

fn metrics(a: &MetricsArgs) -> Outcome<Value> {
    let (x, y) = (|| -> charface::Result<_> { Ok((Image::load_png(&a.a)?, Image::load_png(&a.b)?)) })()
        .stage("load")?;
    let m = ImageMetrics::between(&x, &y).stage("metrics")?;
    Ok(serde_json::to_value(m).expect("metrics serialize"))
}

fn pipeline(a: &PipelineArgs) -> Outcome<Value> {
    let mut cfg = PipelineConfig::load(&a.config).stage("config")?;
    if let Some(dir) = &a.output_dir {
        cfg.output_dir = std::path::absolute(dir).map_err(|e| Failure {
            stage: "config",
            error: Error::Io {
                path: dir.clone(),
                source: e,
            },
        })?;
    }
    if let Some(uv) = a.uv_size {
        cfg.uv_size = uv;
    }
    let run = run_pipeline(&cfg).map_err(|e| Failure {
        stage: e.stage.name(),
        error: e.source,
    })?;
    Ok(json!({
        "output_dir": run.output_dir,
        "config_hash": run.manifest.config_hash,
        "artifacts": run.manifest.artifacts,
        "timings": run.manifest.timings,
        "total_loss": run.outputs.report.breakdown.total,
        "image_metrics": run.outputs.report.image_metrics,
    }))
}

fn sample(a: &SampleArgs) -> Outcome<Value> {
    let config = write_sample(&a.dir, a.image_size, a.uv_size).stage("sample")?;
    Ok(json!({ "config": config }))
}
