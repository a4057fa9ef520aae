//! End-to-end batch pipeline driven by a TOML configuration.
//!
//! `synthesize → transfer → coarse texture → render → losses`, writing
//! `mesh.obj`, `coarse_texture.png`, `preview.png`, `loss_report.json` and a
//! `manifest.json` with input/artifact digests and stage timings. Everything but
//! the manifest timings is a pure function of the configuration and the input
//! files, independent of the thread count.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::PinholeCamera;
use crate::error::{Error, Result};
use crate::image::{BitDepth, Image, MaskSpace, SkinMask, TextureMap};
use crate::loss::{
    perceptual_loss, pixel_loss_image, pixel_loss_texture, psnr, skin_std_loss, ssim, style_loss,
    symmetry_loss, total_generator_loss, ConvExtractor, LossBreakdown, LossComponents, LossWeights,
};
use crate::mesh::{load_obj_file, write_obj_file, LandmarkCorrespondence, Mesh};
use crate::morphable::{synthesize_shape, CoefficientVector, MorphableBasis};
use crate::poisson::{PoissonOptions, PoissonReport};
use crate::render::{render, PhongLighting, RenderOptions};
use crate::transfer::{transfer_shape, RbfKernelConfig, ResolvedKernel};
use crate::uv::{create_coarse_texture, default_blur_sigma, gaussian_blur_image, resample};

pub const SUPPORTED_UV_SIZES: [usize; 4] = [256, 512, 1024, 2048];
pub const DEFAULT_UV_SIZE: usize = 1024;

pub const MESH_ARTIFACT: &str = "mesh.obj";
pub const TEXTURE_ARTIFACT: &str = "coarse_texture.png";
pub const PREVIEW_ARTIFACT: &str = "preview.png";
pub const REPORT_ARTIFACT: &str = "loss_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Files the pipeline consumes. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub game_mesh: PathBuf,
    /// JSON sidecar written by [`MorphableBasis::save`].
    pub morphable_basis: PathBuf,
    pub landmarks: PathBuf,
    /// 257 coefficients, JSON array or raw little-endian f64.
    pub coefficients: PathBuf,
    pub portrait: PathBuf,
    pub portrait_mask: PathBuf,
    pub template_texture: PathBuf,
    pub template_mask: PathBuf,
    /// Paired texture; enables the three texture-side loss terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_texture: Option<PathBuf>,
}

impl InputPaths {
    fn named(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("game_mesh", &self.game_mesh),
            ("morphable_basis", &self.morphable_basis),
            ("landmarks", &self.landmarks),
            ("coefficients", &self.coefficients),
            ("portrait", &self.portrait),
            ("portrait_mask", &self.portrait_mask),
            ("template_texture", &self.template_texture),
            ("template_mask", &self.template_mask),
        ];
        if let Some(gt) = &self.ground_truth_texture {
            v.push(("ground_truth_texture", gt));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_uv_size")]
    pub uv_size: usize,
    pub output_dir: PathBuf,
    pub inputs: InputPaths,
    #[serde(default)]
    pub kernel: RbfKernelConfig,
    /// Defaults to [`PinholeCamera::centered`] on the portrait size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<PinholeCamera>,
    #[serde(default)]
    pub lighting: PhongLighting,
    #[serde(default)]
    pub render: RenderOptions,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub poisson: PoissonOptions,
    /// Blur applied before the skin regularizers; defaults to 5 px at 1024².
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blur_sigma: Option<f64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_uv_size() -> usize {
    DEFAULT_UV_SIZE
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Parses the file without checking that inputs exist; see [`PipelineConfig::validate`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::from_toml(&text, &base).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_UV_SIZES.contains(&self.uv_size) {
            return Err(Error::validation(format!(
                "uv_size must be one of {SUPPORTED_UV_SIZES:?}, got {}",
                self.uv_size
            )));
        }
        if let Some(s) = self.kernel.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation(format!("kernel sigma must be positive, got {s}")));
            }
        }
        if let Some(r) = self.kernel.regularization {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::validation(format!("kernel regularization must be non-negative, got {r}")));
            }
        }
        if let Some(cam) = &self.camera {
            cam.validate()?;
        }
        self.lighting.validate()?;
        self.weights.validate()?;
        if !(self.poisson.tolerance > 0.0 && self.poisson.tolerance.is_finite()) || self.poisson.max_iterations == 0 {
            return Err(Error::validation("poisson tolerance and max_iterations must be positive"));
        }
        if let Some(s) = self.blur_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation(format!("blur_sigma must be positive, got {s}")));
            }
        }
        for (name, p) in self.input_files()? {
            if !p.is_file() {
                return Err(Error::validation(format!("{name}: file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    /// Every input file, including the basis data file named by its sidecar.
    fn input_files(&self) -> Result<Vec<(String, PathBuf)>> {
        let mut files = Vec::new();
        for (name, p) in self.inputs.named() {
            let path = self.resolve(p);
            if name == "morphable_basis" && path.is_file() {
                let data = MorphableBasis::data_path(&path)?;
                files.push((name.to_string(), path));
                files.push(("morphable_basis_data".to_string(), data));
            } else {
                files.push((name.to_string(), path));
            }
        }
        Ok(files)
    }

    /// SHA-256 over the configuration (output directory excluded) and the
    /// contents of every input file.
    pub fn hash(&self) -> Result<(String, Vec<FileDigest>)> {
        let inputs = self
            .input_files()?
            .into_iter()
            .map(|(name, path)| FileDigest::of(name, &path))
            .collect::<Result<Vec<_>>>()?;
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&canonical).expect("config serializes"));
        for d in &inputs {
            h.update(d.name.as_bytes());
            h.update(d.sha256.as_bytes());
        }
        Ok((hex::encode(h.finalize()), inputs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Synthesize,
    Transfer,
    CoarseTexture,
    Render,
    Loss,
    Write,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Synthesize => "synthesize",
            Stage::Transfer => "transfer",
            Stage::CoarseTexture => "coarse-texture",
            Stage::Render => "render",
            Stage::Loss => "loss",
            Stage::Write => "write",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(name: impl Into<String>, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileDigest {
            name: name.into(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Wall-clock seconds; the only non-reproducible part of a run.
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
}

impl ImageMetrics {
    pub fn between(a: &Image, b: &Image) -> Result<Self> {
        Ok(ImageMetrics {
            psnr_db: psnr(a, b)?,
            ssim: ssim(a, b)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub kernel: ResolvedKernel,
    pub alignment_scale: f64,
    /// Largest landmark displacement the field was fitted to.
    pub max_landmark_offset: f64,
    /// Largest displacement of any game vertex. Much larger than the landmark
    /// offsets means the kernel extrapolates badly.
    pub max_vertex_displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSummary {
    pub uv_size: usize,
    pub photo_texels: usize,
    pub blended_texels: usize,
    pub blur_sigma: f64,
    pub poisson: Option<PoissonReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub components: LossComponents,
    pub breakdown: LossBreakdown,
    /// Preview render against the portrait.
    pub image_metrics: ImageMetrics,
    /// Coarse texture against the ground-truth texture, when given.
    pub texture_metrics: Option<ImageMetrics>,
    pub transfer: TransferSummary,
    pub texture: TextureSummary,
}

/// Everything the non-adversarial loss terms compare.
pub struct LossInputs<'a> {
    pub portrait: &'a Image,
    pub render: &'a Image,
    /// Image-space skin mask for the pixel term.
    pub image_mask: &'a SkinMask,
    pub texture: &'a Image,
    /// Paired texture of the same size as `texture`.
    pub ground_truth: Option<&'a Image>,
    /// UV skin region for the standard-deviation term.
    pub uv_mask: &'a SkinMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEvaluation {
    pub components: LossComponents,
    pub breakdown: LossBreakdown,
}

/// Computes every loss term that needs no discriminator, using the default
/// convolutional feature extractor, and the weighted total.
pub fn evaluate_losses(inputs: &LossInputs<'_>, weights: &LossWeights, blur_sigma: f64) -> Result<LossEvaluation> {
    let fx = ConvExtractor::default();
    let blurred = gaussian_blur_image(inputs.texture, blur_sigma)?;
    let mut components = LossComponents {
        image_l1: pixel_loss_image(inputs.portrait, inputs.render, inputs.image_mask)?,
        image_perceptual: perceptual_loss(inputs.portrait, inputs.render, &fx)?,
        image_style: style_loss(inputs.portrait, inputs.render, &fx)?,
        symmetry: symmetry_loss(&blurred),
        skin_std: skin_std_loss(&blurred, inputs.uv_mask)?,
        ..LossComponents::default()
    };
    if let Some(g) = inputs.ground_truth {
        components.texture_l1 = Some(pixel_loss_texture(inputs.texture, g)?);
        components.texture_perceptual = Some(perceptual_loss(inputs.texture, g, &fx)?);
        components.texture_style = Some(style_loss(inputs.texture, g, &fx)?);
    }
    Ok(LossEvaluation {
        breakdown: total_generator_loss(&components, weights)?,
        components,
    })
}

/// In-memory results of a run.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub mesh: Mesh,
    pub coarse_texture: TextureMap,
    pub preview: Image,
    pub report: LossReport,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub output_dir: PathBuf,
    pub outputs: PipelineOutputs,
    pub manifest: Manifest,
}

struct Inputs {
    game_mesh: Mesh,
    basis: MorphableBasis,
    landmarks: LandmarkCorrespondence,
    coefficients: CoefficientVector,
    portrait: Image,
    portrait_mask: SkinMask,
    template: TextureMap,
    template_mask: SkinMask,
    ground_truth: Option<TextureMap>,
    camera: PinholeCamera,
}

fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let p = &cfg.inputs;
    let game_mesh = load_obj_file(&cfg.resolve(&p.game_mesh))?;
    game_mesh.require_uvs()?;
    let basis = MorphableBasis::load(&cfg.resolve(&p.morphable_basis))?;
    let landmarks = LandmarkCorrespondence::load(&cfg.resolve(&p.landmarks))?;
    landmarks.validate(basis.vertex_count(), game_mesh.vertex_count())?;
    let coefficients = CoefficientVector::load(&cfg.resolve(&p.coefficients))?;
    let portrait = Image::load_png(&cfg.resolve(&p.portrait))?;
    let portrait_mask = SkinMask::load_png(&cfg.resolve(&p.portrait_mask), MaskSpace::Image)?;
    let template = TextureMap::new(Image::load_png(&cfg.resolve(&p.template_texture))?)?;
    let template_mask = SkinMask::load_png(&cfg.resolve(&p.template_mask), MaskSpace::Uv)?;
    let ground_truth = match &p.ground_truth_texture {
        Some(gt) => Some(TextureMap::new(Image::load_png(&cfg.resolve(gt))?)?),
        None => None,
    };
    let camera = cfg
        .camera
        .unwrap_or_else(|| PinholeCamera::centered(portrait.width(), portrait.height()));
    if camera.image_size != [portrait.width(), portrait.height()] {
        return Err(Error::validation(format!(
            "camera image size {:?} does not match the {}×{} portrait",
            camera.image_size,
            portrait.width(),
            portrait.height()
        )));
    }
    Ok(Inputs {
        game_mesh,
        basis,
        landmarks,
        coefficients,
        portrait,
        portrait_mask,
        template,
        template_mask,
        ground_truth,
        camera,
    })
}

/// Nearest-neighbour resampling of a mask.
pub fn resample_mask(mask: &SkinMask, width: usize, height: usize) -> SkinMask {
    if mask.width == width && mask.height == height {
        return mask.clone();
    }
    SkinMask::from_fn(width, height, mask.space, |x, y| {
        mask.at(x * mask.width / width, y * mask.height / height)
    })
}

struct Timer {
    timings: Vec<StageTiming>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage,
            seconds: (now - self.start).as_secs_f64(),
        });
        self.start = now;
    }
}

/// Runs every stage in memory. Returns the outputs and per-stage timings.
pub fn run_stages(cfg: &PipelineConfig) -> std::result::Result<(PipelineOutputs, Vec<StageTiming>), StageError> {
    let mut timer = Timer::new();
    let inp = load_inputs(cfg).at(Stage::Load)?;
    timer.lap(Stage::Load);

    let c = &inp.coefficients;
    let shape = synthesize_shape(&inp.basis, &c.identity, &c.expression).at(Stage::Synthesize)?;
    let pose = c.pose().at(Stage::Synthesize)?;
    timer.lap(Stage::Synthesize);

    let transfer = transfer_shape(&inp.game_mesh, &inp.landmarks, shape.as_slice(), &cfg.kernel).at(Stage::Transfer)?;
    let displacement = |i: usize| (transfer.mesh.vertices[i] - inp.game_mesh.vertices[i]).norm();
    let summary = TransferSummary {
        kernel: transfer.deformation.kernel,
        alignment_scale: transfer.alignment.scale,
        max_landmark_offset: inp.landmarks.pairs.iter().map(|p| displacement(p[1])).fold(0.0, f64::max),
        max_vertex_displacement: (0..inp.game_mesh.vertex_count()).map(displacement).fold(0.0, f64::max),
    };
    // The pose acts on morphable-model coordinates.
    let posed = transfer.mesh.transformed(&transfer.alignment.inverse());
    timer.lap(Stage::Transfer);

    let uv = cfg.uv_size;
    let coarse = create_coarse_texture(
        &inp.portrait,
        &inp.portrait_mask,
        &posed,
        &pose,
        &inp.camera,
        &inp.template,
        &inp.template_mask,
        uv,
        &cfg.poisson,
    )
    .at(Stage::CoarseTexture)?;
    timer.lap(Stage::CoarseTexture);

    let frame = render(&posed, &coarse.texture, &pose, &inp.camera, &cfg.lighting, &cfg.render).at(Stage::Render)?;
    let preview = frame.color;
    timer.lap(Stage::Render);

    let blur_sigma = cfg.blur_sigma.unwrap_or_else(|| default_blur_sigma(uv));
    let report = (|| -> Result<LossReport> {
        let tex = &coarse.texture.rgb;
        let uv_mask = resample_mask(&inp.template_mask, uv, uv);
        let gt = inp.ground_truth.as_ref().map(|g| resample(&g.rgb, uv, uv));
        let eval = evaluate_losses(
            &LossInputs {
                portrait: &inp.portrait,
                render: &preview,
                image_mask: &inp.portrait_mask,
                texture: tex,
                ground_truth: gt.as_ref(),
                uv_mask: &uv_mask,
            },
            &cfg.weights,
            blur_sigma,
        )?;
        Ok(LossReport {
            components: eval.components,
            breakdown: eval.breakdown,
            image_metrics: ImageMetrics::between(&preview, &inp.portrait)?,
            texture_metrics: gt.as_ref().map(|g| ImageMetrics::between(tex, g)).transpose()?,
            transfer: summary,
            texture: TextureSummary {
                uv_size: uv,
                photo_texels: coarse.photo_texels,
                blended_texels: coarse.blended_texels,
                blur_sigma,
                poisson: coarse.poisson.clone(),
            },
        })
    })()
    .at(Stage::Loss)?;
    timer.lap(Stage::Loss);

    let outputs = PipelineOutputs {
        mesh: transfer.mesh,
        coarse_texture: coarse.texture,
        preview,
        report,
    };
    Ok((outputs, timer.timings))
}

/// Validates `cfg`, runs every stage and writes the artifacts and manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<PipelineRun, StageError> {
    cfg.validate().at(Stage::Config)?;
    let (config_hash, inputs) = cfg.hash().at(Stage::Config)?;
    let (outputs, mut timings) = run_stages(cfg)?;

    let start = Instant::now();
    let dir = cfg.output_path();
    let artifacts = write_artifacts(&dir, &outputs).at(Stage::Write)?;
    timings.push(StageTiming {
        stage: Stage::Write,
        seconds: start.elapsed().as_secs_f64(),
    });
    let manifest = Manifest {
        config_hash,
        inputs,
        artifacts,
        timings,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest).at(Stage::Write)?;
    Ok(PipelineRun {
        output_dir: dir,
        outputs,
        manifest,
    })
}

fn write_artifacts(dir: &Path, out: &PipelineOutputs) -> Result<Vec<FileDigest>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_obj_file(&out.mesh, &dir.join(MESH_ARTIFACT))?;
    out.coarse_texture.rgb.save_png(&dir.join(TEXTURE_ARTIFACT), BitDepth::Sixteen)?;
    out.preview.save_png(&dir.join(PREVIEW_ARTIFACT), BitDepth::Eight)?;
    write_json(&dir.join(REPORT_ARTIFACT), &out.report)?;
    [MESH_ARTIFACT, TEXTURE_ARTIFACT, PREVIEW_ARTIFACT, REPORT_ARTIFACT]
        .iter()
        .map(|name| FileDigest::of(*name, &dir.join(name)))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const SAMPLE_CONFIG: &str = "pipeline.toml";

/// Writes the procedural sample inputs and a matching `pipeline.toml` into
/// `dir`; returns the config path.
pub fn write_sample(dir: &Path, image_size: usize, uv_size: usize) -> Result<PathBuf> {
    use crate::template::{sample_kernel, sample_scene, SAMPLE_BACKGROUND};

    if !SUPPORTED_UV_SIZES.contains(&uv_size) {
        return Err(Error::validation(format!("uv_size must be one of {SUPPORTED_UV_SIZES:?}")));
    }
    if image_size < 16 {
        return Err(Error::validation("sample image size must be at least 16"));
    }
    let scene = sample_scene(image_size, uv_size)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let inputs = InputPaths {
        game_mesh: "game_head.obj".into(),
        morphable_basis: "basis.json".into(),
        landmarks: "landmarks.json".into(),
        coefficients: "coefficients.json".into(),
        portrait: "portrait.png".into(),
        portrait_mask: "portrait_mask.png".into(),
        template_texture: "template.png".into(),
        template_mask: "template_mask.png".into(),
        ground_truth_texture: Some("subject_texture.png".into()),
    };
    write_obj_file(&scene.game_mesh, &dir.join(&inputs.game_mesh))?;
    scene.basis.save(&dir.join(&inputs.morphable_basis))?;
    let lm_path = dir.join(&inputs.landmarks);
    std::fs::write(&lm_path, scene.landmarks.to_json() + "\n").map_err(|e| Error::io(&lm_path, e))?;
    write_json(&dir.join(&inputs.coefficients), &scene.coefficients)?;
    scene.portrait.save_png(&dir.join(&inputs.portrait), BitDepth::Eight)?;
    scene.portrait_mask.save_png(&dir.join(&inputs.portrait_mask))?;
    scene.template.rgb.save_png(&dir.join(&inputs.template_texture), BitDepth::Sixteen)?;
    scene.template_mask.save_png(&dir.join(&inputs.template_mask))?;
    if let Some(gt) = &inputs.ground_truth_texture {
        scene.subject_texture.rgb.save_png(&dir.join(gt), BitDepth::Sixteen)?;
    }

    let cfg = PipelineConfig {
        uv_size,
        output_dir: "out".into(),
        inputs,
        kernel: sample_kernel(),
        camera: Some(scene.camera),
        lighting: scene.lighting,
        render: RenderOptions {
            clear_color: SAMPLE_BACKGROUND,
        },
        weights: LossWeights::default(),
        poisson: PoissonOptions::default(),
        blur_sigma: None,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join(SAMPLE_CONFIG);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
