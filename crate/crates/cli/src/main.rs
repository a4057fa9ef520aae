//! `charface` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for invalid input
//! (bad arguments, missing or malformed files, failed preconditions).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "charface", version, about = "Game-character face creation from a single portrait")]
struct Cli {
    /// Print reports as JSON on standard output.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deform the game mesh so its landmarks follow a morphable-model shape.
    Transfer(TransferArgs),
    /// Project a portrait into the mesh's UV space.
    Unwrap(UnwrapArgs),
    /// Poisson-blend a source texture into a target inside a mask.
    Blend(BlendArgs),
    /// Build the coarse texture map from a portrait.
    CoarseTexture(CoarseTextureArgs),
    /// Render a textured mesh with Phong shading.
    Render(RenderArgs),
    /// Evaluate the generator loss terms on images and textures.
    LossEval(LossEvalArgs),
    /// PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Run the full pipeline from a TOML configuration.
    Pipeline(PipelineArgs),
    /// Write the procedural sample inputs and a pipeline configuration.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    ThinPlateLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Args, Debug)]
struct TransferArgs {
    #[arg(long)]
    game_mesh: PathBuf,
    /// Morphable-model vertices (3N values, little-endian f64 or JSON array).
    #[arg(long, required_unless_present = "basis", conflicts_with_all = ["basis", "coefficients"])]
    mm_vertices: Option<PathBuf>,
    /// Basis sidecar; synthesizes the shape together with --coefficients.
    #[arg(long, requires = "coefficients")]
    basis: Option<PathBuf>,
    #[arg(long, requires = "basis")]
    coefficients: Option<PathBuf>,
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Kernel width, or `auto` for the mean landmark spacing.
    #[arg(long, default_value = "auto")]
    sigma: String,
    /// Diagonal regularization, or `auto`.
    #[arg(long, default_value = "auto")]
    regularization: String,
    /// Write the mesh in the morphable-model frame (where poses apply)
    /// instead of the game-mesh frame.
    #[arg(long)]
    morphable_frame: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ViewArgs {
    /// Pose JSON (`rotation`, `translation`) or a 257-value coefficient file.
    #[arg(long)]
    pose: PathBuf,
    /// Camera JSON; defaults to a centered camera with focal length 2·width.
    #[arg(long)]
    camera: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct UnwrapArgs {
    #[arg(long)]
    image: PathBuf,
    /// Mesh with UVs, in the frame the pose applies to.
    #[arg(long)]
    mesh: PathBuf,
    #[command(flatten)]
    view: ViewArgs,
    #[arg(long, default_value_t = 1024)]
    uv_size: usize,
    /// Also write the validity mask.
    #[arg(long)]
    validity: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "16")]
    bit_depth: Depth,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BlendArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Region to solve for (UV space, >127 is inside).
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value = "16")]
    bit_depth: Depth,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct CoarseTextureArgs {
    #[arg(long)]
    image: PathBuf,
    /// Skin mask of the portrait.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[command(flatten)]
    view: ViewArgs,
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    template_mask: PathBuf,
    #[arg(long, default_value_t = 1024)]
    uv_size: usize,
    #[arg(long, value_enum, default_value = "16")]
    bit_depth: Depth,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    texture: PathBuf,
    #[command(flatten)]
    view: ViewArgs,
    /// Lighting JSON mirroring the Phong parameters; defaults to a frontal light.
    #[arg(long)]
    lighting: Option<PathBuf>,
    /// Image size when no camera file is given.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Background as `r,g,b` in [0, 1].
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    background: Vec<f64>,
    #[arg(long, value_enum, default_value = "8")]
    bit_depth: Depth,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct LossEvalArgs {
    /// Input portrait.
    #[arg(long)]
    input: PathBuf,
    /// Rendered image.
    #[arg(long)]
    render: PathBuf,
    /// Predicted texture.
    #[arg(long)]
    texture: PathBuf,
    /// Ground-truth texture; enables the texture-side terms.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Image-space skin mask.
    #[arg(long)]
    mask: PathBuf,
    /// UV skin mask for the standard-deviation term; defaults to every texel.
    #[arg(long)]
    uv_mask: Option<PathBuf>,
    /// Loss weights JSON; defaults to the published weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Blur before the skin regularizers; defaults to 5 px per 1024 texels.
    #[arg(long)]
    blur_sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` (relative to the working directory).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    uv_size: Option<usize>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 512)]
    image_size: usize,
    #[arg(long, default_value_t = 1024)]
    uv_size: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("charface: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
