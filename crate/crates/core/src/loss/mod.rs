//! Training objectives with analytic gradients, plus PSNR and SSIM.
//!
//! All L1 norms sum absolute differences over channels. Losses are symmetric
//! where their formulas are, and every gradient is returned for both raster
//! inputs so callers can differentiate through either side.

mod features;
mod metrics;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, MaskSpace, SkinMask};
use crate::par;

pub use features::{ConvExtractor, ConvLayer, FeatureExtractor, IdentityExtractor};
pub use metrics::{psnr, ssim, PSNR_CAP_DB, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

/// Probability clamp applied before every logarithm.
pub const PROBABILITY_EPSILON: f64 = 1e-7;

/// A loss value with gradients for both inputs.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub value: f64,
    pub d_a: Image,
    pub d_b: Image,
}

impl PairGradient {
    fn from_d_a(value: f64, d_a: Image) -> Self {
        let mut d_b = d_a.clone();
        d_b.data_mut().iter_mut().for_each(|v| *v = -*v);
        PairGradient { value, d_a, d_b }
    }
}

/// A loss value with the gradient of its single input.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub value: f64,
    pub d: Image,
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Masked image L1: `Σ_{i∈mask} ‖Iᵢ − Rᵢ‖₁ / |mask|`.
pub fn pixel_loss_image(input: &Image, render: &Image, mask: &SkinMask) -> Result<f64> {
    Ok(pixel_loss_image_grad(input, render, mask)?.value)
}

pub fn pixel_loss_image_grad(input: &Image, render: &Image, mask: &SkinMask) -> Result<PairGradient> {
    input.check_same_shape(render, "pixel_loss_image")?;
    mask.check_space(MaskSpace::Image, "pixel_loss_image")?;
    mask.check_fits(input, "pixel_loss_image")?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::validation("pixel_loss_image: mask has no set pixels"));
    }
    let ch = input.channels();
    let inv = 1.0 / n as f64;
    let mut d = Image::new(input.width(), input.height(), ch);
    let value = par::sum_range(mask.bits.len(), |p| {
        if !mask.bits[p] {
            return 0.0;
        }
        (0..ch)
            .map(|c| (input.data()[p * ch + c] - render.data()[p * ch + c]).abs())
            .sum()
    }) * inv;
    for p in (0..mask.bits.len()).filter(|&p| mask.bits[p]) {
        for c in 0..ch {
            let k = p * ch + c;
            d.data_mut()[k] = sign(input.data()[k] - render.data()[k]) * inv;
        }
    }
    Ok(PairGradient::from_d_a(value, d))
}

/// Texture L1 averaged over texels: `(1/N)·Σᵢ‖Fᵢ − Gᵢ‖₁`.
pub fn pixel_loss_texture(f: &Image, g: &Image) -> Result<f64> {
    Ok(pixel_loss_texture_grad(f, g)?.value)
}

pub fn pixel_loss_texture_grad(f: &Image, g: &Image) -> Result<PairGradient> {
    f.check_same_shape(g, "pixel_loss_texture")?;
    let n = f.pixel_count().max(1) as f64;
    let (fd, gd) = (f.data(), g.data());
    let value = par::sum_range(fd.len(), |k| (fd[k] - gd[k]).abs()) / n;
    let d = Image::from_vec(
        f.width(),
        f.height(),
        f.channels(),
        fd.iter().zip(gd).map(|(a, b)| sign(a - b) / n).collect(),
    )?;
    Ok(PairGradient::from_d_a(value, d))
}

/// `Σᵢ (1/Nᵢ)·‖φᵢ(x) − φᵢ(x′)‖₁` over the extractor's layers.
pub fn perceptual_loss(x: &Image, y: &Image, fx: &dyn FeatureExtractor) -> Result<f64> {
    x.check_same_shape(y, "perceptual_loss")?;
    let (a, b) = (fx.extract(x), fx.extract(y));
    Ok(a.iter()
        .zip(&b)
        .map(|(pa, pb)| {
            let n = pa.data().len().max(1) as f64;
            par::sum_range(pa.data().len(), |k| (pa.data()[k] - pb.data()[k]).abs()) / n
        })
        .sum())
}

pub fn perceptual_loss_grad(x: &Image, y: &Image, fx: &dyn FeatureExtractor) -> Result<PairGradient> {
    let value = perceptual_loss(x, y, fx)?;
    let (a, b) = (fx.extract(x), fx.extract(y));
    let ga: Vec<Image> = a
        .iter()
        .zip(&b)
        .map(|(pa, pb)| {
            let n = pa.data().len().max(1) as f64;
            let data = pa.data().iter().zip(pb.data()).map(|(u, v)| sign(u - v) / n).collect();
            Image::from_vec(pa.width(), pa.height(), pa.channels(), data).expect("layer shape")
        })
        .collect();
    let gb: Vec<Image> = ga.iter().map(negated).collect();
    Ok(PairGradient {
        value,
        d_a: fx.backward(x, &ga),
        d_b: fx.backward(y, &gb),
    })
}

fn negated(img: &Image) -> Image {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = -*v);
    out
}

/// Gram matrix `φ̂·φ̂ᵀ / (C·H·W)` of an activation map, row-major `C×C`.
pub fn gram_matrix(act: &Image) -> Vec<f64> {
    let c = act.channels();
    let p = act.pixel_count();
    let norm = (c * p).max(1) as f64;
    let d = act.data();
    let mut g = vec![0.0; c * c];
    for a in 0..c {
        for b in a..c {
            let v = par::sum_range(p, |i| d[i * c + a] * d[i * c + b]) / norm;
            g[a * c + b] = v;
            g[b * c + a] = v;
        }
    }
    g
}

/// Mean over layers of the entrywise L1 distance between Gram matrices.
pub fn style_loss(x: &Image, y: &Image, fx: &dyn FeatureExtractor) -> Result<f64> {
    Ok(style_loss_grad(x, y, fx)?.value)
}

pub fn style_loss_grad(x: &Image, y: &Image, fx: &dyn FeatureExtractor) -> Result<PairGradient> {
    x.check_same_shape(y, "style_loss")?;
    let (a, b) = (fx.extract(x), fx.extract(y));
    let layers = a.len().max(1) as f64;
    let mut value = 0.0;
    let mut ga = Vec::with_capacity(a.len());
    let mut gb = Vec::with_capacity(a.len());
    for (pa, pb) in a.iter().zip(&b) {
        let (gram_a, gram_b) = (gram_matrix(pa), gram_matrix(pb));
        value += gram_a.iter().zip(&gram_b).map(|(u, v)| (u - v).abs()).sum::<f64>() / layers;
        // ∂L/∂Gram_a = sign(Gₐ − G_b)/J; ∂Gram/∂φ = φ·(S + Sᵀ)/(C·H·W) with S symmetric.
        let s: Vec<f64> = gram_a.iter().zip(&gram_b).map(|(u, v)| sign(u - v) / layers).collect();
        ga.push(gram_backward(pa, &s, 1.0));
        gb.push(gram_backward(pb, &s, -1.0));
    }
    Ok(PairGradient {
        value,
        d_a: fx.backward(x, &ga),
        d_b: fx.backward(y, &gb),
    })
}

fn gram_backward(act: &Image, s: &[f64], scale: f64) -> Image {
    let c = act.channels();
    let norm = (c * act.pixel_count()).max(1) as f64;
    let mut out = act.clone();
    for (dst, src) in out.data_mut().chunks_exact_mut(c).zip(act.data().chunks_exact(c)) {
        for a in 0..c {
            let mut v = 0.0;
            for b in 0..c {
                v += src[b] * (s[a * c + b] + s[b * c + a]);
            }
            dst[a] = scale * v / norm;
        }
    }
    out
}

/// Left-right symmetry of a blurred texture:
/// `(2/(W·H))·Σ_rows Σ_{j<W/2} ‖F′_{i,j} − F′_{i,W−1−j}‖₁`.
pub fn symmetry_loss(blurred: &Image) -> f64 {
    symmetry_loss_grad(blurred).value
}

pub fn symmetry_loss_grad(blurred: &Image) -> Gradient {
    let (w, h, ch) = (blurred.width(), blurred.height(), blurred.channels());
    let scale = 2.0 / (w * h).max(1) as f64;
    let mut d = Image::new(w, h, ch);
    let mut value = 0.0;
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w / 2 {
            let m = w - 1 - x;
            for c in 0..ch {
                let diff = blurred.get(x, y, c) - blurred.get(m, y, c);
                row += diff.abs();
                let s = sign(diff) * scale;
                d.set(x, y, c, s);
                d.set(m, y, c, -s);
            }
        }
        value += row;
    }
    Gradient {
        value: value * scale,
        d,
    }
}

/// Per-channel population standard deviation over the masked texels, averaged
/// over channels.
pub fn skin_std_loss(blurred: &Image, mask: &SkinMask) -> Result<f64> {
    Ok(skin_std_loss_grad(blurred, mask)?.value)
}

pub fn skin_std_loss_grad(blurred: &Image, mask: &SkinMask) -> Result<Gradient> {
    mask.check_space(MaskSpace::Uv, "skin_std_loss")?;
    mask.check_fits(blurred, "skin_std_loss")?;
    let n = mask.count();
    if n < 2 {
        return Err(Error::validation(format!(
            "skin_std_loss needs at least 2 masked texels, got {n}"
        )));
    }
    let ch = blurred.channels();
    let nf = n as f64;
    let idx: Vec<usize> = (0..mask.bits.len()).filter(|&p| mask.bits[p]).collect();
    let data = blurred.data();
    let mut d = Image::new(blurred.width(), blurred.height(), ch);
    let mut value = 0.0;
    for c in 0..ch {
        // Shift by the first masked value so constant inputs give exactly zero.
        let shift = data[idx[0] * ch + c];
        let offset = par::sum_range(n, |k| data[idx[k] * ch + c] - shift) / nf;
        let var = par::sum_range(n, |k| (data[idx[k] * ch + c] - shift - offset).powi(2)) / nf;
        let mean = shift + offset;
        let std = var.sqrt();
        value += std / ch as f64;
        if std > 0.0 {
            for &p in &idx {
                d.data_mut()[p * ch + c] = (data[p * ch + c] - mean) / (nf * std * ch as f64);
            }
        }
    }
    Ok(Gradient { value, d })
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)
}

/// Maps a raster to the probability that it is real.
pub trait DiscriminatorScore: Send + Sync {
    fn score(&self, input: &Image) -> f64;
}

/// Non-saturating generator loss `−log D(x′)`.
pub fn adversarial_generator_loss(score: f64) -> f64 {
    -clamp_probability(score).ln()
}

/// `d/ds` of [`adversarial_generator_loss`] (zero where the clamp is active).
pub fn adversarial_generator_grad(score: f64) -> f64 {
    let s = clamp_probability(score);
    if s == score {
        -1.0 / s
    } else {
        0.0
    }
}

/// Discriminator loss `−log D(x) − log(1 − D(x′))`.
pub fn adversarial_discriminator_loss(real_score: f64, fake_score: f64) -> f64 {
    -clamp_probability(real_score).ln() - (1.0 - clamp_probability(fake_score)).ln()
}

/// Weights of the combined generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_l1: f64,
    pub lambda_perc: f64,
    pub lambda_sty: f64,
    pub lambda_sym: f64,
    pub lambda_std: f64,
    pub lambda_adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_l1: 3.0,
            lambda_perc: 1.0,
            lambda_sty: 1.0,
            lambda_sym: 0.1,
            lambda_std: 3.0,
            lambda_adv: 0.001,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_l1", self.lambda_l1),
            ("lambda_perc", self.lambda_perc),
            ("lambda_sty", self.lambda_sty),
            ("lambda_sym", self.lambda_sym),
            ("lambda_std", self.lambda_std),
            ("lambda_adv", self.lambda_adv),
        ];
        for (name, w) in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::validation(format!("{name} must be finite and non-negative, got {w}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: LossWeights =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        w.validate()?;
        Ok(w)
    }
}

/// Raw loss terms. Terms that need the paired ground-truth texture are optional,
/// as are the adversarial terms (they need discriminators).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub image_l1: f64,
    pub texture_l1: Option<f64>,
    pub image_perceptual: f64,
    pub texture_perceptual: Option<f64>,
    pub image_style: f64,
    pub texture_style: Option<f64>,
    pub symmetry: f64,
    pub skin_std: f64,
    pub image_adversarial: Option<f64>,
    pub texture_adversarial: Option<f64>,
}

impl LossComponents {
    /// Every term set to `value`, ground-truth and adversarial terms included.
    pub fn uniform(value: f64) -> Self {
        LossComponents {
            image_l1: value,
            texture_l1: Some(value),
            image_perceptual: value,
            texture_perceptual: Some(value),
            image_style: value,
            texture_style: Some(value),
            symmetry: value,
            skin_std: value,
            image_adversarial: Some(value),
            texture_adversarial: Some(value),
        }
    }

    /// Drops the three terms that compare against a ground-truth texture.
    pub fn without_ground_truth(mut self) -> Self {
        self.texture_l1 = None;
        self.texture_perceptual = None;
        self.texture_style = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub name: String,
    pub value: f64,
    pub weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: Vec<WeightedTerm>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn term(&self, name: &str) -> Option<&WeightedTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Weighted sum of the present terms with a per-term breakdown.
pub fn total_generator_loss(c: &LossComponents, w: &LossWeights) -> Result<LossBreakdown> {
    w.validate()?;
    let entries = [
        ("image_l1", Some(c.image_l1), w.lambda_l1),
        ("texture_l1", c.texture_l1, w.lambda_l1),
        ("image_perceptual", Some(c.image_perceptual), w.lambda_perc),
        ("texture_perceptual", c.texture_perceptual, w.lambda_perc),
        ("image_style", Some(c.image_style), w.lambda_sty),
        ("texture_style", c.texture_style, w.lambda_sty),
        ("symmetry", Some(c.symmetry), w.lambda_sym),
        ("skin_std", Some(c.skin_std), w.lambda_std),
        ("image_adversarial", c.image_adversarial, w.lambda_adv),
        ("texture_adversarial", c.texture_adversarial, w.lambda_adv),
    ];
    let mut terms = Vec::new();
    let mut total = 0.0;
    for (name, value, weight) in entries {
        let Some(value) = value else { continue };
        if !value.is_finite() {
            return Err(Error::validation(format!("loss term {name} is not finite ({value})")));
        }
        let weighted = weight * value;
        total += weighted;
        terms.push(WeightedTerm {
            name: name.to_string(),
            value,
            weight,
            weighted,
        });
    }
    Ok(LossBreakdown { terms, total })
}

#[cfg(test)]
mod tests;
