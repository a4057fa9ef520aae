//! Feature extractors for the perceptual and style losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;
use crate::par;

/// Maps a raster to an ordered list of activation maps.
///
/// Activations are stored as [`Image`]s whose channel count is the layer width.
/// Implementations must be deterministic and reentrant.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, input: &Image) -> Vec<Image>;

    /// Vector-Jacobian product: given `∂L/∂activation` for every layer, returns
    /// `∂L/∂input`.
    fn backward(&self, input: &Image, grads: &[Image]) -> Image;
}

/// Single layer equal to the input.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn extract(&self, input: &Image) -> Vec<Image> {
        vec![input.clone()]
    }

    fn backward(&self, _input: &Image, grads: &[Image]) -> Image {
        grads[0].clone()
    }
}

/// 3×3 convolution, stride 2, zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Indexed `[out][in][ky][kx]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn output_size(width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(2), height.div_ceil(2))
    }

    /// Pre-activation output.
    pub fn forward(&self, input: &Image) -> Image {
        let (w, h) = (input.width(), input.height());
        let (ow, oh) = Self::output_size(w, h);
        let co = self.out_channels;
        let mut out = Image::new(ow, oh, co);
        par::for_each_row(out.data_mut(), ow * co, |oy, row| {
            for ox in 0..ow {
                let px = &mut row[ox * co..(ox + 1) * co];
                px.copy_from_slice(&self.bias);
                for ky in 0..3 {
                    let Some(y) = (2 * oy + ky).checked_sub(1).filter(|y| *y < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        let Some(x) = (2 * ox + kx).checked_sub(1).filter(|x| *x < w) else {
                            continue;
                        };
                        let src = input.pixel(x, y);
                        for (o, v) in px.iter_mut().enumerate() {
                            for (i, s) in src.iter().enumerate() {
                                *v += self.weight(o, i, ky, kx) * s;
                            }
                        }
                    }
                }
            }
        });
        out
    }

    /// Gradient with respect to the layer input given `∂L/∂pre-activation`.
    pub fn backward(&self, grad_out: &Image, width: usize, height: usize) -> Image {
        let ci = self.in_channels;
        let mut g = Image::new(width, height, ci);
        for oy in 0..grad_out.height() {
            for ox in 0..grad_out.width() {
                let go = grad_out.pixel(ox, oy).to_vec();
                for ky in 0..3 {
                    let Some(y) = (2 * oy + ky).checked_sub(1).filter(|y| *y < height) else {
                        continue;
                    };
                    for kx in 0..3 {
                        let Some(x) = (2 * ox + kx).checked_sub(1).filter(|x| *x < width) else {
                            continue;
                        };
                        let dst = g.pixel_mut(x, y);
                        for (o, gv) in go.iter().enumerate() {
                            for (i, d) in dst.iter_mut().enumerate() {
                                *d += self.weight(o, i, ky, kx) * gv;
                            }
                        }
                    }
                }
            }
        }
        g
    }
}

/// Stack of strided 3×3 convolutions with ReLU, weights drawn from a seeded RNG.
///
/// Each layer's rectified output is one activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvExtractor {
    pub layers: Vec<ConvLayer>,
}

impl ConvExtractor {
    pub const DEFAULT_SEED: u64 = 0x5EED_FACE;

    /// `channels` lists the input width followed by each layer's width.
    pub fn seeded(channels: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = channels
            .windows(2)
            .map(|pair| {
                let (ci, co) = (pair[0], pair[1]);
                let bound = (6.0 / (9 * ci) as f64).sqrt();
                let weights = (0..co * ci * 9)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                let bias = (0..co).map(|_| rng.random_range(-0.05..0.05)).collect();
                ConvLayer {
                    in_channels: ci,
                    out_channels: co,
                    weights,
                    bias,
                }
            })
            .collect();
        ConvExtractor { layers }
    }

    /// Pre-activations and rectified activations of every layer.
    pub fn forward(&self, input: &Image) -> (Vec<Image>, Vec<Image>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.forward(post.last().unwrap_or(input));
            let mut a = z.clone();
            a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            pre.push(z);
            post.push(a);
        }
        (pre, post)
    }
}

impl Default for ConvExtractor {
    /// Three layers, 3 → 8 → 16 → 32 channels.
    fn default() -> Self {
        Self::seeded(&[3, 8, 16, 32], Self::DEFAULT_SEED)
    }
}

impl FeatureExtractor for ConvExtractor {
    fn extract(&self, input: &Image) -> Vec<Image> {
        self.forward(input).1
    }

    fn backward(&self, input: &Image, grads: &[Image]) -> Image {
        let (pre, post) = self.forward(input);
        let mut carry: Option<Image> = None;
        for l in (0..self.layers.len()).rev() {
            let mut g = grads[l].clone();
            if let Some(c) = carry.take() {
                g.data_mut().iter_mut().zip(c.data()).for_each(|(a, b)| *a += b);
            }
            for (v, z) in g.data_mut().iter_mut().zip(pre[l].data()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            let below = if l == 0 { input } else { &post[l - 1] };
            carry = Some(self.layers[l].backward(&g, below.width(), below.height()));
        }
        carry.unwrap_or_else(|| Image::new(input.width(), input.height(), input.channels()))
    }
}
