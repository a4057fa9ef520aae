//! Floating-point rasters, texture maps, skin masks and PNG input/output.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Default texture-map edge length in texels.
pub const DEFAULT_TEXTURE_SIZE: usize = 1024;

/// Row-major raster with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::validation(format!(
                "raster data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an RGB image from a per-pixel function of `(x, y)`.
    pub fn from_fn_rgb(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Image::new(width, height, 3);
        for y in 0..height {
            for x in 0..width {
                img.pixel_mut(x, y).copy_from_slice(&f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{what}: shape mismatch {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y) + c;
        self.data[i] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.pixel(x, y);
        [p[0], p[1], p[2]]
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Left-right mirror: column `j` swaps with `width - 1 - j`.
    pub fn mirrored(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = self.index(self.width - 1 - x, y);
                let dst = self.index(x, y);
                out.data[dst..dst + self.channels]
                    .copy_from_slice(&self.data[src..src + self.channels]);
            }
        }
        out
    }

    /// Bilinear taps at continuous texel coordinates, texel centers at integers,
    /// clamped to the edge.
    pub fn bilinear_taps(&self, x: f64, y: f64) -> BilinearTaps {
        bilinear_taps(self.width, self.height, x, y)
    }

    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let taps = self.bilinear_taps(x, y);
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..4 {
            let base = taps.pixel[k] * self.channels;
            for (c, o) in out.iter_mut().enumerate() {
                *o += taps.weight[k] * self.data[base + c];
            }
        }
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let dynamic = decode(path)?;
        let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
        let data = match dynamic {
            DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_) => dynamic
                .to_rgb8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            other => other
                .to_rgb16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
        };
        Image::from_vec(w, h, 3, data)
    }

    /// Writes an RGB image as PNG. Values are clamped to [0, 1] and rounded.
    pub fn save_png(&self, path: &Path, depth: BitDepth) -> Result<()> {
        if self.channels != 3 {
            return Err(Error::validation("only 3-channel rasters can be written as PNG"));
        }
        let (w, h) = (self.width as u32, self.height as u32);
        let result = match depth {
            BitDepth::Eight => {
                let raw: Vec<u8> = self.data.iter().map(|v| quantize(*v, 255.0) as u8).collect();
                ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
                    .expect("buffer size")
                    .save_with_format(path, image::ImageFormat::Png)
            }
            BitDepth::Sixteen => {
                let raw: Vec<u16> = self.data.iter().map(|v| quantize(*v, 65535.0) as u16).collect();
                ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw)
                    .expect("buffer size")
                    .save_with_format(path, image::ImageFormat::Png)
            }
        };
        result.map_err(|e| Error::format(path, e.to_string()))
    }
}

fn quantize(v: f64, scale: f64) -> f64 {
    (v.clamp(0.0, 1.0) * scale).round()
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Four pixel indices and their bilinear weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub pixel: [usize; 4],
    pub weight: [f64; 4],
}

pub fn bilinear_taps(width: usize, height: usize, x: f64, y: f64) -> BilinearTaps {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    BilinearTaps {
        pixel: [
            y0 * width + x0,
            y0 * width + x1,
            y1 * width + x0,
            y1 * width + x1,
        ],
        weight: [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
    }
}

/// Maps a UV coordinate (v pointing up) to continuous texel coordinates.
#[inline]
pub fn uv_to_texel(u: f64, v: f64, width: usize, height: usize) -> (f64, f64) {
    (u * width as f64 - 0.5, (1.0 - v) * height as f64 - 0.5)
}

/// RGB raster in UV space with an optional per-texel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureMap {
    pub rgb: Image,
    pub validity: Option<Vec<bool>>,
}

impl TextureMap {
    pub fn new(rgb: Image) -> Result<Self> {
        Self::with_validity(rgb, None)
    }

    pub fn with_validity(rgb: Image, validity: Option<Vec<bool>>) -> Result<Self> {
        if rgb.channels() != 3 {
            return Err(Error::validation("texture maps have exactly 3 channels"));
        }
        if let Some(v) = &validity {
            if v.len() != rgb.pixel_count() {
                return Err(Error::validation("validity mask size differs from texture size"));
            }
        }
        Ok(TextureMap { rgb, validity })
    }

    pub fn constant(size: usize, color: [f64; 3]) -> Self {
        TextureMap {
            rgb: Image::from_fn_rgb(size, size, |_, _| color),
            validity: None,
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn is_valid(&self, texel: usize) -> bool {
        self.validity.as_ref().is_none_or(|v| v[texel])
    }

    pub fn valid_count(&self) -> usize {
        match &self.validity {
            Some(v) => v.iter().filter(|b| **b).count(),
            None => self.rgb.pixel_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSpace {
    /// Portrait image space.
    Image,
    /// Texture UV space.
    Uv,
}

/// Binary skin-region mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkinMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub space: MaskSpace,
}

impl SkinMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>, space: MaskSpace) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::validation(format!(
                "mask has {} bits, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(SkinMask {
            width,
            height,
            bits,
            space,
        })
    }

    pub fn full(width: usize, height: usize, space: MaskSpace) -> Self {
        SkinMask {
            width,
            height,
            bits: vec![true; width * height],
            space,
        }
    }

    pub fn from_fn(width: usize, height: usize, space: MaskSpace, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        SkinMask {
            width,
            height,
            bits,
            space,
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub(crate) fn check_space(&self, space: MaskSpace, what: &str) -> Result<()> {
        if self.space == space {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{what}: mask is in {:?} space, expected {:?}",
                self.space, space
            )))
        }
    }

    pub(crate) fn check_fits(&self, image: &Image, what: &str) -> Result<()> {
        if self.width == image.width() && self.height == image.height() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{what}: mask is {}x{}, raster is {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )))
        }
    }

    /// Loads a grayscale PNG; pixels brighter than 127 are set.
    pub fn load_png(path: &Path, space: MaskSpace) -> Result<SkinMask> {
        let luma = decode(path)?.to_luma8();
        let (w, h) = (luma.width() as usize, luma.height() as usize);
        let bits = luma.into_raw().into_iter().map(|v| v > 127).collect();
        SkinMask::new(w, h, bits, space)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        ImageBuffer::<Luma<u8>, _>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}
