//! Image-quality metrics.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;

/// PSNR reported for identical inputs and upper bound for all inputs.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// `10·log10(1/MSE)` over all values, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    let n = a.data().len();
    if n == 0 {
        return Err(Error::validation("psnr of empty rasters"));
    }
    let mse = par::sum_range(n, |k| (a.data()[k] - b.data()[k]).powi(2)) / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mean local SSIM over every full 11×11 window, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::validation(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let g = window();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..ch {
        let rows = par::map_range(oh, |oy| {
            let mut sum = 0.0;
            for ox in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (ky, gy) in g.iter().enumerate() {
                    for (kx, gx) in g.iter().enumerate() {
                        let wgt = gy * gx;
                        let k = ((oy + ky) * w + ox + kx) * ch + c;
                        let (va, vb) = (a.data()[k], b.data()[k]);
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                }
                let (mab, maa, mbb) = (ma * mb, ma * ma, mb * mb);
                let (va, vb, cov) = (saa - maa, sbb - mbb, sab - mab);
                sum += ((mab + mab + SSIM_C1) * (cov + cov + SSIM_C2))
                    / ((maa + mbb + SSIM_C1) * (va + vb + SSIM_C2));
            }
            sum
        });
        total += rows.into_iter().sum::<f64>() / (ow * oh) as f64;
    }
    Ok(total / ch as f64)
}
