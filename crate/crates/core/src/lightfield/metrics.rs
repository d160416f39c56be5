//! PSNR and single-scale SSIM on `[0, 1]` intensities.

use ndarray::{s, Array2, ArrayViewD};
use serde::{Deserialize, Serialize};

use super::{check_same_shape, Image, LightField};
use crate::Result;

/// Reported PSNR for identical inputs, and the upper clamp for all others.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Anything PSNR can be computed on.
pub trait Intensities {
    fn intensities(&self) -> ArrayViewD<'_, f64>;
}

impl Intensities for Image {
    fn intensities(&self) -> ArrayViewD<'_, f64> {
        self.view()
    }
}

impl Intensities for LightField {
    fn intensities(&self) -> ArrayViewD<'_, f64> {
        self.data().view().into_dyn()
    }
}

pub fn mse<T: Intensities + ?Sized>(a: &T, b: &T) -> Result<f64> {
    let (a, b) = (a.intensities(), b.intensities());
    check_same_shape(a.shape(), b.shape(), "mse")?;
    let n = a.len().max(1) as f64;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        / n)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// `10·log10(1/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Intensities + ?Sized>(a: &T, b: &T) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_window(size: usize) -> Array2<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w = Array2::from_shape_fn((size, size), |(i, j)| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let total = w.sum();
    w /= total;
    w
}

/// Mean SSIM over all fully-covered 11×11 Gaussian windows (σ = 1.5).
///
/// Images smaller than the window use the largest odd window that fits.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a.data().shape(), b.data().shape(), "ssim")?;
    let (w, h) = a.dims();
    if w == 0 || h == 0 {
        return Ok(1.0);
    }
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let window = gaussian_window(size);
    let (a, b) = (a.data(), b.data());

    let mut total = 0.0;
    let mut count = 0usize;
    for x in 0..=(w - size) {
        for y in 0..=(h - size) {
            let pa = a.slice(s![x..x + size, y..y + size]);
            let pb = b.slice(s![x..x + size, y..y + size]);
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ((wt, &p), &q) in window.iter().zip(pa.iter()).zip(pb.iter()) {
                ma += wt * p;
                mb += wt * q;
                saa += wt * p * p;
                sbb += wt * q * q;
                sab += wt * p * q;
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Quality of a reconstructed light field against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Mean of per-view PSNR values.
    pub psnr_db: f64,
    /// PSNR of the global MSE over all views.
    pub psnr_global_db: f64,
    /// Mean of per-view SSIM values.
    pub ssim: f64,
    /// `per_view[u][v]` PSNR in dB.
    pub per_view: Vec<Vec<f64>>,
}

pub fn quality_report(truth: &LightField, estimate: &LightField) -> Result<QualityReport> {
    check_same_shape(
        truth.data().shape(),
        estimate.data().shape(),
        "quality report",
    )?;
    let (nu, nv) = truth.views();
    let mut per_view = vec![vec![0.0; nv]; nu];
    let mut ssim_sum = 0.0;
    for (u, row) in per_view.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            let (t, e) = (truth.view_image(u, v), estimate.view_image(u, v));
            *cell = psnr(&t, &e)?;
            ssim_sum += ssim(&t, &e)?;
        }
    }
    let n = (nu * nv).max(1) as f64;
    Ok(QualityReport {
        psnr_db: per_view.iter().flatten().sum::<f64>() / n,
        psnr_global_db: psnr(truth, estimate)?,
        ssim: ssim_sum / n,
        per_view,
    })
}
