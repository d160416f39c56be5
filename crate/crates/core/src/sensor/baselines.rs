//! Single-exposure baselines: joint aperture-exposure coding (JAEC), the
//! idealized per-pixel 4-D mask, and the naive lens-array model.

use ndarray::{Array2, Array4, Zip};
use rand::Rng;

use super::{add_frame_noise, coded_images, normalization, SensorConfig};
use crate::aperture::ApertureSchedule;
use crate::lightfield::{check_same_shape, Image, LightField};
use crate::rng::{self, domain};
use crate::{Error, Result};

/// Per-pixel binary exposure masks, one per aperture pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct JaecMask {
    pub p: Vec<Array2<f64>>,
}

impl JaecMask {
    pub fn new(p: Vec<Array2<f64>>) -> Result<Self> {
        if p.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain("JAEC masks must be binary".into()));
        }
        Ok(JaecMask { p })
    }

    /// Bernoulli(1/2) masks.
    pub fn random(seed: u64, n: usize, (x, y): (usize, usize)) -> Self {
        let mut rng = rng::stream(seed, domain::MASKS, 1);
        let p = (0..n)
            .map(|_| {
                Array2::from_shape_fn((x, y), |_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            })
            .collect();
        JaecMask { p }
    }
}

/// `I_{x,y} = Σ_n p⁽ⁿ⁾_{x,y} I⁽ⁿ⁾_{x,y}` in raw units, with frame noise
/// scaled to the normalized range.
pub fn jaec_image(
    lf: &LightField,
    sched: &ApertureSchedule,
    mask: &JaecMask,
    cfg: &SensorConfig,
) -> Result<Image> {
    if mask.p.len() != sched.len() {
        return Err(Error::Shape(format!(
            "{} JAEC masks for {} patterns",
            mask.p.len(),
            sched.len()
        )));
    }
    let coded = coded_images(lf, sched)?;
    let (nx, ny) = lf.spatial();
    let mut out = Array2::zeros((nx, ny));
    for (p, img) in mask.p.iter().zip(&coded) {
        check_same_shape(p.shape(), img.data().shape(), "JAEC mask vs image")?;
        Zip::from(&mut out)
            .and(p)
            .and(img.data())
            .for_each(|o, &m, &i| *o += m * i);
    }
    let k = normalization(sched);
    Ok(add_frame_noise(out, cfg.sigma_frame * k, cfg.rng_seed, 1))
}

/// Per-pixel, per-view transmittance `m_{x,y,u,v} ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Full4DMask {
    pub m: Array4<f64>,
}

impl Full4DMask {
    pub fn new(m: Array4<f64>) -> Result<Self> {
        if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("4-D mask entries must lie in [0, 1]".into()));
        }
        Ok(Full4DMask { m })
    }

    /// Binary Bernoulli(1/2) mask.
    pub fn random(seed: u64, dims: (usize, usize, usize, usize)) -> Self {
        let mut rng = rng::stream(seed, domain::MASKS, 2);
        Full4DMask {
            m: Array4::from_shape_fn(dims, |_| if rng.random::<bool>() { 1.0 } else { 0.0 }),
        }
    }
}

/// `I_{x,y} = Σ_{u,v} m_{x,y,u,v} L_{x,y,u,v}` with frame noise.
pub fn full4d_image(lf: &LightField, mask: &Full4DMask, cfg: &SensorConfig) -> Result<Image> {
    check_same_shape(lf.data().shape(), mask.m.shape(), "4-D mask vs light field")?;
    let (nx, ny, nu, nv) = lf.dims();
    let weighted = lf.data() * &mask.m;
    let out = Array2::from_shape_fn((nx, ny), |(x, y)| {
        weighted.slice(ndarray::s![x, y, .., ..]).sum()
    });
    Ok(add_frame_noise(
        out,
        cfg.sigma_frame * (nu * nv) as f64,
        cfg.rng_seed,
        2,
    ))
}

const LA_FACTOR: usize = 8;

/// Cubic convolution kernel (Keys, a = −0.5).
fn cubic(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Interpolation weights from a low-resolution axis of `n` samples to
/// `n·factor` pixel centers, with edge replication.
fn upsample_taps(n: usize, factor: usize) -> Vec<[(usize, f64); 4]> {
    (0..n * factor)
        .map(|i| {
            let src = (i as f64 + 0.5) / factor as f64 - 0.5;
            let base = src.floor();
            let mut taps = [(0usize, 0.0); 4];
            for (j, tap) in taps.iter_mut().enumerate() {
                let k = base as i64 - 1 + j as i64;
                let w = cubic(src - k as f64);
                *tap = (k.clamp(0, n as i64 - 1) as usize, w);
            }
            taps
        })
        .collect()
}

/// Naive lens-array model: every view is box-averaged to 1/8 resolution and
/// bicubically upsampled back.
pub fn lens_array_baseline(lf: &LightField) -> Result<LightField> {
    let (nx, ny, nu, nv) = lf.dims();
    if nx % LA_FACTOR != 0 || ny % LA_FACTOR != 0 || nx == 0 || ny == 0 {
        return Err(Error::Shape(format!(
            "lens-array model needs spatial size divisible by {LA_FACTOR}, got {nx}x{ny}"
        )));
    }
    let (lx, ly) = (nx / LA_FACTOR, ny / LA_FACTOR);
    let (tx, ty) = (upsample_taps(lx, LA_FACTOR), upsample_taps(ly, LA_FACTOR));
    let mut out = Array4::zeros((nx, ny, nu, nv));
    let area = (LA_FACTOR * LA_FACTOR) as f64;
    for u in 0..nu {
        for v in 0..nv {
            let view = lf.view(u, v);
            let low = Array2::from_shape_fn((lx, ly), |(i, j)| {
                view.slice(ndarray::s![
                    i * LA_FACTOR..(i + 1) * LA_FACTOR,
                    j * LA_FACTOR..(j + 1) * LA_FACTOR
                ])
                .sum()
                    / area
            });
            // Separable: rows first, then columns.
            let mid = Array2::from_shape_fn((nx, ly), |(x, j)| {
                tx[x].iter().map(|&(i, w)| w * low[[i, j]]).sum::<f64>()
            });
            for x in 0..nx {
                for y in 0..ny {
                    out[[x, y, u, v]] = ty[y].iter().map(|&(j, w)| w * mid[[x, j]]).sum::<f64>();
                }
            }
        }
    }
    LightField::from_estimate(out)
}
