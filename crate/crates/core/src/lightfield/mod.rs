//! Light-field data model.
//!
//! A light field is stored as a 4-D array indexed `[x, y, u, v]`: `(x, y)` is
//! the pixel position on the image plane and `(u, v)` the viewpoint on the
//! aperture plane. Indices are zero-based in memory and one-based in file
//! names.

use ndarray::{s, Array2, Array4, ArrayView2, ArrayViewD};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod io;
mod metrics;
mod synth;

pub use io::{load_image_png, load_lightfield, save_image_png, save_lightfield, view_file_name};
pub use metrics::{mse, psnr, quality_report, ssim, Intensities, QualityReport, PSNR_CAP_DB};
pub use synth::{
    suite_scene_spec, synth_scene, synthetic_suite, Layer, Opacity, SceneSpec, TextureSource,
};

/// Default viewpoint grid (8×8).
pub const DEFAULT_VIEWS: usize = 8;

/// Monochrome 4-D light field with finite intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    data: Array4<f64>,
}

impl LightField {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        if let Some(bad) = data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::Domain(format!(
                "light-field intensity {bad} outside [0, 1]"
            )));
        }
        Ok(LightField { data })
    }

    /// Builds a light field from an estimate, clamping into `[0, 1]`.
    ///
    /// Non-finite samples are rejected.
    pub fn from_estimate(mut data: Array4<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite light-field estimate".into()));
        }
        data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(LightField { data })
    }

    pub fn zeros(x: usize, y: usize, u: usize, v: usize) -> Self {
        LightField {
            data: Array4::zeros((x, y, u, v)),
        }
    }

    /// `(X, Y, U, V)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn spatial(&self) -> (usize, usize) {
        let (x, y, _, _) = self.dims();
        (x, y)
    }

    pub fn views(&self) -> (usize, usize) {
        let (_, _, u, v) = self.dims();
        (u, v)
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    /// The sub-aperture image seen from viewpoint `(u, v)`.
    pub fn view(&self, u: usize, v: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., .., u, v])
    }

    pub fn view_image(&self, u: usize, v: usize) -> Image {
        Image {
            data: self.view(u, v).to_owned(),
        }
    }

    /// Epipolar-plane image at fixed image row `y` and viewpoint row `v`,
    /// indexed `[x, u]`.
    pub fn epi_slice(&self, y: usize, v: usize) -> Result<Image> {
        let (_, ny, _, nv) = self.dims();
        if y >= ny {
            return Err(Error::Index(format!("row y={y} not in 0..{ny}")));
        }
        if v >= nv {
            return Err(Error::Index(format!("viewpoint row v={v} not in 0..{nv}")));
        }
        Ok(Image {
            data: self.data.slice(s![.., y, .., v]).to_owned(),
        })
    }
}

/// Nonnegative 2-D intensity array indexed `[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct Image {
    data: Array2<f64>,
}

impl Image {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "image intensity {bad} is not finite and nonnegative"
            )));
        }
        Ok(Image { data })
    }

    pub fn zeros(x: usize, y: usize) -> Self {
        Image {
            data: Array2::zeros((x, y)),
        }
    }

    pub fn constant(x: usize, y: usize, value: f64) -> Result<Self> {
        Image::new(Array2::from_elem((x, y), value))
    }

    /// `(X, Y)`.
    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn view(&self) -> ArrayViewD<'_, f64> {
        self.data.view().into_dyn()
    }

    pub(crate) fn from_array_unchecked(data: Array2<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite() && *v >= 0.0));
        Image { data }
    }
}

impl TryFrom<Array2<f64>> for Image {
    type Error = Error;

    fn try_from(data: Array2<f64>) -> Result<Self> {
        Image::new(data)
    }
}

impl From<Image> for Array2<f64> {
    fn from(img: Image) -> Self {
        img.data
    }
}

pub(crate) fn check_same_shape(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}
