//! Layered synthetic scenes with per-layer disparity.

use std::path::PathBuf;

use ndarray::{Array2, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{load_image_png, LightField, DEFAULT_VIEWS};
use crate::rng::{self, domain};
use crate::{Error, Result};

/// A stack of fronto-parallel layers, listed back to front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub layers: Vec<Layer>,
    #[serde(default = "default_views")]
    pub views: [usize; 2],
}

fn default_views() -> [usize; 2] {
    [DEFAULT_VIEWS, DEFAULT_VIEWS]
}

impl SceneSpec {
    pub fn new(layers: Vec<Layer>) -> Self {
        SceneSpec {
            layers,
            views: default_views(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub texture: TextureSource,
    /// Pixels of shift per unit viewpoint step.
    pub disparity: f64,
    #[serde(default)]
    pub opacity: Opacity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureSource {
    /// Smooth value noise plus fine grain, deterministic in `seed`.
    Procedural {
        seed: u64,
        #[serde(default = "default_cell")]
        cell: f64,
    },
    Constant {
        value: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_cell() -> f64 {
    6.0
}

/// Opacity support of a layer, in reference-view pixel coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opacity {
    #[default]
    Full,
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Disk {
        cx: f64,
        cy: f64,
        r: f64,
    },
}

impl Opacity {
    fn raster(&self, w: usize, h: usize) -> Array2<f64> {
        Array2::from_shape_fn((w, h), |(x, y)| {
            let (x, y) = (x as f64, y as f64);
            let inside = match *self {
                Opacity::Full => true,
                Opacity::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
                Opacity::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            };
            if inside {
                1.0
            } else {
                0.0
            }
        })
    }
}

impl TextureSource {
    fn raster(&self, w: usize, h: usize) -> Result<Array2<f64>> {
        match self {
            TextureSource::Constant { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(Error::Spec(format!(
                        "constant texture {value} outside [0, 1]"
                    )));
                }
                Ok(Array2::from_elem((w, h), *value))
            }
            TextureSource::File { path } => Ok(load_image_png(path)?.into_data()),
            TextureSource::Procedural { seed, cell } => {
                if !(cell.is_finite() && *cell >= 1.0) {
                    return Err(Error::Spec(format!(
                        "texture cell size {cell} must be >= 1"
                    )));
                }
                Ok(value_noise(*seed, *cell, w, h))
            }
        }
    }
}

fn value_noise(seed: u64, cell: f64, w: usize, h: usize) -> Array2<f64> {
    let mut rng = rng::stream(seed, domain::TEXTURE, 0);
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let coarse = Array2::from_shape_fn((gw, gh), |_| rng.random::<f64>());
    Array2::from_shape_fn((w, h), |(x, y)| {
        let smooth = sample_bilinear(&coarse, x as f64 / cell, y as f64 / cell);
        let grain: f64 = rng.random();
        (0.8 * smooth + 0.2 * grain).clamp(0.0, 1.0)
    })
}

/// Bilinear sample at continuous `(x, y)`, clamping out-of-range samples to
/// the nearest edge.
pub(crate) fn sample_bilinear(img: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (w, h) = img.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img[[x0, y0]] * (1.0 - fx) + img[[x1, y0]] * fx;
    let bottom = img[[x0, y1]] * (1.0 - fx) + img[[x1, y1]] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Renders a layered scene into a light field of `width × height` pixels.
///
/// View `(u, v)` shows each layer translated by `d·(u − u₀, v − v₀)`, with
/// `(u₀, v₀)` the grid center (4.5, 4.5 in one-based indices for 8×8).
/// Layers are composited back to front with their opacity.
pub fn synth_scene(spec: &SceneSpec, width: usize, height: usize) -> Result<LightField> {
    if spec.layers.is_empty() {
        return Err(Error::Spec("scene has no layers".into()));
    }
    if width < 16 || height < 16 {
        return Err(Error::Spec(format!(
            "scene size {width}x{height} below 16x16"
        )));
    }
    let [nu, nv] = spec.views;
    if nu == 0 || nv == 0 {
        return Err(Error::Spec("empty viewpoint grid".into()));
    }
    let (cu, cv) = ((nu as f64 - 1.0) / 2.0, (nv as f64 - 1.0) / 2.0);

    let mut out = Array4::<f64>::zeros((width, height, nu, nv));
    for layer in &spec.layers {
        if !layer.disparity.is_finite() {
            return Err(Error::Spec("non-finite disparity".into()));
        }
        let tex = layer.texture.raster(width, height)?;
        let alpha = layer.opacity.raster(tex.dim().0, tex.dim().1);
        let full = matches!(layer.opacity, Opacity::Full);
        for u in 0..nu {
            for v in 0..nv {
                let sx = layer.disparity * (u as f64 - cu);
                let sy = layer.disparity * (v as f64 - cv);
                for x in 0..width {
                    for y in 0..height {
                        let (px, py) = (x as f64 - sx, y as f64 - sy);
                        let a = if full {
                            1.0
                        } else {
                            sample_bilinear(&alpha, px, py)
                        };
                        if a == 0.0 {
                            continue;
                        }
                        let t = sample_bilinear(&tex, px, py);
                        let cell = &mut out[[x, y, u, v]];
                        *cell = *cell * (1.0 - a) + t * a;
                    }
                }
            }
        }
    }
    LightField::new(out)
}

/// Layout of scene `index` of the standard synthetic suite: a textured
/// background behind the focal plane, a rectangle near it and a disk in
/// front, each with random texture, placement and disparity.
pub fn suite_scene_spec(seed: u64, index: usize, size: usize) -> SceneSpec {
    let mut rng = rng::stream(seed, domain::SUITE, index as u64);
    let f = size as f64;
    let mut texture = |cell: (f64, f64)| TextureSource::Procedural {
        seed: rng.random(),
        cell: rng.random_range(cell.0..cell.1),
    };
    let (back, mid, front) = (
        texture((4.0, 8.0)),
        texture((3.0, 6.0)),
        texture((2.0, 5.0)),
    );
    let x0 = rng.random_range(0.0..f / 2.0);
    let y0 = rng.random_range(0.0..f / 2.0);
    let (w, h) = (
        rng.random_range(f / 4.0..f / 2.0),
        rng.random_range(f / 4.0..f / 2.0),
    );
    let (cx, cy) = (
        rng.random_range(f / 4.0..3.0 * f / 4.0),
        rng.random_range(f / 4.0..3.0 * f / 4.0),
    );
    let r = rng.random_range(f / 6.0..f / 3.0);
    SceneSpec::new(vec![
        Layer {
            texture: back,
            disparity: rng.random_range(-1.5..-0.5),
            opacity: Opacity::Full,
        },
        Layer {
            texture: mid,
            disparity: rng.random_range(-0.3..0.5),
            opacity: Opacity::Rect {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
            },
        },
        Layer {
            texture: front,
            disparity: rng.random_range(0.8..1.8),
            opacity: Opacity::Disk { cx, cy, r },
        },
    ])
}

/// `count` scenes of `size × size` pixels from [`suite_scene_spec`].
pub fn synthetic_suite(seed: u64, count: usize, size: usize) -> Result<Vec<LightField>> {
    (0..count)
        .map(|i| synth_scene(&suite_scene_spec(seed, i, size), size, size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    fn textured(seed: u64, d: f64) -> Layer {
        Layer {
            texture: TextureSource::Procedural { seed, cell: 4.0 },
            disparity: d,
            opacity: Opacity::Full,
        }
    }

    #[test]
    fn suite_is_deterministic_and_varied() {
        let a = synthetic_suite(1, 3, 16).unwrap();
        assert_eq!(a, synthetic_suite(1, 3, 16).unwrap());
        assert_ne!(a[0], a[1]);
        assert_ne!(a[0], synthetic_suite(2, 1, 16).unwrap()[0]);
        // Parallax: side views differ from the center.
        assert_ne!(a[0].view(0, 0), a[0].view(7, 7));
    }

    #[test]
    fn zero_disparity_views_identical() {
        let lf = synth_scene(&SceneSpec::new(vec![textured(3, 0.0)]), 20, 16).unwrap();
        assert_eq!(lf.dims(), (20, 16, 8, 8));
        let reference = lf.view(0, 0).to_owned();
        for u in 0..8 {
            for v in 0..8 {
                assert_eq!(lf.view(u, v), reference);
            }
        }
    }

    #[test]
    fn unit_disparity_translates_one_pixel() {
        let lf = synth_scene(&SceneSpec::new(vec![textured(9, 1.0)]), 24, 24).unwrap();
        // Away from the clamped left border, view u+1 is view u moved by +1 in x.
        for u in 0..7 {
            for v in 0..8 {
                let next = lf.data().slice(s![8..20, .., u + 1, v]);
                let here = lf.data().slice(s![7..19, .., u, v]);
                for (a, b) in next.iter().zip(here.iter()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_and_small_specs_rejected() {
        assert!(matches!(
            synth_scene(&SceneSpec::new(vec![]), 16, 16),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            synth_scene(&SceneSpec::new(vec![textured(1, 0.0)]), 15, 16),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            synth_scene(&SceneSpec::new(vec![textured(1, f64::NAN)]), 16, 16),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn procedural_texture_is_seeded() {
        let a = value_noise(5, 4.0, 16, 16);
        assert_eq!(a, value_noise(5, 4.0, 16, 16));
        assert_ne!(a, value_noise(6, 4.0, 16, 16));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scene_spec_json_shape() {
        let spec: SceneSpec = serde_json::from_str(
            r#"{"layers":[{"texture":{"procedural":{"seed":1}},"disparity":-2.0},
                          {"texture":{"constant":{"value":0.5}},"disparity":2.0,
                           "opacity":{"disk":{"cx":8,"cy":8,"r":4}}}]}"#,
        )
        .unwrap();
        assert_eq!(spec.views, [8, 8]);
        assert_eq!(spec.layers.len(), 2);
        assert!(matches!(spec.layers[1].opacity, Opacity::Disk { .. }));
    }
}
