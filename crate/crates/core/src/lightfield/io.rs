use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};
use ndarray::{Array2, Array4};

use super::{Image, LightField};
use crate::{Error, Result};

/// File name of viewpoint `(u, v)`, zero-based in, one-based out.
pub fn view_file_name(u: usize, v: usize) -> String {
    format!("view_{}_{}.png", u + 1, v + 1)
}

fn parse_view_name(name: &str) -> Option<(usize, usize)> {
    let stem = name.strip_prefix("view_")?.strip_suffix(".png")?;
    let (u, v) = stem.split_once('_')?;
    let u: usize = u.parse().ok()?;
    let v: usize = v.parse().ok()?;
    (u >= 1 && v >= 1).then_some((u, v))
}

/// Loads a light field from a directory of `view_{u}_{v}.png` files.
///
/// The viewpoint grid is the largest `(u, v)` present; every view inside the
/// grid must exist and all views must share one size. 8-bit views are scaled
/// by 1/255, 16-bit views by 1/65535.
pub fn load_lightfield(dir: impl AsRef<Path>) -> Result<LightField> {
    let dir = dir.as_ref();
    let mut present = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(uv) = entry.file_name().to_str().and_then(parse_view_name) {
            present.insert(uv);
        }
    }
    let nu = present.iter().map(|&(u, _)| u).max().unwrap_or(1);
    let nv = present.iter().map(|&(_, v)| v).max().unwrap_or(1);
    for u in 1..=nu {
        for v in 1..=nv {
            if !present.contains(&(u, v)) {
                return Err(Error::MissingView { u, v });
            }
        }
    }

    let mut data: Option<Array4<f64>> = None;
    for u in 0..nu {
        for v in 0..nv {
            let view = load_image_png(dir.join(view_file_name(u, v)))?;
            let (x, y) = view.dims();
            let lf = data.get_or_insert_with(|| Array4::zeros((x, y, nu, nv)));
            if lf.dim().0 != x || lf.dim().1 != y {
                return Err(Error::Shape(format!(
                    "view ({},{}) is {x}x{y}, expected {}x{}",
                    u + 1,
                    v + 1,
                    lf.dim().0,
                    lf.dim().1
                )));
            }
            lf.slice_mut(ndarray::s![.., .., u, v]).assign(view.data());
        }
    }
    LightField::new(data.expect("grid has at least one view"))
}

/// Writes every view as an 8-bit grayscale PNG.
pub fn save_lightfield(dir: impl AsRef<Path>, lf: &LightField) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (nu, nv) = lf.views();
    for u in 0..nu {
        for v in 0..nv {
            save_image_png(dir.join(view_file_name(u, v)), &lf.view_image(u, v), 1.0)?;
        }
    }
    Ok(())
}

/// Reads a grayscale PNG into `[0, 1]` units, indexed `[x, y]`.
pub fn load_image_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma16(g) => Array2::from_shape_fn((w, h), |(x, y)| {
            g.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0
        }),
        other => {
            let g = other.to_luma8();
            Array2::from_shape_fn((w, h), |(x, y)| {
                g.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
            })
        }
    };
    Ok(Image::from_array_unchecked(data))
}

/// Writes an 8-bit grayscale PNG, mapping `[0, white]` to `[0, 255]` with clipping.
pub fn save_image_png(path: impl AsRef<Path>, img: &Image, white: f64) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = img.dims();
    let data = img.data();
    let scale = if white > 0.0 { 255.0 / white } else { 0.0 };
    let out = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = (data[[x as usize, y as usize]] * scale)
            .round()
            .clamp(0.0, 255.0);
        Luma([v as u8])
    });
    out.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_lf(x: usize, y: usize, n: usize) -> LightField {
        LightField::new(Array4::from_shape_fn((x, y, n, n), |(x, y, u, v)| {
            ((x * 7 + y * 3 + u * 11 + v * 5) % 23) as f64 / 22.0
        }))
        .unwrap()
    }

    #[test]
    fn view_names_are_one_based() {
        assert_eq!(view_file_name(0, 0), "view_1_1.png");
        assert_eq!(view_file_name(7, 2), "view_8_3.png");
        assert_eq!(parse_view_name("view_8_3.png"), Some((8, 3)));
        assert_eq!(parse_view_name("view_0_3.png"), None);
        assert_eq!(parse_view_name("frame.png"), None);
    }

    #[test]
    fn load_full_grid() {
        let dir = tempfile::tempdir().unwrap();
        save_lightfield(dir.path(), &sample_lf(64, 64, 8)).unwrap();
        let lf = load_lightfield(dir.path()).unwrap();
        assert_eq!(lf.dims(), (64, 64, 8, 8));
    }

    #[test]
    fn round_trip_within_one_quantization_step() {
        let dir = tempfile::tempdir().unwrap();
        let lf = sample_lf(9, 7, 3);
        save_lightfield(dir.path(), &lf).unwrap();
        let back = load_lightfield(dir.path()).unwrap();
        assert_eq!(back.dims(), lf.dims());
        let worst = lf
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.5 / 255.0 + 1e-12, "worst {worst}");
    }

    #[test]
    fn missing_view_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_lightfield(dir.path(), &sample_lf(16, 16, 8)).unwrap();
        fs::remove_file(dir.path().join("view_8_8.png")).unwrap();
        match load_lightfield(dir.path()) {
            Err(Error::MissingView { u: 8, v: 8 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_view_size_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        save_lightfield(dir.path(), &sample_lf(64, 64, 8)).unwrap();
        save_image_png(dir.path().join("view_3_5.png"), &Image::zeros(32, 64), 1.0).unwrap();
        assert!(matches!(load_lightfield(dir.path()), Err(Error::Shape(_))));
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("view_1_1.png"), b"not a png").unwrap();
        assert!(matches!(
            load_lightfield(dir.path()),
            Err(Error::Image { .. })
        ));
        assert!(matches!(
            load_lightfield(dir.path().join("nope")),
            Err(Error::Io { .. })
        ));
    }
}
