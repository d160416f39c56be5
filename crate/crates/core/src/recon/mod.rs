//! Regularized linear light-field reconstruction.
//!
//! Per pixel, the observations are `y = A l` where `l` holds the `U·V` rays
//! of that pixel and row `n` of `A` is a flattened aperture pattern. The
//! general solver minimizes
//!
//! ```text
//! Σ_pixels ‖A l − y‖² + λ_t‖L‖² + λ_v‖D_uv L‖² + λ_s‖D_xy L‖²
//! ```
//!
//! where `D_uv` and `D_xy` are forward differences along the viewpoint and
//! spatial axes (no difference across the last sample of an axis).
//! Unknowns are ordered `(x, y, u, v)` row-major throughout.

use ndarray::{Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::aperture::ApertureSchedule;
use crate::equivalence::{recover_images, RecoveredImages};
use crate::lightfield::{check_same_shape, Image, LightField};
use crate::sensor::{normalization, Full4DMask, JaecMask, Measurement};
use crate::{Error, Result};

mod cg;
mod direct;
mod oracle;

pub use cg::cg_recon;
pub use direct::{least_norm_recon, pixelwise_recon};
pub use oracle::{oracle_dense_solve, ORACLE_MAX_UNKNOWNS};

pub(crate) use cg::cg_solve;
pub(crate) use direct::pixelwise_solve;

/// Regularization weights and CG stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub lambda_tikhonov: f64,
    pub lambda_view_smooth: f64,
    pub lambda_spatial_smooth: f64,
    pub cg_max_iter: usize,
    /// Stop once `‖r‖ ≤ cg_tol·‖b‖` on the normal equations.
    pub cg_tol: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            lambda_tikhonov: 1e-4,
            lambda_view_smooth: 1e-2,
            lambda_spatial_smooth: 1e-3,
            cg_max_iter: 500,
            cg_tol: 1e-8,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            self.lambda_tikhonov,
            self.lambda_view_smooth,
            self.lambda_spatial_smooth,
        ];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(
                "regularization weights must be finite and >= 0".into(),
            ));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::Config("cg_max_iter must be >= 1".into()));
        }
        if !(self.cg_tol.is_finite() && self.cg_tol > 0.0) {
            return Err(Error::Config("cg_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Rows of the per-pixel observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingModel {
    views: (usize, usize),
    rows: Rows,
}

#[derive(Debug, Clone, PartialEq)]
enum Rows {
    /// Same `obs × K` matrix at every pixel.
    Shared(Array2<f64>),
    /// `[x, y, obs, K]`.
    PerPixel(Array4<f64>),
}

impl SensingModel {
    /// One row per pattern, shared by every pixel.
    pub fn from_schedule(sched: &ApertureSchedule) -> Self {
        let (nu, nv) = sched.pattern_dims();
        let rows = sched.rows();
        let a = Array2::from_shape_fn((rows.len(), nu * nv), |(n, k)| rows[n][k]);
        SensingModel {
            views: (nu, nv),
            rows: Rows::Shared(a),
        }
    }

    /// A single row `Σ_n a⁽ⁿ⁾ / √N`: what the frame alone observes.
    ///
    /// The `1/√N` weight gives the frame the same data weight as `N` equal
    /// coded images summing to it.
    pub fn frame_only(sched: &ApertureSchedule) -> Self {
        let (nu, nv) = sched.pattern_dims();
        let w = 1.0 / (sched.len() as f64).sqrt();
        let mut sum = Array2::zeros((1, nu * nv));
        for p in sched.patterns() {
            for (k, v) in p.to_row_major().into_iter().enumerate() {
                sum[[0, k]] += w * v;
            }
        }
        SensingModel {
            views: (nu, nv),
            rows: Rows::Shared(sum),
        }
    }

    /// Pixel `(x, y)` observes `Σ_n p⁽ⁿ⁾_{x,y} a⁽ⁿ⁾`.
    pub fn jaec(sched: &ApertureSchedule, mask: &JaecMask) -> Result<Self> {
        if mask.p.len() != sched.len() || mask.p.is_empty() {
            return Err(Error::Shape(
                "JAEC mask count differs from pattern count".into(),
            ));
        }
        let (nx, ny) = mask.p[0].dim();
        let (nu, nv) = sched.pattern_dims();
        let rows = sched.rows();
        let mut a = Array4::zeros((nx, ny, 1, nu * nv));
        for (p, row) in mask.p.iter().zip(&rows) {
            check_same_shape(p.shape(), &[nx, ny], "JAEC masks")?;
            for ((x, y), &on) in p.indexed_iter() {
                if on != 0.0 {
                    for (k, &r) in row.iter().enumerate() {
                        a[[x, y, 0, k]] += on * r;
                    }
                }
            }
        }
        Ok(SensingModel {
            views: (nu, nv),
            rows: Rows::PerPixel(a),
        })
    }

    /// Pixel `(x, y)` observes `m_{x,y,·,·}`.
    pub fn full4d(mask: &Full4DMask) -> Self {
        let (nx, ny, nu, nv) = mask.m.dim();
        let a = Array4::from_shape_fn((nx, ny, 1, nu * nv), |(x, y, _, k)| {
            mask.m[[x, y, k / nv, k % nv]]
        });
        SensingModel {
            views: (nu, nv),
            rows: Rows::PerPixel(a),
        }
    }

    pub fn observations(&self) -> usize {
        match &self.rows {
            Rows::Shared(a) => a.nrows(),
            Rows::PerPixel(a) => a.dim().2,
        }
    }

    pub fn views(&self) -> (usize, usize) {
        self.views
    }

    /// `obs × K` rows at pixel `(x, y)`.
    pub fn rows_at(&self, x: usize, y: usize) -> ArrayView2<'_, f64> {
        match &self.rows {
            Rows::Shared(a) => a.view(),
            Rows::PerPixel(a) => a.slice(ndarray::s![x, y, .., ..]),
        }
    }

    pub(crate) fn is_shared(&self) -> bool {
        matches!(self.rows, Rows::Shared(_))
    }

    fn check(&self, obs: &[Image]) -> Result<(usize, usize)> {
        if obs.len() != self.observations() {
            return Err(Error::Shape(format!(
                "{} observation images for {} sensing rows",
                obs.len(),
                self.observations()
            )));
        }
        let (nx, ny) = obs
            .first()
            .map(Image::dims)
            .ok_or_else(|| Error::Shape("no observations".into()))?;
        for o in obs {
            check_same_shape(&[nx, ny], &[o.dims().0, o.dims().1], "observation images")?;
        }
        if let Rows::PerPixel(a) = &self.rows {
            check_same_shape(
                &[nx, ny],
                &[a.dim().0, a.dim().1],
                "per-pixel sensing vs images",
            )?;
        }
        Ok((nx, ny))
    }
}

/// Which solver produced a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    LeastNorm,
    Pixelwise,
    ConjugateGradient,
    DenseOracle,
    /// Not a solve: the lens-array baseline's interpolation.
    Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solver: Solver,
    pub iterations: usize,
    /// `‖b − M x‖ / ‖b‖` of the normal equations (0 for direct solvers).
    pub relative_residual: f64,
    pub converged: bool,
    /// Objective after each CG iteration (empty for direct solvers).
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl SolverStats {
    fn direct(solver: Solver) -> Self {
        SolverStats {
            solver,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            objective_trace: Vec::new(),
        }
    }
}

/// A reconstructed light field and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// The estimate clamped into `[0, 1]`.
    pub field: LightField,
    /// The unclamped minimizer, `[x, y, u, v]`.
    pub raw: Array4<f64>,
    pub stats: SolverStats,
}

impl Reconstruction {
    /// Wraps the lens-array baseline output.
    pub fn interpolated(field: LightField) -> Self {
        Reconstruction {
            raw: field.data().clone(),
            field,
            stats: SolverStats::direct(Solver::Interpolation),
        }
    }

    fn new(raw: Array4<f64>, stats: SolverStats) -> Result<Self> {
        Ok(Reconstruction {
            field: LightField::from_estimate(raw.clone())?,
            raw,
            stats,
        })
    }
}

/// Minimizes the regularized objective with the cheapest exact solver:
/// per-pixel Cholesky when there is no spatial coupling, CG otherwise.
pub fn regularized_recon(
    obs: &[Image],
    sensing: &SensingModel,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    if cfg.lambda_spatial_smooth == 0.0 {
        pixelwise_solve(obs, sensing, cfg)
    } else {
        cg_solve(obs, sensing, cfg)
    }
}

/// Reconstruction from the `N` coded images (raw units).
pub fn coded_images_recon(
    images: &[Image],
    sched: &ApertureSchedule,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    regularized_recon(images, &SensingModel::from_schedule(sched), cfg)
}

/// Treats the frame (raw units) as one observation through `Σ_n a⁽ⁿ⁾`.
pub fn image_only_recon(
    frame: &Image,
    sched: &ApertureSchedule,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    let w = 1.0 / (sched.len() as f64).sqrt();
    let obs = Image::from_array_unchecked(frame.data() * w);
    regularized_recon(
        std::slice::from_ref(&obs),
        &SensingModel::frame_only(sched),
        cfg,
    )
}

/// Recovers the coded images from the measurement, then reconstructs.
///
/// Returns the recovered (normalized) images alongside the reconstruction.
pub fn recon_from_measurement(
    m: &Measurement,
    sched: &ApertureSchedule,
    tau: f64,
    epsilon: f64,
    cfg: &ReconConfig,
) -> Result<(Reconstruction, RecoveredImages)> {
    if m.n_patterns() != sched.len() {
        return Err(Error::Shape(format!(
            "measurement has {} patterns, schedule {}",
            m.n_patterns(),
            sched.len()
        )));
    }
    let stacks: Vec<Array2<f64>> = m.stacks.iter().map(|s| s.to_f64()).collect();
    recon_from_stacks(&m.frame, &stacks, sched, tau, epsilon, cfg)
}

/// As [`recon_from_measurement`] for real-valued stacks and a normalized frame.
pub fn recon_from_stacks(
    frame: &Image,
    stacks: &[Array2<f64>],
    sched: &ApertureSchedule,
    tau: f64,
    epsilon: f64,
    cfg: &ReconConfig,
) -> Result<(Reconstruction, RecoveredImages)> {
    let recovered = recover_images(frame, stacks, tau, epsilon)?;
    let scale = normalization(sched);
    let raw: Vec<Image> = recovered
        .images
        .iter()
        .map(|i| Image::from_array_unchecked(i.data() * scale))
        .collect();
    Ok((coded_images_recon(&raw, sched, cfg)?, recovered))
}

/// `Σ_pixels ‖A l − y‖² + λ_t‖L‖² + λ_v‖D_uv L‖² + λ_s‖D_xy L‖²`.
pub fn objective(
    raw: &Array4<f64>,
    obs: &[Image],
    sensing: &SensingModel,
    cfg: &ReconConfig,
) -> Result<f64> {
    let (nx, ny) = sensing.check(obs)?;
    let (nu, nv) = sensing.views();
    check_same_shape(raw.shape(), &[nx, ny, nu, nv], "objective")?;
    let mut total = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let rows = sensing.rows_at(x, y);
            for (n, row) in rows.outer_iter().enumerate() {
                let mut pred = 0.0;
                for (k, &a) in row.iter().enumerate() {
                    pred += a * raw[[x, y, k / nv, k % nv]];
                }
                total += (pred - obs[n].data()[[x, y]]).powi(2);
            }
        }
    }
    total += cfg.lambda_tikhonov * raw.iter().map(|v| v * v).sum::<f64>();
    let diff_energy = |axis: usize| -> f64 {
        let n = raw.shape()[axis];
        (0..n.saturating_sub(1))
            .map(|i| {
                let a = raw.index_axis(ndarray::Axis(axis), i);
                let b = raw.index_axis(ndarray::Axis(axis), i + 1);
                a.iter()
                    .zip(b.iter())
                    .map(|(p, q)| (q - p).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    total += cfg.lambda_view_smooth * (diff_energy(2) + diff_energy(3));
    total += cfg.lambda_spatial_smooth * (diff_energy(0) + diff_energy(1));
    Ok(total)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::aperture::{random_schedule, AperturePattern, Constraints};
    use crate::lightfield::{psnr, synth_scene, Layer, Opacity, SceneSpec, TextureSource};
    use crate::sensor::{coded_images, simulate_exposure, SensorConfig};

    pub(crate) fn textured_scene(seed: u64, size: usize, d: f64) -> LightField {
        synth_scene(
            &SceneSpec::new(vec![
                Layer {
                    texture: TextureSource::Procedural { seed, cell: 4.0 },
                    disparity: -d,
                    opacity: Opacity::Full,
                },
                Layer {
                    texture: TextureSource::Procedural {
                        seed: seed + 1000,
                        cell: 3.0,
                    },
                    disparity: d,
                    opacity: Opacity::Disk {
                        cx: size as f64 / 2.0,
                        cy: size as f64 / 2.0,
                        r: size as f64 / 4.0,
                    },
                },
            ]),
            size,
            size,
        )
        .unwrap()
    }

    /// Balanced complementary schedule: every pattern has brightness 32.
    pub(crate) fn balanced_schedule() -> ApertureSchedule {
        let first = Array2::from_shape_fn((8, 8), |(u, v)| ((u + v) % 2) as f64);
        let third = Array2::from_shape_fn((8, 8), |(u, _)| if u < 4 { 1.0 } else { 0.0 });
        ApertureSchedule::complementary_from(
            vec![
                AperturePattern::new(first).unwrap(),
                AperturePattern::new(third).unwrap(),
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn sensing_rows_shapes() {
        let s = random_schedule(1, Constraints::default(), 4, (8, 8)).unwrap();
        let m = SensingModel::from_schedule(&s);
        assert_eq!(m.observations(), 4);
        assert_eq!(m.rows_at(0, 0).dim(), (4, 64));
        // Complementary rows sum to ones.
        let r = m.rows_at(0, 0);
        assert!((0..64).all(|k| r[[0, k]] + r[[1, k]] == 1.0 && r[[2, k]] + r[[3, k]] == 1.0));
        let f = SensingModel::frame_only(&s);
        assert!(f.rows_at(3, 3).iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn config_validation() {
        assert!(ReconConfig::default().validate().is_ok());
        let bad = ReconConfig {
            cg_max_iter: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ReconConfig {
            lambda_view_smooth: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn image_only_of_complementary_schedule_is_view_constant() {
        let lf = textured_scene(3, 16, 1.0);
        let s = random_schedule(4, Constraints::default(), 4, (8, 8)).unwrap();
        let frame = crate::sensor::frame_sum(
            &coded_images(&lf, &s).unwrap(),
            &SensorConfig::default().noiseless(),
        )
        .unwrap();
        let cfg = ReconConfig {
            lambda_tikhonov: 1e-12,
            lambda_spatial_smooth: 0.0,
            ..Default::default()
        };
        let r = image_only_recon(&frame, &s, &cfg).unwrap();
        for x in 0..16 {
            for y in 0..16 {
                let want = frame.data()[[x, y]] / 128.0;
                for u in 0..8 {
                    for v in 0..8 {
                        assert!((r.raw[[x, y, u, v]] - want).abs() < 1e-9);
                    }
                }
            }
        }
        let zero = image_only_recon(&Image::zeros(16, 16), &s, &ReconConfig::default()).unwrap();
        assert!(zero.raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_stacks_match_image_only_for_balanced_patterns() {
        let lf = textured_scene(5, 16, 1.5);
        let s = balanced_schedule();
        let cfg = ReconConfig::default();
        let mut m = simulate_exposure(&lf, &s, &SensorConfig::default().noiseless()).unwrap();
        for st in &mut m.stacks {
            st.counts.fill(0);
        }
        let (ours, _) = recon_from_measurement(&m, &s, 0.15, 0.01, &cfg).unwrap();
        let only = image_only_recon(&m.frame_raw(), &s, &cfg).unwrap();
        let worst = ours
            .raw
            .iter()
            .zip(only.raw.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    #[test]
    fn continuous_pipeline_recovers_view_constant_scene() {
        let texture = textured_scene(7, 16, 0.0);
        let s = random_schedule(8, Constraints::default(), 4, (8, 8)).unwrap();
        let coded = coded_images(&texture, &s).unwrap();
        let k = normalization(&s);
        let normalized: Vec<Image> = coded
            .iter()
            .map(|i| Image::new(i.data() / k).unwrap())
            .collect();
        let frame =
            crate::sensor::frame_sum(&normalized, &SensorConfig::default().noiseless()).unwrap();
        let stacks: Vec<_> = normalized
            .windows(2)
            .map(|w| crate::equivalence::continuous_events(&w[0], &w[1], 0.15, 0.01).unwrap())
            .collect();
        let cfg = ReconConfig {
            lambda_tikhonov: 1e-10,
            ..Default::default()
        };
        let (r, _) = recon_from_stacks(&frame, &stacks, &s, 0.15, 0.01, &cfg).unwrap();
        assert!(psnr(&texture, &r.field).unwrap() >= 60.0);
    }

    #[test]
    fn measurement_pattern_count_checked() {
        let lf = textured_scene(1, 16, 1.0);
        let s = random_schedule(1, Constraints::default(), 4, (8, 8)).unwrap();
        let m = simulate_exposure(&lf, &s, &SensorConfig::default().noiseless()).unwrap();
        let two = random_schedule(1, Constraints::default(), 2, (8, 8)).unwrap();
        assert!(matches!(
            recon_from_measurement(&m, &two, 0.15, 0.01, &ReconConfig::default()),
            Err(Error::Shape(_))
        ));
    }
}
