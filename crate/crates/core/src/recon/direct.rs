//! Direct per-pixel solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array4;
use rayon::prelude::*;

use super::{ReconConfig, Reconstruction, SensingModel, Solver, SolverStats};
use crate::aperture::ApertureSchedule;
use crate::lightfield::Image;
use crate::{Error, Result};

/// Relative eigenvalue floor below which `AAᵀ` counts as singular.
const SINGULAR_RTOL: f64 = 1e-10;

fn rows_matrix(sensing: &SensingModel, x: usize, y: usize) -> DMatrix<f64> {
    let rows = sensing.rows_at(x, y);
    DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, j| rows[[i, j]])
}

/// Minimum-norm solution per pixel, `l = Aᵀ(AAᵀ + λI)⁻¹ y`.
///
/// With `lambda = 0` a rank-deficient `AAᵀ` (e.g. repeated patterns) is an
/// error.
pub fn least_norm_recon(
    images: &[Image],
    sched: &ApertureSchedule,
    lambda: f64,
) -> Result<Reconstruction> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("lambda = {lambda} must be >= 0")));
    }
    let sensing = SensingModel::from_schedule(sched);
    let (nx, ny) = sensing.check(images)?;
    let (nu, nv) = sensing.views();
    let a = rows_matrix(&sensing, 0, 0);
    let gram = &a * a.transpose();
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if lambda == 0.0 && min <= SINGULAR_RTOL * max {
        return Err(Error::Singular(format!(
            "AAᵀ has eigenvalue {min:e} (max {max:e}); patterns are linearly dependent"
        )));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / (e + lambda)));
    let weights = a.transpose() * (&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose());

    let k = nu * nv;
    let mut out = vec![0.0; nx * ny * k];
    out.par_chunks_mut(k).enumerate().for_each(|(p, chunk)| {
        let (x, y) = (p / ny, p % ny);
        let obs = DVector::from_iterator(images.len(), images.iter().map(|i| i.data()[[x, y]]));
        let l = &weights * obs;
        chunk.copy_from_slice(l.as_slice());
    });
    let raw = Array4::from_shape_vec((nx, ny, nu, nv), out).expect("dims");
    Reconstruction::new(raw, SolverStats::direct(Solver::LeastNorm))
}

/// `D_uᵀD_u + D_vᵀD_v` on the flattened `u·V + v` grid.
pub(crate) fn view_laplacian(nu: usize, nv: usize) -> DMatrix<f64> {
    let k = nu * nv;
    let mut lap = DMatrix::zeros(k, k);
    let mut link = |i: usize, j: usize| {
        lap[(i, i)] += 1.0;
        lap[(j, j)] += 1.0;
        lap[(i, j)] -= 1.0;
        lap[(j, i)] -= 1.0;
    };
    for u in 0..nu {
        for v in 0..nv {
            let i = u * nv + v;
            if u + 1 < nu {
                link(i, i + nv);
            }
            if v + 1 < nv {
                link(i, i + 1);
            }
        }
    }
    lap
}

fn pixel_system(
    a: &DMatrix<f64>,
    lap: &DMatrix<f64>,
    cfg: &ReconConfig,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let k = a.ncols();
    let m = a.transpose() * a
        + DMatrix::identity(k, k) * cfg.lambda_tikhonov
        + lap * cfg.lambda_view_smooth;
    m.cholesky()
        .ok_or_else(|| Error::Singular("per-pixel normal matrix is not positive definite".into()))
}

/// Exact minimizer of the regularized objective when `λ_s = 0`, solving one
/// `K×K` system per pixel.
pub(crate) fn pixelwise_solve(
    obs: &[Image],
    sensing: &SensingModel,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    if cfg.lambda_spatial_smooth != 0.0 {
        return Err(Error::Config(
            "pixelwise solve requires lambda_spatial_smooth = 0".into(),
        ));
    }
    let (nx, ny) = sensing.check(obs)?;
    let (nu, nv) = sensing.views();
    let k = nu * nv;
    let lap = view_laplacian(nu, nv);
    let shared = if sensing.is_shared() {
        let a = rows_matrix(sensing, 0, 0);
        Some((pixel_system(&a, &lap, cfg)?, a))
    } else {
        None
    };

    let mut out = vec![0.0; nx * ny * k];
    out.par_chunks_mut(k)
        .enumerate()
        .try_for_each(|(p, chunk)| -> Result<()> {
            let (x, y) = (p / ny, p % ny);
            let y_obs = DVector::from_iterator(obs.len(), obs.iter().map(|i| i.data()[[x, y]]));
            let l = match &shared {
                Some((chol, a)) => chol.solve(&(a.transpose() * y_obs)),
                None => {
                    let a = rows_matrix(sensing, x, y);
                    pixel_system(&a, &lap, cfg)?.solve(&(a.transpose() * y_obs))
                }
            };
            chunk.copy_from_slice(l.as_slice());
            Ok(())
        })?;
    let raw = Array4::from_shape_vec((nx, ny, nu, nv), out).expect("dims");
    Reconstruction::new(raw, SolverStats::direct(Solver::Pixelwise))
}

/// Per-pixel direct reconstruction from coded images; `λ_s` must be 0.
pub fn pixelwise_recon(
    images: &[Image],
    sched: &ApertureSchedule,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    pixelwise_solve(images, &SensingModel::from_schedule(sched), cfg)
}
