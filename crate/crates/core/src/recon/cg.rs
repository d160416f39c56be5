//! Matrix-free conjugate gradient on the normal equations.

use ndarray::Array4;
use rayon::prelude::*;

use super::{ReconConfig, Reconstruction, SensingModel, Solver, SolverStats};
use crate::aperture::ApertureSchedule;
use crate::lightfield::Image;
use crate::Result;

/// `M = AᵀA + λ_t I + λ_v (D_uᵀD_u + D_vᵀD_v) + λ_s (D_xᵀD_x + D_yᵀD_y)`
/// applied to a flat `(x, y, u, v)` vector.
pub(crate) struct NormalOperator<'a> {
    dims: [usize; 4],
    sensing: &'a SensingModel,
    cfg: &'a ReconConfig,
}

impl<'a> NormalOperator<'a> {
    pub(crate) fn new(dims: [usize; 4], sensing: &'a SensingModel, cfg: &'a ReconConfig) -> Self {
        NormalOperator { dims, sensing, cfg }
    }

    fn per_pixel(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// `Aᵀy` per pixel.
    pub(crate) fn rhs(&self, obs: &[Image]) -> Vec<f64> {
        let k = self.per_pixel();
        let ny = self.dims[1];
        let mut b = vec![0.0; self.dims[0] * ny * k];
        b.par_chunks_mut(k).enumerate().for_each(|(p, out)| {
            let (x, y) = (p / ny, p % ny);
            let rows = self.sensing.rows_at(x, y);
            for (n, row) in rows.outer_iter().enumerate() {
                let yv = obs[n].data()[[x, y]];
                for (o, &a) in out.iter_mut().zip(row.iter()) {
                    *o += a * yv;
                }
            }
        });
        b
    }

    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        let k = self.per_pixel();
        let ny = self.dims[1];
        let lt = self.cfg.lambda_tikhonov;
        out.par_chunks_mut(k)
            .zip(x.par_chunks(k))
            .enumerate()
            .for_each(|(p, (o, l))| {
                let rows = self.sensing.rows_at(p / ny, p % ny);
                for (oi, li) in o.iter_mut().zip(l) {
                    *oi = lt * li;
                }
                for row in rows.outer_iter() {
                    let t: f64 = row.iter().zip(l).map(|(a, b)| a * b).sum();
                    if t != 0.0 {
                        for (oi, &a) in o.iter_mut().zip(row.iter()) {
                            *oi += a * t;
                        }
                    }
                }
            });
        let [_, ny, nu, nv] = self.dims;
        let strides = [ny * nu * nv, nu * nv, nv, 1];
        let lv = self.cfg.lambda_view_smooth;
        let ls = self.cfg.lambda_spatial_smooth;
        for (axis, lambda) in [(0, ls), (1, ls), (2, lv), (3, lv)] {
            if lambda != 0.0 {
                add_neumann_laplacian(x, out, strides[axis], self.dims[axis], lambda);
            }
        }
    }
}

/// `out += λ·DᵀD x` along one axis.
fn add_neumann_laplacian(x: &[f64], out: &mut [f64], stride: usize, extent: usize, lambda: f64) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let c = (i / stride) % extent;
        let mut acc = 0.0;
        if c > 0 {
            acc += x[i] - x[i - stride];
        }
        if c + 1 < extent {
            acc += x[i] - x[i + stride];
        }
        *o += lambda * acc;
    });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// CG from a zero start on a general sensing model.
pub(crate) fn cg_solve(
    obs: &[Image],
    sensing: &SensingModel,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let (nx, ny) = sensing.check(obs)?;
    let (nu, nv) = sensing.views();
    let dims = [nx, ny, nu, nv];
    let op = NormalOperator::new(dims, sensing, cfg);
    let b = op.rhs(obs);
    let yy: f64 = obs
        .iter()
        .flat_map(|o| o.data().iter())
        .map(|v| v * v)
        .sum();
    let n = b.len();

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut mp = vec![0.0; n];
    let b_norm = dot(&b, &b).sqrt();
    let mut rr = dot(&r, &r);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = b_norm == 0.0;

    while !converged && iterations < cfg.cg_max_iter {
        op.apply(&p, &mut mp);
        let pmp = dot(&p, &mp);
        if pmp <= 0.0 {
            break;
        }
        let alpha = rr / pmp;
        x.par_iter_mut()
            .zip(&p)
            .for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut()
            .zip(&mp)
            .for_each(|(ri, mi)| *ri -= alpha * mi);
        let rr_next = dot(&r, &r);
        iterations += 1;
        // f(x) = xᵀMx − 2bᵀx + ‖y‖² with Mx = b − r.
        trace.push(yy - dot(&x, &b) - dot(&x, &r));
        if rr_next.sqrt() <= cfg.cg_tol * b_norm {
            converged = true;
            rr = rr_next;
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        p.par_iter_mut()
            .zip(&r)
            .for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }

    let raw = Array4::from_shape_vec((nx, ny, nu, nv), x).expect("flat vector matches dims");
    let stats = SolverStats {
        solver: Solver::ConjugateGradient,
        iterations,
        relative_residual: if b_norm > 0.0 {
            rr.sqrt() / b_norm
        } else {
            0.0
        },
        converged,
        objective_trace: trace,
    };
    Reconstruction::new(raw, stats)
}

/// Minimizes the full regularized objective for a schedule by CG.
///
/// Hitting `cg_max_iter` is reported in the stats, not as an error.
pub fn cg_recon(
    images: &[Image],
    sched: &ApertureSchedule,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    cg_solve(images, &SensingModel::from_schedule(sched), cfg)
}
