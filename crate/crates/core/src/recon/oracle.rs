//! Direct factorization of the fully assembled normal equations.
//!
//! The matrix is built entry by entry from the objective's definition,
//! independently of the matrix-free operator used by CG, and factored by a
//! banded Cholesky. With `(x, y, u, v)` ordering the only couplings outside a
//! pixel's own `K×K` block are the spatial differences, at offsets `K`
//! (along y) and `Y·K` (along x), so the band holds every nonzero.

use ndarray::Array4;

use super::{ReconConfig, Reconstruction, SensingModel, Solver, SolverStats};
use crate::aperture::ApertureSchedule;
use crate::lightfield::Image;
use crate::{Error, Result};

/// Largest instance the oracle accepts: 16×16 pixels × 8×8 views.
pub const ORACLE_MAX_UNKNOWNS: usize = 16 * 16 * 8 * 8;

/// Symmetric matrix in lower-band storage; row `i` keeps columns
/// `i − bw ..= i`.
struct Band {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, bw: usize) -> Self {
        Band {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)]
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` at `(i, j)`; only the lower triangle is stored.
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    /// In-place `A = L Lᵀ`.
    fn cholesky(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                // Row i holds column k at offset k + bw − i; row j at k + bw − j.
                let ri = &self.row(i)[lo + bw - i..j + bw - i];
                let rj = &self.row(j)[lo + bw - j..j + bw - j];
                let s = self.get(i, j) - ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                let k = self.idx(i, j);
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Singular(format!(
                            "nonpositive pivot {s:e} at row {i}"
                        )));
                    }
                    self.data[k] = s.sqrt();
                } else {
                    self.data[k] = s / self.get(j, j);
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let s: f64 = (lo..i).map(|k| self.get(i, k) * b[k]).sum();
            b[i] = (b[i] - s) / self.get(i, i);
        }
        for i in (0..self.n).rev() {
            let hi = (i + bw).min(self.n - 1);
            let s: f64 = (i + 1..=hi).map(|k| self.get(k, i) * b[k]).sum();
            b[i] = (b[i] - s) / self.get(i, i);
        }
    }
}

pub(crate) fn oracle_solve(
    obs: &[Image],
    sensing: &SensingModel,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let (nx, ny) = sensing.check(obs)?;
    let (nu, nv) = sensing.views();
    let k = nu * nv;
    let n = nx * ny * k;
    if n > ORACLE_MAX_UNKNOWNS {
        return Err(Error::Size(format!(
            "{nx}x{ny}x{nu}x{nv} = {n} unknowns exceeds the dense oracle cap of {ORACLE_MAX_UNKNOWNS}"
        )));
    }
    let (lt, lv, ls) = (
        cfg.lambda_tikhonov,
        cfg.lambda_view_smooth,
        cfg.lambda_spatial_smooth,
    );
    let bw = if ls != 0.0 {
        (ny * k).max(k - 1)
    } else {
        k - 1
    };
    let mut m = Band::new(n, bw);
    let mut b = vec![0.0; n];
    let index = |x: usize, y: usize, u: usize, v: usize| ((x * ny + y) * nu + u) * nv + v;

    for x in 0..nx {
        for y in 0..ny {
            let base = index(x, y, 0, 0);
            let rows = sensing.rows_at(x, y);
            for (obs_n, row) in rows.outer_iter().enumerate() {
                let yv = obs[obs_n].data()[[x, y]];
                for i in 0..k {
                    b[base + i] += row[i] * yv;
                    for j in 0..=i {
                        m.add(base + i, base + j, row[i] * row[j]);
                    }
                }
            }
            for i in 0..k {
                m.add(base + i, base + i, lt);
            }
            for u in 0..nu {
                for v in 0..nv {
                    let i = index(x, y, u, v);
                    if u + 1 < nu {
                        couple(&mut m, i, index(x, y, u + 1, v), lv);
                    }
                    if v + 1 < nv {
                        couple(&mut m, i, index(x, y, u, v + 1), lv);
                    }
                    if ls != 0.0 {
                        if x + 1 < nx {
                            couple(&mut m, i, index(x + 1, y, u, v), ls);
                        }
                        if y + 1 < ny {
                            couple(&mut m, i, index(x, y + 1, u, v), ls);
                        }
                    }
                }
            }
        }
    }
    m.cholesky()?;
    m.solve(&mut b);
    let raw = Array4::from_shape_vec((nx, ny, nu, nv), b).expect("dims");
    Reconstruction::new(raw, SolverStats::direct(Solver::DenseOracle))
}

/// One squared difference `λ(x_i − x_j)²` in the objective.
fn couple(m: &mut Band, i: usize, j: usize, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    m.add(i, i, lambda);
    m.add(j, j, lambda);
    m.add(i.max(j), i.min(j), -lambda);
}

/// Solves the regularized reconstruction by assembling the normal equations
/// and factoring them directly. Limited to [`ORACLE_MAX_UNKNOWNS`].
pub fn oracle_dense_solve(
    images: &[Image],
    sched: &ApertureSchedule,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    oracle_solve(images, &SensingModel::from_schedule(sched), cfg)
}
