//! Aperture patterns, schedules and their hardware constraints.
//!
//! A schedule is the ordered list of transmittance patterns shown during one
//! exposure. Two constraints come from the display hardware: patterns must be
//! binary, and each pattern must be followed by its complement (DC balance),
//! pairing `(1,2)`, `(3,4)`, ... in one-based order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::{Error, Result};

/// Default number of patterns per exposure.
pub const DEFAULT_PATTERNS: usize = 4;

/// Transmittance pattern indexed `[u, v]`, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AperturePattern {
    a: Array2<f64>,
}

impl AperturePattern {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        if let Some(bad) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Schedule(format!(
                "transmittance {bad} outside [0, 1]"
            )));
        }
        Ok(AperturePattern { a })
    }

    pub fn ones(nu: usize, nv: usize) -> Self {
        AperturePattern {
            a: Array2::ones((nu, nv)),
        }
    }

    pub fn zeros(nu: usize, nv: usize) -> Self {
        AperturePattern {
            a: Array2::zeros((nu, nv)),
        }
    }

    /// Only viewpoint `(u, v)` open.
    pub fn delta(nu: usize, nv: usize, u: usize, v: usize) -> Self {
        let mut a = Array2::zeros((nu, nv));
        a[[u, v]] = 1.0;
        AperturePattern { a }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn dims(&self) -> (usize, usize) {
        self.a.dim()
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Elementwise `1 − a`.
    pub fn complement(&self) -> Self {
        AperturePattern {
            a: self.a.mapv(|v| 1.0 - v),
        }
    }

    /// Row-major (`u` outer, `v` inner) flattening.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.a.iter().copied().collect()
    }

    /// Total transmittance `Σ a_{u,v}`.
    pub fn brightness(&self) -> f64 {
        self.a.sum()
    }

    pub(crate) fn flip(&mut self, u: usize, v: usize) {
        self.a[[u, v]] = 1.0 - self.a[[u, v]];
    }
}

/// Shorthand for [`AperturePattern::brightness`].
pub fn brightness(p: &AperturePattern) -> f64 {
    p.brightness()
}

/// Ordered aperture patterns with their constraint flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureSchedule {
    patterns: Vec<AperturePattern>,
    pub binary: bool,
    pub complementary: bool,
}

impl ApertureSchedule {
    /// Structural checks only (count, equal shapes, even count when
    /// complementary); flag conformance is reported by [`validate`].
    pub fn new(patterns: Vec<AperturePattern>, binary: bool, complementary: bool) -> Result<Self> {
        if patterns.len() < 2 {
            return Err(Error::Schedule(format!(
                "need at least 2 patterns, got {}",
                patterns.len()
            )));
        }
        let dims = patterns[0].dims();
        if patterns.iter().any(|p| p.dims() != dims) {
            return Err(Error::Shape(
                "patterns in a schedule must share one shape".into(),
            ));
        }
        if complementary && !patterns.len().is_multiple_of(2) {
            return Err(Error::Schedule(format!(
                "complementary schedules need an even pattern count, got {}",
                patterns.len()
            )));
        }
        Ok(ApertureSchedule {
            patterns,
            binary,
            complementary,
        })
    }

    /// Builds `[p₁, 1−p₁, p₂, 1−p₂, …]` from the free patterns.
    pub fn complementary_from(free: Vec<AperturePattern>, binary: bool) -> Result<Self> {
        let patterns = free
            .into_iter()
            .flat_map(|p| {
                let c = p.complement();
                [p, c]
            })
            .collect();
        ApertureSchedule::new(patterns, binary, true)
    }

    pub fn patterns(&self) -> &[AperturePattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn pattern_dims(&self) -> (usize, usize) {
        self.patterns[0].dims()
    }

    /// Indices of patterns that are chosen freely; the rest are complements.
    pub fn free_indices(&self) -> Vec<usize> {
        if self.complementary {
            (0..self.len()).step_by(2).collect()
        } else {
            (0..self.len()).collect()
        }
    }

    /// Flips element `(u, v)` of pattern `n` and, for complementary
    /// schedules, of its partner so DC balance is preserved.
    ///
    /// Returns the indices of the patterns that changed.
    pub fn flip(&mut self, n: usize, u: usize, v: usize) -> Vec<usize> {
        self.patterns[n].flip(u, v);
        if self.complementary {
            let partner = n ^ 1;
            self.patterns[partner].flip(u, v);
            vec![n, partner]
        } else {
            vec![n]
        }
    }

    /// Stacked sensing matrix: row `n` is pattern `n` flattened row-major.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.patterns
            .iter()
            .map(AperturePattern::to_row_major)
            .collect()
    }

    pub fn to_json(&self) -> ScheduleFile {
        ScheduleFile {
            n: self.len(),
            patterns: self.rows(),
            binary: self.binary,
            complementary: self.complementary,
        }
    }

    /// Patterns are stored row-major; the grid must be square.
    pub fn from_json(file: &ScheduleFile) -> Result<Self> {
        if file.n != file.patterns.len() {
            return Err(Error::Schedule(format!(
                "n = {} but {} patterns listed",
                file.n,
                file.patterns.len()
            )));
        }
        let patterns = file
            .patterns
            .iter()
            .map(|flat| {
                let side = (flat.len() as f64).sqrt().round() as usize;
                if side * side != flat.len() || side == 0 {
                    return Err(Error::Shape(format!(
                        "pattern with {} entries is not a square grid",
                        flat.len()
                    )));
                }
                let a = Array2::from_shape_vec((side, side), flat.clone())
                    .map_err(|e| Error::Shape(e.to_string()))?;
                AperturePattern::new(a)
            })
            .collect::<Result<Vec<_>>>()?;
        ApertureSchedule::new(patterns, file.binary, file.complementary)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

/// On-disk schedule layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub n: usize,
    pub patterns: Vec<Vec<f64>>,
    pub binary: bool,
    pub complementary: bool,
}

/// Real-valued parameters generating a four-pattern complementary schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSeed {
    pub alpha: Array2<f64>,
    pub beta: Array2<f64>,
    /// Sigmoid sharpness; grows during training toward binary patterns.
    pub s: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a¹ = σ(s·α)`, `a² = 1 − a¹`, `a³ = σ(s·β)`, `a⁴ = 1 − a³`.
pub fn schedule_from_seeds(seed: &ScheduleSeed) -> Result<ApertureSchedule> {
    if !(seed.s.is_finite() && seed.s > 0.0) {
        return Err(Error::Seed(format!(
            "scale s = {} must be finite and positive",
            seed.s
        )));
    }
    if seed.alpha.dim() != seed.beta.dim() {
        return Err(Error::Seed("alpha and beta shapes differ".into()));
    }
    if seed
        .alpha
        .iter()
        .chain(seed.beta.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Seed("alpha/beta contain non-finite values".into()));
    }
    let first = AperturePattern::new(seed.alpha.mapv(|a| sigmoid(seed.s * a)))?;
    let third = AperturePattern::new(seed.beta.mapv(|b| sigmoid(seed.s * b)))?;
    ApertureSchedule::complementary_from(vec![first, third], false)
}

/// Sigmoid scale after `epoch` epochs of the ×1.02 annealing, starting at 1.
pub fn scale_at_epoch(epoch: u32) -> f64 {
    1.02f64.powi(epoch as i32)
}

/// Thresholds at 0.5 (ties go to 1); complements are recomputed from the
/// thresholded free patterns so DC balance survives.
pub fn binarize(sched: &ApertureSchedule) -> ApertureSchedule {
    let threshold = |p: &AperturePattern| AperturePattern {
        a: p.a.mapv(|v| if v >= 0.5 { 1.0 } else { 0.0 }),
    };
    let mut patterns: Vec<AperturePattern> = sched.patterns.iter().map(threshold).collect();
    if sched.complementary {
        for pair in patterns.chunks_mut(2) {
            pair[1] = pair[0].complement();
        }
    }
    ApertureSchedule {
        patterns,
        binary: true,
        complementary: sched.complementary,
    }
}

/// A constraint violation at viewpoint `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Pattern `pattern` has a non-binary entry.
    Binary { pattern: usize, u: usize, v: usize },
    /// Pattern `pair + 1` is not the complement of pattern `pair`.
    Complement { pair: usize, u: usize, v: usize },
}

/// Lists every entry that breaks the schedule's declared constraints.
pub fn validate(sched: &ApertureSchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    if sched.binary {
        for (n, p) in sched.patterns.iter().enumerate() {
            for ((u, v), &x) in p.a.indexed_iter() {
                if x != 0.0 && x != 1.0 {
                    out.push(Violation::Binary { pattern: n, u, v });
                }
            }
        }
    }
    if sched.complementary {
        for (k, pair) in sched.patterns.chunks(2).enumerate() {
            for ((u, v), &x) in pair[0].a.indexed_iter() {
                if pair[1].a[[u, v]] != 1.0 - x {
                    out.push(Violation::Complement { pair: 2 * k, u, v });
                }
            }
        }
    }
    out
}

/// Which constraints a generated schedule must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub complementary: bool,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            complementary: true,
        }
    }
}

/// Uniformly random binary schedule of `n` patterns on a `nu × nv` grid.
///
/// With the complementary constraint only the free patterns are drawn.
pub fn random_schedule(
    rng_seed: u64,
    constraints: Constraints,
    n: usize,
    (nu, nv): (usize, usize),
) -> Result<ApertureSchedule> {
    let mut rng = rng::stream(rng_seed, domain::SCHEDULE, 0);
    let mut draw = || AperturePattern {
        a: Array2::from_shape_fn((nu, nv), |_| if rng.random::<bool>() { 1.0 } else { 0.0 }),
    };
    if constraints.complementary {
        if !n.is_multiple_of(2) {
            return Err(Error::Schedule(format!(
                "complementary schedules need an even pattern count, got {n}"
            )));
        }
        let free = (0..n / 2).map(|_| draw()).collect();
        ApertureSchedule::complementary_from(free, true)
    } else {
        ApertureSchedule::new((0..n).map(|_| draw()).collect(), true, false)
    }
}
