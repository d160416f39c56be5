//! Search over binary complementary aperture schedules.
//!
//! The loss is the reconstruction MSE of the full event pipeline plus a hinge
//! penalty on the total event count. Single-bit flips of the free patterns
//! (their complements follow) are explored by simulated annealing.

use std::path::Path;

use ndarray::s;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aperture::{validate, ApertureSchedule};
use crate::lightfield::{mse, Image, LightField};
use crate::recon::{recon_from_measurement, ReconConfig};
use crate::rng::{self, domain};
use crate::sensor::{coded_images, measure_coded, normalization, SensorConfig};
use crate::{Error, Result};

/// Pixels in one training batch of the reference setup: 16 crops of 64×64.
pub const REFERENCE_BATCH_PIXELS: usize = 16 * 64 * 64;

/// Hinge penalty `λ·max(n_event − θ, 0)` on the events of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventBudget {
    pub lambda: f64,
    pub theta: f64,
}

impl Default for EventBudget {
    fn default() -> Self {
        EventBudget {
            lambda: 1e-5,
            theta: 131_130.0,
        }
    }
}

impl EventBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "budget lambda {} must be >= 0",
                self.lambda
            )));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::Config(format!(
                "budget theta {} must be >= 0",
                self.theta
            )));
        }
        Ok(())
    }

    /// Rescales `θ` from the reference batch to `pixels` evaluated pixels.
    pub fn scaled_to(&self, pixels: usize) -> EventBudget {
        EventBudget {
            lambda: self.lambda,
            theta: self.theta * pixels as f64 / REFERENCE_BATCH_PIXELS as f64,
        }
    }

    /// [`scaled_to`](Self::scaled_to) the total pixel count of `scenes`.
    pub fn scaled_for(&self, scenes: &[LightField]) -> EventBudget {
        let pixels = scenes.iter().map(|s| s.spatial().0 * s.spatial().1).sum();
        self.scaled_to(pixels)
    }
}

pub fn event_penalty(n_event: u64, budget: &EventBudget) -> f64 {
    budget.lambda * (n_event as f64 - budget.theta).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub iterations: usize,
    pub initial_temperature: f64,
    /// Temperature multiplier per iteration.
    pub cooling_rate: f64,
    /// `τ` is drawn uniformly from `[lo, hi]` once per scene.
    pub tau_range: [f64; 2],
    pub rng_seed: u64,
    /// Noise model; `tau` is replaced by the per-scene draw.
    pub sensor: SensorConfig,
    pub recon: ReconConfig,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            iterations: 300,
            initial_temperature: 1e-4,
            cooling_rate: 0.98,
            tau_range: [0.075, 0.3],
            rng_seed: 0,
            sensor: SensorConfig::default(),
            recon: ReconConfig {
                lambda_spatial_smooth: 0.0,
                ..Default::default()
            },
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.tau_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "tau_range [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"
            )));
        }
        if !(self.initial_temperature.is_finite() && self.initial_temperature >= 0.0) {
            return Err(Error::Config(format!(
                "initial_temperature {} must be >= 0",
                self.initial_temperature
            )));
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate <= 1.0) {
            return Err(Error::Config(format!(
                "cooling_rate {} must lie in (0, 1]",
                self.cooling_rate
            )));
        }
        self.sensor.validate()?;
        self.recon.validate()
    }

    /// The `τ` used for scene `index`.
    pub fn tau_for_scene(&self, index: usize) -> f64 {
        let [lo, hi] = self.tau_range;
        if lo == hi {
            return lo;
        }
        let mut rng = rng::stream(self.rng_seed, domain::TAU_DRAW, index as u64);
        rng.random_range(lo..=hi)
    }

    fn sensor_for_scene(&self, index: usize) -> SensorConfig {
        SensorConfig {
            tau: self.tau_for_scene(index),
            rng_seed: self.sensor.rng_seed.wrapping_add(index as u64),
            ..self.sensor
        }
    }
}

/// One evaluation of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub value: f64,
    pub mse: f64,
    pub n_event: u64,
    pub penalty: f64,
}

fn check_schedule(sched: &ApertureSchedule) -> Result<()> {
    let violations = validate(sched);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Schedule(format!("{violations:?}")))
    }
}

/// Per-scene coded images, kept in step with the schedule under flips.
struct Cache<'a> {
    scenes: &'a [LightField],
    images: Vec<Vec<Image>>,
}

impl<'a> Cache<'a> {
    fn new(scenes: &'a [LightField], sched: &ApertureSchedule) -> Result<Self> {
        let images = scenes
            .iter()
            .map(|lf| coded_images(lf, sched))
            .collect::<Result<_>>()?;
        Ok(Cache { scenes, images })
    }

    /// Pattern `n` changed by `delta` at `(u, v)`: a rank-1 update.
    fn update(&mut self, n: usize, u: usize, v: usize, delta: f64) {
        for (lf, imgs) in self.scenes.iter().zip(&mut self.images) {
            let view = lf.data().slice(s![.., .., u, v]);
            let mut data = std::mem::replace(&mut imgs[n], Image::zeros(0, 0)).into_data();
            data.scaled_add(delta, &view);
            data.mapv_inplace(|x| x.max(0.0));
            imgs[n] = Image::from_array_unchecked(data);
        }
    }

    fn evaluate(
        &self,
        sched: &ApertureSchedule,
        cfg: &OptConfig,
        budget: &EventBudget,
    ) -> Result<ObjectiveValue> {
        let k = normalization(sched);
        let per_scene = self
            .scenes
            .par_iter()
            .zip(&self.images)
            .enumerate()
            .map(|(i, (lf, raw))| -> Result<(f64, u64)> {
                let sensor = cfg.sensor_for_scene(i);
                let m = measure_coded(raw, k, &sensor)?;
                let (r, _) =
                    recon_from_measurement(&m, sched, sensor.tau, sensor.epsilon, &cfg.recon)?;
                Ok((mse(lf, &r.field)?, m.n_event))
            })
            .collect::<Result<Vec<_>>>()?;
        let mse = per_scene.iter().map(|p| p.0).sum::<f64>() / per_scene.len() as f64;
        let n_event = per_scene.iter().map(|p| p.1).sum();
        let penalty = event_penalty(n_event, budget);
        Ok(ObjectiveValue {
            value: mse + penalty,
            mse,
            n_event,
            penalty,
        })
    }
}

/// Mean reconstruction MSE over `scenes` plus the event penalty on the total
/// event count, each scene measured at its own drawn `τ`.
pub fn objective(
    sched: &ApertureSchedule,
    scenes: &[LightField],
    cfg: &OptConfig,
    budget: &EventBudget,
) -> Result<ObjectiveValue> {
    check_schedule(sched)?;
    cfg.validate()?;
    budget.validate()?;
    if scenes.is_empty() {
        return Err(Error::Config("objective needs at least one scene".into()));
    }
    Cache::new(scenes, sched)?.evaluate(sched, cfg, budget)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub value: f64,
    /// Set when some row is all zeros and the value is pinned to 1.
    pub degenerate: bool,
}

/// Mutual coherence of the schedule's rows: the largest
/// `|⟨aᵢ, aⱼ⟩| / (‖aᵢ‖‖aⱼ‖)` over distinct patterns.
pub fn coherence_surrogate(sched: &ApertureSchedule) -> Coherence {
    let rows = sched.rows();
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.contains(&0.0) {
        return Coherence {
            value: 1.0,
            degenerate: true,
        };
    }
    let mut worst: f64 = 0.0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            worst = worst.max(dot.abs() / (norms[i] * norms[j]));
        }
    }
    Coherence {
        value: worst,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct AnnealResult {
    pub schedule: ApertureSchedule,
    pub best: ObjectiveValue,
    pub initial: ObjectiveValue,
    /// Row 0 is the initial schedule; row `i` follows move `i`.
    pub trace: Vec<TracePoint>,
    pub accepted: usize,
}

/// Simulated annealing from `init`, returning the best schedule seen.
pub fn anneal(
    init: &ApertureSchedule,
    scenes: &[LightField],
    cfg: &OptConfig,
    budget: &EventBudget,
) -> Result<AnnealResult> {
    check_schedule(init)?;
    if !(init.binary && init.complementary) {
        return Err(Error::Schedule(
            "annealing needs a binary complementary schedule".into(),
        ));
    }
    cfg.validate()?;
    budget.validate()?;
    if scenes.is_empty() {
        return Err(Error::Config("anneal needs at least one scene".into()));
    }
    let free = init.free_indices();
    let (nu, nv) = init.pattern_dims();
    let mut current = init.clone();
    let mut cache = Cache::new(scenes, &current)?;
    let initial = cache.evaluate(&current, cfg, budget)?;
    let (mut f_cur, mut best, mut best_sched) = (initial, initial, current.clone());
    let mut temperature = cfg.initial_temperature;
    let mut trace = vec![TracePoint {
        iter: 0,
        objective: initial.value,
        best_objective: initial.value,
        temperature,
    }];
    let mut rng = rng::stream(cfg.rng_seed, domain::ANNEAL, 0);
    let mut accepted = 0;

    for iter in 1..=cfg.iterations {
        let n = free[rng.random_range(0..free.len())];
        let (u, v) = (rng.random_range(0..nu), rng.random_range(0..nv));
        let changed = flip_and_update(&mut current, &mut cache, n, u, v);
        let f_new = cache.evaluate(&current, cfg, budget)?;
        let delta = f_new.value - f_cur.value;
        let accept = delta <= 0.0
            || (temperature > 0.0 && rng.random::<f64>() < (-delta / temperature).exp());
        if accept {
            f_cur = f_new;
            accepted += 1;
            if f_cur.value < best.value {
                best = f_cur;
                best_sched = current.clone();
            }
        } else {
            let undone = flip_and_update(&mut current, &mut cache, n, u, v);
            debug_assert_eq!(undone, changed);
        }
        trace.push(TracePoint {
            iter,
            objective: f_cur.value,
            best_objective: best.value,
            temperature,
        });
        temperature *= cfg.cooling_rate;
    }
    Ok(AnnealResult {
        schedule: best_sched,
        best,
        initial,
        trace,
        accepted,
    })
}

fn flip_and_update(
    sched: &mut ApertureSchedule,
    cache: &mut Cache,
    n: usize,
    u: usize,
    v: usize,
) -> Vec<usize> {
    let changed = sched.flip(n, u, v);
    for &m in &changed {
        let now = sched.patterns()[m].values()[[u, v]];
        cache.update(m, u, v, if now > 0.5 { 1.0 } else { -1.0 });
    }
    changed
}

/// Writes the trace with header `iter,objective,best_objective,temperature`.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TracePoint]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for p in trace {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
