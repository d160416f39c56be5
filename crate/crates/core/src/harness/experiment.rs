//! Experiment configuration, the scene × τ evaluation loop and reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aperture::{
    binarize, random_schedule, schedule_from_seeds, ApertureSchedule, Constraints, ScheduleFile,
    ScheduleSeed,
};
use crate::equivalence::continuous_events;
use crate::lightfield::Image;
use crate::lightfield::{
    load_lightfield, quality_report, save_image_png, synth_scene, synthetic_suite, LightField,
    SceneSpec, TextureSource,
};
use crate::patopt::{anneal, EventBudget, ObjectiveValue, OptConfig};
use crate::recon::{
    coded_images_recon, image_only_recon, recon_from_measurement, recon_from_stacks,
    regularized_recon, ReconConfig, Reconstruction, SensingModel, SolverStats,
};
use crate::sensor::{
    coded_images, frame_sum, full4d_image, jaec_image, lens_array_baseline, normalization,
    simulate_exposure, Full4DMask, JaecMask, SensorConfig,
};
use crate::{Error, Result};

/// Version tag written into every report.
pub const REPORT_SPEC_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSource {
    Synthetic {
        #[serde(default)]
        name: Option<String>,
        spec: SceneSpec,
        width: usize,
        height: usize,
    },
    /// A directory of `view_{u}_{v}.png` files.
    Directory { path: PathBuf },
    /// `count` scenes of the standard synthetic suite.
    Suite {
        count: usize,
        size: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSource {
    File {
        path: PathBuf,
    },
    Seeds {
        seed: ScheduleSeed,
        #[serde(default)]
        binarize: bool,
    },
    Random {
        seed: u64,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_views")]
        views: [usize; 2],
    },
    /// Anneal from a random schedule on a training suite.
    Optimize {
        #[serde(default)]
        opt: OptConfig,
        #[serde(default)]
        budget: EventBudget,
        training: TrainingSuite,
        #[serde(default)]
        init_seed: u64,
    },
}

fn default_n() -> usize {
    4
}

fn default_views() -> [usize; 2] {
    [8, 8]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSuite {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

/// Which reconstructions to run per scene and `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Methods {
    pub ours: bool,
    pub image_only: bool,
    /// `N` separately captured coded images.
    pub coded: bool,
    pub jaec: bool,
    pub full4d: bool,
    pub lens_array: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Methods {
            ours: true,
            image_only: true,
            coded: true,
            jaec: false,
            full4d: false,
            lens_array: false,
        }
    }
}

impl Methods {
    fn enabled(&self) -> Vec<&'static str> {
        [
            ("ours", self.ours),
            ("image_only", self.image_only),
            ("coded", self.coded),
            ("jaec", self.jaec),
            ("full4d", self.full4d),
            ("lens_array", self.lens_array),
        ]
        .into_iter()
        .filter_map(|(name, on)| on.then_some(name))
        .collect()
    }
}

/// How event stacks are formed for the proposed pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventModel {
    /// Truncated counts with threshold noise.
    #[default]
    Quantized,
    /// Real-valued log ratios over `τ`, no threshold noise.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenes: Vec<SceneSource>,
    pub schedule: ScheduleSource,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub methods: Methods,
    #[serde(default)]
    pub event_model: EventModel,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Write center views and EPI slices of every reconstruction.
    #[serde(default)]
    pub write_images: bool,
    /// Worker threads for scene × τ jobs; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_taus() -> Vec<f64> {
    vec![0.15]
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(config_err("tau list is empty"));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(config_err(format!("tau {t} outside (0, 1]")));
    }
    Ok(())
}

fn check_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(config_err(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| config_err(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        check_exists(path, "config file")?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked before simulation starts,
    /// including that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(config_err("no scenes configured"));
        }
        check_taus(&self.taus)?;
        self.sensor
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.recon
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if self.workers == Some(0) {
            return Err(config_err("workers must be at least 1"));
        }
        for scene in &self.scenes {
            match scene {
                SceneSource::Directory { path } => check_exists(path, "scene directory")?,
                SceneSource::Synthetic { spec, .. } => {
                    for layer in &spec.layers {
                        if let TextureSource::File { path } = &layer.texture {
                            check_exists(path, "texture file")?;
                        }
                    }
                }
                SceneSource::Suite { count, .. } if *count == 0 => {
                    return Err(config_err("empty scene suite"))
                }
                SceneSource::Suite { .. } => {}
            }
        }
        match &self.schedule {
            ScheduleSource::File { path } => check_exists(path, "schedule file")?,
            ScheduleSource::Optimize {
                opt,
                budget,
                training,
                ..
            } => {
                opt.validate().map_err(|e| config_err(e.to_string()))?;
                budget.validate()?;
                if training.count == 0 {
                    return Err(config_err("empty training suite"));
                }
            }
            ScheduleSource::Random { n, .. } if *n < 2 || n % 2 != 0 => {
                return Err(config_err(format!(
                    "random schedules need an even n >= 2, got {n}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// A scene with its report label.
#[derive(Debug, Clone)]
pub struct NamedScene {
    pub name: String,
    pub field: LightField,
}

pub fn load_scenes(sources: &[SceneSource]) -> Result<Vec<NamedScene>> {
    let mut out = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        match src {
            SceneSource::Synthetic {
                name,
                spec,
                width,
                height,
            } => out.push(NamedScene {
                name: name.clone().unwrap_or_else(|| format!("scene{i}")),
                field: synth_scene(spec, *width, *height)?,
            }),
            SceneSource::Directory { path } => out.push(NamedScene {
                name: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("scene{i}")),
                field: load_lightfield(path)?,
            }),
            SceneSource::Suite { count, size, seed } => {
                for (k, field) in synthetic_suite(*seed, *count, *size)?
                    .into_iter()
                    .enumerate()
                {
                    out.push(NamedScene {
                        name: format!("suite{seed}_{k}"),
                        field,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Summary of a schedule search run as part of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSummary {
    pub initial: ObjectiveValue,
    pub best: ObjectiveValue,
    /// `θ` after rescaling to the training pixels.
    pub theta: f64,
    pub theta_scale: f64,
    pub iterations: usize,
}

pub fn resolve_schedule(
    src: &ScheduleSource,
) -> Result<(ApertureSchedule, Option<OptimizationSummary>)> {
    match src {
        ScheduleSource::File { path } => Ok((ApertureSchedule::load(path)?, None)),
        ScheduleSource::Seeds { seed, binarize: b } => {
            let s = schedule_from_seeds(seed)?;
            Ok((if *b { binarize(&s) } else { s }, None))
        }
        ScheduleSource::Random { seed, n, views } => Ok((
            random_schedule(*seed, Constraints::default(), *n, (views[0], views[1]))?,
            None,
        )),
        ScheduleSource::Optimize {
            opt,
            budget,
            training,
            init_seed,
        } => {
            let scenes = synthetic_suite(training.seed, training.count, training.size)?;
            let init = random_schedule(*init_seed, Constraints::default(), 4, (8, 8))?;
            let scaled = budget.scaled_for(&scenes);
            let r = anneal(&init, &scenes, opt, &scaled)?;
            Ok((
                r.schedule,
                Some(OptimizationSummary {
                    initial: r.initial,
                    best: r.best,
                    theta: scaled.theta,
                    theta_scale: scaled.theta / budget.theta.max(f64::MIN_POSITIVE),
                    iterations: opt.iterations,
                }),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub psnr_db: Option<f64>,
    pub psnr_global_db: Option<f64>,
    pub ssim: Option<f64>,
    pub solver: Option<SolverStats>,
    pub error: Option<String>,
}

impl MethodResult {
    fn failed(e: &Error) -> Self {
        MethodResult {
            psnr_db: None,
            psnr_global_db: None,
            ssim: None,
            solver: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scene: String,
    pub tau: f64,
    /// Events of the proposed pipeline's exposure.
    pub n_event: Option<u64>,
    pub methods: BTreeMap<String, MethodResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub spec_version: String,
    pub rng_seed: u64,
    pub schedule: ScheduleFile,
    pub optimization: Option<OptimizationSummary>,
    pub methods: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Rows or methods that failed.
    pub failures: usize,
}

impl Report {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// One line per scene × τ; each method contributes `psnr_db` and `ssim`
    /// columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec!["scene".to_string(), "tau".into(), "n_event".into()];
        for m in &self.methods {
            header.push(format!("{m}_psnr_db"));
            header.push(format!("{m}_ssim"));
        }
        header.push("error".into());
        w.write_record(&header)?;
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![
                row.scene.clone(),
                format!("{}", row.tau),
                row.n_event.map(|n| n.to_string()).unwrap_or_default(),
            ];
            for m in &self.methods {
                let r = row.methods.get(m);
                rec.push(num(r.and_then(|r| r.psnr_db)));
                rec.push(num(r.and_then(|r| r.ssim)));
            }
            let mut errors: Vec<String> = row.error.iter().cloned().collect();
            errors.extend(
                row.methods
                    .iter()
                    .filter_map(|(m, r)| r.error.as_ref().map(|e| format!("{m}: {e}"))),
            );
            rec.push(errors.join("; "));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reconstruction of the proposed single-exposure pipeline and its event
/// count (`None` for continuous stacks).
pub fn reconstruct_ours(
    lf: &LightField,
    sched: &ApertureSchedule,
    sensor: &SensorConfig,
    recon: &ReconConfig,
    model: EventModel,
) -> Result<(Reconstruction, Option<u64>)> {
    match model {
        EventModel::Quantized => {
            let m = simulate_exposure(lf, sched, sensor)?;
            let (r, _) = recon_from_measurement(&m, sched, sensor.tau, sensor.epsilon, recon)?;
            Ok((r, Some(m.n_event)))
        }
        EventModel::Continuous => {
            let k = normalization(sched);
            let normalized: Vec<Image> = coded_images(lf, sched)?
                .iter()
                .map(|i| Image::from_array_unchecked(i.data() / k))
                .collect();
            let stacks = normalized
                .windows(2)
                .map(|p| continuous_events(&p[0], &p[1], sensor.tau, sensor.epsilon))
                .collect::<Result<Vec<_>>>()?;
            let frame = frame_sum(&normalized, sensor)?;
            let (r, _) =
                recon_from_stacks(&frame, &stacks, sched, sensor.tau, sensor.epsilon, recon)?;
            Ok((r, None))
        }
    }
}

/// The frame of the proposed exposure, reconstructed on its own.
pub fn reconstruct_image_only(
    lf: &LightField,
    sched: &ApertureSchedule,
    sensor: &SensorConfig,
    recon: &ReconConfig,
) -> Result<Reconstruction> {
    let m = simulate_exposure(lf, sched, sensor)?;
    image_only_recon(&m.frame_raw(), sched, recon)
}

/// `N` coded images captured in separate exposures, each with frame noise
/// scaled to raw units.
pub fn reconstruct_coded(
    lf: &LightField,
    sched: &ApertureSchedule,
    sensor: &SensorConfig,
    recon: &ReconConfig,
) -> Result<Reconstruction> {
    let k = normalization(sched);
    let images: Vec<Image> = coded_images(lf, sched)?
        .into_iter()
        .enumerate()
        .map(|(n, img)| {
            crate::sensor::add_frame_noise(
                img.into_data(),
                sensor.sigma_frame * k,
                sensor.rng_seed,
                16 + n as u64,
            )
        })
        .collect();
    coded_images_recon(&images, sched, recon)
}

struct Job<'a> {
    scene: &'a NamedScene,
    index: usize,
    tau: f64,
}

fn run_job(
    job: &Job,
    sched: &ApertureSchedule,
    cfg: &ExperimentConfig,
    images_dir: Option<&Path>,
) -> ReportRow {
    let sensor = SensorConfig {
        tau: job.tau,
        rng_seed: cfg.rng_seed.wrapping_add(job.index as u64),
        ..cfg.sensor
    };
    let lf = &job.scene.field;
    let mut methods = BTreeMap::new();
    let mut n_event = None;
    let (nx, ny, nu, nv) = lf.dims();
    for name in cfg.methods.enabled() {
        let result: Result<Reconstruction> = match name {
            "ours" => {
                reconstruct_ours(lf, sched, &sensor, &cfg.recon, cfg.event_model).map(|(r, n)| {
                    n_event = n;
                    r
                })
            }
            "image_only" => reconstruct_image_only(lf, sched, &sensor, &cfg.recon),
            "coded" => reconstruct_coded(lf, sched, &sensor, &cfg.recon),
            "jaec" => {
                let mask = JaecMask::random(cfg.rng_seed, sched.len(), (nx, ny));
                jaec_image(lf, sched, &mask, &sensor).and_then(|img| {
                    regularized_recon(
                        std::slice::from_ref(&img),
                        &SensingModel::jaec(sched, &mask)?,
                        &cfg.recon,
                    )
                })
            }
            "full4d" => {
                let mask = Full4DMask::random(cfg.rng_seed, (nx, ny, nu, nv));
                full4d_image(lf, &mask, &sensor).and_then(|img| {
                    regularized_recon(
                        std::slice::from_ref(&img),
                        &SensingModel::full4d(&mask),
                        &cfg.recon,
                    )
                })
            }
            "lens_array" => lens_array_baseline(lf).map(Reconstruction::interpolated),
            _ => unreachable!("unknown method {name}"),
        };
        let entry = result.and_then(|r| {
            if let Some(dir) = images_dir {
                write_images(dir, &job.scene.name, job.tau, name, &r.field)?;
            }
            let q = quality_report(lf, &r.field)?;
            Ok(MethodResult {
                psnr_db: Some(q.psnr_db),
                psnr_global_db: Some(q.psnr_global_db),
                ssim: Some(q.ssim),
                solver: Some(r.stats),
                error: None,
            })
        });
        methods.insert(
            name.to_string(),
            entry.unwrap_or_else(|e| MethodResult::failed(&e)),
        );
    }
    ReportRow {
        scene: job.scene.name.clone(),
        tau: job.tau,
        n_event,
        methods,
        error: None,
    }
}

fn write_images(dir: &Path, scene: &str, tau: f64, method: &str, lf: &LightField) -> Result<()> {
    let (_, ny, nu, nv) = lf.dims();
    let stem = format!("{scene}_tau{tau}_{method}");
    save_image_png(
        dir.join(format!("{stem}_center.png")),
        &lf.view_image(nu / 2, nv / 2),
        1.0,
    )?;
    save_image_png(
        dir.join(format!("{stem}_epi.png")),
        &lf.epi_slice(ny / 2, nv / 2)?,
        1.0,
    )
}

/// Runs every scene × τ job and writes `report.json` and `report.csv` to the
/// output directory when one is configured.
///
/// Configuration problems fail before any simulation; errors inside a job are
/// recorded in its row and counted in [`Report::failures`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let scenes = load_scenes(&cfg.scenes)?;
    let (sched, optimization) = resolve_schedule(&cfg.schedule)?;
    let images_dir = match (&cfg.output_dir, cfg.write_images) {
        (Some(out), true) => {
            let d = out.join("images");
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            Some(d)
        }
        _ => None,
    };
    let jobs: Vec<Job> = scenes
        .iter()
        .enumerate()
        .flat_map(|(index, scene)| cfg.taus.iter().map(move |&tau| Job { scene, index, tau }))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    let rows: Vec<ReportRow> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, &sched, cfg, images_dir.as_deref()))
            .collect()
    });
    let failures = rows
        .iter()
        .map(|r| {
            r.error.is_some() as usize + r.methods.values().filter(|m| m.error.is_some()).count()
        })
        .sum();
    let report = Report {
        spec_version: REPORT_SPEC_VERSION.into(),
        rng_seed: cfg.rng_seed,
        schedule: sched.to_json(),
        optimization,
        methods: cfg
            .methods
            .enabled()
            .into_iter()
            .map(String::from)
            .collect(),
        rows,
        failures,
    };
    if let Some(out) = &cfg.output_dir {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        report.write_json(out.join("report.json"))?;
        report.write_csv(out.join("report.csv"))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub psnr_db: f64,
}

/// Mean PSNR of the proposed pipeline over `scenes` at each `τ`.
///
/// Scene `i` uses sensor seed `sensor.rng_seed + i` at every `τ`, so the
/// curve compares identical noise draws.
pub fn tau_sweep(
    scenes: &[LightField],
    sched: &ApertureSchedule,
    taus: &[f64],
    sensor: &SensorConfig,
    recon: &ReconConfig,
    model: EventModel,
) -> Result<Vec<SweepPoint>> {
    check_taus(taus)?;
    if scenes.is_empty() {
        return Err(config_err("tau sweep needs at least one scene"));
    }
    taus.iter()
        .map(|&tau| {
            let psnrs = scenes
                .par_iter()
                .enumerate()
                .map(|(i, lf)| {
                    let cfg = SensorConfig {
                        tau,
                        rng_seed: sensor.rng_seed.wrapping_add(i as u64),
                        ..*sensor
                    };
                    let (r, _) = reconstruct_ours(lf, sched, &cfg, recon, model)?;
                    crate::lightfield::psnr(lf, &r.field)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepPoint {
                tau,
                psnr_db: psnrs.iter().sum::<f64>() / psnrs.len() as f64,
            })
        })
        .collect()
}

/// Writes the curve with header `tau,psnr_db`.
pub fn write_sweep_csv(path: impl AsRef<Path>, curve: &[SweepPoint]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
