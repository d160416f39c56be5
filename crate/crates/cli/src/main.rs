//! `ecalf`: simulation, inversion, reconstruction, schedule search and
//! experiment reports from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for runtime
//! failures (including reports with failed rows).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ecalf::aperture::{random_schedule, ApertureSchedule, Constraints};
use ecalf::equivalence::recover_from_measurement;
use ecalf::harness::{
    load_scenes, resolve_schedule, run_experiment, segment_stream_with, tau_sweep, write_sweep_csv,
    EventModel, ExperimentConfig, Methods, SceneSource, ScheduleSource, SegmentParams,
    TimingConfig,
};
use ecalf::lightfield::{
    load_lightfield, quality_report, save_image_png, save_lightfield, synthetic_suite,
};
use ecalf::patopt::{anneal, write_trace_csv, EventBudget, OptConfig};
use ecalf::recon::{recon_from_measurement, ReconConfig};
use ecalf::sensor::{simulate_event_stream, EventStream, Measurement, SensorConfig};
use ecalf::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ecalf",
    version,
    about = "Coded-aperture event-camera light-field toolkit"
)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's rng_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate exposures and event streams for the configured scenes.
    Simulate {
        /// Pattern cycles to emit into each event stream.
        #[arg(long, default_value_t = 1)]
        cycles: usize,
    },
    /// Recover the coded images from a measurement.
    Invert {
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        tau: f64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
    },
    /// Reconstruct a light field from a measurement.
    Reconstruct {
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        tau: f64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Ground-truth light-field directory for quality metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Anneal a binary complementary schedule.
    Optimize(OptimizeArgs),
    /// Split an event stream (CSV) into per-cycle event stacks.
    Segment(SegmentArgs),
    /// Mean PSNR of the event pipeline against τ.
    Sweep {
        /// Comma-separated τ values; defaults to the configuration's list.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        /// Use real-valued event stacks.
        #[arg(long)]
        continuous: bool,
    },
    /// Run the configured experiment and write report.json and report.csv.
    Report,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long)]
    iterations: Option<usize>,
    /// Event threshold before rescaling to the training pixels.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 4)]
    training_count: usize,
    #[arg(long, default_value_t = 32)]
    training_size: usize,
    /// Seed of the random starting schedule.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = 100)]
    bin_us: u64,
    #[arg(long, default_value_t = 5.0)]
    open_factor: f64,
    #[arg(long, default_value_t = 2.0)]
    close_factor: f64,
    #[arg(long, default_value_t = 0.1)]
    min_burst_fraction: f64,
    #[arg(long, default_value_t = 5.434)]
    t_c: f64,
    #[arg(long, default_value_t = 0.5)]
    transient: f64,
    #[arg(long, default_value_t = 4)]
    n_patterns: usize,
}

fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        scenes: vec![SceneSource::Suite {
            count: 4,
            size: 32,
            seed: 0,
        }],
        schedule: ScheduleSource::Random {
            seed: 0,
            n: 4,
            views: [8, 8],
        },
        sensor: SensorConfig::default(),
        recon: ReconConfig::default(),
        taus: vec![0.15],
        methods: Methods::default(),
        event_model: EventModel::Quantized,
        output_dir: None,
        rng_seed: 0,
        write_images: false,
        workers: None,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => default_config(),
    };
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.output_dir = Some(cli.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn simulate(cli: &Cli, cycles: usize) -> Result<()> {
    let cfg = load_config(cli)?;
    let scenes = load_scenes(&cfg.scenes)?;
    let (sched, _) = resolve_schedule(&cfg.schedule)?;
    create_dir(&cli.out)?;
    sched.save(cli.out.join("schedule.json"))?;
    let timing = TimingConfig {
        n_patterns: sched.len(),
        ..Default::default()
    };
    for (i, scene) in scenes.iter().enumerate() {
        let dir = cli.out.join(&scene.name);
        create_dir(&dir)?;
        let sensor = SensorConfig {
            tau: cfg.taus[0],
            rng_seed: cfg.rng_seed.wrapping_add(i as u64),
            ..cfg.sensor
        };
        let (m, stream) = simulate_event_stream(&scene.field, &sched, &timing, &sensor, cycles)?;
        m.save(dir.join("measurement.json"))?;
        stream.write_csv(dir.join("events.csv"))?;
        let white = m
            .frame
            .data()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        save_image_png(dir.join("frame.png"), &m.frame, white)?;
        save_lightfield(dir.join("truth"), &scene.field)?;
        println!(
            "{}: {} events per cycle, {} in stream",
            scene.name,
            m.n_event,
            stream.len()
        );
    }
    Ok(())
}

fn invert(cli: &Cli, measurement: &Path, tau: f64, epsilon: f64) -> Result<()> {
    let m = Measurement::load(measurement)?;
    let r = recover_from_measurement(&m, tau, epsilon)?;
    create_dir(&cli.out)?;
    let white = r
        .images
        .iter()
        .flat_map(|i| i.data().iter().cloned())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for (n, img) in r.images.iter().enumerate() {
        save_image_png(cli.out.join(format!("recovered_{}.png", n + 1)), img, white)?;
    }
    write_json(
        &cli.out.join("recovered.json"),
        &json!({
            "images": r.images,
            "deviation_bound": r.deviation_bound,
            "clamped_pixels": r.clamped_pixels,
            "floored_samples": r.floored_samples,
        }),
    )?;
    println!("recovered {} images", r.images.len());
    Ok(())
}

fn reconstruct(
    cli: &Cli,
    measurement: &Path,
    schedule: &Path,
    tau: f64,
    epsilon: f64,
    truth: Option<&Path>,
) -> Result<()> {
    let recon = match &cli.config {
        Some(_) => load_config(cli)?.recon,
        None => ReconConfig::default(),
    };
    let m = Measurement::load(measurement)?;
    let sched = ApertureSchedule::load(schedule)?;
    let (r, _) = recon_from_measurement(&m, &sched, tau, epsilon, &recon)?;
    create_dir(&cli.out)?;
    save_lightfield(cli.out.join("lightfield"), &r.field)?;
    let quality = match truth {
        Some(dir) => Some(quality_report(&load_lightfield(dir)?, &r.field)?),
        None => None,
    };
    if let Some(q) = &quality {
        println!("PSNR {:.2} dB, SSIM {:.4}", q.psnr_db, q.ssim);
    }
    write_json(
        &cli.out.join("reconstruction.json"),
        &json!({ "solver": r.stats, "quality": quality }),
    )
}

fn optimize(cli: &Cli, args: &OptimizeArgs) -> Result<()> {
    let from_config = match &cli.config {
        Some(_) => match load_config(cli)?.schedule {
            ScheduleSource::Optimize {
                opt,
                budget,
                training,
                init_seed,
            } => Some((opt, budget, training, init_seed)),
            _ => None,
        },
        None => None,
    };
    let (mut opt, mut budget, training, init_seed) = match from_config {
        Some((opt, budget, t, init)) => (opt, budget, (t.count, t.size, t.seed), init),
        None => (
            OptConfig::default(),
            EventBudget::default(),
            (
                args.training_count,
                args.training_size,
                cli.seed.unwrap_or(0),
            ),
            args.init_seed,
        ),
    };
    if let Some(n) = args.iterations {
        opt.iterations = n;
    }
    if let Some(seed) = cli.seed {
        opt.rng_seed = seed;
    }
    if let Some(theta) = args.theta {
        budget.theta = theta;
    }
    if let Some(lambda) = args.lambda {
        budget.lambda = lambda;
    }
    opt.validate()?;
    budget.validate()?;
    let scenes = synthetic_suite(training.2, training.0, training.1)?;
    let init = random_schedule(init_seed, Constraints::default(), 4, (8, 8))?;
    let scaled = budget.scaled_for(&scenes);
    let r = anneal(&init, &scenes, &opt, &scaled)?;
    create_dir(&cli.out)?;
    r.schedule.save(cli.out.join("schedule.json"))?;
    write_trace_csv(cli.out.join("trace.csv"), &r.trace)?;
    write_json(
        &cli.out.join("optimize.json"),
        &json!({
            "initial": r.initial,
            "best": r.best,
            "accepted": r.accepted,
            "theta": scaled.theta,
            "theta_scale": scaled.theta / budget.theta.max(f64::MIN_POSITIVE),
            "within_budget": r.best.n_event as f64 <= scaled.theta,
        }),
    )?;
    println!(
        "objective {:.6e} -> {:.6e}; events {} (theta {:.0}), penalty {:.3e}",
        r.initial.value, r.best.value, r.best.n_event, scaled.theta, r.best.penalty
    );
    Ok(())
}

fn segment(cli: &Cli, args: &SegmentArgs) -> Result<()> {
    let stream = EventStream::read_csv(&args.events, args.width, args.height)?;
    let timing = TimingConfig {
        t_c: args.t_c,
        transient: args.transient,
        n_patterns: args.n_patterns,
        display_duration: TimingConfig::default().display_duration.min(args.t_c),
    };
    let params = SegmentParams {
        bin_us: args.bin_us,
        open_factor: args.open_factor,
        close_factor: args.close_factor,
        min_burst_fraction: args.min_burst_fraction,
    };
    let seg = segment_stream_with(&stream, &timing, &params)?;
    create_dir(&cli.out)?;
    for (c, cycle) in seg.cycles.iter().enumerate() {
        for (k, stack) in cycle.stacks.iter().enumerate() {
            let path = cli.out.join(format!("cycle{c}_stack{}.bin", k + 1));
            std::fs::write(&path, stack.to_bytes()?)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    let cycles: Vec<_> = seg
        .cycles
        .iter()
        .map(|c| json!({ "onsets_us": c.onsets_us, "windows_us": c.windows }))
        .collect();
    write_json(
        &cli.out.join("segments.json"),
        &json!({ "median_rate": seg.median_rate, "skipped_bursts": seg.skipped_bursts, "cycles": cycles }),
    )?;
    println!("{} complete cycles", seg.cycles.len());
    Ok(())
}

fn sweep(cli: &Cli, taus: Option<&[f64]>, continuous: bool) -> Result<()> {
    let cfg = load_config(cli)?;
    let taus = taus
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| cfg.taus.clone());
    let scenes: Vec<_> = load_scenes(&cfg.scenes)?
        .into_iter()
        .map(|s| s.field)
        .collect();
    let (sched, _) = resolve_schedule(&cfg.schedule)?;
    let model = if continuous {
        EventModel::Continuous
    } else {
        cfg.event_model
    };
    let sensor = SensorConfig {
        rng_seed: cfg.rng_seed,
        ..cfg.sensor
    };
    let curve = tau_sweep(&scenes, &sched, &taus, &sensor, &cfg.recon, model)?;
    create_dir(&cli.out)?;
    write_sweep_csv(cli.out.join("sweep.csv"), &curve)?;
    for p in &curve {
        println!("tau {:.4}: {:.2} dB", p.tau, p.psnr_db);
    }
    Ok(())
}

/// `Ok(false)` when the report was written but some rows failed.
fn report(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let r = run_experiment(&cfg)?;
    println!(
        "{} rows written to {} ({} failures)",
        r.rows.len(),
        cli.out.display(),
        r.failures
    );
    Ok(r.failures == 0)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate { cycles } => simulate(cli, *cycles)?,
        Command::Invert {
            measurement,
            tau,
            epsilon,
        } => invert(cli, measurement, *tau, *epsilon)?,
        Command::Reconstruct {
            measurement,
            schedule,
            tau,
            epsilon,
            truth,
        } => reconstruct(cli, measurement, schedule, *tau, *epsilon, truth.as_deref())?,
        Command::Optimize(args) => optimize(cli, args)?,
        Command::Segment(args) => segment(cli, args)?,
        Command::Sweep { taus, continuous } => sweep(cli, taus.as_deref(), *continuous)?,
        Command::Report => return report(cli),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
