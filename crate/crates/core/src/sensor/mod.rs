//! Forward measurement models.
//!
//! Coded images follow `I_{x,y} = Σ_{u,v} a_{u,v} L_{x,y,u,v}` in raw units
//! (at most `U·V` for a fully open aperture). The event and frame models work
//! on coded images normalized by `U·V` so every coded image lies in `[0, 1]`
//! and the contrast threshold does not depend on the grid size.

use std::path::Path;

use ndarray::{Array2, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aperture::{AperturePattern, ApertureSchedule};
use crate::lightfield::{check_same_shape, Image, LightField};
use crate::rng::{self, domain};
use crate::{Error, Result};

mod baselines;
mod stream;

pub use baselines::{full4d_image, jaec_image, lens_array_baseline, Full4DMask, JaecMask};
pub use stream::{
    add_background_events, simulate_event_stream, stream_from_measurement, Event, EventStream,
};

/// Event and frame model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Contrast threshold in log-intensity units.
    pub tau: f64,
    /// Offset inside both logarithms.
    pub epsilon: f64,
    /// Std of the per-pixel threshold noise.
    pub sigma_tau: f64,
    /// Std of the additive frame noise, in normalized intensity units.
    pub sigma_frame: f64,
    pub rng_seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            tau: 0.15,
            epsilon: 0.01,
            sigma_tau: 0.021,
            sigma_frame: 0.005,
            rng_seed: 0,
        }
    }
}

impl SensorConfig {
    /// Same thresholds with both noise sources off.
    pub fn noiseless(self) -> Self {
        SensorConfig {
            sigma_tau: 0.0,
            sigma_frame: 0.0,
            ..self
        }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        SensorConfig { tau, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau = {} must be positive",
                self.tau
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        if !(self.sigma_tau >= 0.0 && self.sigma_frame >= 0.0) {
            return Err(Error::Config(
                "noise standard deviations must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Signed per-pixel event count over one transition, indexed `[x, y]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStack {
    pub counts: Array2<i32>,
}

impl EventStack {
    pub fn zeros(x: usize, y: usize) -> Self {
        EventStack {
            counts: Array2::zeros((x, y)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.counts.dim()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.counts.mapv(f64::from)
    }

    /// Number of events, `Σ |E|`.
    pub fn abs_sum(&self) -> u64 {
        self.counts.iter().map(|c| c.unsigned_abs() as u64).sum()
    }

    /// Binary layout: `u32` X, `u32` Y, then `X·Y` `i16` counts with `x`
    /// varying fastest; all little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (w, h) = self.dims();
        let mut out = Vec::with_capacity(8 + 2 * w * h);
        out.extend_from_slice(&(w as u32).to_le_bytes());
        out.extend_from_slice(&(h as u32).to_le_bytes());
        for y in 0..h {
            for x in 0..w {
                let c = self.counts[[x, y]];
                let c = i16::try_from(c).map_err(|_| {
                    Error::Overflow(format!("event count {c} at ({x},{y}) exceeds i16"))
                })?;
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Shape("event stack header truncated".into()));
        }
        let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != 2 * w * h {
            return Err(Error::Shape(format!(
                "event stack body has {} bytes, expected {}",
                body.len(),
                2 * w * h
            )));
        }
        let mut counts = Array2::zeros((w, h));
        for (i, chunk) in body.chunks_exact(2).enumerate() {
            counts[[i % w, i / w]] = i16::from_le_bytes([chunk[0], chunk[1]]) as i32;
        }
        Ok(EventStack { counts })
    }
}

/// Everything one exposure yields: the frame, `N−1` event stacks and the
/// total event count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Sum of the normalized coded images, plus frame noise.
    pub frame: Image,
    pub stacks: Vec<EventStack>,
    pub n_event: u64,
    /// Raw-to-normalized divisor (`U·V`).
    pub normalization: f64,
}

impl Measurement {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn n_patterns(&self) -> usize {
        self.stacks.len() + 1
    }

    /// Frame in raw coded-image units.
    pub fn frame_raw(&self) -> Image {
        Image::from_array_unchecked(self.frame.data() * self.normalization)
    }
}

/// `Q(x) = sign(x)·floor(|x|)`.
pub fn quantize(x: f64) -> f64 {
    x.trunc()
}

/// Coded-aperture image `I_{x,y} = Σ_{u,v} a_{u,v} L_{x,y,u,v}`.
pub fn coded_image(lf: &LightField, a: &AperturePattern) -> Result<Image> {
    check_same_shape(
        &[lf.views().0, lf.views().1],
        &[a.dims().0, a.dims().1],
        "pattern vs views",
    )?;
    let (nx, ny) = lf.spatial();
    let data = lf.data();
    let weights = a.values();
    let mut out = Array2::zeros((nx, ny));
    for ((u, v), &w) in weights.indexed_iter() {
        if w != 0.0 {
            out.scaled_add(w, &data.slice(ndarray::s![.., .., u, v]));
        }
    }
    Ok(Image::from_array_unchecked(out))
}

/// Raw coded images for every pattern in the schedule.
pub fn coded_images(lf: &LightField, sched: &ApertureSchedule) -> Result<Vec<Image>> {
    sched
        .patterns()
        .iter()
        .map(|a| coded_image(lf, a))
        .collect()
}

/// Divisor that maps raw coded images into `[0, 1]`.
pub fn normalization(sched: &ApertureSchedule) -> f64 {
    let (nu, nv) = sched.pattern_dims();
    (nu * nv) as f64
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is finite and positive"))
}

/// Adds zero-mean Gaussian noise drawn from stream `index` and clamps at 0.
pub(crate) fn add_frame_noise(img: Array2<f64>, sigma: f64, seed: u64, index: u64) -> Image {
    let Some(noise) = gaussian(sigma) else {
        return Image::from_array_unchecked(img.mapv(|v| v.max(0.0)));
    };
    let mut rng = rng::stream(seed, domain::FRAME_NOISE, index);
    Image::from_array_unchecked(img.mapv(|v| (v + noise.sample(&mut rng)).max(0.0)))
}

/// Frame `Ī = Σ_n I⁽ⁿ⁾` plus Gaussian noise of std `sigma_frame`, clamped at 0.
pub fn frame_sum(images: &[Image], cfg: &SensorConfig) -> Result<Image> {
    if images.len() < 2 {
        return Err(Error::Shape(format!(
            "frame needs at least 2 images, got {}",
            images.len()
        )));
    }
    let dims = images[0].dims();
    let mut sum = Array2::zeros(dims);
    for img in images {
        check_same_shape(
            &[dims.0, dims.1],
            &[img.dims().0, img.dims().1],
            "frame_sum",
        )?;
        sum += img.data();
    }
    Ok(add_frame_noise(sum, cfg.sigma_frame, cfg.rng_seed, 0))
}

/// Event stack between two normalized images with threshold-noise stream 0.
///
/// `E = Q((log(I_next + ε) − log(I_prev + ε)) / (τ + n))` with
/// `n ~ N(0, σ_τ)` drawn per pixel.
pub fn event_stack(prev: &Image, next: &Image, cfg: &SensorConfig) -> Result<EventStack> {
    event_stack_for_transition(prev, next, cfg, 0)
}

/// As [`event_stack`], drawing threshold noise from the stream of
/// `transition` so each transition of an exposure gets independent noise.
///
/// Draws with `τ + n ≤ τ/4` are rejected and redrawn.
pub fn event_stack_for_transition(
    prev: &Image,
    next: &Image,
    cfg: &SensorConfig,
    transition: u64,
) -> Result<EventStack> {
    cfg.validate()?;
    check_same_shape(prev.data().shape(), next.data().shape(), "event_stack")?;
    let noise = gaussian(cfg.sigma_tau);
    let mut rng = rng::stream(cfg.rng_seed, domain::THRESHOLD_NOISE, transition);
    let floor = cfg.tau / 4.0;
    let mut threshold = move || match &noise {
        None => cfg.tau,
        Some(dist) => loop {
            let t = cfg.tau + dist.sample(&mut rng);
            if t > floor {
                break t;
            }
        },
    };
    let mut counts = Array2::zeros(prev.dims());
    Zip::from(&mut counts)
        .and(prev.data())
        .and(next.data())
        .for_each(|c, &p, &n| {
            let ratio = (n + cfg.epsilon).ln() - (p + cfg.epsilon).ln();
            *c = quantize(ratio / threshold()) as i32;
        });
    Ok(EventStack { counts })
}

/// Simulates one exposure from raw coded images.
///
/// Images are normalized by `normalization` before the event and frame
/// models are applied. Transition `n → n+1` uses threshold-noise stream `n`.
pub fn measure_coded(raw: &[Image], normalization: f64, cfg: &SensorConfig) -> Result<Measurement> {
    cfg.validate()?;
    let normalized: Vec<Image> = raw
        .iter()
        .map(|img| Image::from_array_unchecked(img.data() / normalization))
        .collect();
    let stacks = normalized
        .windows(2)
        .enumerate()
        .map(|(k, pair)| event_stack_for_transition(&pair[0], &pair[1], cfg, k as u64))
        .collect::<Result<Vec<_>>>()?;
    let frame = frame_sum(&normalized, cfg)?;
    let n_event = stacks.iter().map(EventStack::abs_sum).sum();
    Ok(Measurement {
        frame,
        stacks,
        n_event,
        normalization,
    })
}

/// Coded images by the aperture model, event stacks between consecutive
/// patterns, and the noisy frame sum.
pub fn simulate_exposure(
    lf: &LightField,
    sched: &ApertureSchedule,
    cfg: &SensorConfig,
) -> Result<Measurement> {
    let raw = coded_images(lf, sched)?;
    measure_coded(&raw, normalization(sched), cfg)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::aperture::{random_schedule, Constraints};
    use crate::lightfield::{synth_scene, Layer, Opacity, SceneSpec, TextureSource};
    use ndarray::Array4;

    pub(crate) fn scene(seed: u64, d: f64) -> LightField {
        synth_scene(
            &SceneSpec::new(vec![Layer {
                texture: TextureSource::Procedural { seed, cell: 4.0 },
                disparity: d,
                opacity: Opacity::Full,
            }]),
            16,
            16,
        )
        .unwrap()
    }

    fn img(v: f64) -> Image {
        Image::constant(3, 2, v).unwrap()
    }

    #[test]
    fn measurement_file_round_trip() {
        let s = random_schedule(6, Constraints::default(), 4, (8, 8)).unwrap();
        let m = simulate_exposure(&scene(6, 1.0), &s, &SensorConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(Measurement::load(&path).unwrap(), m);
        std::fs::write(&path, r#"{"frame":{"v":1,"dim":[1,1],"data":[-1.0]},"stacks":[],"n_event":0,"normalization":64.0}"#).unwrap();
        assert!(Measurement::load(&path).is_err());
    }

    #[test]
    fn quantizer_truncates_toward_zero() {
        assert_eq!(quantize(0.9), 0.0);
        assert_eq!(quantize(1.0), 1.0);
        assert_eq!(quantize(-2.5), -2.0);
        assert_eq!(quantize(-0.3), 0.0);
    }

    #[test]
    fn coded_image_reductions() {
        let lf = scene(1, 1.0);
        let all = coded_image(&lf, &AperturePattern::ones(8, 8)).unwrap();
        let direct = lf
            .data()
            .sum_axis(ndarray::Axis(3))
            .sum_axis(ndarray::Axis(2));
        assert!(all
            .data()
            .iter()
            .zip(direct.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));

        let one = coded_image(&lf, &AperturePattern::delta(8, 8, 2, 5)).unwrap();
        assert_eq!(one.data(), &lf.view(2, 5).to_owned());
    }

    #[test]
    fn coded_image_complement_linearity() {
        let lf = scene(2, -1.5);
        let s = random_schedule(5, Constraints::default(), 4, (8, 8)).unwrap();
        let a = coded_image(&lf, &s.patterns()[0]).unwrap();
        let b = coded_image(&lf, &s.patterns()[1]).unwrap();
        let all = coded_image(&lf, &AperturePattern::ones(8, 8)).unwrap();
        let sum = a.data() + b.data();
        assert!(sum
            .iter()
            .zip(all.data())
            .all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn coded_image_shape_error() {
        let lf = LightField::zeros(4, 4, 8, 8);
        assert!(matches!(
            coded_image(&lf, &AperturePattern::ones(4, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn frame_sum_of_constants() {
        let cfg = SensorConfig::default().noiseless();
        let f = frame_sum(&[img(0.2), img(0.3)], &cfg).unwrap();
        assert!(f.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(matches!(frame_sum(&[img(0.2)], &cfg), Err(Error::Shape(_))));
        assert!(matches!(
            frame_sum(&[img(0.2), Image::zeros(2, 2)], &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn frame_of_complementary_schedule_is_twice_open_aperture() {
        let lf = scene(4, 2.0);
        let s = random_schedule(9, Constraints::default(), 4, (8, 8)).unwrap();
        let frame = frame_sum(
            &coded_images(&lf, &s).unwrap(),
            &SensorConfig::default().noiseless(),
        )
        .unwrap();
        let open = coded_image(&lf, &AperturePattern::ones(8, 8)).unwrap();
        assert!(frame
            .data()
            .iter()
            .zip(open.data())
            .all(|(f, o)| (f - 2.0 * o).abs() < 1e-12));
    }

    #[test]
    fn frame_noise_is_seeded() {
        let cfg = SensorConfig {
            rng_seed: 3,
            ..Default::default()
        };
        let a = frame_sum(&[img(0.2), img(0.3)], &cfg).unwrap();
        assert_eq!(a, frame_sum(&[img(0.2), img(0.3)], &cfg).unwrap());
        assert_ne!(
            a,
            frame_sum(&[img(0.2), img(0.3)], &SensorConfig { rng_seed: 4, ..cfg }).unwrap()
        );
        assert!(a.data().iter().any(|&v| v != 0.5));
    }

    #[test]
    fn event_stack_examples() {
        let cfg = SensorConfig::default().noiseless();
        assert_eq!(
            event_stack(&img(0.4), &img(0.4), &cfg).unwrap(),
            EventStack::zeros(3, 2)
        );
        // ln(0.20 / 0.10) / 0.15 = 4.62 -> 4
        let e = event_stack(&img(0.09), &img(0.19), &cfg).unwrap();
        assert!(e.counts.iter().all(|&c| c == 4));
        let back = event_stack(&img(0.19), &img(0.09), &cfg).unwrap();
        assert!(back.counts.iter().all(|&c| c == -4));
        assert!(matches!(
            event_stack(&img(0.1), &Image::zeros(2, 2), &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn threshold_noise_is_seeded_and_positive() {
        let cfg = SensorConfig {
            sigma_tau: 0.2,
            rng_seed: 1,
            ..SensorConfig::default()
        };
        let a = event_stack(&img(0.05), &img(0.9), &cfg).unwrap();
        assert_eq!(a, event_stack(&img(0.05), &img(0.9), &cfg).unwrap());
        // ln(0.91/0.06)/(tau/4) bounds every count.
        let cap = ((0.91f64 / 0.06).ln() / (0.15 / 4.0)).floor() as i32;
        assert!(a.counts.iter().all(|&c| c > 0 && c <= cap));
    }

    #[test]
    fn degenerate_schedule_has_no_events() {
        let lf = scene(6, 2.0);
        let p = AperturePattern::delta(8, 8, 3, 3);
        let s =
            ApertureSchedule::new(vec![p.clone(), p.clone(), p.clone(), p], true, false).unwrap();
        let m = simulate_exposure(&lf, &s, &SensorConfig::default()).unwrap();
        assert_eq!(m.n_event, 0);
        assert!(m.stacks.iter().all(|e| e.counts.iter().all(|&c| c == 0)));
    }

    #[test]
    fn constant_scene_stacks_are_uniform() {
        let lf = LightField::new(Array4::from_elem((16, 16, 8, 8), 0.6)).unwrap();
        let s = random_schedule(2, Constraints::default(), 4, (8, 8)).unwrap();
        let cfg = SensorConfig::default().noiseless();
        let m = simulate_exposure(&lf, &s, &cfg).unwrap();
        assert_eq!(m.stacks.len(), 3);
        for (k, stack) in m.stacks.iter().enumerate() {
            let (b0, b1) = (
                s.patterns()[k].brightness(),
                s.patterns()[k + 1].brightness(),
            );
            let expected =
                quantize(((0.6 * b1 / 64.0 + 0.01).ln() - (0.6 * b0 / 64.0 + 0.01).ln()) / 0.15)
                    as i32;
            assert!(stack.counts.iter().all(|&c| c == expected));
        }
        assert_eq!(
            m.n_event,
            m.stacks.iter().map(EventStack::abs_sum).sum::<u64>()
        );
    }

    #[test]
    fn exposure_is_deterministic() {
        let lf = scene(8, -2.0);
        let s = random_schedule(1, Constraints::default(), 4, (8, 8)).unwrap();
        let cfg = SensorConfig {
            rng_seed: 12,
            ..Default::default()
        };
        assert_eq!(
            simulate_exposure(&lf, &s, &cfg).unwrap(),
            simulate_exposure(&lf, &s, &cfg).unwrap()
        );
        let quiet = cfg.noiseless();
        assert_eq!(
            simulate_exposure(&lf, &s, &quiet).unwrap(),
            simulate_exposure(&lf, &s, &quiet).unwrap()
        );
    }

    #[test]
    fn stack_binary_round_trip() {
        let mut e = EventStack::zeros(5, 3);
        e.counts[[4, 1]] = -7;
        e.counts[[0, 2]] = 300;
        let bytes = e.to_bytes().unwrap();
        assert_eq!(&bytes[..8], &[5, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 8 + 30);
        assert_eq!(EventStack::from_bytes(&bytes).unwrap(), e);
        assert!(EventStack::from_bytes(&bytes[..20]).is_err());
        e.counts[[0, 0]] = 40_000;
        assert!(matches!(e.to_bytes(), Err(Error::Overflow(_))));
    }

    proptest::proptest! {
        #[test]
        fn noiseless_events_antisymmetric_off_grid(p in 0.0f64..1.0, n in 0.0f64..1.0) {
            let cfg = SensorConfig::default().noiseless();
            let ratio = ((n + 0.01f64).ln() - (p + 0.01f64).ln()) / 0.15;
            proptest::prop_assume!((ratio - ratio.round()).abs() > 1e-9);
            let f = event_stack(&img(p), &img(n), &cfg).unwrap();
            let b = event_stack(&img(n), &img(p), &cfg).unwrap();
            proptest::prop_assert_eq!(f.counts.mapv(|c| -c), b.counts);
        }

        #[test]
        fn event_magnitude_non_increasing_in_tau(p in 0.0f64..1.0, n in 0.0f64..1.0, t in 0.01f64..0.5, dt in 0.0f64..0.5) {
            let lo = SensorConfig::default().noiseless().with_tau(t);
            let hi = lo.with_tau(t + dt);
            let a = event_stack(&img(p), &img(n), &lo).unwrap().counts[[0, 0]].abs();
            let b = event_stack(&img(p), &img(n), &hi).unwrap().counts[[0, 0]].abs();
            proptest::prop_assert!(b <= a);
        }

        #[test]
        fn coded_image_is_linear(seed in 0u64..1000) {
            let lf = scene(seed, 1.0);
            let s = random_schedule(seed, Constraints::default(), 4, (8, 8)).unwrap();
            // a⁽¹⁾ and a⁽²⁾ are disjoint, so a⁽¹⁾ + a⁽²⁾ stays within [0, 1].
            let (a, b) = (&s.patterns()[0], &s.patterns()[1]);
            let sum = AperturePattern::new(a.values() + b.values()).unwrap();
            let lhs = coded_image(&lf, &sum).unwrap();
            let rhs = coded_image(&lf, a).unwrap().data() + coded_image(&lf, b).unwrap().data();
            proptest::prop_assert!(lhs.data().iter().zip(rhs.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }
}
