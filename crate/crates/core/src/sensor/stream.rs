//! Timestamped event streams: synthesis from a measurement and CSV I/O.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{simulate_exposure, Measurement, SensorConfig};
use crate::aperture::ApertureSchedule;
use crate::harness::TimingConfig;
use crate::lightfield::LightField;
use crate::rng::{self, domain};
use crate::{Error, Result};

/// One polarity event. CSV columns: `t_us,x,y,polarity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub t_us: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: i8,
}

/// Events of a `width × height` sensor, sorted by timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: usize,
    pub height: usize,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: usize, height: usize, mut events: Vec<Event>) -> Result<Self> {
        for e in &events {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::Shape(format!(
                    "event at ({},{}) outside {width}x{height} sensor",
                    e.x, e.y
                )));
            }
            if e.polarity != 1 && e.polarity != -1 {
                return Err(Error::Domain(format!(
                    "polarity {} is not +1/-1",
                    e.polarity
                )));
            }
        }
        events.sort_by_key(|e| e.t_us);
        Ok(EventStream {
            width,
            height,
            events,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for e in &self.events {
            w.serialize(e)?;
        }
        if self.events.is_empty() {
            w.write_record(["t_us", "x", "y", "polarity"])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let events = r
            .deserialize()
            .collect::<std::result::Result<Vec<Event>, _>>()?;
        EventStream::new(width, height, events)
    }
}

/// Expands the measurement's stacks into bursts of timed events.
///
/// In every cycle the burst of transition `k → k+1` starts at `k·t_c` after
/// the cycle start; a cycle lasts `n_patterns·t_c`. Each stack entry `c`
/// becomes `|c|` events of polarity `sign(c)` at uniformly drawn integer
/// microseconds inside `[start, start + transient)`.
pub fn stream_from_measurement(
    m: &Measurement,
    timing: &TimingConfig,
    cycles: usize,
    seed: u64,
) -> Result<EventStream> {
    timing.validate()?;
    if timing.n_patterns != m.n_patterns() {
        return Err(Error::Timing(format!(
            "timing has {} patterns but the measurement has {}",
            timing.n_patterns,
            m.n_patterns()
        )));
    }
    let (w, h) = m.frame.dims();
    let (t_c, transient) = (timing.t_c_us(), timing.transient_us());
    let mut events = Vec::with_capacity(m.n_event as usize * cycles);
    for cycle in 0..cycles {
        for (k, stack) in m.stacks.iter().enumerate() {
            let start = (cycle * timing.n_patterns + k + 1) as u64 * t_c;
            let mut rng = rng::stream(
                seed,
                domain::EVENT_TIMES,
                (cycle * m.stacks.len() + k) as u64,
            );
            for ((x, y), &c) in stack.counts.indexed_iter() {
                let polarity = if c > 0 { 1 } else { -1 };
                for _ in 0..c.unsigned_abs() {
                    events.push(Event {
                        t_us: start + rng.random_range(0..transient),
                        x: x as u32,
                        y: y as u32,
                        polarity,
                    });
                }
            }
        }
    }
    EventStream::new(w, h, events)
}

/// Adds `count` background events of random polarity, uniformly spread over
/// `[0, span_us)` and the sensor area.
pub fn add_background_events(
    stream: &EventStream,
    count: usize,
    span_us: u64,
    seed: u64,
) -> Result<EventStream> {
    if span_us == 0 {
        return Err(Error::Timing("background span must be positive".into()));
    }
    let mut rng = rng::stream(seed, domain::STREAM_NOISE, 0);
    let mut events = stream.events.clone();
    events.extend((0..count).map(|_| Event {
        t_us: rng.random_range(0..span_us),
        x: rng.random_range(0..stream.width as u32),
        y: rng.random_range(0..stream.height as u32),
        polarity: if rng.random::<bool>() { 1 } else { -1 },
    }));
    EventStream::new(stream.width, stream.height, events)
}

/// Simulates an exposure and emits its events for `cycles` pattern cycles.
pub fn simulate_event_stream(
    lf: &LightField,
    sched: &ApertureSchedule,
    timing: &TimingConfig,
    cfg: &SensorConfig,
    cycles: usize,
) -> Result<(Measurement, EventStream)> {
    let m = simulate_exposure(lf, sched, cfg)?;
    let stream = stream_from_measurement(&m, timing, cycles, cfg.rng_seed)?;
    Ok((m, stream))
}
