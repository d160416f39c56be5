//! Burst detection in event streams.
//!
//! Events are binned into a rate histogram; a window opens when a bin's count
//! exceeds `open_factor` times the median bin count and closes once counts
//! fall to `close_factor` times the median. Windows closer than half a slot
//! are merged, faint windows are dropped, and consecutive windows spaced by
//! about one slot form a cycle. The display is not synchronized with the
//! sensor, so the phase comes from the detected bursts alone.

use serde::{Deserialize, Serialize};

use super::TimingConfig;
use crate::sensor::{Event, EventStack, EventStream};
use crate::{Error, Result};

/// Detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub bin_us: u64,
    pub open_factor: f64,
    pub close_factor: f64,
    /// Windows with fewer events than this fraction of the busiest window
    /// are discarded as noise.
    pub min_burst_fraction: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            bin_us: 100,
            open_factor: 5.0,
            close_factor: 2.0,
            min_burst_fraction: 0.1,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        if self.bin_us == 0 {
            return Err(Error::Config("bin width must be positive".into()));
        }
        if !(self.close_factor >= 0.0 && self.open_factor >= self.close_factor) {
            return Err(Error::Config(format!(
                "need 0 <= close_factor ({}) <= open_factor ({})",
                self.close_factor, self.open_factor
            )));
        }
        if !(0.0..1.0).contains(&self.min_burst_fraction) {
            return Err(Error::Config(format!(
                "min_burst_fraction {} outside [0, 1)",
                self.min_burst_fraction
            )));
        }
        Ok(())
    }
}

/// One pattern cycle: the `N−1` transition stacks in order.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStacks {
    pub stacks: Vec<EventStack>,
    /// First event of each burst, µs.
    pub onsets_us: Vec<u64>,
    /// Half-open `[start, end)` windows whose events were summed, µs.
    pub windows: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub cycles: Vec<CycleStacks>,
    /// Median events per bin used as the rate reference.
    pub median_rate: f64,
    /// Bursts before the first complete cycle that were skipped.
    pub skipped_bursts: usize,
}

#[derive(Debug, Clone, Copy)]
struct Window {
    open_bin: usize,
    end_bin: usize,
}

/// Splits a stream into per-cycle event stacks with default thresholds.
pub fn segment_stream(stream: &EventStream, timing: &TimingConfig) -> Result<Segmentation> {
    segment_stream_with(stream, timing, &SegmentParams::default())
}

pub fn segment_stream_with(
    stream: &EventStream,
    timing: &TimingConfig,
    params: &SegmentParams,
) -> Result<Segmentation> {
    params.validate()?;
    let (t_c, transient) = (timing.t_c_us(), timing.transient_us());
    if transient >= t_c {
        return Err(Error::Segmentation(format!(
            "transient {transient} us does not fit in the {t_c} us slot; bursts overlap"
        )));
    }
    timing.validate()?;
    let per_cycle = timing.n_patterns - 1;
    if stream.events.is_empty() {
        return Err(Error::IncompleteCycle("stream has no events".into()));
    }
    let mut events = stream.events.clone();
    if !events.windows(2).all(|w| w[0].t_us <= w[1].t_us) {
        events.sort_by_key(|e| e.t_us);
    }

    let bin = params.bin_us;
    let t0 = events[0].t_us / bin * bin;
    let n_bins = ((events.last().unwrap().t_us - t0) / bin + 1) as usize;
    let mut counts = vec![0u64; n_bins];
    for e in &events {
        counts[((e.t_us - t0) / bin) as usize] += 1;
    }
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let median = sorted[n_bins / 2] as f64;
    let (open, close) = (params.open_factor * median, params.close_factor * median);

    let mut windows: Vec<Window> = Vec::new();
    let mut current: Option<usize> = None;
    for (i, &c) in counts.iter().enumerate() {
        let c = c as f64;
        match current {
            None if c > open => current = Some(i),
            Some(start) if c <= close => {
                windows.push(Window {
                    open_bin: start,
                    end_bin: i,
                });
                current = None;
            }
            _ => {}
        }
    }
    if let Some(start) = current {
        windows.push(Window {
            open_bin: start,
            end_bin: n_bins,
        });
    }

    // Noise runs are dropped before merging so they cannot extend a burst.
    let mass = |w: &Window| counts[w.open_bin..w.end_bin].iter().sum::<u64>();
    let busiest = windows.iter().map(mass).max().unwrap_or(0);
    windows.retain(|w| mass(w) as f64 >= params.min_burst_fraction * busiest as f64);
    let merge_gap = (t_c / 2).div_ceil(bin) as usize;
    let mut merged: Vec<Window> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.open_bin - last.end_bin < merge_gap => last.end_bin = w.end_bin,
            _ => merged.push(w),
        }
    }

    // A burst lasts at most one transient and has events in both the first
    // and the last bin of its detected core, so this range contains it whole.
    let ranges: Vec<(u64, u64)> = merged
        .iter()
        .map(|w| {
            let open_t = t0 + w.open_bin as u64 * bin;
            let end_t = t0 + w.end_bin as u64 * bin;
            (
                end_t.saturating_sub(transient + bin),
                open_t + transient + bin,
            )
        })
        .collect();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Segmentation(format!(
                "burst windows [{}, {}) and [{}, {}) overlap",
                pair[0].0, pair[0].1, pair[1].0, pair[1].1
            )));
        }
    }
    let onsets: Vec<u64> = ranges
        .iter()
        .map(|&r| onset(&events, r, transient))
        .collect();

    // Bursts of one cycle are one slot apart; the wrap transition emits
    // nothing, so cycles are separated by at least two slots.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..merged.len() {
        let new_group = i == 0 || (onsets[i] - onsets[i - 1]) as f64 > 1.5 * t_c as f64;
        if new_group {
            groups.push(vec![i]);
        } else {
            groups.last_mut().unwrap().push(i);
        }
    }
    let mut skipped = 0;
    if groups.len() > 1 && groups[0].len() < per_cycle {
        skipped = groups.remove(0).len();
    }
    if groups.is_empty() {
        return Err(Error::IncompleteCycle("no bursts detected".into()));
    }

    let (w, h) = (stream.width, stream.height);
    let mut cycles = Vec::with_capacity(groups.len());
    for (c, group) in groups.iter().enumerate() {
        if group.len() < per_cycle {
            return Err(Error::IncompleteCycle(format!(
                "cycle {c} has {} bursts, expected {per_cycle}",
                group.len()
            )));
        }
        if group.len() > per_cycle {
            return Err(Error::Segmentation(format!(
                "cycle {c} has {} bursts, expected {per_cycle}",
                group.len()
            )));
        }
        let mut stacks = Vec::with_capacity(per_cycle);
        for &i in group {
            let (start, end) = ranges[i];
            let mut stack = EventStack::zeros(w, h);
            let lo = events.partition_point(|e| e.t_us < start);
            let hi = events.partition_point(|e| e.t_us < end);
            for e in &events[lo..hi] {
                stack.counts[[e.x as usize, e.y as usize]] += e.polarity as i32;
            }
            stacks.push(stack);
        }
        cycles.push(CycleStacks {
            stacks,
            onsets_us: group.iter().map(|&i| onsets[i]).collect(),
            windows: group.iter().map(|&i| ranges[i]).collect(),
        });
    }
    Ok(Segmentation {
        cycles,
        median_rate: median,
        skipped_bursts: skipped,
    })
}

/// First event `e` in `range` such that `[e, e + transient)` holds at least
/// 80% of the range's events; background events shortly before the burst
/// fail the test.
fn onset(events: &[Event], (start, end): (u64, u64), transient: u64) -> u64 {
    let lo = events.partition_point(|e| e.t_us < start);
    let hi = events.partition_point(|e| e.t_us < end);
    let slice = &events[lo..hi];
    let need = (slice.len() as f64 * 0.8).ceil() as usize;
    let mut j = 0;
    for (i, e) in slice.iter().enumerate() {
        j = j.max(i);
        while j < slice.len() && slice[j].t_us < e.t_us + transient {
            j += 1;
        }
        if j - i >= need {
            return e.t_us;
        }
    }
    slice[0].t_us
}
