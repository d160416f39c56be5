//! Closed-form recovery of the coded images from one frame and the event
//! stacks between consecutive patterns.
//!
//! If every stack equals the continuous log ratio
//! `E⁽ⁿ⁻¹'ⁿ⁾ = (log Iⁿ − log Iⁿ⁻¹)/τ`, then with the partial sums
//! `Sₙ = τ·Σ_{2≤k≤n} E⁽ᵏ⁻¹'ᵏ⁾`:
//!
//! ```text
//! I¹ = Ī / (1 + Σ_{2≤n≤N} exp(Sₙ))      Iⁿ = I¹·exp(Sₙ)
//! ```
//!
//! The event model offsets intensities by ε inside the logs, so recovery
//! runs on `I + ε` (the frame becomes `Ī + N·ε`) and subtracts ε at the end.
//! With `epsilon = 0` the formulas above are used verbatim.

use ndarray::{Array2, Zip};

use crate::lightfield::{check_same_shape, Image};
use crate::sensor::Measurement;
use crate::{Error, Result};

/// Log-space partial sums are clamped to this magnitude before `exp`.
pub const EXPONENT_CLAMP: f64 = 50.0;

/// `(log(I_next + ε) − log(I_prev + ε)) / τ`, without quantization.
pub fn continuous_events(
    prev: &Image,
    next: &Image,
    tau: f64,
    epsilon: f64,
) -> Result<Array2<f64>> {
    check_same_shape(
        prev.data().shape(),
        next.data().shape(),
        "continuous_events",
    )?;
    check_tau(tau)?;
    let mut out = Array2::zeros(prev.dims());
    let mut bad = None;
    Zip::from(&mut out)
        .and(prev.data())
        .and(next.data())
        .for_each(|e, &p, &n| {
            if p + epsilon <= 0.0 || n + epsilon <= 0.0 {
                bad = Some((p, n));
            }
            *e = ((n + epsilon).ln() - (p + epsilon).ln()) / tau;
        });
    if let Some((p, n)) = bad {
        return Err(Error::Domain(format!(
            "log of nonpositive intensity ({p}, {n}) with offset {epsilon}"
        )));
    }
    Ok(out)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "contrast threshold {tau} must be positive"
        )))
    }
}

/// Coded images recovered from a frame and its event stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredImages {
    pub images: Vec<Image>,
    /// Per image, the multiplicative factor within which the result is
    /// guaranteed to match the continuous-event solution when the stacks are
    /// noiselessly quantized.
    pub deviation_bound: Vec<f64>,
    /// Pixels whose log-space partial sums hit [`EXPONENT_CLAMP`].
    pub clamped_pixels: usize,
    /// Samples that came out below zero after removing the ε offset and
    /// were clamped to 0.
    pub floored_samples: usize,
}

impl RecoveredImages {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Inverts frame + stacks into `N = stacks.len() + 1` coded images.
pub fn recover_images(
    frame: &Image,
    stacks: &[Array2<f64>],
    tau: f64,
    epsilon: f64,
) -> Result<RecoveredImages> {
    check_tau(tau)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Domain(format!("offset {epsilon} must be >= 0")));
    }
    if stacks.is_empty() {
        return Err(Error::Shape(
            "recovery needs at least one event stack".into(),
        ));
    }
    for s in stacks {
        check_same_shape(frame.data().shape(), s.shape(), "frame vs event stack")?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow(
                "event stack holds non-finite values".into(),
            ));
        }
    }
    let n = stacks.len() + 1;
    let (w, h) = frame.dims();
    let mut images = vec![Array2::<f64>::zeros((w, h)); n];
    let mut exps = vec![0.0; n];
    let mut clamped = 0;
    let mut floored = 0;
    for x in 0..w {
        for y in 0..h {
            let mut partial = 0.0;
            let mut hit = false;
            exps[0] = 1.0;
            for k in 1..n {
                partial += tau * stacks[k - 1][[x, y]];
                let limited = partial.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
                hit |= limited != partial;
                exps[k] = limited.exp();
            }
            clamped += hit as usize;
            let denom: f64 = exps.iter().sum();
            let first = (frame.data()[[x, y]] + n as f64 * epsilon) / denom;
            for (img, e) in images.iter_mut().zip(&exps) {
                let value = first * e - epsilon;
                if value < 0.0 {
                    floored += 1;
                }
                img[[x, y]] = value.max(0.0);
            }
        }
    }
    if images.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Overflow(
            "recovered intensities are not finite".into(),
        ));
    }
    let bound = quantization_error_bound(n, tau);
    Ok(RecoveredImages {
        images: images
            .into_iter()
            .map(Image::from_array_unchecked)
            .collect(),
        deviation_bound: vec![bound; n],
        clamped_pixels: clamped,
        floored_samples: floored,
    })
}

/// Recovers normalized coded images from a measurement.
pub fn recover_from_measurement(
    m: &Measurement,
    tau: f64,
    epsilon: f64,
) -> Result<RecoveredImages> {
    let stacks: Vec<Array2<f64>> = m.stacks.iter().map(|s| s.to_f64()).collect();
    recover_images(&m.frame, &stacks, tau, epsilon)
}

/// Worst-case ratio `e^{(N−1)τ}` between images recovered from noiselessly
/// quantized stacks and from continuous ones.
///
/// Truncation changes each stack by less than one count, so the log-space
/// partial sums `S₁ = 0, S₂, …, S_N` each move by less than `(n−1)τ` and
/// their spread moves by less than `(N−1)τ`. Every recovered image is
/// `exp(Sₙ)` over a weighted mean of `exp(Sₘ)`, which confines the ratio of
/// the ε-offset intensities to `(e^{−(N−1)τ}, e^{(N−1)τ})`.
pub fn quantization_error_bound(n: usize, tau: f64) -> f64 {
    ((n.saturating_sub(1)) as f64 * tau).exp()
}
