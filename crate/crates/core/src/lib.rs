//! Single-exposure light-field acquisition with a coded aperture and an
//! event camera.
//!
//! A sequence of aperture patterns is shown during one frame exposure. The
//! sensor reports the sum of the coded-aperture images as a frame, and the
//! pattern switches produce bursts of events whose per-pixel sums (event
//! stacks) carry the log-intensity ratio between consecutive coded images.
//! From the frame and the stacks the individual coded images can be
//! recovered in closed form, and from those the light field.
//!
//! Modules, bottom-up:
//!
//! - [`lightfield`]: light-field and image types, PNG directory I/O,
//!   synthetic layered scenes, EPI slices and quality metrics.
//! - [`aperture`]: aperture patterns and schedules, binary and
//!   complementary (DC-balance) constraints, sigmoid seeding.
//! - [`sensor`]: the forward models (coded images, frame sum, event stacks,
//!   timed event streams) and the single-exposure baselines.
//! - [`equivalence`]: closed-form recovery of coded images from a frame and
//!   event stacks.
//! - [`recon`]: regularized linear light-field reconstruction plus a direct
//!   banded-Cholesky oracle.
//! - [`patopt`]: simulated annealing over binary complementary schedules
//!   with an event-budget penalty.
//! - [`harness`]: timing model, event-stream segmentation, experiment
//!   configuration and reports.

pub mod aperture;
pub mod equivalence;
pub mod error;
pub mod harness;
pub mod lightfield;
pub mod patopt;
pub mod recon;
pub mod sensor;

pub(crate) mod rng;

pub use error::{Error, Result};
