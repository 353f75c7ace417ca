//! Stopped sums of martingale difference sequences.
//!
//! The crate simulates adapted martingale difference sequences, stops each path
//! once its accumulated conditional variance reaches a level `n`, and measures
//! how close the normalized stopped sums are to the standard normal law. The
//! measured distances are compared against closed-form Berry-Esseen type bounds
//! of order `n^{-1/4}`, and the characteristic-function inequalities behind
//! those bounds are checked by Monte Carlo.
//!
//! Module map:
//!
//! - [`normal`]: normal CDF, Gaussian characteristic function, empirical CDFs,
//!   Kolmogorov distance and DKW bands.
//! - [`model`]: martingale difference generators and hypothesis validation.
//! - [`stopping`]: the stopping time, the fractional correction and the
//!   pathwise lemma check.
//! - [`harness`]: replicated experiments, bounds, CF probes, smoothing
//!   integral and rate fits.
//! - [`report`]: experiment configuration, orchestration and report files.

pub mod error;
pub mod harness;
pub mod model;
pub mod normal;
pub mod report;
pub mod rng;
pub mod stopping;
pub mod summation;

pub use error::{Error, Result};
