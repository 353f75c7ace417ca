//! Scalar probability primitives: the standard normal CDF, the Gaussian
//! characteristic function, empirical CDFs and their Kolmogorov distance to a
//! continuous CDF, and DKW confidence half-widths.

use std::cmp::Ordering;
use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default DKW confidence parameter.
pub const DEFAULT_DELTA: f64 = 0.01;

/// Standard normal cumulative distribution function.
///
/// Evaluated through `erfc` on whichever side keeps the result free of
/// cancellation, so both tails are accurate in relative terms and the body
/// is accurate to a few ulps absolute.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "std_normal_cdf: non-finite input {x}"
        )));
    }
    Ok(phi(x))
}

/// Infallible variant for finite inputs. Non-finite inputs saturate.
#[inline]
pub fn phi(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    }
}

/// Characteristic function of the standard normal law, `exp(-t^2/2)`.
pub fn gaussian_cf(t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("gaussian_cf: non-finite input {t}")));
    }
    Ok((-0.5 * t * t).exp())
}

/// DKW half-width `sqrt(ln(2/delta) / (2R))`.
pub fn dkw_halfwidth(count: usize, delta: f64) -> Result<f64> {
    if count == 0 {
        return Err(Error::Domain(
            "dkw_halfwidth: sample count must be positive".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "dkw_halfwidth: delta {delta} outside (0, 1)"
        )));
    }
    Ok(((2.0 / delta).ln() / (2.0 * count as f64)).sqrt())
}

/// Sorted finite sample defining a step-function CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    samples: Vec<f64>,
}

impl EmpiricalCdf {
    /// Builds the empirical CDF, sorting the input. Rejects empty or
    /// non-finite samples.
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("empirical CDF of an empty sample".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample {bad}")));
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `F_R(x)`: fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self
            .samples
            .partition_point(|&s| s.partial_cmp(&x) != Some(Ordering::Greater));
        k as f64 / self.len() as f64
    }

    /// Empirical quantile using the lower order statistic, `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let r = self.len();
        let idx = ((p * r as f64).ceil() as usize).clamp(1, r) - 1;
        self.samples[idx]
    }
}

/// Kolmogorov distance of an empirical CDF to a continuous reference CDF,
/// together with the DKW half-width of the sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub d_sup: f64,
    pub argmax_x: f64,
    pub dkw_halfwidth: f64,
    pub delta: f64,
    pub count: usize,
}

/// Exact sup-distance between `ecdf` and `cdf` by the order-statistics scan
/// `max_i max(i/R - cdf(x_(i)), cdf(x_(i)) - (i-1)/R)`.
pub fn kolmogorov_distance<F>(ecdf: &EmpiricalCdf, cdf: F, delta: f64) -> Result<DistanceResult>
where
    F: Fn(f64) -> f64,
{
    if ecdf.is_empty() {
        return Err(Error::Domain("kolmogorov_distance: empty sample".into()));
    }
    let r = ecdf.len();
    let rf = r as f64;
    let mut d_sup = f64::NEG_INFINITY;
    let mut argmax_x = ecdf.samples[0];
    for (i, &x) in ecdf.samples.iter().enumerate() {
        let c = cdf(x);
        let above = (i + 1) as f64 / rf - c;
        let below = c - i as f64 / rf;
        let d = above.max(below);
        if d > d_sup {
            d_sup = d;
            argmax_x = x;
        }
    }
    Ok(DistanceResult {
        d_sup: d_sup.clamp(0.0, 1.0),
        argmax_x,
        dkw_halfwidth: dkw_halfwidth(r, delta)?,
        delta,
        count: r,
    })
}
