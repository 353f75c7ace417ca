//! Monte-Carlo characteristic-function probes.
//!
//! For each `t` the probe estimates
//!
//! ```text
//! c1(t) = E exp(i t S_nu / sqrt(n) + t^2/(2n) sum_{p<nu} sigma^2_p)
//! c2(t) = E exp(i t S_nu / sqrt(n) + t^2/2)
//! c3(t) = E exp(i t S_nu / sqrt(n))
//! c4(t) = E exp(i t S'_nu / sqrt(n))
//! ```
//!
//! and checks the four inequalities bounding `|c1 - 1|`, `|c1 - c2|`,
//! `|c3 - c4|` and `|c3 - exp(-t^2/2)|` within [`STAT_BAND`] standard errors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bounds::estimate_a_n;
use super::simulate;
use crate::model::ModelSpec;
use crate::stopping::{PathOptions, StoppedSample};
use crate::summation::{tree_reduce, Accumulator, Moments};
use crate::{Error, Result};

/// Width of statistical bands, in standard errors.
pub const STAT_BAND: f64 = 4.0;

/// Default number of points of [`default_t_grid`].
pub const DEFAULT_GRID_POINTS: usize = 129;

/// Chebyshev-like symmetric grid on `[-y, y]`: `-y cos(pi j / (m - 1))`,
/// denser toward `-y` and `y`. Contains `-y`, `0` and `y` exactly; `points`
/// must be odd.
pub fn default_t_grid(y: f64, points: usize) -> Result<Vec<f64>> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(Error::Usage(format!(
            "t grid needs an odd point count >= 3, got {points}"
        )));
    }
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::Domain(format!(
            "t grid half-width {y} must be positive"
        )));
    }
    let half = points / 2;
    let mut grid = vec![0.0; points];
    for j in 0..half {
        let t = -y * (PI * j as f64 / (points - 1) as f64).cos();
        grid[j] = t;
        grid[points - 1 - j] = -t;
    }
    grid[0] = -y;
    grid[points - 1] = y;
    grid[half] = 0.0;
    Ok(grid)
}

/// Complex Monte-Carlo mean with the standard error of its modulus
/// deviation, `sqrt(se_re^2 + se_im^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

impl ComplexEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    fn from_moments(re: &Moments, im: &Moments) -> Self {
        Self {
            re: re.mean(),
            im: im.mean(),
            stderr: re.stderr().hypot(im.stderr()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `|c1 - 1| <= a e^{t^2/2} (|t|/(3 sqrt n) + t^2/(4n) + a|t|^3/(3 n^{3/2}) + a t^4/(4 n^2))`
    CompensatedUnit,
    /// `|c1 - c2| <= (a t^2 / (2n)) e^{t^2/2}`
    VarianceCompletion,
    /// `|c3 - c4| <= 3 a t^2 / (2n)`
    FractionalShift,
    /// `|c3 - e^{-t^2/2}| <= a (|t|/(3 sqrt n) + 3t^2/(4n) + a|t|^3/(3 n^{3/2}) + a t^4/(4 n^2))`
    Combined,
}

impl Inequality {
    pub const ALL: [Inequality; 4] = [
        Inequality::CompensatedUnit,
        Inequality::VarianceCompletion,
        Inequality::FractionalShift,
        Inequality::Combined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Inequality::CompensatedUnit => "compensated_unit",
            Inequality::VarianceCompletion => "variance_completion",
            Inequality::FractionalShift => "fractional_shift",
            Inequality::Combined => "combined",
        }
    }

    /// Right-hand side at `(t, n, a_n)`.
    pub fn rhs(&self, t: f64, n: f64, a: f64) -> f64 {
        let at = t.abs();
        let t2 = t * t;
        match self {
            Inequality::CompensatedUnit => {
                a * (0.5 * t2).exp()
                    * (at / (3.0 * n.sqrt())
                        + t2 / (4.0 * n)
                        + a * at * t2 / (3.0 * n.powf(1.5))
                        + a * t2 * t2 / (4.0 * n * n))
            }
            Inequality::VarianceCompletion => a * t2 / (2.0 * n) * (0.5 * t2).exp(),
            Inequality::FractionalShift => 3.0 * a * t2 / (2.0 * n),
            Inequality::Combined => {
                a * (at / (3.0 * n.sqrt())
                    + 3.0 * t2 / (4.0 * n)
                    + a * at * t2 / (3.0 * n.powf(1.5))
                    + a * t2 * t2 / (4.0 * n * n))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub inequality: Inequality,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    /// `rhs < stderr`: the bound is below Monte-Carlo resolution.
    pub resolution_limited: bool,
    /// `lhs <= rhs + STAT_BAND * stderr`.
    pub pass: bool,
}

impl InequalityCheck {
    fn new(inequality: Inequality, t: f64, lhs: f64, rhs: f64, stderr: f64) -> Self {
        Self {
            inequality,
            t,
            lhs,
            rhs,
            stderr,
            resolution_limited: rhs < stderr,
            pass: lhs <= rhs + STAT_BAND * stderr,
        }
    }

    /// A failure that counts: outside the band and not resolution-limited.
    pub fn failed(&self) -> bool {
        !self.pass && !self.resolution_limited
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfPoint {
    pub t: f64,
    pub c1: ComplexEstimate,
    pub c2: ComplexEstimate,
    pub c3: ComplexEstimate,
    pub c4: ComplexEstimate,
    pub checks: Vec<InequalityCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfProbe {
    pub model: String,
    pub n: f64,
    pub reps: usize,
    pub a_n_hat: f64,
    /// `a_n_hat + 3 stderr`, used in every right-hand side.
    pub a_n_used: f64,
    /// `(n / a_n_hat^2)^{1/4}`.
    pub y: f64,
    pub points: Vec<CfPoint>,
}

impl CfProbe {
    pub fn checks(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.points.iter().flat_map(|p| p.checks.iter())
    }

    pub fn failures(&self) -> usize {
        self.checks().filter(|c| c.failed()).count()
    }

    pub fn pass(&self) -> bool {
        self.failures() == 0
    }

    /// The `c3` estimates as a curve for the smoothing integral.
    pub fn c3_curve(&self) -> CfCurve {
        CfCurve {
            t: self.points.iter().map(|p| p.t).collect(),
            c: self.points.iter().map(|p| p.c3.value()).collect(),
        }
    }

    pub fn from_samples(
        spec: &ModelSpec,
        n: f64,
        t_grid: &[f64],
        samples: &[StoppedSample],
    ) -> Result<Self> {
        let an = estimate_a_n(samples)?;
        let y = (n / (an.a_n * an.a_n)).powf(0.25);
        if let Some(&t) = t_grid.iter().find(|t| !(t.abs() <= y)) {
            return Err(Error::Usage(format!(
                "t = {t} lies outside [-y, y] with y = {y}"
            )));
        }
        let a = an.conservative();
        let points = t_grid
            .iter()
            .map(|&t| probe_point(t, n, a, samples))
            .collect();
        Ok(Self {
            model: spec.to_string(),
            n,
            reps: samples.len(),
            a_n_hat: an.a_n,
            a_n_used: a,
            y,
            points,
        })
    }
}

/// Per-path moments for one `t`: real and imaginary parts of c1..c4 and of
/// the two per-path differences `c1 - c2` and `c3 - c4`.
#[derive(Default)]
struct PointAcc([Moments; 12]);

impl Accumulator for PointAcc {
    fn merge(mut self, o: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a = a.merge(b);
        }
        self
    }
}

fn probe_point(t: f64, n: f64, a: f64, samples: &[StoppedSample]) -> CfPoint {
    let u = t / n.sqrt();
    let half_t2 = 0.5 * t * t;
    let full = half_t2.exp();
    let acc = tree_reduce(samples.len(), |range| {
        let mut acc = PointAcc::default();
        for s in &samples[range] {
            let (s3, c3) = (u * s.s_nu).sin_cos();
            let (s4, c4) = (u * s.s_prime_nu).sin_cos();
            let partial = (half_t2 * s.v_before / n).exp();
            let gap = partial - full;
            let vals = [
                c3 * partial,
                s3 * partial,
                c3 * full,
                s3 * full,
                c3,
                s3,
                c4,
                s4,
                c3 * gap,
                s3 * gap,
                c3 - c4,
                s3 - s4,
            ];
            for (m, v) in acc.0.iter_mut().zip(vals) {
                m.push(v);
            }
        }
        acc
    })
    .expect("non-empty sample")
    .0;
    let est = |k: usize| ComplexEstimate::from_moments(&acc[2 * k], &acc[2 * k + 1]);
    let (c1, c2, c3, c4, d12, d34) = (est(0), est(1), est(2), est(3), est(4), est(5));
    let one = Complex64::new(1.0, 0.0);
    let gauss = Complex64::new((-half_t2).exp(), 0.0);
    let checks = vec![
        InequalityCheck::new(
            Inequality::CompensatedUnit,
            t,
            (c1.value() - one).norm(),
            Inequality::CompensatedUnit.rhs(t, n, a),
            c1.stderr,
        ),
        InequalityCheck::new(
            Inequality::VarianceCompletion,
            t,
            d12.value().norm(),
            Inequality::VarianceCompletion.rhs(t, n, a),
            d12.stderr,
        ),
        InequalityCheck::new(
            Inequality::FractionalShift,
            t,
            d34.value().norm(),
            Inequality::FractionalShift.rhs(t, n, a),
            d34.stderr,
        ),
        InequalityCheck::new(
            Inequality::Combined,
            t,
            (c3.value() - gauss).norm(),
            Inequality::Combined.rhs(t, n, a),
            c3.stderr,
        ),
    ];
    CfPoint {
        t,
        c1,
        c2,
        c3,
        c4,
        checks,
    }
}

/// Estimates c1..c4 on `t_grid` from `reps` stopped paths and checks the
/// four inequalities. Every `|t|` must lie within `y = (n / a_n^2)^{1/4}`.
pub fn cf_probe(
    spec: &ModelSpec,
    n: f64,
    reps: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<CfProbe> {
    if reps == 0 || t_grid.is_empty() {
        return Err(Error::Usage(
            "cf_probe needs replications and a t grid".into(),
        ));
    }
    let samples = simulate(spec, n, reps, seed, PathOptions::default())?;
    CfProbe::from_samples(spec, n, t_grid, &samples)
}

/// Characteristic-function estimates on an increasing grid of `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CfCurve {
    pub t: Vec<f64>,
    pub c: Vec<Complex64>,
}

impl CfCurve {
    /// Empirical characteristic function of `values` on `t_grid`.
    pub fn from_values(values: &[f64], t_grid: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Usage("empirical CF of an empty sample".into()));
        }
        let c = t_grid
            .iter()
            .map(|&t| {
                let m = tree_reduce(values.len(), |range| {
                    let mut acc = [Moments::default(), Moments::default()];
                    for &v in &values[range] {
                        let (s, c) = (t * v).sin_cos();
                        acc[0].push(c);
                        acc[1].push(s);
                    }
                    Pair(acc)
                })
                .expect("non-empty")
                .0;
                Complex64::new(m[0].mean(), m[1].mean())
            })
            .collect();
        Ok(Self {
            t: t_grid.to_vec(),
            c,
        })
    }
}

struct Pair([Moments; 2]);

impl Accumulator for Pair {
    fn merge(self, o: Self) -> Self {
        Pair([self.0[0].merge(o.0[0]), self.0[1].merge(o.0[1])])
    }
}
