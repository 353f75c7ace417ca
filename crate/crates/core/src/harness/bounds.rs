use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{simulate, MIN_REPS};
use crate::model::ModelSpec;
use crate::normal::{kolmogorov_distance, phi, DistanceResult, EmpiricalCdf};
use crate::stopping::{PathOptions, StoppedSample};
use crate::summation::mean_and_stderr;
use crate::{Error, Result};

fn bound_with(n: f64, a_n: f64, second: f64) -> f64 {
    let q = n.powf(0.25);
    let bracket = 11.0 + second / (4.0 * q) + 2.0 / (9.0 * n.sqrt()) + 1.0 / (8.0 * q * q * q);
    a_n.sqrt() / (PI * q) * bracket
}

/// Bound on `sup_x |F_n(x) - Phi(x)|` for the stopped sum `S_nu`:
///
/// ```text
/// a_n^{1/2} / (pi n^{1/4}) * (11 + 3/(4 n^{1/4}) + 2/(9 n^{1/2}) + 1/(8 n^{3/4}))
/// ```
pub fn theorem_bound_f(n: f64, a_n: f64) -> Result<f64> {
    check_bound_domain(n, a_n)?;
    Ok(bound_with(n, a_n, 3.0))
}

/// Bound on `sup_x |H_n(x) - Phi(x)|` for the corrected sum `S'_nu`; same as
/// [`theorem_bound_f`] with `9/(4 n^{1/4})` as second term.
pub fn theorem_bound_h(n: f64, a_n: f64) -> Result<f64> {
    check_bound_domain(n, a_n)?;
    Ok(bound_with(n, a_n, 9.0))
}

fn check_bound_domain(n: f64, a_n: f64) -> Result<()> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Domain(format!("bound: n = {n} must be positive")));
    }
    if !(a_n.is_finite() && a_n >= 1.0) {
        return Err(Error::Domain(format!("bound: a_n = {a_n} must be >= 1")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnEstimate {
    /// `sqrt(mean(Y_nu^4))`.
    pub a_n: f64,
    /// Delta-method standard error.
    pub stderr: f64,
}

impl AnEstimate {
    /// `a_n + 3 stderr`, the value used in bound evaluation.
    pub fn conservative(&self) -> f64 {
        self.a_n + 3.0 * self.stderr
    }
}

pub fn estimate_a_n(samples: &[StoppedSample]) -> Result<AnEstimate> {
    let m = mean_and_stderr(samples.len(), |i| samples[i].y_nu.powi(4))
        .ok_or_else(|| Error::Usage("estimate_a_n on an empty sample".into()))?;
    let a_n = m.mean().sqrt();
    Ok(AnEstimate {
        a_n,
        stderr: m.stderr() / (2.0 * a_n),
    })
}

/// Distances of the stopped-sum laws to the normal law, measured against the
/// closed-form bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub model: String,
    pub n: f64,
    pub reps: usize,
    pub seed: u64,
    pub a_n_hat: f64,
    pub a_n_stderr: f64,
    /// `a_n_hat + 3 stderr`, plugged into both bounds.
    pub a_n_used: f64,
    pub d_f: DistanceResult,
    pub d_h: DistanceResult,
    pub bound_f: f64,
    pub bound_h: f64,
    /// `(n / a_n_hat^2)^{1/4}`.
    pub y_smoothing: f64,
    /// `bound_f - (d_f + dkw)`.
    pub margin_f: f64,
    /// `bound_h - (d_h + dkw)`.
    pub margin_h: f64,
    /// `d_f - dkw <= bound_f`.
    pub pass_f: bool,
    /// `d_h - dkw <= bound_h`.
    pub pass_h: bool,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.pass_f && self.pass_h
    }

    pub fn from_samples(
        spec: &ModelSpec,
        n: f64,
        seed: u64,
        delta: f64,
        samples: &[StoppedSample],
    ) -> Result<Self> {
        let scale = n.sqrt().recip();
        let ecdf_f = EmpiricalCdf::new(samples.iter().map(|s| s.s_nu * scale).collect())?;
        let ecdf_h = EmpiricalCdf::new(samples.iter().map(|s| s.s_prime_nu * scale).collect())?;
        Self::from_parts(spec, n, seed, delta, samples, &ecdf_f, &ecdf_h)
    }

    pub(crate) fn from_parts(
        spec: &ModelSpec,
        n: f64,
        seed: u64,
        delta: f64,
        samples: &[StoppedSample],
        ecdf_f: &EmpiricalCdf,
        ecdf_h: &EmpiricalCdf,
    ) -> Result<Self> {
        let d_f = kolmogorov_distance(ecdf_f, phi, delta)?;
        let d_h = kolmogorov_distance(ecdf_h, phi, delta)?;
        let an = estimate_a_n(samples)?;
        let a_n_used = an.conservative();
        let bound_f = theorem_bound_f(n, a_n_used)?;
        let bound_h = theorem_bound_h(n, a_n_used)?;
        Ok(Self {
            model: spec.to_string(),
            n,
            reps: samples.len(),
            seed,
            a_n_hat: an.a_n,
            a_n_stderr: an.stderr,
            a_n_used,
            d_f,
            d_h,
            bound_f,
            bound_h,
            y_smoothing: (n / (an.a_n * an.a_n)).powf(0.25),
            margin_f: bound_f - (d_f.d_sup + d_f.dkw_halfwidth),
            margin_h: bound_h - (d_h.d_sup + d_h.dkw_halfwidth),
            pass_f: d_f.d_sup - d_f.dkw_halfwidth <= bound_f,
            pass_h: d_h.d_sup - d_h.dkw_halfwidth <= bound_h,
        })
    }
}

/// Simulates `reps` stopped paths and compares both normalized sums to the
/// normal law.
pub fn estimate_distances(
    spec: &ModelSpec,
    n: f64,
    reps: usize,
    seed: u64,
    delta: f64,
) -> Result<BoundReport> {
    if reps < MIN_REPS {
        return Err(Error::Usage(format!(
            "estimate_distances needs at least {MIN_REPS} replications, got {reps}"
        )));
    }
    let samples = simulate(spec, n, reps, seed, PathOptions::default())?;
    BoundReport::from_samples(spec, n, seed, delta, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::DEFAULT_DELTA;
    use proptest::prelude::*;

    fn sample_with_y(y: f64) -> StoppedSample {
        StoppedSample {
            nu: 1,
            gamma: 1.0,
            s_nu: 0.0,
            s_prime_nu: 0.0,
            y_nu: y,
            v_before: 1.0,
            sigma_nu_sq: 1.0,
            x_next: 0.0,
            trace: None,
        }
    }

    #[test]
    fn bound_values() {
        // (11 + 0.075 + 0.0022222 + 0.000125) / (10 pi) = 0.35260291...
        let f = theorem_bound_f(10_000.0, 1.0).unwrap();
        let h = theorem_bound_h(10_000.0, 1.0).unwrap();
        assert!((f - 0.3526029133523885).abs() <= 1e-12, "{f}");
        assert!((h - 0.3573775616451454).abs() <= 1e-12, "{h}");
        assert!((theorem_bound_f(4096.0, 1.0).unwrap() - 0.4415541568607931).abs() <= 1e-12);
        assert!((theorem_bound_f(64.0, 1.0).unwrap() - 1.2715242838621939).abs() <= 1e-12);
    }

    #[test]
    fn bound_scales_with_sqrt_a() {
        for n in [64.0, 1000.0, 1e6] {
            let r = theorem_bound_f(n, 8.0).unwrap() / theorem_bound_f(n, 2.0).unwrap();
            assert!((r - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bound_sixteenfold_level() {
        // The leading factor halves exactly; the bracket shrinks too, so the
        // ratio sits slightly below 1/2 and approaches it as n grows.
        let n = 10_000.0;
        let r = theorem_bound_f(16.0 * n, 1.0).unwrap() / theorem_bound_f(n, 1.0).unwrap();
        let bracket = |n: f64| {
            11.0 + 3.0 / (4.0 * n.powf(0.25)) + 2.0 / (9.0 * n.sqrt()) + 1.0 / (8.0 * n.powf(0.75))
        };
        assert!((r - 0.5 * bracket(16.0 * n) / bracket(n)).abs() < 1e-14);
        assert!(r < 0.5 && r > 0.498);
        let big = 1e12;
        let r_big = theorem_bound_f(16.0 * big, 1.0).unwrap() / theorem_bound_f(big, 1.0).unwrap();
        assert!(r_big > 0.4999 && r_big < 0.5);
    }

    #[test]
    fn bound_difference_is_second_term() {
        for (n, a) in [(64.0, 1.0), (1e4, 3.0), (12345.0, 16.0)] {
            let diff = theorem_bound_h(n, a).unwrap() - theorem_bound_f(n, a).unwrap();
            let want = a.sqrt() / (PI * n.powf(0.25)) * (6.0 / (4.0 * n.powf(0.25)));
            assert!((diff - want).abs() < 1e-14);
        }
        let r = theorem_bound_h(1e20, 1.0).unwrap() / theorem_bound_f(1e20, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-5);
    }

    #[test]
    fn bound_domain() {
        assert!(theorem_bound_f(0.0, 1.0).is_err());
        assert!(theorem_bound_h(10.0, 0.5).is_err());
    }

    #[test]
    fn a_n_examples() {
        let ones: Vec<_> = (0..10).map(|_| sample_with_y(1.0)).collect();
        assert_eq!(
            estimate_a_n(&ones).unwrap(),
            AnEstimate {
                a_n: 1.0,
                stderr: 0.0
            }
        );
        let twos: Vec<_> = (0..10).map(|_| sample_with_y(2.0)).collect();
        assert_eq!(estimate_a_n(&twos).unwrap().a_n, 4.0);
        let mixed: Vec<_> = (0..10)
            .map(|i| sample_with_y(if i % 2 == 0 { 1.0 } else { 2.0 }))
            .collect();
        let e = estimate_a_n(&mixed).unwrap();
        assert!((e.a_n - 2.9154759474226504).abs() < 1e-15);
        // var(Y^4) = 56.25, se(mean) = 7.5/sqrt(10), delta method divides by 2a
        assert!((e.stderr - 7.5 / 10f64.sqrt() / (2.0 * e.a_n)).abs() < 1e-14);
        assert!(estimate_a_n(&[]).is_err());
    }

    #[test]
    fn iid_unit_distance_report() {
        let spec = ModelSpec::iid_bounded(1.0, 1.0).unwrap();
        let r = estimate_distances(&spec, 256.0, 10_000, 1, DEFAULT_DELTA).unwrap();
        assert_eq!(r.a_n_hat, 1.0);
        assert_eq!(r.a_n_used, 1.0);
        assert!(r.pass());
        assert!(r.bound_f <= r.bound_h);
        assert!((r.y_smoothing - 4.0).abs() < 1e-12);
        assert!((r.d_f.dkw_halfwidth - (200f64.ln() / 20_000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn regime_a_n_is_four() {
        let spec = ModelSpec::regime_switch(0.25, 4.0).unwrap();
        let r = estimate_distances(&spec, 64.0, 10_000, 2, DEFAULT_DELTA).unwrap();
        assert_eq!(r.a_n_hat, 4.0);
        assert_eq!(r.a_n_stderr, 0.0);
    }

    #[test]
    fn too_few_reps() {
        let spec = ModelSpec::iid_bounded(1.0, 1.0).unwrap();
        assert!(matches!(
            estimate_distances(&spec, 64.0, 100, 0, 0.01),
            Err(Error::Usage(_))
        ));
    }

    proptest! {
        #[test]
        fn bounds_monotone(n in 2.0f64..1e8, a in 1.0f64..100.0, dn in 1.001f64..10.0, da in 1.001f64..10.0) {
            for b in [theorem_bound_f, theorem_bound_h] {
                prop_assert!(b(n * dn, a).unwrap() < b(n, a).unwrap());
                prop_assert!(b(n, a * da).unwrap() > b(n, a).unwrap());
            }
            prop_assert!(theorem_bound_f(n, a).unwrap() <= theorem_bound_h(n, a).unwrap());
        }
    }
}
