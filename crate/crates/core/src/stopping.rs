//! Running a path to its stopping time.
//!
//! Indexing contract: model step `i` emits `(X_{i+1}, sigma^2_i, Y_i)`. The
//! stopping time is
//!
//! ```text
//! nu(n) = min { k >= 1 : sigma^2_0 + ... + sigma^2_k >= n }
//! ```
//!
//! and the fractional correction `gamma` solves
//! `sigma^2_0 + ... + sigma^2_{nu-1} + gamma sigma^2_nu = n`.

use serde::{Deserialize, Serialize};

use crate::model::ModelState;
use crate::summation::NeumaierSum;
use crate::{Error, Result};

/// Relative slack tolerated above `gamma = 1` before it counts as a genuine
/// precondition violation. Only reachable through rounding of the running
/// variance sum.
const GAMMA_ROUNDING: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathOptions {
    /// Keep the per-step variances and prefix sums for the lemma check.
    pub retain_prefix: bool,
}

/// Per-step variance history up to the stopping time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    /// `prefix[j-1] = sigma^2_0 + ... + sigma^2_{j-1}` for `j = 1..=nu`.
    pub prefix: Vec<f64>,
    /// `sigma_sq[j-1] = sigma^2_{j-1}` for `j = 1..=nu`.
    pub sigma_sq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppedSample {
    pub nu: u64,
    pub gamma: f64,
    /// `S_nu`, the sum of the first `nu` increments.
    pub s_nu: f64,
    /// `S'_nu = S_nu + sqrt(gamma) X_{nu+1}`.
    pub s_prime_nu: f64,
    pub y_nu: f64,
    /// `sigma^2_0 + ... + sigma^2_{nu-1}`.
    pub v_before: f64,
    pub sigma_nu_sq: f64,
    /// `X_{nu+1}`, the increment drawn right after stopping.
    pub x_next: f64,
    pub trace: Option<PathTrace>,
}

impl StoppedSample {
    /// `|v_before + gamma sigma^2_nu - n| / n`.
    pub fn level_residual(&self, n: f64) -> f64 {
        (self.v_before + self.gamma * self.sigma_nu_sq - n).abs() / n
    }
}

/// Solves `v_before + gamma * sigma_nu_sq = n` for `gamma in (0, 1]`.
pub fn compute_gamma(v_before: f64, sigma_nu_sq: f64, n: f64) -> Result<f64> {
    let degenerate = |gamma| Error::DegenerateStart {
        gamma,
        v_before,
        sigma_sq: sigma_nu_sq,
        level: n,
    };
    if !(sigma_nu_sq > 0.0) || !(v_before < n) {
        return Err(degenerate((n - v_before) / sigma_nu_sq));
    }
    let gamma = (n - v_before) / sigma_nu_sq;
    if gamma > 1.0 {
        if gamma <= 1.0 + GAMMA_ROUNDING {
            return Ok(1.0);
        }
        return Err(degenerate(gamma));
    }
    Ok(gamma)
}

/// Steps `model` until the accumulated conditional variance reaches `n`.
///
/// Draws `nu + 1` increments: the last one is `X_{nu+1}`, used only for
/// `S'_nu`. Fails with [`Error::PathOverflow`] if the model's step cap is
/// reached first and with [`Error::DegenerateStart`] if `sigma^2_0 >= n`.
pub fn run_path(model: &mut ModelState, n: f64, opts: PathOptions) -> Result<StoppedSample> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Domain(format!(
            "run_path: level n = {n} must be positive"
        )));
    }
    let mut trace = opts.retain_prefix.then(|| PathTrace {
        prefix: Vec::new(),
        sigma_sq: Vec::new(),
    });

    let first = model.step()?;
    let mut s = first.x;
    let mut v = NeumaierSum::new();
    v += first.sigma_sq;
    if let Some(tr) = trace.as_mut() {
        tr.prefix.push(v.value());
        tr.sigma_sq.push(first.sigma_sq);
    }

    let mut k: u64 = 1;
    loop {
        let out = model.step()?;
        let v_before = v.value();
        let mut next = v;
        next += out.sigma_sq;
        if v_before + out.sigma_sq >= n || next.value() >= n {
            let gamma = compute_gamma(v_before, out.sigma_sq, n)?;
            let s_prime_nu = s + gamma.sqrt() * out.x;
            return Ok(StoppedSample {
                nu: k,
                gamma,
                s_nu: s,
                s_prime_nu,
                y_nu: out.y,
                v_before,
                sigma_nu_sq: out.sigma_sq,
                x_next: out.x,
                trace,
            });
        }
        s += out.x;
        v = next;
        if let Some(tr) = trace.as_mut() {
            tr.prefix.push(v.value());
            tr.sigma_sq.push(out.sigma_sq);
        }
        k += 1;
    }
}

/// Both sides of the pathwise lemma inequality
///
/// ```text
/// sum_{j=1}^{nu} exp(t^2/(2n) sum_{p<j} sigma^2_p) t^2/(2n) sigma^2_{j-1}
///     <= exp(t^2/2) (1 + Y_nu^2 t^2 / n)
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaResidual {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl LemmaResidual {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

pub fn lemma1_check(sample: &StoppedSample, t: f64, n: f64) -> Result<LemmaResidual> {
    let trace = sample
        .trace
        .as_ref()
        .ok_or_else(|| Error::Usage("lemma1_check needs a sample run with retain_prefix".into()))?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("lemma1_check: non-finite t = {t}")));
    }
    let c = t * t / (2.0 * n);
    let lhs: NeumaierSum = trace
        .prefix
        .iter()
        .zip(&trace.sigma_sq)
        .map(|(&p, &s)| (c * p).exp() * c * s)
        .collect();
    let lhs = lhs.value();
    let rhs = (0.5 * t * t).exp() * (1.0 + sample.y_nu * sample.y_nu * t * t / n);
    Ok(LemmaResidual {
        t,
        lhs,
        rhs,
        residual: rhs - lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelSpec, ModelState};
    use proptest::prelude::*;

    const KEEP: PathOptions = PathOptions {
        retain_prefix: true,
    };

    /// Exact enumeration for constant variance `num/den` at integer level `n`:
    /// returns `(nu, gamma)` with partial sums compared in integers.
    /// `x = m / 2^e` exactly.
    fn dyadic(x: f64) -> (u128, u32) {
        let mut m = x;
        let mut e = 0;
        while m.fract() != 0.0 {
            m *= 2.0;
            e += 1;
        }
        (m as u128, e)
    }

    /// Stopping index and fraction for a constant variance `v`, in exact
    /// integer arithmetic.
    fn enumerate_constant(v: f64, n: u64) -> (u64, f64) {
        let (num, e) = dyadic(v);
        let level = (n as u128) << e;
        let mut k: u128 = 1;
        while (k + 1) * num < level {
            k += 1;
        }
        (k as u64, (level - k * num) as f64 / num as f64)
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(compute_gamma(9.0, 1.0, 10.0).unwrap(), 1.0);
        assert_eq!(compute_gamma(4.0, 2.0, 5.0).unwrap(), 0.5);
        assert_eq!(compute_gamma(9.5, 1.0, 10.0).unwrap(), 0.5);
    }

    #[test]
    fn gamma_rejects_bad_inputs() {
        assert!(matches!(
            compute_gamma(10.0, 1.0, 10.0),
            Err(Error::DegenerateStart { .. })
        ));
        assert!(compute_gamma(5.0, 1.0, 10.0).is_err());
        assert!(compute_gamma(9.0, 0.0, 10.0).is_err());
        assert_eq!(compute_gamma(9.0, 1.0, 10.0 + 1e-14).unwrap(), 1.0);
    }

    #[test]
    fn unit_variance_level_ten() {
        let spec = ModelSpec::iid_bounded(1.0, 1.0).unwrap();
        let mut m = init_model(&spec, 3).unwrap();
        let s = run_path(&mut m, 10.0, PathOptions::default()).unwrap();
        assert_eq!(s.nu, 9);
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.v_before, 9.0);
        // S'_nu is the plain 10-term sum
        let mut replay = init_model(&spec, 3).unwrap();
        let s10: f64 = (0..10).map(|_| replay.step().unwrap().x).sum();
        assert_eq!(s.s_prime_nu.to_bits(), s10.to_bits());
    }

    #[test]
    fn variance_two_level_five() {
        let spec = ModelSpec::iid_bounded(2.0, 2.0).unwrap();
        let mut m = init_model(&spec, 1).unwrap();
        let s = run_path(&mut m, 5.0, PathOptions::default()).unwrap();
        assert_eq!(s.nu, 2);
        assert!((s.v_before - 4.0).abs() < 1e-14);
        assert!((s.gamma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_hit_gives_unit_gamma() {
        // regime_switch with dyadic variances: every prefix is exact.
        let spec = ModelSpec::regime_switch(0.25, 4.0).unwrap();
        for seed in 0..50 {
            let mut probe = init_model(&spec, seed).unwrap();
            let mut acc = 0.0;
            let mut sums = vec![];
            for _ in 0..40 {
                acc += probe.step().unwrap().sigma_sq;
                sums.push(acc);
            }
            let n = sums[20];
            let mut m = init_model(&spec, seed).unwrap();
            let s = run_path(&mut m, n, PathOptions::default()).unwrap();
            assert!(s.nu <= 20);
            if s.v_before + s.sigma_nu_sq == n {
                assert_eq!(s.gamma, 1.0);
            }
            if s.nu == 20 {
                assert_eq!(s.gamma, 1.0);
            }
        }
    }

    #[test]
    fn constant_variance_matches_enumeration() {
        for v in [1.0, 0.5, 0.25, 4.0, 0.75] {
            let spec = ModelSpec::iid_bounded(f64::sqrt(v).max(1.0), v).unwrap();
            // The step variance is the squared amplitude, which need not equal v.
            let step_v = init_model(&spec, 0).unwrap().step().unwrap().sigma_sq;
            let lo = (2.0 * v + 1.0).ceil().max(3.0) as u64;
            for n in lo..=200 {
                let (nu, gamma) = enumerate_constant(step_v, n);
                if step_v == v {
                    let closed_nu = ((n as f64 / v).ceil() as u64).saturating_sub(1).max(1);
                    assert_eq!(nu, closed_nu, "v={v} n={n}");
                    let closed_gamma = (n as f64 - v * nu as f64) / v;
                    assert!((gamma - closed_gamma).abs() <= 1e-12);
                }
                let mut m = init_model(&spec, n).unwrap();
                let s = run_path(&mut m, n as f64, PathOptions::default()).unwrap();
                assert_eq!(s.nu, nu, "v={v} n={n}");
                assert!((s.gamma - gamma).abs() <= 1e-12, "v={v} n={n}");
            }
        }
    }

    #[test]
    fn degenerate_start_is_rejected() {
        let spec = ModelSpec::iid_bounded(2.0, 4.0).unwrap();
        let mut m = init_model(&spec, 0).unwrap();
        assert!(matches!(
            run_path(&mut m, 3.0, PathOptions::default()),
            Err(Error::DegenerateStart { .. })
        ));
    }

    #[test]
    fn overflow_when_cap_too_small() {
        let spec = ModelSpec::iid_bounded(1.0, 1.0)
            .unwrap()
            .with_max_steps(5)
            .unwrap();
        let mut m = init_model(&spec, 0).unwrap();
        assert!(matches!(
            run_path(&mut m, 10.0, PathOptions::default()),
            Err(Error::PathOverflow { cap: 5 })
        ));
    }

    #[test]
    fn lemma_at_zero() {
        let spec = ModelSpec::product(1.0, 2.0, 0.1).unwrap();
        let mut m = init_model(&spec, 0).unwrap();
        let s = run_path(&mut m, 50.0, KEEP).unwrap();
        let r = lemma1_check(&s, 0.0, 50.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 1.0);
        assert!(r.holds());
    }

    #[test]
    fn lemma_unit_variance_example() {
        let spec = ModelSpec::iid_bounded(1.0, 1.0).unwrap();
        let mut m = init_model(&spec, 0).unwrap();
        let s = run_path(&mut m, 10.0, KEEP).unwrap();
        let r = lemma1_check(&s, 1.0, 10.0).unwrap();
        // sum_{j=1}^{9} e^{j/20} / 20 and e^{1/2} * 1.1, 40-digit references
        assert!((r.lhs - 0.582638383566428).abs() < 1e-14, "{}", r.lhs);
        assert!((r.rhs - 1.813593397770141).abs() < 1e-14, "{}", r.rhs);
        assert!(r.holds());
    }

    #[test]
    fn lemma_needs_trace() {
        let spec = ModelSpec::iid_bounded(1.0, 1.0).unwrap();
        let mut m = init_model(&spec, 0).unwrap();
        let s = run_path(&mut m, 10.0, PathOptions::default()).unwrap();
        assert!(matches!(lemma1_check(&s, 1.0, 10.0), Err(Error::Usage(_))));
    }

    #[test]
    fn trace_lengths_match_nu() {
        let spec = ModelSpec::regime_switch(0.25, 4.0).unwrap();
        let mut m = init_model(&spec, 17).unwrap();
        let s = run_path(&mut m, 64.0, KEEP).unwrap();
        let tr = s.trace.as_ref().unwrap();
        assert_eq!(tr.prefix.len() as u64, s.nu);
        assert_eq!(*tr.prefix.last().unwrap(), s.v_before);
    }

    fn any_spec() -> impl Strategy<Value = ModelSpec> {
        prop_oneof![
            (1.0f64..3.0, 0.05f64..1.0)
                .prop_map(|(m, f)| ModelSpec::iid_bounded(m, f * m * m).unwrap()),
            (1.0f64..2.0, 0.0f64..2.0, 0.0f64..0.5).prop_map(|(lo, w, p)| ModelSpec::product(
                lo,
                lo + w,
                p
            )
            .unwrap()),
            (0.05f64..2.0, 0.0f64..6.0)
                .prop_map(|(lo, w)| ModelSpec::regime_switch(lo, lo + w).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn stopping_invariants(spec in any_spec(), seed in any::<u64>(), extra in 0.0f64..300.0) {
            let n = 2.0 * spec.max_initial_variance() + extra;
            let mut m = ModelState::new(&spec, seed).unwrap();
            let s = run_path(&mut m, n, KEEP).unwrap();
            prop_assert!(s.nu >= 1);
            prop_assert!(s.level_residual(n) <= 1e-12);
            prop_assert!(s.gamma > 0.0 && s.gamma <= 1.0);
            prop_assert!(s.v_before < n);
            prop_assert!(n <= s.v_before + s.sigma_nu_sq);
            prop_assert!(s.nu < spec.required_steps(n));
            for t in [0.5, 1.0, 2.0, 5.0, 10.0] {
                prop_assert!(lemma1_check(&s, t, n).unwrap().holds());
            }
        }

        #[test]
        fn unit_gamma_extends_sum(seed in any::<u64>(), n in 3u64..300) {
            let spec = ModelSpec::iid_bounded(1.0, 1.0).unwrap();
            let mut m = ModelState::new(&spec, seed).unwrap();
            let s = run_path(&mut m, n as f64, PathOptions::default()).unwrap();
            prop_assert_eq!(s.gamma, 1.0);
            prop_assert_eq!(s.s_prime_nu.to_bits(), (s.s_nu + s.x_next).to_bits());
        }
    }
}
