//! Adapted martingale difference generators.
//!
//! Model step `k` emits the triple `(X_{k+1}, sigma^2_k, Y_k)`: the conditional
//! variance and the dominating variable are fixed from the history through
//! step `k`, then the increment is drawn. Every conditional law is a symmetric
//! two-point law `+-a_k`, so conditional moments are available in closed form
//! and the hypotheses
//!
//! ```text
//! Y_k >= 1,  Y_k >= Y_{k-1},  E(|X_{k+1}|^3 | F_k) <= Y_k sigma^2_k
//! ```
//!
//! are checked exactly rather than statistically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::PathRng;
use crate::summation::{tree_reduce, Accumulator, Moments, NeumaierSum};
use crate::{Error, Result};

/// Third absolute moment of the Rademacher innovations of the product model.
pub const RADEMACHER_THIRD_MOMENT: f64 = 1.0;

/// Step cap used when a spec does not set one.
pub const DEFAULT_MAX_STEPS: u64 = 1 << 36;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `X = +-sqrt(v)` i.i.d., `|X| <= M`, constant `Y = max(M, 1)`.
    IidBounded { bound: f64, variance: f64 },
    /// `X_k = A_{k-1} zeta_k` with Rademacher `zeta` and a nondecreasing
    /// bounded level `A_k = a_lo + (a_hi - a_lo)(1 - 2^{-N_k})`, where `N_k`
    /// counts Bernoulli(`jump_prob`) events.
    Product {
        a_lo: f64,
        a_hi: f64,
        jump_prob: f64,
    },
    /// `sigma^2_k = v_hi` when `S_k > 0`, else `v_lo`; `X = +-sigma_k`.
    RegimeSwitch { v_lo: f64, v_hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub max_steps: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Result<Self> {
        let spec = Self {
            kind,
            max_steps: DEFAULT_MAX_STEPS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn iid_bounded(bound: f64, variance: f64) -> Result<Self> {
        Self::new(ModelKind::IidBounded { bound, variance })
    }

    pub fn product(a_lo: f64, a_hi: f64, jump_prob: f64) -> Result<Self> {
        Self::new(ModelKind::Product {
            a_lo,
            a_hi,
            jump_prob,
        })
    }

    pub fn regime_switch(v_lo: f64, v_hi: f64) -> Result<Self> {
        Self::new(ModelKind::RegimeSwitch { v_lo, v_hi })
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Result<Self> {
        self.max_steps = max_steps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        match self.kind {
            ModelKind::IidBounded { bound, variance } => {
                if !(bound.is_finite() && bound >= 1.0) {
                    return bad(format!("iid_bounded: bound M = {bound} must be >= 1"));
                }
                if !(variance > 0.0 && variance <= bound * bound) {
                    return bad(format!(
                        "iid_bounded: variance v = {variance} must lie in (0, M^2]"
                    ));
                }
            }
            ModelKind::Product {
                a_lo,
                a_hi,
                jump_prob,
            } => {
                if !(a_lo.is_finite() && a_lo >= 1.0) {
                    return bad(format!("product: a_lo = {a_lo} must be >= 1"));
                }
                if !(a_hi.is_finite() && a_hi >= a_lo) {
                    return bad(format!("product: a_hi = {a_hi} must be >= a_lo"));
                }
                if !(0.0..=1.0).contains(&jump_prob) {
                    return bad(format!(
                        "product: jump_prob = {jump_prob} must lie in [0, 1]"
                    ));
                }
            }
            ModelKind::RegimeSwitch { v_lo, v_hi } => {
                if !(v_lo.is_finite() && v_lo > 0.0) {
                    return bad(format!("regime_switch: v_lo = {v_lo} must be > 0"));
                }
                if !(v_hi.is_finite() && v_hi >= v_lo) {
                    return bad(format!("regime_switch: v_hi = {v_hi} must be >= v_lo"));
                }
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::IidBounded { .. } => "iid_bounded",
            ModelKind::Product { .. } => "product",
            ModelKind::RegimeSwitch { .. } => "regime_switch",
        }
    }

    /// Smallest conditional variance the model can emit.
    pub fn variance_floor(&self) -> f64 {
        match self.kind {
            ModelKind::IidBounded { variance, .. } => sq(variance.sqrt()),
            ModelKind::Product { a_lo, .. } => sq(a_lo),
            ModelKind::RegimeSwitch { v_lo, .. } => sq(v_lo.sqrt()),
        }
    }

    /// Largest conditional variance the model can emit.
    pub fn variance_ceiling(&self) -> f64 {
        match self.kind {
            ModelKind::IidBounded { variance, .. } => sq(variance.sqrt()),
            ModelKind::Product { a_hi, .. } => sq(a_hi),
            ModelKind::RegimeSwitch { v_hi, .. } => sq(v_hi.sqrt()),
        }
    }

    /// Largest possible `sigma^2_0`. All kinds start from a fixed state, so
    /// this is the deterministic first variance.
    pub fn max_initial_variance(&self) -> f64 {
        match self.kind {
            ModelKind::IidBounded { variance, .. } => sq(variance.sqrt()),
            ModelKind::Product { a_lo, .. } => sq(a_lo),
            // S_0 = 0 selects the low regime.
            ModelKind::RegimeSwitch { v_lo, .. } => sq(v_lo.sqrt()),
        }
    }

    /// Upper bound on `Y_k` over all paths.
    pub fn y_ceiling(&self) -> f64 {
        match self.kind {
            ModelKind::IidBounded { bound, .. } => bound.max(1.0),
            ModelKind::Product { a_hi, .. } => (RADEMACHER_THIRD_MOMENT * a_hi).max(1.0),
            ModelKind::RegimeSwitch { v_hi, .. } => v_hi.sqrt().max(1.0),
        }
    }

    /// Steps needed to stop at level `n` on the slowest path, plus the extra
    /// draw for `X_{nu+1}`: `ceil(n / v_min) + 2`.
    pub fn required_steps(&self, n: f64) -> u64 {
        (n / self.variance_floor()).ceil() as u64 + 2
    }

    /// Config-time check that level `n` is admissible for this model.
    pub fn check_level(&self, n: f64) -> Result<()> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Config(format!(
                "level n = {n} must be positive and finite"
            )));
        }
        let s0 = self.max_initial_variance();
        if n < 2.0 * s0 {
            return Err(Error::Config(format!(
                "level n = {n} is below 2 * sigma^2_0 = {} for {}",
                2.0 * s0,
                self.kind_name()
            )));
        }
        let need = self.required_steps(n);
        if self.max_steps < need {
            return Err(Error::Config(format!(
                "max_steps = {} is below the {need} steps needed to stop at n = {n}",
                self.max_steps
            )));
        }
        Ok(())
    }
}

#[inline]
fn sq(a: f64) -> f64 {
    a * a
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::IidBounded { bound, variance } => {
                write!(f, "iid_bounded:m={bound},v={variance}")?
            }
            ModelKind::Product {
                a_lo,
                a_hi,
                jump_prob,
            } => write!(f, "product:a_lo={a_lo},a_hi={a_hi},jump_prob={jump_prob}")?,
            ModelKind::RegimeSwitch { v_lo, v_hi } => {
                write!(f, "regime_switch:v_lo={v_lo},v_hi={v_hi}")?
            }
        }
        if self.max_steps != DEFAULT_MAX_STEPS {
            write!(f, ",max_steps={}", self.max_steps)?;
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Parses `kind` or `kind:key=value,key=value`. Missing keys take the
    /// defaults `m=1,v=1`, `a_lo=1,a_hi=2,jump_prob=0.05`, `v_lo=0.25,v_hi=4`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r),
            None => (s.trim(), ""),
        };
        let mut params: Vec<(String, String)> = Vec::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed model parameter '{pair}'")))?;
            params.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut take = |key: &str, default: f64| -> Result<f64> {
            match params.iter().position(|(k, _)| k == key) {
                Some(i) => {
                    let (_, v) = params.remove(i);
                    v.parse::<f64>().map_err(|_| {
                        Error::Config(format!("parameter {key} = '{v}' is not a number"))
                    })
                }
                None => Ok(default),
            }
        };
        let kind = match name {
            "iid_bounded" => ModelKind::IidBounded {
                bound: take("m", 1.0)?,
                variance: take("v", 1.0)?,
            },
            "product" => ModelKind::Product {
                a_lo: take("a_lo", 1.0)?,
                a_hi: take("a_hi", 2.0)?,
                jump_prob: take("jump_prob", 0.05)?,
            },
            "regime_switch" => ModelKind::RegimeSwitch {
                v_lo: take("v_lo", 0.25)?,
                v_hi: take("v_hi", 4.0)?,
            },
            other => return Err(Error::Config(format!("unknown model kind '{other}'"))),
        };
        let max_steps = match params.iter().position(|(k, _)| k == "max_steps") {
            Some(i) => {
                let (_, v) = params.remove(i);
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("max_steps = '{v}' is not an integer")))?
            }
            None => DEFAULT_MAX_STEPS,
        };
        if let Some((k, _)) = params.first() {
            return Err(Error::Config(format!("unknown parameter '{k}' for {name}")));
        }
        ModelSpec::new(kind)?.with_max_steps(max_steps)
    }
}

/// Symmetric two-point conditional law `P(X = a) = P(X = -a) = 1/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPointLaw {
    pub amplitude: f64,
}

impl TwoPointLaw {
    pub fn mean(&self) -> f64 {
        0.5 * self.amplitude + 0.5 * -self.amplitude
    }

    pub fn second_moment(&self) -> f64 {
        0.5 * sq(self.amplitude) + 0.5 * sq(-self.amplitude)
    }

    pub fn third_abs_moment(&self) -> f64 {
        self.amplitude.abs() * sq(self.amplitude)
    }
}

/// One model step: `X_{k+1}`, `sigma^2_k`, `Y_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub x: f64,
    pub sigma_sq: f64,
    pub y: f64,
    /// Amplitude of the two-point conditional law of `x`.
    pub amplitude: f64,
}

impl StepOutput {
    pub fn law(&self) -> TwoPointLaw {
        TwoPointLaw {
            amplitude: self.amplitude,
        }
    }
}

/// Generator state owned by a single path.
#[derive(Clone, Debug)]
pub struct ModelState {
    spec: ModelSpec,
    step: u64,
    rng: PathRng,
    sum: f64,
    jumps: i32,
    amp_lo: f64,
    amp_hi: f64,
    y_const: f64,
}

/// Cap on the product model's jump counter; `2^-64` is below the resolution
/// of `1 - 2^-N`.
const MAX_JUMPS: i32 = 64;

impl ModelState {
    /// Deterministic state for `(spec, seed)`.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Self::replicate(spec, seed, 0)
    }

    /// State for replication `rep` of a run with master seed `master_seed`.
    pub fn replicate(spec: &ModelSpec, master_seed: u64, rep: u64) -> Result<Self> {
        spec.validate()?;
        let (amp_lo, amp_hi, y_const) = match spec.kind {
            ModelKind::IidBounded { bound, variance } => {
                let a = variance.sqrt();
                (a, a, bound.max(1.0))
            }
            ModelKind::Product { a_lo, a_hi, .. } => (a_lo, a_hi, f64::NAN),
            ModelKind::RegimeSwitch { v_lo, v_hi } => {
                (v_lo.sqrt(), v_hi.sqrt(), v_hi.sqrt().max(1.0))
            }
        };
        Ok(Self {
            spec: *spec,
            step: 0,
            rng: PathRng::new(master_seed, rep),
            sum: 0.0,
            jumps: 0,
            amp_lo,
            amp_hi,
            y_const,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Number of increments emitted so far.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Running sum `S_k` of emitted increments.
    pub fn running_sum(&self) -> f64 {
        self.sum
    }

    /// Emits `(X_{k+1}, sigma^2_k, Y_k)` and advances to step `k + 1`.
    #[inline]
    pub fn step(&mut self) -> Result<StepOutput> {
        if self.step >= self.spec.max_steps {
            return Err(Error::PathOverflow {
                cap: self.spec.max_steps,
            });
        }
        // sigma^2_k and Y_k are fixed before X_{k+1} is drawn.
        let (amplitude, y) = match self.spec.kind {
            ModelKind::IidBounded { .. } => (self.amp_lo, self.y_const),
            ModelKind::Product { jump_prob, .. } => {
                if self.step > 0
                    && jump_prob > 0.0
                    && self.jumps < MAX_JUMPS
                    && self.rng.bernoulli(jump_prob)
                {
                    self.jumps += 1;
                }
                let level =
                    self.amp_lo + (self.amp_hi - self.amp_lo) * (1.0 - 2f64.powi(-self.jumps));
                (level, (RADEMACHER_THIRD_MOMENT * level).max(1.0))
            }
            ModelKind::RegimeSwitch { .. } => {
                let a = if self.sum > 0.0 {
                    self.amp_hi
                } else {
                    self.amp_lo
                };
                (a, self.y_const)
            }
        };
        let x = amplitude * self.rng.sign();
        self.sum += x;
        self.step += 1;
        Ok(StepOutput {
            x,
            sigma_sq: sq(amplitude),
            y,
            amplitude,
        })
    }
}

/// Initializes a model state; see [`ModelState::new`].
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    ModelState::new(spec, seed)
}

/// Outcome of one statistical martingale check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub test_function: String,
    pub mean: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub n_paths: usize,
    pub path_len: u64,
    pub steps_checked: u64,
    /// Minimum of `Y_k sigma^2_k - E(|X_{k+1}|^3 | F_k)` over all steps.
    pub min_domination_slack: f64,
    /// Steps where the third-moment domination holds with equality.
    pub equality_steps: u64,
    pub martingale: Vec<MartingaleCheck>,
    pub pass: bool,
}

#[derive(Default)]
struct PathStats {
    steps: u64,
    min_slack: f64,
    equality: u64,
    plain: Moments,
    signed: Moments,
    violation: Option<String>,
}

impl Accumulator for PathStats {
    fn merge(self, o: Self) -> Self {
        Self {
            steps: self.steps + o.steps,
            min_slack: self.min_slack.min(o.min_slack),
            equality: self.equality + o.equality,
            plain: self.plain.merge(o.plain),
            signed: self.signed.merge(o.signed),
            violation: self.violation.or(o.violation),
        }
    }
}

fn check_path(spec: &ModelSpec, seed: u64, rep: usize, path_len: u64) -> PathStats {
    let mut st = PathStats {
        min_slack: f64::INFINITY,
        ..Default::default()
    };
    let mut state = match ModelState::replicate(spec, seed, rep as u64) {
        Ok(s) => s,
        Err(e) => {
            st.violation = Some(e.to_string());
            return st;
        }
    };
    let floor = spec.variance_floor();
    let mut prev_y = f64::NEG_INFINITY;
    let mut var_sum = NeumaierSum::new();
    for k in 0..path_len.min(spec.max_steps) {
        let s_before = state.running_sum();
        let out = match state.step() {
            Ok(o) => o,
            Err(e) => {
                st.violation = Some(e.to_string());
                return st;
            }
        };
        let fail = |what: &str| Some(format!("path {rep}, step {k}: {what} ({out:?})"));
        if !(out.y >= 1.0) {
            st.violation = fail("Y < 1");
        } else if out.y < prev_y {
            st.violation = fail("Y decreased");
        } else if !(out.sigma_sq > 0.0 && out.sigma_sq <= out.y * out.y) {
            st.violation = fail("sigma^2 outside (0, Y^2]");
        }
        let law = out.law();
        if law.mean() != 0.0 || law.second_moment() != out.sigma_sq {
            st.violation = fail("conditional law does not match sigma^2");
        }
        if out.x.abs() != out.amplitude {
            st.violation = fail("increment outside the two-point support");
        }
        let slack = out.y * out.sigma_sq - law.third_abs_moment();
        if slack < 0.0 {
            st.violation = fail("E(|X|^3|F) > Y sigma^2");
        }
        var_sum += out.sigma_sq;
        if var_sum.value() < (k + 1) as f64 * floor {
            st.violation = fail("accumulated variance below floor");
        }
        if st.violation.is_some() {
            return st;
        }
        st.min_slack = st.min_slack.min(slack);
        if slack == 0.0 {
            st.equality += 1;
        }
        let g = if s_before > 0.0 {
            1.0
        } else if s_before < 0.0 {
            -1.0
        } else {
            0.0
        };
        st.plain.push(out.x);
        st.signed.push(g * out.x);
        st.steps += 1;
        prev_y = out.y;
    }
    st
}

/// Checks the generator hypotheses over `n_paths` paths of `path_len` steps.
///
/// Pathwise conditions and the closed-form conditional-moment domination are
/// exact; any violation is an error. The martingale property is checked
/// statistically for the test functions `g = 1` and `g = sign(S_k)`, each
/// passing when `|mean(g X_{k+1})| <= 4 stderr`.
pub fn validate_model(
    spec: &ModelSpec,
    seed: u64,
    n_paths: usize,
    path_len: u64,
) -> Result<ValidationReport> {
    if n_paths < 1000 {
        return Err(Error::Usage(format!(
            "validate_model needs at least 1000 paths, got {n_paths}"
        )));
    }
    spec.validate()?;
    let stats = tree_reduce(n_paths, |range| {
        range
            .map(|rep| check_path(spec, seed, rep, path_len))
            .reduce(Accumulator::merge)
            .unwrap_or_default()
    })
    .expect("n_paths > 0");
    if let Some(v) = stats.violation {
        return Err(Error::ModelInvalid(v));
    }
    let check = |name: &str, m: &Moments| {
        let mean = m.mean();
        let stderr = m.stderr();
        MartingaleCheck {
            test_function: name.to_string(),
            mean,
            stderr,
            pass: mean.abs() <= 4.0 * stderr,
        }
    };
    let martingale = vec![
        check("constant", &stats.plain),
        check("sign_of_running_sum", &stats.signed),
    ];
    let pass = martingale.iter().all(|c| c.pass);
    Ok(ValidationReport {
        model: spec.to_string(),
        n_paths,
        path_len,
        steps_checked: stats.steps,
        min_domination_slack: stats.min_slack,
        equality_steps: stats.equality,
        martingale,
        pass,
    })
}
