//! Replicated experiments over stopped paths.
//!
//! Replication `i` always draws from random stream `i` of the master seed, and
//! every average is formed by [`crate::summation::tree_reduce`], so reported
//! numbers do not depend on the worker count.

mod bounds;
mod cf;
mod esseen;
mod rate;

pub use bounds::{
    estimate_a_n, estimate_distances, theorem_bound_f, theorem_bound_h, AnEstimate, BoundReport,
};
pub use cf::{
    cf_probe, default_t_grid, CfCurve, CfPoint, CfProbe, ComplexEstimate, Inequality,
    InequalityCheck, DEFAULT_GRID_POINTS, STAT_BAND,
};
pub use esseen::{esseen_numeric, EsseenResult, ESSEEN_MIN_POINTS};
pub use rate::{rate_fit, rate_fit_points, RateFit, RATE_SLOPE_CEILING};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ModelSpec, ModelState};
use crate::stopping::{lemma1_check, run_path, PathOptions, StoppedSample};
use crate::summation::{tree_reduce, Accumulator};
use crate::{Error, Result};

/// Smallest replication count accepted by [`estimate_distances`].
pub const MIN_REPS: usize = 10_000;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "STOPSUM_WORKERS";

/// Thread pool for replicated runs. The worker count never affects results.
pub struct Executor {
    pool: rayon::ThreadPool,
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Uses `STOPSUM_WORKERS` when set, otherwise rayon's default.
    pub fn from_env() -> Result<Self> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let w = v.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("{WORKERS_ENV} = '{v}' is not a worker count"))
                })?;
                Self::new(w)
            }
            Err(_) => Self::new(0),
        }
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

/// Runs `reps` independent paths to level `n`, replication `i` on stream `i`.
pub fn simulate(
    spec: &ModelSpec,
    n: f64,
    reps: usize,
    seed: u64,
    opts: PathOptions,
) -> Result<Vec<StoppedSample>> {
    spec.check_level(n)?;
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut state = ModelState::replicate(spec, seed, rep as u64)?;
            run_path(&mut state, n, opts)
        })
        .collect()
}

/// Pathwise lemma residuals over many paths and a grid of `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSweep {
    pub n: f64,
    pub paths: usize,
    pub t_grid: Vec<f64>,
    pub checks: u64,
    pub violations: u64,
    /// Smallest `rhs - lhs` seen.
    pub min_residual: f64,
    /// Smallest `(rhs - lhs) / rhs` seen.
    pub min_relative_residual: f64,
}

#[derive(Default)]
struct LemmaAcc {
    checks: u64,
    violations: u64,
    min_residual: f64,
    min_relative: f64,
    error: Option<String>,
}

impl Accumulator for LemmaAcc {
    fn merge(self, o: Self) -> Self {
        Self {
            checks: self.checks + o.checks,
            violations: self.violations + o.violations,
            min_residual: self.min_residual.min(o.min_residual),
            min_relative: self.min_relative.min(o.min_relative),
            error: self.error.or(o.error),
        }
    }
}

/// Runs `paths` prefix-retaining paths and evaluates the lemma at every `t`.
/// Traces are dropped as soon as each path is checked.
pub fn lemma1_sweep(
    spec: &ModelSpec,
    n: f64,
    paths: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<LemmaSweep> {
    if paths == 0 || t_grid.is_empty() {
        return Err(Error::Usage("lemma1_sweep needs paths and a t grid".into()));
    }
    spec.check_level(n)?;
    let opts = PathOptions {
        retain_prefix: true,
    };
    let acc = tree_reduce(paths, |range| {
        let mut acc = LemmaAcc {
            min_residual: f64::INFINITY,
            min_relative: f64::INFINITY,
            ..Default::default()
        };
        for rep in range {
            let sample = ModelState::replicate(spec, seed, rep as u64)
                .and_then(|mut st| run_path(&mut st, n, opts));
            let sample = match sample {
                Ok(s) => s,
                Err(e) => {
                    acc.error.get_or_insert(e.to_string());
                    continue;
                }
            };
            for &t in t_grid {
                match lemma1_check(&sample, t, n) {
                    Ok(r) => {
                        acc.checks += 1;
                        if !r.holds() {
                            acc.violations += 1;
                        }
                        acc.min_residual = acc.min_residual.min(r.residual);
                        acc.min_relative = acc.min_relative.min(r.residual / r.rhs);
                    }
                    Err(e) => {
                        acc.error.get_or_insert(e.to_string());
                    }
                }
            }
        }
        acc
    })
    .expect("paths > 0");
    if let Some(e) = acc.error {
        return Err(Error::ModelInvalid(e));
    }
    Ok(LemmaSweep {
        n,
        paths,
        t_grid: t_grid.to_vec(),
        checks: acc.checks,
        violations: acc.violations,
        min_residual: acc.min_residual,
        min_relative_residual: acc.min_relative,
    })
}
