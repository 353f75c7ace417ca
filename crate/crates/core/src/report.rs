//! Experiment configuration, orchestration and report files.
//!
//! A run simulates each level of `n_list` once, on the seed
//! `mix_seed(master_seed, n.to_bits())`, and evaluates every requested check
//! on those paths. The main report holds one [`Record`] per `(n, check)`;
//! plot data goes to sidecar CSV files next to it:
//!
//! - `<stem>.bounds.csv`: distances, `a_n` estimates and both bounds per `n`
//! - `<stem>.cf.csv`: per-`t` inequality residuals
//! - `<stem>.ecdf.csv`: empirical quantiles of both normalized sums
//!
//! Floats are written as `{:.16e}`, which round-trips every `f64`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harness::{
    default_t_grid, esseen_numeric, estimate_a_n, lemma1_sweep, rate_fit, simulate, BoundReport,
    CfCurve, CfProbe, InequalityCheck, DEFAULT_GRID_POINTS, MIN_REPS, RATE_SLOPE_CEILING,
    STAT_BAND,
};
use crate::model::ModelSpec;
use crate::normal::{phi, DEFAULT_DELTA};
use crate::rng::mix_seed;
use crate::stopping::{PathOptions, StoppedSample};
use crate::{Error, Result};

/// `t` values probed by the `cf` check, restricted to `[-y, y]`.
pub const CF_T_VALUES: [f64; 8] = [-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0];

/// `t` values of the `lemma1` check.
pub const LEMMA_T_VALUES: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];

/// Most paths traced by the `lemma1` check at each level.
pub const LEMMA_MAX_PATHS: usize = 10_000;

/// Probabilities of the ECDF sidecar: `k / 200` for `k = 1..=199`.
const ECDF_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Distance,
    Cf,
    Lemma1,
    Esseen,
    Rate,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Distance,
        Check::Cf,
        Check::Lemma1,
        Check::Esseen,
        Check::Rate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Check::Distance => "distance",
            Check::Cf => "cf",
            Check::Lemma1 => "lemma1",
            Check::Esseen => "esseen",
            Check::Rate => "rate",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown check '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

/// Config file contents and flag overrides; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub model: Option<String>,
    pub n_list: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub checks: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: ConfigLayer) -> Self {
        Self {
            model: over.model.or(self.model),
            n_list: over.n_list.or(self.n_list),
            reps: over.reps.or(self.reps),
            seed: over.seed.or(self.seed),
            delta: over.delta.or(self.delta),
            checks: over.checks.or(self.checks),
            out: over.out.or(self.out),
            format: over.format.or(self.format),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n_list: Vec<f64>,
    pub reps: usize,
    pub master_seed: u64,
    pub delta: f64,
    pub checks: BTreeSet<Check>,
    pub out: PathBuf,
    pub format: Format,
}

impl ExperimentConfig {
    /// Resolves a layer into a validated config. Defaults: the unit-variance
    /// `iid_bounded` model, `reps = 10^4`, `seed = 0`, `delta = 0.01`,
    /// `checks = [distance]`, `out = report.csv`, format from the extension
    /// of `out`.
    pub fn from_layer(layer: ConfigLayer) -> Result<Self> {
        let model = match &layer.model {
            Some(m) => m.parse()?,
            None => ModelSpec::iid_bounded(1.0, 1.0)?,
        };
        let n_list = layer
            .n_list
            .ok_or_else(|| Error::Config("n_list is required".into()))?;
        let checks = match layer.checks {
            Some(list) => list.iter().map(|c| c.parse()).collect::<Result<_>>()?,
            None => BTreeSet::from([Check::Distance]),
        };
        let out = layer.out.unwrap_or_else(|| PathBuf::from("report.csv"));
        let format = match layer.format {
            Some(f) => f.parse()?,
            None if out.extension().is_some_and(|e| e == "json") => Format::Json,
            None => Format::Csv,
        };
        let cfg = Self {
            model,
            n_list,
            reps: layer.reps.unwrap_or(MIN_REPS),
            master_seed: layer.seed.unwrap_or(0),
            delta: layer.delta.unwrap_or(DEFAULT_DELTA),
            checks,
            out,
            format,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list is empty".into()));
        }
        if !self.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "n_list must be strictly increasing, got {:?}",
                self.n_list
            )));
        }
        for &n in &self.n_list {
            self.model.check_level(n)?;
        }
        if self.reps < MIN_REPS {
            return Err(Error::Config(format!(
                "reps = {} is below the minimum of {MIN_REPS}",
                self.reps
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta = {} must lie in (0, 1)",
                self.delta
            )));
        }
        if self.checks.is_empty() {
            return Err(Error::Config("no checks requested".into()));
        }
        if self.checks.contains(&Check::Rate) && self.n_list.len() < 4 {
            return Err(Error::Config(format!(
                "the rate check needs at least 4 levels, got {}",
                self.n_list.len()
            )));
        }
        Ok(())
    }

    /// Seed of the paths simulated at level `n`.
    pub fn level_seed(&self, n: f64) -> u64 {
        mix_seed(self.master_seed, n.to_bits())
    }

    fn sidecar(&self, suffix: &str) -> PathBuf {
        let stem = self
            .out
            .file_stem()
            .map(|s| s.to_os_string())
            .unwrap_or_default();
        let mut name = stem;
        name.push(format!(".{suffix}.csv"));
        self.out.with_file_name(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    fn of(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    }
}

/// One row of the main report. `margin` is the slack of the asserted
/// inequality, `bound + stderr_or_halfwidth - estimate` for upper bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub check: Check,
    pub model: String,
    pub n: f64,
    #[serde(rename = "R")]
    pub reps: usize,
    pub seed: u64,
    pub estimate: f64,
    pub stderr_or_halfwidth: f64,
    pub bound: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub resolution_limited: bool,
}

impl Record {
    /// A failure that counts towards the exit status.
    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail && !self.resolution_limited
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} n={} R={} seed={}: estimate={} bound={} margin={} {}",
            self.check,
            self.model,
            self.n,
            self.reps,
            self.seed,
            self.estimate,
            self.bound,
            self.margin,
            self.verdict.as_str()
        )
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "check",
    "model",
    "n",
    "R",
    "seed",
    "estimate",
    "stderr_or_halfwidth",
    "bound",
    "margin",
    "verdict",
    "resolution_limited",
];

/// `f64` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn json_f64(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        "null".into()
    }
}

fn csv_fields(r: &Record) -> [String; 11] {
    [
        r.check.to_string(),
        r.model.clone(),
        fmt_f64(r.n),
        r.reps.to_string(),
        r.seed.to_string(),
        fmt_f64(r.estimate),
        fmt_f64(r.stderr_or_halfwidth),
        fmt_f64(r.bound),
        fmt_f64(r.margin),
        r.verdict.as_str().into(),
        r.resolution_limited.to_string(),
    ]
}

fn json_record(r: &Record) -> String {
    let s = |x: &str| serde_json::to_string(x).expect("string serialization");
    format!(
        "{{\"check\":{},\"model\":{},\"n\":{},\"R\":{},\"seed\":{},\"estimate\":{},\
         \"stderr_or_halfwidth\":{},\"bound\":{},\"margin\":{},\"verdict\":{},\
         \"resolution_limited\":{}}}",
        s(r.check.name()),
        s(&r.model),
        json_f64(r.n),
        r.reps,
        r.seed,
        json_f64(r.estimate),
        json_f64(r.stderr_or_halfwidth),
        json_f64(r.bound),
        json_f64(r.margin),
        s(r.verdict.as_str()),
        r.resolution_limited
    )
}

/// Serializes records in the given format.
pub fn render_report(records: &[Record], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            for r in records {
                w.write_record(csv_fields(r))?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        Format::Json => {
            let mut out = String::from("[");
            for (i, r) in records.iter().enumerate() {
                out.push_str(if i == 0 { "\n  " } else { ",\n  " });
                out.push_str(&json_record(r));
            }
            out.push_str(if records.is_empty() { "]\n" } else { "\n]\n" });
            Ok(out.into_bytes())
        }
    }
}

/// Writes records to `path`.
pub fn emit_report(records: &[Record], format: Format, path: &Path) -> Result<()> {
    fs::write(path, render_report(records, format)?)?;
    Ok(())
}

/// Parses a JSON report written by [`emit_report`].
pub fn parse_json_report(bytes: &[u8]) -> Result<Vec<Record>> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Parses a CSV report written by [`emit_report`].
pub fn parse_csv_report(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<Record>,
    /// Paths of the main report and its sidecars, in write order.
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.failed())
    }

    /// `0` when no record fails, else `1`.
    pub fn exit_code(&self) -> i32 {
        if self.failures().next().is_some() {
            1
        } else {
            0
        }
    }
}

/// Runs every requested check on every level and writes the report files.
/// Replications run on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let model = cfg.model.to_string();
    let wants = |c| cfg.checks.contains(&c);
    let need_bounds = wants(Check::Distance) || wants(Check::Esseen) || wants(Check::Rate);
    let need_samples = need_bounds || wants(Check::Cf);

    let mut records = Vec::new();
    let mut bounds: Vec<BoundReport> = Vec::new();
    let mut probes: Vec<CfProbe> = Vec::new();
    let mut ecdf_rows: Vec<[String; 6]> = Vec::new();

    for &n in &cfg.n_list {
        let seed = cfg.level_seed(n);
        let record =
            |check, estimate: f64, half: f64, bound: f64, pass: bool, limited: bool| Record {
                check,
                model: model.clone(),
                n,
                reps: cfg.reps,
                seed,
                estimate,
                stderr_or_halfwidth: half,
                bound,
                margin: bound + half - estimate,
                verdict: Verdict::of(pass),
                resolution_limited: limited,
            };

        let samples: Vec<StoppedSample> = if need_samples {
            simulate(&cfg.model, n, cfg.reps, seed, PathOptions::default())?
        } else {
            Vec::new()
        };

        let report = if need_bounds {
            let r = BoundReport::from_samples(&cfg.model, n, seed, cfg.delta, &samples)?;
            if wants(Check::Distance) {
                ecdf_rows.extend(ecdf_quantiles(n, &samples));
            }
            Some(r)
        } else {
            None
        };

        if let (true, Some(r)) = (wants(Check::Distance), &report) {
            let slack_f = r.bound_f + r.d_f.dkw_halfwidth - r.d_f.d_sup;
            let slack_h = r.bound_h + r.d_h.dkw_halfwidth - r.d_h.d_sup;
            let (d, bound) = if slack_h < slack_f {
                (&r.d_h, r.bound_h)
            } else {
                (&r.d_f, r.bound_f)
            };
            records.push(record(
                Check::Distance,
                d.d_sup,
                d.dkw_halfwidth,
                bound,
                r.pass(),
                false,
            ));
        }

        if wants(Check::Cf) {
            let a = estimate_a_n(&samples)?;
            let y = (n / (a.a_n * a.a_n)).powf(0.25);
            let t_grid: Vec<f64> = CF_T_VALUES.into_iter().filter(|t| t.abs() <= y).collect();
            if t_grid.is_empty() {
                return Err(Error::Config(format!(
                    "no cf probe point lies within y = {y} at n = {n}"
                )));
            }
            let probe = CfProbe::from_samples(&cfg.model, n, &t_grid, &samples)?;
            let slack = |c: &&InequalityCheck| c.rhs + STAT_BAND * c.stderr - c.lhs;
            let tightest = |resolved: bool| {
                probe
                    .checks()
                    .filter(|c| !resolved || !c.resolution_limited)
                    .min_by(|a, b| slack(a).total_cmp(&slack(b)))
            };
            let binding = tightest(true)
                .or_else(|| tightest(false))
                .expect("non-empty grid");
            let limited = probe.checks().any(|c| c.resolution_limited);
            records.push(record(
                Check::Cf,
                binding.lhs,
                STAT_BAND * binding.stderr,
                binding.rhs,
                probe.pass(),
                limited && probe.pass(),
            ));
            probes.push(probe);
        }

        if wants(Check::Lemma1) {
            let paths = cfg.reps.min(LEMMA_MAX_PATHS);
            let sweep = lemma1_sweep(&cfg.model, n, paths, &LEMMA_T_VALUES, seed)?;
            // estimate: the largest lhs / rhs over all paths and t
            let worst = 1.0 - sweep.min_relative_residual;
            let mut r = record(Check::Lemma1, worst, 0.0, 1.0, sweep.violations == 0, false);
            r.reps = paths;
            records.push(r);
        }

        if let (true, Some(r)) = (wants(Check::Esseen), &report) {
            let grid = default_t_grid(r.y_smoothing, DEFAULT_GRID_POINTS)?;
            let scale = n.sqrt().recip();
            let values: Vec<f64> = samples.iter().map(|s| s.s_nu * scale).collect();
            let e = esseen_numeric(&CfCurve::from_values(&values, &grid)?, r.y_smoothing)?;
            let half = r.d_f.dkw_halfwidth + e.quadrature_error;
            records.push(record(
                Check::Esseen,
                r.d_f.d_sup,
                half,
                e.value,
                r.d_f.d_sup - half <= e.value,
                false,
            ));
        }

        if let Some(r) = report {
            bounds.push(r);
        }
    }

    if wants(Check::Rate) {
        let fit = rate_fit(&bounds)?;
        records.push(Record {
            check: Check::Rate,
            model: model.clone(),
            n: 0.0,
            reps: cfg.reps,
            seed: cfg.master_seed,
            estimate: fit.slope,
            stderr_or_halfwidth: fit.stderr,
            bound: RATE_SLOPE_CEILING,
            margin: RATE_SLOPE_CEILING - fit.slope,
            verdict: Verdict::of(fit.pass),
            resolution_limited: false,
        });
    }

    let mut files = vec![cfg.out.clone()];
    emit_report(&records, cfg.format, &cfg.out)?;
    if !bounds.is_empty() {
        let path = cfg.sidecar("bounds");
        write_bounds_csv(&path, &bounds)?;
        files.push(path);
    }
    if !probes.is_empty() {
        let path = cfg.sidecar("cf");
        write_cf_csv(&path, &probes)?;
        files.push(path);
    }
    if !ecdf_rows.is_empty() {
        let path = cfg.sidecar("ecdf");
        write_rows(
            &path,
            &["n", "p", "x_f", "phi_x_f", "x_h", "phi_x_h"],
            &ecdf_rows,
        )?;
        files.push(path);
    }
    Ok(RunOutcome { records, files })
}

fn ecdf_quantiles(n: f64, samples: &[StoppedSample]) -> Vec<[String; 6]> {
    let scale = n.sqrt().recip();
    let mut f: Vec<f64> = samples.iter().map(|s| s.s_nu * scale).collect();
    let mut h: Vec<f64> = samples.iter().map(|s| s.s_prime_nu * scale).collect();
    f.sort_by(f64::total_cmp);
    h.sort_by(f64::total_cmp);
    let q = |v: &[f64], p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
    (1..ECDF_STEPS)
        .map(|k| {
            let p = k as f64 / ECDF_STEPS as f64;
            let (xf, xh) = (q(&f, p), q(&h, p));
            [
                fmt_f64(n),
                fmt_f64(p),
                fmt_f64(xf),
                fmt_f64(phi(xf)),
                fmt_f64(xh),
                fmt_f64(phi(xh)),
            ]
        })
        .collect()
}

fn write_rows<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.as_ref())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

fn write_bounds_csv(path: &Path, reports: &[BoundReport]) -> Result<()> {
    let header = [
        "n",
        "R",
        "seed",
        "a_n_hat",
        "a_n_stderr",
        "a_n_used",
        "y",
        "d_f",
        "argmax_f",
        "d_h",
        "argmax_h",
        "dkw_halfwidth",
        "bound_f",
        "bound_h",
        "margin_f",
        "margin_h",
        "pass_f",
        "pass_h",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.n),
                r.reps.to_string(),
                r.seed.to_string(),
                fmt_f64(r.a_n_hat),
                fmt_f64(r.a_n_stderr),
                fmt_f64(r.a_n_used),
                fmt_f64(r.y_smoothing),
                fmt_f64(r.d_f.d_sup),
                fmt_f64(r.d_f.argmax_x),
                fmt_f64(r.d_h.d_sup),
                fmt_f64(r.d_h.argmax_x),
                fmt_f64(r.d_f.dkw_halfwidth),
                fmt_f64(r.bound_f),
                fmt_f64(r.bound_h),
                fmt_f64(r.margin_f),
                fmt_f64(r.margin_h),
                r.pass_f.to_string(),
                r.pass_h.to_string(),
            ]
        })
        .collect();
    write_rows(path, &header, &rows)
}

fn write_cf_csv(path: &Path, probes: &[CfProbe]) -> Result<()> {
    let header = [
        "n",
        "t",
        "inequality",
        "lhs",
        "rhs",
        "stderr",
        "c3_re",
        "c3_im",
        "c4_re",
        "c4_im",
        "resolution_limited",
        "pass",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    for p in probes {
        for pt in &p.points {
            for c in &pt.checks {
                rows.push(vec![
                    fmt_f64(p.n),
                    fmt_f64(pt.t),
                    c.inequality.name().into(),
                    fmt_f64(c.lhs),
                    fmt_f64(c.rhs),
                    fmt_f64(c.stderr),
                    fmt_f64(pt.c3.re),
                    fmt_f64(pt.c3.im),
                    fmt_f64(pt.c4.re),
                    fmt_f64(pt.c4.im),
                    c.resolution_limited.to_string(),
                    c.pass.to_string(),
                ]);
            }
        }
    }
    write_rows(path, &header, &rows)
}
