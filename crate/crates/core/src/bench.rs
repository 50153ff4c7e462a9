//! Monte Carlo benchmark: simulate replications over a parameter sweep, fit
//! several methods on each dataset and tabulate loading errors.
//!
//! Replication `j` uses simulation seed `seed ^ j` for every sweep value and
//! method, so methods are compared on identical data.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, FitConfig, Method};
use crate::metrics::{linear_fit_r2, loading_error, median, quantile, LinearFit};
use crate::simulate::{gen_series, named_config, ConfigName, SimConfig, SimOverrides};

pub const DEFAULT_REPLICATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Delta,
    W,
    #[serde(rename = "T")]
    T,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Delta => "delta",
            SweepVariable::W => "w",
            SweepVariable::T => "T",
        }
    }

    fn apply(self, cfg: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut out = cfg.clone();
        match self {
            SweepVariable::Delta => out.delta = value,
            SweepVariable::W => out.w = value,
            SweepVariable::T => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(Error::invalid(format!("T = {value} is not a valid length")));
                }
                out.t = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Base simulation design: a named configuration or an explicit one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigSource {
    Named(ConfigName),
    Explicit(SimConfig),
}

/// Estimator settings applied to every fit in a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_gram_floor")]
    pub gram_floor: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_h() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    30
}
fn default_gram_floor() -> f64 {
    crate::linalg::GRAM_FLOOR
}
fn default_restarts() -> usize {
    200
}
fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            h: default_h(),
            eps: default_eps(),
            max_iter: default_max_iter(),
            gram_floor: default_gram_floor(),
            restarts: default_restarts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub config: ConfigSource,
    #[serde(default)]
    pub overrides: SimOverrides,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub methods: Vec<Method>,
    pub sweep: Sweep,
    pub seed: u64,
    #[serde(default)]
    pub fit: FitSettings,
}

impl BenchmarkSpec {
    pub fn base_config(&self) -> Result<SimConfig> {
        match &self.config {
            ConfigSource::Named(name) => named_config(*name, &self.overrides),
            ConfigSource::Explicit(cfg) => {
                if self.overrides != SimOverrides::default() {
                    return Err(Error::invalid("overrides only apply to named configurations"));
                }
                cfg.validate()?;
                Ok(cfg.clone())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods must be nonempty"));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::invalid("sweep grid must be nonempty"));
        }
        let base = self.base_config()?;
        for &v in &self.sweep.values {
            self.sweep.variable.apply(&base, v)?;
        }
        self.fit_config(base.r).validate()
    }

    fn fit_config(&self, r: usize) -> FitConfig {
        FitConfig {
            r,
            h: self.fit.h,
            eps: self.fit.eps,
            max_iter: self.fit.max_iter,
            gram_floor: self.fit.gram_floor,
            seed: Some(self.seed),
            restarts: self.fit.restarts,
        }
    }
}

/// One fit of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub sweep_value: f64,
    pub replication: usize,
    /// Max loading error with estimate i compared to truth i.
    pub max_error: Option<f64>,
    /// Max loading error after label matching.
    pub matched_error: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// `ok`, or the error message of a failed fit.
    pub status: String,
}

impl BenchRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTiming {
    pub method: Method,
    pub sweep_value: f64,
    pub replication: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub sweep_value: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_error: Option<f64>,
    pub q1_error: Option<f64>,
    pub q3_error: Option<f64>,
    pub median_unmatched_error: Option<f64>,
    pub median_iterations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub method: Method,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub variable: SweepVariable,
    /// Ordered by (method, sweep value, replication) as listed in the spec.
    pub rows: Vec<BenchRow>,
    pub timings: Vec<BenchTiming>,
}

fn run_one(
    spec: &BenchmarkSpec,
    base: &SimConfig,
    sweep_idx: usize,
    rep: usize,
) -> Vec<(BenchRow, BenchTiming)> {
    let value = spec.sweep.values[sweep_idx];
    let failed = |method: Method, msg: String| {
        (
            BenchRow {
                method,
                sweep_value: value,
                replication: rep,
                max_error: None,
                matched_error: None,
                iterations: None,
                converged: None,
                status: format!("failed: {msg}"),
            },
            BenchTiming {
                method,
                sweep_value: value,
                replication: rep,
                seconds: 0.0,
            },
        )
    };
    let data = spec
        .sweep
        .variable
        .apply(base, value)
        .map(|cfg| SimConfig {
            seed: spec.seed ^ rep as u64,
            ..cfg
        })
        .and_then(|cfg| gen_series(&cfg));
    let (x, truth) = match data {
        Ok(d) => d,
        Err(e) => return spec.methods.iter().map(|&m| failed(m, e.to_string())).collect(),
    };
    let cfg = FitConfig {
        seed: Some(spec.seed ^ rep as u64),
        ..spec.fit_config(truth.rank())
    };
    spec.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = fit(&x, method, &cfg).and_then(|f| {
                let report = loading_error(&f.loadings, truth.loadings())?;
                Ok((f, report))
            });
            let seconds = start.elapsed().as_secs_f64();
            match result {
                Ok((f, report)) => (
                    BenchRow {
                        method,
                        sweep_value: value,
                        replication: rep,
                        max_error: Some(report.unmatched_max_error),
                        matched_error: Some(report.max_error),
                        iterations: Some(f.iterations),
                        converged: Some(f.converged),
                        status: "ok".into(),
                    },
                    BenchTiming {
                        method,
                        sweep_value: value,
                        replication: rep,
                        seconds,
                    },
                ),
                Err(e) => {
                    log::warn!("{method} failed at {value} rep {rep}: {e}");
                    let (row, mut timing) = failed(method, e.to_string());
                    timing.seconds = seconds;
                    (row, timing)
                }
            }
        })
        .collect()
}

/// Runs every (sweep value, replication) pair in parallel; failed fits are
/// recorded as rows and do not stop the run.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkOutput> {
    spec.validate()?;
    let base = spec.base_config()?;
    let jobs: Vec<(usize, usize)> = (0..spec.sweep.values.len())
        .flat_map(|s| (0..spec.replications).map(move |j| (s, j)))
        .collect();
    let results: Vec<Vec<(BenchRow, BenchTiming)>> = jobs
        .par_iter()
        .map(|&(s, j)| run_one(spec, &base, s, j))
        .collect();
    // results[s * reps + j][m]; reorder to (method, sweep, replication).
    let reps = spec.replications;
    let mut rows = Vec::with_capacity(jobs.len() * spec.methods.len());
    let mut timings = Vec::with_capacity(rows.capacity());
    for (m, _) in spec.methods.iter().enumerate() {
        for s in 0..spec.sweep.values.len() {
            for j in 0..reps {
                let (row, timing) = results[s * reps + j][m].clone();
                rows.push(row);
                timings.push(timing);
            }
        }
    }
    Ok(BenchmarkOutput {
        variable: spec.sweep.variable,
        rows,
        timings,
    })
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const ROW_COLUMNS: [&str; 8] = [
    "method",
    "sweep_value",
    "replication",
    "max_error",
    "matched_error",
    "iterations",
    "converged",
    "status",
];

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "method",
    "sweep_value",
    "n_ok",
    "n_failed",
    "median_error",
    "q1_error",
    "q3_error",
    "median_unmatched_error",
    "median_iterations",
];

pub const TREND_COLUMNS: [&str; 4] = ["method", "slope", "intercept", "r2"];

pub const TIMING_COLUMNS: [&str; 4] = ["method", "sweep_value", "replication", "seconds"];

pub fn write_rows<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROW_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.method.name().to_string(),
            r.sweep_value.to_string(),
            r.replication.to_string(),
            fmt_opt(r.max_error),
            fmt_opt(r.matched_error),
            fmt_opt(r.iterations),
            fmt_opt(r.converged),
            r.status.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(timings: &[BenchTiming], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TIMING_COLUMNS)?;
    for t in timings {
        out.write_record([
            t.method.name().to_string(),
            t.sweep_value.to_string(),
            t.replication.to_string(),
            format!("{:.6}", t.seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Medians and quartiles of the matched error per (method, sweep value).
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, usize), (f64, Vec<&BenchRow>)> = BTreeMap::new();
    let mut order: Vec<f64> = Vec::new();
    for r in rows {
        let idx = match order.iter().position(|v| v.to_bits() == r.sweep_value.to_bits()) {
            Some(i) => i,
            None => {
                order.push(r.sweep_value);
                order.len() - 1
            }
        };
        groups
            .entry((r.method, idx))
            .or_insert_with(|| (r.sweep_value, Vec::new()))
            .1
            .push(r);
    }
    let mut method_order: Vec<Method> = Vec::new();
    for r in rows {
        if !method_order.contains(&r.method) {
            method_order.push(r.method);
        }
    }
    let mut out = Vec::new();
    for m in method_order {
        for ((_, _), (value, group)) in groups.range((m, 0)..=(m, usize::MAX)) {
            let ok: Vec<&&BenchRow> = group.iter().filter(|r| r.is_ok()).collect();
            let errs: Vec<f64> = ok.iter().filter_map(|r| r.matched_error).collect();
            let unmatched: Vec<f64> = ok.iter().filter_map(|r| r.max_error).collect();
            let iters: Vec<f64> = ok.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect();
            out.push(SummaryRow {
                method: m,
                sweep_value: *value,
                n_ok: ok.len(),
                n_failed: group.len() - ok.len(),
                median_error: median(&errs),
                q1_error: quantile(&errs, 0.25),
                q3_error: quantile(&errs, 0.75),
                median_unmatched_error: median(&unmatched),
                median_iterations: median(&iters),
            });
        }
    }
    out
}

pub fn write_summary<W: Write>(summary: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_COLUMNS)?;
    for s in summary {
        out.write_record([
            s.method.name().to_string(),
            s.sweep_value.to_string(),
            s.n_ok.to_string(),
            s.n_failed.to_string(),
            fmt_opt(s.median_error),
            fmt_opt(s.q1_error),
            fmt_opt(s.q3_error),
            fmt_opt(s.median_unmatched_error),
            fmt_opt(s.median_iterations),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Least-squares line of median error against the sweep value, per method.
/// Methods with fewer than three usable sweep values are skipped.
pub fn trends(summary: &[SummaryRow]) -> Vec<TrendRow> {
    let mut methods: Vec<Method> = Vec::new();
    for s in summary {
        if !methods.contains(&s.method) {
            methods.push(s.method);
        }
    }
    methods
        .into_iter()
        .filter_map(|m| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = summary
                .iter()
                .filter(|s| s.method == m)
                .filter_map(|s| s.median_error.map(|e| (s.sweep_value, e)))
                .unzip();
            let LinearFit { slope, intercept, r2 } = linear_fit_r2(&xs, &ys).ok()?;
            Some(TrendRow {
                method: m,
                slope,
                intercept,
                r2,
            })
        })
        .collect()
}

pub fn write_trends<W: Write>(trends: &[TrendRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TREND_COLUMNS)?;
    for t in trends {
        out.write_record([
            t.method.name().to_string(),
            t.slope.to_string(),
            t.intercept.to_string(),
            t.r2.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
