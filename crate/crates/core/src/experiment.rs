//! Experiment specs, sweeps over cache size or popularity skew, and the CSV
//! outputs of a sweep.
//!
//! A spec is a TOML file:
//!
//! ```toml
//! sweep_variable = "cache_fraction"      # or "alpha"
//! sweep_values = [0.01, 0.02, 0.03]
//! schemes = ["OPTIMIZED", "LCE_LRU", "NO_CACHE"]
//! seeds = [1, 2, 3]
//! output_path = "results/cache_size"
//!
//! [parameters]                           # every SimConfig field except
//! nodes = 64                             # scheme, seed and the swept one
//! objects = 200
//! alpha = 0.8
//! ```
//!
//! Omitted parameters take their [`SimConfig::default`] values.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnet::{self, MetricsReport, RequestMode, Scheme, SimConfig, SimError};

pub const RUNS_CSV_HEADER: [&str; 6] = [
    "sweep_value",
    "scheme",
    "seed",
    "avg_hops",
    "hit_ratio",
    "total_requests",
];

pub const SUMMARY_CSV_HEADER: [&str; 6] = [
    "sweep_value",
    "scheme",
    "avg_hops_mean",
    "avg_hops_std",
    "hit_ratio_mean",
    "runs",
];

/// A problem found in a spec, tied to a field and, when known, a line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Spec(Vec<Diagnostic>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: malformed row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Alpha,
    CacheFraction,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Alpha => "alpha",
            SweepVariable::CacheFraction => "cache_fraction",
        }
    }
}

/// Fixed simulation parameters of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default = "defaults::nodes")]
    pub nodes: usize,
    #[serde(default = "defaults::objects")]
    pub objects: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_fraction: Option<f64>,
    #[serde(default = "defaults::m_attach")]
    pub m_attach: usize,
    #[serde(default = "defaults::origin_penalty")]
    pub origin_penalty: u32,
    #[serde(default = "defaults::per_node_rate")]
    pub per_node_rate: f64,
    #[serde(default = "defaults::requests_per_epoch")]
    pub requests_per_epoch: u64,
    #[serde(default = "defaults::epochs")]
    pub epochs: u32,
    #[serde(default = "defaults::warmup_epochs")]
    pub warmup_epochs: u32,
    #[serde(default)]
    pub request_mode: RequestMode,
    #[serde(default = "defaults::smoothing")]
    pub smoothing: f64,
}

mod defaults {
    use crate::simnet::SimConfig;

    pub fn nodes() -> usize {
        SimConfig::default().nodes
    }
    pub fn objects() -> usize {
        SimConfig::default().objects
    }
    pub fn m_attach() -> usize {
        SimConfig::default().m_attach
    }
    pub fn origin_penalty() -> u32 {
        SimConfig::default().origin_penalty
    }
    pub fn per_node_rate() -> f64 {
        SimConfig::default().per_node_rate
    }
    pub fn requests_per_epoch() -> u64 {
        SimConfig::default().requests_per_epoch
    }
    pub fn epochs() -> u32 {
        SimConfig::default().epochs
    }
    pub fn warmup_epochs() -> u32 {
        SimConfig::default().warmup_epochs
    }
    pub fn smoothing() -> f64 {
        SimConfig::default().smoothing
    }
}

/// A parameter sweep over schemes and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub output_path: PathBuf,
    pub parameters: Parameters,
}

impl ExperimentSpec {
    /// Parses and validates a spec.
    pub fn parse(text: &str) -> Result<Self, Vec<Diagnostic>> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
            vec![Diagnostic {
                field: field_from_toml_error(e.message()),
                line,
                message: e.message().trim().to_string(),
            }]
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| ExperimentError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Self::parse(&text).map_err(ExperimentError::Spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Full invariant check without running anything.
    pub fn validate(&self) -> Result<(), Vec<Diagnostic>> {
        let mut diags = Vec::new();
        if self.sweep_values.is_empty() {
            diags.push(Diagnostic::new("sweep_values", "must not be empty"));
        }
        if self.sweep_values.windows(2).any(|w| !(w[0] < w[1])) {
            diags.push(Diagnostic::new(
                "sweep_values",
                "must be strictly increasing",
            ));
        }
        if self.seeds.is_empty() {
            diags.push(Diagnostic::new("seeds", "must not be empty"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            diags.push(Diagnostic::new("seeds", format!("duplicate seed {dup}")));
        }
        if self.schemes.is_empty() {
            diags.push(Diagnostic::new("schemes", "must not be empty"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.schemes.iter().find(|s| !seen.insert(**s)) {
            diags.push(Diagnostic::new(
                "schemes",
                format!("duplicate scheme {dup}"),
            ));
        }
        let swept = self.sweep_variable.name();
        let swept_present = match self.sweep_variable {
            SweepVariable::Alpha => self.parameters.alpha.is_some(),
            SweepVariable::CacheFraction => self.parameters.cache_fraction.is_some(),
        };
        if swept_present {
            diags.push(Diagnostic::new(
                format!("parameters.{swept}"),
                "is the sweep variable and must not be fixed",
            ));
        }

        // Every (value, scheme) combination must satisfy the run invariants.
        let mut reported = HashSet::new();
        for &value in &self.sweep_values {
            for &scheme in &self.schemes {
                let config = self.config(value, scheme, 0);
                if let Err(issues) = config.validate() {
                    for issue in issues {
                        let field = if issue.field == swept {
                            "sweep_values".to_string()
                        } else {
                            format!("parameters.{}", issue.field)
                        };
                        let message = format!(
                            "run invariant violated for {swept} = {value}, scheme {scheme}: {}",
                            issue.message
                        );
                        if reported.insert((field.clone(), issue.message.clone(), scheme)) {
                            diags.push(Diagnostic::new(field, message));
                        }
                    }
                }
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }

    /// Configuration of one run.
    pub fn config(&self, value: f64, scheme: Scheme, seed: u64) -> SimConfig {
        let defaults = SimConfig::default();
        let p = &self.parameters;
        let (alpha, cache_fraction) = match self.sweep_variable {
            SweepVariable::Alpha => (value, p.cache_fraction.unwrap_or(defaults.cache_fraction)),
            SweepVariable::CacheFraction => (p.alpha.unwrap_or(defaults.alpha), value),
        };
        SimConfig {
            scheme,
            requests_per_epoch: p.requests_per_epoch,
            epochs: p.epochs,
            warmup_epochs: p.warmup_epochs,
            seed,
            cache_fraction,
            nodes: p.nodes,
            objects: p.objects,
            alpha,
            m_attach: p.m_attach,
            origin_penalty: p.origin_penalty,
            per_node_rate: p.per_node_rate,
            request_mode: p.request_mode,
            smoothing: p.smoothing,
        }
    }

    /// Runs in canonical order: sweep value, then scheme, then seed.
    pub fn runs(&self) -> Vec<(f64, Scheme, u64)> {
        let mut schemes = self.schemes.clone();
        schemes.sort_unstable();
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        let mut runs = Vec::new();
        for &value in &self.sweep_values {
            for &scheme in &schemes {
                for &seed in &seeds {
                    runs.push((value, scheme, seed));
                }
            }
        }
        runs
    }

    /// Small sweep used by the `demo` command.
    pub fn demo() -> Self {
        Self {
            sweep_variable: SweepVariable::CacheFraction,
            sweep_values: vec![0.02, 0.06, 0.1],
            schemes: Scheme::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            output_path: PathBuf::from("demo-output"),
            parameters: Parameters {
                nodes: 24,
                objects: 50,
                alpha: Some(0.8),
                cache_fraction: None,
                m_attach: 2,
                origin_penalty: 3,
                per_node_rate: 1.0,
                requests_per_epoch: 3000,
                epochs: 6,
                warmup_epochs: 1,
                request_mode: RequestMode::Iid,
                smoothing: SimConfig::default().smoothing,
            },
        }
    }
}

/// Checks a spec file, reporting every problem as a diagnostic. Unreadable
/// files become a diagnostic too.
pub fn validate_file(path: &Path) -> Vec<Diagnostic> {
    match fs::read_to_string(path) {
        Ok(text) => ExperimentSpec::parse(&text).err().unwrap_or_default(),
        Err(e) => vec![Diagnostic::new("spec", format!("{}: {e}", path.display()))],
    }
}

fn field_from_toml_error(message: &str) -> String {
    // serde messages name fields in backticks, e.g. "missing field `seeds`"
    message
        .split('`')
        .nth(1)
        .filter(|s| !s.is_empty() && !s.contains(' '))
        .unwrap_or("spec")
        .to_string()
}

/// One row of the per-run CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub avg_hops: f64,
    pub hit_ratio: f64,
    pub total_requests: u64,
}

impl RunRow {
    pub fn from_report(sweep_value: f64, report: &MetricsReport) -> Self {
        Self {
            sweep_value,
            scheme: report.scheme,
            seed: report.seed,
            avg_hops: report.avg_hops,
            hit_ratio: report.hit_ratio,
            total_requests: report.total_requests,
        }
    }
}

/// One row of the summary CSV: mean and sample standard deviation over
/// seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub avg_hops_mean: f64,
    pub avg_hops_std: f64,
    pub hit_ratio_mean: f64,
    pub runs: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Aggregates consecutive rows sharing `(sweep_value, scheme)`.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    rows.chunk_by(|a, b| a.sweep_value == b.sweep_value && a.scheme == b.scheme)
        .map(|group| {
            let hops: Vec<f64> = group.iter().map(|r| r.avg_hops).collect();
            let hits: Vec<f64> = group.iter().map(|r| r.hit_ratio).collect();
            SummaryRow {
                sweep_value: group[0].sweep_value,
                scheme: group[0].scheme,
                avg_hops_mean: mean(&hops),
                avg_hops_std: sample_std(&hops),
                hit_ratio_mean: mean(&hits),
                runs: group.len(),
            }
        })
        .collect()
}

pub fn write_runs_csv<W: Write>(rows: &[RunRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(RUNS_CSV_HEADER)?;
    for r in rows {
        writer.write_record([
            r.sweep_value.to_string(),
            r.scheme.to_string(),
            r.seed.to_string(),
            r.avg_hops.to_string(),
            r.hit_ratio.to_string(),
            r.total_requests.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SUMMARY_CSV_HEADER)?;
    for r in rows {
        writer.write_record([
            r.sweep_value.to_string(),
            r.scheme.to_string(),
            r.avg_hops_mean.to_string(),
            r.avg_hops_std.to_string(),
            r.hit_ratio_mean.to_string(),
            r.runs.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn parse_scheme(s: &str) -> Option<Scheme> {
    Scheme::ALL.into_iter().find(|scheme| scheme.name() == s)
}

/// Reads a per-run CSV back, e.g. to recompute a summary offline.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>, ExperimentError> {
    let csv_err = |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |message: String| ExperimentError::Row {
            path: path.to_path_buf(),
            row: idx + 1,
            message,
        };
        if record.len() != RUNS_CSV_HEADER.len() {
            return Err(bad(format!("expected {} columns", RUNS_CSV_HEADER.len())));
        }
        let float = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("{}: not a number", RUNS_CSV_HEADER[i])))
        };
        let int = |i: usize| {
            record[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("{}: not an integer", RUNS_CSV_HEADER[i])))
        };
        rows.push(RunRow {
            sweep_value: float(0)?,
            scheme: parse_scheme(&record[1])
                .ok_or_else(|| bad(format!("unknown scheme {:?}", &record[1])))?,
            seed: int(2)?,
            avg_hops: float(3)?,
            hit_ratio: float(4)?,
            total_requests: int(5)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` lets rayon decide.
    pub jobs: Option<usize>,
    pub output_override: Option<PathBuf>,
    pub seed_override: Option<Vec<u64>>,
}

/// A run that returned an error.
#[derive(Debug)]
pub struct RunFailure {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub error: SimError,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every (sweep value, scheme, seed) combination, possibly in
/// parallel, and writes `runs.csv`, `summary.csv`, `epochs.csv` and
/// `decisions.jsonl` under the output directory in canonical order.
pub fn run_experiment(
    spec: &ExperimentSpec,
    options: &RunOptions,
) -> Result<ExperimentOutcome, ExperimentError> {
    let mut spec = spec.clone();
    if let Some(seeds) = &options.seed_override {
        spec.seeds = seeds.clone();
    }
    spec.validate().map_err(ExperimentError::Spec)?;
    let output_dir = options
        .output_override
        .clone()
        .unwrap_or_else(|| spec.output_path.clone());

    let plan = spec.runs();
    let execute = || -> Vec<Result<MetricsReport, SimError>> {
        plan.par_iter()
            .map(|&(value, scheme, seed)| simnet::run_simulation(&spec.config(value, scheme, seed)))
            .collect()
    };
    let results = match options.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .expect("thread pool")
            .install(execute),
        None => execute(),
    };

    let mut runs = Vec::new();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (&(value, scheme, seed), result) in plan.iter().zip(results) {
        match result {
            Ok(report) => {
                runs.push(RunRow::from_report(value, &report));
                reports.push(report);
            }
            Err(error) => failures.push(RunFailure {
                sweep_value: value,
                scheme,
                seed,
                error,
            }),
        }
    }
    let summary = summarize(&runs);

    write_outputs(&output_dir, &spec, &runs, &summary, &reports)?;
    Ok(ExperimentOutcome {
        output_dir,
        runs,
        summary,
        reports,
        failures,
    })
}

#[derive(Serialize)]
struct DecisionRow<'a> {
    sweep_value: f64,
    scheme: Scheme,
    seed: u64,
    epoch_index: u32,
    estimated_cost: f64,
    placement_digest: &'a str,
}

fn write_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    runs: &[RunRow],
    summary: &[SummaryRow],
    reports: &[MetricsReport],
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let open = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|source| ExperimentError::Io { path, source })
    };
    let csv_err = |name: &str| {
        let path = dir.join(name);
        move |source| ExperimentError::Csv { path, source }
    };

    write_runs_csv(runs, open("runs.csv")?).map_err(csv_err("runs.csv"))?;
    write_summary_csv(summary, open("summary.csv")?).map_err(csv_err("summary.csv"))?;
    simnet::write_epochs_csv(reports, open("epochs.csv")?).map_err(|e| match e {
        SimError::Csv(source) => csv_err("epochs.csv")(source),
        other => ExperimentError::Io {
            path: dir.join("epochs.csv"),
            source: std::io::Error::other(other.to_string()),
        },
    })?;

    let path = dir.join("decisions.jsonl");
    let io_err = |source| ExperimentError::Io {
        path: path.clone(),
        source,
    };
    let mut out = open("decisions.jsonl")?;
    for (row, report) in runs.iter().zip(reports) {
        for d in &report.decisions {
            let digest = d.placement_digest();
            let line = DecisionRow {
                sweep_value: row.sweep_value,
                scheme: report.scheme,
                seed: report.seed,
                epoch_index: d.epoch_index,
                estimated_cost: d.estimated_cost,
                placement_digest: &digest,
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| io_err(e.into()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;

    let path = dir.join("spec.toml");
    fs::write(&path, spec.to_toml()).map_err(|source| ExperimentError::Io { path, source })?;
    Ok(())
}
