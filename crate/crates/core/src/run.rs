//! Run configuration, command dispatch and output writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eigen::eigenpairs;
use crate::error::{FibrateError, Result};
use crate::fiber::CriticalPointRecord;
use crate::grid::{Field, Grid, GridSpec};
use crate::io::{format_f64, load_field, persist_field, to_json_string};
use crate::levels::{mu_sequence, MinMaxEstimate, MAX_LEVEL};
use crate::model::{ClassTag, ModelSpec};
use crate::optimizer::{laplacian_modes, multistart, optimize_lambda, SolveOptions};
use crate::problems::{build_problem, semilinear_lower_bound, ProblemParams};
use crate::verify::{
    bound_check, divergence_trend, fiber_scan, invariant_suite, scan_sign_changes, CheckReport, ScanRow,
};

const BOUND_SAMPLES: usize = 1000;
const DIVERGENCE_MODES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    MuSeq,
    Scan,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = FibrateError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(FibrateError::Config(format!("unknown format '{other}' (expected json or csv)"))),
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json]
}
fn default_output() -> PathBuf {
    PathBuf::from("fibrate-out")
}
fn default_levels() -> usize {
    4
}
fn default_starts() -> usize {
    8
}
fn default_samples() -> usize {
    100
}

fn default_t_min() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    1e3
}
fn default_points() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Field to scan; the first Laplacian eigenfunction when absent.
    #[serde(default)]
    pub field: Option<PathBuf>,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams { t_min: default_t_min(), t_max: default_t_max(), points: default_points(), field: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemParams,
    pub grid: GridSpec,
    /// Taken from the command line when absent.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub options: SolveOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Number of levels for `mu-seq`.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Multistart count for `solve`.
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Start field for `solve`; replaces multistart when given.
    #[serde(default)]
    pub initial: Option<PathBuf>,
    /// Random samples for `verify`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub scan: ScanParams,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FibrateError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_none() {
            return Err(FibrateError::Config("no command given".into()));
        }
        self.options.validate()?;
        if self.formats.is_empty() {
            return Err(FibrateError::Config("formats must not be empty".into()));
        }
        if self.levels == 0 || self.levels > MAX_LEVEL {
            return Err(FibrateError::BadLevel(self.levels));
        }
        if self.starts == 0 || self.samples == 0 {
            return Err(FibrateError::Config("starts and samples must be positive".into()));
        }
        let s = &self.scan;
        if !(s.t_min > 0.0 && s.t_max > s.t_min && s.points >= 2) {
            return Err(FibrateError::Config(format!(
                "scan needs 0 < t_min < t_max and points ≥ 2, got [{}, {}], {}",
                s.t_min, s.t_max, s.points
            )));
        }
        Grid::build(&self.grid)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub wall_time_seconds: f64,
}

/// One row of `records.csv`.
#[derive(Debug, Clone)]
pub struct RecordRow {
    pub n: usize,
    pub mu: f64,
    pub bound: Option<String>,
    pub record: Option<CriticalPointRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub meta: RunMeta,
    pub records: Vec<CriticalPointRecord>,
    pub estimates: Vec<MinMaxEstimate>,
    pub reports: Vec<CheckReport>,
    #[serde(skip)]
    pub rows: Vec<RecordRow>,
    #[serde(skip)]
    pub scan: Vec<ScanRow>,
    #[serde(skip)]
    pub fields: Vec<(String, Field)>,
    #[serde(skip)]
    pub grid: Option<Arc<Grid>>,
}

impl ResultBundle {
    fn empty(meta: RunMeta) -> Self {
        ResultBundle {
            meta,
            records: Vec::new(),
            estimates: Vec::new(),
            reports: Vec::new(),
            rows: Vec::new(),
            scan: Vec::new(),
            fields: Vec::new(),
            grid: None,
        }
    }

    pub fn all_checks_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

/// Runs the configured command. Relative paths in the configuration resolve
/// against `base`.
pub fn run(config: &RunConfig, base: &Path) -> Result<ResultBundle> {
    config.validate()?;
    let command = config.command.expect("validated");
    let start = Instant::now();
    let grid = Arc::new(Grid::build(&config.grid)?);
    let model = build_problem(&config.problem, grid.clone(), base)?;
    let opts = &config.options;
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed: opts.seed,
        config: config.clone(),
        wall_time_seconds: 0.0,
    };
    let mut bundle = ResultBundle::empty(meta);
    bundle.grid = Some(grid.clone());
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    match command {
        Command::Solve => {
            let solutions = match &config.initial {
                Some(p) => {
                    let init = load_field(&resolve(p), &grid)?;
                    vec![optimize_lambda(&model, &init, opts)?]
                }
                None => multistart(&model, config.starts, opts)?,
            };
            let solutions: Vec<_> = solutions.into_iter().filter(|s| s.record.converged).collect();
            if solutions.is_empty() {
                return Err(FibrateError::ConvergenceFailure("no start converged".into()));
            }
            for (k, s) in solutions.into_iter().enumerate() {
                bundle.rows.push(RecordRow { n: k + 1, mu: s.record.mu, bound: None, record: Some(s.record.clone()) });
                bundle.fields.push((format!("solution_{}.field", k + 1), s.record.v.clone()));
                bundle.records.push(s.record);
            }
        }
        Command::MuSeq => {
            for (est, rec) in mu_sequence(&model, config.levels, opts)? {
                bundle.rows.push(RecordRow {
                    n: est.n,
                    mu: est.value,
                    bound: Some(est.bound.as_str().into()),
                    record: rec.clone(),
                });
                if let Some(r) = rec {
                    bundle.fields.push((format!("level_{}.field", est.n), r.v.clone()));
                    bundle.records.push(r);
                }
                bundle.estimates.push(est);
            }
        }
        Command::Scan => {
            let u = match &config.scan.field {
                Some(p) => load_field(&resolve(p), &grid)?,
                None => laplacian_modes(&grid, 1)?.remove(0),
            };
            let s = &config.scan;
            bundle.scan = fiber_scan(&model, &u, s.t_min, s.t_max, s.points)?;
            let changes = scan_sign_changes(&bundle.scan);
            bundle.reports.push(CheckReport {
                name: "scan_sign_changes".into(),
                passed: changes == 1,
                worst_error: (changes as f64 - 1.0).abs(),
                tolerance: 0.0,
                sample_count: 1,
                details: vec![format!("{changes} sign changes of psi' on [{}, {}]", s.t_min, s.t_max)],
            });
        }
        Command::Verify => {
            bundle.reports = verification_reports(&model, config)?;
        }
    }
    bundle.meta.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(bundle)
}

fn verification_reports(model: &ModelSpec, config: &RunConfig) -> Result<Vec<CheckReport>> {
    let seed = config.options.seed;
    let mut reports = invariant_suite(model, config.samples, seed)?;
    match (&config.problem, model.class()) {
        (ProblemParams::Semilinear { q, r }, _) => {
            let lambda1 = eigenpairs(model.grid(), 1)?[0].value;
            let lower = semilinear_lower_bound(*q, *r, lambda1);
            reports.push(bound_check(model, Some(lower), BOUND_SAMPLES, seed)?);
        }
        (_, ClassTag::ClassOne) => reports.push(bound_check(model, None, BOUND_SAMPLES, seed)?),
        _ => {}
    }
    reports.push(divergence_trend(model, DIVERGENCE_MODES)?);
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(reports)
}

fn csv_error(e: csv::Error) -> FibrateError {
    FibrateError::Io(std::io::Error::other(e))
}

fn write_records_csv(rows: &[RecordRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "n",
        "mu",
        "bound",
        "energy_residual",
        "gradient_residual",
        "nehari_class",
        "iterations",
        "converged",
    ])
    .map_err(csv_error)?;
    for row in rows {
        let mut cells = vec![row.n.to_string(), format_f64(row.mu), row.bound.clone().unwrap_or_default()];
        match &row.record {
            Some(r) => cells.extend([
                format_f64(r.energy_residual),
                format_f64(r.gradient_residual),
                r.nehari_class.as_str().to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]),
            None => cells.extend(["", "", "", "", "false"].map(String::from)),
        }
        w.write_record(&cells).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_scan_csv(rows: &[ScanRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["t", "psi", "psi_prime", "psi_second"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([r.t, r.psi, r.psi_prime, r.psi_second].map(format_f64))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the bundle into `dir` and returns the files written.
pub fn write_outputs(bundle: &ResultBundle, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&Format::Json) {
        let p = dir.join("results.json");
        fs::write(&p, to_json_string(bundle)?)?;
        written.push(p);
    }
    if formats.contains(&Format::Csv) {
        match bundle.meta.command {
            Command::Scan => {
                let p = dir.join("scan.csv");
                write_scan_csv(&bundle.scan, &p)?;
                written.push(p);
            }
            Command::Solve | Command::MuSeq => {
                let p = dir.join("records.csv");
                write_records_csv(&bundle.rows, &p)?;
                written.push(p);
            }
            Command::Verify => {}
        }
    }
    if let Some(grid) = &bundle.grid {
        for (name, field) in &bundle.fields {
            let p = dir.join(name);
            persist_field(grid, field, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Process exit code for a run outcome.
pub fn exit_code(result: &Result<ResultBundle>) -> i32 {
    match result {
        Ok(b) if b.all_checks_passed() => 0,
        Ok(_) => 1,
        Err(FibrateError::ConvergenceFailure(_) | FibrateError::MaxIters(_) | FibrateError::LeftD(_)) => 3,
        Err(FibrateError::Io(_)) => 1,
        Err(_) => 2,
    }
}
