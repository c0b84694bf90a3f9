//! The `moment-solver` command line.
//!
//! Every command that takes `--out` writes a run directory with a `manifest.json`
//! recording the command, the effective configuration, input hashes, seed and outputs.
//! Exit codes: 0 success, 1 invalid input or failure, 2 solver did not converge,
//! 3 some check failed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cells;
use crate::diagnostics::{self, CheckResult, LedgerRow, Suite};
use crate::forward::{self, AnalyticPotential, MomentMeasureEstimate};
use crate::io;
use crate::measures;
use crate::quadrature::{McOptions, QuadratureMode};
use crate::solver::{self, Init, SolverConfig};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const THREADS_ENV: &str = "MOMENT_SOLVER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "moment-solver", version, about = "Moment measures of convex functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat TOML configuration; see `RunConfig` for keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Solver gradient tolerance, or validation tolerance for `validate`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the potential whose moment measure is the given measure.
    Solve {
        #[arg(long)]
        measure: PathBuf,
    },
    /// Push forward a potential (file or built-in case) under its gradient.
    Forward {
        #[arg(long, conflicts_with = "case", required_unless_present = "case")]
        potential: Option<PathBuf>,
        /// Built-in case: gaussian, cube, sphere, simplex.
        #[arg(long)]
        case: Option<String>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Measure to compare the push-forward weights against.
        #[arg(long)]
        measure: Option<PathBuf>,
    },
    /// Check the necessary conditions on a measure.
    Validate {
        #[arg(long)]
        measure: PathBuf,
    },
    /// Sample a gallery case and compare with its declared statistics.
    Gallery {
        /// One of gaussian, cube, sphere, simplex, parallelepiped; all default cases if absent.
        #[arg(long)]
        case: Option<String>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Run an inequality sweep (`all` runs every suite).
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Emit plot data and a summary for a run directory.
    Report { run_dir: PathBuf },
}

/// Keys accepted in `--config` files. Missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gradient_tol: f64,
    pub max_iters: usize,
    pub backtrack: f64,
    pub sufficient_increase: f64,
    pub memory: usize,
    /// `exact` or `monte-carlo`.
    pub quadrature: String,
    pub samples: usize,
    pub seed: u64,
    /// `zero` or `random`.
    pub init: String,
    pub init_scale: f64,
    pub validation_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            gradient_tol: s.gradient_tol,
            max_iters: s.max_iters,
            backtrack: s.backtrack,
            sufficient_increase: s.sufficient_increase,
            memory: s.memory,
            quadrature: "exact".into(),
            samples: 1_000_000,
            seed: 0,
            init: "zero".into(),
            init_scale: 1.0,
            validation_tol: measures::DEFAULT_TOL,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    fn apply(&mut self, c: &Common, tol_is_validation: bool) {
        if let Some(s) = c.seed {
            self.seed = s;
        }
        if let Some(n) = c.samples {
            self.samples = n;
        }
        if let Some(t) = c.tol {
            if tol_is_validation {
                self.validation_tol = t;
            } else {
                self.gradient_tol = t;
            }
        }
    }

    pub fn mc(&self) -> McOptions {
        McOptions::new(self.samples, self.seed)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mode = match self.quadrature.as_str() {
            "exact" => QuadratureMode::Exact,
            "monte-carlo" => QuadratureMode::MonteCarlo(self.mc()),
            other => {
                return Err(Error::Config(format!(
                    "quadrature must be exact or monte-carlo, got '{other}'"
                )))
            }
        };
        let init = match self.init.as_str() {
            "zero" => Init::Zero,
            "random" => Init::Random {
                scale: self.init_scale,
                seed: self.seed,
            },
            other => return Err(Error::Config(format!("init must be zero or random, got '{other}'"))),
        };
        Ok(SolverConfig {
            gradient_tol: self.gradient_tol,
            max_iters: self.max_iters,
            backtrack: self.backtrack,
            sufficient_increase: self.sufficient_increase,
            memory: self.memory,
            mode,
            init,
        })
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: RunConfig,
    /// Input path to lowercase hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_secs: f64,
    pub outputs: Vec<String>,
}

struct RunDir {
    path: Option<PathBuf>,
    outputs: Vec<String>,
}

impl RunDir {
    fn new(path: Option<PathBuf>) -> Result<Self> {
        if let Some(p) = &path {
            std::fs::create_dir_all(p)?;
        }
        Ok(Self {
            path,
            outputs: Vec::new(),
        })
    }

    /// Path for `name` when a run directory was requested.
    fn file(&mut self, name: &str) -> Option<PathBuf> {
        let p = self.path.as_ref()?.join(name);
        self.outputs.push(name.into());
        Some(p)
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.common.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let printable: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, printable) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn execute(cli: &Cli, arguments: Vec<String>) -> Result<i32> {
    let started = Instant::now();
    let mut config = RunConfig::load(cli.common.config.as_deref())?;
    config.apply(&cli.common, matches!(cli.command, Command::Validate { .. }));
    let mut dir = RunDir::new(cli.common.out.clone())?;
    let mut inputs = BTreeMap::new();
    let (name, code) = match &cli.command {
        Command::Solve { measure } => {
            inputs.insert(measure.display().to_string(), io::sha256_file(measure)?);
            ("solve", cmd_solve(measure, &config, &mut dir)?)
        }
        Command::Forward {
            potential,
            case,
            dim,
            measure,
        } => {
            for p in potential.iter().chain(measure) {
                inputs.insert(p.display().to_string(), io::sha256_file(p)?);
            }
            (
                "forward",
                cmd_forward(
                    potential.as_deref(),
                    case.as_deref(),
                    *dim,
                    measure.as_deref(),
                    &config,
                    &mut dir,
                )?,
            )
        }
        Command::Validate { measure } => {
            inputs.insert(measure.display().to_string(), io::sha256_file(measure)?);
            ("validate", cmd_validate(measure, &config, &mut dir)?)
        }
        Command::Gallery { case, dim } => ("gallery", cmd_gallery(case.as_deref(), *dim, &config, &mut dir)?),
        Command::Check { suite, seeds } => ("check", cmd_check(suite, *seeds, &config, &mut dir)?),
        Command::Report { run_dir } => return cmd_report(run_dir),
    };
    if let Some(path) = dir.file("manifest.json") {
        let mut outputs = dir.outputs.clone();
        outputs.pop();
        let manifest = RunManifest {
            command: name.into(),
            arguments,
            seed: config.seed,
            config,
            inputs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
            outputs,
        };
        io::write_json(&path, &manifest)?;
    }
    Ok(code)
}

fn cmd_solve(measure: &Path, config: &RunConfig, dir: &mut RunDir) -> Result<i32> {
    let mu = io::read_measure(measure)?;
    let report = measures::validate(&mu, config.validation_tol)?;
    if let Some(why) = report.failure() {
        return Err(Error::Precondition(format!("measure fails {why}")));
    }
    let (p, rep) = solver::solve(&mu, &config.solver_config()?)?;
    println!(
        "{} after {} iterations: max |m_i/Z - w_i| = {:.3e}",
        if rep.converged { "converged" } else { "not converged" },
        rep.iterations,
        rep.final_gradient_norm
    );
    if let Some(path) = dir.file("potential.json") {
        io::write_potential(&path, &p)?;
    }
    if let Some(path) = dir.file("report.json") {
        io::write_json(&path, &rep)?;
    }
    if let Some(path) = dir.file("trace.csv") {
        io::write_trace_csv(&path, &rep)?;
    }
    if p.dim() == 2 {
        if let Some(path) = dir.file("cells.csv") {
            io::write_cells_csv(&path, &cells::build_cells(&p)?)?;
        }
    }
    Ok(if rep.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn builtin(case: &str, dim: usize) -> Result<AnalyticPotential> {
    match case {
        "gaussian" => Ok(AnalyticPotential::gaussian(dim)),
        "cube" => Ok(AnalyticPotential::cube(dim)),
        "sphere" => Ok(AnalyticPotential::sphere(dim)),
        "simplex" => AnalyticPotential::simplex(dim),
        other => Err(Error::InvalidInput(format!("unknown built-in case '{other}'"))),
    }
}

#[derive(Serialize)]
struct ForwardSummary {
    conditions: measures::ValidationReport,
    total_mass: f64,
    total_mass_error: f64,
    barycenter: Vec<f64>,
    barycenter_error: Vec<f64>,
    effective_sample_size: f64,
    exact: bool,
    /// `max_i |weight_i − w_i|` against `--measure`, by atom.
    max_weight_deviation: Option<f64>,
}

fn cmd_forward(
    potential: Option<&Path>,
    case: Option<&str>,
    dim: usize,
    measure: Option<&Path>,
    config: &RunConfig,
    dir: &mut RunDir,
) -> Result<i32> {
    let estimate: MomentMeasureEstimate = match (potential, case) {
        (Some(path), _) => forward::moment_measure_polyhedral(&io::read_potential(path)?, &config.mc())?,
        (None, Some(c)) => forward::moment_measure_sampled(&builtin(c, dim)?, &config.mc())?,
        (None, None) => return Err(Error::InvalidInput("give --potential or --case".into())),
    };
    let max_weight_deviation = match measure {
        None => None,
        Some(path) => {
            let mu = io::read_measure(path)?.normalized();
            let atoms = estimate
                .atom_indices
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("--measure needs a polyhedral --potential".into()))?;
            let mut by_atom = vec![0.0; mu.len()];
            for (k, &a) in atoms.iter().enumerate() {
                if a >= mu.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mu.len(),
                        got: a + 1,
                    });
                }
                by_atom[a] += estimate.weights[k];
            }
            Some(
                by_atom
                    .iter()
                    .zip(mu.weights())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            )
        }
    };
    let summary = ForwardSummary {
        conditions: forward::necessary_conditions_report(&estimate),
        total_mass: estimate.total_mass,
        total_mass_error: estimate.total_mass_error,
        barycenter: estimate.barycenter.clone(),
        barycenter_error: estimate.barycenter_error.clone(),
        effective_sample_size: estimate.effective_sample_size(),
        exact: estimate.exact,
        max_weight_deviation,
    };
    println!("{} points, barycenter {:?}", estimate.len(), estimate.barycenter);
    if let Some(d) = max_weight_deviation {
        println!("max weight deviation from measure: {d:.3e}");
    }
    if let Some(path) = dir.file("moment_measure.csv") {
        io::write_estimate_csv(&path, &estimate)?;
    }
    if let Some(path) = dir.file("conditions.json") {
        io::write_json(&path, &summary)?;
    }
    Ok(EXIT_OK)
}

fn cmd_validate(measure: &Path, config: &RunConfig, dir: &mut RunDir) -> Result<i32> {
    let mu = io::read_measure(measure)?;
    let report = measures::validate(&mu, config.validation_tol)?;
    if let Some(path) = dir.file("validation.json") {
        io::write_json(&path, &report)?;
    }
    match report.failure() {
        None => {
            println!("valid: all three conditions hold");
            Ok(EXIT_OK)
        }
        Some(why) => {
            eprintln!("invalid: {why}");
            Ok(EXIT_INVALID)
        }
    }
}

/// Cases run by `gallery` without `--case`.
pub const DEFAULT_GALLERY: [(&str, usize); 4] = [("cube", 2), ("gaussian", 3), ("sphere", 2), ("simplex", 2)];

fn print_checks(results: &[CheckResult]) {
    for r in results {
        println!(
            "{} {:<40} margin {:+.3e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.margin
        );
    }
}

fn cmd_gallery(case: Option<&str>, dim: usize, config: &RunConfig, dir: &mut RunDir) -> Result<i32> {
    let cases: Vec<(&str, usize)> = match case {
        Some(c) => vec![(c, dim)],
        None => DEFAULT_GALLERY.to_vec(),
    };
    let mut results = Vec::new();
    for (c, n) in cases {
        results.extend(diagnostics::gallery_run(c, n, config.samples, config.seed)?);
    }
    print_checks(&results);
    if let Some(path) = dir.file("gallery.csv") {
        io::write_checks_csv(&path, &results)?;
    }
    Ok(if results.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_check(suite: &str, seeds: u64, config: &RunConfig, dir: &mut RunDir) -> Result<i32> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let first = config.seed;
    let mut rows: Vec<LedgerRow> = Vec::new();
    for s in suites {
        let part = diagnostics::sweep(s, first..first + seeds)?;
        let failed = part.iter().filter(|r| !r.pass).count();
        let worst = part
            .iter()
            .map(|r| r.margin)
            .filter(|m| m.is_finite())
            .fold(f64::INFINITY, f64::min);
        println!(
            "{} {:<20} {} rows, {failed} failed, smallest margin {worst:+.3e}",
            if failed == 0 { "PASS" } else { "FAIL" },
            s.name(),
            part.len()
        );
        rows.extend(part);
    }
    if let Some(path) = dir.file("ledger.csv") {
        io::write_ledger_csv(&path, &rows)?;
    }
    Ok(if rows.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_report(run_dir: &Path) -> Result<i32> {
    if !run_dir.is_dir() {
        return Err(Error::InvalidInput(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let manifest: RunManifest = io::read_json(&run_dir.join("manifest.json"))?;
    let mut summary = String::new();
    writeln!(summary, "command: {}", manifest.command).ok();
    writeln!(summary, "arguments: {}", manifest.arguments.join(" ")).ok();
    writeln!(summary, "seed: {}", manifest.seed).ok();
    writeln!(summary, "wall time: {:.3} s", manifest.wall_time_secs).ok();
    match manifest.command.as_str() {
        "solve" => report_solve(run_dir, &mut summary)?,
        "forward" => report_forward(run_dir, &mut summary)?,
        "check" => report_check(run_dir, &mut summary)?,
        _ => {}
    }
    std::fs::write(run_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn report_solve(run_dir: &Path, summary: &mut String) -> Result<()> {
    let mut reader = csv::Reader::from_path(run_dir.join("trace.csv"))?;
    let mut w = csv::Writer::from_path(run_dir.join("plot_objective.csv"))?;
    w.write_record(["iteration", "objective", "gradient_norm", "increase"])?;
    let mut last: Option<f64> = None;
    let mut monotone = true;
    let mut rows = 0;
    for record in reader.records() {
        let r = record?;
        let obj: f64 = r.get(1).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN);
        let inc = last.map_or(0.0, |l| obj - l);
        monotone &= inc >= -1e-12 * obj.abs().max(1.0);
        last = Some(obj);
        rows += 1;
        w.write_record([
            r.get(0).unwrap_or(""),
            r.get(1).unwrap_or(""),
            r.get(2).unwrap_or(""),
            &inc.to_string(),
        ])?;
    }
    w.flush()?;
    writeln!(summary, "iterations: {}", rows.max(1) - 1).ok();
    writeln!(summary, "final objective: {}", last.unwrap_or(f64::NAN)).ok();
    writeln!(summary, "objective monotone: {monotone}").ok();
    let cells_path = run_dir.join("cells.csv");
    if cells_path.exists() {
        let cells = io::read_cells_csv(&cells_path)?;
        let extent = cells
            .iter()
            .flat_map(|c| c.vertices.iter())
            .fold(1.0_f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
        let mut w = csv::Writer::from_path(run_dir.join("plot_cells.csv"))?;
        w.write_record(["atom_index", "order", "x", "y"])?;
        for c in &cells {
            // unbounded cells are closed off by their rays, cut at twice the vertex extent
            let mut ring = c.vertices.clone();
            if !c.bounded && c.rays.len() == 2 {
                let (first, last) = (ring.first().copied(), ring.last().copied());
                if let (Some(f), Some(l)) = (first, last) {
                    let len = 2.0 * extent;
                    ring.push([l[0] + len * c.rays[1][0], l[1] + len * c.rays[1][1]]);
                    ring.insert(0, [f[0] + len * c.rays[0][0], f[1] + len * c.rays[0][1]]);
                }
            }
            for (k, v) in ring.iter().enumerate() {
                w.write_record([
                    c.atom_index.to_string(),
                    k.to_string(),
                    v[0].to_string(),
                    v[1].to_string(),
                ])?;
            }
        }
        w.flush()?;
        writeln!(summary, "cells: {}", cells.len()).ok();
    }
    Ok(())
}

fn report_forward(run_dir: &Path, summary: &mut String) -> Result<()> {
    let (dim, points, weights) = io::read_estimate_csv(&run_dir.join("moment_measure.csv"))?;
    let mut w = csv::Writer::from_path(run_dir.join("plot_scatter.csv"))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|k| format!("y{k}")));
    header.push("weight".into());
    w.write_record(&header)?;
    let total: f64 = weights.iter().sum();
    let mut bary = vec![0.0; dim];
    for (k, wk) in weights.iter().enumerate() {
        let y = &points[k * dim..(k + 1) * dim];
        for c in 0..dim {
            bary[c] += wk * y[c] / total;
        }
        let mut row = vec!["point".to_string()];
        row.extend(y.iter().map(f64::to_string));
        row.push(wk.to_string());
        w.write_record(&row)?;
    }
    let mut row = vec!["barycenter".to_string()];
    row.extend(bary.iter().map(f64::to_string));
    row.push(total.to_string());
    w.write_record(&row)?;
    w.flush()?;
    writeln!(summary, "points: {}", weights.len()).ok();
    writeln!(summary, "barycenter: {bary:?}").ok();
    Ok(())
}

fn report_check(run_dir: &Path, summary: &mut String) -> Result<()> {
    let rows = io::read_ledger_csv(&run_dir.join("ledger.csv"))?;
    let mut by_name: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for r in &rows {
        let e = by_name.entry(r.name.as_str()).or_insert((0, 0, f64::INFINITY));
        e.0 += 1;
        e.1 += usize::from(!r.pass);
        if r.margin.is_finite() {
            e.2 = e.2.min(r.margin);
        }
    }
    let mut w = csv::Writer::from_path(run_dir.join("plot_margins.csv"))?;
    w.write_record(["name", "rows", "failed", "smallest_margin"])?;
    for (name, (n, failed, worst)) in &by_name {
        w.write_record([name.to_string(), n.to_string(), failed.to_string(), worst.to_string()])?;
        writeln!(summary, "{name}: {n} rows, {failed} failed, smallest margin {worst:e}").ok();
    }
    w.flush()?;
    Ok(())
}
