//! Command-line front end: configuration merging, validation, the worker
//! pool and every output file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cascade::{
    domain, iterate_fix_r, locate_saddle_node, locate_tangencies, parse_grid, periodic_orbit_at,
    find_symmetric_periodic_orbits, sweep_homoclinics, CascadeError, CascadeOptions, TangencyEvent, Window,
};
use crate::flow::{integrate, IntegratorOptions};
use crate::homoclinics::{census, DetectionTolerances};
use crate::io::{fmt17, to_json, write_file};
use crate::local_manifold::{choose_radius_from, compute_coefficients, RADIUS_GRID_START, DEFAULT_ORDER, DEFAULT_SERIES_TOL};
use crate::section_geometry::{
    compute_bank, v_line_crossings, write_traces_csv, Manifold, RefineOptions, TraceCurve,
};
use crate::selftest;
use crate::system::Params;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<CascadeError> for CliError {
    fn from(e: CascadeError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "bifocus", version, about = "Tentacles of the bifocal equilibrium: manifolds, traces, homoclinic orbits and their bifurcations")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: bifocus-out/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available processors).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Series order.
    #[arg(long = "M", global = true)]
    pub order: Option<usize>,
    /// Error target for the series radius.
    #[arg(long, global = true)]
    pub series_tol: Option<f64>,
    /// Largest projected gap between neighbouring trace samples.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Initial seeds per branch.
    #[arg(long, global = true)]
    pub n0: Option<usize>,
    /// Seed cap per branch.
    #[arg(long, global = true)]
    pub max_seeds: Option<usize>,
    /// Width below which a parameter bracket is accepted.
    #[arg(long, global = true)]
    pub param_tol: Option<f64>,
    /// More detail on standard error (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Series coefficients of the local unstable manifold and its radius.
    Coeffs {
        #[arg(long, allow_hyphen_values = true)]
        eta3: Option<f64>,
    },
    /// Crossings of the unstable manifold with the section.
    Traces {
        #[arg(long, allow_hyphen_values = true)]
        eta3: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Homoclinic census.
    Homoclinics {
        #[arg(long, allow_hyphen_values = true)]
        eta3: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
        /// Skip the asymmetric search.
        #[arg(long)]
        symmetric_only: bool,
    },
    /// Censuses over a grid `lo:hi:step` with continuation chains.
    Sweep {
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Homoclinic tangency of a trace inside a parameter bracket.
    Tangency {
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
        bracket: Option<Vec<f64>>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Iterates of Fix(R) ∩ C3 under the Poincaré map and symmetric
    /// periodic orbits in a window.
    Fixr {
        #[arg(long, allow_hyphen_values = true)]
        eta3: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed_grid: Option<usize>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
        window: Option<Vec<f64>>,
    },
    /// Saddle-node periodic orbit near a parameter value.
    Saddlenode {
        #[arg(long, allow_hyphen_values = true)]
        eta3: Option<f64>,
        #[arg(long)]
        span: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed_grid: Option<usize>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
        window: Option<Vec<f64>>,
    },
    /// Invariant suite at eta3 = -1.73 with a pass/fail table.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Coeffs { .. } => "coeffs",
            Command::Traces { .. } => "traces",
            Command::Homoclinics { .. } => "homoclinics",
            Command::Sweep { .. } => "sweep",
            Command::Tangency { .. } => "tangency",
            Command::Fixr { .. } => "fixr",
            Command::Saddlenode { .. } => "saddlenode",
            Command::Selftest => "selftest",
        }
    }
}

/// Parameter value of the invariant suite.
pub const SELFTEST_ETA3: f64 = -1.73;

/// Every setting of a run after merging file and flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub eta3: Option<f64>,
    pub grid: Option<String>,
    pub bracket: Option<(f64, f64)>,
    #[serde(rename = "M")]
    pub order: usize,
    pub series_tol: f64,
    pub radius_grid_start: f64,
    pub k_max: usize,
    pub k: usize,
    pub n: usize,
    pub seed_grid: usize,
    pub window: (f64, f64),
    pub span: f64,
    pub asymmetric: bool,
    pub param_tol: f64,
    pub track_steps: usize,
    pub trajectory_samples: usize,
    pub refine: RefineOptions,
    pub integrator: IntegratorOptions<f64>,
    pub detection: DetectionTolerances,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = CascadeOptions::default();
        Self {
            eta3: None,
            grid: None,
            bracket: None,
            order: DEFAULT_ORDER,
            series_tol: DEFAULT_SERIES_TOL,
            radius_grid_start: RADIUS_GRID_START,
            k_max: 5,
            k: 10,
            n: 11,
            seed_grid: 512,
            window: (-1.75, -1.67),
            span: 0.02,
            asymmetric: true,
            param_tol: c.param_tol,
            track_steps: c.track_steps,
            trajectory_samples: 2001,
            refine: c.refine,
            integrator: c.integrator,
            detection: c.detection,
            out: None,
            workers: None,
        }
    }
}

fn pair(v: &[f64]) -> (f64, f64) {
    (v[0], v[1])
}

impl RunConfig {
    /// Reads the file (if any) and applies the flags on top of it.
    pub fn resolve(common: &Common, cmd: &Command) -> Result<Self, CliError> {
        let mut c = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        if common.out.is_some() {
            c.out = common.out.clone();
        }
        if common.workers.is_some() {
            c.workers = common.workers;
        }
        set!(c.order, common.order);
        set!(c.series_tol, common.series_tol);
        set!(c.refine.delta, common.delta);
        set!(c.refine.n0, common.n0);
        set!(c.refine.max_seeds, common.max_seeds);
        set!(c.param_tol, common.param_tol);
        match cmd.clone() {
            Command::Coeffs { eta3 } => {
                c.eta3 = eta3.or(c.eta3);
            }
            Command::Traces { eta3, kmax } => {
                c.eta3 = eta3.or(c.eta3);
                set!(c.k_max, kmax);
            }
            Command::Homoclinics { eta3, kmax, symmetric_only } => {
                c.eta3 = eta3.or(c.eta3);
                set!(c.k_max, kmax);
                if symmetric_only {
                    c.asymmetric = false;
                }
            }
            Command::Sweep { grid, kmax } => {
                c.grid = grid.or(c.grid);
                set!(c.k_max, kmax);
            }
            Command::Tangency { bracket, k } => {
                c.bracket = bracket.as_deref().map(pair).or(c.bracket);
                set!(c.k, k);
            }
            Command::Fixr { eta3, n, seed_grid, window } => {
                c.eta3 = eta3.or(c.eta3);
                set!(c.n, n);
                set!(c.seed_grid, seed_grid);
                set!(c.window, window.as_deref().map(pair));
            }
            Command::Saddlenode { eta3, span, n, seed_grid, window } => {
                c.eta3 = eta3.or(c.eta3);
                set!(c.span, span);
                set!(c.n, n);
                set!(c.seed_grid, seed_grid);
                set!(c.window, window.as_deref().map(pair));
            }
            Command::Selftest => {
                c.eta3 = Some(SELFTEST_ETA3);
                c.k_max = 5;
            }
        }
        c.validate(cmd)?;
        Ok(c)
    }

    fn bifocal(name: &str, v: f64) -> Result<f64, CliError> {
        if !v.is_finite() || v <= -2.0 || v >= 2.0 {
            return Err(CliError::Validation(format!(
                "{name} = {v} is outside the bifocal range (-2, 2)"
            )));
        }
        Ok(v)
    }

    pub fn validate(&self, cmd: &Command) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let positive = [
            ("series_tol", self.series_tol),
            ("radius_grid_start", self.radius_grid_start),
            ("param_tol", self.param_tol),
            ("refine.delta", self.refine.delta),
            ("refine.theta_min", self.refine.theta_min),
            ("integrator.abs_tol", self.integrator.abs_tol),
            ("integrator.rel_tol", self.integrator.rel_tol),
            ("integrator.h_max", self.integrator.h_max),
            ("integrator.event_tol", self.integrator.event_tol),
            ("detection.root", self.detection.root),
            ("detection.label", self.detection.label),
            ("detection.closure", self.detection.closure),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.order == 0 || self.order > 200 {
            return bad(format!("M must lie in 1..=200, got {}", self.order));
        }
        if self.refine.n0 < 2 || self.refine.max_seeds < self.refine.n0 {
            return bad("refine needs n0 >= 2 and max_seeds >= n0".into());
        }
        if self.integrator.order < 2 {
            return bad("integrator.order must be at least 2".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.track_steps == 0 {
            return bad("track_steps must be at least 1".into());
        }
        let need_eta = matches!(
            cmd,
            Command::Coeffs { .. } | Command::Traces { .. } | Command::Homoclinics { .. } | Command::Fixr { .. } | Command::Saddlenode { .. }
        );
        if need_eta {
            match self.eta3 {
                Some(v) => {
                    Self::bifocal("eta3", v)?;
                }
                None => return bad("eta3 is required".into()),
            }
        }
        if matches!(cmd, Command::Traces { .. } | Command::Homoclinics { .. } | Command::Sweep { .. }) && !(1..=40).contains(&self.k_max) {
            return bad(format!("kmax must lie in 1..=40, got {}", self.k_max));
        }
        match cmd {
            Command::Sweep { .. } => {
                let Some(g) = &self.grid else {
                    return bad("grid is required (lo:hi:step)".into());
                };
                let grid = parse_grid(g).ok_or_else(|| CliError::Validation(format!("malformed grid {g:?}; expected lo:hi:step with lo <= hi, step > 0")))?;
                for v in grid {
                    Self::bifocal("grid value", v)?;
                }
            }
            Command::Tangency { .. } => {
                let Some((lo, hi)) = self.bracket else {
                    return bad("bracket is required".into());
                };
                Self::bifocal("bracket end", lo)?;
                Self::bifocal("bracket end", hi)?;
                if lo == hi {
                    return bad("bracket ends must differ".into());
                }
                if !(1..=40).contains(&self.k) {
                    return bad(format!("k must lie in 1..=40, got {}", self.k));
                }
            }
            Command::Fixr { .. } | Command::Saddlenode { .. } => {
                if self.window.0 >= self.window.1 || !self.window.0.is_finite() || !self.window.1.is_finite() {
                    return bad(format!("window {:?} must satisfy lo < hi", self.window));
                }
                if self.seed_grid < 2 {
                    return bad("seed_grid must be at least 2".into());
                }
                if self.n > 60 || (matches!(cmd, Command::Saddlenode { .. }) && self.n == 0) {
                    return bad(format!("n = {} out of range", self.n));
                }
                if let Command::Saddlenode { .. } = cmd {
                    if !(self.span.is_finite() && self.span > 0.0) {
                        return bad("span must be positive".into());
                    }
                    let e = self.eta3.unwrap_or(0.0);
                    Self::bifocal("bracket end", e - self.span)?;
                    Self::bifocal("bracket end", e + self.span)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn cascade(&self) -> CascadeOptions {
        CascadeOptions {
            order: self.order,
            series_tol: self.series_tol,
            radius_grid_start: self.radius_grid_start,
            refine: self.refine,
            integrator: self.integrator,
            detection: self.detection,
            param_tol: self.param_tol,
            track_steps: self.track_steps,
            ..CascadeOptions::default()
        }
    }

    fn out_dir(&self, cmd: &Command) -> PathBuf {
        self.out.clone().unwrap_or_else(|| Path::new("bifocus-out").join(cmd.name()))
    }
}

/// Files written by one run, relative to its directory.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_file(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, v: &S) -> Result<(), CliError> {
        self.write(name, to_json(v).as_bytes())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    tolerances: Value,
    workers: usize,
    wall_clock_seconds: f64,
    status: &'a str,
    files: &'a [String],
    summary: Value,
}

fn tolerances(c: &RunConfig) -> Value {
    json!({
        "series_tol": c.series_tol,
        "integrator_abs_tol": c.integrator.abs_tol,
        "integrator_rel_tol": c.integrator.rel_tol,
        "event_tol": c.integrator.event_tol,
        "tangency_threshold": c.integrator.tangency_threshold,
        "refine_delta": c.refine.delta,
        "theta_min": c.refine.theta_min,
        "root": c.detection.root,
        "label": c.detection.label,
        "closure": c.detection.closure,
        "param_tol": c.param_tol,
    })
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.common.verbose);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside its worker pool and writes the manifest.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.common, &cli.command)?;
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    let mut out = Output {
        dir: cfg.out_dir(&cli.command),
        files: Vec::new(),
    };
    let start = Instant::now();
    log::info!("{} with {workers} workers into {}", cli.command.name(), out.dir.display());
    let result = pool.install(|| dispatch(&cli.command, &cfg, &mut out));
    let (status, summary) = match &result {
        Ok(v) => ("ok", v.clone()),
        Err(e) => ("failed", json!({ "error": e.to_string() })),
    };
    if matches!(result, Err(CliError::Validation(_))) {
        return result.map(|_| ());
    }
    let files = out.files.clone();
    out.json(
        "manifest.json",
        &Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: cli.command.name(),
            config: &cfg,
            tolerances: tolerances(&cfg),
            workers,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            status,
            files: &files,
            summary,
        },
    )?;
    result.map(|_| ())
}

fn dispatch(cmd: &Command, c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    match cmd {
        Command::Coeffs { .. } => cmd_coeffs(c, out),
        Command::Traces { .. } => cmd_traces(c, out),
        Command::Homoclinics { .. } => cmd_homoclinics(c, out),
        Command::Sweep { .. } => cmd_sweep(c, out),
        Command::Tangency { .. } => cmd_tangency(c, out),
        Command::Fixr { .. } => cmd_fixr(c, out),
        Command::Saddlenode { .. } => cmd_saddlenode(c, out),
        Command::Selftest => cmd_selftest(c, out),
    }
}

fn eta3_of(c: &RunConfig) -> f64 {
    c.eta3.expect("validated")
}

fn cmd_coeffs(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let eta3 = eta3_of(c);
    let p = Params::bifocal(eta3).map_err(|e| CliError::Validation(e.to_string()))?;
    let coeffs = compute_coefficients(p, c.order).map_err(|e| CliError::Numerical(e.to_string()))?;
    out.json("coefficients.json", &coeffs.to_table())?;
    let r_star = choose_radius_from(&coeffs, c.series_tol, c.radius_grid_start).map_err(|e| CliError::Numerical(e.to_string()))?;
    let err = (0..64)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / 64.0;
            coeffs.evaluate(r_star * th.cos(), r_star * th.sin()).err_estimate
        })
        .fold(0.0, f64::max);
    let report = json!({
        "eta3": eta3,
        "M": c.order,
        "r_star": r_star,
        "series_tol": c.series_tol,
        "radius_grid_start": c.radius_grid_start,
        "max_err_estimate": err,
        "conditioning": coeffs.conditioning(),
    });
    out.json("radius.json", &report)?;
    println!("eta3 = {}  M = {}  r* = {}  max error estimate = {}", fmt17(eta3), c.order, fmt17(r_star), fmt17(err));
    Ok(report)
}

fn trace_summary(traces: &[TraceCurve]) -> Value {
    let mut passages = Vec::new();
    for t in traces {
        if let Some(next) = traces.iter().find(|u| u.k == t.k + 1 && u.branch == t.branch) {
            passages.extend(v_line_crossings(t, next));
        }
    }
    let curves: Vec<Value> = traces
        .iter()
        .map(|t| {
            json!({
                "k": t.k,
                "branch": t.branch.sign_char().to_string(),
                "samples": t.samples.len(),
                "pieces": t.pieces().len(),
                "regions": t.region_pieces(),
                "gaps": t.gaps,
            })
        })
        .collect();
    json!({ "curves": curves, "v_passages": passages })
}

fn cmd_traces(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let o = c.cascade();
    let d = domain(eta3_of(c), &o)?;
    let bank = compute_bank(&d, c.k_max, Manifold::Unstable, &o.refine, &o.integrator);
    let traces = bank.traces();
    let mut all = Vec::new();
    write_traces_csv(&mut all, bank.eta3, &traces).expect("in-memory write");
    out.write("traces.csv", &all)?;
    for k in 1..=c.k_max {
        let ts: Vec<TraceCurve> = traces.iter().filter(|t| t.k == k).cloned().collect();
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, bank.eta3, &ts).expect("in-memory write");
        out.write(&format!("traces_k{k:02}.csv"), &buf)?;
    }
    let mut summary = trace_summary(&traces);
    summary["eta3"] = json!(bank.eta3);
    summary["r_star"] = json!(bank.r_star);
    summary["k_max"] = json!(c.k_max);
    summary["seeds"] = json!(bank.seed_count());
    summary["capped"] = json!(bank.branches.iter().any(|b| b.capped));
    out.json("traces.json", &summary)?;
    for t in &traces {
        println!("k = {:2}  branch {}  samples {:6}  pieces {}", t.k, t.branch.sign_char(), t.samples.len(), t.pieces().len());
    }
    Ok(json!({ "curves": traces.len(), "seeds": bank.seed_count() }))
}

fn cmd_homoclinics(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let o = c.cascade();
    let d = domain(eta3_of(c), &o)?;
    let bank = compute_bank(&d, c.k_max, Manifold::Unstable, &o.refine, &o.integrator);
    let (cen, _) = census(&d, &bank, &o.detection, &o.integrator, c.asymmetric);
    out.json("census.json", &cen)?;
    let p = d.params();
    for (i, r) in cen.orbits.iter().enumerate() {
        let Some(t) = r.check.map(|k| k.transit_time).filter(|t| t.is_finite()) else {
            continue;
        };
        let s0 = d.sigma(r.theta).map_err(|e| CliError::Numerical(e.to_string()))?;
        let traj = integrate(s0, p, t, &o.integrator).map_err(|e| CliError::Numerical(e.to_string()))?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, c.trajectory_samples).expect("in-memory write");
        out.write(&format!("orbit_{i:02}.csv"), &buf)?;
    }
    println!("eta3 = {}  k_max = {}  complete = {}", fmt17(cen.eta3), cen.k_max, cen.complete);
    for r in &cen.orbits {
        println!(
            "order {:2}  {}  theta {}  {}",
            r.order,
            if r.symmetric { "symmetric " } else { "asymmetric" },
            fmt17(r.theta),
            r.labels.join(" ")
        );
    }
    Ok(json!({
        "symmetric_orders": cen.symmetric_orders(),
        "asymmetric_orders": cen.asymmetric_orders(),
        "complete": cen.complete,
    }))
}

fn cmd_sweep(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let grid = parse_grid(c.grid.as_deref().expect("validated")).expect("validated");
    let o = c.cascade();
    let res = sweep_homoclinics(&grid, c.k_max, &o);
    out.json("sweep.json", &res)?;
    let mut csv = String::from("eta3,min_order,symmetric,asymmetric,complete\n");
    for (eta, cen) in res.grid.iter().zip(&res.censuses) {
        match cen {
            Ok(cen) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    fmt17(*eta),
                    cen.min_order().map_or(String::new(), |m| m.to_string()),
                    cen.symmetric_orders().len(),
                    cen.asymmetric_orders().len(),
                    u8::from(cen.complete)
                );
            }
            Err(_) => {
                let _ = writeln!(csv, "{},,,,0", fmt17(*eta));
            }
        }
    }
    out.write("min_orders.csv", csv.as_bytes())?;
    println!("{} values, {} chains, {} events, minimal order monotone: {}", res.grid.len(), res.chains.len(), res.events.len(), res.min_order_monotone);
    Ok(json!({ "chains": res.chains.len(), "events": res.events.len(), "min_order_monotone": res.min_order_monotone }))
}

/// The event reported for a bracket: counts differing by two, nearest the
/// bracket centre.
pub fn select_tangency(all: &[TangencyEvent], bracket: (f64, f64)) -> Option<&TangencyEvent> {
    let mid = 0.5 * (bracket.0 + bracket.1);
    all.iter()
        .filter(|e| e.counts.0.abs_diff(e.counts.1) == 2)
        .min_by(|a, b| (a.eta3_star - mid).abs().total_cmp(&(b.eta3_star - mid).abs()))
}

fn cmd_tangency(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let bracket = c.bracket.expect("validated");
    let o = c.cascade();
    let all = locate_tangencies(bracket, c.k, &o)?;
    let best = select_tangency(&all, bracket);
    out.json("tangency.json", &json!({ "bracket": bracket, "k": c.k, "event": best, "candidates": all }))?;
    for e in &all {
        println!("candidate eta3* = {}  theta = {}  counts {}/{}", fmt17(e.eta3_star), fmt17(e.theta_star), e.counts.0, e.counts.1);
    }
    let e = best.ok_or_else(|| {
        CliError::from(CascadeError::CountMismatch {
            lo: bracket.0.min(bracket.1),
            hi: bracket.0.max(bracket.1),
            count_lo: 0,
            count_hi: 0,
        })
    })?;
    println!("eta3* = {}  bracket [{}, {}]  counts {}/{}", fmt17(e.eta3_star), fmt17(e.bracket.0), fmt17(e.bracket.1), e.counts.0, e.counts.1);
    Ok(json!({ "eta3_star": e.eta3_star, "counts": e.counts, "candidates": all.len() }))
}

fn cmd_fixr(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let eta3 = eta3_of(c);
    let o = c.cascade();
    let p = Params::bifocal(eta3).map_err(|e| CliError::Validation(e.to_string()))?;
    let images = iterate_fix_r(p, c.n, c.seed_grid, &o);
    let mut csv = String::from("eta3,j,seed_x1,x1,x3,x4,xbar1,region,tangential\n");
    for (j, curve) in images.curves.iter().enumerate() {
        for s in &curve.samples {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                fmt17(eta3),
                j,
                fmt17(s.theta),
                fmt17(s.x1),
                fmt17(s.x3),
                fmt17(s.x4),
                fmt17(s.xbar1),
                s.region.label(),
                u8::from(s.tangential)
            );
        }
    }
    out.write("fixr_curves.csv", csv.as_bytes())?;
    let mut summary = json!({
        "eta3": eta3,
        "n": c.n,
        "seeds": images.bank.seeds.len(),
        "capped": images.bank.capped,
        "curves": images.curves.len(),
    });
    println!("eta3 = {}  n = {}  seeds {}  curves {}", fmt17(eta3), c.n, images.bank.seeds.len(), images.curves.len());
    if c.n >= 1 {
        let window = Window { xbar1: c.window };
        let (orbits, failed) = find_symmetric_periodic_orbits(p, c.n, Some(window), &images, &o);
        for (i, po) in orbits.iter().enumerate() {
            let traj = integrate(po.seed, p, po.period, &o.integrator).map_err(|e| CliError::Numerical(e.to_string()))?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf, c.trajectory_samples).expect("in-memory write");
            out.write(&format!("periodic_{i:02}.csv"), &buf)?;
            println!(
                "periodic orbit  seed x1 {}  image xbar1 {}  crossings {}  Fix(R) contacts {}  closure {}",
                fmt17(po.seed_x1),
                fmt17(po.image.xbar1),
                po.crossings_per_period,
                po.fixr_contacts,
                fmt17(po.closure_residual)
            );
        }
        out.json("periodic_orbits.json", &json!({ "eta3": eta3, "n": c.n, "window": c.window, "orbits": orbits, "failed_roots": failed }))?;
        summary["periodic_orbits"] = json!(orbits.len());
        summary["failed_roots"] = json!(failed.len());
    }
    Ok(summary)
}

fn cmd_saddlenode(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let eta3 = eta3_of(c);
    let o = c.cascade();
    let window = Window { xbar1: c.window };
    let cand = locate_saddle_node(eta3, c.span, c.n, window, c.seed_grid, &o)?;
    let p = Params::bifocal(cand.validation.1 .0).map_err(|e| CliError::Validation(e.to_string()))?;
    let nearby = periodic_orbit_at(p, cand.seed_x1, c.n, &o);
    out.json("saddlenode.json", &json!({ "candidate": cand, "orbit_near_fold": nearby }))?;
    println!(
        "fold eta3* = {}  bracket [{}, {}]  seed x1 {}  orbits at -/+1e-3: {}/{}  exponent {}",
        fmt17(cand.eta3_star),
        fmt17(cand.bracket.0),
        fmt17(cand.bracket.1),
        fmt17(cand.seed_x1),
        cand.validation.0 .1,
        cand.validation.1 .1,
        cand.scaling_exponent.map_or("n/a".into(), fmt17)
    );
    Ok(json!({ "eta3_star": cand.eta3_star, "validation": cand.validation, "scaling_exponent": cand.scaling_exponent }))
}

fn cmd_selftest(c: &RunConfig, out: &mut Output) -> Result<Value, CliError> {
    let o = c.cascade();
    let report = selftest::run(SELFTEST_ETA3, c.k_max, &o)?;
    let mut csv = String::from("check,value,threshold,pass\n");
    for ch in &report.checks {
        let _ = writeln!(csv, "{},{},{},{}", ch.name, fmt17(ch.value), ch.threshold.replace(',', ";"), u8::from(ch.pass));
    }
    out.write("selftest.csv", csv.as_bytes())?;
    out.json("census.json", &report.census)?;
    let mut buf = Vec::new();
    write_traces_csv(&mut buf, report.eta3, &report.traces).expect("in-memory write");
    out.write("traces.csv", &buf)?;
    println!("{:<32} {:>24}  {:<20} result", "check", "value", "threshold");
    for ch in &report.checks {
        println!("{:<32} {:>24}  {:<20} {}", ch.name, fmt17(ch.value), ch.threshold, if ch.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Numerical(format!("selftest checks failed: {}", failed.join(", "))));
    }
    Ok(json!({ "checks": report.checks.len(), "passed": true }))
}
