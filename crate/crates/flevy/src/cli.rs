//! Configuration, manifest, and subcommand entry points backing the `flevy`
//! binary.
//!
//! Five subcommands: `simulate` (path CSVs plus a metadata sidecar),
//! `check` (finite-variation verdict as JSON), `tv` (dyadic
//! total-variation profiles), `bounds` (the closed-bound dominance suite),
//! and `verify` (the full verification battery).  A run is described by a
//! [`RunConfig`]; it can be loaded from `--config file.json`, and
//! individual flags override its fields.  Every file a subcommand writes is
//! referenced by a `manifest.json` with SHA-256 content hashes (wall-clock
//! timing files are listed as volatile instead of hashed), so identical
//! configurations produce byte-identical manifests.  The environment
//! variable `FLEVY_THREADS` caps internal parallelism.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::criterion::{ext_real, fv_criterion, Verdict};
use crate::error::{Error, Result};
use crate::idbounds::{bound_c2, bound_c3, fd_tv_bound, mean_abs_bound};
use crate::levy::{sample_increments, IncrementGrid, JumpAtom, JumpFamily, LevyModel};
use crate::rng::{derive_seed, tag};
use crate::special::gamma;
use crate::stats::mean_stderr;
use crate::synth::{synthesize, truncation_radius, FlpPath, KernelKind, KernelSpec};
use crate::variation::{tv_profile, VariationReport};
use crate::verify::{manifest_bytes, write_bundle_for, VerifyConfig};

/// All checks passed / command succeeded.
pub const EXIT_OK: i32 = 0;
/// One or more verification or dominance checks failed.
pub const EXIT_CRITERION_FAIL: i32 = 1;
/// Usage error: bad flags, malformed config or input files, invalid
/// parameters.
pub const EXIT_USAGE: i32 = 2;
/// `check` classified the model as infinite variation.
pub const EXIT_INFINITE_VARIATION: i32 = 3;

/// Hard cap on grid cells a subcommand will allocate; the truncation radius
/// requested via `--tol` is clamped so the grid fits.
pub const MAX_GRID_CELLS: usize = 1 << 22;

// ---------------------------------------------------------------------------
// Run configuration.
// ---------------------------------------------------------------------------

/// Driver-grid parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cell width of the driver grid (also the output-time spacing).
    pub step: f64,
    /// Horizon: paths are synthesized on `[0, t_max]`.
    pub t_max: f64,
    /// Root-mean-square truncation tolerance used to pick the history
    /// radius (subject to [`MAX_GRID_CELLS`]).
    pub tolerance: f64,
    /// Explicit history radius (negative); overrides the tolerance-derived
    /// one when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
}

/// Monte Carlo scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of paths to synthesize.
    pub paths: usize,
    /// Dyadic refinement depth for total-variation profiles.
    pub depth: u32,
    /// Draw count for Monte Carlo estimates (`bounds`).
    pub mc: usize,
}

/// One batch run: driver model, kernel, grid, experiment scales, seed, and
/// output directory.  Round-trips losslessly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Driver model document.
    pub model: LevyModel,
    /// Kernel flavour to synthesize.
    pub kernel: KernelKind,
    /// Smoothness index in `(0, 1/2)`.
    pub d: f64,
    pub grid: GridConfig,
    pub experiment: ExperimentConfig,
    /// Root seed; everything a subcommand samples derives from it.
    pub seed: u64,
    /// Directory artifacts are written into.
    pub out_dir: PathBuf,
    /// Scales for the `verify` subcommand; defaults (with the model, `d`,
    /// and seed above) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: LevyModel::new(
                0.0,
                0.0,
                JumpFamily::CompoundPoisson {
                    atoms: vec![
                        JumpAtom { size: 1.0, rate: 0.5 },
                        JumpAtom { size: -1.0, rate: 0.5 },
                    ],
                },
                true,
            )
            .expect("valid default driver"),
            kernel: KernelKind::NonAnticipative,
            d: 0.25,
            grid: GridConfig { step: 1.0 / 512.0, t_max: 1.0, tolerance: 1e-3, r_min: None },
            experiment: ExperimentConfig { paths: 10, depth: 10, mc: 10_000 },
            seed: 0x464c4556,
            out_dir: PathBuf::from("flevy-out"),
            verify: None,
        }
    }
}

/// Parse a kernel name as used on the command line (serde snake_case names
/// plus short aliases).
pub fn parse_kernel_kind(s: &str) -> Result<KernelKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "non_anticipative" | "na" => Ok(KernelKind::NonAnticipative),
        "well_balanced" | "wb" => Ok(KernelKind::WellBalanced),
        "tail_part" | "tail" => Ok(KernelKind::TailPart),
        "riemann_liouville" | "rl" => Ok(KernelKind::RiemannLiouville),
        other => Err(Error::invalid(format!(
            "unknown kernel kind {other:?}; expected non_anticipative|well_balanced|tail_part|riemann_liouville (or na|wb|tail|rl)"
        ))),
    }
}

/// Parse an `a:b` interval.
pub fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::invalid(format!("interval must look like a:b, got {s:?}")));
    }
    let a: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("interval endpoint {:?} is not a number", parts[0])))?;
    let b: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("interval endpoint {:?} is not a number", parts[1])))?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::invalid(format!("interval must satisfy a < b, got {a}:{b}")));
    }
    Ok((a, b))
}

/// Load a model document: a path to a JSON file, or inline JSON.
pub fn load_model(arg: &str) -> Result<LevyModel> {
    let trimmed = arg.trim();
    if Path::new(arg).exists() {
        let text = fs::read_to_string(arg)?;
        return Ok(serde_json::from_str(&text)?);
    }
    if trimmed.starts_with('{') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    Err(Error::MalformedInput(format!("model file not found: {arg}")))
}

// ---------------------------------------------------------------------------
// Command line.
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "flevy",
    version,
    about = "Synthesize fractional moving averages of Levy drivers, classify their variation, and verify the governing identities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each one overrides the matching
/// [`RunConfig`] field.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration file; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Driver model: path to a JSON document, or inline JSON.
    #[arg(long)]
    pub model: Option<String>,
    /// Kernel kind: non_anticipative|well_balanced|tail_part|riemann_liouville (na|wb|tail|rl).
    #[arg(long)]
    pub kind: Option<String>,
    /// Smoothness index in (0, 1/2).
    #[arg(long)]
    pub d: Option<f64>,
    /// Grid step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Horizon t_max.
    #[arg(long)]
    pub tmax: Option<f64>,
    /// RMS truncation tolerance for the history radius.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Number of paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Dyadic refinement depth.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Monte Carlo draw count.
    #[arg(long)]
    pub mc: Option<usize>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize sample paths; write one CSV per path plus a JSON sidecar
    /// with truncation metadata and a hash manifest.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify the driver as finite or infinite variation from its
    /// characteristic triplet; print the report as JSON.
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Dyadic total-variation profiles of synthesized paths, or of a path
    /// supplied as CSV.
    Tv {
        #[command(flatten)]
        common: CommonArgs,
        /// Analysis interval, as a:b (defaults to 0:1).
        #[arg(long, default_value = "0:1")]
        interval: String,
        /// Read one path from this CSV (columns t,x) instead of
        /// synthesizing.
        #[arg(long)]
        input_csv: Option<PathBuf>,
    },
    /// Run the closed-bound dominance suite for the driver model and emit
    /// a pass/fail table.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the verification battery and write a report bundle.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Run only these criteria (1-9; repeatable). Default: all.
        #[arg(long)]
        only: Vec<usize>,
    },
}

/// Build the effective configuration: file (if any), then flag overrides.
pub fn effective_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &common.model {
        cfg.model = load_model(m)?;
    }
    if let Some(k) = &common.kind {
        cfg.kernel = parse_kernel_kind(k)?;
    }
    if let Some(d) = common.d {
        cfg.d = d;
    }
    if let Some(s) = common.step {
        cfg.grid.step = s;
    }
    if let Some(t) = common.tmax {
        cfg.grid.t_max = t;
    }
    if let Some(tol) = common.tol {
        cfg.grid.tolerance = tol;
    }
    if let Some(p) = common.paths {
        cfg.experiment.paths = p;
    }
    if let Some(n) = common.depth {
        cfg.experiment.depth = n;
    }
    if let Some(m) = common.mc {
        cfg.experiment.mc = m;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn init_threads() {
    if let Ok(v) = std::env::var("FLEVY_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version and 2 for usage errors.
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    let result = match &cli.command {
        Command::Simulate { common } => {
            effective_config(common).and_then(|cfg| cmd_simulate(&cfg))
        }
        Command::Check { common } => effective_config(common).and_then(|cfg| cmd_check(&cfg)),
        Command::Tv { common, interval, input_csv } => effective_config(common).and_then(|cfg| {
            let ab = parse_interval(interval)?;
            cmd_tv(&cfg, ab, input_csv.as_deref())
        }),
        Command::Bounds { common } => effective_config(common).and_then(|cfg| cmd_bounds(&cfg)),
        Command::Verify { common, only } => {
            effective_config(common).and_then(|cfg| cmd_verify(&cfg, only))
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_USAGE
        }
    }
}

// ---------------------------------------------------------------------------
// Shared helpers.
// ---------------------------------------------------------------------------

/// Pick the history radius: explicit `r_min`, else the tolerance-derived
/// one, clamped so the whole grid fits in [`MAX_GRID_CELLS`] cells.  All
/// lengths snap to whole steps.  Returns the grid plus (requested radius,
/// clamped flag).
fn build_grid(cfg: &RunConfig) -> Result<(IncrementGrid, f64, bool)> {
    let step = cfg.grid.step;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("grid step must be positive, got {step}")));
    }
    let t_cells_f = cfg.grid.t_max / step;
    let t_cells = t_cells_f.round();
    if (t_cells_f - t_cells).abs() > 1e-9 * t_cells.max(1.0) || t_cells < 1.0 {
        return Err(Error::invalid(format!(
            "t_max {} must be a positive whole number of steps {step}",
            cfg.grid.t_max
        )));
    }
    let t_cells = t_cells as usize;
    if t_cells >= MAX_GRID_CELLS {
        return Err(Error::invalid(format!(
            "t_max/step = {t_cells} cells exceeds the {MAX_GRID_CELLS}-cell budget"
        )));
    }

    let requested = match (cfg.grid.r_min, cfg.kernel) {
        (Some(r), _) => {
            if !(r <= 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("r_min must be <= 0, got {r}")));
            }
            r
        }
        // The fractional integral of the driver needs no history.
        (None, KernelKind::RiemannLiouville) => 0.0,
        (None, _) => {
            let var = cfg.model.variance_rate();
            if var > 0.0 {
                truncation_radius(var, cfg.d, cfg.grid.t_max, cfg.grid.tolerance)?
            } else {
                // Deterministic driver: history carries no variance.
                -step
            }
        }
    };
    let neg_cells_req = (-requested / step).ceil().max(0.0);
    let max_neg = (MAX_GRID_CELLS - t_cells) as f64;
    let clamped = neg_cells_req > max_neg;
    let neg_cells = neg_cells_req.min(max_neg);
    let r_used = -neg_cells * step;
    let grid = IncrementGrid::new(r_used, t_cells as f64 * step, step)?;
    Ok((grid, requested, clamped))
}

/// Output times: every grid node in `[0, t_max]`.
fn output_times(grid: &IncrementGrid) -> Vec<f64> {
    let k0 = grid.zero_index();
    (0..=(grid.n_cells() - k0)).map(|j| j as f64 * grid.step()).collect()
}

/// Write `manifest.json` into `dir` for the given (name, bytes) pairs.
fn write_manifest(dir: &Path, hashed: &[(String, Vec<u8>)], volatile: &[&str]) -> Result<()> {
    let refs: Vec<(&str, &[u8])> =
        hashed.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
    let manifest = manifest_bytes(&refs, volatile)?;
    fs::write(dir.join("manifest.json"), manifest)?;
    Ok(())
}

fn to_pretty_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Read a `t,x` CSV written by [`FlpPath::write_csv`] (or compatible).
fn read_path_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
            continue;
        }
        let (ts, xs) = line.split_once(',').ok_or_else(|| {
            Error::MalformedInput(format!("{}:{}: expected t,x", path.display(), lineno + 1))
        })?;
        let t: f64 = ts.trim().parse().map_err(|_| {
            Error::MalformedInput(format!("{}:{}: bad time {ts:?}", path.display(), lineno + 1))
        })?;
        let x: f64 = xs.trim().parse().map_err(|_| {
            Error::MalformedInput(format!("{}:{}: bad value {xs:?}", path.display(), lineno + 1))
        })?;
        times.push(t);
        values.push(x);
    }
    if times.len() < 2 {
        return Err(Error::MalformedInput(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::MalformedInput(format!(
            "{}: times must be strictly increasing",
            path.display()
        )));
    }
    Ok((times, values))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Sidecar metadata for a `simulate` run.
#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateMeta {
    pub config: RunConfig,
    /// Radius the tolerance asked for (negative).
    pub radius_requested: f64,
    /// Radius actually used after snapping and clamping.
    pub radius_used: f64,
    /// Whether the cell budget clamped the radius.
    pub clamped: bool,
    /// Largest RMS truncation-error estimate over the written paths.
    #[serde(with = "ext_real")]
    pub truncation_error: f64,
    /// Number of path files written.
    pub paths: usize,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let spec = KernelSpec::new(cfg.kernel, cfg.d)?;
    fs::create_dir_all(&cfg.out_dir)?;

    // Spec example: zero paths means no path files and an empty manifest.
    if cfg.experiment.paths == 0 {
        write_manifest(&cfg.out_dir, &[], &[])?;
        println!("wrote 0 paths to {}", cfg.out_dir.display());
        return Ok(EXIT_OK);
    }

    let (grid, requested, clamped) = build_grid(cfg)?;
    let out = output_times(&grid);
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut worst_err = 0.0f64;
    for i in 0..cfg.experiment.paths {
        let seed = derive_seed(cfg.seed, &[tag::REPLICATION, i as u64]);
        let path = sample_increments(&cfg.model, &grid, seed);
        let fp = synthesize(&path, &spec, &out)?;
        worst_err = worst_err.max(fp.truncation_error);
        let mut bytes = Vec::new();
        fp.write_csv(&mut bytes)?;
        files.push((format!("path_{i:04}.csv"), bytes));
    }
    let meta = SimulateMeta {
        config: cfg.clone(),
        radius_requested: requested,
        radius_used: grid.r_min(),
        clamped,
        truncation_error: worst_err,
        paths: cfg.experiment.paths,
    };
    files.push(("run.json".to_string(), to_pretty_bytes(&meta)?));
    for (name, bytes) in &files {
        fs::write(cfg.out_dir.join(name), bytes)?;
    }
    write_manifest(&cfg.out_dir, &files, &[])?;
    println!(
        "wrote {} paths to {} (r_min {:.6e}{}, rms truncation error <= {:.3e})",
        cfg.experiment.paths,
        cfg.out_dir.display(),
        grid.r_min(),
        if clamped { ", clamped by the cell budget" } else { "" },
        worst_err
    );
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

pub fn cmd_check(cfg: &RunConfig) -> Result<i32> {
    let report = fv_criterion(&cfg.model, cfg.d)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.verdict == Verdict::FiniteVariation {
        EXIT_OK
    } else {
        EXIT_INFINITE_VARIATION
    })
}

// ---------------------------------------------------------------------------
// tv
// ---------------------------------------------------------------------------

/// JSON artifact of the `tv` subcommand.
#[derive(Debug, Serialize, Deserialize)]
pub struct TvArtifact {
    pub interval: (f64, f64),
    pub depth: u32,
    pub reports: Vec<VariationReport>,
}

pub fn cmd_tv(cfg: &RunConfig, interval: (f64, f64), input_csv: Option<&Path>) -> Result<i32> {
    let (a, b) = interval;
    let depth = cfg.experiment.depth;
    let reports: Vec<VariationReport> = match input_csv {
        Some(csv) => {
            let (times, values) = read_path_csv(csv)?;
            let fp = FlpPath {
                kernel: KernelSpec::new(cfg.kernel, cfg.d)?,
                r_min: times[0],
                truncation_error: 0.0,
                seed: 0,
                times,
                values,
            };
            vec![tv_profile(&fp, a, b, depth)?]
        }
        None => {
            if !(a >= 0.0 && b <= cfg.grid.t_max) {
                return Err(Error::invalid(format!(
                    "interval {a}:{b} must lie inside [0, t_max = {}]",
                    cfg.grid.t_max
                )));
            }
            if cfg.experiment.paths == 0 {
                return Err(Error::invalid("tv needs at least one path".to_string()));
            }
            let spec = KernelSpec::new(cfg.kernel, cfg.d)?;
            let (grid, _, _) = build_grid(cfg)?;
            let n = 1usize << depth;
            let out: Vec<f64> =
                (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
            let mut reports = Vec::with_capacity(cfg.experiment.paths);
            for i in 0..cfg.experiment.paths {
                let seed = derive_seed(cfg.seed, &[tag::REPLICATION, i as u64]);
                let path = sample_increments(&cfg.model, &grid, seed);
                let fp = synthesize(&path, &spec, &out)?;
                reports.push(tv_profile(&fp, a, b, depth)?);
            }
            reports
        }
    };

    fs::create_dir_all(&cfg.out_dir)?;
    let artifact = TvArtifact { interval, depth, reports };
    let json_bytes = to_pretty_bytes(&artifact)?;

    // Plot-ready CSV: depth, mean TV over paths at that depth.
    let mut csv = String::from("n,tv\n");
    let depths = &artifact.reports[0].depths;
    for (j, n) in depths.iter().enumerate() {
        let mean =
            artifact.reports.iter().map(|r| r.tv[j]).sum::<f64>() / artifact.reports.len() as f64;
        csv.push_str(&format!("{n},{mean:.16e}\n"));
    }
    let files = vec![
        ("tv_report.json".to_string(), json_bytes),
        ("tv_profile.csv".to_string(), csv.into_bytes()),
    ];
    for (name, bytes) in &files {
        fs::write(cfg.out_dir.join(name), bytes)?;
    }
    write_manifest(&cfg.out_dir, &files, &[])?;

    let n_conv = artifact.reports.iter().filter(|r| r.converged).count();
    let last_mean = artifact.reports.iter().map(|r| *r.tv.last().expect("depths")).sum::<f64>()
        / artifact.reports.len() as f64;
    println!(
        "tv over [{a}, {b}] depth {depth}: {}/{} profiles converged, mean TV at finest depth {last_mean:.6}; artifacts in {}",
        n_conv,
        artifact.reports.len(),
        cfg.out_dir.display()
    );
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

/// One row of the dominance table.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoundRow {
    pub check: String,
    /// Estimate or quadrature value that must be dominated.
    #[serde(with = "ext_real")]
    pub lhs: f64,
    /// Closed-form bound.
    #[serde(with = "ext_real")]
    pub rhs: f64,
    /// pass | fail | skipped.
    pub status: String,
    pub note: String,
}

impl BoundRow {
    fn passed(check: String, lhs: f64, rhs: f64, ok: bool, note: String) -> Self {
        BoundRow {
            check,
            lhs,
            rhs,
            status: if ok { "pass" } else { "fail" }.to_string(),
            note,
        }
    }

    fn skipped(check: String, note: String) -> Self {
        BoundRow { check, lhs: f64::NAN, rhs: f64::NAN, status: "skipped".to_string(), note }
    }
}

/// Numerical-precision allowance for quadrature-vs-closed-form rows: the
/// tail bounds are near-tight for `d` close to `1/2`, so a gap below the
/// quadrature tolerance must not count as a violation.
const QUAD_SLACK: f64 = 5e-6;

pub fn cmd_bounds(cfg: &RunConfig) -> Result<i32> {
    let model = &cfg.model;
    let mut rows: Vec<BoundRow> = Vec::new();

    // Mean-absolute-increment bound vs its Monte Carlo estimate, at three
    // split levels.
    let grid1 = IncrementGrid::new(0.0, 1.0, 0.25)?;
    let draws: Vec<f64> = (0..cfg.experiment.mc.max(2))
        .map(|i| {
            let seed = derive_seed(cfg.seed, &[tag::REPLICATION, 0, i as u64]);
            sample_increments(model, &grid1, seed).increments.iter().sum::<f64>().abs()
        })
        .collect();
    let (mc_mean, mc_se) = mean_stderr(&draws);
    for eps in [0.1, 1.0, 10.0] {
        let check = format!("mean-abs-increment bound, split eps = {eps}");
        match mean_abs_bound(model, eps) {
            Ok(bound) => rows.push(BoundRow::passed(
                check,
                mc_mean,
                bound,
                mc_mean <= bound + 3.0 * mc_se,
                format!("MC E|L(1)| over {} draws, 3 stderr = {:.3e}", draws.len(), 3.0 * mc_se),
            )),
            Err(e) => rows.push(BoundRow::skipped(check, e.to_string())),
        }
    }

    // Integrated-tail bounds vs their quadrature left-hand sides.
    for dd in [0.1, 0.25, 0.4] {
        for r in [-0.5, -1.0] {
            for aa in [0.5, 1.0, 2.0] {
                for (name, f) in [
                    ("tail-bound-2", bound_c2 as fn(&LevyModel, f64, f64, f64) -> Result<(f64, f64)>),
                    ("tail-bound-3", bound_c3 as fn(&LevyModel, f64, f64, f64) -> Result<(f64, f64)>),
                ] {
                    let check = format!("{name} d = {dd}, r = {r}, a = {aa}");
                    match f(model, dd, r, aa) {
                        Ok((lhs, rhs)) => rows.push(BoundRow::passed(
                            check,
                            lhs,
                            rhs,
                            lhs <= rhs * (1.0 + QUAD_SLACK) + 1e-12,
                            "quadrature vs closed form".to_string(),
                        )),
                        Err(e) => rows.push(BoundRow::skipped(check, e.to_string())),
                    }
                }
            }
        }
    }

    // Past-component TV bound vs closed reference and Monte Carlo.
    let b_end = 0.5;
    let var = model.variance_rate();
    match fd_tv_bound(model, cfg.d, b_end) {
        Err(e) => rows.push(BoundRow::skipped(
            format!("past-component TV bound, d = {}, b = {b_end}", cfg.d),
            e.to_string(),
        )),
        Ok(bound) => {
            let j_closed = |dd: f64, bb: f64| {
                bb.powf(dd + 0.5) * gamma(1.5 - dd) * gamma(1.5)
                    / ((dd + 0.5) * (0.5 - dd) * gamma(1.0 - dd))
            };
            let reference = var.sqrt() / gamma(cfg.d) * j_closed(cfg.d, b_end);
            let agree = if reference == 0.0 {
                bound == 0.0
            } else {
                ((bound - reference) / reference).abs() <= 1e-6
            };
            rows.push(BoundRow::passed(
                format!("past-component TV bound vs closed form, d = {}, b = {b_end}", cfg.d),
                bound,
                reference,
                agree,
                "quadrature bound must match the closed Beta form".to_string(),
            ));
            if var > 0.0 {
                let mc_paths = cfg.experiment.paths.max(2);
                let step = 1.0 / 256.0;
                let gridf = IncrementGrid::new(-16.0, b_end, step)?;
                let spec = KernelSpec::new(KernelKind::TailPart, cfg.d)?;
                let n = 128usize;
                let out: Vec<f64> = (0..=n).map(|i| b_end * i as f64 / n as f64).collect();
                let mut tvs = Vec::with_capacity(mc_paths);
                for i in 0..mc_paths {
                    let seed = derive_seed(cfg.seed, &[tag::REPLICATION, 1, i as u64]);
                    let path = sample_increments(model, &gridf, seed);
                    let fp = synthesize(&path, &spec, &out)?;
                    tvs.push(crate::variation::dyadic_tv(&fp.values));
                }
                let (tv_mean, tv_se) = mean_stderr(&tvs);
                rows.push(BoundRow::passed(
                    format!("past-component TV bound vs MC, d = {}, b = {b_end}", cfg.d),
                    tv_mean,
                    bound,
                    tv_mean <= bound + 3.0 * tv_se,
                    format!("{mc_paths} paths, 3 stderr = {:.3e}", 3.0 * tv_se),
                ));
            } else {
                rows.push(BoundRow::skipped(
                    format!("past-component TV bound vs MC, d = {}, b = {b_end}", cfg.d),
                    "driver has no stochastic part".to_string(),
                ));
            }
        }
    }

    // Human-readable table.
    for row in &rows {
        println!(
            "{:<7} {:<46} lhs = {:<12.6} rhs = {:<12.6} {}",
            row.status, row.check, row.lhs, row.rhs, row.note
        );
    }
    let n_fail = rows.iter().filter(|r| r.status == "fail").count();
    let n_skip = rows.iter().filter(|r| r.status == "skipped").count();
    println!(
        "{} checks: {} passed, {n_fail} failed, {n_skip} skipped",
        rows.len(),
        rows.len() - n_fail - n_skip
    );

    fs::create_dir_all(&cfg.out_dir)?;
    let files = vec![("bounds.json".to_string(), to_pretty_bytes(&rows)?)];
    for (name, bytes) in &files {
        fs::write(cfg.out_dir.join(name), bytes)?;
    }
    write_manifest(&cfg.out_dir, &files, &[])?;
    Ok(if n_fail == 0 { EXIT_OK } else { EXIT_CRITERION_FAIL })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn cmd_verify(cfg: &RunConfig, only: &[usize]) -> Result<i32> {
    // An explicit verify section wins; otherwise inherit the run's driver,
    // smoothness index, and seed.
    let vcfg = match &cfg.verify {
        Some(v) => v.clone(),
        None => VerifyConfig {
            seed: cfg.seed,
            model: cfg.model.clone(),
            d: cfg.d,
            ..VerifyConfig::default()
        },
    };
    let mut indices: Vec<usize> = if only.is_empty() { (1..=9).collect() } else { only.to_vec() };
    indices.sort_unstable();
    indices.dedup();
    if indices.iter().any(|&i| !(1..=9).contains(&i)) {
        return Err(Error::invalid(format!("--only indices must lie in 1..=9, got {indices:?}")));
    }
    let (_, report) = write_bundle_for(&vcfg, &cfg.out_dir, &indices)?;
    for o in &report.outcomes {
        println!(
            "criterion {} ({}): {} [{:.1}s] - {}",
            o.index,
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.seconds,
            o.details
        );
    }
    let n_fail = report.outcomes.iter().filter(|o| !o.pass).count();
    if report.all_pass {
        println!("all {} criteria passed; bundle in {}", report.outcomes.len(), cfg.out_dir.display());
        Ok(EXIT_OK)
    } else {
        println!(
            "{n_fail}/{} criteria failed; bundle in {}",
            report.outcomes.len(),
            cfg.out_dir.display()
        );
        Ok(EXIT_CRITERION_FAIL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_kind_parses_names_and_aliases() {
        assert_eq!(parse_kernel_kind("na").unwrap(), KernelKind::NonAnticipative);
        assert_eq!(parse_kernel_kind("non_anticipative").unwrap(), KernelKind::NonAnticipative);
        assert_eq!(parse_kernel_kind("WB").unwrap(), KernelKind::WellBalanced);
        assert_eq!(parse_kernel_kind("tail").unwrap(), KernelKind::TailPart);
        assert_eq!(parse_kernel_kind("riemann_liouville").unwrap(), KernelKind::RiemannLiouville);
        assert!(parse_kernel_kind("fractional").is_err());
    }

    #[test]
    fn interval_parses_and_validates() {
        assert_eq!(parse_interval("0:1").unwrap(), (0.0, 1.0));
        assert_eq!(parse_interval("0.25:0.75").unwrap(), (0.25, 0.75));
        assert!(parse_interval("1:1").is_err());
        assert!(parse_interval("2:1").is_err());
        assert!(parse_interval("0,1").is_err());
        assert!(parse_interval("a:b").is_err());
    }

    #[test]
    fn run_config_round_trips_losslessly() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(serde_json::from_str::<RunConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn flags_override_config_fields() {
        let common = CommonArgs {
            d: Some(0.4),
            step: Some(0.125),
            paths: Some(3),
            seed: Some(9),
            kind: Some("rl".to_string()),
            out: Some(PathBuf::from("elsewhere")),
            ..CommonArgs::default()
        };
        let cfg = effective_config(&common).unwrap();
        assert_eq!(cfg.d, 0.4);
        assert_eq!(cfg.grid.step, 0.125);
        assert_eq!(cfg.experiment.paths, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.kernel, KernelKind::RiemannLiouville);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        // Untouched fields keep their defaults.
        assert_eq!(cfg.grid.t_max, RunConfig::default().grid.t_max);
    }

    #[test]
    fn inline_model_json_loads() {
        let model = load_model(r#"{"sigma": 1.0, "mean_zero": true, "jumps": []}"#).unwrap();
        assert!(model.sigma() > 0.0);
        assert!(load_model("no-such-file.json").is_err());
    }

    #[test]
    fn grid_radius_clamps_to_cell_budget() {
        // Tight tolerance requests an astronomically distant radius; the
        // grid must clamp it to the cell budget and say so.
        let cfg = RunConfig {
            grid: GridConfig { step: 1.0 / 512.0, t_max: 1.0, tolerance: 1e-3, r_min: None },
            ..RunConfig::default()
        };
        let (grid, requested, clamped) = build_grid(&cfg).unwrap();
        assert!(clamped);
        assert!(requested < grid.r_min());
        assert_eq!(grid.n_cells(), MAX_GRID_CELLS);
        // An explicit radius is honored without clamping.
        let cfg2 = RunConfig {
            grid: GridConfig { step: 0.25, t_max: 1.0, tolerance: 1e-3, r_min: Some(-4.0) },
            ..RunConfig::default()
        };
        let (grid2, _, clamped2) = build_grid(&cfg2).unwrap();
        assert!(!clamped2);
        assert_eq!(grid2.r_min(), -4.0);
    }

    #[test]
    fn riemann_liouville_needs_no_history() {
        let cfg = RunConfig {
            kernel: KernelKind::RiemannLiouville,
            grid: GridConfig { step: 0.25, t_max: 1.0, tolerance: 1e-3, r_min: None },
            ..RunConfig::default()
        };
        let (grid, requested, clamped) = build_grid(&cfg).unwrap();
        assert_eq!(grid.r_min(), 0.0);
        assert_eq!(requested, 0.0);
        assert!(!clamped);
    }
}
