//! The `nuggetcut` command line.
//!
//! Every successful run prints one JSON object on a single stdout line;
//! human-readable notes and errors go to stderr. Exit codes: 0 success,
//! 1 usage error, 2 I/O or file-format error, 3 algorithmic error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nuggetcut::evalstat::{build_report, dice, CaseRow};
use nuggetcut::geometry::{Polyhedron, LEVEL_VERTEX_COUNTS};
use nuggetcut::metaimage::{load_mask, load_volume, save_mask, save_volume};
use nuggetcut::segmenter::segment_volume;
use nuggetcut::vec3::Vec3;
use nuggetcut::{make_phantom, PhantomSpec, SegmentationParams, Strategy, TauMode, Volume};
use serde_json::{json, Value};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_ALGORITHM: i32 = 3;

/// Reserved; compute is single-threaded for now.
pub const THREADS_ENV: &str = "NUGGETCUT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Algorithm(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Algorithm(_) => EXIT_ALGORITHM,
        }
    }
}

impl From<nuggetcut::Error> for CliError {
    fn from(e: nuggetcut::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Algorithm(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "nuggetcut",
    version,
    about = "Radial graph-cut segmentation of blob-like regions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic volume and its ground-truth mask.
    Phantom(PhantomArgs),
    /// Segment one volume from a seed point.
    Segment(SegmentArgs),
    /// Compare a mask against a reference mask.
    Eval(EvalArgs),
    /// Summary statistics and significance tests over evaluated cases.
    Report(ReportArgs),
    /// Time repeated full recomputes.
    Bench(BenchArgs),
    /// Run the HTTP/WebSocket session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Phantom specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Threshold,
    Derivative,
}

#[derive(Debug, Clone, Args)]
pub struct LatticeArgs {
    /// Rays per lattice: 12, 32, 92, 272, 812 or 2432.
    #[arg(long)]
    pub rays: Option<usize>,
    /// Nodes per ray.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Maximal ray length in mm.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("seed_point").required(true).args(["seed", "seed_voxel"]))]
pub struct SegmentArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Seed in world millimetres, `X,Y,Z` (an `mm` suffix is accepted).
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Seed as voxel indices, `I,J,K`.
    #[arg(long)]
    pub seed_voxel: Option<String>,
    /// Border seed in world millimetres; repeatable.
    #[arg(long = "border", allow_hyphen_values = true)]
    pub borders: Vec<String>,
    #[arg(long)]
    pub delta_r: Option<usize>,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// `AUTO` or a fixed threshold.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Output mask (MetaImage).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional surface mesh (Wavefront OBJ).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Include timings in the result line.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON array of case rows (or an object with a `cases` array).
    #[arg(long)]
    pub cases: PathBuf,
    /// `.txt` for the aligned table, `.json` for the machine-readable report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Volume to segment; a noisy 20 mm sphere phantom when absent.
    #[arg(long)]
    pub volume: Option<PathBuf>,
    /// Seed in world millimetres; the volume centre when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, default_value = "nuggetcut-data")]
    pub data_dir: PathBuf,
    /// Largest accepted upload in MiB.
    #[arg(long, default_value_t = 512)]
    pub max_upload_mib: usize,
    /// Largest accepted volume in voxels.
    #[arg(long)]
    pub max_voxels: Option<usize>,
    /// Live-channel coalescing window in milliseconds.
    #[arg(long)]
    pub coalesce_ms: Option<u64>,
}

/// Parses `X,Y,Z` with an optional `mm` suffix.
pub fn parse_point(s: &str) -> Result<Vec3, CliError> {
    let t = s.trim();
    let t = t.strip_suffix("mm").unwrap_or(t);
    let parts: Vec<&str> = t.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("expected X,Y,Z, got `{s}`")));
    }
    let mut p = [0.0; 3];
    for (k, part) in parts.iter().enumerate() {
        p[k] = part
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Usage(format!("bad coordinate `{part}` in `{s}`")))?;
    }
    Ok(p)
}

pub fn parse_voxel(s: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("expected I,J,K, got `{s}`")));
    }
    let mut v = [0usize; 3];
    for (k, part) in parts.iter().enumerate() {
        v[k] = part
            .parse()
            .map_err(|_| CliError::Usage(format!("bad voxel index `{part}` in `{s}`")))?;
    }
    Ok(v)
}

pub fn apply_lattice_args(
    params: &mut SegmentationParams,
    args: &LatticeArgs,
) -> Result<(), CliError> {
    if let Some(rays) = args.rays {
        params.refinement_level = Polyhedron::level_for_ray_count(rays).ok_or_else(|| {
            CliError::Usage(format!(
                "--rays must be one of {LEVEL_VERTEX_COUNTS:?}, got {rays}"
            ))
        })?;
    }
    if let Some(n) = args.nodes {
        params.nodes_per_ray = n;
    }
    if let Some(r) = args.radius {
        params.max_radius_mm = r;
    }
    Ok(())
}

fn params_for(args: &SegmentArgs) -> Result<SegmentationParams, CliError> {
    let mut params = SegmentationParams::default();
    apply_lattice_args(&mut params, &args.lattice)?;
    if let Some(d) = args.delta_r {
        params.delta_r = d;
    }
    if let Some(tau) = &args.tau {
        if tau.eq_ignore_ascii_case("auto") {
            params.tau_mode = TauMode::Auto;
        } else {
            params.tau_mode = TauMode::Fixed;
            params.tau_fixed = tau.parse().map_err(|_| {
                CliError::Usage(format!("--tau must be AUTO or a number, got `{tau}`"))
            })?;
        }
    }
    if let Some(s) = args.strategy {
        params.strategy = match s {
            StrategyArg::Threshold => Strategy::Threshold,
            StrategyArg::Derivative => Strategy::Derivative,
        };
    }
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(params)
}

fn volume_centre(volume: &Volume) -> Vec3 {
    let (lo, hi) = volume.geometry().hull();
    [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]))
}

fn cmd_phantom(a: &PhantomArgs) -> Result<Value, CliError> {
    let text = fs::read_to_string(&a.spec).map_err(|e| io_err(&a.spec, e))?;
    let spec: PhantomSpec = serde_json::from_str(&text).map_err(|e| io_err(&a.spec, e))?;
    let (volume, truth) = make_phantom(&spec)?;
    save_volume(&volume, &a.out)?;
    if let Some(t) = &a.truth {
        save_mask(&truth, t)?;
    }
    Ok(json!({
        "command": "phantom",
        "volume": a.out,
        "truth": a.truth,
        "dims": volume.dims(),
        "lesion_voxels": truth.count(),
        "lesion_volume_mm3": truth.physical_volume_mm3(),
    }))
}

fn cmd_segment(a: &SegmentArgs) -> Result<Value, CliError> {
    let params = params_for(a)?;
    let borders = a
        .borders
        .iter()
        .map(|b| parse_point(b))
        .collect::<Result<Vec<_>, _>>()?;
    let volume = load_volume(&a.volume)?;
    let seed = match (&a.seed, &a.seed_voxel) {
        (Some(s), _) => parse_point(s)?,
        (None, Some(v)) => {
            let [i, j, k] = parse_voxel(v)?;
            let d = volume.dims();
            if i >= d[0] || j >= d[1] || k >= d[2] {
                return Err(CliError::Algorithm(format!(
                    "seed voxel {v} outside dims {d:?}"
                )));
            }
            volume.geometry().world(i, j, k)
        }
        (None, None) => unreachable!("clap requires one seed form"),
    };
    let seg = segment_volume(&volume, &params, seed, &borders)?;
    save_mask(&seg.mask, &a.out)?;
    if let Some(mesh) = &a.mesh {
        fs::write(mesh, seg.surface.to_obj()).map_err(|e| io_err(mesh, e))?;
    }
    let s = seg.summary();
    let mut out = json!({
        "command": "segment",
        "mask": a.out,
        "mesh": a.mesh,
        "seed": seg.seed,
        "border_seeds": borders,
        "ray_count": s.ray_count,
        "nodes_per_ray": params.nodes_per_ray,
        "delta_r": params.delta_r,
        "k_min": s.k_min,
        "k_max": s.k_max,
        "radius_min_mm": s.radius_min_mm,
        "radius_max_mm": s.radius_max_mm,
        "radius_mean_mm": s.radius_mean_mm,
        "voxel_count": s.voxel_count,
        "volume_mm3": seg.mask.physical_volume_mm3(),
        "avg_used": s.avg_used,
        "tau_used": s.tau_used,
        "flow_value": s.flow_value,
    });
    if a.timing {
        out["recompute_ms"] = json!(s.recompute_ms);
        out["voxelize_ms"] = json!(s.voxelize_ms);
        out["elapsed_ms"] = json!(s.elapsed_ms);
    }
    Ok(out)
}

fn cmd_eval(a: &EvalArgs, err: &mut dyn Write) -> Result<Value, CliError> {
    let reference = load_mask(&a.reference)?;
    let test = load_mask(&a.test)?;
    let d = dice(&reference, &test)?;
    let _ = writeln!(err, "DSC {d:.4} ({:.2} %)", 100.0 * d);
    Ok(json!({
        "command": "eval",
        "dsc": d,
        "dsc_percent": 100.0 * d,
        "reference_voxels": reference.count(),
        "test_voxels": test.count(),
        "reference_volume_mm3": reference.physical_volume_mm3(),
        "test_volume_mm3": test.physical_volume_mm3(),
    }))
}

pub fn parse_cases(text: &str) -> serde_json::Result<Vec<CaseRow>> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Rows(Vec<CaseRow>),
        Wrapped { cases: Vec<CaseRow> },
    }
    Ok(match serde_json::from_str(text)? {
        Doc::Rows(r) => r,
        Doc::Wrapped { cases } => cases,
    })
}

fn cmd_report(a: &ReportArgs) -> Result<Value, CliError> {
    let ext = a
        .out
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let json_out = match ext.as_deref() {
        Some("json") => true,
        Some("txt") => false,
        _ => return Err(CliError::Usage("--out must end in .txt or .json".into())),
    };
    let text = fs::read_to_string(&a.cases).map_err(|e| io_err(&a.cases, e))?;
    let cases = parse_cases(&text).map_err(|e| io_err(&a.cases, e))?;
    let report = build_report(&cases)?;
    let body = if json_out {
        report.to_json()?
    } else {
        report.to_text()
    };
    fs::write(&a.out, body).map_err(|e| io_err(&a.out, e))?;
    Ok(json!({
        "command": "report",
        "out": a.out,
        "cases": report.cases.len(),
        "dsc_mean": report.overall.dsc.map(|d| d.mean),
        "dsc_stddev": report.overall.dsc.map(|d| d.stddev),
        "volume_p": report.volume_test.result.map(|r| r.p_value),
        "subgroup_p": report.subgroup_test.result.map(|r| r.p_value),
    }))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn cmd_bench(a: &BenchArgs, err: &mut dyn Write) -> Result<Value, CliError> {
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let mut params = SegmentationParams::default();
    apply_lattice_args(&mut params, &a.lattice)?;
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let volume = match &a.volume {
        Some(p) => load_volume(p)?,
        None => make_phantom(&PhantomSpec::sphere(20.0, 12.0).with_noise(5.0, 1))?.0,
    };
    let seed = match &a.seed {
        Some(s) => parse_point(s)?,
        None => volume_centre(&volume),
    };
    let mut recompute = Vec::with_capacity(a.repeats);
    let mut voxelize = Vec::with_capacity(a.repeats);
    let mut elapsed = Vec::with_capacity(a.repeats);
    for _ in 0..a.repeats {
        let seg = segment_volume(&volume, &params, seed, &[])?;
        recompute.push(seg.recompute_ms);
        voxelize.push(seg.voxelize_ms);
        elapsed.push(seg.elapsed_ms);
    }
    for v in [&mut recompute, &mut voxelize, &mut elapsed] {
        v.sort_by(f64::total_cmp);
    }
    let _ = writeln!(
        err,
        "{} rays x {} nodes: recompute median {:.1} ms, p95 {:.1} ms; voxelize median {:.1} ms",
        params.ray_count(),
        params.nodes_per_ray,
        median(&recompute),
        percentile(&recompute, 0.95),
        median(&voxelize)
    );
    Ok(json!({
        "command": "bench",
        "rays": params.ray_count(),
        "nodes": params.nodes_per_ray,
        "repeats": a.repeats,
        "median_ms": median(&recompute),
        "p95_ms": percentile(&recompute, 0.95),
        "min_ms": recompute[0],
        "max_ms": recompute[recompute.len() - 1],
        "voxelize_median_ms": median(&voxelize),
        "voxelize_p95_ms": percentile(&voxelize, 0.95),
        "elapsed_median_ms": median(&elapsed),
    }))
}

fn cmd_serve(a: &ServeArgs) -> Result<Value, CliError> {
    let mut config = nuggetcut_service::ServiceConfig::new(&a.data_dir);
    config.max_upload_bytes = a.max_upload_mib.saturating_mul(1 << 20);
    if let Some(v) = a.max_voxels {
        config.max_voxels = v;
    }
    if let Some(ms) = a.coalesce_ms {
        config.coalesce_window = Duration::from_millis(ms);
    }
    nuggetcut_service::serve_blocking(config, &a.bind)
        .map_err(|e| CliError::Io(format!("serve: {e}")))?;
    Ok(json!({"command": "serve", "bind": a.bind, "stopped": true}))
}

fn check_threads_env(err: &mut dyn Write) {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if v.trim() != "1" {
            let _ = writeln!(
                err,
                "note: {THREADS_ENV}={v} ignored, computation is single-threaded"
            );
        }
    }
}

pub fn execute(command: &Command, err: &mut dyn Write) -> Result<Value, CliError> {
    match command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a, err),
        Command::Report(a) => cmd_report(a),
        Command::Bench(a) => cmd_bench(a, err),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Runs with explicit output streams and returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    check_threads_env(err);
    match execute(&cli.command, err) {
        Ok(v) => {
            let _ = writeln!(out, "{v}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(
        argv,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}
