//! `vfield`: command-line front end for volume, curvature, index, rhumb
//! tracing, and variational minimization of unit tangent fields on the
//! twice-punctured sphere.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
//! 4 invariant violation. Diagnostics are written before a nonzero exit
//! whenever a report exists, so failures stay inspectable.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use vfield_core::acceptance::{run_criterion_seeded, CRITERION_COUNT};
use vfield_core::curvature::curvatures_closed_form;
use vfield_core::index::{all_index_reports, index_by_winding, IndexMethod, IndexReport};
use vfield_core::loxodrome::{trace_rhumb, TraceOptions, TraceTermination};
use vfield_core::sphere::{Pole, SphericalPoint};
use vfield_core::varmin::{minimize, MinimizeOptions};
use vfield_core::volume::{lower_bound_s2, sharpness_residuals, volume_total, VolumeOptions};

mod config;
mod output;

use config::{
    parse_angle, parse_start, pick, pick_opt, resolve_field, FileConfig, OutputFormat, Sources,
};
use output::{csv_document, envelope};

/// Probe parallel for index measurements, radians from the equator.
const PROBE_LATITUDE: f64 = 0.8;
/// Quadrature slack allowed when checking the volume against its index bound.
const BOUND_SLACK: f64 = 1e-4;

/// Failures carry the exit code contract.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad config file, unreadable inputs. Exit 2.
    Config(String),
    /// A numerical procedure hit its budget without meeting tolerance. Exit 3.
    NonConvergence(String),
    /// A quantity violated an identity it must satisfy. Exit 4.
    Invariant(String),
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn describe(&self) -> (&'static str, &str) {
        match self {
            Failure::Config(msg) => ("configuration error", msg),
            Failure::NonConvergence(msg) => ("did not converge", msg),
            Failure::Invariant(msg) => ("invariant violation", msg),
        }
    }
}

impl From<vfield_core::Error> for Failure {
    fn from(err: vfield_core::Error) -> Self {
        use vfield_core::Error as E;
        match &err {
            E::InvalidLatitude(_)
            | E::PoleProximity { .. }
            | E::InvalidDomain(_)
            | E::InvalidGrid(_)
            | E::Io(_)
            | E::Json(_) => Failure::Config(err.to_string()),
            E::NonConvergence { .. } | E::StepCollapse { .. } | E::LineSearchFailure { .. } => {
                Failure::NonConvergence(err.to_string())
            }
            E::NonFinite { .. } => Failure::Invariant(err.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "vfield",
    version,
    about = "Volume, curvature, index, tracing, and minimization for unit tangent fields on the twice-punctured sphere",
    after_help = "All angles are radians; values beyond a full turn are rejected rather than wrapped.\n\
                  A JSON config file named by VFIELD_LAB_CONFIG supplies defaults; flags override it."
)]
struct Cli {
    /// Write the primary artifact here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Artifact format. Report commands emit json; curvature-map and trace
    /// default to csv and also accept json.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    /// Folded into the generator seeds of the randomized verify scenarios.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for the integration sweeps; reductions are
    /// order-deterministic at any pool size.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FieldArgs {
    /// Constant-bearing field, angle from east in radians.
    #[arg(long, value_name = "THETA0")]
    loxodromic: Option<f64>,

    /// Single-mode field: k=<winding>,a=<amplitude>,m=<mode>[,theta0=..][,phase=..].
    #[arg(long, value_name = "SPEC")]
    test_field: Option<String>,

    /// Angle-grid checkpoint to evaluate.
    #[arg(long, value_name = "PATH")]
    grid: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    /// Latitude resolution.
    #[arg(long, value_name = "N")]
    nphi: Option<usize>,

    /// Longitude resolution.
    #[arg(long, value_name = "N")]
    nlambda: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Field volume with hemisphere split, index lower bound, and sharpness
    /// residuals.
    Volume {
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        mesh: MeshArgs,
    },

    /// Tabulate both geodesic curvatures over a latitude-longitude mesh.
    CurvatureMap {
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        /// Polar clearance of the sampled band, radians.
        #[arg(long, value_name = "RAD")]
        epsilon: Option<f64>,
    },

    /// Puncture indices by probe-circle winding and by connection-form
    /// holonomy, at both poles.
    Index {
        #[command(flatten)]
        field: FieldArgs,
    },

    /// Trace a constant-bearing line and report its crossing-angle fidelity.
    Trace {
        /// Bearing from east, radians.
        #[arg(long, value_name = "RAD")]
        theta0: Option<f64>,
        /// Start point "phi,lambda" in radians.
        #[arg(long, value_name = "PHI,LAMBDA")]
        start: Option<String>,
        /// Arc-length budget; omit to run to a pole or the built-in cap.
        #[arg(long, value_name = "S")]
        smax: Option<f64>,
        /// Pole cutoff colatitude override, radians.
        #[arg(long, value_name = "RAD")]
        epsilon: Option<f64>,
    },

    /// Gradient descent on the discretized volume, writing a resumable
    /// checkpoint.
    Minimize {
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        mesh: MeshArgs,
    },

    /// Run the verification scenarios and report machine-readable pass/fail.
    Verify {
        /// Skip the two long-running scenarios.
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Volume { .. } => "volume",
            Command::CurvatureMap { .. } => "curvature-map",
            Command::Index { .. } => "index",
            Command::Trace { .. } => "trace",
            Command::Minimize { .. } => "minimize",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Settings shared by every subcommand, already merged with the config file.
struct Common {
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
    seed: Option<u64>,
    threads: Option<usize>,
    config_path: Option<PathBuf>,
}

impl Common {
    /// Report commands have a single JSON schema; asking for csv is an error.
    fn require_json(&self, command: &str) -> CliResult<OutputFormat> {
        match self.format {
            Some(OutputFormat::Csv) => Err(Failure::Config(format!(
                "{command} emits a json report; --format csv is not available here"
            ))),
            _ => Ok(OutputFormat::Json),
        }
    }

    /// Tabular commands default to csv and also offer the json envelope.
    fn tabular_format(&self) -> OutputFormat {
        self.format.unwrap_or(OutputFormat::Csv)
    }

    /// Shared part of the config echo.
    fn base_echo(&self, format: OutputFormat) -> Map<String, Value> {
        let mut map = Map::new();
        map.insert("format".into(), json!(format.name()));
        map.insert(
            "out".into(),
            json!(self.out.as_ref().map(|p| p.display().to_string())),
        );
        map.insert("seed".into(), json!(self.seed));
        map.insert("threads".into(), json!(self.threads));
        map
    }
}

fn merge_echo(map: &mut Map<String, Value>, fragment: Value) {
    if let Value::Object(fields) = fragment {
        map.extend(fields);
    }
}

/// Where secondary notes go once the primary artifact has claimed a stream:
/// stdout when the artifact went to a file, stderr when it occupies stdout.
struct Notes {
    to_stdout: bool,
}

impl Notes {
    fn line(&self, text: &str) {
        if self.to_stdout {
            println!("{text}");
        } else {
            eprintln!("{text}");
        }
    }

    fn raw(&self, text: &str) {
        if self.to_stdout {
            print!("{text}");
        } else {
            eprint!("{text}");
        }
    }
}

/// Writes the primary artifact to `--out` or stdout.
fn write_artifact(artifact: &str, out: &Option<PathBuf>) -> CliResult<Notes> {
    match out {
        Some(path) => {
            fs::write(path, artifact).map_err(|err| {
                Failure::Config(format!("writing {}: {err}", path.display()))
            })?;
            Ok(Notes { to_stdout: true })
        }
        None => {
            print!("{artifact}");
            Ok(Notes { to_stdout: false })
        }
    }
}

fn validate_mesh(n: usize, name: &str, lo: usize, hi: usize) -> CliResult<usize> {
    if (lo..=hi).contains(&n) {
        Ok(n)
    } else {
        Err(Failure::Config(format!(
            "{name} = {n} is outside the supported range {lo}..={hi}"
        )))
    }
}

fn validate_clearance(value: f64, name: &str) -> CliResult<f64> {
    if value.is_finite() && (1e-9..=0.5).contains(&value) {
        Ok(value)
    } else {
        Err(Failure::Config(format!(
            "{name} = {value} must lie in [1e-9, 0.5] radians"
        )))
    }
}

/// Distance between two angles on the circle.
fn circle_distance(a: f64, b: f64) -> f64 {
    ((a - b + PI).rem_euclid(TAU) - PI).abs()
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (kind, message) = failure.describe();
            eprintln!("vfield: {kind}: {message}");
            ExitCode::from(failure.exit_code())
        }
    }
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    let sources = Sources::load()?;
    sources.check_command(cli.command.name())?;

    let common = Common {
        out: pick_opt(cli.out, sources.file.out.clone()),
        format: pick_opt(cli.format, sources.format()?),
        seed: pick_opt(cli.seed, sources.file.seed),
        threads: pick_opt(cli.threads, sources.file.threads),
        config_path: sources.path.clone(),
    };

    if let Some(threads) = common.threads {
        if !(1..=1024).contains(&threads) {
            return Err(Failure::Config(format!(
                "threads = {threads} must lie in 1..=1024"
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|err| Failure::Config(format!("thread pool: {err}")))?;
    }

    let file = &sources.file;
    match cli.command {
        Command::Volume { field, mesh } => cmd_volume(field, mesh, &common, file),
        Command::CurvatureMap { field, mesh, epsilon } => {
            cmd_curvature_map(field, mesh, epsilon, &common, file)
        }
        Command::Index { field } => cmd_index(field, &common, file),
        Command::Trace { theta0, start, smax, epsilon } => {
            cmd_trace(theta0, start, smax, epsilon, &common, file)
        }
        Command::Minimize { field, mesh } => cmd_minimize(field, mesh, &common, file),
        Command::Verify { quick } => cmd_verify(quick, &common, file),
    }
}

#[derive(Serialize)]
struct Hemispheres {
    north: f64,
    south: f64,
}

#[derive(Serialize)]
struct BoundBlock {
    #[serde(rename = "I_N")]
    i_n: i64,
    #[serde(rename = "I_S")]
    i_s: i64,
    value: f64,
    reliable: bool,
}

#[derive(Serialize)]
struct SharpnessBlock {
    sup_i: f64,
    sup_ii: f64,
}

#[derive(Serialize)]
struct VolumeResult {
    volume: f64,
    error_estimate: f64,
    converged: bool,
    per_hemisphere: Hemispheres,
    bound: BoundBlock,
    sharpness: SharpnessBlock,
    anchors: BTreeMap<&'static str, &'static str>,
}

fn volume_anchors() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        (
            "volume",
            "integral of sqrt(1 + kappa^2 + tau^2) over the sphere; = 2*pi^2 exactly when the bearing angle is constant",
        ),
        ("per_hemisphere", "= pi^2 per hemisphere at the constant-bearing minimum"),
        (
            "bound.value",
            "= 2*pi*(pi + |I_N| + |I_S| - 2); the volume never sits below this",
        ),
        (
            "sharpness.sup_i",
            "sup | |sin phi| - cos(phi) sqrt(kappa^2 + tau^2) |; = 0 exactly at minimizers",
        ),
        (
            "sharpness.sup_ii",
            "sup | kappa sin(theta) - tau cos(theta) |; = 0 exactly at minimizers",
        ),
    ])
}

fn cmd_volume(
    field_args: FieldArgs,
    mesh: MeshArgs,
    common: &Common,
    file: &FileConfig,
) -> CliResult<()> {
    let format = common.require_json("volume")?;
    let choice = resolve_field(
        field_args.loxodromic,
        field_args.test_field.as_deref(),
        field_args.grid.as_deref(),
        file,
    )?;
    let (field, field_echo) = choice.build()?;
    let n_phi = validate_mesh(pick(mesh.nphi, file.nphi, 256), "nphi", 8, 8192)?;
    let n_lambda = validate_mesh(pick(mesh.nlambda, file.nlambda, 512), "nlambda", 8, 8192)?;

    let opts = VolumeOptions { n_phi, n_lambda, ..VolumeOptions::default() };
    let report = volume_total(&field, &opts)?;
    let north = index_by_winding(&field, Pole::North, PROBE_LATITUDE)?;
    let south = index_by_winding(&field, Pole::South, PROBE_LATITUDE)?;
    let indices_reliable = north.reliable && south.reliable;
    let bound_value = lower_bound_s2(north.index, south.index);
    let sharp = sharpness_residuals(&field);

    let result = VolumeResult {
        volume: report.total,
        error_estimate: report.error_estimate,
        converged: report.converged,
        per_hemisphere: Hemispheres { north: report.north, south: report.south },
        bound: BoundBlock {
            i_n: north.index,
            i_s: south.index,
            value: bound_value,
            reliable: indices_reliable,
        },
        sharpness: SharpnessBlock { sup_i: sharp.sup_i, sup_ii: sharp.sup_ii },
        anchors: volume_anchors(),
    };

    let mut echo = common.base_echo(format);
    merge_echo(&mut echo, field_echo);
    echo.insert("nphi".into(), json!(n_phi));
    echo.insert("nlambda".into(), json!(n_lambda));
    let text = envelope("volume", &common.config_path, Value::Object(echo), result);
    write_artifact(&text, &common.out)?;

    if !report.converged {
        return Err(Failure::NonConvergence(format!(
            "volume refinement at {n_phi}x{n_lambda}: error estimate {:.2e} exceeds {:.1e}",
            report.error_estimate, opts.convergence_tol
        )));
    }
    if indices_reliable && report.total < bound_value - BOUND_SLACK {
        return Err(Failure::Invariant(format!(
            "volume {:.12} sits below the index bound {bound_value:.12}",
            report.total
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CurvatureMapResult {
    rows: usize,
    method: &'static str,
    epsilon: f64,
    sup_kappa: f64,
    sup_tau: f64,
    /// `[phi, lambda, kappa, tau]` per sample; populated for `--format json`.
    samples: Option<Vec<[f64; 4]>>,
    anchors: BTreeMap<&'static str, &'static str>,
}

fn curvature_anchors() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("kappa", "geodesic curvature of the flow line: -theta_v - cos(theta) tan(phi)"),
        ("tau", "geodesic curvature of the orthogonal flow: -theta_vperp - sin(theta) tan(phi)"),
    ])
}

fn cmd_curvature_map(
    field_args: FieldArgs,
    mesh: MeshArgs,
    epsilon: Option<f64>,
    common: &Common,
    file: &FileConfig,
) -> CliResult<()> {
    let format = common.tabular_format();
    let choice = resolve_field(
        field_args.loxodromic,
        field_args.test_field.as_deref(),
        field_args.grid.as_deref(),
        file,
    )?;
    let (field, field_echo) = choice.build()?;
    let epsilon = validate_clearance(pick(epsilon, file.epsilon, 1e-3), "epsilon")?;
    let n_phi = validate_mesh(pick(mesh.nphi, file.nphi, 61), "nphi", 2, 1024)?;
    let n_lambda = validate_mesh(pick(mesh.nlambda, file.nlambda, 120), "nlambda", 1, 2048)?;

    let band = FRAC_PI_2 - epsilon;
    let d_phi = 2.0 * band / (n_phi - 1) as f64;
    let d_lambda = TAU / n_lambda as f64;
    let mut samples = Vec::with_capacity(n_phi * n_lambda);
    let (mut sup_kappa, mut sup_tau) = (0.0f64, 0.0f64);
    for i in 0..n_phi {
        let phi = if i + 1 == n_phi { band } else { -band + d_phi * i as f64 };
        for j in 0..n_lambda {
            let lambda = d_lambda * j as f64;
            let point = SphericalPoint::new(phi, lambda)?;
            let pair = curvatures_closed_form(&field, &point);
            sup_kappa = sup_kappa.max(pair.kappa.abs());
            sup_tau = sup_tau.max(pair.tau.abs());
            samples.push([phi, lambda, pair.kappa, pair.tau]);
        }
    }

    let mut echo = common.base_echo(format);
    merge_echo(&mut echo, field_echo);
    echo.insert("epsilon".into(), json!(epsilon));
    echo.insert("nphi".into(), json!(n_phi));
    echo.insert("nlambda".into(), json!(n_lambda));

    let result = CurvatureMapResult {
        rows: samples.len(),
        method: "closed-form",
        epsilon,
        sup_kappa,
        sup_tau,
        samples: matches!(format, OutputFormat::Json).then(|| samples.clone()),
        anchors: curvature_anchors(),
    };
    let report = envelope("curvature-map", &common.config_path, Value::Object(echo), result);

    match format {
        OutputFormat::Json => {
            write_artifact(&report, &common.out)?;
        }
        OutputFormat::Csv => {
            let rows = samples
                .iter()
                .map(|[phi, lambda, kappa, tau]| format!("{phi},{lambda},{kappa},{tau},closed-form"));
            let csv = csv_document("phi,lambda,kappa,tau,method", rows);
            let notes = write_artifact(&csv, &common.out)?;
            notes.raw(&report);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct IndexResult {
    probe_phi: f64,
    /// Winding north, winding south, connection-form north, connection-form
    /// south.
    reports: Vec<IndexReport>,
    /// Sum of the two winding-method indices; absent while unresolved.
    index_sum: Option<i64>,
    anchors: BTreeMap<&'static str, &'static str>,
}

fn index_anchors() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        (
            "reports[].raw",
            "probe-parallel winding, or (cap curvature minus boundary holonomy) / 2*pi, before rounding",
        ),
        (
            "index_sum",
            "= 2, the Euler characteristic of the sphere, whenever both punctures resolve",
        ),
    ])
}

fn cmd_index(field_args: FieldArgs, common: &Common, file: &FileConfig) -> CliResult<()> {
    let format = common.require_json("index")?;
    let choice = resolve_field(
        field_args.loxodromic,
        field_args.test_field.as_deref(),
        field_args.grid.as_deref(),
        file,
    )?;
    let (field, field_echo) = choice.build()?;
    let reports = all_index_reports(&field, PROBE_LATITUDE)?;

    let all_reliable = reports.iter().all(|r| r.reliable);
    let winding: Vec<&IndexReport> = reports
        .iter()
        .filter(|r| r.method == IndexMethod::Winding)
        .collect();
    let index_sum = (winding.len() == 2 && winding.iter().all(|r| r.reliable))
        .then(|| winding.iter().map(|r| r.index).sum::<i64>());

    let mut violation = None;
    for pole in [Pole::North, Pole::South] {
        let at_pole: Vec<&IndexReport> =
            reports.iter().filter(|r| r.pole == pole).collect();
        if at_pole.len() == 2
            && at_pole.iter().all(|r| r.reliable)
            && at_pole[0].index != at_pole[1].index
        {
            violation = Some(format!(
                "{:?} pole: winding gives {} but connection-form gives {}",
                pole, at_pole[0].index, at_pole[1].index
            ));
        }
    }
    if violation.is_none() {
        if let Some(sum) = index_sum {
            if sum != 2 {
                violation = Some(format!("puncture indices sum to {sum}, not 2"));
            }
        }
    }

    let result = IndexResult {
        probe_phi: PROBE_LATITUDE,
        reports,
        index_sum,
        anchors: index_anchors(),
    };
    let mut echo = common.base_echo(format);
    merge_echo(&mut echo, field_echo);
    let text = envelope("index", &common.config_path, Value::Object(echo), result);
    write_artifact(&text, &common.out)?;

    if !all_reliable {
        return Err(Failure::NonConvergence(
            "index sampling ladder exhausted without locking onto an integer; raw values are in the report"
                .into(),
        ));
    }
    if let Some(message) = violation {
        return Err(Failure::Invariant(message));
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceResult {
    theta0: f64,
    samples: usize,
    termination: &'static str,
    arc_length: f64,
    arc_length_to_pole: Option<f64>,
    max_crossing_deviation: f64,
    /// `[s, phi, lambda, x, y, z]` per sample; populated for `--format json`.
    polyline: Option<Vec<[f64; 6]>>,
    anchors: BTreeMap<&'static str, &'static str>,
}

fn trace_anchors() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        (
            "arc_length_to_pole",
            "= s_last + (pi/2 - |phi_last|) / |sin theta0|, the exact remaining climb",
        ),
        (
            "max_crossing_deviation",
            "sup over segments of |atan2(d psi, d lambda) - theta0|; = 0 on an exact rhumb",
        ),
    ])
}

fn cmd_trace(
    theta0: Option<f64>,
    start: Option<String>,
    smax: Option<f64>,
    epsilon: Option<f64>,
    common: &Common,
    file: &FileConfig,
) -> CliResult<()> {
    let format = common.tabular_format();
    let theta0 = pick_opt(theta0, file.theta0)
        .ok_or_else(|| Failure::Config("trace needs --theta0 <radians>".into()))?;
    let theta0 = parse_angle(theta0, "theta0")?;
    let start_text = pick(start, file.start.clone(), "0,0".to_string());
    let start_point = parse_start(&start_text)?;
    let smax = pick_opt(smax, file.smax);
    if let Some(s) = smax {
        if !(s.is_finite() && s > 0.0 && s <= 1e4) {
            return Err(Failure::Config(format!(
                "smax = {s} must be a positive arc length at most 1e4"
            )));
        }
    }
    let cutoff = match pick_opt(epsilon, file.epsilon) {
        Some(value) => Some(validate_clearance(value, "epsilon")?),
        None => None,
    };

    let defaults = TraceOptions::default();
    let opts = TraceOptions {
        max_arc_length: smax.unwrap_or(defaults.max_arc_length),
        pole_cutoff: cutoff.unwrap_or(defaults.pole_cutoff),
        ..defaults
    };
    let trace = trace_rhumb(theta0, &start_point, &opts)?;

    let deviation = trace
        .crossing_angles()
        .iter()
        .map(|&angle| circle_distance(angle, theta0))
        .fold(0.0f64, f64::max);
    let polyline: Vec<[f64; 6]> = trace
        .samples
        .iter()
        .map(|sample| {
            let p = sample.embed();
            [sample.s, sample.phi, sample.lambda, p[0], p[1], p[2]]
        })
        .collect();

    let mut echo = common.base_echo(format);
    echo.insert("theta0".into(), json!(theta0));
    echo.insert("start".into(), json!(start_text));
    echo.insert("smax".into(), json!(smax));
    echo.insert("epsilon".into(), json!(opts.pole_cutoff));

    let result = TraceResult {
        theta0,
        samples: polyline.len(),
        termination: match trace.termination {
            TraceTermination::ArcLength => "arc-length",
            TraceTermination::PoleReached => "pole",
        },
        arc_length: trace.arc_length(),
        arc_length_to_pole: trace.arc_length_to_pole(),
        max_crossing_deviation: deviation,
        polyline: matches!(format, OutputFormat::Json).then(|| polyline.clone()),
        anchors: trace_anchors(),
    };
    let report = envelope("trace", &common.config_path, Value::Object(echo), result);

    match format {
        OutputFormat::Json => {
            write_artifact(&report, &common.out)?;
        }
        OutputFormat::Csv => {
            let rows = polyline
                .iter()
                .map(|[s, phi, lambda, x, y, z]| format!("{s},{phi},{lambda},{x},{y},{z}"));
            let csv = csv_document("s,phi,lambda,x,y,z", rows);
            let notes = write_artifact(&csv, &common.out)?;
            notes.raw(&report);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MinimizeResult {
    checkpoint: String,
    n_phi: usize,
    n_lambda: usize,
    winding: i64,
    resumed_from_iteration: Option<usize>,
    iterations: usize,
    objective_initial: f64,
    final_volume: f64,
    loxodromy_defect: f64,
    gradient_sup: f64,
    converged: bool,
    exploratory: bool,
    anchors: BTreeMap<&'static str, &'static str>,
}

fn minimize_anchors() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        (
            "final_volume",
            ">= 2*pi^2, with equality exactly at constant-bearing grids of winding 0",
        ),
        (
            "loxodromy_defect",
            "sup over nodes of sqrt((theta_lambda / cos phi)^2 + theta_phi^2); = 0 at minimizers",
        ),
    ])
}

fn cmd_minimize(
    field_args: FieldArgs,
    mesh: MeshArgs,
    common: &Common,
    file: &FileConfig,
) -> CliResult<()> {
    common.require_json("minimize")?;
    let choice = resolve_field(
        field_args.loxodromic,
        field_args.test_field.as_deref(),
        field_args.grid.as_deref(),
        file,
    )?;
    let n_phi = validate_mesh(pick(mesh.nphi, file.nphi, 64), "nphi", 4, 512)?;
    let n_lambda = validate_mesh(pick(mesh.nlambda, file.nlambda, 128), "nlambda", 4, 1024)?;
    let (grid0, resumed, field_echo) = choice.build_grid(n_phi, n_lambda)?;

    // --out names the checkpoint; the report always goes to stdout.
    let checkpoint = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("vfield-checkpoint.json"));

    let opts = MinimizeOptions::default();
    let (grid, report) = minimize(&grid0, &opts)?;
    let from_iteration = resumed.as_ref().map(|meta| meta.iteration);
    let total_iterations = from_iteration.unwrap_or(0) + report.iterations;
    grid.save_checkpoint(&checkpoint, total_iterations, report.final_volume)?;

    let mut echo = common.base_echo(OutputFormat::Json);
    merge_echo(&mut echo, field_echo);
    echo.insert("nphi".into(), json!(grid.n_phi()));
    echo.insert("nlambda".into(), json!(grid.n_lambda()));
    echo.insert("out".into(), json!(checkpoint.display().to_string()));

    let result = MinimizeResult {
        checkpoint: checkpoint.display().to_string(),
        n_phi: grid.n_phi(),
        n_lambda: grid.n_lambda(),
        winding: grid.winding(),
        resumed_from_iteration: from_iteration,
        iterations: report.iterations,
        objective_initial: report
            .objective_trace
            .first()
            .copied()
            .unwrap_or(report.final_volume),
        final_volume: report.final_volume,
        loxodromy_defect: report.loxodromy_defect,
        gradient_sup: report.gradient_sup,
        converged: report.converged,
        exploratory: report.exploratory,
        anchors: minimize_anchors(),
    };
    let text = envelope("minimize", &common.config_path, Value::Object(echo), result);
    print!("{text}");

    if !report.converged {
        return Err(Failure::NonConvergence(format!(
            "descent stopped after {} iterations with gradient sup {:.2e} above tolerance; checkpoint saved to {}",
            report.iterations,
            report.gradient_sup,
            checkpoint.display()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CriterionEntry {
    id: usize,
    name: &'static str,
    passed: bool,
}

#[derive(Serialize)]
struct VerifyResult {
    quick: bool,
    seed: u64,
    criteria: Vec<CriterionEntry>,
    passed: bool,
}

fn cmd_verify(quick_flag: bool, common: &Common, file: &FileConfig) -> CliResult<()> {
    let format = common.require_json("verify")?;
    let quick = quick_flag || file.quick.unwrap_or(false);
    let seed = common.seed.unwrap_or(0);
    // the two multi-second scenarios (randomized bound sweep, full descent)
    // are the ones --quick drops
    let ids: Vec<usize> = if quick {
        vec![1, 2, 3, 4, 5, 8, 9]
    } else {
        (1..=CRITERION_COUNT).collect()
    };

    let notes = Notes { to_stdout: common.out.is_some() };
    let mut criteria = Vec::with_capacity(ids.len());
    for id in ids {
        let report = run_criterion_seeded(id, seed);
        notes.line(&report.summary_line());
        criteria.push(CriterionEntry { id: report.id, name: report.name, passed: report.passed });
    }
    let passed_count = criteria.iter().filter(|c| c.passed).count();
    let all_passed = passed_count == criteria.len();
    notes.line(&format!(
        "verify: {passed_count}/{} scenarios passed{}",
        criteria.len(),
        if quick { " (quick subset)" } else { "" }
    ));

    let mut echo = common.base_echo(format);
    echo.insert("quick".into(), json!(quick));
    let failed = criteria.len() - passed_count;
    let result = VerifyResult { quick, seed, criteria, passed: all_passed };
    let text = envelope("verify", &common.config_path, Value::Object(echo), result);
    write_artifact(&text, &common.out)?;

    if !all_passed {
        return Err(Failure::Invariant(format!(
            "{failed} verification scenario(s) failed"
        )));
    }
    Ok(())
}
