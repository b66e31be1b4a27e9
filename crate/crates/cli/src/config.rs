//! Run configuration: an optional JSON config file named by `VFIELD_LAB_CONFIG`
//! supplies defaults, command-line flags override it key by key, and the
//! resolved values are echoed into every output header.

use std::env;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};
use vfield_core::loxodrome::{make_loxodromic_field, make_test_field, TestFieldSpec};
use vfield_core::sphere::{AngleField, SphericalPoint};
use vfield_core::varmin::{grid_from_field, CheckpointMeta, ThetaGrid};

use crate::{CliResult, Failure};

/// Environment variable naming the default config file.
pub const ENV_CONFIG: &str = "VFIELD_LAB_CONFIG";

/// Artifact encoding. Report-style commands emit only `json`; the tabular
/// commands (`curvature-map`, `trace`) default to `csv` and accept `json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn name(&self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }

    fn parse(text: &str) -> CliResult<Self> {
        match text {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Failure::Config(format!(
                "format `{other}` is not recognized (expected json or csv)"
            ))),
        }
    }
}

/// Keys accepted in the config file. Every key mirrors a flag; unknown keys
/// are rejected so typos fail loudly instead of silently using defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub loxodromic: Option<f64>,
    pub test_field: Option<String>,
    pub grid: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub nphi: Option<usize>,
    pub nlambda: Option<usize>,
    pub theta0: Option<f64>,
    pub start: Option<String>,
    pub smax: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quick: Option<bool>,
}

/// The config file, if the environment names one.
pub struct Sources {
    pub file: FileConfig,
    pub path: Option<PathBuf>,
}

impl Sources {
    pub fn load() -> CliResult<Self> {
        let Some(raw_path) = env::var_os(ENV_CONFIG) else {
            return Ok(Self { file: FileConfig::default(), path: None });
        };
        let path = PathBuf::from(raw_path);
        let text = fs::read_to_string(&path).map_err(|err| {
            Failure::Config(format!("config file {}: {err}", path.display()))
        })?;
        let file = serde_json::from_str(&text).map_err(|err| {
            Failure::Config(format!("config file {}: {err}", path.display()))
        })?;
        Ok(Self { file, path: Some(path) })
    }

    /// A file may pin the command it configures; invoking a different one is
    /// treated as a configuration mistake rather than silently ignored.
    pub fn check_command(&self, invoked: &str) -> CliResult<()> {
        match self.file.command.as_deref() {
            Some(pinned) if pinned != invoked => Err(Failure::Config(format!(
                "config file pins command `{pinned}` but `{invoked}` was invoked"
            ))),
            _ => Ok(()),
        }
    }

    pub fn format(&self) -> CliResult<Option<OutputFormat>> {
        self.file.format.as_deref().map(OutputFormat::parse).transpose()
    }
}

/// Flag value if given, else file value, else the built-in default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag value if given, else file value.
pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// All angle inputs are radians. Anything beyond a full turn in magnitude is
/// almost certainly degrees and is rejected instead of silently wrapped.
pub fn parse_angle(value: f64, name: &str) -> CliResult<f64> {
    if !value.is_finite() || value.abs() > TAU {
        return Err(Failure::Config(format!(
            "{name} = {value} is outside [-2*pi, 2*pi]; angles are radians, not degrees"
        )));
    }
    Ok(value)
}

fn parse_number(text: &str, name: &str) -> CliResult<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Failure::Config(format!("{name} `{text}` is not a number")))
}

/// `"phi,lambda"` in radians, latitude strictly inside the poles.
pub fn parse_start(text: &str) -> CliResult<SphericalPoint> {
    let (phi_text, lambda_text) = text.split_once(',').ok_or_else(|| {
        Failure::Config(format!("start `{text}` should be `phi,lambda` in radians"))
    })?;
    let phi = parse_number(phi_text, "start latitude")?;
    let lambda = parse_angle(parse_number(lambda_text, "start longitude")?, "start longitude")?;
    if !(phi.abs() < FRAC_PI_2) {
        return Err(Failure::Config(format!(
            "start latitude {phi} must lie strictly between -pi/2 and pi/2"
        )));
    }
    SphericalPoint::new(phi, lambda)
        .map_err(|err| Failure::Config(format!("start point: {err}")))
}

/// `k=<winding>,a=<amplitude>,m=<mode>` with optional `theta0=` and `phase=`.
pub fn parse_test_field(text: &str) -> CliResult<TestFieldSpec> {
    let mut spec = TestFieldSpec::default();
    let (mut saw_k, mut saw_a, mut saw_m) = (false, false, false);
    for part in text.split(',') {
        let part = part.trim();
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Failure::Config(format!("test-field entry `{part}` should be key=value"))
        })?;
        match key.trim() {
            "k" => {
                spec.winding = value.trim().parse().map_err(|_| {
                    Failure::Config(format!("test-field winding k `{value}` is not an integer"))
                })?;
                saw_k = true;
            }
            "a" => {
                spec.amplitude = parse_angle(parse_number(value, "test-field amplitude a")?, "a")?;
                saw_a = true;
            }
            "m" => {
                spec.mode = value.trim().parse().map_err(|_| {
                    Failure::Config(format!("test-field mode m `{value}` is not a positive integer"))
                })?;
                if spec.mode == 0 {
                    return Err(Failure::Config("test-field mode m must be at least 1".into()));
                }
                saw_m = true;
            }
            "theta0" => spec.theta0 = parse_angle(parse_number(value, "test-field theta0")?, "theta0")?,
            "phase" => spec.phase = parse_angle(parse_number(value, "test-field phase")?, "phase")?,
            other => {
                return Err(Failure::Config(format!(
                    "unknown test-field key `{other}` (known: k, a, m, theta0, phase)"
                )))
            }
        }
    }
    if !(saw_k && saw_a && saw_m) {
        return Err(Failure::Config(
            "test-field needs all of k=<winding>, a=<amplitude>, m=<mode>".into(),
        ));
    }
    Ok(spec)
}

/// The one field a command operates on.
#[derive(Debug, Clone)]
pub enum FieldChoice {
    Loxodromic(f64),
    TestField(TestFieldSpec),
    Grid(PathBuf),
}

/// Merges the field-selection trio. Flags act as a group: giving any of the
/// three on the command line hides all three file keys, so a file default
/// never conflicts with an explicit choice.
pub fn resolve_field(
    loxodromic: Option<f64>,
    test_field: Option<&str>,
    grid: Option<&Path>,
    file: &FileConfig,
) -> CliResult<FieldChoice> {
    let from_flags = loxodromic.is_some() || test_field.is_some() || grid.is_some();
    let (lox, tf, grid_path) = if from_flags {
        (loxodromic, test_field.map(str::to_owned), grid.map(Path::to_path_buf))
    } else {
        (file.loxodromic, file.test_field.clone(), file.grid.clone())
    };

    let given = usize::from(lox.is_some()) + usize::from(tf.is_some()) + usize::from(grid_path.is_some());
    if given == 0 {
        return Err(Failure::Config(
            "pick a field: --loxodromic <theta0>, --test-field <spec>, or --grid <checkpoint>".into(),
        ));
    }
    if given > 1 {
        return Err(Failure::Config(
            "field options are mutually exclusive; give exactly one of --loxodromic, --test-field, --grid".into(),
        ));
    }

    if let Some(theta0) = lox {
        return Ok(FieldChoice::Loxodromic(parse_angle(theta0, "loxodromic bearing")?));
    }
    if let Some(text) = tf {
        return Ok(FieldChoice::TestField(parse_test_field(&text)?));
    }
    Ok(FieldChoice::Grid(grid_path.expect("one option is set")))
}

impl FieldChoice {
    /// The field plus its config-echo fragment.
    pub fn build(&self) -> CliResult<(AngleField, Value)> {
        match self {
            FieldChoice::Loxodromic(theta0) => {
                Ok((make_loxodromic_field(*theta0), json!({ "loxodromic": theta0 })))
            }
            FieldChoice::TestField(spec) => Ok((
                make_test_field(spec),
                json!({ "test_field": {
                    "winding": spec.winding,
                    "amplitude": spec.amplitude,
                    "mode": spec.mode,
                    "theta0": spec.theta0,
                    "phase": spec.phase,
                }}),
            )),
            FieldChoice::Grid(path) => {
                let (grid, _) = ThetaGrid::load_checkpoint(path)?;
                let echo = json!({ "grid": path.display().to_string() });
                Ok((grid.to_field(), echo))
            }
        }
    }

    /// The starting grid for `minimize`: checkpoints resume as stored,
    /// analytic fields are sampled at the requested resolution.
    pub fn build_grid(
        &self,
        n_phi: usize,
        n_lambda: usize,
    ) -> CliResult<(ThetaGrid, Option<CheckpointMeta>, Value)> {
        match self {
            FieldChoice::Grid(path) => {
                let (grid, meta) = ThetaGrid::load_checkpoint(path)?;
                let echo = json!({ "grid": path.display().to_string() });
                Ok((grid, Some(meta), echo))
            }
            other => {
                let (field, echo) = other.build()?;
                let grid = grid_from_field(&field, n_phi, n_lambda)?;
                Ok((grid, None, echo))
            }
        }
    }
}
