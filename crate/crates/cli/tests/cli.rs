//! End-to-end tests driving the `vfield` binary: output schemas, exit codes,
//! config-file merging, and byte-level determinism.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const TWO_PI_SQ: f64 = 2.0 * PI * PI;

fn vfield() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vfield"));
    // keep the host environment from injecting defaults
    cmd.env_remove("VFIELD_LAB_CONFIG");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary launches")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Fresh scratch directory, removed on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("vfield-test-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).expect("scratch dir");
        Self(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

#[test]
fn volume_matches_the_constant_bearing_value() {
    let out = run_ok(vfield().args(["volume", "--loxodromic", "0.7853981633974483"]));
    let doc = stdout_json(&out);

    assert_eq!(doc["tool"], "vfield");
    assert_eq!(doc["command"], "volume");
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["config"]["nphi"], 256);
    assert_eq!(doc["config"]["nlambda"], 512);

    let result = &doc["result"];
    let volume = result["volume"].as_f64().unwrap();
    assert!((volume / TWO_PI_SQ - 1.0).abs() < 1e-6, "volume {volume}");
    assert!(result["converged"].as_bool().unwrap());

    for side in ["north", "south"] {
        let half = result["per_hemisphere"][side].as_f64().unwrap();
        assert!((half - PI * PI).abs() < 1e-6, "{side} {half}");
    }

    // unit indices make the bound land exactly on 2*pi^2
    assert_eq!(result["bound"]["I_N"], 1);
    assert_eq!(result["bound"]["I_S"], 1);
    let bound = result["bound"]["value"].as_f64().unwrap();
    assert_eq!(bound.to_bits(), TWO_PI_SQ.to_bits(), "bound {bound}");
    assert!(result["bound"]["reliable"].as_bool().unwrap());
    assert!(volume >= bound - 1e-4);

    assert!(result["sharpness"]["sup_i"].as_f64().unwrap() < 1e-10);
    assert!(result["sharpness"]["sup_ii"].as_f64().unwrap() < 1e-10);
}

#[test]
fn volume_rejects_degree_looking_angles() {
    let out = run(vfield().args(["volume", "--loxodromic", "45"]));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("radians"));
}

#[test]
fn report_commands_refuse_csv() {
    let out = run(vfield().args(["volume", "--loxodromic", "0.3", "--format", "csv"]));
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn field_options_are_mutually_exclusive() {
    let out = run(vfield().args([
        "volume",
        "--loxodromic",
        "0.3",
        "--test-field",
        "k=0,a=0.1,m=1",
    ]));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("exactly one"));
}

#[test]
fn json_output_is_byte_deterministic() {
    let args = ["volume", "--loxodromic", "0.3", "--nphi", "64", "--nlambda", "128"];
    let first = run_ok(vfield().args(args));
    let second = run_ok(vfield().args(args));
    assert_eq!(first.stdout, second.stdout);

    let targs = ["trace", "--theta0", "0.9", "--smax", "2", "--format", "json"];
    let first = run_ok(vfield().args(targs));
    let second = run_ok(vfield().args(targs));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn trace_meridian_holds_longitude_at_zero() {
    let out = run_ok(vfield().args([
        "trace",
        "--theta0",
        "1.5707963268",
        "--start",
        "0,0",
        "--smax",
        "1.5",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains('\r'), "line endings must be bare newlines");

    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,phi,lambda,x,y,z"));
    let mut previous_s = -1.0;
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6, "row {line}");
        let s: f64 = fields[0].parse().unwrap();
        assert!(s > previous_s, "arc length must increase");
        previous_s = s;
        assert_eq!(fields[2], "0", "longitude drifted: {line}");
        rows += 1;
    }
    assert!(rows > 100);
    assert!((previous_s - 1.5).abs() < 1e-12);

    // the envelope rides along on stderr with the fidelity figure; the
    // deviation is the gap between the rounded bearing and the exact meridian
    let envelope: Value = serde_json::from_slice(&out.stderr).expect("stderr envelope");
    assert_eq!(envelope["result"]["termination"], "arc-length");
    assert!(envelope["result"]["max_crossing_deviation"].as_f64().unwrap() < 1e-10);
}

#[test]
fn trace_reaches_the_pole_with_exact_remainder() {
    let scratch = Scratch::new("trace-pole");
    let csv_path = scratch.path("trace.csv");
    let out = run_ok(vfield().args([
        "trace",
        "--theta0",
        "0.7853981633974483",
        "--out",
        csv_path.to_str().unwrap(),
    ]));

    // with --out taken by the csv, the envelope claims stdout
    let doc = stdout_json(&out);
    let result = &doc["result"];
    assert_eq!(result["termination"], "pole");
    let to_pole = result["arc_length_to_pole"].as_f64().unwrap();
    let exact = (PI / 2.0) / (PI / 4.0).sin();
    assert!((to_pole - exact).abs() < 1e-6, "to_pole {to_pole}");
    assert!(result["max_crossing_deviation"].as_f64().unwrap() < 1e-8);

    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("s,phi,lambda,x,y,z\n"));
}

#[test]
fn trace_needs_a_bearing() {
    let out = run(vfield().arg("trace"));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("--theta0"));
}

#[test]
fn curvature_map_tabulates_both_curvatures() {
    let out = run_ok(vfield().args([
        "curvature-map",
        "--loxodromic",
        "0.5",
        "--nphi",
        "5",
        "--nlambda",
        "4",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "phi,lambda,kappa,tau,method");
    assert_eq!(lines.len(), 1 + 5 * 4);
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        for value in &fields[..4] {
            assert!(value.parse::<f64>().unwrap().is_finite());
        }
        assert_eq!(fields[4], "closed-form");
    }

    // a constant-bearing field obeys kappa = -cos(theta0) tan(phi) on every row
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        let phi: f64 = fields[0].parse().unwrap();
        let kappa: f64 = fields[2].parse().unwrap();
        let expected = -(0.5f64).cos() * phi.tan();
        assert!((kappa - expected).abs() < 1e-9 * (1.0 + expected.abs()), "{row}");
    }

    let json = run_ok(vfield().args([
        "curvature-map",
        "--loxodromic",
        "0.5",
        "--nphi",
        "5",
        "--nlambda",
        "4",
        "--format",
        "json",
    ]));
    let doc = stdout_json(&json);
    assert_eq!(doc["result"]["samples"].as_array().unwrap().len(), 20);
}

#[test]
fn index_agrees_across_methods_and_sums_to_two() {
    let out = run_ok(vfield().args(["index", "--test-field", "k=1,a=0.2,m=2"]));
    let doc = stdout_json(&out);
    let reports = doc["result"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    for report in reports {
        assert!(report["reliable"].as_bool().unwrap());
        let expected = if report["pole"] == "north" { 2 } else { 0 };
        assert_eq!(report["index"], expected, "report {report}");
    }
    assert_eq!(doc["result"]["index_sum"], 2);
}

#[test]
fn unresolvable_index_exits_as_nonconvergence() {
    let scratch = Scratch::new("index-unresolved");
    let report_path = scratch.path("index.json");
    let out = run(vfield().args([
        "index",
        "--test-field",
        "k=0,a=2.6,m=174763",
        "--out",
        report_path.to_str().unwrap(),
    ]));
    assert_eq!(exit_code(&out), 3);

    // the diagnostic artifact is still written before the failing exit
    let doc: Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(doc["result"]["index_sum"].is_null());
    let winding_reliable = doc["result"]["reports"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["method"] == "winding")
        .all(|r| r["reliable"].as_bool().unwrap());
    assert!(!winding_reliable);
}

#[test]
fn minimize_descends_to_the_floor_and_resumes() {
    let scratch = Scratch::new("minimize");
    let ck = scratch.path("ck.json");
    let out = run_ok(vfield().args([
        "minimize",
        "--test-field",
        "k=0,a=0.2,m=1,theta0=0.7853981633974483",
        "--nphi",
        "12",
        "--nlambda",
        "24",
        "--out",
        ck.to_str().unwrap(),
    ]));
    let doc = stdout_json(&out);
    let result = &doc["result"];
    assert!(result["converged"].as_bool().unwrap());
    let volume = result["final_volume"].as_f64().unwrap();
    assert!((volume - TWO_PI_SQ).abs() < 1e-3, "volume {volume}");
    assert!(result["loxodromy_defect"].as_f64().unwrap() < 1e-3);
    let iterations = result["iterations"].as_u64().unwrap();
    assert!(iterations > 0);

    // the checkpoint is a valid field input for the other commands
    let vol = run_ok(vfield().args(["volume", "--grid", ck.to_str().unwrap()]));
    let vdoc = stdout_json(&vol);
    let grid_volume = vdoc["result"]["volume"].as_f64().unwrap();
    assert!((grid_volume / TWO_PI_SQ - 1.0).abs() < 1e-6, "grid volume {grid_volume}");

    // resuming from the fixed point records the iteration offset and stays put
    let ck2 = scratch.path("ck2.json");
    let resumed = run_ok(vfield().args([
        "minimize",
        "--grid",
        ck.to_str().unwrap(),
        "--out",
        ck2.to_str().unwrap(),
    ]));
    let rdoc = stdout_json(&resumed);
    assert_eq!(rdoc["result"]["resumed_from_iteration"].as_u64(), Some(iterations));
    assert!(rdoc["result"]["iterations"].as_u64().unwrap() <= 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let scratch = Scratch::new("config");
    let cfg = scratch.path("cfg.json");
    fs::write(&cfg, r#"{ "loxodromic": 0.3, "nphi": 64, "nlambda": 128 }"#).unwrap();

    let out = run_ok(
        vfield()
            .env("VFIELD_LAB_CONFIG", &cfg)
            .args(["volume", "--nphi", "96"]),
    );
    let doc = stdout_json(&out);
    assert_eq!(doc["config_file"], cfg.to_str().unwrap());
    assert_eq!(doc["config"]["nphi"], 96, "flag wins");
    assert_eq!(doc["config"]["nlambda"], 128, "file fills the gap");
    assert_eq!(doc["config"]["loxodromic"].as_f64(), Some(0.3));
}

#[test]
fn config_file_unknown_keys_are_rejected() {
    let scratch = Scratch::new("config-unknown");
    let cfg = scratch.path("cfg.json");
    fs::write(&cfg, r#"{ "loxodromic": 0.3, "nlat": 10 }"#).unwrap();

    let out = run(vfield().env("VFIELD_LAB_CONFIG", &cfg).arg("volume"));
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("nlat"));
}

#[test]
fn config_file_pinned_command_must_match() {
    let scratch = Scratch::new("config-pin");
    let cfg = scratch.path("cfg.json");
    fs::write(&cfg, r#"{ "command": "volume", "loxodromic": 0.3 }"#).unwrap();

    let out = run(vfield().env("VFIELD_LAB_CONFIG", &cfg).args(["index"]));
    assert_eq!(exit_code(&out), 2);

    let ok = run_ok(vfield().env("VFIELD_LAB_CONFIG", &cfg).arg("volume"));
    assert_eq!(stdout_json(&ok)["command"], "volume");
}

#[test]
fn verify_quick_passes_with_excess_on_the_perturbed_field() {
    let scratch = Scratch::new("verify");
    let report_path = scratch.path("verify.json");
    let out = run_ok(vfield().args(["verify", "--quick", "--out", report_path.to_str().unwrap()]));

    let lines = String::from_utf8(out.stdout).unwrap();
    assert!(lines.contains("criterion 4"));
    assert!(lines.contains("volume excess"));
    assert!(!lines.contains("FAIL"));

    let doc: Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let result = &doc["result"];
    assert_eq!(result["quick"], true);
    assert_eq!(result["passed"], true);
    let criteria = result["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 7);
    assert!(criteria.iter().all(|c| c["passed"].as_bool().unwrap()));
}
