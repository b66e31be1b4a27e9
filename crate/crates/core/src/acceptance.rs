//! End-to-end verification scenarios for the whole library, each returning a
//! pass/fail report with pinned tolerances. The binary's `verify` subcommand
//! and the integration test target both run these.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI, TAU};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::{curvatures_closed_form, curvatures_extrinsic, DEFAULT_EXTRINSIC_STEP};
use crate::index::{all_index_reports, index_by_winding, IndexMethod};
use crate::loxodrome::{
    make_fourier_field, make_loxodromic_field, mercator_longitude, trace_rhumb, FourierFieldSpec,
    FourierTerm, TraceOptions,
};
use crate::sphere::{Pole, SphericalPoint};
use crate::varmin::{grid_gradient, minimize, MinimizeOptions, ThetaGrid};
use crate::volume::{
    lower_bound_s2, lower_bound_s3, sharpness_residuals, total_of, volume_integrand,
    volume_integrand_extrinsic, volume_total, VolumeOptions,
};
use crate::Result;

pub const CRITERION_COUNT: usize = 9;

const TWO_PI_SQ: f64 = 2.0 * PI * PI;
const CANONICAL_BEARINGS: [f64; 5] = [0.0, FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, FRAC_PI_2];
const PROBE_LATITUDES: [f64; 3] = [0.3, 0.8, 1.3];

/// Outcome of one verification scenario.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub elapsed: Duration,
}

impl CriterionReport {
    /// The one-line form printed by the test target and the CLI.
    pub fn summary_line(&self) -> String {
        format!(
            "criterion {} ({}): {} [{:.2}s] {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.details
        )
    }
}

struct Checks {
    failures: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self { failures: Vec::new() }
    }

    fn require(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(message());
        }
    }
}

type CriterionFn = fn(&mut Checks, u64) -> Result<String>;

const CRITERIA: [(&str, CriterionFn); CRITERION_COUNT] = [
    ("loxodromic volume", loxodromic_volume),
    ("area floor", area_floor),
    ("curvature route agreement", curvature_route_agreement),
    ("sharpness residuals", sharpness_conditions),
    ("index pair consistency", index_pair_consistency),
    ("volume lower bound", volume_lower_bound),
    ("descent to loxodromic", descent_to_loxodromic),
    ("rhumb tracing", rhumb_tracing),
    ("integrand route agreement", integrand_route_agreement),
];

/// Runs scenario `id` (1-based) with the pinned generator seeds. Panics on an
/// out-of-range id.
pub fn run_criterion(id: usize) -> CriterionReport {
    run_criterion_seeded(id, 0)
}

/// Runs scenario `id` (1-based), folding `seed_mix` into the generator seeds
/// of the randomized scenarios. A mix of 0 reproduces the pinned draws; any
/// other value re-rolls the sampled fields while keeping the same bounds.
pub fn run_criterion_seeded(id: usize, seed_mix: u64) -> CriterionReport {
    let (name, body) = CRITERIA[id - 1];
    let started = Instant::now();
    let mut checks = Checks::new();
    let details = match body(&mut checks, seed_mix) {
        Ok(details) if checks.failures.is_empty() => details,
        Ok(_) => {
            let shown = checks.failures.len().min(4);
            let mut text = checks.failures[..shown].join("; ");
            if checks.failures.len() > shown {
                text.push_str(&format!("; and {} more", checks.failures.len() - shown));
            }
            text
        }
        Err(err) => format!("aborted: {err}"),
    };
    let passed = checks.failures.is_empty() && !details.starts_with("aborted");
    CriterionReport { id, name, passed, details, elapsed: started.elapsed() }
}

/// All scenarios in order, with the pinned generator seeds.
pub fn run_all() -> Vec<CriterionReport> {
    (1..=CRITERION_COUNT).map(run_criterion).collect()
}

/// All scenarios in order, folding `seed_mix` into the randomized ones.
pub fn run_all_seeded(seed_mix: u64) -> Vec<CriterionReport> {
    (1..=CRITERION_COUNT)
        .map(|id| run_criterion_seeded(id, seed_mix))
        .collect()
}

/// Draws a field from the family the randomized scenarios quantify over:
/// base angle in `[0, pi)`, winding class in `{-1, 0, 1, 2}`, and up to three
/// longitude modes of amplitude at most 0.3, mode number at most 3, with
/// polar window powers in `{0, 1, 2}`.
pub fn random_field_spec(rng: &mut ChaCha8Rng) -> FourierFieldSpec {
    let theta0 = rng.gen_range(0.0..PI);
    let winding = [-1i64, 0, 1, 2][rng.gen_range(0..4)];
    let terms = (0..rng.gen_range(0..=3u32))
        .map(|_| FourierTerm {
            amplitude: rng.gen_range(-0.3..0.3),
            mode: rng.gen_range(1..=3),
            phase: rng.gen_range(0.0..TAU),
            window_power: rng.gen_range(0..=2u8),
        })
        .collect();
    FourierFieldSpec { theta0, winding, terms }
}

fn random_point(rng: &mut ChaCha8Rng) -> SphericalPoint {
    SphericalPoint::new(rng.gen_range(-1.4..1.4), rng.gen_range(0.0..TAU))
        .expect("sampled latitude is interior")
}

fn loxodromic_volume(cx: &mut Checks, _seed_mix: u64) -> Result<String> {
    let opts = VolumeOptions::default();
    let mut worst_rel = 0.0f64;
    let mut slowest = Duration::ZERO;
    for theta0 in CANONICAL_BEARINGS {
        let started = Instant::now();
        let report = volume_total(&make_loxodromic_field(theta0), &opts)?;
        let elapsed = started.elapsed();
        slowest = slowest.max(elapsed);

        let rel = (report.total / TWO_PI_SQ - 1.0).abs();
        worst_rel = worst_rel.max(rel);
        cx.require(rel <= 1e-6, || {
            format!("bearing {theta0:.4}: total {:.12} off by {rel:.2e} relative", report.total)
        });
        for (side, value) in [("north", report.north), ("south", report.south)] {
            cx.require((value - PI * PI).abs() <= 1e-6, || {
                format!("bearing {theta0:.4}: {side} hemisphere {value:.12}")
            });
        }
        cx.require(report.converged, || format!("bearing {theta0:.4}: not converged"));
        cx.require(elapsed < Duration::from_secs(5), || {
            format!("bearing {theta0:.4}: took {:.2}s", elapsed.as_secs_f64())
        });
    }
    Ok(format!(
        "5 bearings, worst relative volume error {worst_rel:.2e}, slowest field {:.2}s",
        slowest.as_secs_f64()
    ))
}

fn area_floor(cx: &mut Checks, _seed_mix: u64) -> Result<String> {
    let report = total_of(|_| 1.0, &VolumeOptions::default())?;
    let err = (report.total - 4.0 * PI).abs();
    cx.require(err <= 1e-8, || {
        format!("unit density integrated to {:.12}, off by {err:.2e}", report.total)
    });
    Ok(format!("unit density integrates to 4*pi within {err:.2e}"))
}

fn curvature_route_agreement(cx: &mut Checks, seed_mix: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1003 ^ seed_mix);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let field = make_fourier_field(&random_field_spec(&mut rng));
        let point = random_point(&mut rng);
        let closed = curvatures_closed_form(&field, &point);
        let extrinsic = curvatures_extrinsic(&field, &point, DEFAULT_EXTRINSIC_STEP)?;
        let gap = (closed.kappa - extrinsic.kappa)
            .abs()
            .max((closed.tau - extrinsic.tau).abs());
        worst = worst.max(gap);
        cx.require(gap <= 1e-6, || {
            format!(
                "case {case} at phi {:.4}: route gap {gap:.2e} (kappa {:.6} vs {:.6})",
                point.phi(),
                closed.kappa,
                extrinsic.kappa
            )
        });
    }

    let mut worst_identity = 0.0f64;
    for _ in 0..20 {
        let field = make_loxodromic_field(rng.gen_range(0.0..PI));
        for step in 0..141 {
            let phi = -1.4 + 0.02 * step as f64;
            let point = SphericalPoint::new(phi, rng.gen_range(0.0..TAU))?;
            let pair = curvatures_closed_form(&field, &point);
            let gap = (pair.norm_squared().sqrt() - phi.tan().abs()).abs();
            worst_identity = worst_identity.max(gap);
            cx.require(gap <= 1e-10, || {
                format!("constant-angle identity off by {gap:.2e} at phi {phi:.4}")
            });
        }
    }
    Ok(format!(
        "1000 samples, worst route gap {worst:.2e}; constant-angle identity within {worst_identity:.2e}"
    ))
}

fn sharpness_conditions(cx: &mut Checks, _seed_mix: u64) -> Result<String> {
    let mut worst = 0.0f64;
    for theta0 in [0.0, FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, FRAC_PI_2, 1.1] {
        let report = sharpness_residuals(&make_loxodromic_field(theta0));
        worst = worst.max(report.sup_i).max(report.sup_ii);
        cx.require(report.sup_i < 1e-10 && report.sup_ii < 1e-10, || {
            format!(
                "bearing {theta0:.4}: residual sups {:.2e}, {:.2e}",
                report.sup_i, report.sup_ii
            )
        });
    }

    // theta = pi/2 + 0.3 sin(lambda), no polar window
    let perturbed = make_fourier_field(&FourierFieldSpec {
        theta0: FRAC_PI_2,
        winding: 0,
        terms: vec![FourierTerm {
            amplitude: 0.3,
            mode: 1,
            phase: -FRAC_PI_2,
            window_power: 0,
        }],
    });
    let residuals = sharpness_residuals(&perturbed);
    cx.require(residuals.sup_i > 0.01, || {
        format!("perturbed field first residual sup {:.4} not above 0.01", residuals.sup_i)
    });
    let report = volume_total(&perturbed, &VolumeOptions::default())?;
    cx.require(report.total > TWO_PI_SQ + 0.01, || {
        format!("perturbed field volume {:.6} not above the sharp value + 0.01", report.total)
    });
    Ok(format!(
        "constant-angle residual sups below {worst:.2e}; perturbed field residual {:.3} and volume excess {:.4}",
        residuals.sup_i,
        report.total - TWO_PI_SQ
    ))
}

fn index_pair_consistency(cx: &mut Checks, seed_mix: u64) -> Result<String> {
    for theta0 in CANONICAL_BEARINGS {
        let field = make_loxodromic_field(theta0);
        for probe in PROBE_LATITUDES {
            for report in all_index_reports(&field, probe)? {
                cx.require(report.index == 1 && report.reliable, || {
                    format!(
                        "bearing {theta0:.4} probe {probe}: {:?} at {:?} gave {} (raw {:.6})",
                        report.method, report.pole, report.index, report.raw
                    )
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1005 ^ seed_mix);
    for case in 0..50 {
        let spec = random_field_spec(&mut rng);
        let field = make_fourier_field(&spec);
        let mut first_pair: Option<(i64, i64)> = None;
        for probe in PROBE_LATITUDES {
            let reports = all_index_reports(&field, probe)?;
            let by = |method: IndexMethod, pole: Pole| {
                reports
                    .iter()
                    .find(|r| r.method == method && r.pole == pole)
                    .expect("all four reports present")
                    .index
            };
            let pair = (by(IndexMethod::Winding, Pole::North), by(IndexMethod::Winding, Pole::South));
            let connection = (
                by(IndexMethod::ConnectionForm, Pole::North),
                by(IndexMethod::ConnectionForm, Pole::South),
            );
            cx.require(pair == connection, || {
                format!("case {case} probe {probe}: methods disagree {pair:?} vs {connection:?}")
            });
            cx.require(pair.0 + pair.1 == 2, || {
                format!("case {case} probe {probe}: indices {pair:?} sum to {}", pair.0 + pair.1)
            });
            cx.require(reports.iter().all(|r| r.reliable), || {
                format!("case {case} probe {probe}: unreliable readout")
            });
            match first_pair {
                None => first_pair = Some(pair),
                Some(previous) => cx.require(previous == pair, || {
                    format!("case {case}: probe {probe} moved the pair {previous:?} -> {pair:?}")
                }),
            }
        }
    }
    Ok("5 constant-angle bearings give (1, 1); 50 random fields agree across methods and probes".into())
}

fn volume_lower_bound(cx: &mut Checks, seed_mix: u64) -> Result<String> {
    // the closed forms the sharp cases must hit without rounding slack
    cx.require(lower_bound_s2(1, 1) == TWO_PI_SQ, || {
        format!("bound at (1, 1) is {:.17}, not the sharp value", lower_bound_s2(1, 1))
    });
    cx.require(lower_bound_s3(1, 1) == 4.0 * PI * PI, || {
        format!("3-sphere bound at (1, 1) is {:.17}", lower_bound_s3(1, 1))
    });

    let opts = VolumeOptions { n_phi: 128, n_lambda: 256, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1006 ^ seed_mix);
    let mut least_margin = f64::INFINITY;
    for case in 0..50 {
        let spec = random_field_spec(&mut rng);
        let field = make_fourier_field(&spec);
        let north = index_by_winding(&field, Pole::North, 0.8)?;
        let south = index_by_winding(&field, Pole::South, 0.8)?;
        let bound = lower_bound_s2(north.index, south.index);
        let report = volume_total(&field, &opts)?;
        let margin = report.total - bound;
        least_margin = least_margin.min(margin);
        cx.require(margin >= -1e-4, || {
            format!(
                "case {case} (winding {}): volume {:.8} under bound {:.8} by {:.2e}",
                spec.winding,
                report.total,
                bound,
                -margin
            )
        });
    }
    Ok(format!(
        "50 random fields stay above the index bound; least margin {least_margin:.2e}"
    ))
}

fn descent_to_loxodromic(cx: &mut Checks, _seed_mix: u64) -> Result<String> {
    let started = Instant::now();
    let start = ThetaGrid::from_fn(64, 128, 0, |_, lambda| FRAC_PI_4 + 0.3 * lambda.cos())?;
    let (end, report) = minimize(&start, &MinimizeOptions::default())?;
    let elapsed = started.elapsed();

    cx.require(report.converged, || {
        format!("descent stopped unconverged at gradient sup {:.2e}", report.gradient_sup)
    });
    let volume_gap = (report.final_volume - TWO_PI_SQ).abs();
    cx.require(volume_gap < 1e-3, || {
        format!("final volume {:.8} off the sharp value by {volume_gap:.2e}", report.final_volume)
    });
    cx.require(report.loxodromy_defect < 1e-3, || {
        format!("final defect {:.2e}", report.loxodromy_defect)
    });
    let audit = volume_total(
        &end.to_field(),
        &VolumeOptions { n_phi: 128, n_lambda: 256, ..Default::default() },
    )?;
    let audit_gap = (report.final_volume - audit.total).abs();
    cx.require(audit_gap <= 1e-4, || {
        format!(
            "objective {:.8} vs doubled-resolution quadrature {:.8} (gap {audit_gap:.2e})",
            report.final_volume, audit.total
        )
    });
    cx.require(elapsed < Duration::from_secs(120), || {
        format!("took {:.1}s", elapsed.as_secs_f64())
    });

    let fixed = ThetaGrid::from_fn(64, 128, 0, |_, _| FRAC_PI_4)?;
    let sup = grid_gradient(&fixed).iter().fold(0.0f64, |m, g| m.max(g.abs()));
    cx.require(sup < 1e-8, || format!("constant-angle grid gradient sup {sup:.2e}"));

    Ok(format!(
        "{} iterations in {:.1}s, volume gap {volume_gap:.2e}, defect {:.2e}, audit gap {audit_gap:.2e}, fixed-point gradient {sup:.1e}",
        report.iterations,
        elapsed.as_secs_f64(),
        report.loxodromy_defect
    ))
}

fn rhumb_tracing(cx: &mut Checks, _seed_mix: u64) -> Result<String> {
    let start = SphericalPoint::new(0.0, 0.0)?;

    // frozen closed-form longitude of the 45-degree rhumb after unit arc
    let short = trace_rhumb(
        FRAC_PI_4,
        &start,
        &TraceOptions { max_arc_length: 1.0, ..Default::default() },
    )?;
    let last = short.samples.last().expect("trace has samples");
    let reference = 0.774670286002814774;
    let mercator_gap = (last.lambda - mercator_longitude(FRAC_PI_4, &start, last.phi)).abs();
    cx.require((last.lambda - reference).abs() <= 1e-8, || {
        format!("longitude at unit arc {:.12} vs {reference:.12}", last.lambda)
    });
    cx.require(mercator_gap <= 1e-8, || {
        format!("trace departs the closed-form meridian map by {mercator_gap:.2e}")
    });

    // spiral into the pole: finite length (pi/2)/sin(theta0) from the equator
    let full = trace_rhumb(FRAC_PI_4, &start, &TraceOptions::default())?;
    let to_pole = full.arc_length_to_pole().unwrap_or(f64::NAN);
    let expected = FRAC_PI_2 / FRAC_PI_4.sin();
    cx.require((to_pole - expected).abs() <= 1e-6, || {
        format!("arc length to the pole {to_pole:.10} vs {expected:.10}")
    });

    let mut worst_angle = 0.0f64;
    for angle in full.crossing_angles() {
        worst_angle = worst_angle.max((angle - FRAC_PI_4).abs());
    }
    cx.require(worst_angle <= 1e-8, || {
        format!("parallel-crossing angle drifts by {worst_angle:.2e}")
    });
    Ok(format!(
        "unit-arc longitude within {:.1e}, pole arc within {:.1e}, crossing angle within {worst_angle:.1e} over {} samples",
        (last.lambda - reference).abs(),
        (to_pole - expected).abs(),
        full.samples.len()
    ))
}

fn integrand_route_agreement(cx: &mut Checks, seed_mix: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1009 ^ seed_mix);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let field = make_fourier_field(&random_field_spec(&mut rng));
        let point = random_point(&mut rng);
        let closed = volume_integrand(&field, &point);
        let extrinsic = volume_integrand_extrinsic(&field, &point, DEFAULT_EXTRINSIC_STEP)?;
        let gap = (closed - extrinsic).abs();
        worst = worst.max(gap);
        cx.require(gap <= 1e-6, || {
            format!("case {case} at phi {:.4}: integrand routes differ by {gap:.2e}", point.phi())
        });
    }
    Ok(format!("1000 field/point samples, worst integrand route gap {worst:.2e}"))
}
