//! Indices of the field at the two punctures, by two independent methods:
//! the winding number of the field pushed into a polar chart, and the loop
//! integral of the connection form on the east vector closed with the polar
//! cap's curvature integral.
//!
//! Both polar charts are azimuthal equidistant and orientation-preserving
//! (chart determinant `r/sin(r) > 0` against the outward-normal orientation),
//! so the chart winding around a counterclockwise loop is the index itself.
//! In the north chart the counterclockwise loop is the eastward sweep; in the
//! south chart it is the westward sweep.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::Serialize;

use crate::curvature::connection_form;
use crate::quadrature::{pairwise_sum, periodic_longitudes};
use crate::sphere::{AngleField, Pole, SphericalPoint};
use crate::{Error, Result};

/// Probe-circle samples on the first attempt.
pub const DEFAULT_PROBE_SAMPLES: usize = 4096;
/// Sampling stops doubling here; still-unresolved reports stay flagged.
pub const MAX_PROBE_SAMPLES: usize = 1 << 18;
/// Reports whose raw value sits this far from an integer are unreliable.
pub const RESIDUAL_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexMethod {
    Winding,
    ConnectionForm,
}

/// One index measurement at one pole.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IndexReport {
    pub pole: Pole,
    pub method: IndexMethod,
    /// Pre-rounding value.
    pub raw: f64,
    pub index: i64,
    /// `|raw - index|`.
    pub residual: f64,
    /// Signed latitude of the probe parallel actually used.
    pub probe_phi: f64,
    pub samples: usize,
    pub reliable: bool,
}

/// Winding number of a closed planar loop of nonzero vectors around the
/// origin: accumulated minimal-image angle increments over consecutive
/// samples, divided by `2*pi`. The caller supplies the closing sample.
/// Returns the raw winding and the largest single increment magnitude.
pub fn planar_winding(loop_vectors: impl IntoIterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut previous: Option<f64> = None;
    let mut total = 0.0;
    let mut max_step = 0.0f64;
    for (x, y) in loop_vectors {
        let angle = y.atan2(x);
        if let Some(prev) = previous {
            let step = (angle - prev + PI).rem_euclid(TAU) - PI;
            total += step;
            max_step = max_step.max(step.abs());
        }
        previous = Some(angle);
    }
    (total / TAU, max_step)
}

fn validate_probe(phi_probe: f64) -> Result<f64> {
    let a = phi_probe.abs();
    if !a.is_finite() || a >= FRAC_PI_2 {
        return Err(Error::InvalidLatitude(phi_probe));
    }
    Ok(a)
}

/// Components of the field vector in the pole's chart at chart scale
/// `c = r / sin(r)`, where `r` is the probe colatitude from that pole.
fn chart_vector(pole: Pole, theta: f64, lambda: f64, c: f64) -> (f64, f64) {
    let (st, ct) = theta.sin_cos();
    let (sl, cl) = lambda.sin_cos();
    match pole {
        Pole::North => (-c * ct * sl - st * cl, c * ct * cl - st * sl),
        Pole::South => (-c * ct * sl + st * cl, -c * ct * cl - st * sl),
    }
}

/// Runs `eval` on a doubling sample ladder until the result certifies as an
/// integer or the sample cap is reached.
fn refine_to_integer<F>(eval: F) -> (f64, f64, usize, bool)
where
    F: Fn(usize) -> (f64, f64),
{
    let mut samples = DEFAULT_PROBE_SAMPLES;
    loop {
        let (raw, max_step) = eval(samples);
        let residual = (raw - raw.round()).abs();
        let reliable = residual < RESIDUAL_LIMIT && max_step < FRAC_PI_2;
        if reliable || samples >= MAX_PROBE_SAMPLES {
            return (raw, residual, samples, reliable);
        }
        samples *= 2;
    }
}

/// Index at `pole` as the chart winding of the field along the probe
/// parallel at absolute latitude `|phi_probe|` on the pole's side.
pub fn index_by_winding(field: &AngleField, pole: Pole, phi_probe: f64) -> Result<IndexReport> {
    let a = validate_probe(phi_probe)?;
    let lat = pole.sign() * a;
    let r = FRAC_PI_2 - a;
    let c = r / r.sin();
    // counterclockwise in the chart: eastward at N, westward at S
    let sweep = pole.sign();

    let (raw, residual, samples, reliable) = refine_to_integer(|m| {
        planar_winding((0..=m).map(|j| {
            let lambda = sweep * TAU * j as f64 / m as f64;
            // raw longitude on purpose: theta must cross the seam
            let theta = field.theta(lat, lambda);
            chart_vector(pole, theta, lambda, c)
        }))
    });
    Ok(IndexReport {
        pole,
        method: IndexMethod::Winding,
        raw,
        index: raw.round() as i64,
        residual,
        probe_phi: lat,
        samples,
        reliable,
    })
}

/// Index at `pole` from the connection form: the eastward loop integral of
/// `omega12(u)` against the parallel's length measure, closed with the polar
/// cap's curvature integral (the cap area, since the curvature is 1) and
/// normalized by `2*pi`. The cap term makes the loop integral an integer
/// invariant; its sign follows the cap lying north or south of the probe.
pub fn index_by_connection_form(
    field: &AngleField,
    pole: Pole,
    phi_probe: f64,
) -> Result<IndexReport> {
    let a = validate_probe(phi_probe)?;
    let lat = pole.sign() * a;
    let cap_area = TAU * (1.0 - pole.sign() * lat.sin());
    let cos_lat = lat.cos();

    let (raw, residual, samples, reliable) = refine_to_integer(|m| {
        let ring: Vec<f64> = periodic_longitudes(m)
            .iter()
            .map(|&lambda| {
                let point =
                    SphericalPoint::new(lat, lambda).expect("probe parallel is off the poles");
                connection_form(field, &point).on_east()
            })
            .collect();
        let loop_integral = pairwise_sum(&ring) * cos_lat * TAU / m as f64;
        ((cap_area - pole.sign() * loop_integral) / TAU, 0.0)
    });
    Ok(IndexReport {
        pole,
        method: IndexMethod::ConnectionForm,
        raw,
        index: raw.round() as i64,
        residual,
        probe_phi: lat,
        samples,
        reliable,
    })
}

/// Both methods at both poles, in a fixed order: winding N, winding S,
/// connection-form N, connection-form S.
pub fn all_index_reports(field: &AngleField, phi_probe: f64) -> Result<Vec<IndexReport>> {
    Ok(vec![
        index_by_winding(field, Pole::North, phi_probe)?,
        index_by_winding(field, Pole::South, phi_probe)?,
        index_by_connection_form(field, Pole::North, phi_probe)?,
        index_by_connection_form(field, Pole::South, phi_probe)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loxodrome::{
        make_fourier_field, make_loxodromic_field, make_test_field, FourierFieldSpec,
        FourierTerm, TestFieldSpec,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    const PROBES: [f64; 3] = [0.3, 0.8, 1.3];

    #[test]
    fn loxodromic_fields_have_unit_indices_everywhere() {
        for theta0 in [0.0, FRAC_PI_4, FRAC_PI_2] {
            let field = make_loxodromic_field(theta0);
            for pole in [Pole::North, Pole::South] {
                for probe in PROBES {
                    let w = index_by_winding(&field, pole, probe).unwrap();
                    let c = index_by_connection_form(&field, pole, probe).unwrap();
                    assert_eq!(w.index, 1, "winding at {pole:?} probe {probe}");
                    assert_eq!(c.index, 1, "connection form at {pole:?} probe {probe}");
                    assert!(w.reliable && c.reliable);
                    assert!(w.residual < 1e-12, "winding residual {}", w.residual);
                    assert!(c.residual < 1e-12, "loop residual {}", c.residual);
                }
            }
        }
    }

    #[test]
    fn winding_class_shifts_the_index_pair() {
        for k in [-1i64, 0, 1, 2] {
            let field = make_test_field(&TestFieldSpec {
                theta0: 0.4,
                winding: k,
                amplitude: 0.2,
                mode: 2,
                phase: 0.9,
            });
            for probe in PROBES {
                let n = index_by_winding(&field, Pole::North, probe).unwrap();
                let s = index_by_winding(&field, Pole::South, probe).unwrap();
                assert_eq!(n.index, 1 + k, "north at probe {probe}, k {k}");
                assert_eq!(s.index, 1 - k, "south at probe {probe}, k {k}");
                assert_eq!(n.index + s.index, 2);

                let cn = index_by_connection_form(&field, Pole::North, probe).unwrap();
                let cs = index_by_connection_form(&field, Pole::South, probe).unwrap();
                assert_eq!(cn.index, n.index);
                assert_eq!(cs.index, s.index);
            }
        }
    }

    #[test]
    fn methods_agree_on_random_smooth_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let field = make_test_field(&TestFieldSpec {
                theta0: rng.gen_range(0.0..PI),
                winding: *[-1i64, 0, 1, 2].get(rng.gen_range(0..4)).unwrap(),
                amplitude: rng.gen_range(-0.3..0.3),
                mode: rng.gen_range(1..=3),
                phase: rng.gen_range(0.0..TAU),
            });
            for pole in [Pole::North, Pole::South] {
                let w = index_by_winding(&field, pole, 0.8).unwrap();
                let c = index_by_connection_form(&field, pole, 0.8).unwrap();
                assert_eq!(w.index, c.index);
                assert!(w.reliable && c.reliable);
            }
            let n = index_by_winding(&field, Pole::North, 0.8).unwrap();
            let s = index_by_winding(&field, Pole::South, 0.8).unwrap();
            assert_eq!(n.index + s.index, 2);
        }
    }

    #[test]
    fn indices_ignore_longitude_rotation() {
        let base = make_test_field(&TestFieldSpec {
            theta0: 1.1,
            winding: 1,
            amplitude: 0.25,
            mode: 3,
            phase: 0.0,
        });
        let rotated = make_test_field(&TestFieldSpec {
            theta0: 1.1,
            winding: 1,
            amplitude: 0.25,
            mode: 3,
            phase: 2.2,
        });
        for pole in [Pole::North, Pole::South] {
            assert_eq!(
                index_by_winding(&base, pole, 0.8).unwrap().index,
                index_by_winding(&rotated, pole, 0.8).unwrap().index
            );
        }
    }

    #[test]
    fn planar_constant_field_has_zero_winding() {
        let loop_vectors: Vec<(f64, f64)> = (0..=64).map(|_| (1.0, 0.5)).collect();
        let (raw, max_step) = planar_winding(loop_vectors);
        assert_eq!(raw, 0.0);
        assert_eq!(max_step, 0.0);
    }

    #[test]
    fn planar_circle_field_has_unit_winding() {
        let m = 256;
        let loop_vectors = (0..=m).map(|j| {
            let t = TAU * j as f64 / m as f64;
            (t.cos(), t.sin())
        });
        let (raw, max_step) = planar_winding(loop_vectors);
        assert!((raw - 1.0).abs() < 1e-12);
        assert!(max_step < 0.1);
    }

    #[test]
    fn dense_accumulation_oracle_confirms_the_lambda_field() {
        // theta = lambda, winding 1: index 2 at the north puncture
        let field = make_fourier_field(&FourierFieldSpec {
            theta0: 0.0,
            winding: 1,
            terms: vec![],
        });
        let report = index_by_winding(&field, Pole::North, 0.8).unwrap();

        // independent brute-force accumulation at 1e5 samples
        let m = 100_000usize;
        let lat = 0.8;
        let r = FRAC_PI_2 - lat;
        let c = r / r.sin();
        let mut total = 0.0;
        let mut prev = f64::NAN;
        for j in 0..=m {
            let lambda = TAU * j as f64 / m as f64;
            let theta = field.theta(lat, lambda);
            let (st, ct) = theta.sin_cos();
            let (sl, cl) = lambda.sin_cos();
            let angle = (c * ct * cl - st * sl).atan2(-c * ct * sl - st * cl);
            if j > 0 {
                let mut d = angle - prev;
                while d > PI {
                    d -= TAU;
                }
                while d < -PI {
                    d += TAU;
                }
                total += d;
            }
            prev = angle;
        }
        let oracle = (total / TAU).round() as i64;
        assert_eq!(report.index, oracle);
        assert_eq!(report.index, 2);
    }

    #[test]
    fn high_winding_resolves_by_refinement() {
        let field = make_fourier_field(&FourierFieldSpec {
            theta0: 0.3,
            winding: 3000,
            terms: vec![],
        });
        let report = index_by_winding(&field, Pole::North, 0.3).unwrap();
        assert_eq!(report.index, 3001);
        assert!(report.reliable);
        assert!(report.samples > DEFAULT_PROBE_SAMPLES);
    }

    #[test]
    fn unresolvable_oscillation_is_flagged_not_guessed() {
        // alternating-bit mode: its residue modulo every ladder size stays
        // near a third of the range, so every rung sees fast aliased steps
        // and none can certify an integer
        let field = make_fourier_field(&FourierFieldSpec {
            theta0: 0.5,
            winding: 0,
            terms: vec![FourierTerm {
                amplitude: 2.6,
                mode: 174_763,
                phase: 0.1,
                window_power: 0,
            }],
        });
        let report = index_by_winding(&field, Pole::North, 0.3).unwrap();
        assert_eq!(report.samples, MAX_PROBE_SAMPLES);
        assert!(!report.reliable);
    }

    #[test]
    fn probe_validation() {
        let field = make_loxodromic_field(0.2);
        assert!(index_by_winding(&field, Pole::North, FRAC_PI_2).is_err());
        assert!(index_by_winding(&field, Pole::North, f64::NAN).is_err());
        assert!(index_by_connection_form(&field, Pole::South, -2.0).is_err());
        // negative probes are folded onto the pole's side
        let from_negative = index_by_winding(&field, Pole::South, -0.8).unwrap();
        assert_eq!(from_negative.probe_phi, -0.8);
        assert_eq!(from_negative.index, 1);
    }

    #[test]
    fn report_order_is_fixed() {
        let field = make_loxodromic_field(1.0);
        let reports = all_index_reports(&field, 0.8).unwrap();
        assert_eq!(reports.len(), 4);
        assert_eq!(
            (reports[0].method, reports[0].pole),
            (IndexMethod::Winding, Pole::North)
        );
        assert_eq!(
            (reports[3].method, reports[3].pole),
            (IndexMethod::ConnectionForm, Pole::South)
        );
        assert!(reports.iter().all(|r| r.index == 1));
    }
}
