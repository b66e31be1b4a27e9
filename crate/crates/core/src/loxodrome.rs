//! Constant-bearing fields, perturbed test fields, and rhumb line tracing.
//!
//! A loxodromic field keeps a fixed angle `theta0` against every parallel; its
//! integral curves through generic points spiral into both poles with finite
//! arc length but unbounded winding.

use std::f64::consts::FRAC_PI_2;

use crate::sphere::{polar_window, polar_window_derivative, AngleField, SphericalPoint};
use crate::{Error, Result};

/// Field with constant angle `theta0` everywhere.
pub fn make_loxodromic_field(theta0: f64) -> AngleField {
    AngleField::from_closures(move |_, _| theta0, |_, _| 0.0, |_, _| 0.0, 0)
}

/// One Fourier mode of a perturbed field:
/// `amplitude * cos(mode * lambda + phase) * cos(phi)^window_power`.
#[derive(Debug, Clone, Copy)]
pub struct FourierTerm {
    pub amplitude: f64,
    pub mode: u32,
    pub phase: f64,
    /// Power of the polar window; 0 leaves the mode latitude-independent.
    pub window_power: u8,
}

/// Sum-of-modes field `theta = theta0 + winding * lambda + sum(terms)`.
#[derive(Debug, Clone, Default)]
pub struct FourierFieldSpec {
    pub theta0: f64,
    pub winding: i64,
    pub terms: Vec<FourierTerm>,
}

/// Builds the field of a [`FourierFieldSpec`] with analytic derivatives.
pub fn make_fourier_field(spec: &FourierFieldSpec) -> AngleField {
    let theta0 = spec.theta0;
    let winding = spec.winding;
    let k = winding as f64;
    let terms = spec.terms.clone();
    let terms_dphi = spec.terms.clone();
    let terms_dlambda = spec.terms.clone();
    AngleField::from_closures(
        move |phi, lambda| {
            let mut theta = theta0 + k * lambda;
            for t in &terms {
                theta += t.amplitude
                    * (t.mode as f64 * lambda + t.phase).cos()
                    * polar_window(phi, t.window_power);
            }
            theta
        },
        move |phi, lambda| {
            let mut d = 0.0;
            for t in &terms_dphi {
                d += t.amplitude
                    * (t.mode as f64 * lambda + t.phase).cos()
                    * polar_window_derivative(phi, t.window_power);
            }
            d
        },
        move |phi, lambda| {
            let mut d = k;
            for t in &terms_dlambda {
                d -= t.amplitude
                    * t.mode as f64
                    * (t.mode as f64 * lambda + t.phase).sin()
                    * polar_window(phi, t.window_power);
            }
            d
        },
        winding,
    )
}

/// Single-mode test field parameters. `phase` defaults to zero; with
/// `winding = 0` and `amplitude = 0` the field reduces to
/// [`make_loxodromic_field`].
#[derive(Debug, Clone, Copy)]
pub struct TestFieldSpec {
    pub theta0: f64,
    pub winding: i64,
    pub amplitude: f64,
    pub mode: u32,
    pub phase: f64,
}

impl Default for TestFieldSpec {
    fn default() -> Self {
        Self { theta0: 0.0, winding: 0, amplitude: 0.0, mode: 1, phase: 0.0 }
    }
}

/// `theta = theta0 + winding * lambda + amplitude * cos(mode * lambda + phase)
/// * cos(phi)^2`; the window keeps perturbations of winding fields decaying
/// toward the punctures.
pub fn make_test_field(spec: &TestFieldSpec) -> AngleField {
    make_fourier_field(&FourierFieldSpec {
        theta0: spec.theta0,
        winding: spec.winding,
        terms: vec![FourierTerm {
            amplitude: spec.amplitude,
            mode: spec.mode,
            phase: spec.phase,
            window_power: 2,
        }],
    })
}

/// Mercator latitude `psi(phi) = asinh(tan(phi)) = ln(sec(phi) + tan(phi))`.
#[inline]
pub fn mercator_latitude(phi: f64) -> f64 {
    phi.tan().asinh()
}

/// Closed-form longitude of the rhumb line with angle `theta0` from `start`,
/// as a function of latitude: `lambda = lambda0 + cot(theta0) * (psi(phi) -
/// psi(phi0))`. Requires `sin(theta0) != 0`.
pub fn mercator_longitude(theta0: f64, start: &SphericalPoint, phi: f64) -> f64 {
    start.lambda() + theta0.cos() / theta0.sin() * (mercator_latitude(phi) - mercator_latitude(start.phi()))
}

/// Why a trace stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceTermination {
    /// Requested arc length reached.
    ArcLength,
    /// The pole-side cutoff colatitude was reached.
    PoleReached,
}

/// One integration sample. The longitude accumulates without reduction so the
/// pole-ward winding is visible; reduce mod `2*pi` for charting.
#[derive(Debug, Clone, Copy)]
pub struct TraceSample {
    pub s: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl TraceSample {
    /// Embedded position of this sample.
    pub fn embed(&self) -> nalgebra::Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        let (sl, cl) = self.lambda.sin_cos();
        nalgebra::Vector3::new(cp * cl, cp * sl, sp)
    }
}

/// Controls for [`trace_rhumb`].
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    /// Stop after this much arc length even away from the poles.
    pub max_arc_length: f64,
    /// Step scale; the actual step is `base_step * cos(phi)`, shrinking with
    /// the parallel circumference.
    pub base_step: f64,
    /// Terminate when the colatitude on the approached side drops below this.
    pub pole_cutoff: f64,
    /// Abort with a step-collapse error if adaptivity pushes below this.
    pub min_step: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        // the cutoff keeps sec(phi) below 1e5, where per-segment invariants
        // recomputed from f64 samples still have headroom against rounding
        Self { max_arc_length: 50.0, base_step: 5e-3, pole_cutoff: 1e-5, min_step: 1e-9 }
    }
}

/// Arc-length parametrized rhumb line trace.
#[derive(Debug, Clone)]
pub struct RhumbTrace {
    pub theta0: f64,
    pub start: SphericalPoint,
    pub samples: Vec<TraceSample>,
    pub termination: TraceTermination,
}

impl RhumbTrace {
    /// Arc length covered by the trace.
    pub fn arc_length(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.s)
    }

    /// Total arc length from the start to the pole itself: the integrated
    /// length plus the exact remainder `(colatitude at termination) /
    /// |sin(theta0)|`, available only for pole-terminated traces.
    pub fn arc_length_to_pole(&self) -> Option<f64> {
        if self.termination != TraceTermination::PoleReached {
            return None;
        }
        let last = self.samples.last()?;
        let remaining = (FRAC_PI_2 - last.phi.abs()) / self.theta0.sin().abs();
        Some(last.s + remaining)
    }

    /// Crossing angle between consecutive samples from the exact rhumb
    /// relation `tan(theta) = d(psi)/d(lambda)`; equals `theta0` on a true
    /// rhumb regardless of sample spacing.
    pub fn crossing_angles(&self) -> Vec<f64> {
        self.samples
            .windows(2)
            .map(|w| {
                let dpsi = mercator_latitude(w[1].phi) - mercator_latitude(w[0].phi);
                let dlambda = w[1].lambda - w[0].lambda;
                dpsi.atan2(dlambda)
            })
            .collect()
    }
}

/// Bearings this close to a quarter-turn multiple are taken as exactly
/// cardinal. Decimal roundings of `pi/2` land within `1e-10`, and the sine or
/// cosine they zero out is below `1e-9`, so the snapped path deviates from the
/// literal one by less than `1e-9` per unit arc length while meridians hold
/// their longitude and parallels their latitude to the last bit.
const CARDINAL_SNAP: f64 = 1e-9;

/// Integrates `d(phi)/ds = sin(theta0)`, `d(lambda)/ds = cos(theta0)/cos(phi)`
/// with a classical 4th-order Runge-Kutta step and latitude-proportional step
/// control, from `start`, until the arc-length budget or the pole cutoff.
/// Bearings within [`CARDINAL_SNAP`] of a cardinal direction trace it exactly.
pub fn trace_rhumb(
    theta0: f64,
    start: &SphericalPoint,
    opts: &TraceOptions,
) -> Result<RhumbTrace> {
    if !theta0.is_finite() {
        return Err(Error::NonFinite { context: "trace bearing" });
    }
    if !(opts.max_arc_length > 0.0) || !(opts.base_step > 0.0) || !(opts.pole_cutoff > 0.0) {
        return Err(Error::InvalidDomain(format!(
            "trace options: max_arc_length {}, base_step {}, pole_cutoff {}",
            opts.max_arc_length, opts.base_step, opts.pole_cutoff
        )));
    }
    let (climb, drift) = {
        let (s, c) = theta0.sin_cos();
        if s.abs() < CARDINAL_SNAP {
            (0.0, c.signum())
        } else if c.abs() < CARDINAL_SNAP {
            (s.signum(), 0.0)
        } else {
            (s, c)
        }
    };

    // phi is linear in s, so the arc length to the cutoff latitude is exact
    let arc_to_cutoff = if climb > 0.0 {
        Some((FRAC_PI_2 - opts.pole_cutoff - start.phi()) / climb)
    } else if climb < 0.0 {
        Some((-FRAC_PI_2 + opts.pole_cutoff - start.phi()) / climb)
    } else {
        None
    };
    let (s_end, termination) = match arc_to_cutoff {
        Some(a) if a <= opts.max_arc_length => (a.max(0.0), TraceTermination::PoleReached),
        _ => (opts.max_arc_length, TraceTermination::ArcLength),
    };

    let rhs = |phi: f64| (climb, drift / phi.cos());

    let mut phi = start.phi();
    let mut lambda = start.lambda();
    let mut s = 0.0;
    let mut samples = vec![TraceSample { s, phi, lambda }];

    while s < s_end {
        let remaining = s_end - s;
        let adaptive = opts.base_step * phi.cos();
        let h = adaptive.min(remaining);
        if h < opts.min_step && h < remaining {
            return Err(Error::StepCollapse { step: h, latitude: phi });
        }

        let (k1p, k1l) = rhs(phi);
        let (k2p, k2l) = rhs(phi + 0.5 * h * k1p);
        let (k3p, k3l) = rhs(phi + 0.5 * h * k2p);
        let (k4p, k4l) = rhs(phi + h * k3p);
        phi += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        lambda += h / 6.0 * (k1l + 2.0 * k2l + 2.0 * k3l + k4l);
        s += h;
        samples.push(TraceSample { s, phi, lambda });

        if !phi.is_finite() || !lambda.is_finite() {
            return Err(Error::NonFinite { context: "rhumb integration state" });
        }
    }

    Ok(RhumbTrace { theta0, start: *start, samples, termination })
}
