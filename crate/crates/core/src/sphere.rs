//! Points, frames, and angle fields on the unit sphere punctured at the poles.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::{Error, Result};

/// Fixed ambient structure: the round unit sphere in R^3, oriented by the
/// outward normal. The metric is the restriction of the Euclidean dot product
/// and covariant differentiation is ambient differentiation followed by
/// [`SphereGeometry::project_tangent`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SphereGeometry;

impl SphereGeometry {
    pub const RADIUS: f64 = 1.0;

    /// Riemannian inner product of two tangent vectors (ambient dot product).
    #[inline]
    pub fn metric(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.dot(b)
    }

    /// Projection of an ambient vector onto the tangent plane at unit `point`.
    #[inline]
    pub fn project_tangent(point: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
        w - point * point.dot(w)
    }

    /// Point reached after arc length `t` along the geodesic from unit `point`
    /// with unit initial tangent `dir`.
    #[inline]
    pub fn geodesic_point(point: &Vector3<f64>, dir: &Vector3<f64>, t: f64) -> Vector3<f64> {
        point * t.cos() + dir * t.sin()
    }
}

/// Location on the punctured sphere. Latitude is strictly inside
/// `(-pi/2, pi/2)`; longitude is stored reduced to `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    phi: f64,
    lambda: f64,
}

impl SphericalPoint {
    /// Validates the latitude and reduces the longitude.
    pub fn new(phi: f64, lambda: f64) -> Result<Self> {
        if !phi.is_finite() || phi.abs() >= FRAC_PI_2 {
            return Err(Error::InvalidLatitude(phi));
        }
        if !lambda.is_finite() {
            return Err(Error::NonFinite { context: "longitude" });
        }
        let mut lambda = lambda.rem_euclid(TAU);
        // rem_euclid can land exactly on 2*pi after rounding
        if lambda >= TAU {
            lambda = 0.0;
        }
        Ok(Self { phi, lambda })
    }

    #[inline]
    pub fn phi(&self) -> f64 {
        self.phi
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Colatitude measured from the north pole.
    #[inline]
    pub fn colatitude(&self) -> f64 {
        FRAC_PI_2 - self.phi
    }

    /// Embedding into R^3: `(cos(phi) cos(lambda), cos(phi) sin(lambda), sin(phi))`.
    pub fn embed(&self) -> Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        let (sl, cl) = self.lambda.sin_cos();
        Vector3::new(cp * cl, cp * sl, sp)
    }

    /// Inverse of [`SphericalPoint::embed`] for any nonzero vector; the input
    /// is normalized first. Fails for vectors on the polar axis.
    pub fn unembed(w: &Vector3<f64>) -> Result<Self> {
        let r = w.norm();
        if !r.is_finite() || r == 0.0 {
            return Err(Error::NonFinite { context: "unembed input" });
        }
        let phi = (w.z / r).clamp(-1.0, 1.0).asin();
        let lambda = if w.x == 0.0 && w.y == 0.0 {
            return Err(Error::InvalidLatitude(phi));
        } else {
            w.y.atan2(w.x)
        };
        Self::new(phi, lambda)
    }

    /// Unit east vector (tangent to the parallel, increasing longitude).
    pub fn east(&self) -> Vector3<f64> {
        let (sl, cl) = self.lambda.sin_cos();
        Vector3::new(-sl, cl, 0.0)
    }

    /// Unit north vector (tangent to the meridian, increasing latitude).
    pub fn north(&self) -> Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        let (sl, cl) = self.lambda.sin_cos();
        Vector3::new(-sp * cl, -sp * sl, cp)
    }
}

impl fmt::Display for SphericalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(phi={}, lambda={})", self.phi, self.lambda)
    }
}

/// The two punctures of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    North,
    South,
}

impl Pole {
    /// +1 for north, -1 for south.
    #[inline]
    pub fn sign(&self) -> f64 {
        match self {
            Pole::North => 1.0,
            Pole::South => -1.0,
        }
    }

    /// The puncture's position on the embedding axis.
    #[inline]
    pub fn axis(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.sign())
    }
}

/// Default step for central-difference fallbacks of angle derivatives.
pub const DEFAULT_DERIVATIVE_STEP: f64 = 1e-5;

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// How an [`AngleField`] was produced; grid-backed fields carry larger
/// interpolation error bounds in downstream cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    ClosedForm,
    GridInterpolated,
}

#[derive(Clone)]
enum DerivativeRule {
    Analytic { d_phi: ScalarFn, d_lambda: ScalarFn },
    CentralDifference { step: f64 },
}

/// Unit tangent field described by its angle `theta(phi, lambda)` against the
/// local east vector.
///
/// `theta` takes raw coordinates: the longitude argument is *not* reduced, and
/// the closure must satisfy `theta(phi, lambda + 2*pi) = theta(phi, lambda) +
/// 2*pi*winding` so finite-difference stencils and loop integrals can cross
/// the longitude seam. Latitude may be probed slightly outside the open
/// interval by stencils; closures should remain defined there.
#[derive(Clone)]
pub struct AngleField {
    theta: ScalarFn,
    derivatives: DerivativeRule,
    winding: i64,
    kind: FieldKind,
}

impl AngleField {
    /// Field with analytically known partial derivatives.
    pub fn from_closures<F, Dp, Dl>(theta: F, d_phi: Dp, d_lambda: Dl, winding: i64) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        Dp: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        Dl: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            theta: Arc::new(theta),
            derivatives: DerivativeRule::Analytic {
                d_phi: Arc::new(d_phi),
                d_lambda: Arc::new(d_lambda),
            },
            winding,
            kind: FieldKind::ClosedForm,
        }
    }

    /// Field whose derivatives fall back to central differences of `theta`
    /// with the given step (error `O(step^2)` on smooth fields).
    pub fn with_finite_differences<F>(theta: F, winding: i64, step: f64) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            theta: Arc::new(theta),
            derivatives: DerivativeRule::CentralDifference { step },
            winding,
            kind: FieldKind::ClosedForm,
        }
    }

    /// As [`AngleField::from_closures`] but tagged as grid-backed.
    pub(crate) fn grid_backed<F, Dp, Dl>(theta: F, d_phi: Dp, d_lambda: Dl, winding: i64) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        Dp: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        Dl: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            theta: Arc::new(theta),
            derivatives: DerivativeRule::Analytic {
                d_phi: Arc::new(d_phi),
                d_lambda: Arc::new(d_lambda),
            },
            winding,
            kind: FieldKind::GridInterpolated,
        }
    }

    #[inline]
    pub fn theta(&self, phi: f64, lambda: f64) -> f64 {
        (self.theta)(phi, lambda)
    }

    /// Partial derivative of `theta` with respect to latitude.
    pub fn theta_phi(&self, phi: f64, lambda: f64) -> f64 {
        match &self.derivatives {
            DerivativeRule::Analytic { d_phi, .. } => d_phi(phi, lambda),
            DerivativeRule::CentralDifference { step } => {
                (self.theta(phi + step, lambda) - self.theta(phi - step, lambda)) / (2.0 * step)
            }
        }
    }

    /// Partial derivative of `theta` with respect to longitude.
    pub fn theta_lambda(&self, phi: f64, lambda: f64) -> f64 {
        match &self.derivatives {
            DerivativeRule::Analytic { d_lambda, .. } => d_lambda(phi, lambda),
            DerivativeRule::CentralDifference { step } => {
                (self.theta(phi, lambda + step) - self.theta(phi, lambda - step)) / (2.0 * step)
            }
        }
    }

    /// Declared winding class: `theta` gains `2*pi*winding` per eastward loop.
    #[inline]
    pub fn winding(&self) -> i64 {
        self.winding
    }

    #[inline]
    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Embedded field vector `v` at an arbitrary unit position off the poles.
    pub fn vector_at(&self, position: &Vector3<f64>) -> Result<Vector3<f64>> {
        let point = SphericalPoint::unembed(position)?;
        let sample = frame_at(self, &point);
        Ok(sample.v.ambient)
    }
}

impl fmt::Debug for AngleField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngleField")
            .field("winding", &self.winding)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

/// Tangent vector given both in the `(u, n)` basis and embedded in R^3.
#[derive(Debug, Clone, Copy)]
pub struct FrameVector {
    /// Components against `(east, north)`.
    pub in_plane: [f64; 2],
    pub ambient: Vector3<f64>,
}

/// The oriented frames at one point of a field: coordinate frame `(u, n)` and
/// field frame `(v_perp, v)`. Both ordered pairs are positively oriented with
/// respect to the outward normal: `u x n = p` and `v_perp x v = p`.
#[derive(Debug, Clone)]
pub struct FrameSample {
    pub point: SphericalPoint,
    pub theta: f64,
    pub u: FrameVector,
    pub n: FrameVector,
    pub v: FrameVector,
    pub v_perp: FrameVector,
}

/// Builds the full frame of `field` at `point`:
/// `v = cos(theta) u + sin(theta) n`, `v_perp = sin(theta) u - cos(theta) n`.
pub fn frame_at(field: &AngleField, point: &SphericalPoint) -> FrameSample {
    let theta = field.theta(point.phi(), point.lambda());
    let u = point.east();
    let n = point.north();
    let (st, ct) = theta.sin_cos();
    let v = u * ct + n * st;
    let v_perp = u * st - n * ct;
    FrameSample {
        point: *point,
        theta,
        u: FrameVector { in_plane: [1.0, 0.0], ambient: u },
        n: FrameVector { in_plane: [0.0, 1.0], ambient: n },
        v: FrameVector { in_plane: [ct, st], ambient: v },
        v_perp: FrameVector { in_plane: [st, -ct], ambient: v_perp },
    }
}

/// Smooth even window used by perturbed test fields; equals 1 at the equator
/// and vanishes quadratically at the poles.
#[inline]
pub fn polar_window(phi: f64, power: u8) -> f64 {
    phi.cos().powi(power as i32)
}

/// Derivative of [`polar_window`] with respect to latitude.
#[inline]
pub fn polar_window_derivative(phi: f64, power: u8) -> f64 {
    if power == 0 {
        0.0
    } else {
        -(power as f64) * phi.cos().powi(power as i32 - 1) * phi.sin()
    }
}
