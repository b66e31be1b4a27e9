//! Numerical toolkit for unit vector fields on the sphere punctured at both poles.
//!
//! A tangent unit field is described by the angle `theta(phi, lambda)` it makes
//! with the local east direction. The crate computes the field's volume (the
//! area of its section in the unit tangent bundle), the geodesic curvatures of
//! the flow and its orthogonal flow, Poincare indices at the punctures, rhumb
//! line traces, and a variational minimizer over discretized angle grids.
//!
//! Conventions used throughout:
//! * latitude `phi` in `(-pi/2, pi/2)`, longitude `lambda` reduced mod `2*pi`;
//! * `u` = unit east, `n` = unit north, both orthogonal to the position;
//! * `v = cos(theta) u + sin(theta) n`, `v_perp = sin(theta) u - cos(theta) n`,
//!   so `(u, n)` and `(v_perp, v)` are positively oriented;
//! * all angles in radians, sphere radius 1.

pub mod curvature;
pub mod index;
pub mod loxodrome;
pub mod quadrature;
pub mod sphere;
pub mod varmin;
pub mod volume;

pub mod acceptance;

mod error;

pub use error::{Error, Result};
