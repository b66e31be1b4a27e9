//! Quadrature of the volume functional, hemisphere splits with pole-cutoff
//! extrapolation, index-based lower bounds, and sharpness residuals.
//!
//! The functional is `integral of sqrt(1 + kappa^2 + tau^2)` against the area
//! measure `cos(phi) dphi dlambda`. Bands are integrated by Gauss-Legendre in
//! latitude times the periodic trapezoid rule in longitude; the pole
//! singularity is handled by clipping to `|phi| <= pi/2 - epsilon` on a cutoff
//! ladder and extrapolating the band values to `epsilon = 0`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::{curvatures_closed_form, CurvaturePair};
use crate::quadrature::{gauss_legendre_on, pairwise_sum, periodic_longitudes};
use crate::sphere::{AngleField, Pole, SphereGeometry, SphericalPoint};
use crate::{Error, Result};

/// Pole cutoffs used for the extrapolation ladder, largest first.
pub const EPSILON_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Latitude band `[phi_min, phi_max] x [0, 2*pi)` with quadrature resolution.
/// Before integration the band is clipped to `|phi| <= pi/2 - epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationDomain {
    phi_min: f64,
    phi_max: f64,
    epsilon: f64,
    n_phi: usize,
    n_lambda: usize,
}

impl IntegrationDomain {
    pub fn new(
        phi_min: f64,
        phi_max: f64,
        epsilon: f64,
        n_phi: usize,
        n_lambda: usize,
    ) -> Result<Self> {
        if !(phi_min.is_finite() && phi_max.is_finite()) || phi_min >= phi_max {
            return Err(Error::InvalidDomain(format!(
                "latitude band [{phi_min}, {phi_max}]"
            )));
        }
        if phi_min < -FRAC_PI_2 || phi_max > FRAC_PI_2 {
            return Err(Error::InvalidDomain(format!(
                "band [{phi_min}, {phi_max}] exceeds [-pi/2, pi/2]"
            )));
        }
        if !(epsilon > 0.0 && epsilon < FRAC_PI_2) {
            return Err(Error::InvalidDomain(format!("pole cutoff {epsilon}")));
        }
        if n_phi < 4 || n_lambda < 4 {
            return Err(Error::InvalidDomain(format!(
                "resolution {n_phi} x {n_lambda} below the minimum of 4"
            )));
        }
        Ok(Self { phi_min, phi_max, epsilon, n_phi, n_lambda })
    }

    pub fn phi_min(&self) -> f64 {
        self.phi_min
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_lambda(&self) -> usize {
        self.n_lambda
    }

    /// Band bounds after the pole clip; fails when the clip empties the band.
    pub fn clipped(&self) -> Result<(f64, f64)> {
        let lo = self.phi_min.max(-FRAC_PI_2 + self.epsilon);
        let hi = self.phi_max.min(FRAC_PI_2 - self.epsilon);
        if lo >= hi {
            return Err(Error::InvalidDomain(format!(
                "band [{}, {}] is empty after the {} pole clip",
                self.phi_min, self.phi_max, self.epsilon
            )));
        }
        Ok((lo, hi))
    }

    fn with_resolution(&self, n_phi: usize, n_lambda: usize) -> Self {
        Self { n_phi, n_lambda, ..*self }
    }
}

/// Pointwise density `sqrt(1 + kappa^2 + tau^2)` from a curvature pair.
#[inline]
pub fn integrand_from_curvatures(pair: &CurvaturePair) -> f64 {
    (1.0 + pair.norm_squared()).sqrt()
}

/// The volume density at a point, always at least 1.
pub fn volume_integrand(field: &AngleField, point: &SphericalPoint) -> f64 {
    integrand_from_curvatures(&curvatures_closed_form(field, point))
}

/// The same density measured without the curvature formulas: the field is
/// differentiated covariantly along the geodesics tangent to the orthonormal
/// pair (east, north) and the squared norms of both derivatives enter
/// `sqrt(1 + |D_east v|^2 + |D_north v|^2)`. Serves as the independent route
/// for equivalence checks.
pub fn volume_integrand_extrinsic(
    field: &AngleField,
    point: &SphericalPoint,
    step: f64,
) -> Result<f64> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidDomain(format!("derivative step {step}")));
    }
    let clearance = 4.0 * step;
    if point.phi().abs() + clearance >= FRAC_PI_2 {
        return Err(Error::PoleProximity {
            latitude: point.phi(),
            needed: FRAC_PI_2 - clearance,
        });
    }
    let p = point.embed();
    let mut grad_sq = 0.0;
    for dir in [point.east(), point.north()] {
        let ahead = field.vector_at(&SphereGeometry::geodesic_point(&p, &dir, step))?;
        let behind = field.vector_at(&SphereGeometry::geodesic_point(&p, &dir, -step))?;
        let rate = (ahead - behind) / (2.0 * step);
        grad_sq += SphereGeometry::project_tangent(&p, &rate).norm_squared();
    }
    let value = (1.0 + grad_sq).sqrt();
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "extrinsic volume density" });
    }
    Ok(value)
}

/// Integrates `density * cos(phi)` over the clipped band: Gauss-Legendre
/// nodes in latitude, equispaced trapezoid nodes in longitude. Rows run in
/// parallel; sums are pairwise in a fixed order, so results are bit-identical
/// across thread counts.
pub fn band_quadrature<F>(domain: &IntegrationDomain, density: F) -> Result<f64>
where
    F: Fn(&SphericalPoint) -> f64 + Sync,
{
    let (lo, hi) = domain.clipped()?;
    let (nodes, weights) = gauss_legendre_on(lo, hi, domain.n_phi)?;
    let lambdas = periodic_longitudes(domain.n_lambda);
    let w_lambda = TAU / domain.n_lambda as f64;

    let rows: Vec<f64> = nodes
        .par_iter()
        .zip(weights.par_iter())
        .map(|(&phi, &w_phi)| {
            let cos_phi = phi.cos();
            let ring: Vec<f64> = lambdas
                .iter()
                .map(|&lambda| {
                    let point = SphericalPoint::new(phi, lambda)
                        .expect("quadrature nodes are strictly interior");
                    density(&point) * cos_phi
                })
                .collect();
            pairwise_sum(&ring) * w_lambda * w_phi
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// Band integral of the volume density of `field`.
pub fn volume_band(field: &AngleField, domain: &IntegrationDomain) -> Result<f64> {
    band_quadrature(domain, |point| volume_integrand(field, point))
}

/// Band value together with a resolution-doubling error estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandEstimate {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

/// [`volume_band`] at the domain's resolution and at double resolution; the
/// doubled value is reported with the difference as its error estimate.
pub fn volume_band_checked(
    field: &AngleField,
    domain: &IntegrationDomain,
    tol: f64,
) -> Result<BandEstimate> {
    let coarse = volume_band(field, domain)?;
    let fine = volume_band(
        field,
        &domain.with_resolution(2 * domain.n_phi, 2 * domain.n_lambda),
    )?;
    let error_estimate = (fine - coarse).abs();
    Ok(BandEstimate {
        value: fine,
        error_estimate,
        converged: error_estimate <= tol * fine.abs().max(1.0),
    })
}

/// One hemisphere integrated on the cutoff ladder and extrapolated to zero
/// cutoff.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HemisphereVolume {
    pub extrapolated: f64,
    /// Band values at [`EPSILON_LADDER`], same order.
    pub at_cutoffs: [f64; 3],
}

/// Quadratic polynomial through the `(epsilon, value)` samples, evaluated at
/// `epsilon = 0`. Exact for band values depending linearly or quadratically
/// on the cutoff, which covers every smooth bounded density.
fn extrapolate_to_zero(samples: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for (i, &(e_i, v_i)) in samples.iter().enumerate() {
        let mut weight = 1.0;
        for (j, &(e_j, _)) in samples.iter().enumerate() {
            if i != j {
                weight *= e_j / (e_j - e_i);
            }
        }
        acc += weight * v_i;
    }
    acc
}

fn hemisphere_of_density<F>(
    density: &F,
    pole: Pole,
    n_phi: usize,
    n_lambda: usize,
) -> Result<HemisphereVolume>
where
    F: Fn(&SphericalPoint) -> f64 + Sync,
{
    let (phi_min, phi_max) = match pole {
        Pole::North => (0.0, FRAC_PI_2),
        Pole::South => (-FRAC_PI_2, 0.0),
    };
    let mut at_cutoffs = [0.0; 3];
    let mut samples = [(0.0, 0.0); 3];
    for (slot, &epsilon) in EPSILON_LADDER.iter().enumerate() {
        let domain = IntegrationDomain::new(phi_min, phi_max, epsilon, n_phi, n_lambda)?;
        let value = band_quadrature(&domain, density)?;
        at_cutoffs[slot] = value;
        samples[slot] = (epsilon, value);
    }
    Ok(HemisphereVolume { extrapolated: extrapolate_to_zero(&samples), at_cutoffs })
}

/// Hemisphere volume of `field` with cutoff extrapolation.
pub fn volume_hemisphere(
    field: &AngleField,
    pole: Pole,
    n_phi: usize,
    n_lambda: usize,
) -> Result<HemisphereVolume> {
    hemisphere_of_density(&|p: &SphericalPoint| volume_integrand(field, p), pole, n_phi, n_lambda)
}

/// Resolution and convergence controls for [`volume_total`].
#[derive(Debug, Clone, Copy)]
pub struct VolumeOptions {
    /// Gauss-Legendre nodes per hemisphere.
    pub n_phi: usize,
    /// Trapezoid nodes around each parallel.
    pub n_lambda: usize,
    /// Relative tolerance for the resolution-doubling convergence flag.
    pub convergence_tol: f64,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        Self { n_phi: 256, n_lambda: 512, convergence_tol: 1e-6 }
    }
}

/// Full-sphere volume report. The reported values come from the doubled
/// resolution; `error_estimate` is the shift the doubling produced.
#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    pub total: f64,
    pub north: f64,
    pub south: f64,
    pub error_estimate: f64,
    pub converged: bool,
    pub n_phi: usize,
    pub n_lambda: usize,
}

/// Integrates an arbitrary pointwise density with the same hemisphere split,
/// cutoff extrapolation, and doubling check as [`volume_total`].
pub fn total_of<F>(density: F, opts: &VolumeOptions) -> Result<VolumeReport>
where
    F: Fn(&SphericalPoint) -> f64 + Sync,
{
    let coarse_n = hemisphere_of_density(&density, Pole::North, opts.n_phi, opts.n_lambda)?;
    let coarse_s = hemisphere_of_density(&density, Pole::South, opts.n_phi, opts.n_lambda)?;
    let fine_n =
        hemisphere_of_density(&density, Pole::North, 2 * opts.n_phi, 2 * opts.n_lambda)?;
    let fine_s =
        hemisphere_of_density(&density, Pole::South, 2 * opts.n_phi, 2 * opts.n_lambda)?;

    let coarse = coarse_n.extrapolated + coarse_s.extrapolated;
    let total = fine_n.extrapolated + fine_s.extrapolated;
    let error_estimate = (total - coarse).abs();
    if !total.is_finite() {
        return Err(Error::NonFinite { context: "volume total" });
    }
    Ok(VolumeReport {
        total,
        north: fine_n.extrapolated,
        south: fine_s.extrapolated,
        error_estimate,
        converged: error_estimate <= opts.convergence_tol * total.abs().max(1.0),
        n_phi: opts.n_phi,
        n_lambda: opts.n_lambda,
    })
}

/// Volume of `field` over the whole punctured sphere, north and south
/// hemispheres extrapolated separately and summed.
pub fn volume_total(field: &AngleField, opts: &VolumeOptions) -> Result<VolumeReport> {
    total_of(|point: &SphericalPoint| volume_integrand(field, point), opts)
}

/// Index-based volume lower bound on the punctured 2-sphere:
/// `(1/2) (pi + |I_N| + |I_S| - 2) * 4*pi`.
pub fn lower_bound_s2(index_n: i64, index_s: i64) -> f64 {
    let index_defect = (index_n.unsigned_abs() + index_s.unsigned_abs()) as f64 - 2.0;
    0.5 * (PI + index_defect) * (4.0 * PI)
}

/// Companion bound one dimension up: `(|I_N| + |I_S|) * 2*pi^2`, the index
/// sum times the volume of the unit 3-sphere.
pub fn lower_bound_s3(index_n: i64, index_s: i64) -> f64 {
    (index_n.unsigned_abs() + index_s.unsigned_abs()) as f64 * (TAU * PI)
}

/// Pointwise residuals of the two minimizer identities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SharpnessResidual {
    /// `| |sin(phi)| - sqrt(kappa^2 + tau^2) * cos(phi) |`
    pub res_i: f64,
    /// `| kappa * sin(theta) - tau * cos(theta) |`
    pub res_ii: f64,
}

/// Residuals of `field` at one point.
pub fn residuals_at(field: &AngleField, point: &SphericalPoint) -> SharpnessResidual {
    let pair = curvatures_closed_form(field, point);
    let theta = field.theta(point.phi(), point.lambda());
    let (st, ct) = theta.sin_cos();
    let res_i =
        (point.phi().sin().abs() - pair.norm_squared().sqrt() * point.phi().cos()).abs();
    let res_ii = (pair.kappa * st - pair.tau * ct).abs();
    SharpnessResidual { res_i, res_ii }
}

/// Sup-norm residuals over a latitude-longitude sample grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SharpnessReport {
    pub sup_i: f64,
    pub sup_ii: f64,
    /// `(phi, lambda)` where each sup is attained.
    pub argmax_i: (f64, f64),
    pub argmax_ii: (f64, f64),
}

/// Default residual grid: 181 x 360 clipped at `|phi| <= pi/2 - 1e-3`.
pub fn sharpness_residuals(field: &AngleField) -> SharpnessReport {
    sharpness_residuals_on(field, 181, 360)
}

/// Residual sup-norms on an `n_phi x n_lambda` grid, latitudes inclusive of
/// both clipped ends, longitudes equispaced on `[0, 2*pi)`.
pub fn sharpness_residuals_on(field: &AngleField, n_phi: usize, n_lambda: usize) -> SharpnessReport {
    assert!(n_phi >= 2 && n_lambda >= 1, "residual grid too small");
    let clip = FRAC_PI_2 - 1e-3;
    let d_phi = 2.0 * clip / (n_phi - 1) as f64;
    let lambdas = periodic_longitudes(n_lambda);

    let rows: Vec<(SharpnessResidual, (f64, f64), (f64, f64))> = (0..n_phi)
        .into_par_iter()
        .map(|i| {
            let phi = -clip + d_phi * i as f64;
            let mut best = SharpnessResidual { res_i: -1.0, res_ii: -1.0 };
            let mut at_i = (phi, 0.0);
            let mut at_ii = (phi, 0.0);
            for &lambda in &lambdas {
                let point = SphericalPoint::new(phi, lambda)
                    .expect("residual grid stays off the poles");
                let r = residuals_at(field, &point);
                if r.res_i > best.res_i {
                    best.res_i = r.res_i;
                    at_i = (phi, lambda);
                }
                if r.res_ii > best.res_ii {
                    best.res_ii = r.res_ii;
                    at_ii = (phi, lambda);
                }
            }
            (best, at_i, at_ii)
        })
        .collect();

    let mut report = SharpnessReport {
        sup_i: -1.0,
        sup_ii: -1.0,
        argmax_i: (0.0, 0.0),
        argmax_ii: (0.0, 0.0),
    };
    for (best, at_i, at_ii) in rows {
        if best.res_i > report.sup_i {
            report.sup_i = best.res_i;
            report.argmax_i = at_i;
        }
        if best.res_ii > report.sup_ii {
            report.sup_ii = best.res_ii;
            report.argmax_ii = at_ii;
        }
    }
    report
}
