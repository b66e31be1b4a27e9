//! Variational minimization of the volume functional over discretized angle
//! grids.
//!
//! The optimization variable is a latitude-longitude mesh of angle values on
//! the band `|phi| <= pi/2 - COLLAR`. The discrete objective is the node
//! quadrature (trapezoid in both directions) of the volume density of the
//! interpolated field, plus the closed-form collar contribution of a
//! constant-angle field. Interpolation is bicubic with node tangents equal to
//! central differences of node values, so the node-stencil discretization
//! used by the optimizer IS the interpolated field sampled at its own nodes,
//! and the analytic gradient below is the exact adjoint of the objective.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quadrature::pairwise_sum;
use crate::sphere::AngleField;
use crate::{Error, Result};

/// Width of the polar collar excluded from the mesh. The collar's volume
/// contribution is carried analytically: a constant-angle field contributes
/// exactly its area there after the density and the measure cancel.
pub const COLLAR: f64 = 0.05;

/// Armijo sufficient-decrease constant of the line search.
pub const ARMIJO_C: f64 = 1e-4;

const COLLAR_CONTRIBUTION: f64 = 2.0 * COLLAR * TAU;

/// Angle samples on an `n_phi x n_lambda` mesh, row-major in latitude rows.
/// Latitudes run inclusively from `-(pi/2 - COLLAR)` to `pi/2 - COLLAR`;
/// longitudes are equispaced on `[0, 2*pi)` with the seam condition
/// `theta(phi, lambda + 2*pi) = theta(phi, lambda) + 2*pi*winding`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    n_phi: usize,
    n_lambda: usize,
    winding: i64,
    values: Vec<f64>,
}

impl ThetaGrid {
    pub fn from_values(
        n_phi: usize,
        n_lambda: usize,
        winding: i64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_phi < 4 || n_lambda < 4 {
            return Err(Error::InvalidGrid(format!(
                "mesh {n_phi} x {n_lambda} below the minimum of 4 x 4"
            )));
        }
        if values.len() != n_phi * n_lambda {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {n_phi} x {n_lambda} mesh",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite node value {bad}")));
        }
        Ok(Self { n_phi, n_lambda, winding, values })
    }

    /// Samples `f(phi, lambda)` at every node.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(
        n_phi: usize,
        n_lambda: usize,
        winding: i64,
        f: F,
    ) -> Result<Self> {
        if n_phi < 4 || n_lambda < 4 {
            return Err(Error::InvalidGrid(format!(
                "mesh {n_phi} x {n_lambda} below the minimum of 4 x 4"
            )));
        }
        let d_lambda = mesh_spacing(n_phi, n_lambda).1;
        let mut values = Vec::with_capacity(n_phi * n_lambda);
        for i in 0..n_phi {
            let phi = row_latitude(i, n_phi);
            for j in 0..n_lambda {
                values.push(f(phi, d_lambda * j as f64));
            }
        }
        Self::from_values(n_phi, n_lambda, winding, values)
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_lambda(&self) -> usize {
        self.n_lambda
    }

    pub fn winding(&self) -> i64 {
        self.winding
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Latitude of mesh row `i`.
    pub fn phi_at(&self, i: usize) -> f64 {
        row_latitude(i, self.n_phi)
    }

    /// Longitude of mesh column `j`.
    pub fn lambda_at(&self, j: usize) -> f64 {
        self.spacing().1 * j as f64
    }

    fn spacing(&self) -> (f64, f64) {
        mesh_spacing(self.n_phi, self.n_lambda)
    }

    /// The interpolated field: bicubic inside the band, constant in latitude
    /// beyond the collar edge, seam-shifted by the winding in longitude.
    pub fn to_field(&self) -> AngleField {
        let shared = Arc::new(GridData {
            n_phi: self.n_phi,
            n_lambda: self.n_lambda,
            winding: self.winding,
            values: self.values.clone(),
        });
        let (value, d_phi, d_lambda) =
            (shared.clone(), shared.clone(), shared);
        AngleField::grid_backed(
            move |phi, lambda| value.eval(phi, lambda, Eval::Value),
            move |phi, lambda| d_phi.eval(phi, lambda, Eval::DPhi),
            move |phi, lambda| d_lambda.eval(phi, lambda, Eval::DLambda),
            self.winding,
        )
    }

    /// Writes the grid with its optimizer position as a deterministic JSON
    /// checkpoint.
    pub fn save_checkpoint(&self, path: &Path, iteration: usize, volume: f64) -> Result<()> {
        let file = CheckpointFile {
            n_phi: self.n_phi,
            n_lambda: self.n_lambda,
            epsilon: COLLAR,
            winding: self.winding,
            values: self.values.clone(),
            iteration,
            volume,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`ThetaGrid::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let file: CheckpointFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if (file.epsilon - COLLAR).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "checkpoint collar {} differs from the supported {COLLAR}",
                file.epsilon
            )));
        }
        let grid = Self::from_values(file.n_phi, file.n_lambda, file.winding, file.values)?;
        Ok((grid, CheckpointMeta { iteration: file.iteration, volume: file.volume }))
    }
}

/// Samples an existing field onto a mesh, inheriting its winding.
pub fn grid_from_field(field: &AngleField, n_phi: usize, n_lambda: usize) -> Result<ThetaGrid> {
    ThetaGrid::from_fn(n_phi, n_lambda, field.winding(), |phi, lambda| field.theta(phi, lambda))
}

fn mesh_spacing(n_phi: usize, n_lambda: usize) -> (f64, f64) {
    let band = 2.0 * (FRAC_PI_2 - COLLAR);
    (band / (n_phi - 1) as f64, TAU / n_lambda as f64)
}

/// Row latitudes; the last row is pinned to the band edge exactly so rounding
/// cannot push it outside the interpolated band.
fn row_latitude(i: usize, n_phi: usize) -> f64 {
    let band = FRAC_PI_2 - COLLAR;
    if i == n_phi - 1 {
        band
    } else {
        -band + mesh_spacing(n_phi, 4).0 * i as f64
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    n_phi: usize,
    n_lambda: usize,
    epsilon: f64,
    winding: i64,
    values: Vec<f64>,
    iteration: usize,
    volume: f64,
}

/// Optimizer position stored alongside a checkpointed grid.
#[derive(Debug, Clone, Copy)]
pub struct CheckpointMeta {
    pub iteration: usize,
    pub volume: f64,
}

enum Eval {
    Value,
    DPhi,
    DLambda,
}

struct GridData {
    n_phi: usize,
    n_lambda: usize,
    winding: i64,
    values: Vec<f64>,
}

impl GridData {
    /// Node value at any integer column, seam-shifted by the winding; the row
    /// must be in range.
    fn node(&self, i: i64, j: i64) -> f64 {
        let n = self.n_lambda as i64;
        let wraps = j.div_euclid(n);
        let jj = j.rem_euclid(n) as usize;
        self.values[i as usize * self.n_lambda + jj] + TAU * (self.winding * wraps) as f64
    }

    /// Row access with linear extrapolation one row past each latitude edge,
    /// which keeps constant and linear data exact and turns the edge-node
    /// interpolation tangents into one-sided differences.
    fn row(&self, i: i64, j: i64) -> f64 {
        let last = self.n_phi as i64 - 1;
        if i < 0 {
            2.0 * self.node(0, j) - self.node(1, j)
        } else if i > last {
            2.0 * self.node(last, j) - self.node(last - 1, j)
        } else {
            self.node(i, j)
        }
    }

    fn eval(&self, phi: f64, lambda: f64, what: Eval) -> f64 {
        let (d_phi, d_lambda) = mesh_spacing(self.n_phi, self.n_lambda);
        let band = FRAC_PI_2 - COLLAR;

        // constant-latitude extension beyond the collar edge
        let clamped = phi.clamp(-band, band);
        if matches!(what, Eval::DPhi) && phi.abs() > band {
            return 0.0;
        }

        let mut reduced = lambda.rem_euclid(TAU);
        if reduced >= TAU {
            reduced = 0.0;
        }
        let wraps = ((lambda - reduced) / TAU).round();

        let mut cell_i = ((clamped + band) / d_phi).floor() as i64;
        cell_i = cell_i.clamp(0, self.n_phi as i64 - 2);
        let t = (clamped + band) / d_phi - cell_i as f64;

        let mut cell_j = (reduced / d_lambda).floor() as i64;
        if cell_j >= self.n_lambda as i64 {
            cell_j = self.n_lambda as i64 - 1;
        }
        let s = reduced / d_lambda - cell_j as f64;

        // interpolate each of the four latitude rows along longitude
        let mut q = [0.0f64; 4];
        for (slot, row_index) in (cell_i - 1..=cell_i + 2).enumerate() {
            let p = [
                self.row(row_index, cell_j - 1),
                self.row(row_index, cell_j),
                self.row(row_index, cell_j + 1),
                self.row(row_index, cell_j + 2),
            ];
            q[slot] = match what {
                Eval::DLambda => catmull_rom_derivative(&p, s) / d_lambda,
                _ => catmull_rom(&p, s),
            };
        }
        let result = match what {
            Eval::DPhi => catmull_rom_derivative(&q, t) / d_phi,
            _ => catmull_rom(&q, t),
        };
        match what {
            Eval::Value => result + TAU * self.winding as f64 * wraps,
            _ => result,
        }
    }
}

/// Cubic through `p[1]` (at `t = 0`) and `p[2]` (at `t = 1`) with endpoint
/// slopes equal to the central differences `(p[2]-p[0])/2`, `(p[3]-p[1])/2`.
fn catmull_rom(p: &[f64; 4], t: f64) -> f64 {
    let a = 2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3];
    let b = -p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3];
    p[1] + 0.5 * t * ((p[2] - p[0]) + t * (a + t * b))
}

fn catmull_rom_derivative(p: &[f64; 4], t: f64) -> f64 {
    let a = 2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3];
    let b = -p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3];
    0.5 * ((p[2] - p[0]) + t * (2.0 * a + 3.0 * t * b))
}

/// Node-stencil partial derivatives of the grid: latitude differences are
/// central with one-sided edges, longitude differences are central with the
/// seam shift. These equal the interpolant's derivatives at the nodes.
fn node_derivatives(grid: &ThetaGrid) -> (Vec<f64>, Vec<f64>) {
    let (n_phi, n_lambda) = (grid.n_phi, grid.n_lambda);
    let (d_phi, d_lambda) = grid.spacing();
    let v = &grid.values;
    let at = |i: usize, j: usize| v[i * n_lambda + j];
    let seam = TAU * grid.winding as f64;

    let mut dphi = vec![0.0; n_phi * n_lambda];
    let mut dlambda = vec![0.0; n_phi * n_lambda];
    for i in 0..n_phi {
        for j in 0..n_lambda {
            let idx = i * n_lambda + j;
            dphi[idx] = if i == 0 {
                (at(1, j) - at(0, j)) / d_phi
            } else if i == n_phi - 1 {
                (at(n_phi - 1, j) - at(n_phi - 2, j)) / d_phi
            } else {
                (at(i + 1, j) - at(i - 1, j)) / (2.0 * d_phi)
            };
            let ahead = if j + 1 == n_lambda { at(i, 0) + seam } else { at(i, j + 1) };
            let behind = if j == 0 { at(i, n_lambda - 1) - seam } else { at(i, j - 1) };
            dlambda[idx] = (ahead - behind) / (2.0 * d_lambda);
        }
    }
    (dphi, dlambda)
}

/// Density times measure at a node:
/// `sqrt(cos^2(phi) (1 + theta_phi^2) + (theta_lambda + sin(phi))^2)`,
/// the volume integrand folded with `cos(phi)` and expanded through the
/// frame chain rule. Equals 1 wherever the angle is locally constant.
#[inline]
fn node_density(cos_phi: f64, sin_phi: f64, dphi: f64, dlambda: f64) -> f64 {
    (cos_phi * cos_phi * (1.0 + dphi * dphi) + (dlambda + sin_phi) * (dlambda + sin_phi)).sqrt()
}

/// Trapezoid weights per latitude row: interior rows weigh `d_phi`, edge rows
/// half that.
fn phi_weights(grid: &ThetaGrid) -> Vec<f64> {
    let d_phi = grid.spacing().0;
    (0..grid.n_phi)
        .map(|i| {
            if i == 0 || i == grid.n_phi - 1 {
                0.5 * d_phi
            } else {
                d_phi
            }
        })
        .collect()
}

/// Volume of the interpolated field at the grid's own resolution: node
/// quadrature over the band plus the analytic collar contribution.
pub fn grid_objective(grid: &ThetaGrid) -> f64 {
    let (dphi, dlambda) = node_derivatives(grid);
    let weights = phi_weights(grid);
    let w_lambda = grid.spacing().1;

    let rows: Vec<f64> = (0..grid.n_phi)
        .map(|i| {
            let (sin_phi, cos_phi) = grid.phi_at(i).sin_cos();
            let ring: Vec<f64> = (0..grid.n_lambda)
                .map(|j| {
                    let idx = i * grid.n_lambda + j;
                    node_density(cos_phi, sin_phi, dphi[idx], dlambda[idx])
                })
                .collect();
            pairwise_sum(&ring) * w_lambda * weights[i]
        })
        .collect();
    pairwise_sum(&rows) + COLLAR_CONTRIBUTION
}

/// Exact gradient of [`grid_objective`]: the objective depends on the nodes
/// only through the two difference stencils, so the gradient is the adjoint
/// scatter of the per-node density derivatives through those stencils.
pub fn grid_gradient(grid: &ThetaGrid) -> Vec<f64> {
    let (n_phi, n_lambda) = (grid.n_phi, grid.n_lambda);
    let (d_phi, d_lambda) = grid.spacing();
    let (dphi, dlambda) = node_derivatives(grid);
    let weights = phi_weights(grid);
    let w_lambda = grid.spacing().1;

    let mut grad = vec![0.0; n_phi * n_lambda];
    for i in 0..n_phi {
        let (sin_phi, cos_phi) = grid.phi_at(i).sin_cos();
        let scale = weights[i] * w_lambda;
        for j in 0..n_lambda {
            let idx = i * n_lambda + j;
            let density = node_density(cos_phi, sin_phi, dphi[idx], dlambda[idx]);
            // partials of the node density with respect to its two stencils
            let by_dphi = scale * cos_phi * cos_phi * dphi[idx] / density;
            let by_dlambda = scale * (dlambda[idx] + sin_phi) / density;

            // adjoint of the longitude stencil (central, seam-wrapped)
            let ahead = i * n_lambda + (j + 1) % n_lambda;
            let behind = i * n_lambda + (j + n_lambda - 1) % n_lambda;
            grad[ahead] += by_dlambda / (2.0 * d_lambda);
            grad[behind] -= by_dlambda / (2.0 * d_lambda);

            // adjoint of the latitude stencil (one-sided at the edges)
            if i == 0 {
                grad[n_lambda + j] += by_dphi / d_phi;
                grad[j] -= by_dphi / d_phi;
            } else if i == n_phi - 1 {
                grad[idx] += by_dphi / d_phi;
                grad[idx - n_lambda] -= by_dphi / d_phi;
            } else {
                grad[idx + n_lambda] += by_dphi / (2.0 * d_phi);
                grad[idx - n_lambda] -= by_dphi / (2.0 * d_phi);
            }
        }
    }
    grad
}

/// Sup over mesh nodes of the derivative magnitude of the angle along the
/// field directions, `sqrt(theta_v^2 + theta_vperp^2)`; the rotation from
/// frame rates to field rates is an isometry, so this equals
/// `sqrt((theta_lambda / cos(phi))^2 + theta_phi^2)`. Zero exactly when the
/// interpolated field has constant angle.
pub fn loxodromy_defect(grid: &ThetaGrid) -> f64 {
    let (dphi, dlambda) = node_derivatives(grid);
    let mut sup = 0.0f64;
    for i in 0..grid.n_phi {
        let cos_phi = grid.phi_at(i).cos();
        for j in 0..grid.n_lambda {
            let idx = i * grid.n_lambda + j;
            let along = dlambda[idx] / cos_phi;
            sup = sup.max((along * along + dphi[idx] * dphi[idx]).sqrt());
        }
    }
    sup
}

/// Descent controls; the defaults match the canonical perturbed-start run.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the gradient sup-norm falls below this.
    pub tol: f64,
    /// First trial step of the first line search.
    pub step0: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { max_iter: 30_000, tol: 3e-8, step0: 0.1 }
    }
}

/// Outcome of a descent run. The objective trace includes the starting value
/// and is non-increasing; the step history records accepted step sizes.
#[derive(Debug, Clone, Serialize)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub defect_trace: Vec<f64>,
    pub step_history: Vec<f64>,
    pub final_volume: f64,
    pub loxodromy_defect: f64,
    pub gradient_sup: f64,
    pub converged: bool,
    /// True for winding classes other than 0, where the minimizer
    /// characterization is not asserted.
    pub exploratory: bool,
}

/// Gradient descent with backtracking Armijo line search (sufficient
/// decrease [`ARMIJO_C`], shrink 0.5, warm start at twice the previously
/// accepted step). Fails loudly when no descent step above 1e-14 exists.
pub fn minimize(grid0: &ThetaGrid, opts: &MinimizeOptions) -> Result<(ThetaGrid, MinimizeReport)> {
    if opts.max_iter == 0 || !(opts.tol > 0.0) || !(opts.step0 > 0.0) {
        return Err(Error::InvalidDomain(format!(
            "minimize options: max_iter {}, tol {}, step0 {}",
            opts.max_iter, opts.tol, opts.step0
        )));
    }
    let mut grid = grid0.clone();
    let mut objective = grid_objective(&grid);
    let mut objective_trace = vec![objective];
    let mut defect_trace = vec![loxodromy_defect(&grid)];
    let mut step_history = Vec::new();
    let mut trial = opts.step0;
    let mut gradient_sup = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 0..opts.max_iter {
        let gradient = grid_gradient(&grid);
        gradient_sup = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gradient_sup < opts.tol {
            converged = true;
            break;
        }
        // directional derivative along the descent direction -gradient
        let slope: f64 = -gradient.iter().map(|g| g * g).sum::<f64>();

        let mut alpha = trial;
        let mut accepted = false;
        while alpha > 1e-14 {
            let candidate_values: Vec<f64> = grid
                .values
                .iter()
                .zip(&gradient)
                .map(|(v, g)| v - alpha * g)
                .collect();
            let candidate = ThetaGrid {
                n_phi: grid.n_phi,
                n_lambda: grid.n_lambda,
                winding: grid.winding,
                values: candidate_values,
            };
            let candidate_objective = grid_objective(&candidate);
            if candidate_objective <= objective + ARMIJO_C * alpha * slope {
                grid = candidate;
                objective = candidate_objective;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearchFailure { iteration, step: alpha });
        }
        iterations = iteration + 1;
        step_history.push(alpha);
        objective_trace.push(objective);
        defect_trace.push(loxodromy_defect(&grid));
        trial = (2.0 * alpha).min(64.0);
    }

    if !converged {
        let gradient = grid_gradient(&grid);
        gradient_sup = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        converged = gradient_sup < opts.tol;
    }

    let report = MinimizeReport {
        iterations,
        final_volume: objective,
        loxodromy_defect: *defect_trace.last().expect("trace starts non-empty"),
        objective_trace,
        defect_trace,
        step_history,
        gradient_sup,
        converged,
        exploratory: grid.winding != 0,
    };
    Ok((grid, report))
}
