//! Discrete Bessel capacity
//! `Cap_{α,β}(E) = inf { Σ g_j^β w_j : g ≥ 0, Σ_j G_α(|x_i - x_j|) g_j w_j ≥ 1 on E }`.
//!
//! The program is solved through its concave dual in the constraint
//! multipliers with a projected Newton method; every iterate yields a
//! rescaled feasible primal point, so the returned value carries a
//! duality-gap certificate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{BesselKernel, DEFAULT_BESSEL_POINTS};
use crate::domain::{distance, unit_ball_volume, unit_sphere_area, DiscreteDomain, Point};
use crate::error::{invalid, Error, Result};
use crate::quadrature::integrate;

/// Nodes and weights carrying the density `g`; may extend beyond Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientGrid {
    dim: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl AmbientGrid {
    pub fn new(dim: usize, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("only N = 1, 2 are supported, got {dim}")));
        }
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidDomain("ambient grid needs one weight per node".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidDomain("ambient weights must be positive".into()));
        }
        Ok(AmbientGrid { dim, points, weights })
    }

    pub fn from_domain(domain: &DiscreteDomain) -> Self {
        AmbientGrid {
            dim: domain.dim(),
            points: domain.points().to_vec(),
            weights: domain.weights().to_vec(),
        }
    }

    /// Grid graded geometrically around `center`: a central cell of radius
    /// `r_min`, then shells with `rings_per_decade` radii per factor 10 out
    /// to `r_max`, each split into `angular` sectors (two half-lines in 1D).
    pub fn log_polar(dim: usize, center: Point, r_min: f64, r_max: f64, rings_per_decade: usize, angular: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) {
            return Err(invalid("r_min", format!("need 0 < r_min < r_max, got {r_min}, {r_max}")));
        }
        if rings_per_decade == 0 || (dim == 2 && angular < 3) {
            return Err(invalid("rings_per_decade", "need at least one ring per decade and three sectors"));
        }
        let ratio = 10f64.powf(1.0 / rings_per_decade as f64);
        let mut points = vec![center];
        let mut weights = vec![unit_ball_volume(dim) * r_min.powi(dim as i32)];
        let mut inner = r_min;
        let mut ring = 0usize;
        while inner < r_max {
            let outer = inner * ratio;
            let mid = (inner * outer).sqrt();
            if dim == 1 {
                for sign in [-1.0, 1.0] {
                    points.push([center[0] + sign * mid, 0.0]);
                    weights.push(outer - inner);
                }
            } else {
                let w = std::f64::consts::PI * (outer * outer - inner * inner) / angular as f64;
                let shift = if ring.is_multiple_of(2) { 0.0 } else { 0.5 };
                for k in 0..angular {
                    let phi = 2.0 * std::f64::consts::PI * (k as f64 + shift) / angular as f64;
                    points.push([center[0] + mid * phi.cos(), center[1] + mid * phi.sin()]);
                    weights.push(w);
                }
            }
            inner = outer;
            ring += 1;
        }
        AmbientGrid::new(dim, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of nodes in the closed ball `B_r(center)`.
    pub fn ball(&self, center: &Point, r: f64) -> Vec<usize> {
        (0..self.len()).filter(|&j| distance(&self.points[j], center) <= r).collect()
    }

    fn cell_radius(&self, j: usize) -> f64 {
        (self.weights[j] / unit_ball_volume(self.dim)).powf(1.0 / self.dim as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityProblem {
    pub alpha: f64,
    pub beta: f64,
    /// Target set E as indices into the ambient grid.
    pub target: Vec<usize>,
    pub ambient: AmbientGrid,
    pub bessel_points: usize,
}

impl CapacityProblem {
    pub fn new(alpha: f64, beta: f64, target: Vec<usize>, ambient: AmbientGrid) -> Self {
        CapacityProblem {
            alpha,
            beta,
            target,
            ambient,
            bessel_points: DEFAULT_BESSEL_POINTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < self.ambient.dim as f64) {
            return Err(invalid("alpha", format!("need 0 < α < N, got {}", self.alpha)));
        }
        if !(self.beta > 1.0) {
            return Err(invalid("beta", format!("need β > 1, got {}", self.beta)));
        }
        if let Some(i) = self.target.iter().find(|&&i| i >= self.ambient.len()) {
            return Err(invalid("target", format!("node {i} is not on the ambient grid")));
        }
        Ok(())
    }

    /// Constraint matrix `A_ij = G_α(|x_i - x_j|) w_j` for `i ∈ E`. The
    /// diagonal entry integrates `G_α` over the ball with the cell's volume.
    pub fn constraint_matrix(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let kernel = BesselKernel::with_points(self.alpha, self.ambient.dim, self.bessel_points)?;
        let mut target = self.target.clone();
        target.sort_unstable();
        target.dedup();
        let n = self.ambient.len();
        let pts = &self.ambient.points;
        let w = &self.ambient.weights;
        let rows: Vec<Vec<f64>> = target
            .par_iter()
            .map(|&i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            self_cell_mass(&kernel, self.ambient.cell_radius(j))
                        } else {
                            let d = distance(&pts[i], &pts[j]);
                            kernel.eval(d).map(|g| g * w[j]).unwrap_or(0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DMatrix::from_fn(target.len(), n, |i, j| rows[i][j]))
    }
}

/// `∫_{B_ρ} G_α(|y|) dy`, with `r = ρ v^{1/α}` removing the `r^{α-1}`
/// singularity at the origin.
fn self_cell_mass(kernel: &BesselKernel, rho: f64) -> f64 {
    let (a, dim) = (kernel.alpha(), kernel.dim());
    let f = |v: f64| {
        let r = rho * v.powf(1.0 / a);
        kernel.eval(r).unwrap_or(0.0) * r.powi(dim as i32 - 1) * rho / a * v.powf(1.0 / a - 1.0)
    };
    unit_sphere_area(dim) * integrate(f, 0.0, 1.0, 1e-300, 1e-10).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Primal objective at a feasible density (an upper bound).
    pub value: f64,
    /// Dual objective (a lower bound).
    pub lower: f64,
    pub iterations: usize,
    pub density: Vec<f64>,
}

impl CapacityResult {
    pub fn relative_gap(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            (self.value - self.lower) / self.value
        }
    }
}

struct Dual<'a> {
    a: &'a DMatrix<f64>,
    w: &'a [f64],
    beta: f64,
}

struct DualPoint {
    value: f64,
    density: DVector<f64>,
    z: DVector<f64>,
}

impl Dual<'_> {
    fn eval(&self, lambda: &DVector<f64>) -> DualPoint {
        let z = self.a.tr_mul(lambda);
        let e = 1.0 / (self.beta - 1.0);
        let density = DVector::from_fn(z.len(), |j, _| (z[j].max(0.0) / (self.beta * self.w[j])).powf(e));
        let pairing: f64 = z.iter().zip(density.iter()).map(|(z, g)| z * g).sum();
        DualPoint {
            value: lambda.sum() - (self.beta - 1.0) / self.beta * pairing,
            density,
            z,
        }
    }

    /// Feasible rescaling of a density and its objective.
    fn primal(&self, density: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let reach = self.a * density;
        let worst = reach.min();
        if !(worst > 0.0) {
            return None;
        }
        let g = density / worst;
        let obj = g.iter().zip(self.w).map(|(g, w)| g.powf(self.beta) * w).sum();
        Some((obj, g))
    }
}

/// Capacity of the target set to relative duality gap `tol`.
pub fn capacity(problem: &CapacityProblem, tol: f64) -> Result<CapacityResult> {
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    problem.validate()?;
    if problem.target.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            lower: 0.0,
            iterations: 0,
            density: vec![0.0; problem.ambient.len()],
        });
    }
    let a = problem.constraint_matrix()?;
    for i in 0..a.nrows() {
        if !(a.row(i).sum() > 1e-300) {
            return Err(Error::Infeasible(format!("kernel row of target node {i} vanishes")));
        }
    }
    let beta = problem.beta;
    let dual = Dual {
        a: &a,
        w: &problem.ambient.weights,
        beta,
    };
    let m = a.nrows();
    // best multiple of the all-ones multiplier
    let mut lambda = DVector::from_element(m, 1.0);
    let probe = dual.eval(&lambda);
    let pairing = lambda.sum() - probe.value;
    let scale = (m as f64 / (pairing * beta / (beta - 1.0))).powf(beta - 1.0);
    lambda *= scale;
    let mut point = dual.eval(&lambda);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let max_iter = 500;
    let mut damping = 1e-12;
    let mut iterations = 0;
    for iter in 0..max_iter {
        iterations = iter;
        if let Some((obj, g)) = dual.primal(&point.density) {
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, g));
            }
        }
        let upper = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if upper - point.value <= tol * upper {
            let (value, g) = best.unwrap();
            return Ok(CapacityResult {
                value,
                lower: point.value,
                iterations: iter,
                density: g.iter().copied().collect(),
            });
        }
        let grad = DVector::from_element(m, 1.0) - &a * &point.density;
        let eps = 1e-12 * lambda.max().max(1e-300);
        let free: Vec<usize> = (0..m).filter(|&i| lambda[i] > eps || grad[i] > 0.0).collect();
        // curvature of the dual: A diag(g_j / ((β-1) z_j)) Aᵀ
        let curv: Vec<f64> = (0..a.ncols())
            .map(|j| {
                let z = point.z[j];
                if z > 0.0 {
                    point.density[j] / ((beta - 1.0) * z)
                } else {
                    0.0
                }
            })
            .collect();
        let rhs = DVector::from_fn(free.len(), |r, _| grad[free[r]]);
        let af = DMatrix::from_fn(free.len(), a.ncols(), |r, j| a[(free[r], j)] * curv[j].sqrt());
        let h = &af * af.transpose();
        let diag_max = (0..free.len()).map(|k| h[(k, k)]).fold(0.0, f64::max);
        let mut accepted = false;
        // Levenberg-Marquardt damping grows until a projected step ascends
        while damping <= 1e4 && !accepted {
            let mut step = DVector::zeros(m);
            if !free.is_empty() {
                let mut hd = h.clone();
                for k in 0..free.len() {
                    hd[(k, k)] += damping * diag_max;
                }
                if let Some(chol) = hd.cholesky() {
                    let d = chol.solve(&rhs);
                    for (r, &i) in free.iter().enumerate() {
                        step[i] = d[r];
                    }
                }
            }
            for i in 0..m {
                if !free.contains(&i) {
                    step[i] = grad[i] * lambda[i].max(eps);
                }
            }
            let mut t = 1.0;
            for _ in 0..12 {
                let trial = (&lambda + &step * t).map(|v| v.max(0.0));
                let cand = dual.eval(&trial);
                let ascent = grad.dot(&(&trial - &lambda));
                // near the optimum the dual is flat to roundoff; fall back on
                // the projected gradient
                let flat = cand.value >= point.value - 1e-14 * point.value.abs()
                    && projected_gradient(&a, &cand, &trial) < 0.5 * projected_gradient(&a, &point, &lambda);
                if cand.value.is_finite() && ascent > 0.0 && (cand.value >= point.value + 1e-4 * ascent || flat) {
                    lambda = trial;
                    point = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                if t == 1.0 {
                    damping = (damping * 0.1).max(1e-14);
                }
            } else {
                damping *= 100.0;
            }
        }
        if !accepted {
            break;
        }
    }
    let gap = best.as_ref().map_or(f64::INFINITY, |b| (b.0 - point.value) / b.0);
    Err(Error::NotConverged { iterations, residual: gap })
}

/// Largest dual gradient entry not blocked by the bound `λ ≥ 0`.
fn projected_gradient(a: &DMatrix<f64>, point: &DualPoint, lambda: &DVector<f64>) -> f64 {
    let reach = a * &point.density;
    (0..lambda.len())
        .map(|i| {
            let g = 1.0 - reach[i];
            if lambda[i] > 0.0 {
                g.abs()
            } else {
                g.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityRegime {
    Positive,
    Null,
}

/// Points carry positive `Cap_{α,β}` iff `αβ > N`; the borderline case is
/// classified as null.
pub fn point_capacity_regime(alpha: f64, beta: f64, dim: usize) -> Result<CapacityRegime> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(invalid("alpha", format!("need α, β > 0, got {alpha}, {beta}")));
    }
    Ok(if alpha * beta > dim as f64 {
        CapacityRegime::Positive
    } else {
        CapacityRegime::Null
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageTrend {
    /// Ball radii, decreasing.
    pub radii: Vec<f64>,
    pub capacities: Vec<f64>,
    /// `Cap(B_{r_k}) / Cap(B_{r_{k+1}})` for consecutive radii.
    pub ratios: Vec<f64>,
    pub observed: CapacityRegime,
}

/// Capacity of `B_r(center)` at decreasing radii on a log-polar grid that
/// resolves the smallest ball. The trend reads null when the capacity still
/// drops by at least `2×` over the last radius step, positive otherwise.
pub fn ball_shrinkage(alpha: f64, beta: f64, dim: usize, radii: &[f64], tol: f64) -> Result<ShrinkageTrend> {
    if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
        return Err(invalid("radii", "need at least two positive, strictly decreasing radii"));
    }
    let center = [0.0, 0.0];
    let r_min = radii[radii.len() - 1] / 10.0;
    let grid = AmbientGrid::log_polar(dim, center, r_min, 8.0, 6, 12)?;
    let capacities = radii
        .par_iter()
        .map(|&r| capacity(&CapacityProblem::new(alpha, beta, grid.ball(&center, r), grid.clone()), tol).map(|c| c.value))
        .collect::<Result<Vec<f64>>>()?;
    let ratios: Vec<f64> = capacities.windows(2).map(|c| c[0] / c[1]).collect();
    let observed = if ratios[ratios.len() - 1] >= 2.0 {
        CapacityRegime::Null
    } else {
        CapacityRegime::Positive
    };
    Ok(ShrinkageTrend {
        radii: radii.to_vec(),
        capacities,
        ratios,
        observed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> AmbientGrid {
        let pts: Vec<Point> = (0..8).map(|k| [0.3 * (k % 4) as f64, 0.25 * (k / 4) as f64]).collect();
        AmbientGrid::new(2, pts, vec![0.05; 8]).unwrap()
    }

    /// β = 2: maximise `1ᵀλ - λᵀQλ/2` over λ ≥ 0 with `Q = A W⁻¹ Aᵀ / 2` by
    /// enumerating active sets.
    fn quadratic_oracle(a: &DMatrix<f64>, w: &[f64]) -> f64 {
        let m = a.nrows();
        let winv = DMatrix::from_diagonal(&DVector::from_iterator(w.len(), w.iter().map(|w| 1.0 / w)));
        let q = a * winv * a.transpose() * 0.5;
        let mut best = f64::NEG_INFINITY;
        for mask in 1u32..(1 << m) {
            let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let qs = DMatrix::from_fn(idx.len(), idx.len(), |r, c| q[(idx[r], idx[c])]);
            let Some(lu) = qs.lu().try_inverse() else { continue };
            let ls = lu * DVector::from_element(idx.len(), 1.0);
            if ls.iter().any(|v| *v <= 0.0) {
                continue;
            }
            let mut lambda = DVector::zeros(m);
            for (r, &i) in idx.iter().enumerate() {
                lambda[i] = ls[r];
            }
            let grad = DVector::from_element(m, 1.0) - &q * &lambda;
            if (0..m).any(|i| mask & (1 << i) == 0 && grad[i] > 1e-12) {
                continue;
            }
            best = best.max(lambda.sum() - 0.5 * lambda.dot(&(&q * &lambda)));
        }
        best
    }

    #[test]
    fn quadratic_case_matches_active_set_enumeration() {
        let grid = small_grid();
        for target in [vec![0], vec![0, 5], vec![1, 2, 6], vec![0, 1, 2, 3, 4, 5, 6, 7]] {
            let prob = CapacityProblem::new(1.0, 2.0, target, grid.clone());
            let oracle = quadratic_oracle(&prob.constraint_matrix().unwrap(), grid.weights());
            let cap = capacity(&prob, 1e-10).unwrap();
            assert!((cap.value - oracle).abs() < 1e-8 * oracle, "{} vs {oracle}", cap.value);
        }
    }

    #[test]
    fn empty_target_and_regimes() {
        let prob = CapacityProblem::new(1.0, 2.0, vec![], small_grid());
        assert_eq!(capacity(&prob, 1e-6).unwrap().value, 0.0);
        assert_eq!(point_capacity_regime(1.0, 2.0, 2).unwrap(), CapacityRegime::Null);
        assert_eq!(point_capacity_regime(1.0, 3.0, 2).unwrap(), CapacityRegime::Positive);
        assert_eq!(point_capacity_regime(0.5, 2.0, 2).unwrap(), CapacityRegime::Null);
    }

    #[test]
    fn returned_density_is_feasible() {
        let grid = small_grid();
        let prob = CapacityProblem::new(0.7, 3.0, vec![0, 3, 7], grid.clone());
        let cap = capacity(&prob, 1e-9).unwrap();
        let a = prob.constraint_matrix().unwrap();
        let reach = &a * DVector::from_vec(cap.density.clone());
        assert!(reach.min() >= 1.0 - 1e-12);
        assert!(cap.lower <= cap.value);
    }

    #[test]
    fn log_polar_weights_tile_the_disk() {
        let g = AmbientGrid::log_polar(2, [0.0, 0.0], 1e-3, 1.0, 6, 12).unwrap();
        let total: f64 = g.weights().iter().sum();
        let outer = g.points().iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        let edge = outer * 10f64.powf(1.0 / 12.0);
        assert!((total - std::f64::consts::PI * edge * edge).abs() < 1e-9 * total);
    }
}
