//! Truncated Wolff potentials
//! `W^R_{α,p}[μ](x) = ∫_0^R (μ(B_r(x)) / r^{N-αp})^{1/(p-1)} dr/r`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{distance, unit_ball_volume, DiscreteDomain, Point};
use crate::error::{invalid, Error, Result};
use crate::field::SolutionField;
use crate::measure::MeasureData;
use crate::quadrature::composite_gauss;

fn default_radial_grid() -> usize {
    512
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolffQuery {
    pub alpha: f64,
    pub p: f64,
    /// Truncation radius R.
    pub radius: f64,
    /// Log-spaced panels for radial quadrature where the ball mass is not a
    /// step function.
    #[serde(default = "default_radial_grid")]
    pub radial_grid: usize,
    /// Evaluate against |μ| instead of rejecting signed data.
    #[serde(default)]
    pub absolute: bool,
}

impl WolffQuery {
    pub fn new(alpha: f64, p: f64, radius: f64) -> Self {
        WolffQuery {
            alpha,
            p,
            radius,
            radial_grid: default_radial_grid(),
            absolute: false,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.p > 1.0 && self.p < dim as f64 / self.alpha) {
            return Err(invalid(
                "p",
                format!("need 1 < p < N/α = {}, got {}", dim as f64 / self.alpha, self.p),
            ));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("radius", format!("must be positive, got {}", self.radius)));
        }
        if self.radial_grid < 16 {
            return Err(invalid("radial_grid", format!("need at least 16 radii, got {}", self.radial_grid)));
        }
        Ok(())
    }

    /// `1/(p-1)`.
    pub fn theta(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }

    /// `(N - αp)/(p-1)`, the decay exponent of a point mass.
    pub fn gamma(&self, dim: usize) -> f64 {
        (dim as f64 - self.alpha * self.p) * self.theta()
    }

    /// `∫_a^b (M / r^{N-αp})^θ dr/r` for constant `M`.
    fn constant_piece(&self, dim: usize, mass: f64, a: f64, b: f64) -> f64 {
        if mass <= 0.0 || b <= a {
            return 0.0;
        }
        let g = self.gamma(dim);
        let lower = if a == 0.0 { f64::INFINITY } else { a.powf(-g) };
        mass.powf(self.theta()) * (lower - b.powf(-g)) / g
    }

    /// `∫_a^b (c r^N / r^{N-αp})^θ dr/r` for a mass growing like `c r^N`.
    fn volume_piece(&self, c: f64, a: f64, b: f64) -> f64 {
        if c <= 0.0 || b <= a {
            return 0.0;
        }
        let e = self.alpha * self.p * self.theta();
        c.powf(self.theta()) * (b.powf(e) - a.powf(e)) / e
    }
}

fn nodal_masses(domain: &DiscreteDomain, mu: &MeasureData, q: &WolffQuery) -> Result<Vec<f64>> {
    q.validate(domain.dim())?;
    if mu.n_nodes() != domain.n_interior() {
        return Err(Error::Mismatch("measure and domain sizes differ".into()));
    }
    let m = mu.node_masses(domain);
    if m.iter().any(|v| *v < 0.0) {
        if !q.absolute {
            return Err(Error::InvalidMeasure(
                "Wolff potential of a signed measure; set `absolute` to use |μ|".into(),
            ));
        }
        return Ok(m.into_iter().map(f64::abs).collect());
    }
    Ok(m)
}

/// Exact integral for point masses `(distance, mass)` sorted by distance,
/// starting the radial integral at `start` with `base` mass already inside.
fn step_integral(q: &WolffQuery, dim: usize, sorted: &[(f64, f64)], start: f64, mut base: f64) -> f64 {
    let mut total = 0.0;
    let mut r = start;
    for &(d, m) in sorted {
        if d >= q.radius {
            break;
        }
        if d > r {
            total += q.constant_piece(dim, base, r, d);
            r = d;
        }
        base += m;
    }
    total + q.constant_piece(dim, base, r, q.radius)
}

/// Wolff potential at an arbitrary point, every nodal mass treated as a
/// point mass. Infinite at a node carrying positive mass.
pub fn wolff_potential(domain: &DiscreteDomain, mu: &MeasureData, x: &Point, q: &WolffQuery) -> Result<f64> {
    let m = nodal_masses(domain, mu, q)?;
    let mut pts: Vec<(f64, f64)> = domain
        .points()
        .iter()
        .zip(&m)
        .filter(|(_, m)| **m > 0.0)
        .map(|(p, m)| (distance(p, x), *m))
        .filter(|(d, _)| *d < q.radius)
        .collect();
    if pts.iter().any(|(d, _)| *d == 0.0) {
        return Ok(f64::INFINITY);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(step_integral(q, domain.dim(), &pts, 0.0, 0.0))
}

/// Wolff potential at every interior node. The node's own mass is spread
/// uniformly over the ball of the cell's volume, so the value stays finite.
pub fn wolff_field(domain: &DiscreteDomain, mu: &MeasureData, q: &WolffQuery) -> Result<SolutionField> {
    let nodes: Vec<usize> = (0..domain.n_interior()).collect();
    SolutionField::from_values(wolff_at_nodes(domain, mu, q, &nodes)?)
}

/// [`wolff_field`] restricted to the listed nodes.
pub fn wolff_at_nodes(domain: &DiscreteDomain, mu: &MeasureData, q: &WolffQuery, nodes: &[usize]) -> Result<Vec<f64>> {
    wolff_with_radius(domain, mu, q, nodes, |_| q.radius)
}

/// [`wolff_at_nodes`] with the truncation radius chosen per node, as in
/// `W^{d(x)/8}`; `q.radius` is ignored.
pub fn wolff_with_radius<F: Fn(usize) -> f64 + Sync>(
    domain: &DiscreteDomain,
    mu: &MeasureData,
    q: &WolffQuery,
    nodes: &[usize],
    radius: F,
) -> Result<Vec<f64>> {
    let m = nodal_masses(domain, mu, q)?;
    if let Some(i) = nodes.iter().find(|&&i| i >= domain.n_interior()) {
        return Err(invalid("nodes", format!("node {i} is not an interior node")));
    }
    let carriers: Vec<usize> = (0..m.len()).filter(|&j| m[j] > 0.0).collect();
    if carriers.is_empty() {
        return Ok(vec![0.0; nodes.len()]);
    }
    nodes
        .par_iter()
        .map(|&i| {
            let r = radius(i);
            if !(r > 0.0) {
                return Err(invalid(
                    "radius",
                    format!("truncation radius at node {i} must be positive, got {r}"),
                ));
            }
            let local = WolffQuery { radius: r, ..*q };
            Ok(node_value(domain, &m, &carriers, &local, i))
        })
        .collect()
}

fn node_value(domain: &DiscreteDomain, m: &[f64], carriers: &[usize], q: &WolffQuery, i: usize) -> f64 {
    let dim = domain.dim();
    let x = domain.point(i);
    let mut pts: Vec<(f64, f64)> = carriers
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (distance(domain.point(j), x), m[j]))
        .filter(|(d, _)| *d < q.radius)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let own = m[i];
    let rho = domain.cell_radius(i).min(q.radius);
    if own == 0.0 {
        return step_integral(q, dim, &pts, 0.0, 0.0);
    }
    let c = own / rho.powi(dim as i32);
    let first = pts.first().map_or(f64::INFINITY, |pt| pt.0);
    if first >= rho {
        return q.volume_piece(c, 0.0, rho) + step_integral(q, dim, &pts, rho, own);
    }
    // neighbours inside the cell ball: integrate the mixed mass numerically
    let inside: Vec<(f64, f64)> = pts.iter().copied().filter(|pt| pt.0 < rho).collect();
    let mut edges = vec![first];
    let panels = q.radial_grid.max(16);
    for k in 1..=panels {
        edges.push(first * (rho / first).powf(k as f64 / panels as f64));
    }
    edges.extend(inside.iter().map(|pt| pt.0).filter(|d| *d > first));
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let theta = q.theta();
    let lift = dim as f64 - q.alpha * q.p;
    let mixed = composite_gauss(
        |r| {
            let ext: f64 = inside.iter().filter(|pt| pt.0 < r).map(|pt| pt.1).sum();
            ((c * r.powi(dim as i32) + ext) / r.powf(lift)).powf(theta) / r
        },
        &edges,
    );
    let rest: Vec<(f64, f64)> = pts.iter().copied().filter(|pt| pt.0 >= rho).collect();
    let inner_mass: f64 = inside.iter().map(|pt| pt.1).sum();
    q.volume_piece(c, 0.0, first) + mixed + step_integral(q, dim, &rest, rho, own + inner_mass)
}

/// Uniform measure of total `mass` on the ball `B_radius(center)` of ℝ^N,
/// kept analytic for closed-form checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBall {
    pub center: Point,
    pub radius: f64,
    pub mass: f64,
}

impl UniformBall {
    /// `μ(B_r(x))`.
    pub fn ball_mass(&self, dim: usize, x: &Point, r: f64) -> f64 {
        let d = distance(x, &self.center);
        let rho = self.radius;
        if r <= 0.0 || d >= r + rho {
            return 0.0;
        }
        let fraction = if d + r <= rho {
            (r / rho).powi(dim as i32)
        } else if d + rho <= r {
            1.0
        } else if dim == 1 {
            ((d + rho).min(r) - (d - rho).max(-r)).max(0.0) / (2.0 * rho)
        } else {
            lens_area(r, rho, d) / (PI * rho * rho)
        };
        self.mass * fraction
    }
}

/// Area of the intersection of two disks of radii `a`, `b` with centres `d` apart.
fn lens_area(a: f64, b: f64, d: f64) -> f64 {
    let ca = ((d * d + a * a - b * b) / (2.0 * d * a)).clamp(-1.0, 1.0);
    let cb = ((d * d + b * b - a * a) / (2.0 * d * b)).clamp(-1.0, 1.0);
    let k = ((-d + a + b) * (d + a - b) * (d - a + b) * (d + a + b)).max(0.0).sqrt();
    a * a * ca.acos() + b * b * cb.acos() - 0.5 * k
}

/// Wolff potential of an analytic uniform ball. Power-law and constant
/// stretches are integrated exactly; the lens range uses composite
/// Gauss–Legendre on `radial_grid` log-spaced panels.
pub fn wolff_potential_ball(ball: &UniformBall, dim: usize, x: &Point, q: &WolffQuery) -> Result<f64> {
    q.validate(dim)?;
    if !(ball.radius > 0.0 && ball.mass >= 0.0) {
        return Err(Error::InvalidMeasure(format!("degenerate ball {ball:?}")));
    }
    if ball.mass == 0.0 {
        return Ok(0.0);
    }
    let d = distance(x, &ball.center);
    let rho = ball.radius;
    let big_r = q.radius;
    let mut total = 0.0;
    // fully inside: μ(B_r) = mass (r/ρ)^N
    let inner = (rho - d).max(0.0).min(big_r);
    total += q.volume_piece(ball.mass / rho.powi(dim as i32), 0.0, inner);
    // partial overlap
    let lo = (d - rho).abs().max(inner);
    let hi = (d + rho).min(big_r);
    if hi > lo {
        let start = if lo > 0.0 { lo } else { hi * 1e-12 };
        let n = q.radial_grid;
        let edges: Vec<f64> = (0..=n).map(|k| start * (hi / start).powf(k as f64 / n as f64)).collect();
        let lift = dim as f64 - q.alpha * q.p;
        total += composite_gauss(|r| (ball.ball_mass(dim, x, r) / r.powf(lift)).powf(q.theta()) / r, &edges);
    }
    // whole ball inside B_r
    total += q.constant_piece(dim, ball.mass, (d + rho).max(inner), big_r);
    Ok(total)
}

/// `ω_N ρ^N`, exposed for callers building cell balls.
pub fn ball_volume(dim: usize, rho: f64) -> f64 {
    unit_ball_volume(dim) * rho.powi(dim as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;
    use crate::quadrature::integrate;

    fn disk(h: f64) -> DiscreteDomain {
        DiscreteDomain::lattice(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            h,
            None,
        )
        .unwrap()
    }

    #[test]
    fn dirac_closed_form() {
        let d = disk(0.125);
        let mu = MeasureData::dirac(&d, &[0.0, 0.0], 1.0);
        let q = WolffQuery::new(0.5, 2.0, 4.0);
        let v = wolff_potential(&d, &mu, &[0.25, 0.0], &q).unwrap();
        assert!((v - 3.75).abs() < 1e-12);
        assert_eq!(
            wolff_potential(&d, &MeasureData::zero(d.n_interior()), &[0.25, 0.0], &q).unwrap(),
            0.0
        );
    }

    #[test]
    fn uniform_ball_closed_form() {
        let ball = UniformBall {
            center: [0.0, 0.0],
            radius: 1.0,
            mass: 1.0,
        };
        let q = WolffQuery::new(0.5, 2.0, 4.0);
        let v = wolff_potential_ball(&ball, 2, &[0.0, 0.0], &q).unwrap();
        assert!((v - 1.75).abs() < 1e-12);
    }

    #[test]
    fn off_centre_ball_matches_adaptive_quadrature() {
        let ball = UniformBall {
            center: [0.0, 0.0],
            radius: 1.0,
            mass: 2.0,
        };
        let mut q = WolffQuery::new(0.6, 1.7, 3.0);
        q.radial_grid = 512;
        for x in [[0.4, 0.1], [1.5, -0.3]] {
            let v = wolff_potential_ball(&ball, 2, &x, &q).unwrap();
            let f = |r: f64| (ball.ball_mass(2, &x, r) / r.powf(2.0 - 0.6 * 1.7)).powf(1.0 / 0.7) / r;
            let mut oracle = 0.0;
            let bps = [0.0, (1.0 - distance(&x, &[0.0, 0.0])).abs(), 1.0 + distance(&x, &[0.0, 0.0]), 3.0];
            for w in bps.windows(2) {
                oracle += integrate(f, w[0], w[1], 1e-14, 1e-12).0;
            }
            assert!((v - oracle).abs() < 1e-8 * oracle, "{v} vs {oracle}");
        }
    }

    #[test]
    fn lens_area_limits() {
        assert!((lens_area(1.0, 1.0, 1e-9) - PI).abs() < 1e-6);
        assert!(lens_area(1.0, 1.0, 2.0).abs() < 1e-12);
    }

    #[test]
    fn field_decreases_away_from_atom_and_scales() {
        let d = disk(0.1);
        let mu = MeasureData::dirac(&d, &[0.0, 0.0], 1.0);
        let q = WolffQuery::new(0.5, 1.5, 2.0);
        let f = wolff_field(&d, &mu, &q).unwrap();
        let c = d.nearest_node(&[0.0, 0.0]);
        let mut order: Vec<usize> = (0..d.n_interior()).collect();
        order.sort_by(|&a, &b| distance(d.point(a), d.point(c)).total_cmp(&distance(d.point(b), d.point(c))));
        for w in order.windows(2) {
            let (da, db) = (distance(d.point(w[0]), d.point(c)), distance(d.point(w[1]), d.point(c)));
            if db > da + 1e-12 {
                assert!(f.values()[w[0]] > f.values()[w[1]]);
            }
        }
        let g = wolff_field(&d, &mu.scaled(3.0), &q).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((b - 3f64.powf(2.0) * a).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn signed_data_needs_flag() {
        let d = disk(0.25);
        let mu = MeasureData::dirac(&d, &[0.0, 0.0], -1.0);
        let mut q = WolffQuery::new(0.5, 2.0, 4.0);
        assert!(wolff_field(&d, &mu, &q).is_err());
        q.absolute = true;
        assert!(wolff_field(&d, &mu, &q).is_ok());
    }
}
