//! Matrix-free solves at `p = 2` on lattice domains: the kernel sum is an
//! FFT convolution and linear systems are solved by Jacobi preconditioned
//! conjugate gradients. Used where the dense table would not fit.

use crate::domain::DiscreteDomain;
use crate::error::{invalid, Error, Result};
use crate::field::SolutionField;
use crate::kernel::{KernelSpec, DENSE_NODE_CAP};
use crate::lattice::LatticeConvolution;
use crate::measure::MeasureData;
use crate::nonlinearity::Nonlinearity;
use crate::solver::{diagnose, SolveOptions, SolveReport};

/// Gradient operator of the quadratic energy on a uniform lattice,
/// `(Au)_i = 2 (w (S_i + E_i) u_i - w² Σ_{j≠i} K_ij u_j)`.
pub struct LatticeOperator {
    conv: LatticeConvolution,
    diag: Vec<f64>,
    w: f64,
}

impl LatticeOperator {
    pub fn new(domain: &DiscreteDomain, spec: &KernelSpec) -> Result<Self> {
        spec.validate(domain.dim())?;
        if spec.p != 2.0 {
            return Err(invalid(
                "p",
                format!("the lattice operator is linear and needs p = 2, got {}", spec.p),
            ));
        }
        let lattice = domain
            .lattice_info()
            .ok_or_else(|| Error::InvalidDomain("matrix-free solves need a lattice domain".into()))?;
        let dim = domain.dim();
        let kernel = |r: f64| spec.kernel(r, dim);
        let conv = LatticeConvolution::new(lattice, kernel);
        let w = lattice.cell_volume();
        let inner = domain.interior_sums(kernel);
        let outer = domain.exterior_sums(kernel);
        let diag = inner.iter().zip(&outer).map(|(a, b)| 2.0 * w * (a + b)).collect();
        Ok(LatticeOperator { conv, diag, w })
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let c = self.conv.apply(u);
        u.iter()
            .zip(&c)
            .zip(&self.diag)
            .map(|((ui, ci), d)| d * ui - 2.0 * self.w * self.w * ci)
            .collect()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Jacobi-preconditioned CG for `(A + diag(shift)) x = b` from `x`, until
/// `max |r| ≤ tol`.
fn pcg(op: &LatticeOperator, shift: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut a = op.apply(v);
        for i in 0..n {
            a[i] += shift[i] * v[i];
        }
        a
    };
    let precond: Vec<f64> = op.diagonal().iter().zip(shift).map(|(d, s)| 1.0 / (d + s)).collect();
    let ax = apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, m)| a * m).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while max_abs(&r) > tol {
        if iterations >= max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual: max_abs(&r),
            });
        }
        iterations += 1;
        let ad = apply(&dir);
        let alpha = rz / dot(&dir, &ad);
        for i in 0..n {
            x[i] += alpha * dir[i];
            r[i] -= alpha * ad[i];
        }
        if iterations % 50 == 0 {
            // refresh the recursive residual against drift
            let ax = apply(x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        z = r.iter().zip(&precond).map(|(a, m)| a * m).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    Ok(iterations)
}

fn check_inputs(domain: &DiscreteDomain, mu: &MeasureData, opts: &SolveOptions) -> Result<()> {
    if mu.n_nodes() != domain.n_interior() {
        return Err(Error::Mismatch("measure and domain sizes differ".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {}", opts.tol)));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    domain: &DiscreteDomain,
    spec: &KernelSpec,
    g: &Nonlinearity,
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
    objective: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let field = SolutionField::from_values(x)?;
    let diagnostics = if opts.diagnostics && field.len() <= DENSE_NODE_CAP {
        Some(diagnose(domain, spec, g, &field, &opts.truncation_levels, &opts.seminorms)?)
    } else {
        None
    };
    Ok(SolveReport {
        field,
        iterations,
        residual,
        objective,
        diagnostics,
        fingerprint: domain.fingerprint(),
    })
}

/// Solves `Lu = μ` at `p = 2` on a lattice domain. The stopping rule and
/// residual match [`crate::solver::minimize_j`].
pub fn solve_linear_lattice(domain: &DiscreteDomain, spec: &KernelSpec, mu: &MeasureData, opts: &SolveOptions) -> Result<SolveReport> {
    check_inputs(domain, mu, opts)?;
    let op = LatticeOperator::new(domain, spec)?;
    let b = mu.node_masses(domain);
    let n = b.len();
    let mut x = vec![0.0; n];
    let max_iter = opts.max_iter.max(20 * n.min(500));
    let iterations = pcg(&op, &vec![0.0; n], &b, &mut x, opts.tol, max_iter)?;
    let ax = op.apply(&x);
    let residual = max_abs(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vec<_>>());
    let objective = 0.5 * dot(&x, &ax) - dot(&x, &b);
    finish(domain, spec, &Nonlinearity::Zero, x, iterations, residual, objective, opts)
}

/// Solves `Lu + g(u) = μ` at `p = 2` on a lattice domain by Newton's method
/// on `J` with CG inner solves and Armijo backtracking. Returns the number
/// of Newton steps as `iterations`.
pub fn solve_semilinear_lattice(
    domain: &DiscreteDomain,
    spec: &KernelSpec,
    g: &Nonlinearity,
    mu: &MeasureData,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    check_inputs(domain, mu, opts)?;
    g.validate()?;
    if g.is_zero() {
        return solve_linear_lattice(domain, spec, mu, opts);
    }
    let op = LatticeOperator::new(domain, spec)?;
    let m = mu.node_masses(domain);
    let w = domain.weights();
    let n = m.len();
    let inner_cap = 20 * n.min(500);
    let energy = |u: &[f64], au: &[f64]| -> f64 { (0..n).map(|i| 0.5 * u[i] * au[i] + g.primitive(u[i]) * w[i] - m[i] * u[i]).sum() };
    let mut u = vec![0.0; n];
    let mut j = 0.0;
    let mut grad: Vec<f64> = m.iter().map(|mi| -mi).collect();
    let mut res = max_abs(&grad);
    let mut steps = 0;
    while res > opts.tol {
        if steps >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: steps,
                residual: res,
            });
        }
        steps += 1;
        let shift: Vec<f64> = (0..n)
            .map(|i| {
                let d = g.derivative(u[i]);
                if d.is_finite() {
                    d.max(0.0) * w[i]
                } else {
                    0.0
                }
            })
            .collect();
        let rhs: Vec<f64> = grad.iter().map(|r| -r).collect();
        let mut dir = vec![0.0; n];
        pcg(&op, &shift, &rhs, &mut dir, (1e-3 * res).max(0.1 * opts.tol), inner_cap)?;
        let slope = dot(&grad, &dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + t * dir[i]).collect();
            let at = op.apply(&trial);
            let jt = energy(&trial, &at);
            let gt: Vec<f64> = (0..n).map(|i| at[i] + g.eval(trial[i]) * w[i] - m[i]).collect();
            let rt = max_abs(&gt);
            // near the minimum J is flat to rounding; fall back on the residual
            let flat = (jt - j).abs() <= 1e-13 * j.abs().max(1.0);
            if jt <= j + 1e-4 * t * slope || (flat && rt < res) {
                u = trial;
                j = jt;
                grad = gt;
                res = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                iterations: steps,
                residual: res,
            });
        }
    }
    finish(domain, spec, g, u, steps, res, j, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;
    use crate::kernel::assemble_kernel;
    use crate::solver::minimize_j;

    #[test]
    fn matches_dense_solver() {
        let d = DiscreteDomain::lattice(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.125,
            None,
        )
        .unwrap();
        let spec = KernelSpec::power(0.5, 2.0);
        let mu = MeasureData::dirac(&d, &[0.1, -0.2], 1.0).plus(&MeasureData::lebesgue(&d, 0.5));
        let opts = SolveOptions::quiet(1e-11);
        let fast = solve_linear_lattice(&d, &spec, &mu, &opts).unwrap();
        let table = assemble_kernel(&d, &spec).unwrap();
        let dense = minimize_j(&d, &table, &Nonlinearity::Zero, &mu, &opts).unwrap();
        for (a, b) in fast.field.values().iter().zip(dense.field.values()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert!((fast.objective - dense.objective).abs() < 1e-9 * dense.objective.abs());
    }

    #[test]
    fn semilinear_matches_dense_solver() {
        let d = DiscreteDomain::lattice(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.125,
            None,
        )
        .unwrap();
        let spec = KernelSpec::power(0.5, 2.0);
        let mu = MeasureData::dirac(&d, &[0.0, 0.0], 2.0);
        let opts = SolveOptions::quiet(1e-10);
        for g in [Nonlinearity::power(1.5), Nonlinearity::power(3.0).truncated(4.0)] {
            let fast = solve_semilinear_lattice(&d, &spec, &g, &mu, &opts).unwrap();
            let table = assemble_kernel(&d, &spec).unwrap();
            let dense = minimize_j(&d, &table, &g, &mu, &opts).unwrap();
            for (a, b) in fast.field.values().iter().zip(dense.field.values()) {
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_nonlinear_exponent() {
        let d = DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 0.1, None).unwrap();
        assert!(LatticeOperator::new(&d, &KernelSpec::power(0.3, 1.5)).is_err());
    }
}
