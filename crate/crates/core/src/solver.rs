//! Minimization of `J(v) = energy(v) + ∫ G(v) - ∫ v dμ` and the procedures
//! built on it: SOLA approximation, comparison, and a priori bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DiscreteDomain;
use crate::error::{invalid, Error, Result};
use crate::field::SolutionField;
use crate::kernel::{energy, signed_pow, truncation_energy, KernelSpec, KernelTable};
use crate::measure::MeasureData;
use crate::nonlinearity::Nonlinearity;
use crate::norms::{gagliardo_seminorm, weak_norm_star, SeminormSpec};
use crate::quadrature::{integrate_to_infinity, TailIntegral};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Bound on `max_i |∂J/∂v_i|`, the weak identity tested against nodal
    /// indicators (mass units).
    pub tol: f64,
    pub max_iter: usize,
    pub truncation_levels: Vec<f64>,
    pub seminorms: Vec<SeminormSpec>,
    pub diagnostics: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 500,
            truncation_levels: vec![1.0, 2.0, 4.0, 8.0],
            seminorms: Vec::new(),
            diagnostics: true,
        }
    }
}

impl SolveOptions {
    pub fn quiet(tol: f64) -> Self {
        SolveOptions {
            tol,
            diagnostics: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `Σ |g(u_i)| w_i`.
    pub absorption_total: f64,
    /// `(k, truncation_energy(u, k))`.
    pub truncation_energies: Vec<(f64, f64)>,
    pub seminorms: Vec<(SeminormSpec, f64)>,
    /// Marcinkiewicz quasi-norm of `|u|^{p-1}` at exponent `N/(N-sp)`.
    pub weak_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub field: SolutionField,
    pub iterations: usize,
    pub residual: f64,
    pub objective: f64,
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip)]
    pub(crate) fingerprint: u64,
}

impl SolveReport {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

pub fn diagnose(
    domain: &DiscreteDomain,
    spec: &KernelSpec,
    g: &Nonlinearity,
    field: &SolutionField,
    levels: &[f64],
    seminorms: &[SeminormSpec],
) -> Result<Diagnostics> {
    let n = domain.dim() as f64;
    let absorption_total = field.values().iter().zip(domain.weights()).map(|(u, w)| g.eval(*u).abs() * w).sum();
    let truncation_energies = levels
        .iter()
        .map(|&k| Ok((k, truncation_energy(domain, field, k, spec)?)))
        .collect::<Result<Vec<_>>>()?;
    let seminorms = seminorms
        .iter()
        .map(|s| Ok((*s, gagliardo_seminorm(domain, field, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let powered = field.map(|u| u.abs().powf(spec.p - 1.0));
    let weak_norm = weak_norm_star(domain, &powered, n / (n - spec.sp()))?;
    Ok(Diagnostics {
        absorption_total,
        truncation_energies,
        seminorms,
        weak_norm,
    })
}

fn check_sizes(domain: &DiscreteDomain, table: &KernelTable, mu: &MeasureData) -> Result<()> {
    if table.n() != domain.n_interior() || mu.n_nodes() != domain.n_interior() {
        return Err(Error::Mismatch(format!(
            "domain has {} interior nodes, kernel {}, measure {}",
            domain.n_interior(),
            table.n(),
            mu.n_nodes()
        )));
    }
    Ok(())
}

/// `J(u)` with nodal masses `m`.
pub fn objective(table: &KernelTable, g: &Nonlinearity, masses: &[f64], u: &SolutionField) -> Result<f64> {
    let p = table.spec().p;
    let e = energy(table, u, p)?;
    let rest: f64 = u
        .values()
        .iter()
        .zip(table.weights())
        .zip(masses)
        .map(|((v, w), m)| g.primitive(*v) * w - v * m)
        .sum();
    Ok(e + rest)
}

fn gradient(table: &KernelTable, g: &Nonlinearity, masses: &[f64], u: &[f64], p: f64) -> Vec<f64> {
    let flux = table.flux(u, p);
    flux.iter()
        .zip(u)
        .zip(table.weights())
        .zip(masses)
        .map(|(((f, v), w), m)| 2.0 * f + g.eval(*v) * w - m)
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Hessian of `J` with `|d|^{p-2}` replaced by `max(|d|, δ)^{p-2}`.
fn hessian(table: &KernelTable, g: &Nonlinearity, u: &[f64], p: f64) -> DMatrix<f64> {
    let n = u.len();
    let scale = max_abs(u).max(f64::MIN_POSITIVE);
    let delta = 1e-8 * scale;
    let curv = |d: f64| (p - 1.0) * d.abs().max(delta).powf(p - 2.0);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = table.row(i);
            let mut out = vec![0.0; n];
            let mut diag = if p == 2.0 {
                table.exterior(i)
            } else {
                curv(u[i]) * table.exterior(i)
            };
            for j in 0..n {
                if j != i {
                    let c = if p == 2.0 { row[j] } else { curv(u[i] - u[j]) * row[j] };
                    out[j] = -2.0 * c;
                    diag += c;
                }
            }
            let gd = g.derivative(if u[i] == 0.0 { 0.0 } else { u[i] });
            let gd = if gd.is_finite() { gd } else { g.derivative(delta.max(1e-300)) };
            out[i] = 2.0 * diag + gd * table.weights()[i];
            out
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Newton direction `-(H + λ diag H)^{-1} grad`, raising `λ` until the
/// Cholesky factorization succeeds.
fn newton_direction(h: DMatrix<f64>, grad: &[f64], damping: &mut f64) -> Result<Vec<f64>> {
    let rhs = DVector::from_iterator(grad.len(), grad.iter().map(|g| -g));
    for _ in 0..40 {
        let mut m = h.clone();
        if *damping > 0.0 {
            for i in 0..m.nrows() {
                let d = m[(i, i)].abs().max(f64::MIN_POSITIVE);
                m[(i, i)] += *damping * d;
            }
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.solve(&rhs).iter().copied().collect());
        }
        *damping = (*damping * 10.0).max(1e-12);
    }
    Err(Error::LinearAlgebra("Hessian could not be regularized to positive definite".into()))
}

struct NewtonOutcome {
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn newton(table: &KernelTable, g: &Nonlinearity, masses: &[f64], mut u: Vec<f64>, tol: f64, max_iter: usize) -> Result<NewtonOutcome> {
    let p = table.spec().p;
    let obj = |v: &[f64]| -> f64 { objective(table, g, masses, &SolutionField::from_fn(v.len(), |i| v[i])).unwrap_or(f64::NAN) };
    let mut j = obj(&u);
    let mut grad = gradient(table, g, masses, &u, p);
    let mut res = max_abs(&grad);
    let mut damping = 0.0f64;
    let mut iterations = 0;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::NotConverged { iterations, residual: res });
        }
        iterations += 1;
        let step = newton_direction(hessian(table, g, &u, p), &grad, &mut damping)?;
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let jt = obj(&trial);
            if jt.is_finite() {
                // near the optimum J is flat to rounding and cannot rank steps,
                // which lets p < 2 fall into a 2-cycle across a near tie; there
                // the residual must drop instead
                if (jt - j).abs() <= 1e-12 * j.abs().max(1e-300) {
                    let gt = gradient(table, g, masses, &trial, p);
                    if max_abs(&gt) < (1.0 - 1e-4 * t) * res {
                        accepted = Some((trial, jt, Some(gt)));
                        break;
                    }
                } else if jt <= j + 1e-4 * t * slope {
                    accepted = Some((trial, jt, None));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, jt, gt)) => {
                u = trial;
                j = jt;
                grad = gt.unwrap_or_else(|| gradient(table, g, masses, &u, p));
                res = max_abs(&grad);
                if t == 1.0 {
                    damping *= 0.1;
                    if damping < 1e-14 {
                        damping = 0.0;
                    }
                }
            }
            None => {
                if damping > 1e6 {
                    return Err(Error::NotConverged { iterations, residual: res });
                }
                damping = (damping * 10.0).max(1e-6);
            }
        }
    }
    Ok(NewtonOutcome {
        u,
        iterations,
        residual: res,
    })
}

fn initial_guess(table: &KernelTable, g: &Nonlinearity, masses: &[f64]) -> Vec<f64> {
    let n = masses.len();
    let zero = vec![0.0; n];
    let Some(factor) = table.linear_factor() else {
        return zero;
    };
    let p = table.spec().p;
    let lin = factor.solve(&DVector::from_column_slice(masses));
    let guess: Vec<f64> = lin.iter().map(|v| signed_pow(*v, 1.0 / (p - 1.0))).collect();
    let j0 = objective(table, g, masses, &SolutionField::from_fn(n, |i| zero[i])).unwrap_or(0.0);
    match objective(table, g, masses, &SolutionField::from_fn(n, |i| guess[i])) {
        Ok(j) if j.is_finite() && j < j0 => guess,
        _ => zero,
    }
}

/// Minimizes `J` over fields vanishing on the collar.
///
/// `g ≡ 0` at `p = 2` is a linear solve with the cached factor; every other
/// case runs damped Newton with Armijo backtracking on `J`.
pub fn minimize_j(
    domain: &DiscreteDomain,
    table: &KernelTable,
    g: &Nonlinearity,
    mu: &MeasureData,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    minimize_j_from(domain, table, g, mu, opts, None)
}

/// [`minimize_j`] started from `initial` when given.
pub fn minimize_j_from(
    domain: &DiscreteDomain,
    table: &KernelTable,
    g: &Nonlinearity,
    mu: &MeasureData,
    opts: &SolveOptions,
    initial: Option<&SolutionField>,
) -> Result<SolveReport> {
    check_sizes(domain, table, mu)?;
    g.validate()?;
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {}", opts.tol)));
    }
    let masses = mu.node_masses(domain);
    let n = masses.len();
    let p = table.spec().p;
    let (u, iterations, residual) = if masses.iter().all(|m| *m == 0.0) {
        (vec![0.0; n], 0, 0.0)
    } else if p == 2.0 && g.is_zero() && initial.is_none() {
        let factor = table
            .linear_factor()
            .ok_or_else(|| Error::LinearAlgebra("stiffness matrix is not positive definite".into()))?;
        let b = DVector::from_column_slice(&masses);
        let mut x = factor.solve(&b);
        let mut grad = gradient(table, g, &masses, x.as_slice(), p);
        let mut sweeps = 1;
        // iterative refinement
        while max_abs(&grad) > opts.tol && sweeps < 4 {
            let corr = factor.solve(&DVector::from_iterator(n, grad.iter().map(|r| -r)));
            x += corr;
            grad = gradient(table, g, &masses, x.as_slice(), p);
            sweeps += 1;
        }
        let res = max_abs(&grad);
        if res > opts.tol {
            return Err(Error::NotConverged {
                iterations: sweeps,
                residual: res,
            });
        }
        (x.iter().copied().collect(), sweeps, res)
    } else {
        let start = match initial {
            Some(f) => {
                f.check_len(domain)?;
                f.values().to_vec()
            }
            None => initial_guess(table, g, &masses),
        };
        let out = newton(table, g, &masses, start, opts.tol, opts.max_iter)?;
        (out.u, out.iterations, out.residual)
    };
    let field = SolutionField::from_values(u)?;
    let objective = objective(table, g, &masses, &field)?;
    let diagnostics = if opts.diagnostics {
        Some(diagnose(domain, table.spec(), g, &field, &opts.truncation_levels, &opts.seminorms)?)
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

/// Lattice domains at `p = 2` with more than this many nodes are solved
/// matrix-free.
pub const MATRIX_FREE_THRESHOLD: usize = 1500;

/// Assembles what is needed and minimizes `J`: matrix-free on large
/// lattices at `p = 2`, otherwise with the dense kernel table.
pub fn solve(domain: &DiscreteDomain, spec: &KernelSpec, g: &Nonlinearity, mu: &MeasureData, opts: &SolveOptions) -> Result<SolveReport> {
    if spec.p == 2.0 && domain.lattice_info().is_some() && domain.n_interior() > MATRIX_FREE_THRESHOLD {
        return crate::gridop::solve_semilinear_lattice(domain, spec, g, mu, opts);
    }
    let table = crate::kernel::assemble_kernel(domain, spec)?;
    minimize_j(domain, &table, g, mu, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolaReport {
    pub report: SolveReport,
    /// `‖u_{n+1} - u_n‖` in the `W^{h,q}` quasi-norm plus `L^q`, for n = 1..n_max-1.
    pub increments: Vec<f64>,
    /// Levels whose bump radius fell below the grid spacing.
    pub unmollified_levels: Vec<usize>,
    /// The last three increments are nonincreasing.
    pub decreasing: bool,
}

/// Solves against `mollify(μ, n)` for `n = 1..=n_max`.
pub fn solve_sola(
    domain: &DiscreteDomain,
    table: &KernelTable,
    g: &Nonlinearity,
    mu: &MeasureData,
    n_max: usize,
    seminorm: &SeminormSpec,
    opts: &SolveOptions,
) -> Result<SolaReport> {
    if n_max < 2 {
        return Err(invalid("n_max", format!("need at least 2 levels, got {n_max}")));
    }
    let quiet = SolveOptions {
        diagnostics: false,
        ..opts.clone()
    };
    let mut increments = Vec::new();
    let mut unmollified_levels = Vec::new();
    let mut prev: Option<SolveReport> = None;
    for n in 1..=n_max {
        let (mu_n, flagged) = mu.mollify(domain, n)?;
        if flagged {
            unmollified_levels.push(n);
        }
        let o = if n == n_max { opts } else { &quiet };
        let rep = minimize_j_from(domain, table, g, &mu_n, o, prev.as_ref().map(|r| &r.field))?;
        if let Some(pr) = &prev {
            let diff = rep.field.sub(&pr.field);
            let lq = diff.lebesgue_integral(domain, seminorm.q).powf(1.0 / seminorm.q);
            increments.push(gagliardo_seminorm(domain, &diff, seminorm)? + lq);
        }
        prev = Some(rep);
    }
    let k = increments.len();
    let decreasing = k < 3 || {
        let tail = &increments[k - 3..];
        tail[1] <= tail[0] * (1.0 + 1e-12) && tail[2] <= tail[1] * (1.0 + 1e-12)
    };
    Ok(SolaReport {
        report: prev.expect("n_max ≥ 2"),
        increments,
        unmollified_levels,
        decreasing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub holds: bool,
    /// `max_i (v_i - u_i)^+`.
    pub max_violation: f64,
}

/// Checks `u ≥ v - 1e-8` at every node.
pub fn check_comparison(u: &SolveReport, v: &SolveReport) -> Result<Comparison> {
    if u.fingerprint != v.fingerprint || u.field.len() != v.field.len() {
        return Err(Error::Mismatch("solutions live on different domains".into()));
    }
    let max_violation = u
        .field
        .values()
        .iter()
        .zip(v.field.values())
        .map(|(a, b)| (b - a).max(0.0))
        .fold(0.0, f64::max);
    Ok(Comparison {
        holds: max_violation <= 1e-8,
        max_violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionBound {
    /// `Σ |g(u_i)| w_i`.
    pub absorbed: f64,
    /// `|μ|(Ω)`.
    pub total_variation: f64,
    pub holds: bool,
    /// For nonnegative data, whether `u ≥ 0` as well.
    pub nonnegative: Option<bool>,
}

pub fn absorption_l1_bound(
    domain: &DiscreteDomain,
    report: &SolveReport,
    g: &Nonlinearity,
    mu: &MeasureData,
    tol: f64,
) -> Result<AbsorptionBound> {
    report.field.check_len(domain)?;
    let absorbed: f64 = report
        .field
        .values()
        .iter()
        .zip(domain.weights())
        .map(|(u, w)| g.eval(*u).abs() * w)
        .sum();
    let total_variation = mu.total_variation(domain);
    let nonnegative = mu.is_nonnegative(domain).then(|| report.field.values().iter().all(|u| *u >= -tol));
    Ok(AbsorptionBound {
        absorbed,
        total_variation,
        holds: absorbed <= total_variation + tol && nonnegative.unwrap_or(true),
        nonnegative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSumBound {
    /// `Σ_{|v_i| ≤ s0} g(|v_i|) w_i`, when a field was supplied.
    pub near_field: f64,
    /// `∫_{s0}^∞ s^{-q̃-1} g(s) ds`.
    pub tail_integral: f64,
    /// `near_field + q̃ C0 tail_integral`, a bound for `‖g(|v|)‖_{L¹}`.
    pub bound: f64,
    /// `∫_{s0}^∞ s^{-q̃-1} (g(s) - g(-s)) ds`.
    pub symmetric_tail: f64,
}

/// Bound for `‖g(|v|)‖_{L¹}` when `|{|v| > s}| ≤ C0 s^{-q̃}` for `s ≥ 1`.
pub fn tail_sum_bound(
    g: &Nonlinearity,
    q_tilde: f64,
    c0: f64,
    s0: f64,
    near: Option<(&DiscreteDomain, &SolutionField)>,
) -> Result<TailSumBound> {
    if !(q_tilde > 0.0) {
        return Err(invalid("q_tilde", format!("must be positive, got {q_tilde}")));
    }
    if !(s0 >= 1.0) {
        return Err(invalid("s0", format!("need s0 ≥ 1, got {s0}")));
    }
    if !(c0 >= 0.0) {
        return Err(invalid("c0", format!("must be nonnegative, got {c0}")));
    }
    g.validate()?;
    let integral = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        match integrate_to_infinity(|s| f(s) * s.powf(-q_tilde - 1.0), s0, 1e-10) {
            TailIntegral::Converged { value, .. } => Ok(value),
            TailIntegral::Divergent { growth_ratio, .. } => Err(Error::Divergent(format!(
                "∫ s^(-q̃-1) g(s) ds diverges (chunk ratio {growth_ratio:.4}); g is supercritical for q̃ = {q_tilde}"
            ))),
        }
    };
    let tail_integral = integral(&|s| g.eval(s))?;
    let symmetric_tail = integral(&|s| g.eval(s) - g.eval(-s))?;
    let near_field = match near {
        Some((domain, v)) => {
            v.check_len(domain)?;
            v.values()
                .iter()
                .zip(domain.weights())
                .filter(|(x, _)| x.abs() <= s0)
                .map(|(x, w)| g.eval(x.abs()) * w)
                .sum()
        }
        None => 0.0,
    };
    Ok(TailSumBound {
        near_field,
        tail_integral,
        bound: near_field + q_tilde * c0 * tail_integral,
        symmetric_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;
    use crate::kernel::{apply_operator, assemble_kernel};

    fn interval(h: f64) -> DiscreteDomain {
        DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, h, None).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let d = interval(0.1);
        let t = assemble_kernel(&d, &KernelSpec::power(0.5, 1.5)).unwrap();
        let g = Nonlinearity::power(2.0);
        let r = minimize_j(&d, &t, &g, &MeasureData::zero(d.n_interior()), &SolveOptions::default()).unwrap();
        assert!(r.field.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn three_node_linear_system() {
        let d = DiscreteDomain::from_points(
            1,
            vec![[0.0, 0.0], [0.5, 0.0], [1.2, 0.0]],
            vec![0.5, 0.6, 0.7],
            vec![[-1.0, 0.0], [2.5, 0.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let spec = KernelSpec::power(0.3, 2.0);
        let t = assemble_kernel(&d, &spec).unwrap();
        let mu = MeasureData::from_density(&d, vec![1.0, -0.5, 2.0]).unwrap();
        let r = minimize_j(&d, &t, &Nonlinearity::Zero, &mu, &SolveOptions::default()).unwrap();
        // oracle: 2 (Σ_j k_ij (u_i - u_j) + e_i u_i) = w_i μ_i, solved by Cramer's rule
        let k = |i: usize, j: usize| spec.kernel(crate::domain::distance(d.point(i), d.point(j)), 1) * d.weight(i) * d.weight(j);
        let ext = |i: usize| {
            let mut s = 0.0;
            d.for_each_exterior(|q, w| s += spec.kernel(crate::domain::distance(d.point(i), q), 1) * w * d.weight(i));
            s
        };
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    a[i][j] = -2.0 * k(i, j);
                    a[i][i] += 2.0 * k(i, j);
                }
            }
            a[i][i] += 2.0 * ext(i);
        }
        let b: Vec<f64> = (0..3).map(|i| d.weight(i) * mu.density()[i]).collect();
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let det = det3(a);
        for c in 0..3 {
            let mut m = a;
            for r in 0..3 {
                m[r][c] = b[r];
            }
            let expected = det3(m) / det;
            assert!((r.field.values()[c] - expected).abs() < 1e-10 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn single_node_with_linear_absorption() {
        let d = DiscreteDomain::from_points(1, vec![[0.0, 0.0]], vec![0.5], vec![[1.0, 0.0]], vec![0.25]).unwrap();
        let spec = KernelSpec::power(0.4, 2.0);
        let t = assemble_kernel(&d, &spec).unwrap();
        let mu = MeasureData::from_density(&d, vec![3.0]).unwrap();
        let r = minimize_j(&d, &t, &Nonlinearity::power(1.0), &mu, &SolveOptions::default()).unwrap();
        // 2 e u + w u = w μ with e = K(1) w_int w_ext
        let e = 0.5 * 0.25;
        let expected = 0.5 * 3.0 / (2.0 * e + 0.5);
        assert!((r.field.values()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_solutions_are_stationary() {
        let d = interval(1.0 / 40.0);
        let mu = MeasureData::dirac(&d, &[0.5, 0.0], 1.0);
        for p in [1.5, 2.0, 3.0] {
            let t = assemble_kernel(&d, &KernelSpec::power(0.3, p)).unwrap();
            let g = Nonlinearity::power(1.7);
            let r = minimize_j(&d, &t, &g, &mu, &SolveOptions::default()).unwrap();
            assert!(r.residual <= 1e-8);
            let lu = apply_operator(&t, &r.field, p).unwrap();
            let masses = mu.node_masses(&d);
            for i in 0..d.n_interior() {
                let eq = 2.0 * lu.values()[i] * d.weight(i) + g.eval(r.field.values()[i]) * d.weight(i) - masses[i];
                assert!(eq.abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn comparison_detects_order_and_mismatch() {
        let d = interval(0.05);
        let t = assemble_kernel(&d, &KernelSpec::power(0.5, 1.5)).unwrap();
        let one = MeasureData::dirac(&d, &[0.3, 0.0], 1.0);
        let two = one.scaled(2.0);
        let o = SolveOptions::quiet(1e-10);
        let u = minimize_j(&d, &t, &Nonlinearity::Zero, &two, &o).unwrap();
        let v = minimize_j(&d, &t, &Nonlinearity::Zero, &one, &o).unwrap();
        assert!(check_comparison(&u, &v).unwrap().holds);
        assert!(!check_comparison(&v, &u).unwrap().holds);
        assert_eq!(check_comparison(&u, &u).unwrap().max_violation, 0.0);
        let d2 = interval(0.1);
        let t2 = assemble_kernel(&d2, &KernelSpec::power(0.5, 1.5)).unwrap();
        let w = minimize_j(&d2, &t2, &Nonlinearity::Zero, &MeasureData::dirac(&d2, &[0.3, 0.0], 1.0), &o).unwrap();
        assert!(check_comparison(&u, &w).is_err());
    }

    #[test]
    fn tail_sum_power_closed_form() {
        let g = Nonlinearity::power(1.5);
        let b = tail_sum_bound(&g, 2.0, 3.0, 2.0, None).unwrap();
        let expected = 2f64.powf(-0.5) / 0.5;
        assert!((b.tail_integral - expected).abs() < 1e-8 * expected);
        assert!((b.symmetric_tail - 2.0 * expected).abs() < 1e-8 * expected);
        assert!((b.bound - 2.0 * 3.0 * expected).abs() < 1e-8 * expected);
        assert_eq!(tail_sum_bound(&Nonlinearity::Zero, 2.0, 1.0, 1.0, None).unwrap().bound, 0.0);
        assert!(matches!(
            tail_sum_bound(&Nonlinearity::power(2.5), 2.0, 1.0, 1.0, None),
            Err(Error::Divergent(_))
        ));
    }
}
