//! Drivers for `Lu = g(u) + ρτ`: the invariant ball of the map
//! `v ↦ |w|^{p-1} sign w` with `Lw = g(|v|^{1/(p-1)} sign v) + ρτ`, and the
//! monotone scheme `L u_n = u_{n-1}^κ + ρτ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DiscreteDomain, Point};
use crate::error::{invalid, Error, Result};
use crate::field::SolutionField;
use crate::fit::upper_constant;
use crate::kernel::{signed_pow, KernelTable};
use crate::measure::MeasureData;
use crate::nonlinearity::Nonlinearity;
use crate::norms::weak_norm_star;
use crate::solver::{minimize_j, SolveOptions, SolveReport};
use crate::wolff::{wolff_field, wolff_with_radius, WolffQuery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallConstants {
    pub t0: f64,
    pub rho0: f64,
}

/// Log-spaced radii scanned by [`solve_ball_constants`].
pub const BALL_SCAN: (f64, f64, usize) = (1e-3, 1e3, 601);

/// Radius `t₀` and data size `ρ₀` with `C(t₀^a + t₀^κ + ρ) ≤ t₀` for all
/// `ρ ≤ ρ₀`. Among the scanned radii the one giving the largest `ρ₀` is
/// kept, then refined by golden-section search between its neighbours.
pub fn solve_ball_constants(c: f64, a: f64, kappa: f64) -> Result<BallConstants> {
    if !(c > 0.0) {
        return Err(invalid("c", format!("must be positive, got {c}")));
    }
    if !(a > 1.0 && kappa > 1.0) {
        return Err(invalid("a", format!("need a > 1 and κ > 1, got {a}, {kappa}")));
    }
    let slack = |t: f64| (t - c * t.powf(a) - c * t.powf(kappa)) / c;
    let (lo, hi, n) = BALL_SCAN;
    let grid: Vec<f64> = (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect();
    let (best, value) = grid
        .iter()
        .enumerate()
        .map(|(k, t)| (k, slack(*t)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if !(value > 0.0) {
        return Err(Error::Infeasible(format!(
            "no t in [{lo}, {hi}] satisfies C(t^a + t^κ) < t for C = {c}"
        )));
    }
    // ρ₀(t) is concave in t, so golden section on the bracketing cell
    let (mut x0, mut x1) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = x1 - phi * (x1 - x0);
        let m2 = x0 + phi * (x1 - x0);
        if slack(m1) < slack(m2) {
            x0 = m1;
        } else {
            x1 = m2;
        }
    }
    let mut t0 = 0.5 * (x0 + x1);
    if slack(t0) < value {
        t0 = grid[best];
    }
    let mut rho0 = slack(t0);
    // round down until the certificate holds in floating point
    while c * (t0.powf(a) + t0.powf(kappa) + rho0) > t0 {
        rho0 -= rho0.abs() * f64::EPSILON + f64::MIN_POSITIVE;
    }
    Ok(BallConstants { t0, rho0 })
}

/// Probe measures for constant measurements: Diracs on a 3×3 (or 3-point)
/// pattern around the centroid, a ball and Lebesgue measure, all of unit mass.
pub fn probe_family(domain: &DiscreteDomain) -> Result<Vec<MeasureData>> {
    let n = domain.n_interior() as f64;
    let centroid: Point = [
        domain.points().iter().map(|p| p[0]).sum::<f64>() / n,
        domain.points().iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let step = domain.diam() / 6.0;
    let offsets: Vec<(f64, f64)> = if domain.dim() == 1 {
        vec![(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)]
    } else {
        (-1..=1).flat_map(|i| (-1..=1).map(move |j| (i as f64, j as f64))).collect()
    };
    let mut out: Vec<MeasureData> = offsets
        .iter()
        .map(|(i, j)| MeasureData::dirac(domain, &[centroid[0] + i * step, centroid[1] + j * step], 1.0))
        .collect();
    out.push(MeasureData::uniform_ball(domain, &centroid, domain.diam() / 4.0, 1.0)?);
    let vol = domain.volume();
    out.push(MeasureData::lebesgue(domain, 1.0 / vol));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstant {
    /// `max_ν ‖|w_ν|^{p-1}‖*_a / |ν|(Ω)` over the probe family, `Lw_ν = ν`.
    pub linear: f64,
    /// `coef·(|Ω| + κ'/(a - κ'))` with `κ' = κ/(p-1)`: bounds `∫ g(|v|^{1/(p-1)})`
    /// by this factor times `t^κ'` when `‖v‖*_a ≤ t`.
    pub absorption_factor: f64,
    /// `linear · max(1, absorption_factor)`.
    pub c: f64,
}

/// Measures the constant of the ball inequality for `g = coef·|t|^{κ-1}t`.
pub fn measure_ball_constant(domain: &DiscreteDomain, table: &KernelTable, g: &Nonlinearity) -> Result<MeasuredConstant> {
    let (kappa, coef) = match g {
        Nonlinearity::Power { kappa, coefficient } => (*kappa, *coefficient),
        _ => return Err(invalid("g", "the ball constant is derived for power nonlinearities")),
    };
    let spec = table.spec();
    let a = weak_exponent(domain.dim(), spec.sp());
    let kp = kappa / (spec.p - 1.0);
    if !(kp < a) {
        return Err(invalid("kappa", format!("need κ/(p-1) < N/(N-sp) = {a}, got {kp}")));
    }
    let opts = SolveOptions::quiet(1e-10);
    let ratios: Vec<f64> = probe_family(domain)?
        .par_iter()
        .map(|nu| {
            let w = minimize_j(domain, table, &Nonlinearity::Zero, nu, &opts)?;
            let powered = w.field.map(|x| x.abs().powf(spec.p - 1.0));
            Ok(weak_norm_star(domain, &powered, a)? / nu.total_variation(domain))
        })
        .collect::<Result<_>>()?;
    let linear = ratios.into_iter().fold(0.0, f64::max);
    let absorption_factor = coef.abs() * (domain.volume() + kp / (a - kp));
    Ok(MeasuredConstant {
        linear,
        absorption_factor,
        c: linear * absorption_factor.max(1.0),
    })
}

/// `N/(N-sp)`.
pub fn weak_exponent(dim: usize, sp: f64) -> f64 {
    dim as f64 / (dim as f64 - sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub rho: f64,
    pub t0: f64,
    pub c: f64,
    /// Weak-norm exponent `N/(N-sp)`.
    pub a: f64,
    pub kappa: f64,
    pub max_iter: usize,
    /// Stop once `‖v_{k+1} - v_k‖_{L¹}` falls below this.
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitStep {
    pub step: usize,
    /// `‖v_step‖*` at exponent `a`.
    pub weak_norm: f64,
    /// `‖v_step - v_{step-1}‖_{L¹}`.
    pub l1_increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    /// `u = |v|^{1/(p-1)} sign v` at the last iterate.
    pub report: SolveReport,
    pub orbit: Vec<OrbitStep>,
    pub converged: bool,
    pub escaped: bool,
    /// Every step whose input norm was ≤ t₀ produced an output norm ≤ t₀.
    pub ball_invariant: bool,
    /// `‖v - 𝕊(v)‖_{L¹}` at the last iterate.
    pub residual: f64,
}

/// Iterates `v ↦ 𝕊(v)` from `v = 0`, logging the weak norm per step.
pub fn fixed_point_iterate(
    domain: &DiscreteDomain,
    table: &KernelTable,
    g: &Nonlinearity,
    tau: &MeasureData,
    config: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    g.validate()?;
    if tau.total_variation(domain) > 1.0 + 1e-12 {
        return Err(Error::InvalidMeasure("source data needs |τ|(Ω) ≤ 1".into()));
    }
    if !(config.rho >= 0.0 && config.t0 > 0.0 && config.tol > 0.0) {
        return Err(invalid("config", format!("need ρ ≥ 0, t₀ > 0, tol > 0, got {config:?}")));
    }
    let p = table.spec().p;
    let opts = SolveOptions::quiet(1e-11);
    let n = domain.n_interior();
    let data = tau.scaled(config.rho);
    let mut v = SolutionField::zeros(n);
    let mut orbit = Vec::new();
    let mut converged = false;
    let mut escaped = false;
    let mut ball_invariant = true;
    let mut in_norm = 0.0;
    let mut residual = f64::INFINITY;
    let mut last: Option<SolveReport> = None;
    for step in 1..=config.max_iter {
        let source: Vec<f64> = v.values().iter().map(|x| g.eval(signed_pow(*x, 1.0 / (p - 1.0)))).collect();
        let rhs = data.with_added_density(&source);
        let w = minimize_j(domain, table, &Nonlinearity::Zero, &rhs, &opts)?;
        let next = w.field.map(|x| signed_pow(x, p - 1.0));
        let norm = weak_norm_star(domain, &next, config.a)?;
        residual = next.sub(&v).l1_norm(domain);
        orbit.push(OrbitStep {
            step,
            weak_norm: norm,
            l1_increment: residual,
        });
        if in_norm <= config.t0 && norm > config.t0 {
            ball_invariant = false;
        }
        last = Some(w);
        v = next;
        in_norm = norm;
        if norm > config.t0 {
            escaped = true;
            break;
        }
        if residual < config.tol {
            converged = true;
            break;
        }
    }
    let mut report = last.ok_or_else(|| invalid("max_iter", "need at least one iteration"))?;
    report.field = v.map(|x| signed_pow(x, 1.0 / (p - 1.0)));
    Ok(FixedPointOutcome {
        report,
        orbit,
        converged,
        escaped,
        ball_invariant,
        residual,
    })
}

/// `A = 2^{1/(p-1)+1}`.
pub fn barrier_factor(p: f64) -> f64 {
    2f64.powf(1.0 / (p - 1.0) + 1.0)
}

/// Largest `ρ` with `(AC)^{κ/(p-1)} M ρ^{(κ-p+1)/(p-1)²} < 1`.
pub fn admissible_rho(a_factor: f64, c: f64, m: f64, kappa: f64, p: f64) -> f64 {
    let e = (kappa - p + 1.0) / (p - 1.0).powi(2);
    (1.0 / ((a_factor * c).powf(kappa / (p - 1.0)) * m)).powf(1.0 / e)
}

/// Smallest `C` with `u_ν ≤ C W[ν]` over the probe family and `extra`.
pub fn measure_wolff_constant(domain: &DiscreteDomain, table: &KernelTable, q: &WolffQuery, extra: &[MeasureData]) -> Result<f64> {
    let opts = SolveOptions::quiet(1e-10);
    let mut probes = probe_family(domain)?;
    probes.extend(extra.iter().cloned());
    let constants: Vec<f64> = probes
        .par_iter()
        .map(|nu| {
            let u = minimize_j(domain, table, &Nonlinearity::Zero, nu, &opts)?;
            let w = wolff_field(domain, &nu.positive_part(domain), q)?;
            upper_constant(u.field.values(), w.values())
                .ok_or_else(|| Error::InvalidMeasure("solution positive where the Wolff potential vanishes".into()))
        })
        .collect::<Result<_>>()?;
    Ok(constants.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneStep {
    pub step: usize,
    pub l1_increment: f64,
    /// `‖u_n - u_{n-1}‖_{L¹} / ‖u_n‖_{L¹}`.
    pub relative_increment: f64,
    /// `min_i (u_n - u_{n-1})_i`.
    pub min_increment: f64,
    /// `max_i u_n / (A C W[ρτ])`.
    pub barrier_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum MonotoneAbort {
    Monotonicity { step: usize, violation: f64 },
    Barrier { step: usize, ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneConstants {
    pub a_factor: f64,
    pub c: f64,
    pub m: f64,
    pub rho: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneOutcome {
    pub report: SolveReport,
    pub steps: Vec<MonotoneStep>,
    pub constants: MonotoneConstants,
    pub abort: Option<MonotoneAbort>,
    /// `‖u_n - u_{n-1}‖_{L¹} < 1e-6 |Ω|` was reached.
    pub stabilized: bool,
    /// First step whose relative increment is below 1%.
    pub within_one_percent: Option<usize>,
    /// Smallest `M_low` with `W^{d(x)/8}[u^κ dx + ρτ] ≤ M_low u` on nodes where `u > 0`.
    pub lower_constant: Option<f64>,
    /// Smallest `M_up` with `u ≤ M_up W[ρτ]`.
    pub upper_constant: Option<f64>,
}

/// Runs `L u_0 = ρτ`, `L u_n = u_{n-1}^κ + ρτ` with the barrier
/// `A C W[ρτ]`. `c` is the Wolff upper constant of the linear problem and
/// `m` the Wolff-composition bound of `τ`.
#[allow(clippy::too_many_arguments)]
pub fn monotone_source_iterate(
    domain: &DiscreteDomain,
    table: &KernelTable,
    kappa: f64,
    tau: &MeasureData,
    rho: f64,
    q: &WolffQuery,
    c: f64,
    m: f64,
    max_iter: usize,
) -> Result<MonotoneOutcome> {
    if !tau.is_nonnegative(domain) {
        return Err(Error::InvalidMeasure("monotone iteration needs τ ≥ 0".into()));
    }
    let p = table.spec().p;
    if !(kappa > p - 1.0) {
        return Err(invalid("kappa", format!("need κ > p - 1, got {kappa}")));
    }
    if !(rho >= 0.0 && c > 0.0 && m >= 0.0) {
        return Err(invalid("rho", format!("need ρ ≥ 0, C > 0, M ≥ 0, got {rho}, {c}, {m}")));
    }
    let a_factor = barrier_factor(p);
    let constants = MonotoneConstants {
        a_factor,
        c,
        m,
        rho,
        rho_max: admissible_rho(a_factor, c, m, kappa, p),
    };
    let data = tau.scaled(rho);
    let wolff_data = wolff_field(domain, &data, q)?;
    let barrier: Vec<f64> = wolff_data.values().iter().map(|w| a_factor * c * w).collect();
    let opts = SolveOptions::quiet(1e-11);
    let stop = 1e-6 * domain.volume();
    let mut report = minimize_j(domain, table, &Nonlinearity::Zero, &data, &opts)?;
    let mut steps = Vec::new();
    let mut abort = None;
    let mut stabilized = false;
    let mut within_one_percent = None;
    let ratio_of = |u: &SolutionField| -> f64 {
        u.values()
            .iter()
            .zip(&barrier)
            .map(|(u, b)| {
                if *u <= 0.0 {
                    0.0
                } else if *b > 0.0 {
                    u / b
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    };
    let first = ratio_of(&report.field);
    if first > 1.0 {
        abort = Some(MonotoneAbort::Barrier { step: 0, ratio: first });
    }
    let mut step = 0;
    while abort.is_none() && !stabilized && step < max_iter {
        step += 1;
        let source: Vec<f64> = report.field.values().iter().map(|u| u.max(0.0).powf(kappa)).collect();
        let next = minimize_j(domain, table, &Nonlinearity::Zero, &data.with_added_density(&source), &opts)?;
        let diff = next.field.sub(&report.field);
        let l1 = diff.l1_norm(domain);
        let min_increment = diff.values().iter().copied().fold(f64::INFINITY, f64::min);
        let barrier_ratio = ratio_of(&next.field);
        let total = next.field.l1_norm(domain);
        let relative = if total > 0.0 { l1 / total } else { 0.0 };
        steps.push(MonotoneStep {
            step,
            l1_increment: l1,
            relative_increment: relative,
            min_increment,
            barrier_ratio,
        });
        report = next;
        if min_increment < -1e-12 {
            abort = Some(MonotoneAbort::Monotonicity {
                step,
                violation: min_increment,
            });
        } else if barrier_ratio > 1.0 {
            abort = Some(MonotoneAbort::Barrier {
                step,
                ratio: barrier_ratio,
            });
        }
        if within_one_percent.is_none() && relative < 0.01 {
            within_one_percent = Some(step);
        }
        stabilized = l1 < stop;
    }
    let u = &report.field;
    let (lower_constant, upper_constant_value) = if abort.is_none() {
        let source: Vec<f64> = u.values().iter().map(|v| v.max(0.0).powf(kappa)).collect();
        let mu = data.with_added_density(&source);
        let nodes: Vec<usize> = (0..domain.n_interior()).collect();
        let local = wolff_with_radius(domain, &mu, q, &nodes, |i| domain.boundary_distance(i) / 8.0)?;
        (upper_constant(&local, u.values()), upper_constant(u.values(), wolff_data.values()))
    } else {
        (None, None)
    };
    Ok(MonotoneOutcome {
        report,
        steps,
        constants,
        abort,
        stabilized,
        within_one_percent,
        lower_constant,
        upper_constant: upper_constant_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;
    use crate::kernel::{assemble_kernel, KernelSpec};

    #[test]
    fn ball_constants_certificate() {
        let bc = solve_ball_constants(0.5, 2.0, 1.5).unwrap();
        assert!(0.5 * (bc.t0.powi(2) + bc.t0.powf(1.5) + bc.rho0) <= bc.t0);
        // t = 0.1 already admits ρ up to 0.1584; the optimum does at least as well
        assert!(bc.rho0 >= (0.1 - 0.5 * 0.01 - 0.5 * 0.1f64.powf(1.5)) / 0.5);
        assert!(matches!(solve_ball_constants(1e3, 2.0, 3.0), Err(Error::Infeasible(_))));
        assert!(solve_ball_constants(-1.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn admissible_rho_inverts_display() {
        let (a, c, m, k, p) = (4.0, 0.3, 2.0, 1.5, 2.0);
        let r = admissible_rho(a, c, m, k, p);
        let lhs = (a * c).powf(k / (p - 1.0)) * m * r.powf((k - p + 1.0) / (p - 1.0).powi(2));
        assert!((lhs - 1.0).abs() < 1e-12);
        assert_eq!(barrier_factor(2.0), 4.0);
    }

    #[test]
    fn zero_source_is_fixed() {
        let d = DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 0.05, None).unwrap();
        let t = assemble_kernel(&d, &KernelSpec::power(0.3, 2.0)).unwrap();
        let g = Nonlinearity::power(1.2);
        let cfg = FixedPointConfig {
            rho: 0.1,
            t0: 1.0,
            c: 1.0,
            a: weak_exponent(1, 0.6),
            kappa: 1.2,
            max_iter: 10,
            tol: 1e-10,
        };
        let out = fixed_point_iterate(&d, &t, &g, &MeasureData::zero(d.n_interior()), &cfg).unwrap();
        assert!(out.converged && out.report.field.max_abs() == 0.0 && out.orbit.len() == 1);
        let q = WolffQuery::new(0.3, 2.0, 2.0);
        let mono = monotone_source_iterate(&d, &t, 1.2, &MeasureData::zero(d.n_interior()), 1.0, &q, 1.0, 1.0, 10).unwrap();
        assert!(mono.stabilized && mono.report.field.max_abs() == 0.0);
    }
}
