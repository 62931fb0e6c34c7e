//! Drivers for `Lu + g(u) = μ`: the subcriticality test on `g`, the Wolff
//! sandwich of the solution, a priori bounds, and the truncation scheme
//! that exposes nonexistence for supercritical powers with atomic data.

use serde::{Deserialize, Serialize};

use crate::capacity::{point_capacity_regime, CapacityRegime};
use crate::domain::{distance, DiscreteDomain, DomainDescriptor};
use crate::error::{invalid, Result};
use crate::field::SolutionField;
use crate::fit::{radial_log_slope, upper_constant};
use crate::kernel::KernelSpec;
use crate::measure::{MeasureData, MeasureDescriptor};
use crate::nonlinearity::Nonlinearity;
use crate::norms::{gagliardo_seminorm, SeminormSpec};
use crate::quadrature::{integrate_to_infinity, TailIntegral};
use crate::solver::{absorption_l1_bound, solve, AbsorptionBound, SolveOptions, SolveReport};
use crate::wolff::{wolff_field, WolffQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub verdict: Criticality,
    /// `N(p-1)/(N-sp)`.
    pub exponent: f64,
    /// `∫_1^∞ (g(t) - g(-t)) t^{-exponent-1} dt` when finite.
    pub lambda_g: Option<f64>,
    /// `N(p-1)/(N-s)`, an alternative threshold sometimes quoted for powers.
    pub remark_exponent: f64,
    /// For power `g`: whether the remark's threshold gives the other verdict.
    pub remark_disagrees: Option<bool>,
}

pub fn critical_exponent(dim: usize, s: f64, p: f64) -> f64 {
    let n = dim as f64;
    n * (p - 1.0) / (n - s * p)
}

/// Decides whether `g` is integrable against `t^{-N(p-1)/(N-sp)-1}` at
/// infinity. Divergence is a verdict, not an error.
pub fn subcritical_check(g: &Nonlinearity, dim: usize, s: f64, p: f64) -> Result<CriticalityReport> {
    KernelSpec::power(s, p).validate(dim)?;
    g.validate()?;
    let exponent = critical_exponent(dim, s, p);
    let n = dim as f64;
    let remark_exponent = n * (p - 1.0) / (n - s);
    let tail = integrate_to_infinity(|t| (g.eval(t) - g.eval(-t)) * t.powf(-exponent - 1.0), 1.0, 1e-10);
    let (verdict, lambda_g) = match tail {
        TailIntegral::Converged { value, .. } => (Criticality::Subcritical, Some(value)),
        TailIntegral::Divergent { .. } => (Criticality::Supercritical, None),
    };
    let remark_disagrees = match g {
        Nonlinearity::Power { kappa, coefficient } if *coefficient != 0.0 => {
            Some((*kappa < remark_exponent) != (verdict == Criticality::Subcritical))
        }
        _ => None,
    };
    Ok(CriticalityReport {
        verdict,
        exponent,
        lambda_g,
        remark_exponent,
        remark_disagrees,
    })
}

fn default_tol() -> f64 {
    1e-8
}

fn default_levels() -> Vec<f64> {
    vec![1.0, 4.0, 16.0, 64.0, 256.0]
}

fn default_refinements() -> usize {
    2
}

/// One absorption experiment, described independently of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionRun {
    pub domain: DomainDescriptor,
    pub kernel: KernelSpec,
    pub nonlinearity: Nonlinearity,
    pub measure: MeasureDescriptor,
    #[serde(default)]
    pub seminorm: Option<SeminormSpec>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Levels `n` of the truncated scheme `T_n∘g`, increasing.
    #[serde(default = "default_levels")]
    pub truncation_levels: Vec<f64>,
    /// Grid halvings for the nonexistence study.
    #[serde(default = "default_refinements")]
    pub refinements: usize,
}

/// Smallest constants with `-c₋ W[μ⁻] ≤ u ≤ c₊ W[μ⁺]` nodewise. A constant
/// is 0 when that part of `u` vanishes, and `None` when no constant works.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub c_plus: Option<f64>,
    pub c_minus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationStep {
    pub level: f64,
    /// `∫ |T_n g(u_n)|`.
    pub absorbed: f64,
    /// `∫ |u_n|^κ` for power nonlinearities.
    pub power_integral: Option<f64>,
    pub max_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationScheme {
    pub steps: Vec<TruncationStep>,
    /// For nonnegative data: `u_{n'} ≤ u_n + 1e-9` whenever `n' > n`.
    pub monotone: Option<bool>,
    /// The last two levels differ by less than 1% in the tracked integral.
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub spacing: f64,
    pub n_nodes: usize,
    /// `∫ |u|^κ` at the top truncation level.
    pub power_integral: f64,
    /// Share of `∫ |T_n g(u)|` carried within two grid spacings of the atoms.
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceStudy {
    pub steps: Vec<RefinementStep>,
    /// `∫ |u|^κ` grows by more than 10% at every halving.
    pub diverging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub kappa: f64,
    /// `∫ |u|^κ` against `|μ|(Ω)`.
    pub power_integral: f64,
    pub total_variation: f64,
    /// Regime of `Cap_{sp, κ/(κ-p+1)}` on points.
    pub point_regime: CapacityRegime,
    pub supercritical: bool,
    pub nonexistence: Option<NonexistenceStudy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionOutcome {
    pub n_nodes: usize,
    pub spacing: f64,
    pub report: SolveReport,
    pub criticality: CriticalityReport,
    pub wolff_plus: SolutionField,
    pub wolff_minus: SolutionField,
    pub sandwich: Sandwich,
    pub absorption: AbsorptionBound,
    /// `(∫ |g(u)|)^{1/(p-1)}`.
    pub absorption_root: f64,
    /// `|μ|(Ω)^{1/(p-1)}`.
    pub data_root: f64,
    pub seminorm: Option<f64>,
    pub truncation: Option<TruncationScheme>,
    /// Radial log-log slope around a single atom on `[4h, diam/4]`.
    pub profile_slope: Option<f64>,
    pub power: Option<PowerSummary>,
}

fn power_integral(domain: &DiscreteDomain, u: &SolutionField, kappa: f64) -> f64 {
    u.values().iter().zip(domain.weights()).map(|(v, w)| v.abs().powf(kappa) * w).sum()
}

fn absorbed(domain: &DiscreteDomain, u: &SolutionField, g: &Nonlinearity) -> f64 {
    u.values().iter().zip(domain.weights()).map(|(v, w)| g.eval(*v).abs() * w).sum()
}

fn options(run: &AbsorptionRun) -> SolveOptions {
    SolveOptions {
        tol: run.tol,
        max_iter: 500,
        diagnostics: false,
        ..Default::default()
    }
}

fn validate_run(run: &AbsorptionRun, dim: usize) -> Result<()> {
    run.kernel.validate(dim)?;
    run.nonlinearity.validate()?;
    if let Some(sn) = &run.seminorm {
        sn.validate(run.kernel.s, run.kernel.p, dim)?;
    }
    if run.truncation_levels.windows(2).any(|w| !(w[1] > w[0])) || run.truncation_levels.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("truncation_levels", "levels must be positive and increasing"));
    }
    Ok(())
}

fn truncation_scheme(domain: &DiscreteDomain, run: &AbsorptionRun, mu: &MeasureData, opts: &SolveOptions) -> Result<TruncationScheme> {
    let kappa = run.nonlinearity.kappa();
    let mut steps = Vec::new();
    let mut fields: Vec<SolutionField> = Vec::new();
    for &level in &run.truncation_levels {
        let g = run.nonlinearity.clone().truncated(level);
        let rep = solve(domain, &run.kernel, &g, mu, opts)?;
        steps.push(TruncationStep {
            level,
            absorbed: absorbed(domain, &rep.field, &g),
            power_integral: kappa.map(|k| power_integral(domain, &rep.field, k)),
            max_value: rep.field.max_abs(),
        });
        fields.push(rep.field);
    }
    let monotone = mu.is_nonnegative(domain).then(|| {
        fields
            .windows(2)
            .all(|w| w[1].values().iter().zip(w[0].values()).all(|(b, a)| *b <= a + 1e-9))
    });
    let tracked = |s: &TruncationStep| s.power_integral.unwrap_or(s.absorbed);
    let stabilized = match steps.as_slice() {
        [.., a, b] => (tracked(b) - tracked(a)).abs() < 0.01 * tracked(b).abs().max(1e-300),
        _ => false,
    };
    Ok(TruncationScheme {
        steps,
        monotone,
        stabilized,
    })
}

fn solve_and_measure(domain: &DiscreteDomain, run: &AbsorptionRun) -> Result<AbsorptionOutcome> {
    validate_run(run, domain.dim())?;
    let mu = run.measure.build(domain)?;
    let spec = &run.kernel;
    let p = spec.p;
    let opts = options(run);
    let report = solve(domain, spec, &run.nonlinearity, &mu, &opts)?;
    let criticality = subcritical_check(&run.nonlinearity, domain.dim(), spec.s, p)?;
    let q = WolffQuery::new(spec.s, p, 2.0 * domain.diam());
    let wolff_plus = wolff_field(domain, &mu.positive_part(domain), &q)?;
    let wolff_minus = wolff_field(domain, &mu.negative_part(domain), &q)?;
    let u = report.field.values();
    let up: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
    let um: Vec<f64> = u.iter().map(|v| (-v).max(0.0)).collect();
    let sandwich = Sandwich {
        c_plus: upper_constant(&up, wolff_plus.values()),
        c_minus: upper_constant(&um, wolff_minus.values()),
    };
    let absorption = absorption_l1_bound(domain, &report, &run.nonlinearity, &mu, 1e-9 * mu.total_variation(domain).max(1.0))?;
    let seminorm = match &run.seminorm {
        Some(sn) => Some(gagliardo_seminorm(domain, &report.field, sn)?),
        None => None,
    };
    let truncation = if run.nonlinearity.is_bounded() {
        None
    } else {
        Some(truncation_scheme(domain, run, &mu, &opts)?)
    };
    let profile_slope = match &run.measure {
        MeasureDescriptor::Dirac { mass, .. } if *mass > 0.0 => {
            let atom = domain.point(mu.atoms()[0].0);
            let h = domain.spacing();
            radial_log_slope(domain, &report.field, atom, 4.0 * h, domain.diam() / 4.0, 24)
                .ok()
                .map(|f| f.slope)
        }
        _ => None,
    };
    Ok(AbsorptionOutcome {
        n_nodes: domain.n_interior(),
        spacing: domain.spacing(),
        criticality,
        wolff_plus,
        wolff_minus,
        sandwich,
        absorption_root: absorption.absorbed.powf(1.0 / (p - 1.0)),
        data_root: absorption.total_variation.powf(1.0 / (p - 1.0)),
        absorption,
        seminorm,
        truncation,
        profile_slope,
        power: None,
        report,
    })
}

/// Solves `Lu + g(u) = μ` and fills in the sandwich, the absorption bound
/// and the truncation scheme for unbounded `g`.
///
/// Requires a subcritical `g`, or atom-free data.
pub fn run_absorption(run: &AbsorptionRun) -> Result<AbsorptionOutcome> {
    let domain = DiscreteDomain::from_descriptor(&run.domain)?;
    let verdict = subcritical_check(&run.nonlinearity, domain.dim(), run.kernel.s, run.kernel.p)?;
    if verdict.verdict == Criticality::Supercritical && run.measure.has_atoms() {
        return Err(invalid(
            "measure",
            "supercritical g with atomic data; use the power-absorption driver to study the truncation scheme",
        ));
    }
    solve_and_measure(&domain, run)
}

/// As [`run_absorption`] for `g(t) = c|t|^{κ-1}t`, adding `∫|u|^κ` and, for
/// atomic data with supercritical `κ` where points have zero capacity, the
/// behaviour of the truncated scheme under grid refinement.
pub fn run_power_absorption(run: &AbsorptionRun) -> Result<AbsorptionOutcome> {
    let kappa = match run.nonlinearity {
        Nonlinearity::Power { kappa, .. } => kappa,
        _ => return Err(invalid("nonlinearity", "power absorption needs a power nonlinearity")),
    };
    let spec = &run.kernel;
    let p = spec.p;
    if !(kappa > p - 1.0) {
        return Err(invalid("kappa", format!("need κ > p - 1 = {}, got {kappa}", p - 1.0)));
    }
    let domain = DiscreteDomain::from_descriptor(&run.domain)?;
    let dim = domain.dim();
    let mut out = solve_and_measure(&domain, run)?;
    let beta = kappa / (kappa - p + 1.0);
    let point_regime = point_capacity_regime(spec.sp(), beta, dim)?;
    let supercritical = kappa >= critical_exponent(dim, spec.s, p);
    let nonexistence = if supercritical && point_regime == CapacityRegime::Null && run.measure.has_atoms() {
        Some(nonexistence_study(run, kappa)?)
    } else {
        None
    };
    out.power = Some(PowerSummary {
        kappa,
        power_integral: power_integral(&domain, &out.report.field, kappa),
        total_variation: out.absorption.total_variation,
        point_regime,
        supercritical,
        nonexistence,
    });
    Ok(out)
}

fn nonexistence_study(run: &AbsorptionRun, kappa: f64) -> Result<NonexistenceStudy> {
    let top = *run
        .truncation_levels
        .last()
        .ok_or_else(|| invalid("truncation_levels", "need at least one level"))?;
    let g = run.nonlinearity.clone().truncated(top);
    let opts = options(run);
    let mut steps = Vec::new();
    for k in 0..=run.refinements {
        let desc = DomainDescriptor {
            spacing: run.domain.spacing / 2f64.powi(k as i32),
            ..run.domain.clone()
        };
        let domain = DiscreteDomain::from_descriptor(&desc)?;
        let mu = run.measure.build(&domain)?;
        let rep = solve(&domain, &run.kernel, &g, &mu, &opts)?;
        let h = domain.spacing();
        let carriers: Vec<usize> = mu.atoms().iter().filter(|a| a.1 != 0.0).map(|a| a.0).collect();
        let total = absorbed(&domain, &rep.field, &g);
        let near: f64 = (0..domain.n_interior())
            .filter(|&i| carriers.iter().any(|&c| distance(domain.point(i), domain.point(c)) <= 2.0 * h))
            .map(|i| g.eval(rep.field.values()[i]).abs() * domain.weight(i))
            .sum();
        steps.push(RefinementStep {
            spacing: h,
            n_nodes: domain.n_interior(),
            power_integral: power_integral(&domain, &rep.field, kappa),
            concentration: if total > 0.0 { near / total } else { 0.0 },
        });
    }
    let diverging = steps.len() >= 2 && steps.windows(2).all(|w| w[1].power_integral > 1.1 * w[0].power_integral);
    Ok(NonexistenceStudy { steps, diverging })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;

    #[test]
    fn closed_form_lambda_and_verdicts() {
        assert!((critical_exponent(2, 0.5, 2.0) - 2.0).abs() < 1e-15);
        let sub = subcritical_check(&Nonlinearity::power(1.5), 2, 0.5, 2.0).unwrap();
        assert_eq!(sub.verdict, Criticality::Subcritical);
        assert!((sub.lambda_g.unwrap() - 4.0).abs() < 1e-8);
        let sup = subcritical_check(&Nonlinearity::power(3.0), 2, 0.5, 2.0).unwrap();
        assert_eq!(sup.verdict, Criticality::Supercritical);
        assert!(sup.lambda_g.is_none());
        // between N(p-1)/(N-s) = 4/3 and N(p-1)/(N-sp) = 2 the two thresholds disagree
        let mid = subcritical_check(&Nonlinearity::power(1.7), 2, 0.5, 2.0).unwrap();
        assert_eq!(mid.remark_disagrees, Some(true));
        assert_eq!(subcritical_check(&Nonlinearity::Zero, 2, 0.5, 2.0).unwrap().lambda_g, Some(0.0));
    }

    fn run(kappa: f64, measure: MeasureDescriptor) -> AbsorptionRun {
        AbsorptionRun {
            domain: DomainDescriptor {
                shape: Shape::Disk {
                    center: [0.0, 0.0],
                    radius: 1.0,
                },
                spacing: 0.2,
                r_ext: None,
            },
            kernel: KernelSpec::power(0.5, 2.0),
            nonlinearity: Nonlinearity::power(kappa),
            measure,
            seminorm: None,
            tol: 1e-9,
            truncation_levels: vec![1.0, 8.0, 64.0],
            refinements: 1,
        }
    }

    #[test]
    fn zero_data_gives_zero_constants() {
        let out = run_absorption(&run(1.5, MeasureDescriptor::Zero)).unwrap();
        assert_eq!(out.report.field.max_abs(), 0.0);
        assert_eq!(out.sandwich.c_plus, Some(0.0));
        assert_eq!(out.sandwich.c_minus, Some(0.0));
    }

    #[test]
    fn nonnegative_dirac_run() {
        let out = run_absorption(&run(1.5, MeasureDescriptor::Dirac { at: [0.0, 0.0], mass: 1.0 })).unwrap();
        assert!(out.report.field.values().iter().all(|u| *u >= 0.0));
        assert_eq!(out.sandwich.c_minus, Some(0.0));
        assert!(out.sandwich.c_plus.unwrap() > 0.0);
        assert!(out.absorption.holds);
        let scheme = out.truncation.unwrap();
        assert_eq!(scheme.monotone, Some(true));
    }

    #[test]
    fn supercritical_atoms_are_routed_to_power_driver() {
        let r = run(3.0, MeasureDescriptor::Dirac { at: [0.0, 0.0], mass: 1.0 });
        assert!(run_absorption(&r).is_err());
        let out = run_power_absorption(&r).unwrap();
        let power = out.power.unwrap();
        assert!(power.supercritical);
        assert_eq!(power.point_regime, CapacityRegime::Null);
        assert_eq!(power.nonexistence.unwrap().steps.len(), 2);
    }
}
