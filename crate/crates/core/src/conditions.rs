//! Checkers for the structural conditions on source data `τ`: the ball
//! condition, boundedness of the Wolff composition, and growth of `τ(B_t)`.

use serde::{Deserialize, Serialize};

use crate::domain::{distance, DiscreteDomain, Point};
use crate::error::{invalid, Error, Result};
use crate::field::SolutionField;
use crate::fit::least_squares;
use crate::kernel::KernelSpec;
use crate::measure::MeasureData;
use crate::wolff::{wolff_at_nodes, wolff_field, WolffQuery};

/// Power applied to the localized Wolff potential inside the ball integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallExponent {
    /// `κ`, as used when the condition is applied.
    #[default]
    Kappa,
    /// `κ/(p-1)`, as the condition is displayed.
    KappaOverPMinusOne,
}

impl BallExponent {
    pub fn value(&self, kappa: f64, p: f64) -> f64 {
        match self {
            BallExponent::Kappa => kappa,
            BallExponent::KappaOverPMinusOne => kappa / (p - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConditionReport {
    /// One entry per ball; `None` for balls with `τ(B) = 0`.
    pub ratios: Vec<Option<f64>>,
    pub max_ratio: Option<f64>,
    pub exponent: f64,
}

/// `max_B ∫_B (W^{2 diam}[τ⌊B])^E dx / τ(B)` over the given balls.
pub fn check_ball_condition(
    domain: &DiscreteDomain,
    tau: &MeasureData,
    kappa: f64,
    q: &WolffQuery,
    balls: &[Ball],
    variant: BallExponent,
) -> Result<BallConditionReport> {
    if !tau.is_nonnegative(domain) {
        return Err(Error::InvalidMeasure("ball condition needs τ ≥ 0".into()));
    }
    if !(kappa > q.p - 1.0) {
        return Err(invalid("kappa", format!("need κ > p - 1 = {}, got {kappa}", q.p - 1.0)));
    }
    let query = WolffQuery {
        radius: 2.0 * domain.diam(),
        ..*q
    };
    let exponent = variant.value(kappa, q.p);
    let mut ratios = Vec::with_capacity(balls.len());
    for ball in balls {
        if !(ball.radius > 0.0) {
            return Err(invalid("balls", format!("radius must be positive, got {}", ball.radius)));
        }
        let inside: Vec<usize> = (0..domain.n_interior())
            .filter(|&i| distance(domain.point(i), &ball.center) < ball.radius)
            .collect();
        let local = tau.restricted(|i| distance(domain.point(i), &ball.center) < ball.radius);
        let mass = local.total_mass(domain);
        if !(mass > 0.0) {
            ratios.push(None);
            continue;
        }
        let w = wolff_at_nodes(domain, &local, &query, &inside)?;
        let integral: f64 = inside.iter().zip(&w).map(|(&i, v)| v.powf(exponent) * domain.weight(i)).sum();
        ratios.push(Some(integral / mass));
    }
    let max_ratio = ratios.iter().flatten().copied().reduce(f64::max);
    Ok(BallConditionReport {
        ratios,
        max_ratio,
        exponent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionReport {
    /// `sup F₂/F₁` over nodes with `F₁ > 0`.
    pub sup_ratio: f64,
    pub inner: SolutionField,
    pub outer: SolutionField,
}

/// `F₁ = W[τ]`, `F₂ = W[F₁^κ dx]`; reports `sup F₂/F₁`.
pub fn check_wolff_composition(domain: &DiscreteDomain, tau: &MeasureData, kappa: f64, q: &WolffQuery) -> Result<CompositionReport> {
    if !tau.is_nonnegative(domain) {
        return Err(Error::InvalidMeasure("Wolff composition needs τ ≥ 0".into()));
    }
    let inner = wolff_field(domain, tau, q)?;
    let density: Vec<f64> = inner.values().iter().map(|f| f.powf(kappa)).collect();
    let outer = wolff_field(domain, &MeasureData::from_density(domain, density)?, q)?;
    let sup_ratio = inner
        .values()
        .iter()
        .zip(outer.values())
        .filter(|(f1, _)| **f1 > 0.0)
        .map(|(f1, f2)| f2 / f1)
        .fold(0.0, f64::max);
    Ok(CompositionReport { sup_ratio, inner, outer })
}

/// Smallest admissible growth exponent of `t ↦ τ(B_t(x))`:
/// `(κ(N-sp) - N(p-1))/(κ-p+1)`.
pub fn growth_threshold(kappa: f64, spec: &KernelSpec, dim: usize) -> f64 {
    let n = dim as f64;
    (kappa * (n - spec.sp()) - n * (spec.p - 1.0)) / (kappa - spec.p + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub threshold: f64,
    pub slopes: Vec<f64>,
    pub passes: bool,
}

/// Fits `ln τ(B_t(x))` against `ln t` over 16 log-spaced radii in
/// `[4h, diam/2]` for every center. Passes iff every slope is at least the
/// threshold minus 0.1.
pub fn measure_growth_exponent(
    domain: &DiscreteDomain,
    tau: &MeasureData,
    kappa: f64,
    spec: &KernelSpec,
    centers: &[Point],
) -> Result<GrowthReport> {
    if !tau.is_nonnegative(domain) {
        return Err(Error::InvalidMeasure("growth exponent needs τ ≥ 0".into()));
    }
    let threshold = growth_threshold(kappa, spec, domain.dim());
    let (lo, hi) = (4.0 * domain.spacing(), domain.diam() / 2.0);
    if !(hi > lo) {
        return Err(invalid("domain", "grid too coarse: 4h exceeds diam/2"));
    }
    let m = tau.node_masses(domain);
    let radii: Vec<f64> = (0..16).map(|k| lo * (hi / lo).powf(k as f64 / 15.0)).collect();
    let mut slopes = Vec::with_capacity(centers.len());
    for c in centers {
        let mut dist: Vec<(f64, f64)> = domain
            .points()
            .iter()
            .zip(&m)
            .filter(|(_, m)| **m > 0.0)
            .map(|(p, m)| (distance(p, c), *m))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pts = Vec::new();
        let (mut k, mut mass) = (0, 0.0);
        for &t in &radii {
            while k < dist.len() && dist[k].0 < t {
                mass += dist[k].1;
                k += 1;
            }
            if mass > 0.0 {
                pts.push((t.ln(), f64::ln(mass)));
            }
        }
        if pts.len() < 4 {
            return Err(invalid("tau", format!("only {} radii carry mass around {c:?}", pts.len())));
        }
        slopes.push(least_squares(&pts).map(|f| f.0).unwrap_or(0.0));
    }
    let passes = slopes.iter().all(|s| *s >= threshold - 0.1);
    Ok(GrowthReport { threshold, slopes, passes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;

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
    fn growth_exponents() {
        let d = disk(0.05);
        let spec = KernelSpec::power(0.5, 2.0);
        assert!((growth_threshold(3.0, &spec, 2) - 0.5).abs() < 1e-15);
        let leb = measure_growth_exponent(&d, &MeasureData::lebesgue(&d, 1.0), 3.0, &spec, &[[0.0, 0.0]]).unwrap();
        assert!((leb.slopes[0] - 2.0).abs() < 0.1 && leb.passes);
        let dirac = measure_growth_exponent(&d, &MeasureData::dirac(&d, &[0.0, 0.0], 1.0), 3.0, &spec, &[[0.0, 0.0]]).unwrap();
        assert!(dirac.slopes[0].abs() < 1e-12 && !dirac.passes);
        let far = MeasureData::dirac(&d, &[0.9, 0.0], 1.0);
        assert!(measure_growth_exponent(&d, &far, 3.0, &spec, &[[-0.9, 0.0]]).is_err());
    }

    #[test]
    fn composition_scaling_and_zero() {
        let d = disk(0.2);
        let q = WolffQuery::new(0.5, 1.5, 4.0);
        let zero = check_wolff_composition(&d, &MeasureData::zero(d.n_interior()), 1.2, &q).unwrap();
        assert_eq!(zero.sup_ratio, 0.0);
        let tau = MeasureData::uniform_ball(&d, &[0.0, 0.0], 0.5, 1.0).unwrap();
        let base = check_wolff_composition(&d, &tau, 1.2, &q).unwrap().sup_ratio;
        let expo = (1.2 - 0.5) / 0.25;
        for t in [0.5, 2.0] {
            let r = check_wolff_composition(&d, &tau.scaled(t), 1.2, &q).unwrap().sup_ratio;
            assert!((r / base - f64::powf(t, expo)).abs() < 1e-10 * r / base);
        }
    }

    #[test]
    fn ball_condition_skips_empty_balls() {
        let d = disk(0.1);
        let tau = MeasureData::uniform_ball(&d, &[0.0, 0.0], 0.3, 1.0).unwrap();
        let q = WolffQuery::new(0.5, 2.0, 4.0);
        let balls = [
            Ball {
                center: [0.0, 0.0],
                radius: 0.5,
            },
            Ball {
                center: [0.8, 0.0],
                radius: 0.1,
            },
        ];
        let r = check_ball_condition(&d, &tau, 1.5, &q, &balls, BallExponent::Kappa).unwrap();
        assert!(r.ratios[0].unwrap() > 0.0 && r.ratios[1].is_none());
        assert_eq!(r.max_ratio, r.ratios[0]);
        let r0 = check_ball_condition(&d, &MeasureData::zero(d.n_interior()), 1.5, &q, &balls, BallExponent::Kappa).unwrap();
        assert_eq!(r0.max_ratio, None);
    }
}
