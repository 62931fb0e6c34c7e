//! Lebesgue, weak-Lebesgue (Marcinkiewicz) and Gagliardo quantities of
//! nodal fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{distance, DiscreteDomain};
use crate::error::{invalid, Result};
use crate::field::SolutionField;

/// Distribution function `λ_f(a) = |{|f| > a}|`.
pub fn distribution_function(domain: &DiscreteDomain, f: &SolutionField, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(invalid("a", format!("threshold must be positive, got {a}")));
    }
    f.check_len(domain)?;
    Ok(f.values()
        .iter()
        .zip(domain.weights())
        .filter(|(v, _)| v.abs() > a)
        .map(|(_, w)| w)
        .sum())
}

/// Nodes sorted by |f| descending (stable, so equal values keep index order)
/// paired with cumulative weights.
fn descending_levels(domain: &DiscreteDomain, f: &SolutionField) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&i, &j| f.values()[j].abs().total_cmp(&f.values()[i].abs()));
    order.into_iter().map(|i| (f.values()[i].abs(), domain.weight(i))).collect()
}

/// Marcinkiewicz quasi-norm `(sup_a a^q λ_f(a))^{1/q}`.
///
/// On nodal data the supremum is approached from below at each jump of
/// `λ_f`, giving `max_k v_k |{|f| ≥ v_k}|^{1/q}`.
pub fn weak_norm_star(domain: &DiscreteDomain, f: &SolutionField, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(invalid("q", format!("exponent must be at least 1, got {q}")));
    }
    f.check_len(domain)?;
    let levels = descending_levels(domain, f);
    let mut best = 0.0f64;
    let mut vol = 0.0;
    let mut k = 0;
    while k < levels.len() {
        let v = levels[k].0;
        // absorb the whole tie group before evaluating
        while k < levels.len() && levels[k].0 == v {
            vol += levels[k].1;
            k += 1;
        }
        if v > 0.0 {
            best = best.max(v * vol.powf(1.0 / q));
        }
    }
    Ok(best)
}

/// Equivalent norm `sup_ω ∫_ω |f| / |ω|^{1/q'}` over superlevel sets of |f|.
pub fn weak_norm_sup(domain: &DiscreteDomain, f: &SolutionField, q: f64) -> Result<f64> {
    if !(q > 1.0) {
        return Err(invalid("q", format!("exponent must exceed 1, got {q}")));
    }
    f.check_len(domain)?;
    let expo = 1.0 - 1.0 / q;
    let mut best = 0.0f64;
    let mut integral = 0.0;
    let mut vol = 0.0;
    for (v, w) in descending_levels(domain, f) {
        integral += v * w;
        vol += w;
        best = best.max(integral / vol.powf(expo));
    }
    Ok(best)
}

/// Exponents `(h, q)` of a `W^{h,q}` quasi-norm, checked against the
/// admissible range `0 < h < s`, `0 < q < N(p-1)/(N-s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormSpec {
    pub h: f64,
    pub q: f64,
}

impl SeminormSpec {
    pub fn new(h: f64, q: f64, s: f64, p: f64, dim: usize) -> Result<Self> {
        let spec = SeminormSpec { h, q };
        spec.validate(s, p, dim)?;
        Ok(spec)
    }

    pub fn q_upper(s: f64, p: f64, dim: usize) -> f64 {
        let n = dim as f64;
        n * (p - 1.0) / (n - s)
    }

    pub fn validate(&self, s: f64, p: f64, dim: usize) -> Result<()> {
        if !(self.h > 0.0 && self.h < s) {
            return Err(invalid("h", format!("need 0 < h < s = {s}, got {}", self.h)));
        }
        let upper = Self::q_upper(s, p, dim);
        if !(self.q > 0.0 && self.q < upper) {
            return Err(invalid("q", format!("need 0 < q < {upper}, got {}", self.q)));
        }
        Ok(())
    }
}

/// `Σ_{i≠j} |f_i - f_j|^q |x_i - x_j|^{-(N + order·q)} w_i w_j` over ordered
/// pairs of all grid nodes, the field being zero on the collar.
pub fn gagliardo_power_sum(domain: &DiscreteDomain, f: &SolutionField, order: f64, q: f64) -> Result<f64> {
    f.check_len(domain)?;
    let expo = domain.dim() as f64 + order * q;
    let vals = f.values();
    let pts = domain.points();
    let w = domain.weights();
    let interior: f64 = (0..vals.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..vals.len() {
                if j != i {
                    let diff = (vals[i] - vals[j]).abs();
                    if diff > 0.0 {
                        s += diff.powf(q) * distance(&pts[i], &pts[j]).powf(-expo) * w[j];
                    }
                }
            }
            s * w[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let ext = if vals.iter().any(|v| *v != 0.0) {
        domain.exterior_sums(|r| r.powf(-expo))
    } else {
        vec![0.0; vals.len()]
    };
    let exterior: f64 = vals
        .iter()
        .zip(w)
        .zip(&ext)
        .map(|((v, wi), e)| 2.0 * v.abs().powf(q) * wi * e)
        .sum();
    Ok(interior + exterior)
}

/// Gagliardo quasi-norm `(Σ_{i≠j} |f_i - f_j|^q / |x_i - x_j|^{N+hq} w_i w_j)^{1/q}`.
pub fn gagliardo_seminorm(domain: &DiscreteDomain, f: &SolutionField, spec: &SeminormSpec) -> Result<f64> {
    if !(spec.h > 0.0 && spec.q > 0.0) {
        return Err(invalid("spec", format!("need positive exponents, got {spec:?}")));
    }
    Ok(gagliardo_power_sum(domain, f, spec.h, spec.q)?.powf(1.0 / spec.q))
}
