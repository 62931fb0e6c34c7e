//! Nondecreasing nonlinearities `g` with `g(0) = 0` and their primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::signed_pow;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Zero,
    /// `g(t) = c |t|^{κ-1} t`.
    Power {
        kappa: f64,
        #[serde(default = "one")]
        coefficient: f64,
    },
    /// `T_n ∘ g` with `T_n(t) = max(-n, min(t, n))`.
    Truncated { base: Box<Nonlinearity>, level: f64 },
    /// Piecewise linear interpolation of samples `(t, g(t))`, extended
    /// linearly by the end segments.
    Table { samples: Vec<(f64, f64)> },
}

impl Nonlinearity {
    pub fn power(kappa: f64) -> Self {
        Nonlinearity::Power { kappa, coefficient: 1.0 }
    }

    pub fn truncated(self, level: f64) -> Self {
        Nonlinearity::Truncated {
            base: Box::new(self),
            level,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Nonlinearity::Zero => true,
            Nonlinearity::Power { coefficient, .. } => *coefficient == 0.0,
            Nonlinearity::Truncated { base, .. } => base.is_zero(),
            Nonlinearity::Table { samples } => samples.iter().all(|s| s.1 == 0.0),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            Nonlinearity::Zero | Nonlinearity::Truncated { .. } => true,
            Nonlinearity::Power { coefficient, .. } => *coefficient == 0.0,
            Nonlinearity::Table { samples } => {
                let n = samples.len();
                n < 2 || (samples[0].1 == samples[1].1 && samples[n - 2].1 == samples[n - 1].1)
            }
        }
    }

    /// Power exponent κ, looking through truncations.
    pub fn kappa(&self) -> Option<f64> {
        match self {
            Nonlinearity::Power { kappa, .. } => Some(*kappa),
            Nonlinearity::Truncated { base, .. } => base.kappa(),
            _ => None,
        }
    }

    /// Constants `(a, d)` with `|g(t)| ≤ a |t|^d` near 0, when known.
    pub fn growth_near_zero(&self) -> Option<(f64, f64)> {
        match self {
            Nonlinearity::Zero => Some((0.0, 1.0)),
            Nonlinearity::Power { kappa, coefficient } => Some((*coefficient, *kappa)),
            Nonlinearity::Truncated { base, .. } => base.growth_near_zero(),
            Nonlinearity::Table { samples } => {
                // on [-1, 1] the steepest segment bounds |g| linearly
                let slope = table_segments(samples)
                    .filter(|(a, b)| a.0 < 1.0 && b.0 > -1.0)
                    .map(|(a, b)| (b.1 - a.1) / (b.0 - a.0))
                    .fold(0.0, f64::max);
                Some((slope, 1.0))
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power { kappa, coefficient } => coefficient * signed_pow(t, *kappa),
            Nonlinearity::Truncated { base, level } => base.eval(t).clamp(-level, *level),
            Nonlinearity::Table { samples } => table_eval(samples, t).0,
        }
    }

    /// Derivative `g'(t)`; one-sided from the right at kinks.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power { kappa, coefficient } => {
                if t == 0.0 {
                    if *kappa > 1.0 {
                        0.0
                    } else if *kappa == 1.0 {
                        *coefficient
                    } else {
                        f64::INFINITY
                    }
                } else {
                    coefficient * kappa * t.abs().powf(kappa - 1.0)
                }
            }
            Nonlinearity::Truncated { base, level } => {
                let v = base.eval(t);
                if v >= *level || v <= -*level {
                    0.0
                } else {
                    base.derivative(t)
                }
            }
            Nonlinearity::Table { samples } => table_eval(samples, t).1,
        }
    }

    /// Primitive `G(r) = ∫_0^r g`.
    pub fn primitive(&self, r: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power { kappa, coefficient } => coefficient * r.abs().powf(kappa + 1.0) / (kappa + 1.0),
            Nonlinearity::Truncated { base, level } => {
                // G_n(r) = G(t*) + n (|r| - |t*|) past the first crossing t* of ±n
                let target = if r >= 0.0 { *level } else { -*level };
                if (r >= 0.0 && base.eval(r) <= *level) || (r < 0.0 && base.eval(r) >= -*level) {
                    return base.primitive(r);
                }
                let cross = crossing(base, target, r);
                base.primitive(cross) + level * (r - cross).abs()
            }
            Nonlinearity::Table { samples } => table_primitive(samples, r),
        }
    }

    /// Checks `g(0) = 0` and monotonicity on a logarithmic sample grid.
    pub fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::Power { kappa, coefficient } => {
                if !(*kappa > 0.0 && kappa.is_finite()) {
                    return Err(Error::InvalidNonlinearity(format!("power exponent must be positive, got {kappa}")));
                }
                if !(*coefficient >= 0.0 && coefficient.is_finite()) {
                    return Err(Error::InvalidNonlinearity(format!(
                        "coefficient must be nonnegative, got {coefficient}"
                    )));
                }
            }
            Nonlinearity::Truncated { base, level } => {
                if !(*level > 0.0) {
                    return Err(Error::InvalidNonlinearity(format!(
                        "truncation level must be positive, got {level}"
                    )));
                }
                base.validate()?;
            }
            Nonlinearity::Table { samples } => {
                if samples.len() < 2 {
                    return Err(Error::InvalidNonlinearity("table needs at least two samples".into()));
                }
                if samples.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(Error::InvalidNonlinearity("non-finite table sample".into()));
                }
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidNonlinearity("table arguments must increase strictly".into()));
                    }
                }
            }
            Nonlinearity::Zero => {}
        }
        if self.eval(0.0) != 0.0 {
            return Err(Error::InvalidNonlinearity(format!("g(0) = {} ≠ 0", self.eval(0.0))));
        }
        let mut grid: Vec<f64> = (-60..=60).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let neg: Vec<f64> = grid.iter().rev().map(|t| -t).collect();
        grid = neg.into_iter().chain(std::iter::once(0.0)).chain(grid).collect();
        if let Nonlinearity::Table { samples } = self {
            grid.extend(samples.iter().map(|s| s.0));
            grid.sort_by(f64::total_cmp);
        }
        for w in grid.windows(2) {
            let (a, b) = (self.eval(w[0]), self.eval(w[1]));
            if b < a {
                return Err(Error::InvalidNonlinearity(format!(
                    "g decreases between {} and {} ({a} > {b})",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

fn table_segments(samples: &[(f64, f64)]) -> impl Iterator<Item = (&(f64, f64), &(f64, f64))> {
    samples.iter().zip(samples.iter().skip(1))
}

fn table_segment(samples: &[(f64, f64)], t: f64) -> usize {
    let n = samples.len();
    match samples.binary_search_by(|s| s.0.total_cmp(&t)) {
        Ok(k) => k.min(n - 2),
        Err(k) => k.saturating_sub(1).min(n - 2),
    }
}

fn table_eval(samples: &[(f64, f64)], t: f64) -> (f64, f64) {
    let k = table_segment(samples, t);
    let (a, b) = (samples[k], samples[k + 1]);
    let slope = (b.1 - a.1) / (b.0 - a.0);
    (a.1 + slope * (t - a.0), slope)
}

/// Exact integral of the piecewise linear interpolant from 0 to `r`.
fn table_primitive(samples: &[(f64, f64)], r: f64) -> f64 {
    let (lo, hi, sign) = if r >= 0.0 { (0.0, r, 1.0) } else { (r, 0.0, -1.0) };
    let mut knots = vec![lo];
    knots.extend(samples.iter().map(|s| s.0).filter(|&t| t > lo && t < hi));
    knots.push(hi);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        total += 0.5 * (b - a) * (table_eval(samples, a).0 + table_eval(samples, b).0);
    }
    sign * total
}

/// First `t` between 0 and `r` with `g(t) = target`, by bisection.
fn crossing(g: &Nonlinearity, target: f64, r: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, r);
    let reached = |t: f64| if target > 0.0 { g.eval(t) >= target } else { g.eval(t) <= target };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
