//! One-dimensional quadrature: adaptive Gauss-Kronrod on finite intervals,
//! composite Gauss-Legendre, and semi-infinite integrals with a divergence
//! verdict.

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

// 5-point Gauss-Legendre on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Returns the integral estimate and the accumulated error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    let mut evaluations = 1usize;
    while err > abs_tol.max(rel_tol * total.abs()) && evaluations < 2000 {
        // split the interval with the largest error
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, v0, e0) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            intervals.push((lo, hi, v0, 0.0));
            err -= e0;
            continue;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
        evaluations += 2;
    }
    // re-sum to limit cancellation drift from the incremental updates
    let total: f64 = intervals.iter().map(|iv| iv.2).sum();
    let err: f64 = intervals.iter().map(|iv| iv.3).sum();
    (total, err)
}

/// Composite 5-point Gauss-Legendre rule over the panels delimited by the
/// sorted breakpoints `edges`.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, edges: &[f64]) -> f64 {
    edges
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            h * GL5_X.iter().zip(GL5_W.iter()).map(|(x, wt)| wt * f(c + h * x)).sum::<f64>()
        })
        .sum()
}

/// Outcome of a semi-infinite integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailIntegral {
    /// The integral converged; `value` includes the extrapolated remainder.
    Converged { value: f64, chunks: usize },
    /// Contributions of successive dyadic chunks stopped decaying.
    Divergent { partial: f64, growth_ratio: f64 },
}

impl TailIntegral {
    pub fn value(&self) -> Option<f64> {
        match *self {
            TailIntegral::Converged { value, .. } => Some(value),
            TailIntegral::Divergent { .. } => None,
        }
    }
}

/// Integrates `f` over `[a, ∞)` with `a > 0` by summing dyadic chunks
/// `[a 2^k, a 2^{k+1}]`.
///
/// The verdict is read from the ratio of successive chunk contributions: a
/// stable ratio below one is extrapolated geometrically, a ratio at or above
/// one is reported as divergence.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> TailIntegral {
    assert!(a > 0.0, "lower limit must be positive");
    const MAX_CHUNKS: usize = 1000;
    const STABLE: usize = 4;
    // substitute t = e^x so each dyadic chunk has unit-scale width
    let g = |x: f64| {
        let t = x.exp();
        f(t) * t
    };
    let ln2 = std::f64::consts::LN_2;
    let x0 = a.ln();
    let mut sum = 0.0;
    let mut prev: Option<f64> = None;
    let mut ratios: Vec<f64> = Vec::new();
    let mut zero_run = 0usize;
    for k in 0..MAX_CHUNKS {
        let lo = x0 + k as f64 * ln2;
        let hi = lo + ln2;
        let (c, _) = integrate(g, lo, hi, 0.0, 1e-13);
        if !c.is_finite() {
            let growth = ratios.last().copied().unwrap_or(f64::INFINITY);
            if growth < 1.0 {
                let r = growth;
                let last = prev.unwrap_or(0.0);
                return TailIntegral::Converged {
                    value: sum + last * r / (1.0 - r),
                    chunks: k,
                };
            }
            return TailIntegral::Divergent {
                partial: sum,
                growth_ratio: growth,
            };
        }
        sum += c;
        let c_abs = c.abs();
        if c_abs == 0.0 {
            zero_run += 1;
            if zero_run >= 64 && prev.is_none_or(|p| p == 0.0) {
                return TailIntegral::Converged { value: sum, chunks: k + 1 };
            }
            prev = Some(0.0);
            continue;
        }
        zero_run = 0;
        if let Some(p) = prev {
            if p > 0.0 {
                ratios.push(c_abs / p);
            }
        }
        prev = Some(c_abs);
        if ratios.len() >= STABLE {
            let tail = &ratios[ratios.len() - STABLE..];
            let r = tail[STABLE - 1];
            let spread = tail.iter().fold(0.0f64, |m, x| m.max((x - r).abs()));
            let stable = spread <= 1e-7 * r.max(1e-300);
            if r < 1.0 && (stable || c_abs * r / (1.0 - r) <= rel_tol * sum.abs()) {
                let remainder = c * r / (1.0 - r);
                if stable || remainder.abs() <= rel_tol * sum.abs() {
                    return TailIntegral::Converged {
                        value: sum + remainder,
                        chunks: k + 1,
                    };
                }
            }
            if stable && r >= 1.0 {
                return TailIntegral::Divergent {
                    partial: sum,
                    growth_ratio: r,
                };
            }
        }
    }
    let growth = ratios.last().copied().unwrap_or(0.0);
    if growth < 1.0 {
        TailIntegral::Converged {
            value: sum,
            chunks: MAX_CHUNKS,
        }
    } else {
        TailIntegral::Divergent {
            partial: sum,
            growth_ratio: growth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomials_and_smooth() {
        let (v, _) = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14, 1e-14);
        assert!((v - 0.0).abs() < 1e-13);
        let (v, _) = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-14, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_integrable_singularity() {
        let (v, _) = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12);
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn composite_gauss_exact_for_low_degree() {
        let edges: Vec<f64> = (0..=4).map(|k| k as f64 * 0.25).collect();
        let v = composite_gauss(|x| x.powi(7), &edges);
        assert!((v - 0.125).abs() < 1e-14);
    }

    #[test]
    fn tail_power_law_converges_with_closed_form() {
        // ∫_1^∞ t^{-1.5} dt = 2
        let out = integrate_to_infinity(|t: f64| t.powf(-1.5), 1.0, 1e-12);
        let v = out.value().expect("convergent");
        assert!((v - 2.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn tail_power_law_divergence_detected() {
        let out = integrate_to_infinity(|t: f64| t.powf(-0.9), 1.0, 1e-12);
        assert!(matches!(out, TailIntegral::Divergent { .. }));
        let out = integrate_to_infinity(|t: f64| t.powf(-1.0), 1.0, 1e-12);
        assert!(matches!(out, TailIntegral::Divergent { .. }));
    }

    #[test]
    fn tail_near_threshold_extrapolates() {
        // exponent -1.001: value 1000
        let out = integrate_to_infinity(|t: f64| t.powf(-1.001), 1.0, 1e-12);
        let v = out.value().expect("convergent");
        assert!((v - 1000.0).abs() / 1000.0 < 1e-6, "{v}");
    }

    #[test]
    fn tail_of_zero_is_zero() {
        let out = integrate_to_infinity(|_| 0.0, 1.0, 1e-12);
        assert_eq!(out.value(), Some(0.0));
    }
}
