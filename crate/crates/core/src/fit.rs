//! Small fitting helpers shared by the experiment drivers.

use serde::{Deserialize, Serialize};

use crate::domain::{distance, DiscreteDomain, Point};
use crate::error::{invalid, Result};
use crate::field::SolutionField;

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSlope {
    pub slope: f64,
    pub bins_used: usize,
    pub nodes_used: usize,
}

/// Log-log radial slope of a positive field around `center` on the annulus
/// `[r_lo, r_hi]`. Nodes are grouped into `bins` equal-width bins in `ln r`;
/// each nonempty bin contributes its mean `(ln r, ln u)` once, so every
/// scale carries the same weight regardless of how many nodes it holds.
pub fn radial_log_slope(
    domain: &DiscreteDomain,
    field: &SolutionField,
    center: &Point,
    r_lo: f64,
    r_hi: f64,
    bins: usize,
) -> Result<RadialSlope> {
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return Err(invalid("r_lo", format!("need 0 < r_lo < r_hi, got {r_lo}, {r_hi}")));
    }
    if bins < 2 {
        return Err(invalid("bins", "need at least two bins"));
    }
    let (a, b) = (r_lo.ln(), r_hi.ln());
    let mut acc = vec![(0.0, 0.0, 0usize); bins];
    let mut nodes_used = 0;
    for (p, u) in domain.points().iter().zip(field.values()) {
        let r = distance(p, center);
        if r < r_lo || r > r_hi || !(*u > 0.0) {
            continue;
        }
        let k = (((r.ln() - a) / (b - a) * bins as f64) as usize).min(bins - 1);
        acc[k].0 += r.ln();
        acc[k].1 += u.ln();
        acc[k].2 += 1;
        nodes_used += 1;
    }
    let pts: Vec<(f64, f64)> = acc
        .iter()
        .filter(|c| c.2 > 0)
        .map(|c| (c.0 / c.2 as f64, c.1 / c.2 as f64))
        .collect();
    let (slope, _) = least_squares(&pts).ok_or_else(|| invalid("field", "fewer than two populated radial bins"))?;
    Ok(RadialSlope {
        slope,
        bins_used: pts.len(),
        nodes_used,
    })
}

/// Smallest `c ≥ 0` with `u ≤ c·w` nodewise. `None` when `u > 0` somewhere
/// that `w` vanishes.
pub fn upper_constant(u: &[f64], w: &[f64]) -> Option<f64> {
    let mut c = 0.0f64;
    for (u, w) in u.iter().zip(w) {
        if *u > 0.0 {
            if *w > 0.0 {
                c = c.max(u / w);
            } else {
                return None;
            }
        }
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (m, c) = least_squares(&pts).unwrap();
        assert!((m + 2.0).abs() < 1e-14 && (c - 3.0).abs() < 1e-14);
        assert!(least_squares(&[(1.0, 1.0)]).is_none());
    }

    #[test]
    fn power_law_profile() {
        let d = DiscreteDomain::lattice(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.02,
            None,
        )
        .unwrap();
        let u = SolutionField::from_fn(d.n_interior(), |i| {
            let p = d.point(i);
            p[0].hypot(p[1]).max(1e-3).powf(-1.5)
        });
        let fit = radial_log_slope(&d, &u, &[0.0, 0.0], 0.08, 0.5, 24).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-12);
    }

    #[test]
    fn upper_constant_cases() {
        assert_eq!(upper_constant(&[1.0, 2.0, -1.0], &[1.0, 1.0, 0.0]), Some(2.0));
        assert_eq!(upper_constant(&[1.0], &[0.0]), None);
        assert_eq!(upper_constant(&[0.0, -1.0], &[0.0, 0.0]), Some(0.0));
    }
}
