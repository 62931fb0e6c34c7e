//! Brute-force references for small capacity programs, written against the
//! dual `max_{λ≥0} Σλ_i - (β-1)/β Σ_j z_j g_j`, `z = Aᵀλ`,
//! `g_j = (z_j⁺/(β w_j))^{1/(β-1)}`.

use fraclab_core::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub fn dual_value(a: &DMatrix<f64>, w: &[f64], beta: f64, lambda: &[f64]) -> f64 {
    let mut value: f64 = lambda.iter().sum();
    for j in 0..a.ncols() {
        let z: f64 = (0..a.nrows()).map(|i| a[(i, j)] * lambda[i]).sum();
        if z > 0.0 {
            let g = (z / (beta * w[j])).powf(1.0 / (beta - 1.0));
            value -= (beta - 1.0) / beta * z * g;
        }
    }
    value
}

/// Grid search over the multipliers with successive zooming. Each round
/// scans `points^m` values on a box around the incumbent and halves the box.
pub fn dual_grid_search(a: &DMatrix<f64>, w: &[f64], beta: f64, points: usize, rounds: usize) -> Result<f64> {
    let m = a.nrows();
    if m == 0 || m > 3 {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: format!("grid search handles 1 to 3 constraints, got {m}"),
        });
    }
    // a single constraint has the closed-form maximiser; use it to size the box
    let row_max = (0..m)
        .map(|i| {
            let pairing: f64 = (0..a.ncols())
                .map(|j| {
                    let z = a[(i, j)];
                    (beta - 1.0) / beta * z * (z / (beta * w[j])).powf(1.0 / (beta - 1.0))
                })
                .sum();
            (1.0 / (pairing * beta / (beta - 1.0))).powf(beta - 1.0)
        })
        .fold(0.0, f64::max);
    let mut center = vec![row_max; m];
    let mut half = row_max * m as f64;
    let mut best = dual_value(a, w, beta, &center);
    let mut idx = vec![0usize; m];
    for _ in 0..rounds {
        let lo: Vec<f64> = center.iter().map(|c| (c - half).max(0.0)).collect();
        let step = 2.0 * half / (points - 1) as f64;
        let mut incumbent = center.clone();
        idx.iter_mut().for_each(|k| *k = 0);
        loop {
            let lambda: Vec<f64> = (0..m).map(|i| lo[i] + step * idx[i] as f64).collect();
            let v = dual_value(a, w, beta, &lambda);
            if v > best {
                best = v;
                incumbent = lambda;
            }
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        center = incumbent;
        half *= 0.5;
    }
    Ok(best)
}

/// `β = 2`: the dual is quadratic, so its maximum is found by enumerating
/// every active set and keeping the KKT point.
pub fn quadratic_active_sets(a: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    let m = a.nrows();
    if m == 0 || m > 12 {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: format!("active-set enumeration handles 1 to 12 constraints, got {m}"),
        });
    }
    let winv = DMatrix::from_diagonal(&DVector::from_iterator(w.len(), w.iter().map(|w| 1.0 / w)));
    let q = a * winv * a.transpose() * 0.5;
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let qs = DMatrix::from_fn(set.len(), set.len(), |r, c| q[(set[r], set[c])]);
        let Some(inv) = qs.try_inverse() else { continue };
        let ls = inv * DVector::from_element(set.len(), 1.0);
        if ls.iter().any(|v| *v <= 0.0) {
            continue;
        }
        let mut lambda = DVector::zeros(m);
        for (r, &i) in set.iter().enumerate() {
            lambda[i] = ls[r];
        }
        let grad = DVector::from_element(m, 1.0) - &q * &lambda;
        if (0..m).any(|i| mask & (1 << i) == 0 && grad[i] > 1e-12) {
            continue;
        }
        best = best.max(lambda.sum() - 0.5 * lambda.dot(&(&q * &lambda)));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible("no active set satisfies the KKT conditions".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_constraint_closed_form() {
        // one node, A = [a], w = [w]: cap = w (1/a)^β
        let a = DMatrix::from_element(1, 1, 0.5);
        let w = [0.2];
        for beta in [1.5, 2.0, 3.0] {
            let exact = 0.2 * 2f64.powf(beta);
            let grid = dual_grid_search(&a, &w, beta, 21, 60).unwrap();
            assert!((grid - exact).abs() < 1e-9 * exact, "{beta}: {grid} vs {exact}");
        }
        assert!((quadratic_active_sets(&a, &w).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn oracles_agree_at_beta_two() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.3, 0.1, 0.2, 0.8, 0.4]);
        let w = [0.1, 0.2, 0.3];
        let grid = dual_grid_search(&a, &w, 2.0, 21, 60).unwrap();
        let exact = quadratic_active_sets(&a, &w).unwrap();
        assert!((grid - exact).abs() < 1e-9 * exact);
    }
}
