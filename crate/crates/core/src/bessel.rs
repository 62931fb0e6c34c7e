//! Bessel kernel `G_α` through its heat-semigroup subordination
//! `G_α(r) = (4π)^{-N/2}/Γ(α/2) ∫_0^∞ t^{(α-N)/2-1} e^{-r²/(4t)-t} dt`.

use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};

pub const DEFAULT_BESSEL_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselKernel {
    alpha: f64,
    dim: usize,
    points: usize,
    prefactor: f64,
}

impl BesselKernel {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        Self::with_points(alpha, dim, DEFAULT_BESSEL_POINTS)
    }

    pub fn with_points(alpha: f64, dim: usize, points: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(invalid("alpha", format!("need 0 < α < N = {dim}, got {alpha}")));
        }
        if points < 16 {
            return Err(invalid("points", format!("need at least 16, got {points}")));
        }
        let prefactor = (4.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0) / gamma(alpha / 2.0);
        Ok(BesselKernel {
            alpha,
            dim,
            points,
            prefactor,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Trapezoid rule in `ln t`. The integrand decays double-exponentially
    /// at both ends, so the rule converges geometrically.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("r", format!("kernel is singular at r = {r}")));
        }
        let lo = (r * r / 4.0).ln() - 5.0;
        let hi = (2.0 * r + 60.0).ln();
        let n = self.points;
        let step = (hi - lo) / (n - 1) as f64;
        let e = (self.alpha - self.dim as f64) / 2.0;
        let mut sum = 0.0;
        for k in 0..n {
            let u = lo + k as f64 * step;
            let t = u.exp();
            let f = (e * u - r * r / (4.0 * t) - t).exp();
            sum += if k == 0 || k == n - 1 { 0.5 * f } else { f };
        }
        Ok(self.prefactor * sum * step)
    }
}

/// `G_α(r)` in dimension `dim` with the default quadrature.
pub fn bessel_kernel(alpha: f64, dim: usize, r: f64) -> Result<f64> {
    BesselKernel::new(alpha, dim)?.eval(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use std::f64::consts::PI;

    #[test]
    fn three_dim_closed_form() {
        // G_2 in ℝ³ is the Yukawa kernel e^{-r}/(4πr)
        for r in [1e-3, 0.1, 1.0, 5.0, 15.0] {
            let v = bessel_kernel(2.0, 3, r).unwrap();
            let exact = (-r).exp() / (4.0 * PI * r);
            assert!((v - exact).abs() < 1e-10 * exact, "r={r}: {v} vs {exact}");
        }
    }

    #[test]
    fn shape_properties() {
        let k = BesselKernel::new(1.0, 2).unwrap();
        let (g1, g2, g4) = (k.eval(1.0).unwrap(), k.eval(2.0).unwrap(), k.eval(4.0).unwrap());
        assert!(g1 > g2 && g2 > g4);
        let slope = (k.eval(1e-2).unwrap() / k.eval(1e-3).unwrap()).ln() / 10f64.ln();
        assert!((slope - (1.0 - 2.0)).abs() < 0.05);
        assert!(k.eval(20.0).unwrap() / k.eval(10.0).unwrap() < (-5.0f64).exp());
        assert!(k.eval(0.0).is_err());
        assert!(BesselKernel::new(2.0, 2).is_err());
    }

    #[test]
    fn unit_mass_in_the_plane() {
        let k = BesselKernel::new(1.2, 2).unwrap();
        // ∫_{ℝ²} G = 2π ∫ G(r) r dr; substitute r = e^x
        let (total, _) = integrate(
            |x: f64| {
                let r = x.exp();
                2.0 * PI * k.eval(r).unwrap() * r * r
            },
            -30.0,
            4.0,
            1e-12,
            1e-10,
        );
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}
