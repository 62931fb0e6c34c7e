//! Pairwise kernel tables, the discrete nonlocal operator and its energies.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::domain::{distance, unit_sphere_area, DiscreteDomain};
use crate::error::{invalid, Error, Result};
use crate::field::SolutionField;
use crate::norms::gagliardo_power_sum;

/// Radial modulation of the pure power kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `K(x, y) = |x - y|^{-N-sp}`.
    #[default]
    Power,
    /// `K(x, y) = Λ_K^{cos(2π|x-y|/wavelength)} |x - y|^{-N-sp}`.
    Cosine { wavelength: f64 },
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub s: f64,
    pub p: f64,
    #[serde(default = "default_lambda")]
    pub lambda_k: f64,
    #[serde(default)]
    pub profile: Profile,
    /// Constant multiplying the kernel; `None` means 1.
    #[serde(default)]
    pub c_ns: Option<f64>,
}

impl KernelSpec {
    pub fn power(s: f64, p: f64) -> Self {
        KernelSpec {
            s,
            p,
            lambda_k: 1.0,
            profile: Profile::Power,
            c_ns: None,
        }
    }

    /// `C_{N,s} = 2^{2s} π^{-N/2} s Γ((N+2s)/2) / Γ(1-s)`.
    pub fn normalization_constant(dim: usize, s: f64) -> f64 {
        let n = dim as f64;
        2f64.powf(2.0 * s) * PI.powf(-n / 2.0) * s * gamma((n + 2.0 * s) / 2.0) / gamma(1.0 - s)
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// `N + sp`.
    pub fn order(&self, dim: usize) -> f64 {
        dim as f64 + self.sp()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(invalid("s", format!("need 0 < s < 1, got {}", self.s)));
        }
        if !(self.p > 1.0 && self.p < dim as f64 / self.s) {
            return Err(invalid("p", format!("need 1 < p < N/s = {}, got {}", dim as f64 / self.s, self.p)));
        }
        if !(self.lambda_k >= 1.0 && self.lambda_k.is_finite()) {
            return Err(invalid("lambda_k", format!("need Λ_K ≥ 1, got {}", self.lambda_k)));
        }
        if let Profile::Cosine { wavelength } = self.profile {
            if !(wavelength > 0.0 && wavelength.is_finite()) {
                return Err(invalid("wavelength", format!("must be positive, got {wavelength}")));
            }
        }
        let c = self.c_ns.unwrap_or(1.0);
        if !(c > 0.0) {
            return Err(invalid("c_ns", format!("must be positive, got {c}")));
        }
        let (lo, hi) = self.factor_range();
        if lo < 1.0 / self.lambda_k * (1.0 - 1e-12) || hi > self.lambda_k * (1.0 + 1e-12) {
            return Err(invalid(
                "lambda_k",
                format!("kernel factor range [{lo}, {hi}] exceeds [1/Λ_K, Λ_K] with Λ_K = {}", self.lambda_k),
            ));
        }
        Ok(())
    }

    /// Bounds of `K(x,y) |x-y|^{N+sp}` over all distances.
    pub fn factor_range(&self) -> (f64, f64) {
        let c = self.c_ns.unwrap_or(1.0);
        match self.profile {
            Profile::Power => (c, c),
            Profile::Cosine { .. } => (c / self.lambda_k, c * self.lambda_k),
        }
    }

    /// `K(x,y) |x-y|^{N+sp}` at distance `r`.
    pub fn factor(&self, r: f64) -> f64 {
        let c = self.c_ns.unwrap_or(1.0);
        match self.profile {
            Profile::Power => c,
            Profile::Cosine { wavelength } => c * self.lambda_k.powf((2.0 * PI * r / wavelength).cos()),
        }
    }

    pub fn kernel(&self, r: f64, dim: usize) -> f64 {
        self.factor(r) * r.powf(-self.order(dim))
    }

    /// Upper bound for the part of `Σ_j |u_i|^{p-1} K(x_i, x_j) w_j` lost by
    /// truncating the collar at distance `r_ext`:
    /// `Λ_K sup|u|^{p-1} σ_N r_ext^{-sp} / (sp)`.
    pub fn collar_truncation_bound(&self, dim: usize, r_ext: f64, sup_u: f64) -> f64 {
        let (_, hi) = self.factor_range();
        hi * sup_u.powf(self.p - 1.0) * unit_sphere_area(dim) * r_ext.powf(-self.sp()) / self.sp()
    }
}

/// Dense weighted kernel `k_ij = K(x_i, x_j) w_i w_j` on interior pairs, with
/// the collar folded into per-node sums `e_i = Σ_{j exterior} K(x_i, x_j) w_i w_j`.
pub struct KernelTable {
    n: usize,
    dim: usize,
    spec: KernelSpec,
    weights: Vec<f64>,
    pairs: Vec<f64>,
    exterior: Vec<f64>,
    r_ext: f64,
    linear_factor: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl std::fmt::Debug for KernelTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelTable")
            .field("n", &self.n)
            .field("dim", &self.dim)
            .field("spec", &self.spec)
            .finish()
    }
}

/// Largest interior node count accepted by the dense table.
pub const DENSE_NODE_CAP: usize = 6000;

pub fn assemble_kernel(domain: &DiscreteDomain, spec: &KernelSpec) -> Result<KernelTable> {
    spec.validate(domain.dim())?;
    let n = domain.n_interior();
    if n > DENSE_NODE_CAP {
        return Err(invalid(
            "domain",
            format!("{n} interior nodes exceed the dense kernel cap of {DENSE_NODE_CAP}"),
        ));
    }
    let dim = domain.dim();
    let pts = domain.points();
    let w = domain.weights();
    let mut pairs = vec![0.0; n * n];
    let coincident: Vec<Option<usize>> = pairs
        .par_chunks_mut(n.max(1))
        .enumerate()
        .map(|(i, row)| {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let r = distance(&pts[i], &pts[j]);
                if r == 0.0 {
                    return Some(j);
                }
                row[j] = spec.kernel(r, dim) * w[i] * w[j];
            }
            None
        })
        .collect();
    if let Some((i, j)) = coincident.iter().enumerate().find_map(|(i, c)| c.map(|j| (i, j))) {
        return Err(Error::CoincidentNodes(i.min(j), i.max(j)));
    }
    let ext = domain.exterior_sums(|r| spec.kernel(r, dim));
    let exterior = ext.iter().zip(w).map(|(e, wi)| e * wi).collect();
    Ok(KernelTable {
        n,
        dim,
        spec: *spec,
        weights: w.to_vec(),
        pairs,
        exterior,
        r_ext: domain.r_ext(),
        linear_factor: OnceLock::new(),
    })
}

impl KernelTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pairs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.pairs[i * self.n..(i + 1) * self.n]
    }

    /// Collar coupling `e_i` of interior node `i`.
    pub fn exterior(&self, i: usize) -> f64 {
        self.exterior[i]
    }

    pub fn r_ext(&self) -> f64 {
        self.r_ext
    }

    /// Extremes of `k_ij / (|x_i-x_j|^{-N-sp} w_i w_j)` over the stored pairs.
    pub fn ellipticity_range(&self, domain: &DiscreteDomain) -> (f64, f64) {
        let order = self.spec.order(self.dim);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let r = distance(domain.point(i), domain.point(j));
                    let pure = r.powf(-order) * self.weights[i] * self.weights[j];
                    let ratio = self.pair(i, j) / pure;
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
            }
        }
        (lo, hi)
    }

    pub(crate) fn check(&self, u: &SolutionField) -> Result<()> {
        if u.len() != self.n {
            return Err(Error::Mismatch(format!(
                "field has {} values, kernel has {} nodes",
                u.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `Σ_j |d|^{p-2} d k_ij + |u_i|^{p-2} u_i e_i` with `d = u_i - u_j`.
    pub(crate) fn flux(&self, u: &[f64], p: f64) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let ui = u[i];
                let row = self.row(i);
                let mut acc = 0.0;
                for (j, &k) in row.iter().enumerate() {
                    if j != i {
                        acc += signed_pow(ui - u[j], p - 1.0) * k;
                    }
                }
                acc + signed_pow(ui, p - 1.0) * self.exterior[i]
            })
            .collect()
    }

    /// Stiffness matrix of the quadratic energy: gradient of `energy` at p = 2.
    pub(crate) fn linear_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let row = self.row(i);
            let mut diag = self.exterior[i];
            for j in 0..n {
                if j != i {
                    a[(i, j)] = -2.0 * row[j];
                    diag += row[j];
                }
            }
            a[(i, i)] = 2.0 * diag;
        }
        a
    }

    /// Cached Cholesky factor of [`Self::linear_matrix`].
    pub(crate) fn linear_factor(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.linear_factor.get_or_init(|| Cholesky::new(self.linear_matrix())).as_ref()
    }
}

/// `|t|^e sign(t)`.
pub fn signed_pow(t: f64, e: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.signum() * t.abs().powf(e)
    }
}

/// `(Lu)_i = Σ_{j≠i} |u_i-u_j|^{p-2}(u_i-u_j) k_ij / w_i`, the sum running
/// over interior and collar nodes.
pub fn apply_operator(table: &KernelTable, u: &SolutionField, p: f64) -> Result<SolutionField> {
    table.check(u)?;
    let flux = table.flux(u.values(), p);
    Ok(SolutionField::from_fn(table.n, |i| flux[i] / table.weights[i]))
}

/// `(1/p) Σ_{i≠j} |u_i-u_j|^p k_ij` over ordered pairs of all grid nodes.
pub fn energy(table: &KernelTable, u: &SolutionField, p: f64) -> Result<f64> {
    table.check(u)?;
    let v = u.values();
    let rows: Vec<f64> = (0..table.n)
        .into_par_iter()
        .map(|i| {
            let row = table.row(i);
            let mut acc = 0.0;
            for j in (i + 1)..table.n {
                acc += (v[i] - v[j]).abs().powf(p) * row[j];
            }
            acc + v[i].abs().powf(p) * table.exterior[i]
        })
        .collect();
    Ok(2.0 * rows.iter().sum::<f64>() / p)
}

/// Gradient of [`energy`], equal to `2 w_i (Lu)_i`: every unordered pair
/// appears twice in the ordered sum.
pub fn energy_gradient(table: &KernelTable, u: &SolutionField, p: f64) -> Result<Vec<f64>> {
    table.check(u)?;
    Ok(table.flux(u.values(), p).into_iter().map(|f| 2.0 * f).collect())
}

/// `Σ_{i≠j} |T_k u_i - T_k u_j|^p |x_i-x_j|^{-N-sp} w_i w_j` over all grid nodes.
pub fn truncation_energy(domain: &DiscreteDomain, u: &SolutionField, k: f64, spec: &KernelSpec) -> Result<f64> {
    if !(k > 0.0) {
        return Err(invalid("k", format!("truncation level must be positive, got {k}")));
    }
    gagliardo_power_sum(domain, &u.truncated(k), spec.s, spec.p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailValue {
    pub value: f64,
    /// No grid node lies outside `B_r(x)`.
    pub truncated: bool,
    /// Bound on the kernel mass beyond the collar, see
    /// [`KernelSpec::collar_truncation_bound`].
    pub collar_bound: f64,
}

/// `(r^{sp} Σ_{|x_j-x|≥r} |u_j|^{p-1} |x-x_j|^{-N-sp} w_j)^{1/(p-1)}`.
pub fn tail(domain: &DiscreteDomain, u: &SolutionField, x: usize, r: f64, spec: &KernelSpec) -> Result<TailValue> {
    u.check_len(domain)?;
    if !(r > 0.0) {
        return Err(invalid("r", format!("radius must be positive, got {r}")));
    }
    if x >= domain.n_interior() {
        return Err(invalid("x", format!("node {x} is not interior")));
    }
    let order = spec.order(domain.dim());
    let xp = *domain.point(x);
    let mut sum = 0.0;
    let mut outside = 0usize;
    for (j, (q, w)) in domain.points().iter().zip(domain.weights()).enumerate() {
        let d = distance(&xp, q);
        if d >= r {
            outside += 1;
            let v = u.values()[j];
            if v != 0.0 {
                sum += v.abs().powf(spec.p - 1.0) * d.powf(-order) * w;
            }
        }
    }
    if outside == 0 {
        domain.for_each_exterior(|q, _| {
            if distance(&xp, q) >= r {
                outside += 1;
            }
        });
    }
    let collar_bound = spec.collar_truncation_bound(domain.dim(), domain.r_ext(), u.max_abs());
    if outside == 0 {
        return Ok(TailValue {
            value: 0.0,
            truncated: true,
            collar_bound,
        });
    }
    Ok(TailValue {
        value: (r.powf(spec.sp()) * sum).powf(1.0 / (spec.p - 1.0)),
        truncated: false,
        collar_bound,
    })
}

/// `Σ_{i≠j} |u_i-u_j|^p / (d+|u_i|+|u_j|)^ξ |x_i-x_j|^{-N-sp} w_i w_j` over
/// all grid nodes.
pub fn weighted_energy(domain: &DiscreteDomain, u: &SolutionField, xi: f64, d: f64, spec: &KernelSpec) -> Result<f64> {
    u.check_len(domain)?;
    if !(xi > 1.0) {
        return Err(invalid("xi", format!("need ξ > 1, got {xi}")));
    }
    if !(d > 0.0) {
        return Err(invalid("d", format!("need d > 0, got {d}")));
    }
    let p = spec.p;
    let order = spec.order(domain.dim());
    let v = u.values();
    let pts = domain.points();
    let w = domain.weights();
    let rows: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..v.len() {
                if j != i {
                    let diff = (v[i] - v[j]).abs();
                    if diff > 0.0 {
                        acc += diff.powf(p) / (d + v[i].abs() + v[j].abs()).powf(xi) * distance(&pts[i], &pts[j]).powf(-order) * w[j];
                    }
                }
            }
            acc * w[i]
        })
        .collect();
    let ext = domain.exterior_sums(|r| r.powf(-order));
    let collar: f64 = (0..v.len())
        .map(|i| 2.0 * v[i].abs().powf(p) / (d + v[i].abs()).powf(xi) * ext[i] * w[i])
        .sum();
    Ok(rows.iter().sum::<f64>() + collar)
}
