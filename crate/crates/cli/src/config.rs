//! Run documents. One JSON file describes one experiment; the `kind` tag
//! selects the driver.

use fraclab_core::absorption::AbsorptionRun;
use fraclab_core::measure::MeasureDescriptor;
use fraclab_core::{DomainDescriptor, KernelSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Output subdirectory; defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    PotentialSuite(PotentialSuite),
    NormSuite(NormSuite),
    ComparisonSuite(ComparisonSuite),
    EstimateSuite(EstimateSuite),
    GradientSuite(GradientSuite),
    SubcriticalSuite(SubcriticalSuite),
    LinearSolve(LinearSolve),
    Absorption(AbsorptionRun),
    PowerAbsorption(AbsorptionRun),
    SourceFixedPoint(SourceFixedPoint),
    SourceMonotone(SourceMonotone),
    CapacitySuite(CapacitySuite),
    CompositionScaling(CompositionScaling),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::PotentialSuite(_) => "potential-suite",
            Experiment::NormSuite(_) => "norm-suite",
            Experiment::ComparisonSuite(_) => "comparison-suite",
            Experiment::EstimateSuite(_) => "estimate-suite",
            Experiment::GradientSuite(_) => "gradient-suite",
            Experiment::SubcriticalSuite(_) => "subcritical-suite",
            Experiment::LinearSolve(_) => "linear-solve",
            Experiment::Absorption(_) => "absorption",
            Experiment::PowerAbsorption(_) => "power-absorption",
            Experiment::SourceFixedPoint(_) => "source-fixed-point",
            Experiment::SourceMonotone(_) => "source-monotone",
            Experiment::CapacitySuite(_) => "capacity-suite",
            Experiment::CompositionScaling(_) => "composition-scaling",
        }
    }
}

fn exponents() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

/// Closed-form Wolff values, plus monotonicity and quasi-additivity on
/// random densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSuite {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_random_measures")]
    pub random_measures: usize,
}

fn default_rel_tol() -> f64 {
    1e-6
}

fn default_random_measures() -> usize {
    10
}

/// Equinorm sandwich and Chebyshev bound on random fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSuite {
    #[serde(default = "default_fields")]
    pub fields: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "exponents")]
    pub exponents: Vec<f64>,
}

fn default_fields() -> usize {
    100
}

fn default_nodes() -> usize {
    200
}

/// Ordered data pairs `μ ≤ ν` on a 1D grid; checks `u_μ ≤ u_ν` and the
/// truncation-energy bound on every solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSuite {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "exponents")]
    pub exponents: Vec<f64>,
    #[serde(default = "default_comparison_s")]
    pub s: f64,
    /// Absorption exponent of `g`; `None` means `g = 0`.
    #[serde(default)]
    pub kappa: Option<f64>,
}

fn default_pairs() -> usize {
    20
}

fn default_comparison_s() -> f64 {
    0.3
}

/// Weak-norm estimate ratio over a measure family on two grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSuite {
    pub domain: DomainDescriptor,
    pub kernel: KernelSpec,
    pub measures: Vec<MeasureDescriptor>,
    #[serde(default = "default_solve_tol")]
    pub tol: f64,
}

fn default_solve_tol() -> f64 {
    1e-9
}

/// Finite differences of the energy against the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSuite {
    #[serde(default = "default_gradient_fields")]
    pub fields: usize,
    #[serde(default = "default_gradient_nodes")]
    pub nodes: usize,
    #[serde(default = "exponents")]
    pub exponents: Vec<f64>,
    #[serde(default = "default_gradient_s")]
    pub s: f64,
    #[serde(default = "default_gradient_tol")]
    pub rel_tol: f64,
}

fn default_gradient_fields() -> usize {
    20
}

fn default_gradient_nodes() -> usize {
    40
}

fn default_gradient_s() -> f64 {
    0.3
}

fn default_gradient_tol() -> f64 {
    1e-5
}

/// Quadrature verdict against the sign of `κ - N(p-1)/(N-sp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalSuite {
    #[serde(default = "default_triples")]
    pub triples: usize,
    /// Samples with `|κ/κ_c - 1|` below this are redrawn.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_triples() -> usize {
    50
}

fn default_margin() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub expected: f64,
    /// Relative tolerance on the fitted slope.
    pub rel_tol: f64,
}

/// `Lu = μ`, with an optional radial slope check around a single atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSolve {
    pub domain: DomainDescriptor,
    pub kernel: KernelSpec,
    pub measure: MeasureDescriptor,
    #[serde(default = "default_solve_tol")]
    pub tol: f64,
    #[serde(default)]
    pub slope: Option<SlopeCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRun {
    pub kappa: f64,
    /// Data size as a multiple of `ρ₀`.
    pub rho_multiple: f64,
    pub tau: MeasureDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFixedPoint {
    pub domain: DomainDescriptor,
    pub kernel: KernelSpec,
    pub kappa: f64,
    #[serde(default = "default_coefficient")]
    pub coefficient: f64,
    pub tau: MeasureDescriptor,
    /// `ρ` as a fraction of `ρ₀`.
    #[serde(default = "default_rho_fraction")]
    pub rho_fraction: f64,
    #[serde(default = "default_fixed_point_iter")]
    pub max_iter: usize,
    #[serde(default = "default_fixed_point_tol")]
    pub tol: f64,
    #[serde(default)]
    pub escape: Option<EscapeRun>,
}

fn default_coefficient() -> f64 {
    1.0
}

fn default_rho_fraction() -> f64 {
    0.5
}

fn default_fixed_point_iter() -> usize {
    200
}

fn default_fixed_point_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMonotone {
    pub domain: DomainDescriptor,
    pub kernel: KernelSpec,
    pub kappa: f64,
    pub tau: MeasureDescriptor,
    /// `ρ` as a fraction of the admissible bound.
    #[serde(default = "default_rho_fraction")]
    pub rho_fraction: f64,
    #[serde(default = "default_monotone_iter")]
    pub max_iter: usize,
    /// Rerun at this multiple of the admissible bound, expecting the
    /// barrier to abort the iteration.
    #[serde(default)]
    pub overload_multiple: Option<f64>,
}

fn default_monotone_iter() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageCase {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySuite {
    /// Bessel order for the oracle and set-function checks.
    #[serde(default = "default_capacity_alpha")]
    pub alpha: f64,
    #[serde(default = "exponents")]
    pub betas: Vec<f64>,
    /// Random set pairs per exponent for monotonicity and subadditivity.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_capacity_tol")]
    pub rel_tol: f64,
    pub shrinkage: Vec<ShrinkageCase>,
    pub radii: Vec<f64>,
}

fn default_capacity_alpha() -> f64 {
    1.0
}

fn default_capacity_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionScaling {
    pub domain: DomainDescriptor,
    pub alpha: f64,
    pub p: f64,
    pub kappa: f64,
    pub tau: MeasureDescriptor,
    pub scales: Vec<f64>,
    #[serde(default = "default_scaling_tol")]
    pub rel_tol: f64,
}

fn default_scaling_tol() -> f64 {
    0.01
}
