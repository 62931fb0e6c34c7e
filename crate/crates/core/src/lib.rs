//! Discrete fractional p-Laplace problems with measure data.
//!
//! The crate covers collocation grids and signed measures, nonlocal kernels
//! and energies, a convex minimization solver for `Lu + g(u) = μ`, truncated
//! Wolff potentials, Bessel kernels and capacities, and drivers for the
//! absorption and source problems.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod absorption;
pub mod bessel;
pub mod capacity;
pub mod conditions;
pub mod domain;
pub mod error;
pub mod field;
pub mod fit;
pub mod gridop;
pub mod kernel;
pub mod lattice;
pub mod measure;
pub mod nonlinearity;
pub mod norms;
pub mod quadrature;
pub mod solver;
pub mod source;
pub mod wolff;

pub use domain::{DiscreteDomain, DomainDescriptor, Point, Shape};
pub use error::{Error, Result};
pub use field::SolutionField;
pub use kernel::{assemble_kernel, KernelSpec, KernelTable, Profile};
pub use measure::MeasureData;
