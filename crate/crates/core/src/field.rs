use serde::{Deserialize, Serialize};

use crate::domain::DiscreteDomain;
use crate::error::{Error, Result};

/// Nodal values on the interior nodes of a [`DiscreteDomain`]; the field is
/// identically zero on the exterior collar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    values: Vec<f64>,
}

impl SolutionField {
    pub fn zeros(n: usize) -> Self {
        SolutionField { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        SolutionField { values: vec![c; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value {v}")));
        }
        Ok(SolutionField { values })
    }

    pub fn from_fn<F: Fn(usize) -> f64>(n: usize, f: F) -> Self {
        SolutionField {
            values: (0..n).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> SolutionField {
        SolutionField {
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> SolutionField {
        self.map(|v| t * v)
    }

    pub fn sub(&self, other: &SolutionField) -> SolutionField {
        SolutionField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    /// `T_k(u) = max(-k, min(u, k))`.
    pub fn truncated(&self, k: f64) -> SolutionField {
        self.map(|v| v.clamp(-k, k))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Σ |u_i|^q w_i`.
    pub fn lebesgue_integral(&self, domain: &DiscreteDomain, q: f64) -> f64 {
        self.values.iter().zip(domain.weights()).map(|(v, w)| v.abs().powf(q) * w).sum()
    }

    pub fn l1_norm(&self, domain: &DiscreteDomain) -> f64 {
        self.lebesgue_integral(domain, 1.0)
    }

    pub(crate) fn check_len(&self, domain: &DiscreteDomain) -> Result<()> {
        if self.values.len() != domain.n_interior() {
            return Err(Error::Mismatch(format!(
                "field has {} values, domain has {} interior nodes",
                self.values.len(),
                domain.n_interior()
            )));
        }
        Ok(())
    }

    /// CSV dump `index,x[,y],value` with 17 significant digits.
    pub fn to_csv(&self, domain: &DiscreteDomain) -> String {
        let mut out = String::from(if domain.dim() == 1 {
            "index,x,value\n"
        } else {
            "index,x,y,value\n"
        });
        for (i, (p, v)) in domain.points().iter().zip(&self.values).enumerate() {
            if domain.dim() == 1 {
                out.push_str(&format!("{i},{:.16e},{:.16e}\n", p[0], v));
            } else {
                out.push_str(&format!("{i},{:.16e},{:.16e},{:.16e}\n", p[0], p[1], v));
            }
        }
        out
    }
}
