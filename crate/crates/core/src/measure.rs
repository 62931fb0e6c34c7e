//! Signed measures carried by the interior nodes: atoms plus a nodal density.

use serde::{Deserialize, Serialize};

use crate::domain::{distance, DiscreteDomain, Point};
use crate::error::{Error, Result};

/// A signed measure on the grid with no mass on the exterior collar.
///
/// The mass carried by node `i` is `atom_i + density_i · w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureData {
    atoms: Vec<(usize, f64)>,
    density: Vec<f64>,
}

impl MeasureData {
    pub fn zero(n: usize) -> Self {
        MeasureData {
            atoms: Vec::new(),
            density: vec![0.0; n],
        }
    }

    pub fn from_density(domain: &DiscreteDomain, density: Vec<f64>) -> Result<Self> {
        if density.len() != domain.n_interior() {
            return Err(Error::InvalidMeasure(format!(
                "density has {} values, domain has {} interior nodes",
                density.len(),
                domain.n_interior()
            )));
        }
        if density.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite density".into()));
        }
        Ok(MeasureData {
            atoms: Vec::new(),
            density,
        })
    }

    pub fn from_parts(domain: &DiscreteDomain, atoms: Vec<(usize, f64)>, density: Vec<f64>) -> Result<Self> {
        let mut m = Self::from_density(domain, density)?;
        for (i, mass) in atoms {
            m.add_atom(i, mass)?;
        }
        Ok(m)
    }

    /// Dirac mass placed wholly on the interior node nearest to `at`.
    pub fn dirac(domain: &DiscreteDomain, at: &Point, mass: f64) -> Self {
        let mut m = Self::zero(domain.n_interior());
        let i = domain.nearest_node(at);
        m.atoms.push((i, mass));
        m
    }

    /// Uniform density on the nodes of `B_radius(center)`, normalised so the
    /// nodal masses sum to `mass`.
    pub fn uniform_ball(domain: &DiscreteDomain, center: &Point, radius: f64, mass: f64) -> Result<Self> {
        let inside: Vec<usize> = (0..domain.n_interior())
            .filter(|&i| distance(domain.point(i), center) < radius)
            .collect();
        let vol: f64 = inside.iter().map(|&i| domain.weight(i)).sum();
        if vol == 0.0 {
            return Err(Error::InvalidMeasure(format!("ball of radius {radius} contains no node")));
        }
        let mut density = vec![0.0; domain.n_interior()];
        for &i in &inside {
            density[i] = mass / vol;
        }
        Self::from_density(domain, density)
    }

    /// Lebesgue measure restricted to Ω, scaled by `c`.
    pub fn lebesgue(domain: &DiscreteDomain, c: f64) -> Self {
        MeasureData {
            atoms: Vec::new(),
            density: vec![c; domain.n_interior()],
        }
    }

    pub fn add_atom(&mut self, node: usize, mass: f64) -> Result<()> {
        if node >= self.density.len() {
            return Err(Error::InvalidMeasure(format!(
                "atom on node {node} outside the {} interior nodes",
                self.density.len()
            )));
        }
        if !mass.is_finite() {
            return Err(Error::InvalidMeasure("non-finite atom mass".into()));
        }
        self.atoms.push((node, mass));
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.density.len()
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(|(_, m)| *m != 0.0)
    }

    /// Combined mass carried by each node.
    pub fn node_masses(&self, domain: &DiscreteDomain) -> Vec<f64> {
        let mut m: Vec<f64> = self.density.iter().zip(domain.weights()).map(|(d, w)| d * w).collect();
        for &(i, a) in &self.atoms {
            m[i] += a;
        }
        m
    }

    pub fn total_mass(&self, domain: &DiscreteDomain) -> f64 {
        self.node_masses(domain).iter().sum()
    }

    /// |μ|(Ω) under the per-node Jordan decomposition.
    pub fn total_variation(&self, domain: &DiscreteDomain) -> f64 {
        self.node_masses(domain).iter().map(|m| m.abs()).sum()
    }

    pub fn is_nonnegative(&self, domain: &DiscreteDomain) -> bool {
        self.node_masses(domain).iter().all(|m| *m >= 0.0)
    }

    fn restricted_by_sign(&self, domain: &DiscreteDomain, positive: bool) -> MeasureData {
        let masses = self.node_masses(domain);
        let keep = |i: usize| if positive { masses[i] > 0.0 } else { masses[i] < 0.0 };
        let sign = if positive { 1.0 } else { -1.0 };
        MeasureData {
            atoms: self.atoms.iter().filter(|(i, _)| keep(*i)).map(|&(i, a)| (i, sign * a)).collect(),
            density: self
                .density
                .iter()
                .enumerate()
                .map(|(i, d)| if keep(i) { sign * d } else { 0.0 })
                .collect(),
        }
    }

    /// μ⁺: the nodes whose combined mass is positive, with their data kept.
    pub fn positive_part(&self, domain: &DiscreteDomain) -> MeasureData {
        self.restricted_by_sign(domain, true)
    }

    /// μ⁻: the nodes whose combined mass is negative, sign flipped.
    pub fn negative_part(&self, domain: &DiscreteDomain) -> MeasureData {
        self.restricted_by_sign(domain, false)
    }

    /// |μ| = μ⁺ + μ⁻.
    pub fn abs(&self, domain: &DiscreteDomain) -> MeasureData {
        self.positive_part(domain).plus(&self.negative_part(domain))
    }

    pub fn scaled(&self, t: f64) -> MeasureData {
        MeasureData {
            atoms: self.atoms.iter().map(|&(i, a)| (i, t * a)).collect(),
            density: self.density.iter().map(|d| t * d).collect(),
        }
    }

    pub fn plus(&self, other: &MeasureData) -> MeasureData {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        MeasureData {
            atoms,
            density: self.density.iter().zip(&other.density).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn minus(&self, other: &MeasureData) -> MeasureData {
        self.plus(&other.scaled(-1.0))
    }

    /// Adds a nodal density `f` (values per unit volume).
    pub fn with_added_density(&self, f: &[f64]) -> MeasureData {
        MeasureData {
            atoms: self.atoms.clone(),
            density: self.density.iter().zip(f).map(|(a, b)| a + b).collect(),
        }
    }

    /// Restriction `μ⌊E` to the nodes selected by `keep`.
    pub fn restricted<F: Fn(usize) -> bool>(&self, keep: F) -> MeasureData {
        MeasureData {
            atoms: self.atoms.iter().copied().filter(|(i, _)| keep(*i)).collect(),
            density: self
                .density
                .iter()
                .enumerate()
                .map(|(i, d)| if keep(i) { *d } else { 0.0 })
                .collect(),
        }
    }

    /// Mollification `μ_n = ρ_n * μ` by a truncated Gaussian bump of radius
    /// `1/n`, normalised to unit discrete mass over the interior nodes.
    ///
    /// Returns the mollified measure (pure density) and `false`, or the
    /// input unchanged and `true` when the bump radius is below the grid
    /// spacing.
    pub fn mollify(&self, domain: &DiscreteDomain, n: usize) -> Result<(MeasureData, bool)> {
        if n == 0 {
            return Err(crate::error::invalid("n", "smoothing index must be at least 1"));
        }
        let radius = 1.0 / n as f64;
        if radius < domain.spacing() {
            return Ok((self.clone(), true));
        }
        let sigma = 0.5 * radius;
        let bump = |d: f64| if d < radius { (-0.5 * (d / sigma).powi(2)).exp() } else { 0.0 };
        let masses = self.node_masses(domain);
        let mut density = vec![0.0; domain.n_interior()];
        for (j, &m) in masses.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let xj = domain.point(j);
            let support: Vec<(usize, f64)> = (0..domain.n_interior())
                .filter_map(|i| {
                    let b = bump(distance(domain.point(i), xj));
                    (b > 0.0).then_some((i, b))
                })
                .collect();
            let z: f64 = support.iter().map(|&(i, b)| b * domain.weight(i)).sum();
            for (i, b) in support {
                density[i] += m * b / z;
            }
        }
        Ok((
            MeasureData {
                atoms: Vec::new(),
                density,
            },
            false,
        ))
    }

    /// CSV dump `index,x[,y],mass` of the combined nodal masses.
    pub fn to_csv(&self, domain: &DiscreteDomain) -> String {
        let masses = self.node_masses(domain);
        let mut out = String::from(if domain.dim() == 1 { "index,x,mass\n" } else { "index,x,y,mass\n" });
        for (i, (p, m)) in domain.points().iter().zip(&masses).enumerate() {
            if domain.dim() == 1 {
                out.push_str(&format!("{i},{:.16e},{:.16e}\n", p[0], m));
            } else {
                out.push_str(&format!("{i},{:.16e},{:.16e},{:.16e}\n", p[0], p[1], m));
            }
        }
        out
    }
}

/// Grid-independent description of a measure, rebuilt on any grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureDescriptor {
    Zero,
    Dirac {
        at: Point,
        #[serde(default = "unit")]
        mass: f64,
    },
    UniformBall {
        center: Point,
        radius: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    /// Constant density on Ω.
    Lebesgue {
        #[serde(default = "unit")]
        density: f64,
    },
    /// `count` atoms of equal mass at nodes drawn from the seeded generator,
    /// with signs drawn too when `signed`.
    RandomAtoms {
        count: usize,
        #[serde(default = "unit")]
        total_mass: f64,
        #[serde(default)]
        signed: bool,
        seed: u64,
    },
    /// Linear combination `Σ c_k μ_k`.
    Sum {
        parts: Vec<(f64, MeasureDescriptor)>,
    },
}

fn unit() -> f64 {
    1.0
}

impl MeasureDescriptor {
    pub fn build(&self, domain: &DiscreteDomain) -> Result<MeasureData> {
        use rand::{Rng, SeedableRng};
        let n = domain.n_interior();
        Ok(match self {
            MeasureDescriptor::Zero => MeasureData::zero(n),
            MeasureDescriptor::Dirac { at, mass } => MeasureData::dirac(domain, at, *mass),
            MeasureDescriptor::UniformBall { center, radius, mass } => MeasureData::uniform_ball(domain, center, *radius, *mass)?,
            MeasureDescriptor::Lebesgue { density } => MeasureData::lebesgue(domain, *density),
            MeasureDescriptor::RandomAtoms {
                count,
                total_mass,
                signed,
                seed,
            } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let mut m = MeasureData::zero(n);
                for _ in 0..*count {
                    let node = rng.gen_range(0..n);
                    let sign = if *signed && rng.gen_bool(0.5) { -1.0 } else { 1.0 };
                    m.add_atom(node, sign * total_mass / *count as f64)?;
                }
                m
            }
            MeasureDescriptor::Sum { parts } => {
                let mut m = MeasureData::zero(n);
                for (c, part) in parts {
                    m = m.plus(&part.build(domain)?.scaled(*c));
                }
                m
            }
        })
    }

    /// True when the description contains a point mass.
    pub fn has_atoms(&self) -> bool {
        match self {
            MeasureDescriptor::Dirac { mass, .. } => *mass != 0.0,
            MeasureDescriptor::RandomAtoms { count, total_mass, .. } => *count > 0 && *total_mass != 0.0,
            MeasureDescriptor::Sum { parts } => parts.iter().any(|(c, m)| *c != 0.0 && m.has_atoms()),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;

    fn grid() -> DiscreteDomain {
        DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 0.05, None).unwrap()
    }

    #[test]
    fn jordan_parts_reconstruct_exactly() {
        let d = grid();
        let n = d.n_interior();
        let density: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.7).sin()).collect();
        let mut mu = MeasureData::from_density(&d, density).unwrap();
        mu.add_atom(3, -2.0).unwrap();
        mu.add_atom(7, 0.5).unwrap();
        let plus = mu.positive_part(&d);
        let minus = mu.negative_part(&d);
        let rebuilt = plus.minus(&minus);
        assert_eq!(rebuilt.node_masses(&d), mu.node_masses(&d));
        assert!(plus.node_masses(&d).iter().all(|m| *m >= 0.0));
        assert!(minus.node_masses(&d).iter().all(|m| *m >= 0.0));
        let tv = mu.total_variation(&d);
        assert!((tv - plus.total_mass(&d) - minus.total_mass(&d)).abs() < 1e-12);
        // disjoint carriers
        for (a, b) in plus.node_masses(&d).iter().zip(minus.node_masses(&d)) {
            assert!(*a == 0.0 || b == 0.0);
        }
    }

    #[test]
    fn mollify_zero_is_zero() {
        let d = grid();
        let (m, flag) = MeasureData::zero(d.n_interior()).mollify(&d, 4).unwrap();
        assert!(!flag);
        assert!(m.node_masses(&d).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mollified_dirac_is_local_and_mass_preserving() {
        let d = grid();
        let mu = MeasureData::dirac(&d, &[0.5, 0.0], 1.0);
        let (m, flag) = mu.mollify(&d, 8).unwrap();
        assert!(!flag);
        let masses = m.node_masses(&d);
        let total: f64 = masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        for (i, v) in masses.iter().enumerate() {
            if *v > 0.0 {
                assert!((d.point(i)[0] - 0.5).abs() < 1.0 / 8.0);
            }
        }
        assert!(m.total_variation(&d) <= mu.total_variation(&d) + 1e-14);
    }

    #[test]
    fn mollify_below_spacing_is_flagged() {
        let d = grid();
        let mu = MeasureData::dirac(&d, &[0.5, 0.0], 1.0);
        let (m, flag) = mu.mollify(&d, 100).unwrap();
        assert!(flag);
        assert_eq!(m, mu);
    }

    #[test]
    fn atoms_off_grid_rejected() {
        let d = grid();
        let mut mu = MeasureData::zero(d.n_interior());
        assert!(mu.add_atom(d.n_interior(), 1.0).is_err());
    }
}

#[cfg(test)]
mod descriptor_tests {
    use super::*;
    use crate::domain::Shape;

    #[test]
    fn descriptors_build_and_roundtrip() {
        let d = DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 0.05, None).unwrap();
        let desc = MeasureDescriptor::Sum {
            parts: vec![
                (2.0, MeasureDescriptor::Dirac { at: [0.5, 0.0], mass: 1.0 }),
                (-1.0, MeasureDescriptor::Lebesgue { density: 1.0 }),
            ],
        };
        let m = desc.build(&d).unwrap();
        assert!((m.total_mass(&d) - (2.0 - d.volume())).abs() < 1e-12);
        assert!(desc.has_atoms());
        let json = serde_json::to_string(&desc).unwrap();
        assert_eq!(serde_json::from_str::<MeasureDescriptor>(&json).unwrap(), desc);
        let r = MeasureDescriptor::RandomAtoms {
            count: 5,
            total_mass: 2.0,
            signed: true,
            seed: 7,
        };
        assert_eq!(r.build(&d).unwrap(), r.build(&d).unwrap());
        assert!((r.build(&d).unwrap().total_variation(&d) - 2.0).abs() < 1e-12);
    }
}
