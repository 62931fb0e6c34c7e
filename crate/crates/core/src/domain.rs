//! Collocation grids for a bounded open set Ω ⊂ ℝ^N (N = 1, 2) together with
//! an exterior collar on which every field vanishes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::Lattice;

/// A point of ℝ^N stored with two coordinates; the second is 0 when N = 1.
pub type Point = [f64; 2];

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Volume of the unit ball of ℝ^N.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unreachable!("dimension is validated to be 1 or 2"),
    }
}

/// Surface measure of the unit sphere of ℝ^N.
pub fn unit_sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => unreachable!("dimension is validated to be 1 or 2"),
    }
}

/// Geometry of Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Interval { lo: f64, hi: f64 },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn diam(&self) -> f64 {
        match *self {
            Shape::Interval { lo, hi } => hi - lo,
            Shape::Rectangle { lo, hi } => ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt(),
            Shape::Disk { radius, .. } => 2.0 * radius,
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Shape::Interval { lo, hi } => hi - lo,
            Shape::Rectangle { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn inner_distance(&self, p: &Point) -> f64 {
        match *self {
            Shape::Interval { lo, hi } => (p[0] - lo).min(hi - p[0]),
            Shape::Rectangle { lo, hi } => (p[0] - lo[0]).min(hi[0] - p[0]).min(p[1] - lo[1]).min(hi[1] - p[1]),
            Shape::Disk { center, radius } => radius - distance(p, &center),
        }
    }

    fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Shape::Interval { lo, hi } => ([lo, 0.0], [hi, 0.0]),
            Shape::Rectangle { lo, hi } => (lo, hi),
            Shape::Disk { center, radius } => ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]),
        }
    }

    fn anchor(&self) -> Point {
        match *self {
            Shape::Interval { lo, .. } => [lo, 0.0],
            Shape::Rectangle { lo, .. } => lo,
            Shape::Disk { center, .. } => center,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Interval { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            Shape::Rectangle { lo, hi } => lo.iter().chain(hi.iter()).all(|v| v.is_finite()) && hi[0] > lo[0] && hi[1] > lo[1],
            Shape::Disk { center, radius } => center.iter().all(|v| v.is_finite()) && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDomain(format!("degenerate shape {self:?}")))
        }
    }
}

/// JSON descriptor of a uniform-grid domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    #[serde(flatten)]
    pub shape: Shape,
    pub spacing: f64,
    /// Collar radius; defaults to four diameters.
    #[serde(default)]
    pub r_ext: Option<f64>,
}

#[derive(Debug, Clone)]
enum Exterior {
    Explicit { points: Vec<Point>, weights: Vec<f64> },
    Lattice(Lattice),
}

/// Interior collocation nodes with quadrature weights, plus the exterior
/// collar where fields are identically zero.
///
/// Interior nodes are indexed `0..n_interior()`; exterior nodes are never
/// indexed by fields or measures.
#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    dim: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
    exterior: Exterior,
    diam: f64,
    spacing: f64,
    r_ext: f64,
    shape: Option<Shape>,
}

impl DiscreteDomain {
    pub fn from_descriptor(desc: &DomainDescriptor) -> Result<Self> {
        Self::lattice(desc.shape.clone(), desc.spacing, desc.r_ext)
    }

    /// Uniform tensor grid of spacing `h` anchored at the shape's lower corner
    /// (or centre, for a disk). Nodes strictly inside Ω are interior; the
    /// collar covers the bounding box of Ω enlarged by `r_ext`.
    pub fn lattice(shape: Shape, h: f64, r_ext: Option<f64>) -> Result<Self> {
        shape.validate()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("spacing", format!("must be positive, got {h}")));
        }
        let diam = shape.diam();
        let r_ext = r_ext.unwrap_or(4.0 * diam);
        if r_ext < 2.0 * diam {
            return Err(invalid("r_ext", format!("collar {r_ext} is shorter than 2·diam = {}", 2.0 * diam)));
        }
        let dim = shape.dim();
        let origin = shape.anchor();
        let (blo, bhi) = shape.bounding_box();
        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for d in 0..dim {
            lo[d] = ((blo[d] - r_ext - origin[d]) / h).floor() as i64;
            hi[d] = ((bhi[d] + r_ext - origin[d]) / h).ceil() as i64;
        }
        let mut lattice = Lattice {
            dim,
            origin,
            h,
            lo,
            hi,
            interior: Vec::new(),
        };
        let tol = 1e-9 * h;
        let mut points = Vec::new();
        for b in lo[1]..=hi[1] {
            for a in lo[0]..=hi[0] {
                let p = lattice.position([a, b]);
                if shape.inner_distance(&p) > tol {
                    lattice.interior.push([a, b]);
                    points.push(p);
                }
            }
        }
        if points.is_empty() {
            return Err(Error::InvalidDomain(format!("spacing {h} leaves no interior node")));
        }
        let w = lattice.cell_volume();
        let weights = vec![w; points.len()];
        Ok(DiscreteDomain {
            dim,
            points,
            weights,
            exterior: Exterior::Lattice(lattice),
            diam,
            spacing: h,
            r_ext,
            shape: Some(shape),
        })
    }

    /// Domain from explicit node lists. `diam` is the interior point-set
    /// diameter and the spacing the smallest distance between any two nodes.
    pub fn from_points(
        dim: usize,
        interior: Vec<Point>,
        interior_weights: Vec<f64>,
        exterior: Vec<Point>,
        exterior_weights: Vec<f64>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("only N = 1, 2 are supported, got {dim}")));
        }
        if interior.is_empty() {
            return Err(Error::InvalidDomain("no interior nodes".into()));
        }
        if interior.len() != interior_weights.len() || exterior.len() != exterior_weights.len() {
            return Err(Error::InvalidDomain("weight count differs from node count".into()));
        }
        if let Some(w) = interior_weights.iter().chain(&exterior_weights).find(|w| !(**w > 0.0)) {
            return Err(Error::InvalidDomain(format!("weights must be positive, found {w}")));
        }
        let clean = |pts: Vec<Point>| -> Vec<Point> { pts.into_iter().map(|p| if dim == 1 { [p[0], 0.0] } else { p }).collect() };
        let interior = clean(interior);
        let exterior = clean(exterior);
        let all: Vec<&Point> = interior.iter().chain(exterior.iter()).collect();
        let mut spacing = f64::INFINITY;
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                let d = distance(all[i], all[j]);
                if d == 0.0 {
                    return Err(Error::InvalidDomain(format!(
                        "nodes {i} and {j} coincide (interior and exterior must be disjoint)"
                    )));
                }
                spacing = spacing.min(d);
            }
        }
        let mut diam = 0.0f64;
        for i in 0..interior.len() {
            for j in (i + 1)..interior.len() {
                diam = diam.max(distance(&interior[i], &interior[j]));
            }
        }
        if !spacing.is_finite() {
            spacing = 1.0;
        }
        if diam == 0.0 {
            diam = spacing;
        }
        let r_ext = interior
            .iter()
            .map(|p| exterior.iter().map(|q| distance(p, q)).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        Ok(DiscreteDomain {
            dim,
            points: interior,
            weights: interior_weights,
            exterior: Exterior::Explicit {
                points: exterior,
                weights: exterior_weights,
            },
            diam,
            spacing,
            r_ext: if r_ext.is_finite() { r_ext } else { 0.0 },
            shape: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_interior(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn r_ext(&self) -> f64 {
        self.r_ext
    }

    pub fn shape(&self) -> Option<&Shape> {
        self.shape.as_ref()
    }

    pub fn lattice_info(&self) -> Option<&Lattice> {
        match &self.exterior {
            Exterior::Lattice(l) => Some(l),
            Exterior::Explicit { .. } => None,
        }
    }

    /// |Ω| as seen by the quadrature (sum of interior weights).
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn exterior_count(&self) -> usize {
        match &self.exterior {
            Exterior::Explicit { points, .. } => points.len(),
            Exterior::Lattice(l) => l.box_node_count() - l.interior.len(),
        }
    }

    /// Radius of the ball with the same volume as the cell of node `i`.
    pub fn cell_radius(&self, i: usize) -> f64 {
        (self.weights[i] / unit_ball_volume(self.dim)).powf(1.0 / self.dim as f64)
    }

    /// Index of the interior node nearest to `p`; ties go to the lowest index.
    pub fn nearest_node(&self, p: &Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d = distance(p, q);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Distance from interior node `i` to ∂Ω: exact for shape-built grids,
    /// otherwise the distance to the nearest exterior node.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        let p = &self.points[i];
        match (&self.shape, &self.exterior) {
            (Some(shape), _) => shape.inner_distance(p).max(0.0),
            (None, Exterior::Explicit { points, .. }) => points.iter().map(|q| distance(p, q)).fold(f64::INFINITY, f64::min),
            (None, Exterior::Lattice(_)) => unreachable!("lattice domains carry a shape"),
        }
    }

    /// For each interior node `i`, `Σ_{j exterior} f(|x_i - x_j|) w_j`.
    pub fn exterior_sums<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        match &self.exterior {
            Exterior::Explicit { points, weights } => self
                .points
                .par_iter()
                .map(|p| points.iter().zip(weights).map(|(q, w)| f(distance(p, q)) * w).sum())
                .collect(),
            Exterior::Lattice(lattice) => {
                let boxed = lattice.box_sums(&f);
                let inner = self.interior_sums(&f);
                boxed.iter().zip(inner).map(|(b, i)| (b - i).max(0.0)).collect()
            }
        }
    }

    /// For each interior node `i`, `Σ_{j interior, j≠i} f(|x_i - x_j|) w_j`.
    pub fn interior_sums<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        const FFT_THRESHOLD: usize = 4096;
        if let (Exterior::Lattice(lattice), true) = (&self.exterior, self.points.len() > FFT_THRESHOLD) {
            let conv = crate::lattice::LatticeConvolution::new(lattice, &f);
            return conv.apply(&self.weights);
        }
        (0..self.points.len())
            .into_par_iter()
            .map(|i| {
                let p = &self.points[i];
                let mut s = 0.0;
                for (j, q) in self.points.iter().enumerate() {
                    if j != i {
                        s += f(distance(p, q)) * self.weights[j];
                    }
                }
                s
            })
            .collect()
    }

    /// Calls `visit(point, weight)` for every exterior node.
    pub fn for_each_exterior<V: FnMut(&Point, f64)>(&self, mut visit: V) {
        match &self.exterior {
            Exterior::Explicit { points, weights } => {
                for (p, w) in points.iter().zip(weights) {
                    visit(p, *w);
                }
            }
            Exterior::Lattice(l) => {
                let shape = self.shape.as_ref().expect("lattice domains carry a shape");
                let tol = 1e-9 * l.h;
                let w = l.cell_volume();
                for b in l.lo[1]..=l.hi[1] {
                    for a in l.lo[0]..=l.hi[0] {
                        let p = l.position([a, b]);
                        if shape.inner_distance(&p) <= tol {
                            visit(&p, w);
                        }
                    }
                }
            }
        }
    }

    /// Hash of the node layout, used to tell solutions on different grids apart.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.dim.hash(&mut h);
        for (p, w) in self.points.iter().zip(&self.weights) {
            p[0].to_bits().hash(&mut h);
            p[1].to_bits().hash(&mut h);
            w.to_bits().hash(&mut h);
        }
        self.exterior_count().hash(&mut h);
        self.r_ext.to_bits().hash(&mut h);
        h.finish()
    }

    pub fn same_as(&self, other: &DiscreteDomain) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim
                && self.points == other.points
                && self.weights == other.weights
                && self.exterior_count() == other.exterior_count()
                && self.r_ext == other.r_ext)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_grid_layout() {
        let d = DiscreteDomain::lattice(Shape::Interval { lo: -1.0, hi: 1.0 }, 0.25, None).unwrap();
        assert_eq!(d.n_interior(), 7);
        assert!((d.volume() - 7.0 * 0.25).abs() < 1e-15);
        assert!(d.r_ext() >= 2.0 * d.diam());
        // collar reaches 8 on each side: indices -36..=36 minus 7 interior
        assert_eq!(d.exterior_count(), 73 - 7);
        assert!(d.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn disk_grid_contains_center_and_is_symmetric() {
        let d = DiscreteDomain::lattice(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.25,
            None,
        )
        .unwrap();
        let c = d.nearest_node(&[0.0, 0.0]);
        assert_eq!(d.point(c), &[0.0, 0.0]);
        let sum: f64 = d.points().iter().map(|p| p[0] + p[1]).sum();
        assert!(sum.abs() < 1e-12);
        for p in d.points() {
            assert!(p[0].hypot(p[1]) < 1.0);
        }
    }

    #[test]
    fn nearest_node_breaks_ties_by_lowest_index() {
        let d = DiscreteDomain::from_points(1, vec![[0.0, 0.0], [1.0, 0.0]], vec![1.0, 1.0], vec![], vec![]).unwrap();
        assert_eq!(d.nearest_node(&[0.5, 0.0]), 0);
    }

    #[test]
    fn explicit_domain_rejects_overlap_and_bad_weights() {
        assert!(DiscreteDomain::from_points(1, vec![[0.0, 0.0]], vec![1.0], vec![[0.0, 0.0]], vec![1.0]).is_err());
        assert!(DiscreteDomain::from_points(1, vec![[0.0, 0.0]], vec![0.0], vec![], vec![]).is_err());
    }

    #[test]
    fn exterior_sums_agree_with_enumeration() {
        let d = DiscreteDomain::lattice(
            Shape::Rectangle {
                lo: [0.0, 0.0],
                hi: [1.0, 0.5],
            },
            0.125,
            Some(2.5),
        )
        .unwrap();
        let f = |r: f64| r.powf(-3.0);
        let fast = d.exterior_sums(f);
        for i in [0, 5, d.n_interior() - 1] {
            let mut direct = 0.0;
            let p = *d.point(i);
            d.for_each_exterior(|q, w| direct += f(distance(&p, q)) * w);
            assert!((fast[i] - direct).abs() <= 1e-10 * direct, "{} vs {}", fast[i], direct);
        }
    }

    #[test]
    fn boundary_distance_uses_shape() {
        let d = DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 0.1, None).unwrap();
        assert!((d.boundary_distance(0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn descriptor_round_trips_through_json() {
        let json = r#"{"shape":"disk","center":[0.0,0.0],"radius":1.0,"spacing":0.2}"#;
        let desc: DomainDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(desc.r_ext, None);
        let d = DiscreteDomain::from_descriptor(&desc).unwrap();
        assert_eq!(d.dim(), 2);
        assert!((d.r_ext() - 8.0).abs() < 1e-12);
    }
}
