//! Uniform lattice helpers: box sums of radial functions through quadrant
//! prefix tables, and FFT convolutions over the interior index box.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Integer box `[lo, hi]` (inclusive) of a uniform lattice with spacing `h`.
/// One-dimensional lattices keep the second axis at `lo = hi = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub origin: [f64; 2],
    pub h: f64,
    pub lo: [i64; 2],
    pub hi: [i64; 2],
    /// Integer coordinates of the interior nodes, in node order.
    pub interior: Vec<[i64; 2]>,
}

impl Lattice {
    pub fn position(&self, ix: [i64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.h * ix[0] as f64,
            if self.dim == 2 {
                self.origin[1] + self.h * ix[1] as f64
            } else {
                0.0
            },
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn box_node_count(&self) -> usize {
        ((self.hi[0] - self.lo[0] + 1) * (self.hi[1] - self.lo[1] + 1)) as usize
    }

    /// For every interior node `i`, `Σ_{j in box, j != i} f(|x_i - x_j|) · h^N`.
    pub fn box_sums<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        let ax = (self.hi[0] - self.lo[0]) as usize;
        let ay = (self.hi[1] - self.lo[1]) as usize;
        let h = self.h;
        let vol = self.cell_volume();
        // quadrant prefix table F[a][b] = Σ_{a'≤a, b'≤b} f(h |(a', b')|), origin excluded
        let row = ay + 1;
        let mut table = vec![0.0f64; (ax + 1) * row];
        table.par_chunks_mut(row).enumerate().for_each(|(a, chunk)| {
            for (b, slot) in chunk.iter_mut().enumerate() {
                if a == 0 && b == 0 {
                    *slot = 0.0;
                } else {
                    let r = h * ((a * a + b * b) as f64).sqrt();
                    *slot = f(r);
                }
            }
        });
        // prefix along b, then along a
        table.par_chunks_mut(row).for_each(|chunk| {
            let mut acc = 0.0;
            for v in chunk.iter_mut() {
                acc += *v;
                *v = acc;
            }
        });
        for a in 1..=ax {
            let (prev, cur) = table.split_at_mut(a * row);
            let prev = &prev[(a - 1) * row..];
            for b in 0..row {
                cur[b] += prev[b];
            }
        }
        let q = |a: i64, b: i64| table[a as usize * row + b as usize];
        self.interior
            .iter()
            .map(|ix| {
                let a1 = ix[0] - self.lo[0];
                let a2 = self.hi[0] - ix[0];
                let b1 = ix[1] - self.lo[1];
                let b2 = self.hi[1] - ix[1];
                let total = q(a2, b2) + q(a1, b2) + q(a2, b1) + q(a1, b1) - (q(0, b2) + q(0, b1)) - (q(a2, 0) + q(a1, 0));
                total * vol
            })
            .collect()
    }
}

/// Precomputed FFT convolution of interior-node values with a radial kernel.
pub struct LatticeConvolution {
    dims: [usize; 2],
    padded: [usize; 2],
    base: [i64; 2],
    index: Vec<usize>,
    kernel_hat: Vec<Complex64>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for LatticeConvolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeConvolution")
            .field("dims", &self.dims)
            .field("padded", &self.padded)
            .finish()
    }
}

impl LatticeConvolution {
    /// Builds `v ↦ (Σ_{j≠i} f(|x_i - x_j|) v_j)_i` over the interior nodes.
    pub fn new<F: Fn(f64) -> f64>(lattice: &Lattice, f: F) -> Self {
        let mut lo = [i64::MAX; 2];
        let mut hi = [i64::MIN; 2];
        for ix in &lattice.interior {
            for d in 0..2 {
                lo[d] = lo[d].min(ix[d]);
                hi[d] = hi[d].max(ix[d]);
            }
        }
        if lattice.interior.is_empty() {
            lo = [0, 0];
            hi = [0, 0];
        }
        let dims = [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize];
        let padded = [
            (2 * dims[0] - 1).next_power_of_two().max(1),
            if dims[1] == 1 { 1 } else { (2 * dims[1] - 1).next_power_of_two() },
        ];
        let index = lattice
            .interior
            .iter()
            .map(|ix| {
                let a = (ix[0] - lo[0]) as usize;
                let b = (ix[1] - lo[1]) as usize;
                b * padded[0] + a
            })
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = [planner.plan_fft_forward(padded[0]), planner.plan_fft_forward(padded[1])];
        let inv = [planner.plan_fft_inverse(padded[0]), planner.plan_fft_inverse(padded[1])];
        let mut kernel = vec![Complex64::new(0.0, 0.0); padded[0] * padded[1]];
        let h = lattice.h;
        let span = |n: usize| -(n as i64 - 1)..=(n as i64 - 1);
        for db in span(dims[1]) {
            for da in span(dims[0]) {
                if da == 0 && db == 0 {
                    continue;
                }
                let r = h * ((da * da + db * db) as f64).sqrt();
                let a = da.rem_euclid(padded[0] as i64) as usize;
                let b = db.rem_euclid(padded[1] as i64) as usize;
                kernel[b * padded[0] + a] = Complex64::new(f(r), 0.0);
            }
        }
        let mut conv = LatticeConvolution {
            dims,
            padded,
            base: lo,
            index,
            kernel_hat: Vec::new(),
            fwd,
            inv,
        };
        conv.transform(&mut kernel, false);
        conv.kernel_hat = kernel;
        conv
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let [px, py] = self.padded;
        let plans = if inverse { &self.inv } else { &self.fwd };
        data.par_chunks_mut(px).for_each(|row| plans[0].process(row));
        if py > 1 {
            let mut column = vec![Complex64::new(0.0, 0.0); py];
            for a in 0..px {
                for b in 0..py {
                    column[b] = data[b * px + a];
                }
                plans[1].process(&mut column);
                for b in 0..py {
                    data[b * px + a] = column[b];
                }
            }
        }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let [px, py] = self.padded;
        let mut buf = vec![Complex64::new(0.0, 0.0); px * py];
        for (&slot, &v) in self.index.iter().zip(values) {
            buf[slot] = Complex64::new(v, 0.0);
        }
        self.transform(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, true);
        let scale = 1.0 / (px * py) as f64;
        self.index.iter().map(|&slot| buf[slot].re * scale).collect()
    }

    pub fn base(&self) -> [i64; 2] {
        self.base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_lattice(dim: usize) -> Lattice {
        let mut interior = Vec::new();
        let (ylo, yhi) = if dim == 2 { (-2, 3) } else { (0, 0) };
        for b in ylo..=yhi {
            for a in -3..=2 {
                interior.push([a, b]);
            }
        }
        Lattice {
            dim,
            origin: [0.1, -0.2],
            h: 0.25,
            lo: [-9, if dim == 2 { -7 } else { 0 }],
            hi: [8, if dim == 2 { 10 } else { 0 }],
            interior,
        }
    }

    #[test]
    fn box_sums_match_direct_enumeration() {
        for dim in [1, 2] {
            let lat = small_lattice(dim);
            let f = |r: f64| r.powf(-2.3);
            let fast = lat.box_sums(f);
            for (k, ix) in lat.interior.iter().enumerate() {
                let mut direct = 0.0;
                for b in lat.lo[1]..=lat.hi[1] {
                    for a in lat.lo[0]..=lat.hi[0] {
                        if [a, b] == *ix {
                            continue;
                        }
                        let da = (a - ix[0]) as f64;
                        let db = (b - ix[1]) as f64;
                        direct += f(lat.h * (da * da + db * db).sqrt());
                    }
                }
                direct *= lat.cell_volume();
                assert!((fast[k] - direct).abs() <= 1e-12 * direct, "{dim} {k}: {} vs {direct}", fast[k]);
            }
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        for dim in [1, 2] {
            let lat = small_lattice(dim);
            let f = |r: f64| (-r).exp() / r;
            let conv = LatticeConvolution::new(&lat, f);
            let values: Vec<f64> = (0..lat.interior.len()).map(|k| ((k * 7 % 11) as f64) - 4.0).collect();
            let fast = conv.apply(&values);
            for (i, xi) in lat.interior.iter().enumerate() {
                let mut direct = 0.0;
                for (j, xj) in lat.interior.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let da = (xi[0] - xj[0]) as f64;
                    let db = (xi[1] - xj[1]) as f64;
                    direct += f(lat.h * (da * da + db * db).sqrt()) * values[j];
                }
                assert!((fast[i] - direct).abs() < 1e-10 * (1.0 + direct.abs()), "{} vs {}", fast[i], direct);
            }
        }
    }
}
