//! Scalar and vector samples on a uniform periodic grid over the flat torus
//! `[0, L)^d`, with a forward-difference gradient and its exact negative
//! adjoint.
//!
//! Storage is row-major: axis 0 varies slowest. Scalar samples sit at cell
//! centers `x_i = (i + 1/2)Δx`; gradient component `a` at cell `k` lives on
//! the edge between `k` and `k + e_a`.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Below this many cells element-wise loops run serially.
const PAR_MIN: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::input(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if n < 2 {
            return Err(Error::input(format!("need at least 2 points per axis, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::input(format!("side length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    /// Grid on the unit torus.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 1.0)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Flat-index distance between neighbours along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Multi-index of flat index `k`, padded with zeros to length 3.
    #[inline]
    pub fn unravel(&self, k: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut rest = k;
        for a in (0..self.dim).rev() {
            idx[a] = rest % self.n;
            rest /= self.n;
        }
        idx
    }

    /// Flat index of a multi-index, wrapping each component periodically.
    #[inline]
    pub fn ravel_wrapped(&self, idx: &[isize]) -> usize {
        let n = self.n as isize;
        idx[..self.dim]
            .iter()
            .fold(0usize, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    /// Index of the neighbour `k + e_axis`.
    #[inline]
    pub fn next(&self, k: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (k / s) % self.n == self.n - 1 {
            k + s - self.n * s
        } else {
            k + s
        }
    }

    /// Index of the neighbour `k - e_axis`.
    #[inline]
    pub fn prev(&self, k: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (k / s).is_multiple_of(self.n) {
            k + self.n * s - s
        } else {
            k - s
        }
    }

    /// Number of grid lines along the last (contiguous) axis.
    #[inline]
    pub fn lines(&self) -> usize {
        self.cells() / self.n
    }

    /// First index of line `line` and the first indices of its neighbouring
    /// lines `±e_a` for every axis but the last.
    #[inline]
    pub fn line_neighbors(&self, line: usize) -> (usize, [usize; 3], [usize; 3]) {
        let k0 = line * self.n;
        let mut next = [0; 3];
        let mut prev = [0; 3];
        for a in 0..self.dim - 1 {
            next[a] = self.next(k0, a);
            prev[a] = self.prev(k0, a);
        }
        (k0, next, prev)
    }

    /// Cell-center coordinates of flat index `k` (unused axes are zero).
    #[inline]
    pub fn center(&self, k: usize) -> [f64; 3] {
        let idx = self.unravel(k);
        let dx = self.dx();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (idx[a] as f64 + 0.5) * dx;
        }
        x
    }

    /// Shortest periodic displacement `x - c`, componentwise in `[-L/2, L/2)`.
    #[inline]
    pub fn periodic_delta(&self, x: &[f64], c: &[f64]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for a in 0..self.dim {
            let mut v = (x[a] - c[a]) / self.length;
            v -= (v + 0.5).floor();
            d[a] = v * self.length;
        }
        d
    }
}

/// Real samples at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    grid: Grid,
    data: Vec<f64>,
}

/// One staggered component per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub components: Vec<PeriodicField>,
}

impl PeriodicField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.cells()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.cells() {
            return Err(Error::input(format!(
                "expected {} samples, got {}",
                grid.cells(),
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite sample at index {k}")));
        }
        Ok(Self { grid, data })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut data = vec![0.0; grid.cells()];
        data.par_iter_mut()
            .with_min_len(PAR_MIN)
            .enumerate()
            .for_each(|(k, v)| *v = f(&grid.center(k)[..grid.dim]));
        Self { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `Δx^d Σ u`.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * pairwise_sum(&self.data)
    }

    /// `max |u − 1/2|`.
    pub fn linf_center_distance(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, (v - 0.5).abs()))
    }

    /// Applies `f` to every sample.
    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        let mut out = self.clone();
        out.data
            .par_iter_mut()
            .with_min_len(PAR_MIN)
            .for_each(|v| *v = f(*v));
        out
    }

    /// `out[k] = u[k - offset]`, periodically.
    pub fn shift(&self, offset: &[isize]) -> Self {
        let g = self.grid;
        let mut data = vec![0.0; self.data.len()];
        data.par_iter_mut()
            .with_min_len(PAR_MIN)
            .enumerate()
            .for_each(|(k, v)| {
                let idx = g.unravel(k);
                let mut src = [0isize; 3];
                for a in 0..g.dim {
                    src[a] = idx[a] as isize - offset.get(a).copied().unwrap_or(0);
                }
                *v = self.data[g.ravel_wrapped(&src)];
            });
        Self { grid: g, data }
    }

    pub fn forward_gradient(&self) -> VectorField {
        let comps = (0..self.grid.dim)
            .map(|a| {
                let mut out = vec![0.0; self.data.len()];
                forward_difference_into(&self.grid, a, &self.data, &mut out);
                PeriodicField {
                    grid: self.grid,
                    data: out,
                }
            })
            .collect();
        VectorField { components: comps }
    }

    /// Multilinear interpolation at an arbitrary point, periodically wrapped.
    pub fn sample(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let dx = g.dx();
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for a in 0..g.dim {
            let s = x[a] / dx - 0.5;
            let f = s.floor();
            base[a] = f as isize;
            frac[a] = s - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << g.dim) {
            let mut w = 1.0;
            let mut idx = [0isize; 3];
            for a in 0..g.dim {
                let bit = (corner >> a) & 1;
                idx[a] = base[a] + bit as isize;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.data[g.ravel_wrapped(&idx)];
            }
        }
        acc
    }

    /// Writes `snap_<step>.f64` and its JSON sidecar into `dir`.
    pub fn write_snapshot(&self, dir: &Path, step: usize, time: f64, epsilon: f64) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bin = dir.join(format!("snap_{step}.f64"));
        let mut bytes = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::File::create(&bin)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&bin, e))?;
        let meta = SnapshotMeta {
            dims: self.grid.dim,
            n: self.grid.n,
            length: self.grid.length,
            time,
            epsilon,
        };
        let json = dir.join(format!("snap_{step}.json"));
        let text = serde_json::to_string_pretty(&meta).expect("snapshot metadata serializes");
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        Ok(bin)
    }

    /// Reads a snapshot given the path of either of its two files.
    pub fn read_snapshot(path: &Path) -> Result<(Self, SnapshotMeta)> {
        let bin = path.with_extension("f64");
        let json = path.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let meta: SnapshotMeta =
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", json.display())))?;
        let grid = Grid::new(meta.dims, meta.n, meta.length)?;
        let mut bytes = Vec::new();
        fs::File::open(&bin)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&bin, e))?;
        if bytes.len() != 8 * grid.cells() {
            return Err(Error::input(format!(
                "{}: expected {} bytes, found {}",
                bin.display(),
                8 * grid.cells(),
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Self::from_vec(grid, data)?, meta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub dims: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub time: f64,
    pub epsilon: f64,
}

impl VectorField {
    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn neg_adjoint_divergence(&self) -> Result<PeriodicField> {
        let g = *self.grid();
        if self.components.len() != g.dim || self.components.iter().any(|c| c.grid != g) {
            return Err(Error::input("vector field components live on different grids"));
        }
        let comps: Vec<&[f64]> = self.components.iter().map(|c| c.data()).collect();
        let mut out = vec![0.0; g.cells()];
        divergence_into(&g, &comps, &mut out);
        Ok(PeriodicField { grid: g, data: out })
    }

    /// `Δx^d Σ_k Σ_a F_a G_a`.
    pub fn inner(&self, other: &VectorField) -> f64 {
        let g = self.grid();
        let per_axis: Vec<f64> = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                let prod: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
                pairwise_sum(&prod)
            })
            .collect();
        g.cell_volume() * per_axis.iter().sum::<f64>()
    }
}

/// `out[k] = (u[k + e_axis] − u[k]) / Δx`.
pub fn forward_difference_into(grid: &Grid, axis: usize, u: &[f64], out: &mut [f64]) {
    let inv = 1.0 / grid.dx();
    out.par_iter_mut()
        .with_min_len(PAR_MIN)
        .enumerate()
        .for_each(|(k, o)| *o = (u[grid.next(k, axis)] - u[k]) * inv);
}

/// `out[k] = Σ_a (F_a[k] − F_a[k − e_a]) / Δx`, the negative adjoint of the
/// forward difference under the cell-sum inner product.
pub fn divergence_into(grid: &Grid, comps: &[&[f64]], out: &mut [f64]) {
    let inv = 1.0 / grid.dx();
    out.par_iter_mut()
        .with_min_len(PAR_MIN)
        .enumerate()
        .for_each(|(k, o)| {
            let mut s = 0.0;
            for (a, f) in comps.iter().enumerate() {
                s += f[k] - f[grid.prev(k, a)];
            }
            *o = s * inv;
        });
}

/// Centered gradient at cell centers, second order (`order = 2`, the average
/// of the two adjacent forward differences) or fourth order (`order = 4`).
/// Writes component `a` of cell `k` to `out[k * dim + a]`.
pub fn centered_gradient_into(grid: &Grid, u: &[f64], order: usize, out: &mut [f64]) {
    let dim = grid.dim;
    let dx = grid.dx();
    out.par_chunks_mut(dim)
        .with_min_len(PAR_MIN / dim.max(1))
        .enumerate()
        .for_each(|(k, o)| {
            for a in 0..dim {
                let p1 = grid.next(k, a);
                let m1 = grid.prev(k, a);
                o[a] = if order == 4 {
                    let p2 = grid.next(p1, a);
                    let m2 = grid.prev(m1, a);
                    (8.0 * (u[p1] - u[m1]) - (u[p2] - u[m2])) / (12.0 * dx)
                } else {
                    (u[p1] - u[m1]) / (2.0 * dx)
                };
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, seed: u64) -> PeriodicField {
        let mut rng = crate::numeric::rng(seed);
        let data = (0..grid.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PeriodicField::from_vec(grid, data).unwrap()
    }

    #[test]
    fn constant_has_zero_gradient_and_divergence() {
        let g = Grid::unit(2, 8).unwrap();
        let u = PeriodicField::constant(g, 3.5);
        for c in &u.forward_gradient().components {
            assert!(c.data().iter().all(|&v| v == 0.0));
        }
        let f = VectorField {
            components: vec![u.clone(), u.clone()],
        };
        assert!(f.neg_adjoint_divergence().unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_alternating_gradient() {
        let g = Grid::unit(1, 2).unwrap();
        let u = PeriodicField::from_vec(g, vec![1.0, -1.0]).unwrap();
        let d = u.forward_gradient();
        // Δx = 1/2, so ±2/Δx = ±4.
        assert_eq!(d.components[0].data(), &[-4.0, 4.0]);
    }

    #[test]
    fn sine_gradient_at_edge_midpoints() {
        let g = Grid::unit(2, 256).unwrap();
        let u = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let d = u.forward_gradient();
        let dx = g.dx();
        let err = (0..g.cells())
            .map(|k| {
                let x = g.center(k)[0] + 0.5 * dx;
                (d.components[0].data()[k] - 2.0 * PI * (2.0 * PI * x).cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
        assert!(d.components[1].data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sine_laplacian() {
        let g = Grid::unit(1, 256).unwrap();
        let u = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let lap = u.forward_gradient().neg_adjoint_divergence().unwrap();
        for k in 0..g.cells() {
            let x = g.center(k)[0];
            assert_abs_diff_eq!(lap.data()[k], -(2.0 * PI).powi(2) * (2.0 * PI * x).sin(), epsilon = 3e-3);
        }
    }

    #[test]
    fn adjointness_on_random_fields() {
        for (dim, n) in [(1, 4), (2, 8), (3, 8), (2, 16), (3, 4)] {
            let g = Grid::unit(dim, n).unwrap();
            let u = random_field(g, 1);
            let f = VectorField {
                components: (0..dim).map(|a| random_field(g, 10 + a as u64)).collect(),
            };
            let lhs = u.forward_gradient().inner(&f);
            let div = f.neg_adjoint_divergence().unwrap();
            let rhs = -g.cell_volume() * u.data().iter().zip(div.data()).map(|(a, b)| a * b).sum::<f64>();
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0), "{dim} {n}: {lhs} {rhs}");
        }
    }

    #[test]
    fn second_order_error_ratio() {
        let err = |n: usize| {
            let g = Grid::unit(2, n).unwrap();
            let u = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
            let lap = u.forward_gradient().neg_adjoint_divergence().unwrap();
            (0..g.cells())
                .map(|k| {
                    let x = g.center(k);
                    let exact = -8.0 * PI * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
                    (lap.data()[k] - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn centered_gradients_converge() {
        let g = Grid::unit(1, 64).unwrap();
        let u = PeriodicField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let mut g2 = vec![0.0; g.cells()];
        let mut g4 = vec![0.0; g.cells()];
        centered_gradient_into(&g, u.data(), 2, &mut g2);
        centered_gradient_into(&g, u.data(), 4, &mut g4);
        let (mut e2, mut e4) = (0.0f64, 0.0f64);
        for k in 0..g.cells() {
            let exact = 2.0 * PI * (2.0 * PI * g.center(k)[0]).cos();
            e2 = e2.max((g2[k] - exact).abs());
            e4 = e4.max((g4[k] - exact).abs());
        }
        // leading truncation terms k³Δx²/6 and k⁵Δx⁴/30 with k = 2π
        let (k, dx) = (2.0 * PI, g.dx());
        assert!(e2 <= 1.01 * k.powi(3) * dx * dx / 6.0, "{e2}");
        assert!(e4 <= 1.01 * k.powi(5) * dx.powi(4) / 30.0, "{e4}");
    }

    #[test]
    fn integrate_and_center_distance() {
        let g = Grid::unit(2, 16).unwrap();
        assert_abs_diff_eq!(PeriodicField::constant(g, 1.0).integrate(), 1.0, epsilon = 1e-14);
        let half = PeriodicField::from_fn(g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(half.integrate(), 0.5, epsilon = 1e-14);
        assert_eq!(PeriodicField::constant(g, 0.5).linf_center_distance(), 0.0);
    }

    #[test]
    fn shift_commutes_with_gradient() {
        let g = Grid::unit(3, 6).unwrap();
        let u = random_field(g, 5);
        let off = [2, -1, 7];
        let a = u.shift(&off).forward_gradient();
        let b = u.forward_gradient();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            assert_eq!(ca, &cb.shift(&off));
        }
    }

    #[test]
    fn sample_reproduces_linear_data_and_nodes() {
        let g = Grid::unit(2, 10).unwrap();
        let u = random_field(g, 9);
        for k in [0, 17, 55, 99] {
            assert_abs_diff_eq!(u.sample(&g.center(k)), u.data()[k], epsilon = 1e-14);
        }
        let lin = PeriodicField::from_fn(g, |x| x[0] + 2.0 * x[1]);
        assert_abs_diff_eq!(lin.sample(&[0.33, 0.41]), 0.33 + 0.82, epsilon = 1e-12);
    }

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 8, 2.0).unwrap();
        let u = random_field(g, 2);
        let path = u.write_snapshot(dir.path(), 12, 0.25, 0.05).unwrap();
        assert!(path.ends_with("snap_12.f64"));
        let (v, meta) = PeriodicField::read_snapshot(&dir.path().join("snap_12.json")).unwrap();
        assert_eq!(u, v);
        assert_eq!(meta.time, 0.25);
        let raw = std::fs::read_to_string(dir.path().join("snap_12.json")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert_eq!(json["L"], 2.0);
        assert_eq!(json["dims"], 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid::unit(4, 8).is_err());
        let g = Grid::unit(1, 4).unwrap();
        assert!(PeriodicField::from_vec(g, vec![0.0; 3]).is_err());
        assert!(PeriodicField::from_vec(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
