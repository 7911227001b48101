//! Discrete anisotropic Cahn–Hilliard energy, the mobility weight `g` and the
//! weighted metric it induces.
//!
//! `E_ε[u] = ½ Δx^d Σ_k ( ε f(−D⁺u)_k + W(u_k)/ε )` with `f = σ²`, the
//! gradient taken by forward differences on staggered edges.

use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::{Anisotropy, Mobility};
use crate::error::{Error, Result};
use crate::field::{centered_gradient_into, Grid, PeriodicField};
use crate::numeric::{pairwise_sum, sphere_directions};
use crate::potential::DoubleWell;

const PAR_MIN: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
    pub epsilon: f64,
}

/// Scratch buffers reused across energy evaluations on one grid.
#[derive(Clone, Debug)]
pub struct EnergyWorkspace {
    df: Vec<f64>,
    line_sums: Vec<(f64, f64)>,
}

impl EnergyWorkspace {
    pub fn new(grid: &Grid) -> Self {
        Self {
            df: vec![0.0; grid.cells() * grid.dim],
            line_sums: vec![(0.0, 0.0); grid.lines()],
        }
    }
}

pub fn energy_eps(u: &PeriodicField, eps: f64, a: &Anisotropy, w: &DoubleWell) -> Result<EnergyReport> {
    check_eps(u.grid(), eps)?;
    if a.dim() != u.grid().dim {
        return Err(Error::input("anisotropy and grid dimensions differ"));
    }
    let mut ws = EnergyWorkspace::new(u.grid());
    Ok(energy_with_gradient(u.grid(), u.data(), eps, a, w, &mut ws, None))
}

fn check_eps(grid: &Grid, eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::input(format!("epsilon must be positive, got {eps}")));
    }
    if eps < 2.0 * grid.dx() {
        log::warn!(
            "epsilon {eps} is below two grid spacings ({}); the interface is under-resolved",
            2.0 * grid.dx()
        );
    }
    Ok(())
}

/// Energy of `u` and, when `grad` is given, its partial derivatives
/// `∂E/∂u_k = ½Δx^d (ε div Df(−D⁺u) + W′(u)/ε)_k`.
pub fn energy_with_gradient(
    grid: &Grid,
    u: &[f64],
    eps: f64,
    a: &Anisotropy,
    w: &DoubleWell,
    ws: &mut EnergyWorkspace,
    grad: Option<&mut [f64]>,
) -> EnergyReport {
    let dim = grid.dim;
    let n = grid.n;
    let last = dim - 1;
    let inv_dx = 1.0 / grid.dx();
    let EnergyWorkspace { df, line_sums } = ws;

    // Lines along the contiguous axis; each line sums its own terms so the
    // totals do not depend on scheduling.
    df.par_chunks_mut(n * dim)
        .zip(line_sums.par_iter_mut())
        .enumerate()
        .with_min_len((PAR_MIN / n).max(1))
        .for_each(|(line, (dfl, sums))| {
            let (k0, nx, _) = grid.line_neighbors(line);
            let (mut sf, mut sw) = (0.0, 0.0);
            let mut p = [0.0; 3];
            for i in 0..n {
                let k = k0 + i;
                let uk = u[k];
                for ax in 0..last {
                    p[ax] = (uk - u[nx[ax] + i]) * inv_dx;
                }
                let ip = if i + 1 == n { 0 } else { i + 1 };
                p[last] = (uk - u[k0 + ip]) * inv_dx;
                sf += a.f_grad(&p[..dim], &mut dfl[i * dim..(i + 1) * dim]);
                sw += w.w(uk);
            }
            *sums = (sf, sw);
        });

    let vol = grid.cell_volume();
    let fs: Vec<f64> = line_sums.iter().map(|s| s.0).collect();
    let wsum: Vec<f64> = line_sums.iter().map(|s| s.1).collect();
    let dir = 0.5 * vol * eps * pairwise_sum(&fs);
    let pot = 0.5 * vol / eps * pairwise_sum(&wsum);

    if let Some(g) = grad {
        let df = &*df;
        let c_div = 0.5 * vol * eps * inv_dx;
        let c_w = 0.5 * vol / eps;
        g.par_chunks_mut(n)
            .enumerate()
            .with_min_len((PAR_MIN / n).max(1))
            .for_each(|(line, gl)| {
                let (k0, _, pv) = grid.line_neighbors(line);
                for i in 0..n {
                    let k = k0 + i;
                    let mut div = 0.0;
                    for ax in 0..last {
                        div += df[k * dim + ax] - df[(pv[ax] + i) * dim + ax];
                    }
                    let im = if i == 0 { n - 1 } else { i - 1 };
                    div += df[k * dim + last] - df[(k0 + im) * dim + last];
                    gl[i] = c_div * div + c_w * w.dw(u[k]);
                }
            });
    }

    EnergyReport {
        dirichlet: dir,
        potential: pot,
        total: dir + pot,
        epsilon: eps,
    }
}

/// Discrete L² norm of the function whose cell integrals are `partials`:
/// `(Σ_k partials_k² / Δx^d)^{1/2}`.
pub fn l2_norm_of_partials(grid: &Grid, partials: &[f64]) -> f64 {
    (crate::numeric::pairwise_sum_map(partials, |v| v * v) / grid.cell_volume()).sqrt()
}

/// The weight `g(p) = (σ(p) + 1)/(μ(p) + 1)` with its sampled lower bound.
#[derive(Clone, Debug)]
pub struct GWeight {
    sigma: Anisotropy,
    mobility: Mobility,
    same: bool,
    c_g: f64,
    sup: f64,
}

impl GWeight {
    pub fn new(sigma: Anisotropy, mobility: Mobility) -> Result<Self> {
        if sigma.dim() != mobility.dim() {
            return Err(Error::input("surface tension and mobility dimensions differ"));
        }
        let same = sigma.to_spec() == mobility.as_anisotropy().to_spec();
        let dim = sigma.dim();
        let mut radii = vec![0.0];
        radii.extend((0..=60).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 60.0)));
        let dirs = sphere_directions(dim, 1000);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for r in &radii {
            for d in &dirs {
                let p: Vec<f64> = d.iter().map(|x| r * x).collect();
                let g = (sigma.value(&p) + 1.0) / (mobility.mu(&p) + 1.0);
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        if !(lo > 0.0) {
            return Err(Error::invariant(format!("sampled infimum of g is {lo}")));
        }
        Ok(Self {
            sigma,
            mobility,
            same,
            c_g: 0.99 * lo,
            sup: hi,
        })
    }

    /// `σ = μ = |·|`.
    pub fn isotropic(dim: usize) -> Result<Self> {
        Self::new(Anisotropy::euclidean(dim)?, Mobility::euclidean(dim)?)
    }

    #[inline]
    pub fn g(&self, p: &[f64]) -> f64 {
        if self.same {
            return 1.0;
        }
        (self.sigma.value(p) + 1.0) / (self.mobility.mu(p) + 1.0)
    }

    /// Sampled infimum of `g`, reduced by 1%.
    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    /// Sampled supremum of `g`.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// Whether `σ` and `μ` coincide, making `g ≡ 1`.
    pub fn is_trivial(&self) -> bool {
        self.same
    }

    pub fn sigma(&self) -> &Anisotropy {
        &self.sigma
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }
}

pub fn g_weight(gw: &GWeight, p: &[f64]) -> f64 {
    gw.g(p)
}

/// `g(−∇u)` at cell centers, the gradient averaged from the two adjacent
/// forward differences.
pub fn g_at_centers(grid: &Grid, u: &[f64], gw: &GWeight, out: &mut [f64]) {
    if gw.is_trivial() {
        out.iter_mut().for_each(|v| *v = 1.0);
        return;
    }
    let dim = grid.dim;
    let mut grad = vec![0.0; grid.cells() * dim];
    centered_gradient_into(grid, u, 2, &mut grad);
    out.par_iter_mut()
        .zip(grad.par_chunks(dim))
        .with_min_len(PAR_MIN)
        .for_each(|(o, gk)| {
            let mut p = [0.0; 3];
            for ax in 0..dim {
                p[ax] = -gk[ax];
            }
            *o = gw.g(&p[..dim]);
        });
}

/// `Δx^d Σ ε g(−∇at_u) v²`.
pub fn metric_sq(v: &PeriodicField, at_u: &PeriodicField, eps: f64, gw: &GWeight) -> Result<f64> {
    if v.grid() != at_u.grid() {
        return Err(Error::input("metric arguments live on different grids"));
    }
    if !(eps > 0.0) {
        return Err(Error::input(format!("epsilon must be positive, got {eps}")));
    }
    let grid = v.grid();
    let mut weights = vec![0.0; grid.cells()];
    g_at_centers(grid, at_u.data(), gw, &mut weights);
    Ok(weighted_metric_sq(grid, &weights, v.data(), eps))
}

/// `Δx^d Σ ε weights v²` for precomputed `g` weights.
pub fn weighted_metric_sq(grid: &Grid, weights: &[f64], v: &[f64], eps: f64) -> f64 {
    let terms: Vec<f64> = weights.iter().zip(v).map(|(g, x)| g * x * x).collect();
    grid.cell_volume() * eps * pairwise_sum(&terms)
}
