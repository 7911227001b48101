//! Surface tensions, mobilities and the geometry attached to them.
//!
//! An [`Anisotropy`] is a positively one-homogeneous, uniformly convex norm
//! `σ` on `ℝᵈ`. Two families are supported: the Euclidean norm and the
//! multi-ellipsoid family
//!
//! ```text
//! σ(p) = (Σ_l σ_l(p)^q)^(1/q),    σ_l(p) = sqrt(p · G_l p)
//! ```
//!
//! with symmetric positive-definite `G_l` and `q ≥ 1`. Value, gradient and
//! Hessian are analytic; the polar norm `σ°(q) = sup{p·q : σ(p) ≤ 1}` is
//! closed-form for a single ellipsoid and computed by projected ascent
//! otherwise.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, dot, norm};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

const CONVEXITY_DIRECTIONS: usize = 1_000;
const STATS_DIRECTIONS: usize = 10_000;
const CONVEXITY_FLOOR: f64 = 1e-8;
const POLAR_STARTS: usize = 16;
const POLAR_TOL: f64 = 1e-10;
const POLAR_STALL_TOL: f64 = 1e-7;
const POLAR_MAX_ITERS: usize = 500;

/// Serialized form of a surface tension or mobility, as it appears in run
/// configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnisotropySpec {
    Euclidean {},
    Bgn {
        q: f64,
        /// One row-major `d×d` matrix per ellipsoid.
        matrices: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
enum Kind {
    Euclidean,
    Bgn {
        q: f64,
        /// Row-major, padded to 3x3.
        mats: Vec<[f64; 9]>,
        /// Inverse of the single ellipsoid, when `L = 1`.
        single_inverse: Option<[f64; 9]>,
    },
}

/// Extremal values of `σ` and `|Dσ|` over the unit sphere, from sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereStats {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub grad_min: f64,
    pub grad_max: f64,
}

/// An admissible surface tension.
#[derive(Clone, Debug)]
pub struct Anisotropy {
    dim: usize,
    kind: Kind,
    stats: SphereStats,
}

fn check_vec(dim: usize, p: &[f64]) -> Result<()> {
    if p.len() != dim {
        return Err(Error::input(format!(
            "vector has {} components, anisotropy is {dim}-dimensional",
            p.len()
        )));
    }
    if !numeric::all_finite(p) {
        return Err(Error::input("vector has non-finite components"));
    }
    Ok(())
}

#[inline]
fn mat_vec(m: &[f64; 9], dim: usize, p: &[f64], out: &mut [f64; 3]) {
    for i in 0..dim {
        let mut s = 0.0;
        for j in 0..dim {
            s += m[3 * i + j] * p[j];
        }
        out[i] = s;
    }
}

impl Anisotropy {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::input(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        Self::admit(dim, Kind::Euclidean)
    }

    /// Multi-ellipsoid surface tension from square matrices `G_l`.
    pub fn bgn(q: f64, matrices: &[DMatrix<f64>]) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0) {
            return Err(Error::input(format!("exponent q = {q} must be finite and ≥ 1")));
        }
        let first = matrices
            .first()
            .ok_or_else(|| Error::input("at least one ellipsoid matrix is required"))?;
        let dim = first.nrows();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::input(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        let mut mats = Vec::with_capacity(matrices.len());
        for (l, g) in matrices.iter().enumerate() {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::input(format!("matrix {l} is not {dim}×{dim}")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::input(format!("matrix {l} has non-finite entries")));
            }
            let scale = g.amax().max(1e-300);
            if (g - g.transpose()).amax() > 1e-12 * scale {
                return Err(Error::input(format!("matrix {l} is not symmetric")));
            }
            let eig = SymmetricEigen::new(g.clone()).eigenvalues;
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 1e-14 * scale {
                return Err(Error::input(format!(
                    "matrix {l} is not positive definite (smallest eigenvalue {min:e})"
                )));
            }
            let mut m = [0.0; 9];
            for i in 0..dim {
                for j in 0..dim {
                    m[3 * i + j] = g[(i, j)];
                }
            }
            mats.push(m);
        }
        let single_inverse = if mats.len() == 1 {
            let inv = first
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::input("ellipsoid matrix is singular"))?;
            let mut m = [0.0; 9];
            for i in 0..dim {
                for j in 0..dim {
                    m[3 * i + j] = inv[(i, j)];
                }
            }
            Some(m)
        } else {
            None
        };
        Self::admit(
            dim,
            Kind::Bgn {
                q,
                mats,
                single_inverse,
            },
        )
    }

    /// Single ellipsoid with diagonal matrix `diag(entries)`.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let d = entries.len();
        Self::bgn(2.0, &[DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))])
            .map_err(|e| match (d, e) {
                (0, _) => Error::input("empty diagonal"),
                (_, e) => e,
            })
    }

    pub fn from_spec(spec: &AnisotropySpec, dim: usize) -> Result<Self> {
        match spec {
            AnisotropySpec::Euclidean {} => Self::euclidean(dim),
            AnisotropySpec::Bgn { q, matrices } => {
                let mats = matrices
                    .iter()
                    .enumerate()
                    .map(|(l, m)| {
                        if m.len() != dim * dim {
                            Err(Error::config(format!(
                                "anisotropy matrix {l} has {} entries, expected {}",
                                m.len(),
                                dim * dim
                            )))
                        } else {
                            Ok(DMatrix::from_row_slice(dim, dim, m))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::bgn(*q, &mats)
            }
        }
    }

    fn admit(dim: usize, kind: Kind) -> Result<Self> {
        let mut a = Anisotropy {
            dim,
            kind,
            stats: SphereStats {
                sigma_min: 0.0,
                sigma_max: 0.0,
                grad_min: 0.0,
                grad_max: 0.0,
            },
        };
        // Uniform convexity of σ² on sampled directions.
        for p in numeric::sphere_directions(dim, CONVEXITY_DIRECTIONS) {
            let h = a.hessian_sq(&p);
            let min = SymmetricEigen::new(h)
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if !(min > CONVEXITY_FLOOR) {
                return Err(Error::input(format!(
                    "σ² is not uniformly convex: Hessian eigenvalue {min:e} at {p:?}"
                )));
            }
        }
        let mut stats = SphereStats {
            sigma_min: f64::INFINITY,
            sigma_max: 0.0,
            grad_min: f64::INFINITY,
            grad_max: 0.0,
        };
        let mut grad = [0.0; 3];
        for p in numeric::sphere_directions(dim, STATS_DIRECTIONS) {
            let s = a.value_grad(&p, &mut grad[..dim]);
            let g = norm(&grad[..dim]);
            stats.sigma_min = stats.sigma_min.min(s);
            stats.sigma_max = stats.sigma_max.max(s);
            stats.grad_min = stats.grad_min.min(g);
            stats.grad_max = stats.grad_max.max(g);
        }
        a.stats = stats;
        Ok(a)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, Kind::Euclidean)
    }

    pub fn stats(&self) -> SphereStats {
        self.stats
    }

    pub fn to_spec(&self) -> AnisotropySpec {
        match &self.kind {
            Kind::Euclidean => AnisotropySpec::Euclidean {},
            Kind::Bgn { q, mats, .. } => AnisotropySpec::Bgn {
                q: *q,
                matrices: mats
                    .iter()
                    .map(|m| {
                        let mut v = Vec::with_capacity(self.dim * self.dim);
                        for i in 0..self.dim {
                            for j in 0..self.dim {
                                v.push(m[3 * i + j]);
                            }
                        }
                        v
                    })
                    .collect(),
            },
        }
    }

    /// `σ(p)` without input validation.
    #[inline]
    pub fn value(&self, p: &[f64]) -> f64 {
        match &self.kind {
            Kind::Euclidean => norm(p),
            Kind::Bgn { q, mats, .. } => {
                let mut gp = [0.0; 3];
                if mats.len() == 1 {
                    mat_vec(&mats[0], self.dim, p, &mut gp);
                    return dot(p, &gp[..self.dim]).max(0.0).sqrt();
                }
                let mut s = 0.0;
                for m in mats {
                    mat_vec(m, self.dim, p, &mut gp);
                    let sl = dot(p, &gp[..self.dim]).max(0.0).sqrt();
                    s += sl.powf(*q);
                }
                s.powf(1.0 / q)
            }
        }
    }

    /// `σ(p)` and `Dσ(p)` written into `grad`. `p` must be nonzero.
    #[inline]
    pub fn value_grad(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        match &self.kind {
            Kind::Euclidean => {
                let n = norm(p);
                for i in 0..d {
                    grad[i] = p[i] / n;
                }
                n
            }
            Kind::Bgn { q, mats, .. } => {
                let mut gp = [0.0; 3];
                if mats.len() == 1 {
                    mat_vec(&mats[0], d, p, &mut gp);
                    let s = dot(p, &gp[..d]).sqrt();
                    for i in 0..d {
                        grad[i] = gp[i] / s;
                    }
                    return s;
                }
                let mut total = 0.0;
                grad[..d].iter_mut().for_each(|g| *g = 0.0);
                for m in mats {
                    mat_vec(m, d, p, &mut gp);
                    let sl = dot(p, &gp[..d]).sqrt();
                    total += sl.powf(*q);
                    // σ_l^{q-1} Dσ_l = σ_l^{q-2} G_l p
                    let w = sl.powf(q - 2.0);
                    for i in 0..d {
                        grad[i] += w * gp[i];
                    }
                }
                let s = total.powf(1.0 / q);
                let scale = s.powf(1.0 - q);
                for g in grad[..d].iter_mut() {
                    *g *= scale;
                }
                s
            }
        }
    }

    /// `Df(p) = 2σ(p)Dσ(p)` for `f = σ²`, with `Df(0) = 0`. Returns `f(p)`.
    #[inline]
    pub fn f_grad(&self, p: &[f64], df: &mut [f64]) -> f64 {
        let d = self.dim;
        if let Kind::Bgn { mats, .. } = &self.kind {
            if mats.len() == 1 {
                let mut gp = [0.0; 3];
                mat_vec(&mats[0], d, p, &mut gp);
                for i in 0..d {
                    df[i] = 2.0 * gp[i];
                }
                return dot(p, &gp[..d]);
            }
        }
        if let Kind::Euclidean = self.kind {
            for i in 0..d {
                df[i] = 2.0 * p[i];
            }
            return dot(p, p);
        }
        if norm(p) < 1e-14 {
            df[..d].iter_mut().for_each(|x| *x = 0.0);
            return 0.0;
        }
        let s = self.value_grad(p, df);
        for x in df[..d].iter_mut() {
            *x *= 2.0 * s;
        }
        s * s
    }

    /// σ(p); zero exactly at the origin.
    pub fn sigma(&self, p: &[f64]) -> Result<f64> {
        check_vec(self.dim, p)?;
        Ok(self.value(p))
    }

    /// Analytic gradient `Dσ(p)`, positively 0-homogeneous.
    pub fn dsigma(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_vec(self.dim, p)?;
        if norm(p) == 0.0 {
            return Err(Error::Domain("Dσ is singular at the origin".into()));
        }
        let mut g = vec![0.0; self.dim];
        self.value_grad(p, &mut g);
        Ok(g)
    }

    /// Analytic Hessian `D²σ(p)`, positively (−1)-homogeneous.
    pub fn d2sigma(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        check_vec(self.dim, p)?;
        if norm(p) == 0.0 {
            return Err(Error::Domain("D²σ is singular at the origin".into()));
        }
        Ok(self.hessian(p))
    }

    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.kind {
            Kind::Euclidean => {
                let n = norm(p);
                DMatrix::from_fn(d, d, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    (delta - p[i] * p[j] / (n * n)) / n
                })
            }
            Kind::Bgn { q, mats, .. } => {
                let q = *q;
                // S = Σ σ_l^q,  σ = S^{1/q}
                let mut s_sum = 0.0;
                let mut ds = DMatrix::<f64>::zeros(d, 1);
                let mut d2s = DMatrix::<f64>::zeros(d, d);
                let mut gp = [0.0; 3];
                for m in mats {
                    mat_vec(m, d, p, &mut gp);
                    let sl = dot(p, &gp[..d]).sqrt();
                    let dsl = DMatrix::from_fn(d, 1, |i, _| gp[i] / sl);
                    let g = DMatrix::from_fn(d, d, |i, j| m[3 * i + j]);
                    let d2sl = (g - &dsl * dsl.transpose()) / sl;
                    s_sum += sl.powf(q);
                    ds += &dsl * (q * sl.powf(q - 1.0));
                    d2s += (&dsl * dsl.transpose()) * (q * (q - 1.0) * sl.powf(q - 2.0))
                        + d2sl * (q * sl.powf(q - 1.0));
                }
                let a = 1.0 / q;
                (&ds * ds.transpose()) * (a * (a - 1.0) * s_sum.powf(a - 2.0))
                    + d2s * (a * s_sum.powf(a - 1.0))
            }
        }
    }

    /// Hessian of σ², `2(Dσ⊗Dσ + σD²σ)`.
    fn hessian_sq(&self, p: &[f64]) -> DMatrix<f64> {
        let mut g = vec![0.0; self.dim];
        let s = self.value_grad(p, &mut g);
        let gv = DMatrix::from_column_slice(self.dim, 1, &g);
        (&gv * gv.transpose() + self.hessian(p) * s) * 2.0
    }

    /// Row-major `A` with `σ(p)² = p·Ap`, when `σ` has that form.
    pub fn quadratic_matrix(&self) -> Option<Vec<f64>> {
        let d = self.dim;
        match &self.kind {
            Kind::Euclidean => Some((0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 } else { 0.0 }).collect()),
            Kind::Bgn { mats, .. } if mats.len() == 1 => {
                Some((0..d * d).map(|k| mats[0][3 * (k / d) + k % d]).collect())
            }
            Kind::Bgn { .. } => None,
        }
    }

    /// Whether `σ°` is evaluated in closed form rather than by ascent.
    pub fn has_closed_form_polar(&self) -> bool {
        matches!(
            self.kind,
            Kind::Euclidean
                | Kind::Bgn {
                    single_inverse: Some(_),
                    ..
                }
        )
    }

    /// Polar norm `σ°(q)`.
    pub fn polar(&self, q: &[f64]) -> Result<f64> {
        self.polar_argmax(q).map(|(v, _)| v)
    }

    /// Polar norm together with a maximizer `p*` of `p·q` over `{σ ≤ 1}`.
    /// For `q ≠ 0` the maximizer equals `Dσ°(q)`.
    pub fn polar_argmax(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_vec(self.dim, q)?;
        let d = self.dim;
        let qn = norm(q);
        if qn == 0.0 {
            let mut p = vec![0.0; d];
            p[0] = 1.0 / self.value(&unit_axis(d, 0));
            return Ok((0.0, p));
        }
        match &self.kind {
            Kind::Euclidean => Ok((qn, q.iter().map(|x| x / qn).collect())),
            Kind::Bgn {
                single_inverse: Some(inv),
                ..
            } => {
                let mut gq = [0.0; 3];
                mat_vec(inv, d, q, &mut gq);
                let v = dot(q, &gq[..d]).sqrt();
                Ok((v, gq[..d].iter().map(|x| x / v).collect()))
            }
            Kind::Bgn { .. } => dual_norm_by_ascent(d, q, |p, g| self.value_grad(p, g), 0x5eed),
        }
    }

    /// Truncated Cahn–Hoffman map `F(ξ) = |ξ|ψ(|ξ|)Dσ(ξ)`, with `F(0) = 0`.
    pub fn cahn_hoffman_trunc(&self, cutoff: &Cutoff, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.cahn_hoffman_into(cutoff, xi, &mut out);
        out
    }

    #[inline]
    pub fn cahn_hoffman_into(&self, cutoff: &Cutoff, xi: &[f64], out: &mut [f64]) {
        let r = norm(xi);
        let w = r * cutoff.value(r);
        if w == 0.0 {
            out[..self.dim].iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        self.value_grad(xi, out);
        for x in out[..self.dim].iter_mut() {
            *x *= w;
        }
    }

    /// `σ(p) − F(p′)·p` for a unit vector `p` and `|p′| ≤ 1`.
    pub fn dziuk_gap(&self, cutoff: &Cutoff, p: &[f64], pp: &[f64]) -> Result<f64> {
        check_vec(self.dim, p)?;
        check_vec(self.dim, pp)?;
        if (norm(p) - 1.0).abs() > 1e-9 {
            return Err(Error::input("dziuk_gap requires |p| = 1"));
        }
        if norm(pp) > 1.0 + 1e-12 {
            return Err(Error::input("dziuk_gap requires |p′| ≤ 1"));
        }
        Ok(self.gap_unchecked(cutoff, p, pp))
    }

    #[inline]
    fn gap_unchecked(&self, cutoff: &Cutoff, p: &[f64], pp: &[f64]) -> f64 {
        let mut f = [0.0; 3];
        self.cahn_hoffman_into(cutoff, pp, &mut f);
        self.value(p) - dot(&f[..self.dim], p)
    }

    /// Fits the constants of the two-sided tilt-excess bound by sampling.
    pub fn fit_dziuk_constants(&self, cutoff: &Cutoff, n_samples: usize) -> Result<DziukConstants> {
        if n_samples < 1_000 {
            return Err(Error::input("fit_dziuk_constants needs at least 10³ samples"));
        }
        let pairs = dziuk_sample_pairs(self.dim, n_samples, 0xd21c);
        let lower_ratio = |p: &[f64], pp: &[f64]| -> Option<f64> {
            let dist2: f64 = p.iter().zip(pp).map(|(a, b)| (a - b) * (a - b)).sum();
            (dist2.sqrt() > 1e-3).then(|| self.gap_unchecked(cutoff, p, pp) / dist2)
        };
        let upper_ratio = |p: &[f64], pp: &[f64]| -> Option<f64> {
            let dist2: f64 = p.iter().zip(pp).map(|(a, b)| (a - b) * (a - b)).sum();
            let denom = dist2 + (1.0 - norm(pp));
            (denom > 1e-12).then(|| self.gap_unchecked(cutoff, p, pp) / denom)
        };
        let lower = refine_extremum(&pairs, &lower_ratio, -1.0);
        let upper = refine_extremum(&pairs, &upper_ratio, 1.0);
        if !(lower > 0.0) || !lower.is_finite() {
            return Err(Error::invariant(format!(
                "fitted lower tilt constant {lower:e} is not positive; anisotropy is not admissible"
            )));
        }
        if !upper.is_finite() {
            return Err(Error::invariant("fitted upper tilt constant is not finite"));
        }
        Ok(DziukConstants { lower, upper })
    }

    /// Whether `x` lies in the Wulff shape scaled by `r`.
    pub fn wulff_contains(&self, x: &[f64], r: f64) -> Result<bool> {
        if !(r > 0.0) {
            return Err(Error::input("Wulff radius must be positive"));
        }
        Ok(self.polar(x)? <= r)
    }

    /// Boundary points `r·Dσ(ν_k)` of the scaled Wulff shape for `n`
    /// equally spaced normals (d = 2).
    pub fn wulff_boundary_points(&self, r: f64, n: usize) -> Result<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Err(Error::input("Wulff boundary sampling is implemented for d = 2"));
        }
        if !(r > 0.0) {
            return Err(Error::input("Wulff radius must be positive"));
        }
        let mut g = [0.0; 2];
        Ok((0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                self.value_grad(&[a.cos(), a.sin()], &mut g);
                [r * g[0], r * g[1]]
            })
            .collect())
    }
}

fn unit_axis(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

/// `sup{p·q : N(p) ≤ 1}` for a positively one-homogeneous convex `N`,
/// by projected gradient ascent of `θ ↦ θ·q / N(θ)` on the unit sphere from
/// several starts. `value_grad(p, g)` returns `N(p)` and writes `DN(p)`.
///
/// Returns the supremum and the maximizer scaled onto `{N = 1}`.
pub fn dual_norm_by_ascent<F>(dim: usize, q: &[f64], value_grad: F, seed: u64) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let qn = norm(q);
    let mut rng = numeric::rng(seed);
    let mut starts: Vec<Vec<f64>> = vec![q.iter().map(|x| x / qn).collect()];
    let mut g = vec![0.0; dim];
    {
        // Second deterministic start: normalized DN(q) direction.
        value_grad(q, &mut g);
        let n = norm(&g);
        if n > 0.0 {
            starts.push(g.iter().map(|x| x / n).collect());
        }
    }
    while starts.len() < POLAR_STARTS {
        starts.push(numeric::random_unit(&mut rng, dim));
    }

    let objective = |theta: &[f64], g: &mut [f64]| -> (f64, Vec<f64>) {
        let s = value_grad(theta, g);
        let tq = dot(theta, q);
        let f = tq / s;
        // ∇F = q/σ − (θ·q) Dσ / σ², projected onto the tangent space.
        let mut grad: Vec<f64> = (0..dim).map(|i| q[i] / s - tq * g[i] / (s * s)).collect();
        let radial = dot(&grad, theta);
        grad.iter_mut().zip(theta).for_each(|(x, t)| *x -= radial * t);
        (f, grad)
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut best_residual = f64::INFINITY;
    for start in starts {
        let mut theta = start;
        let (mut f, mut grad) = objective(&theta, &mut g);
        let mut step = 1.0 / qn.max(1e-300);
        let mut converged = false;
        for _ in 0..POLAR_MAX_ITERS {
            let gn = norm(&grad);
            if gn <= POLAR_TOL * qn {
                converged = true;
                break;
            }
            let mut accepted = false;
            // Once stalled, a few halvings are enough to confirm it.
            let tries = if gn <= POLAR_STALL_TOL * qn { 8 } else { 60 };
            for _ in 0..tries {
                let trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, d)| t + step * d).collect();
                let tn = norm(&trial);
                let trial: Vec<f64> = trial.into_iter().map(|x| x / tn).collect();
                let (ft, gt) = objective(&trial, &mut g);
                if ft >= f + 0.5 * step * gn * gn {
                    theta = trial;
                    f = ft;
                    grad = gt;
                    step *= 2.0;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let residual = norm(&grad) / qn;
        // Past ~1e-8 the objective is flat to working precision.
        converged |= residual <= POLAR_STALL_TOL;
        best_residual = best_residual.min(residual);
        if converged && best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            let s = value_grad(&theta, &mut g);
            best = Some((f, theta.iter().map(|x| x / s).collect()));
        }
    }
    best.ok_or_else(|| Error::numeric("polar-norm ascent did not converge", best_residual))
}

/// The smooth cutoff `ψ`: zero on `[0, 1/4]`, one on `[1/2, ∞)`, and the
/// quintic smoothstep in between (C² at both joints).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cutoff;

impl Cutoff {
    pub const LOWER: f64 = 0.25;
    pub const UPPER: f64 = 0.5;

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        if r <= Self::LOWER {
            0.0
        } else if r >= Self::UPPER {
            1.0
        } else {
            let s = (r - Self::LOWER) / (Self::UPPER - Self::LOWER);
            s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        }
    }

    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        if r <= Self::LOWER || r >= Self::UPPER {
            0.0
        } else {
            let w = Self::UPPER - Self::LOWER;
            let s = (r - Self::LOWER) / w;
            30.0 * s * s * (1.0 - s) * (1.0 - s) / w
        }
    }
}

/// Fitted constants `c_σ ≤ C_σ` of
/// `c_σ|p−p′|² ≤ σ(p) − F(p′)·p ≤ C_σ(|p−p′|² + 1 − |p′|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DziukConstants {
    /// `c_σ`
    pub lower: f64,
    /// `C_σ`
    pub upper: f64,
}

/// Sample pairs `(p, p′)` with `|p| = 1`, `|p′| ≤ 1`, mixing uniform ball
/// samples, samples on the sphere and samples clustered around `p`.
pub fn dziuk_sample_pairs(dim: usize, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = numeric::rng(seed);
    (0..n)
        .map(|k| {
            let p = numeric::random_unit(&mut rng, dim);
            let pp = match k % 4 {
                0 => {
                    let dir = numeric::random_unit(&mut rng, dim);
                    let r: f64 = rng.gen::<f64>().powf(1.0 / dim as f64);
                    dir.into_iter().map(|x| x * r).collect()
                }
                1 => numeric::random_unit(&mut rng, dim),
                _ => {
                    let scale = 10f64.powf(rng.gen_range(-3.0..0.0));
                    let dir = numeric::random_unit(&mut rng, dim);
                    let mut v: Vec<f64> = p.iter().zip(&dir).map(|(a, b)| a + scale * b).collect();
                    let n = norm(&v);
                    let cap = if k % 4 == 2 { 1.0 } else { rng.gen_range(0.5..1.0) };
                    if n > cap {
                        v.iter_mut().for_each(|x| *x *= cap / n);
                    }
                    v
                }
            };
            (p, pp)
        })
        .collect()
}

/// Extremum (sign −1: minimum, +1: maximum) of `ratio` over the sample
/// pairs, followed by a shrinking random local search from the best few.
fn refine_extremum<F>(pairs: &[(Vec<f64>, Vec<f64>)], ratio: &F, sign: f64) -> f64
where
    F: Fn(&[f64], &[f64]) -> Option<f64>,
{
    let mut scored: Vec<(f64, usize)> = pairs
        .iter()
        .enumerate()
        .filter_map(|(i, (p, pp))| ratio(p, pp).map(|r| (sign * r, i)))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut best = scored.first().map(|s| s.0).unwrap_or(f64::NAN);
    let mut rng = numeric::rng(0x0ca1);
    for &(score, idx) in scored.iter().take(8) {
        let (mut p, mut pp) = pairs[idx].clone();
        let mut current = score;
        let mut radius = 0.05;
        for _ in 0..400 {
            let dim = p.len();
            let dp = numeric::random_unit(&mut rng, dim);
            let dq = numeric::random_unit(&mut rng, dim);
            let mut p2: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + radius * b).collect();
            let n = norm(&p2);
            p2.iter_mut().for_each(|x| *x /= n);
            let mut q2: Vec<f64> = pp.iter().zip(&dq).map(|(a, b)| a + radius * b).collect();
            let n = norm(&q2);
            if n > 1.0 {
                q2.iter_mut().for_each(|x| *x /= n);
            }
            match ratio(&p2, &q2) {
                Some(r) if sign * r > current => {
                    current = sign * r;
                    p = p2;
                    pp = q2;
                }
                _ => radius *= 0.97,
            }
        }
        best = best.max(current);
    }
    sign * best
}

/// An admissible mobility `μ`. Any admissible surface tension may serve.
#[derive(Clone, Debug)]
pub struct Mobility(Anisotropy);

impl Mobility {
    pub fn euclidean(dim: usize) -> Result<Self> {
        Anisotropy::euclidean(dim).map(Mobility)
    }

    pub fn from_anisotropy(a: Anisotropy) -> Self {
        Mobility(a)
    }

    pub fn from_spec(spec: &AnisotropySpec, dim: usize) -> Result<Self> {
        Anisotropy::from_spec(spec, dim).map(Mobility)
    }

    pub fn as_anisotropy(&self) -> &Anisotropy {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    #[inline]
    pub fn mu(&self, p: &[f64]) -> f64 {
        self.0.value(p)
    }

    /// Largest difference quotient `|μ(a)−μ(b)|/|a−b|` over sampled pairs of
    /// unit vectors.
    pub fn sampled_lipschitz(&self, n: usize) -> f64 {
        let mut rng = numeric::rng(0x11b);
        let d = self.dim();
        (0..n)
            .map(|_| {
                let a = numeric::random_unit(&mut rng, d);
                let b = numeric::random_unit(&mut rng, d);
                let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                if dist < 1e-9 {
                    0.0
                } else {
                    (self.mu(&a) - self.mu(&b)).abs() / dist
                }
            })
            .fold(0.0, f64::max)
    }
}
