//! Gradient-flow calibrations for the self-similarly shrinking Wulff shape
//! `𝒜(t) = {σ°(x − c) < r(t)}`, `r(t)² = r0² − 2(d − 1)t`, with `μ = σ`.
//!
//! `ξ = ζ(s)∇s`, `ϑ = f(s)` and `B = −μ(ξ) H ξ` where `s` is the signed
//! distance (negative inside) and `H = (d − 1)/r(t)` the anisotropic mean
//! curvature of the Wulff boundary.

use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::{Anisotropy, Cutoff};
use crate::diagnostics::{self, Interface, Mat3, Vec3, VelocityEstimate};
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::potential::DoubleWell;
use crate::solver::Trajectory;

/// Boundary samples seeding the projection.
pub const BOUNDARY_SAMPLES: usize = 256;
/// Finite-difference step in units of `r0` (space) and `r0²` (time).
pub const FD_STEP: f64 = 1e-4;
/// `δ = DELTA_FRACTION · r(T)` by default.
pub const DELTA_FRACTION: f64 = 0.2;

const NEWTON_MAX: usize = 60;

#[derive(Clone, Debug)]
pub struct ReferenceEvolution {
    sigma: Anisotropy,
    center: Vec3,
    r0: f64,
    horizon: f64,
    /// Side length of the periodic box.
    period: f64,
    /// Unit Wulff boundary `Dσ(ν(θ_k))` and the angles `θ_k`.
    samples: Vec<(f64, [f64; 2])>,
}

/// Signed distance with the normal at the foot point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedDistance {
    pub value: f64,
    /// `∇s`, the outer unit normal at the projection.
    pub normal: Vec3,
    /// `τ·D²σ(ν)τ` at the foot point (2-D), 1 for the sphere.
    pub stretch: f64,
    /// False when Newton failed and the nearest boundary sample was used.
    pub exact: bool,
}

impl ReferenceEvolution {
    /// Reference evolution on the torus `[0, period)^d` up to `horizon`,
    /// which must precede extinction. Anisotropic shapes are supported in
    /// 2-D; the Euclidean sphere in any dimension.
    pub fn new(sigma: Anisotropy, center: &[f64], r0: f64, horizon: f64, period: f64) -> Result<Self> {
        let d = sigma.dim();
        if center.len() != d {
            return Err(Error::input("center dimension differs from the anisotropy"));
        }
        if d != 2 && !sigma.is_euclidean() {
            return Err(Error::input("anisotropic reference evolutions are implemented in 2-D only"));
        }
        if !(r0 > 0.0 && period > 0.0 && horizon >= 0.0) {
            return Err(Error::input("r0 and period must be positive, horizon nonnegative"));
        }
        let extinction = r0 * r0 / (2.0 * (d as f64 - 1.0).max(1.0));
        if horizon >= extinction {
            return Err(Error::input(format!(
                "horizon {horizon} reaches the extinction time {extinction}"
            )));
        }
        let mut c = [0.0; 3];
        c[..d].copy_from_slice(center);
        let mut samples = Vec::new();
        if d == 2 {
            for k in 0..BOUNDARY_SAMPLES {
                let th = 2.0 * std::f64::consts::PI * k as f64 / BOUNDARY_SAMPLES as f64;
                let mut p = [0.0; 2];
                sigma.value_grad(&[th.cos(), th.sin()], &mut p);
                samples.push((th, p));
            }
        }
        Ok(Self {
            sigma,
            center: c,
            r0,
            horizon,
            period,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn sigma(&self) -> &Anisotropy {
        &self.sigma
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn extinction_time(&self) -> f64 {
        self.r0 * self.r0 / (2.0 * (self.dim() as f64 - 1.0).max(1.0))
    }

    /// `r(t) = (r0² − 2(d − 1)t)^{1/2}`.
    pub fn radius(&self, t: f64) -> f64 {
        (self.r0 * self.r0 - 2.0 * (self.dim() as f64 - 1.0) * t).max(0.0).sqrt()
    }

    fn displacement(&self, x: &Vec3) -> Vec3 {
        let mut y = [0.0; 3];
        for a in 0..self.dim() {
            let mut v = (x[a] - self.center[a]) / self.period;
            v -= (v + 0.5).floor();
            y[a] = v * self.period;
        }
        y
    }

    /// Whether `x` lies in `𝒜(t)`.
    pub fn contains(&self, x: &Vec3, t: f64) -> Result<bool> {
        let y = self.displacement(x);
        Ok(self.sigma.polar(&y[..self.dim()])? < self.radius(t))
    }

    /// Boundary points `c + r(t) Dσ(ν_k)` for `n` equally spaced angles (2-D).
    pub fn boundary_points(&self, t: f64, n: usize) -> Result<Vec<[f64; 2]>> {
        let pts = self.sigma.wulff_boundary_points(self.radius(t), n)?;
        Ok(pts
            .into_iter()
            .map(|p| [p[0] + self.center[0], p[1] + self.center[1]])
            .collect())
    }

    /// Euclidean signed distance from `x` to `∂𝒜(t)`, negative inside.
    pub fn signed_distance(&self, x: &Vec3, t: f64) -> SignedDistance {
        let d = self.dim();
        let y = self.displacement(x);
        let r = self.radius(t);
        if self.sigma.is_euclidean() {
            let ny = y[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut normal = [0.0; 3];
            if ny > 0.0 {
                for a in 0..d {
                    normal[a] = y[a] / ny;
                }
            } else {
                normal[0] = 1.0;
            }
            return SignedDistance {
                value: ny - r,
                normal,
                stretch: 1.0,
                exact: true,
            };
        }
        self.project_2d([y[0], y[1]], r)
    }

    /// `P(θ) = Dσ(ν(θ))` and the stretch `a(θ) = τ·D²σ(ν)τ`.
    fn boundary_at(&self, th: f64) -> ([f64; 2], f64) {
        let nu = [th.cos(), th.sin()];
        let mut p = [0.0; 2];
        self.sigma.value_grad(&nu, &mut p);
        let tau = [-nu[1], nu[0]];
        let a = match self.sigma.d2sigma(&nu) {
            Ok(h) => {
                tau[0] * (h[(0, 0)] * tau[0] + h[(0, 1)] * tau[1]) + tau[1] * (h[(1, 0)] * tau[0] + h[(1, 1)] * tau[1])
            }
            Err(_) => f64::NAN,
        };
        (p, a)
    }

    /// Foot point on `r·∂W` by damped Newton on `(y − rP(θ))·τ(θ) = 0`.
    fn project_2d(&self, y: [f64; 2], r: f64) -> SignedDistance {
        let (mut th, _) = self
            .samples
            .iter()
            .map(|(th, p)| (*th, (y[0] - r * p[0]).powi(2) + (y[1] - r * p[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0.0, 0.0));
        let residual = |th: f64| {
            let (p, a) = self.boundary_at(th);
            let nu = [th.cos(), th.sin()];
            let tau = [-nu[1], nu[0]];
            let diff = [y[0] - r * p[0], y[1] - r * p[1]];
            let g = diff[0] * tau[0] + diff[1] * tau[1];
            let s = diff[0] * nu[0] + diff[1] * nu[1];
            (g, -r * a - s, s, a)
        };
        let scale = r.max(y[0].hypot(y[1])).max(f64::MIN_POSITIVE);
        let mut exact = false;
        let (mut g, mut dg, _, _) = residual(th);
        for _ in 0..NEWTON_MAX {
            if g.abs() <= 1e-15 * scale {
                exact = true;
                break;
            }
            if !(dg.abs() > 0.0) || !dg.is_finite() {
                break;
            }
            let step = -g / dg;
            let mut lambda = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let cand = th + lambda * step;
                let (gc, dgc, _, _) = residual(cand);
                if gc.abs() < g.abs() {
                    th = cand;
                    g = gc;
                    dg = dgc;
                    moved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !moved || (lambda * step).abs() <= 1e-15 {
                exact = g.abs() <= 1e-12 * scale;
                break;
            }
        }
        let (_, _, s, a) = residual(th);
        let nu = [th.cos(), th.sin()];
        // Sign from the polar norm, magnitude from the foot point.
        let value = match self.sigma.polar(&y) {
            Ok(pn) if pn < r => -s.abs(),
            Ok(_) => s.abs(),
            Err(_) => s,
        };
        SignedDistance {
            value,
            normal: [nu[0], nu[1], 0.0],
            stretch: a,
            exact,
        }
    }

    /// Smallest radius of curvature of `r·∂W` (2-D) or `r` (sphere).
    pub fn reach(&self, t: f64) -> f64 {
        let r = self.radius(t);
        if self.sigma.is_euclidean() {
            return r;
        }
        (0..4096)
            .map(|k| self.boundary_at(2.0 * std::f64::consts::PI * k as f64 / 4096.0).1)
            .fold(f64::INFINITY, f64::min)
            * r
    }

    /// `div Dσ(∇s)` at `x`: `a/(r a + s)` on the parallel curve in 2-D,
    /// `(d − 1)/(r + s)` for the sphere.
    pub fn parallel_curvature(&self, x: &Vec3, t: f64) -> f64 {
        let sd = self.signed_distance(x, t);
        let r = self.radius(t);
        if self.sigma.is_euclidean() {
            (self.dim() as f64 - 1.0) / (r + sd.value)
        } else {
            sd.stretch / (r * sd.stretch + sd.value)
        }
    }
}

/// C² step from 1 at `t ≤ 0` to 0 at `t ≥ 1`.
fn fall(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// The calibration triple of a [`ReferenceEvolution`].
#[derive(Clone, Debug)]
pub struct Calibration {
    reference: ReferenceEvolution,
    delta: f64,
}

/// `(ξ, B, ϑ)` at one point together with the signed distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationSample {
    pub xi: Vec3,
    pub b: Vec3,
    pub theta: f64,
    pub distance: SignedDistance,
}

/// Builds the calibration with tube radius `delta` (default
/// `0.2·r(T)`), refusing radii beyond the reach of the boundary.
pub fn build_calibration(reference: &ReferenceEvolution, delta: Option<f64>) -> Result<Calibration> {
    let t_end = reference.horizon();
    let delta = delta.unwrap_or(DELTA_FRACTION * reference.radius(t_end));
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::input(format!("tube radius must lie in (0, 1], got {delta}")));
    }
    let reach = reference.reach(t_end);
    if !(delta < reach) {
        return Err(Error::input(format!(
            "tube radius {delta} exceeds the reach {reach} of the boundary at the horizon"
        )));
    }
    Ok(Calibration {
        reference: reference.clone(),
        delta,
    })
}

impl Calibration {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn reference(&self) -> &ReferenceEvolution {
        &self.reference
    }

    /// `ζ(s) = (1 − s²) η(|s|)` with `η = 1` up to `δ/2` and 0 from `δ`.
    pub fn zeta(&self, s: f64) -> f64 {
        let h = 0.5 * self.delta;
        let a = s.abs();
        if a >= self.delta {
            return 0.0;
        }
        (1.0 - s * s) * fall((a - h) / h)
    }

    /// Odd, nondecreasing, `f(s) = s` up to `δ/2`, `±δ` from `3δ/4`.
    pub fn truncation(&self, s: f64) -> f64 {
        let d = self.delta;
        let a = s.abs();
        let v = if a <= 0.5 * d {
            a
        } else if a >= 0.75 * d {
            d
        } else {
            let l = 0.25 * d;
            let t = (a - 0.5 * d) / l;
            0.5 * d + l * (t + 14.0 * t.powi(3) - 22.0 * t.powi(4) + 9.0 * t.powi(5))
        };
        v.copysign(s)
    }

    pub fn sample(&self, x: &Vec3, t: f64) -> CalibrationSample {
        let d = self.reference.dim();
        let sd = self.reference.signed_distance(x, t);
        let z = self.zeta(sd.value);
        let mut xi = [0.0; 3];
        for a in 0..d {
            xi[a] = z * sd.normal[a];
        }
        let mut b = [0.0; 3];
        if z != 0.0 {
            let h = (d as f64 - 1.0) / self.reference.radius(t);
            let mu = self.reference.sigma().value(&xi[..d]);
            for a in 0..d {
                b[a] = -mu * h * xi[a];
            }
        }
        CalibrationSample {
            xi,
            b,
            theta: self.truncation(sd.value),
            distance: sd,
        }
    }

    pub fn xi(&self, x: &Vec3, t: f64) -> Vec3 {
        self.sample(x, t).xi
    }

    pub fn b(&self, x: &Vec3, t: f64) -> Vec3 {
        self.sample(x, t).b
    }

    pub fn theta(&self, x: &Vec3, t: f64) -> f64 {
        self.sample(x, t).theta
    }
}

/// One fitted inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityFit {
    pub name: String,
    /// Upper bounds fit `C = max residual/dist^p`; lower bounds fit
    /// `c = min quantity/dist^p`.
    pub bound: &'static str,
    pub power: u32,
    pub constant: f64,
    pub max_residual: f64,
    pub location: Vec<f64>,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub delta: f64,
    pub samples: usize,
    pub times: Vec<f64>,
    /// `|ξ − ν|` maximized over boundary points.
    pub boundary_normal_defect: f64,
    pub fits: Vec<InequalityFit>,
    /// Points whose signed distance fell back to the nearest sample.
    pub inexact_projections: usize,
    pub passed: bool,
}

impl CalibrationReport {
    pub fn fit(&self, name: &str) -> Option<&InequalityFit> {
        self.fits.iter().find(|f| f.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// Residuals at one sample; order `cal1..cal4`, then `cal6..cal8` ratios.
struct PointEval {
    dist: f64,
    sdist: f64,
    residual: [f64; 4],
    one_minus_xi: f64,
    theta: f64,
    lemma_iii: f64,
    exact: bool,
}

fn fd4(f: impl Fn(f64) -> [f64; 4], h: f64) -> [f64; 4] {
    let (p1, m1, p2, m2) = (f(h), f(-h), f(2.0 * h), f(-2.0 * h));
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h);
    }
    out
}

impl Calibration {
    /// `[ξ, ϑ]` packed for differencing.
    fn packed_xi_theta(&self, x: &Vec3, t: f64) -> [f64; 4] {
        let s = self.sample(x, t);
        [s.xi[0], s.xi[1], s.xi[2], s.theta]
    }

    fn packed_b(&self, x: &Vec3, t: f64) -> [f64; 4] {
        let s = self.sample(x, t);
        [s.b[0], s.b[1], s.b[2], 0.0]
    }

    /// `F(ξ) = |ξ|ψ(|ξ|)Dσ(ξ)` at `x`.
    fn packed_flux(&self, x: &Vec3, t: f64) -> [f64; 4] {
        let d = self.reference.dim();
        let xi = self.xi(x, t);
        let mut f = [0.0; 3];
        self.reference.sigma().cahn_hoffman_into(&Cutoff, &xi[..d], &mut f);
        [f[0], f[1], f[2], 0.0]
    }

    fn eval_point(&self, x: &Vec3, t: f64) -> PointEval {
        let d = self.reference.dim();
        let here = self.sample(x, t);
        let sdist = here.distance.value;
        let dist = sdist.abs();
        let hs = FD_STEP * self.reference.r0();
        let ht = FD_STEP * self.reference.r0() * self.reference.r0();
        let quiet = dist > self.delta + 3.0 * hs;
        let mut residual = [0.0; 4];
        let mut lemma_iii = 0.0;
        if !quiet {
            let shifted = |a: usize, e: f64| {
                let mut y = *x;
                y[a] += e;
                y
            };
            // Spatial derivatives: column a holds ∂_a of each packed component.
            let mut dxt = [[0.0; 4]; 3];
            let mut db = [[0.0; 4]; 3];
            let mut div_f = 0.0;
            for a in 0..d {
                dxt[a] = fd4(|e| self.packed_xi_theta(&shifted(a, e), t), hs);
                db[a] = fd4(|e| self.packed_b(&shifted(a, e), t), hs);
                div_f += fd4(|e| self.packed_flux(&shifted(a, e), t), hs)[a];
            }
            let dt = fd4(|e| self.packed_xi_theta(x, t + e), ht);
            let (xi, b) = (here.xi, here.b);
            let mut r1 = [0.0; 3];
            let mut r2 = 0.0;
            let mut r3 = dt[3];
            for i in 0..d {
                let transport: f64 = (0..d).map(|j| b[j] * dxt[j][i]).sum();
                let stretch: f64 = (0..d).map(|j| db[i][j] * xi[j]).sum();
                r1[i] = dt[i] + transport + stretch;
                r2 += xi[i] * (dt[i] + transport);
                r3 += b[i] * dxt[i][3];
            }
            let mu = self.reference.sigma().value(&xi[..d]);
            let bxi: f64 = (0..d).map(|i| b[i] * xi[i]).sum();
            residual = [
                r1[..d].iter().map(|v| v * v).sum::<f64>().sqrt(),
                r2.abs(),
                r3.abs(),
                (bxi + mu * div_f).abs(),
            ];
            // ξ·(ξ·∇)B
            lemma_iii = (0..d)
                .map(|i| xi[i] * (0..d).map(|a| xi[a] * db[a][i]).sum::<f64>())
                .sum::<f64>()
                .abs();
        }
        let nx = here.xi[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
        PointEval {
            dist,
            sdist,
            residual,
            one_minus_xi: 1.0 - nx,
            theta: here.theta,
            lemma_iii,
            exact: here.distance.exact,
        }
    }
}

/// Evaluates every calibration inequality at the cell centers of `grid`
/// and the given times and fits the constants.
pub fn check_calibration(cal: &Calibration, grid: &Grid, times: &[f64]) -> Result<CalibrationReport> {
    let reference = cal.reference();
    let d = reference.dim();
    if grid.dim != d {
        return Err(Error::input("sample grid dimension differs from the reference"));
    }
    if times.is_empty() {
        return Err(Error::input("no sample times"));
    }
    let ht = FD_STEP * reference.r0() * reference.r0();
    let limit = reference.horizon();
    for &t in times {
        if t < 0.0 || t + 2.0 * ht > limit.max(2.0 * ht) + 1e-15 && t + 2.0 * ht >= reference.extinction_time() {
            return Err(Error::input(format!("sample time {t} is too close to extinction")));
        }
        if t > limit {
            return Err(Error::input(format!("sample time {t} lies beyond the horizon {limit}")));
        }
    }
    // Ignore ratios this close to the boundary; roundoff dominates there.
    let floor = 1e-6 * reference.r0();

    let points: Vec<(Vec3, f64)> = times
        .iter()
        .flat_map(|&t| (0..grid.cells()).map(move |k| (grid.center(k), t)))
        .collect();
    let evals: Vec<PointEval> = points.par_iter().map(|(x, t)| cal.eval_point(x, *t)).collect();

    let names = ["cal1", "cal2", "cal3", "cal4"];
    let powers = [1u32, 2, 1, 1];
    let mut fits = Vec::new();
    let mut failure = None;
    for (i, name) in names.iter().enumerate() {
        let mut best = (0.0f64, 0.0f64, 0usize);
        for (j, e) in evals.iter().enumerate() {
            let r = e.residual[i];
            if !r.is_finite() {
                failure.get_or_insert(format!("{name}: non-finite residual at sample {j}"));
                continue;
            }
            if e.dist > floor {
                let ratio = r / e.dist.powi(powers[i] as i32);
                if ratio > best.0 {
                    best = (ratio, best.1.max(r), j);
                }
            }
            best.1 = best.1.max(r);
        }
        fits.push(upper_fit(name, powers[i], best.0, best.1, &points[best.2], d));
    }
    {
        let mut best = (0.0f64, 0.0f64, 0usize);
        for (j, e) in evals.iter().enumerate() {
            if e.dist > floor {
                let ratio = e.lemma_iii / e.dist;
                if ratio > best.0 {
                    best = (ratio, best.1, j);
                }
            }
            best.1 = best.1.max(e.lemma_iii);
        }
        fits.push(upper_fit("xi_grad_b_xi", 1, best.0, best.1, &points[best.2], d));
    }
    // Coercivity: 1 − |ξ| ≥ c dist², ±ϑ ≥ c dist on either side.
    let lower = |name: &str, power: u32, pick: &dyn Fn(&PointEval) -> Option<f64>| {
        let mut best = (f64::INFINITY, 0usize);
        for (j, e) in evals.iter().enumerate() {
            if e.dist <= floor {
                continue;
            }
            if let Some(q) = pick(e) {
                let ratio = q / e.dist.powi(power as i32);
                if ratio < best.0 {
                    best = (ratio, j);
                }
            }
        }
        InequalityFit {
            name: name.to_string(),
            bound: "lower",
            power,
            constant: best.0,
            max_residual: 0.0,
            location: points[best.1].0[..d].to_vec(),
            time: points[best.1].1,
        }
    };
    fits.push(lower("cal6", 2, &|e| Some(e.one_minus_xi)));
    fits.push(lower("cal7", 1, &|e| (e.sdist > 0.0).then_some(e.theta)));
    fits.push(lower("cal8", 1, &|e| (e.sdist < 0.0).then_some(-e.theta)));
    {
        let mut best = (0.0f64, 0usize);
        for (j, e) in evals.iter().enumerate() {
            if e.dist > floor {
                let ratio = e.one_minus_xi / (e.dist * e.dist);
                if ratio > best.0 {
                    best = (ratio, j);
                }
            }
        }
        fits.push(upper_fit("one_minus_xi_upper", 2, best.0, 0.0, &points[best.1], d));
    }

    // ξ = ν on the boundary.
    let mut boundary_normal_defect: f64 = 0.0;
    for &t in times {
        for y in boundary_probe(reference, t)? {
            let s = cal.sample(&y, t);
            let sd = s.distance;
            let nu = sd.normal;
            let dev = (0..d).map(|i| (s.xi[i] - nu[i]).powi(2)).sum::<f64>().sqrt() + sd.value.abs();
            boundary_normal_defect = boundary_normal_defect.max(dev);
        }
    }

    let inexact_projections = evals.iter().filter(|e| !e.exact).count();
    let passed = failure.is_none()
        && fits.iter().all(|f| {
            f.constant.is_finite() && (f.bound == "upper" || f.constant > 0.0)
        })
        && boundary_normal_defect <= 1e-8;
    if let Some(msg) = failure {
        log::error!("{msg}");
    }
    Ok(CalibrationReport {
        delta: cal.delta(),
        samples: evals.len(),
        times: times.to_vec(),
        boundary_normal_defect,
        fits,
        inexact_projections,
        passed,
    })
}

fn upper_fit(name: &str, power: u32, constant: f64, max_residual: f64, at: &(Vec3, f64), d: usize) -> InequalityFit {
    InequalityFit {
        name: name.to_string(),
        bound: "upper",
        power,
        constant,
        max_residual,
        location: at.0[..d].to_vec(),
        time: at.1,
    }
}

/// Points on `∂𝒜(t)`.
fn boundary_probe(reference: &ReferenceEvolution, t: f64) -> Result<Vec<Vec3>> {
    let d = reference.dim();
    let c = reference.center();
    if d == 2 {
        return Ok(reference
            .boundary_points(t, 64)?
            .into_iter()
            .map(|p| [p[0], p[1], 0.0])
            .collect());
    }
    let r = reference.radius(t);
    Ok(crate::numeric::sphere_directions(d, 64)
        .into_iter()
        .map(|dir| {
            let mut y = *c;
            for a in 0..d {
                y[a] += r * dir[a];
            }
            y
        })
        .collect())
}

/// One entry of the stability series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub step: usize,
    pub t: f64,
    pub rel_entropy: f64,
    pub bulk_error: f64,
    /// `Σ (V − B·ξ)² weight / (4 max μ)`.
    pub vel_cross_term: f64,
    /// `(E_bulk(0) + E_rel(0) + offset) exp(C t)`.
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub growth_rate: f64,
    pub offset: f64,
    pub series: Vec<StabilityPoint>,
    /// False when `ϑ` vanishes on the whole grid and the bulk error carries
    /// no information.
    pub informative: bool,
    pub within_envelope: bool,
    /// Smallest rate whose envelope contains the observed series.
    pub observed_rate: f64,
}

/// Relative entropy, bulk error and velocity cross term along the retained
/// states of `traj` against the calibration, with the Grönwall envelope
/// driven by `growth_rate` and the discretization `offset`.
pub fn stability_monitor(
    traj: &Trajectory,
    cal: &Calibration,
    well: &DoubleWell,
    growth_rate: f64,
    offset: f64,
) -> Result<StabilityReport> {
    let reference = cal.reference();
    let d = reference.dim();
    let sigma = reference.sigma();
    let max_mu = sigma.stats().sigma_max;
    let h = traj.config.h;
    let retained = &traj.retained;
    let index = |s: usize| retained.iter().position(|(k, _, _)| *k == s);

    let evaluate = |i: usize| -> Result<Option<StabilityPoint>> {
        let (step, t, u) = &retained[i];
        let (step, t) = (*step, *t);
        if t > reference.horizon() + 1e-12 {
            return Ok(None);
        }
        let iface = diagnostics::extract_interface(u);
        let xi = |x: &Vec3| cal.xi(x, t);
        let rel = diagnostics::relative_entropy(&iface, xi, sigma, &Cutoff)?;
        let bulk = diagnostics::bulk_error(u, |x: &Vec3| cal.theta(x, t));
        let cross = match (step.checked_sub(1).and_then(index), index(step + 1)) {
            (Some(p), Some(n)) => {
                let v = diagnostics::normal_velocity(&iface, &retained[p].2, u, &retained[n].2, h, well)?;
                Some(velocity_cross(&iface, &v, cal, t, d) / (4.0 * max_mu))
            }
            _ => None,
        };
        Ok(cross.map(|c| StabilityPoint {
            step,
            t,
            rel_entropy: rel,
            bulk_error: bulk,
            vel_cross_term: c,
            envelope: 0.0,
        })
        .or(Some(StabilityPoint {
            step,
            t,
            rel_entropy: rel,
            bulk_error: bulk,
            vel_cross_term: f64::NAN,
            envelope: 0.0,
        })))
    };
    let mut series: Vec<StabilityPoint> = (0..retained.len())
        .into_par_iter()
        .map(evaluate)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    series.sort_by_key(|p| p.step);
    if series.is_empty() {
        return Err(Error::input("no retained states within the calibration horizon"));
    }
    let base = series[0].rel_entropy + series[0].bulk_error + offset;
    let mut within = true;
    let mut observed_rate: f64 = 0.0;
    for p in &mut series {
        p.envelope = base * (growth_rate * p.t).exp();
        let total = p.rel_entropy + p.bulk_error;
        within &= total <= p.envelope;
        if p.t > 0.0 && total > base {
            observed_rate = observed_rate.max((total / base).ln() / p.t);
        }
    }
    let first = &traj.retained[0].2;
    let g = first.grid();
    let informative = (0..g.cells()).any(|k| cal.theta(&g.center(k), 0.0) != 0.0);
    Ok(StabilityReport {
        growth_rate,
        offset,
        series,
        informative,
        within_envelope: within,
        observed_rate,
    })
}

fn velocity_cross(iface: &Interface, v: &VelocityEstimate, cal: &Calibration, t: f64, d: usize) -> f64 {
    iface
        .facets
        .iter()
        .zip(&v.values)
        .filter_map(|(f, v)| {
            let v = (*v)?;
            let s = cal.sample(&f.midpoint, t);
            let bxi: f64 = (0..d).map(|i| s.b[i] * s.xi[i]).sum();
            Some((v - bxi).powi(2) * f.weight)
        })
        .sum()
}

/// Growth rate for the Grönwall envelope from a calibration report: the
/// largest fitted upper constant among the evolution and compatibility
/// inequalities.
pub fn growth_rate(report: &CalibrationReport) -> f64 {
    report
        .fits
        .iter()
        .filter(|f| matches!(f.name.as_str(), "cal1" | "cal2" | "cal3" | "cal4"))
        .map(|f| f.constant)
        .fold(0.0, f64::max)
}

/// `∇B` of the calibration at `(x, t)` by fourth-order differences.
pub fn grad_b(cal: &Calibration, x: &Vec3, t: f64) -> Mat3 {
    let d = cal.reference().dim();
    let hs = FD_STEP * cal.reference().r0();
    let mut m = [[0.0; 3]; 3];
    for a in 0..d {
        let col = fd4(
            |e| {
                let mut y = *x;
                y[a] += e;
                cal.packed_b(&y, t)
            },
            hs,
        );
        for i in 0..d {
            m[i][a] = col[i];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng;
    use rand::Rng;

    fn circle() -> ReferenceEvolution {
        ReferenceEvolution::new(Anisotropy::euclidean(2).unwrap(), &[0.5, 0.5], 0.3, 0.02, 1.0).unwrap()
    }

    fn ellipse() -> ReferenceEvolution {
        ReferenceEvolution::new(Anisotropy::diagonal(&[4.0, 1.0]).unwrap(), &[0.5, 0.5], 0.2, 0.01, 1.0).unwrap()
    }

    #[test]
    fn circle_distance_is_exact() {
        let r = circle();
        let sd = r.signed_distance(&[0.5 + 0.35, 0.5, 0.0], 0.0);
        assert!((sd.value - 0.05).abs() < 1e-15);
        let sd = r.signed_distance(&[0.5, 0.5 - 0.2, 0.0], 0.0);
        assert!((sd.value + 0.1).abs() < 1e-15);
    }

    #[test]
    fn boundary_samples_have_zero_distance() {
        let r = ellipse();
        for t in [0.0, 0.005, 0.01] {
            for p in r.boundary_points(t, 97).unwrap() {
                let sd = r.signed_distance(&[p[0], p[1], 0.0], t);
                assert!(sd.value.abs() < 1e-10, "{}", sd.value);
                assert!(sd.exact);
            }
        }
    }

    #[test]
    fn ellipse_distance_is_eikonal() {
        let r = ellipse();
        let mut g = rng(17);
        let h = 1e-6;
        for _ in 0..1000 {
            let th: f64 = g.gen_range(0.0..std::f64::consts::TAU);
            let s: f64 = g.gen_range(-0.02..0.02);
            let p = r.boundary_points(0.0, 1).unwrap()[0];
            let _ = p;
            let rad = r.radius(0.0);
            let mut q = [0.0; 2];
            r.sigma().value_grad(&[th.cos(), th.sin()], &mut q);
            let x = [0.5 + rad * q[0] + s * th.cos(), 0.5 + rad * q[1] + s * th.sin(), 0.0];
            let mut grad = [0.0; 2];
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                grad[a] = (r.signed_distance(&xp, 0.0).value - r.signed_distance(&xm, 0.0).value) / (2.0 * h);
            }
            let n = grad[0].hypot(grad[1]);
            assert!((n - 1.0).abs() < 1e-4, "{n}");
            assert!((r.signed_distance(&x, 0.0).value - s).abs() < 1e-10);
        }
    }

    #[test]
    fn transported_boundary_stays_on_the_reference() {
        let r = ellipse();
        let mut q = [0.0; 2];
        let th: f64 = 0.7;
        r.sigma().value_grad(&[th.cos(), th.sin()], &mut q);
        for k in 0..=10 {
            let t = 0.001 * k as f64;
            let rad = r.radius(t);
            let x = [0.5 + rad * q[0], 0.5 + rad * q[1], 0.0];
            assert!(r.signed_distance(&x, t).value.abs() < 1e-8);
        }
    }

    #[test]
    fn calibration_on_the_boundary() {
        for r in [circle(), ellipse()] {
            let cal = build_calibration(&r, None).unwrap();
            let t = 0.005;
            let rad = r.radius(t);
            for p in r.boundary_points(t, 32).unwrap() {
                let x = [p[0], p[1], 0.0];
                let s = cal.sample(&x, t);
                let nu = s.distance.normal;
                assert!((s.xi[0] - nu[0]).abs() < 1e-12 && (s.xi[1] - nu[1]).abs() < 1e-12);
                let bn = s.b[0] * nu[0] + s.b[1] * nu[1];
                let mu = r.sigma().value(&nu[..2]);
                assert!((bn + mu / rad).abs() < 1e-10);
                assert!(s.theta.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn circle_b_matches_closed_form() {
        let r = circle();
        let cal = build_calibration(&r, None).unwrap();
        let t = 0.01;
        let rad = r.radius(t);
        let mut g = rng(3);
        for _ in 0..500 {
            let x: Vec3 = [g.gen_range(0.0..1.0), g.gen_range(0.0..1.0), 0.0];
            let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
            let dist = dx.hypot(dy);
            let z = cal.zeta(dist - rad);
            let expect = [-z * z / rad * dx / dist, -z * z / rad * dy / dist];
            let b = cal.b(&x, t);
            assert!((b[0] - expect[0]).abs() < 1e-6 && (b[1] - expect[1]).abs() < 1e-6);
            if (dist - rad).abs() >= cal.delta() {
                assert_eq!(cal.xi(&x, t), [0.0; 3]);
                assert_eq!(b, [0.0; 3]);
                assert_eq!(cal.theta(&x, t).abs(), cal.delta());
            }
        }
    }

    #[test]
    fn truncations_are_smooth_and_monotone() {
        let cal = build_calibration(&circle(), None).unwrap();
        let d = cal.delta();
        let h = 1e-9 * d;
        for s0 in [0.5 * d, 0.75 * d, d, -0.5 * d, -d] {
            for f in [&|s: f64| cal.zeta(s) as f64, &|s: f64| cal.truncation(s)] as [&dyn Fn(f64) -> f64; 2] {
                assert!((f(s0 + h) - f(s0 - h)).abs() < 1e-8);
                let left = (f(s0 - h) - f(s0 - 2.0 * h)) / h;
                let right = (f(s0 + 2.0 * h) - f(s0 + h)) / h;
                assert!((left - right).abs() < 1e-4 * (1.0 + left.abs()), "{s0} {left} {right}");
            }
        }
        let mut prev = cal.truncation(-2.0 * d);
        for k in 0..=4000 {
            let s = -2.0 * d + 4.0 * d * k as f64 / 4000.0;
            let v = cal.truncation(s);
            assert!(v >= prev - 1e-15);
            assert!(s * (cal.zeta(s + 1e-7) - cal.zeta(s - 1e-7)) <= 1e-15);
            prev = v;
        }
        assert_eq!(cal.truncation(0.8 * d), d);
    }

    #[test]
    fn reach_gate() {
        let r = ellipse();
        assert!(build_calibration(&r, Some(0.9 * r.reach(r.horizon()))).is_ok());
        assert!(build_calibration(&r, Some(1.1 * r.reach(r.horizon()))).is_err());
    }

    #[test]
    fn circle_calibration_passes() {
        let r = circle();
        let cal = build_calibration(&r, None).unwrap();
        let grid = Grid::unit(2, 48).unwrap();
        let report = check_calibration(&cal, &grid, &[0.0, 0.01, 0.02]).unwrap();
        assert!(report.passed, "{}", report.to_json());
        let c6 = report.fit("cal6").unwrap().constant;
        assert!((c6 - 1.0).abs() < 1e-6, "{c6}");
        let rmin = r.radius(0.02);
        // The cutoff drops across δ/2, so constants scale like δ^-(1+p)/r.
        let d = cal.delta();
        for name in ["cal1", "cal2", "cal3", "cal4"] {
            let fit = report.fit(name).unwrap();
            let bound = 10.0 / (d.powi(1 + fit.power as i32) * rmin);
            assert!(fit.constant > 0.0 && fit.constant <= bound, "{}", report.to_json());
        }
    }

    #[test]
    fn ellipse_calibration_passes() {
        let r = ellipse();
        let cal = build_calibration(&r, None).unwrap();
        let grid = Grid::unit(2, 32).unwrap();
        let report = check_calibration(&cal, &grid, &[0.0, 0.01]).unwrap();
        assert!(report.passed, "{}", report.to_json());
        assert_eq!(report.inexact_projections, 0);
    }
}
