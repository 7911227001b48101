//! Sharp-interface diagnostics of diffuse states: equipartition, extracted
//! interfaces, normal velocities, relative entropies, the energy-stress
//! tensor and the distributional curvature-flow residual.
//!
//! Diffuse gradients are taken at cell centers by fourth-order centered
//! differences.

mod interface;

pub use interface::{extract_interface, hausdorff_to_polyline, Facet, Interface, LEVEL};

use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::{Anisotropy, Cutoff, Mobility};
use crate::error::{Error, Result};
use crate::field::{centered_gradient_into, Grid, PeriodicField};
use crate::numeric::pairwise_sum;
use crate::potential::DoubleWell;
use crate::solver::Trajectory;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Order of the centered differences used for diffuse gradients.
pub const GRADIENT_ORDER: usize = 4;

/// Facets whose diffuse gradient falls below this are left out of velocity
/// norms.
pub const DEGENERATE_GRADIENT: f64 = 1e-12;

/// Slack allowed on `|ξ| ≤ 1`.
pub const XI_SLACK: f64 = 1e-9;

const PAR_MIN: usize = 4096;

fn centered_gradient(u: &PeriodicField) -> Vec<f64> {
    let g = u.grid();
    let mut out = vec![0.0; g.cells() * g.dim];
    centered_gradient_into(g, u.data(), GRADIENT_ORDER, &mut out);
    out
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("epsilon must be positive, got {eps}")))
    }
}

/// Cell sum `Δx^d Σ_k term(k, x_k, ∇u_k)` reduced in fixed order.
fn cell_sum<F>(u: &PeriodicField, grad: &[f64], term: F) -> f64
where
    F: Fn(usize, &Vec3, &[f64]) -> f64 + Sync,
{
    let g = u.grid();
    let d = g.dim;
    let values: Vec<f64> = (0..g.cells())
        .into_par_iter()
        .with_min_len(PAR_MIN)
        .map(|k| term(k, &g.center(k), &grad[k * d..(k + 1) * d]))
        .collect();
    g.cell_volume() * pairwise_sum(&values)
}

/// `Δx^d Σ |ε f(−∇u)/2 − W(u)/(2ε)|`.
pub fn equipartition_defect(u: &PeriodicField, eps: f64, a: &Anisotropy, w: &DoubleWell) -> Result<f64> {
    check_eps(eps)?;
    let grad = centered_gradient(u);
    let data = u.data();
    let d = u.grid().dim;
    Ok(cell_sum(u, &grad, |k, _, gk| {
        let p: Vec<f64> = gk.iter().map(|v| -v).collect();
        let s = a.value(&p[..d]);
        (0.5 * eps * s * s - 0.5 * w.w(data[k]) / eps).abs()
    }))
}

/// Per-facet normal velocity; `None` marks facets excluded for a
/// degenerate diffuse gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityEstimate {
    pub values: Vec<Option<f64>>,
    pub excluded: usize,
}

impl VelocityEstimate {
    /// `(Σ V² weight)^{1/2}` over the retained facets.
    pub fn l2(&self, iface: &Interface) -> f64 {
        self.values
            .iter()
            .zip(&iface.facets)
            .filter_map(|(v, f)| v.map(|v| v * v * f.weight))
            .sum::<f64>()
            .sqrt()
    }
}

/// `V = (φ(u_next) − φ(u_prev)) / (2h |∇(φ∘u)|)` at every facet midpoint of
/// `iface`, the interface of `u`; `h` is the time step between consecutive
/// states.
pub fn normal_velocity(
    iface: &Interface,
    u_prev: &PeriodicField,
    u: &PeriodicField,
    u_next: &PeriodicField,
    h: f64,
    w: &DoubleWell,
) -> Result<VelocityEstimate> {
    if u_prev.grid() != u.grid() || u_next.grid() != u.grid() || iface.grid != *u.grid() {
        return Err(Error::input("velocity inputs live on different grids"));
    }
    if !(h > 0.0) {
        return Err(Error::input(format!("time step must be positive, got {h}")));
    }
    let g = u.grid();
    let d = g.dim;
    let phi = |f: &PeriodicField| f.map(|z| w.phi(z));
    let (p_prev, p_cur, p_next) = (phi(u_prev), phi(u), phi(u_next));
    let grad = centered_gradient(&p_cur);
    let comps: Vec<PeriodicField> = (0..d)
        .map(|a| PeriodicField::from_vec(*g, grad.iter().skip(a).step_by(d).copied().collect()))
        .collect::<Result<_>>()?;
    let mut excluded = 0;
    let values = iface
        .facets
        .iter()
        .map(|f| {
            let x = &f.midpoint[..d];
            let gn = comps.iter().map(|c| c.sample(x).powi(2)).sum::<f64>().sqrt();
            if gn < DEGENERATE_GRADIENT {
                excluded += 1;
                None
            } else {
                Some((p_next.sample(x) - p_prev.sample(x)) / (2.0 * h * gn))
            }
        })
        .collect();
    Ok(VelocityEstimate { values, excluded })
}

/// Interface and velocity of the retained state at `step`, which needs the
/// states at `step − 1` and `step + 1` retained as well.
pub fn trajectory_velocity(traj: &Trajectory, step: usize, w: &DoubleWell) -> Result<(Interface, VelocityEstimate)> {
    let find = |s: usize| {
        traj.retained
            .iter()
            .find(|(k, _, _)| *k == s)
            .map(|(_, _, u)| u)
            .ok_or_else(|| Error::input(format!("state at step {s} was not retained")))
    };
    if step == 0 {
        return Err(Error::input("velocity needs a state before the requested step"));
    }
    let (prev, cur, next) = (find(step - 1)?, find(step)?, find(step + 1)?);
    let iface = extract_interface(cur);
    let v = normal_velocity(&iface, prev, cur, next, traj.config.h, w)?;
    Ok((iface, v))
}

fn check_xi(xi: &Vec3, d: usize) -> Result<()> {
    let n = xi[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n <= 1.0 + XI_SLACK) {
        return Err(Error::input(format!("|ξ| = {n} exceeds 1")));
    }
    Ok(())
}

/// Clamps `ξ` into the closed unit ball after the slack check.
fn unit_ball(xi: &Vec3, d: usize) -> Vec3 {
    let n = xi[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 1.0 {
        [xi[0] / n, xi[1] / n, xi[2] / n]
    } else {
        *xi
    }
}

/// `Δx^d Σ (σ(−∇u) + F(ξ)·∇u) √W(u)` with `F` the truncated Cahn–Hoffman
/// map.
pub fn eps_relative_entropy<X>(u: &PeriodicField, xi: X, a: &Anisotropy, w: &DoubleWell, cutoff: &Cutoff) -> Result<f64>
where
    X: Fn(&Vec3) -> Vec3 + Sync,
{
    let g = u.grid();
    let d = g.dim;
    let grad = centered_gradient(u);
    let data = u.data();
    let bad = (0..g.cells())
        .into_par_iter()
        .with_min_len(PAR_MIN)
        .find_first(|&k| check_xi(&xi(&g.center(k)), d).is_err());
    if let Some(k) = bad {
        check_xi(&xi(&g.center(k)), d)?;
    }
    Ok(cell_sum(u, &grad, |k, x, gk| {
        let xv = unit_ball(&xi(x), d);
        let mut f = [0.0; 3];
        a.cahn_hoffman_into(cutoff, &xv[..d], &mut f);
        let mut p = [0.0; 3];
        let mut fg = 0.0;
        for i in 0..d {
            p[i] = -gk[i];
            fg += f[i] * gk[i];
        }
        (a.value(&p[..d]) + fg) * w.w(data[k]).max(0.0).sqrt()
    }))
}

/// `Σ (σ(ν) − F(ξ)·ν) weight` over the facets.
pub fn relative_entropy<X>(iface: &Interface, xi: X, a: &Anisotropy, cutoff: &Cutoff) -> Result<f64>
where
    X: Fn(&Vec3) -> Vec3,
{
    let d = iface.grid.dim;
    let mut acc = 0.0;
    for f in &iface.facets {
        let xv = xi(&f.midpoint);
        check_xi(&xv, d)?;
        let xv = unit_ball(&xv, d);
        acc += a.dziuk_gap(cutoff, &f.normal[..d], &xv[..d])? * f.weight;
    }
    Ok(acc)
}

/// `Σ |ξ − ν|² weight` over the facets.
pub fn tilt_excess<X>(iface: &Interface, xi: X) -> f64
where
    X: Fn(&Vec3) -> Vec3,
{
    let d = iface.grid.dim;
    iface
        .facets
        .iter()
        .map(|f| {
            let xv = xi(&f.midpoint);
            (0..d).map(|i| (xv[i] - f.normal[i]).powi(2)).sum::<f64>() * f.weight
        })
        .sum()
}

/// `Δx^d Σ |ϑ| |χ_A − χ_ref|` where `χ_A = [u ≥ 1/2]` and the reference
/// phase is `{ϑ < 0}`.
pub fn bulk_error<T>(u: &PeriodicField, theta: T) -> f64
where
    T: Fn(&Vec3) -> f64 + Sync,
{
    let g = u.grid();
    let data = u.data();
    let values: Vec<f64> = (0..g.cells())
        .into_par_iter()
        .with_min_len(PAR_MIN)
        .map(|k| {
            let t = theta(&g.center(k));
            let ours = data[k] >= LEVEL;
            let reference = t < 0.0;
            if ours != reference {
                t.abs()
            } else {
                0.0
            }
        })
        .collect();
    g.cell_volume() * pairwise_sum(&values)
}

/// Energy-stress tensor `T = ½(εf + W/ε) I + ε ∇u ⊗ ½Df(−∇u)` per cell.
#[derive(Clone, Debug)]
pub struct StressField {
    pub grid: Grid,
    pub tensors: Vec<Mat3>,
}

impl StressField {
    pub fn trace(&self, k: usize) -> f64 {
        (0..self.grid.dim).map(|i| self.tensors[k][i][i]).sum()
    }

    /// `Δx^d Σ ∇B(x_k) : T_k` with `∇B_ij = ∂_j B_i`.
    pub fn pair<G>(&self, grad_b: G) -> f64
    where
        G: Fn(&Vec3) -> Mat3 + Sync,
    {
        let g = &self.grid;
        let values: Vec<f64> = (0..g.cells())
            .into_par_iter()
            .with_min_len(PAR_MIN)
            .map(|k| frobenius(&grad_b(&g.center(k)), &self.tensors[k], g.dim))
            .collect();
        g.cell_volume() * pairwise_sum(&values)
    }
}

fn frobenius(a: &Mat3, b: &Mat3, d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Stress tensor of a single cell from its gradient and value.
pub fn stress_at(grad: &[f64], u: f64, eps: f64, a: &Anisotropy, w: &DoubleWell) -> Mat3 {
    let d = grad.len();
    let mut p = [0.0; 3];
    for i in 0..d {
        p[i] = -grad[i];
    }
    let mut df = [0.0; 3];
    let f = a.f_grad(&p[..d], &mut df[..d]);
    let iso = 0.5 * (eps * f + w.w(u) / eps);
    let mut t = [[0.0; 3]; 3];
    for i in 0..d {
        t[i][i] = iso;
        for j in 0..d {
            t[i][j] += eps * grad[i] * 0.5 * df[j];
        }
    }
    t
}

pub fn stress_tensor(u: &PeriodicField, eps: f64, a: &Anisotropy, w: &DoubleWell) -> Result<StressField> {
    check_eps(eps)?;
    let g = *u.grid();
    let d = g.dim;
    let grad = centered_gradient(u);
    let data = u.data();
    let tensors = (0..g.cells())
        .into_par_iter()
        .with_min_len(PAR_MIN)
        .map(|k| stress_at(&grad[k * d..(k + 1) * d], data[k], eps, a, w))
        .collect();
    Ok(StressField { grid: g, tensors })
}

/// `Σ ∇B : (σ(ν) I − ν ⊗ Dσ(ν)) weight` over the facets.
pub fn curvature_pairing<G>(iface: &Interface, a: &Anisotropy, grad_b: G) -> f64
where
    G: Fn(&Vec3) -> Mat3,
{
    let d = iface.grid.dim;
    let mut acc = 0.0;
    for f in &iface.facets {
        let nu = &f.normal[..d];
        let mut ds = [0.0; 3];
        let s = a.value_grad(nu, &mut ds[..d]);
        let gb = grad_b(&f.midpoint);
        let mut term = 0.0;
        for i in 0..d {
            term += s * gb[i][i];
            for j in 0..d {
                term -= gb[i][j] * nu[i] * ds[j];
            }
        }
        acc += term * f.weight;
    }
    acc
}

/// Discrepancy between the diffuse stress pairing and the sharp curvature
/// pairing for the test field with gradient `grad_b`.
pub fn curvature_residual<G>(
    u: &PeriodicField,
    iface: &Interface,
    grad_b: G,
    eps: f64,
    a: &Anisotropy,
    w: &DoubleWell,
) -> Result<f64>
where
    G: Fn(&Vec3) -> Mat3 + Sync,
{
    let stress = stress_tensor(u, eps, a, w)?;
    Ok((stress.pair(&grad_b) - curvature_pairing(iface, a, &grad_b)).abs())
}

/// The two sides of the distributional law `V = −μ(ν) H_σ` tested against
/// a vector field `B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McfResidual {
    /// `Σ V (B·ν) / μ(ν) weight`.
    pub velocity_term: f64,
    /// `Σ ∇B : (σ(ν) I − ν ⊗ Dσ(ν)) weight`.
    pub curvature_term: f64,
    /// `|velocity_term + curvature_term|`.
    pub residual: f64,
}

pub fn mcf_residual<B, G>(
    iface: &Interface,
    velocity: &VelocityEstimate,
    b: B,
    grad_b: G,
    a: &Anisotropy,
    mobility: &Mobility,
) -> Result<McfResidual>
where
    B: Fn(&Vec3) -> Vec3,
    G: Fn(&Vec3) -> Mat3,
{
    if velocity.values.len() != iface.len() {
        return Err(Error::input("velocity estimate does not match the interface"));
    }
    let d = iface.grid.dim;
    let velocity_term: f64 = iface
        .facets
        .iter()
        .zip(&velocity.values)
        .filter_map(|(f, v)| {
            let v = (*v)?;
            let nu = &f.normal[..d];
            let bv = b(&f.midpoint);
            let bn: f64 = (0..d).map(|i| bv[i] * nu[i]).sum();
            Some(v * bn / mobility.mu(nu) * f.weight)
        })
        .sum();
    let curvature_term = curvature_pairing(iface, a, grad_b);
    Ok(McfResidual {
        velocity_term,
        curvature_term,
        residual: (velocity_term + curvature_term).abs(),
    })
}

/// One row of the diagnostics CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub equip_defect: Option<f64>,
    pub sharp_energy: Option<f64>,
    pub interface_length: Option<f64>,
    pub eps_rel_entropy: Option<f64>,
    pub rel_entropy: Option<f64>,
    pub bulk_error: Option<f64>,
    pub velocity_l2: Option<f64>,
    pub mcf_residual: Option<f64>,
    pub curvature_residual: Option<f64>,
    pub rel_entropy_cal: Option<f64>,
    pub bulk_error_cal: Option<f64>,
    pub vel_cross_term: Option<f64>,
    pub gronwall_envelope: Option<f64>,
}

/// `B(x) = x − center` (periodic displacement) and its gradient, the
/// identity.
pub fn radial_field(grid: Grid, center: Vec3) -> (impl Fn(&Vec3) -> Vec3 + Sync, impl Fn(&Vec3) -> Mat3 + Sync) {
    let b = move |x: &Vec3| grid.periodic_delta(x, &center);
    let gb = move |_: &Vec3| {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(grid.dim) {
            row[i] = 1.0;
        }
        m
    };
    (b, gb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{profile, standard_well};
    use crate::solver::initial_wulff;
    use std::f64::consts::PI;

    fn planar(n: usize, eps: f64) -> PeriodicField {
        let w = standard_well();
        let prof = profile(&w);
        let g = Grid::unit(1, n).unwrap();
        // Two interfaces at 1/4 and 3/4, phase 1 in the middle.
        PeriodicField::from_fn(g, |x| prof.eval((0.25 - (x[0] - 0.5).abs()) / eps))
    }

    #[test]
    fn equipartition_of_the_exact_profile() {
        let w = standard_well();
        let a = Anisotropy::euclidean(1).unwrap();
        let u = planar(2048, 0.02);
        let defect = equipartition_defect(&u, 0.02, &a, &w).unwrap();
        assert!(defect <= 1e-3, "{defect}");
        let g = Grid::unit(2, 16).unwrap();
        let a2 = Anisotropy::euclidean(2).unwrap();
        assert_eq!(equipartition_defect(&PeriodicField::constant(g, 1.0), 0.1, &a2, &w).unwrap(), 0.0);
    }

    #[test]
    fn circle_energy_and_entropies() {
        let w = standard_well();
        let prof = profile(&w);
        let a = Anisotropy::euclidean(2).unwrap();
        let grid = Grid::unit(2, 256).unwrap();
        let eps = 1.0 / 64.0;
        let u = initial_wulff(&a, &prof, &[0.5, 0.5], 0.3, eps, &grid).unwrap();
        let iface = extract_interface(&u);
        let e = iface.sharp_energy(&a);
        assert!((e - 2.0 * PI * 0.3).abs() < 0.02 * 2.0 * PI * 0.3);

        let zero = |_: &Vec3| [0.0; 3];
        let diffuse = eps_relative_entropy(&u, zero, &a, &w, &Cutoff).unwrap();
        assert!((diffuse - e).abs() < 0.02 * e, "{diffuse} vs {e}");

        let too_long = |_: &Vec3| [1.1, 0.0, 0.0];
        assert!(eps_relative_entropy(&u, too_long, &a, &w, &Cutoff).is_err());
        assert!(relative_entropy(&iface, too_long, &a, &Cutoff).is_err());

        let radial = |x: &Vec3| {
            let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
            let r = dx.hypot(dy).max(1e-300);
            [dx / r, dy / r, 0.0]
        };
        let rel = relative_entropy(&iface, radial, &a, &Cutoff).unwrap();
        assert!((-1e-12..1e-3).contains(&rel), "{rel}");
    }

    #[test]
    fn diffuse_normal_makes_eps_entropy_vanish() {
        let w = standard_well();
        let a = Anisotropy::euclidean(1).unwrap();
        let u = planar(2048, 0.02);
        let grad = centered_gradient(&u);
        let g = *u.grid();
        let xi = |x: &Vec3| {
            let k = ((x[0] / g.dx() - 0.5).round() as usize) % g.n;
            let n = grad[k].abs();
            if n > 0.0 {
                [-grad[k] / n, 0.0, 0.0]
            } else {
                [0.0; 3]
            }
        };
        let e = eps_relative_entropy(&u, xi, &a, &w, &Cutoff).unwrap();
        assert!(e.abs() <= 1e-3, "{e}");
        let c = PeriodicField::constant(g, 0.0);
        assert_eq!(eps_relative_entropy(&c, |_: &Vec3| [0.0; 3], &a, &w, &Cutoff).unwrap(), 0.0);
    }

    #[test]
    fn tilt_excess_controlled_by_relative_entropy() {
        let w = standard_well();
        let prof = profile(&w);
        let a = Anisotropy::diagonal(&[4.0, 1.0]).unwrap();
        let grid = Grid::unit(2, 128).unwrap();
        let u = initial_wulff(&a, &prof, &[0.5, 0.5], 0.15, 1.0 / 32.0, &grid).unwrap();
        let iface = extract_interface(&u);
        let k = a.fit_dziuk_constants(&Cutoff, 20_000).unwrap();
        for (alpha, beta) in [(0.9, 0.0), (0.5, 0.3), (0.0, 0.0), (0.7, -0.5)] {
            let xi = move |x: &Vec3| [alpha * (x[1] - 0.5).cos(), beta, 0.0];
            let rel = relative_entropy(&iface, xi, &a, &Cutoff).unwrap();
            let tilt = tilt_excess(&iface, xi);
            assert!(rel >= -1e-12);
            assert!(tilt <= rel / k.lower + 1e-9, "{tilt} {rel}");
        }
    }

    #[test]
    fn stress_trace_identity() {
        let w = standard_well();
        let prof = profile(&w);
        let a = Anisotropy::diagonal(&[4.0, 1.0]).unwrap();
        let grid = Grid::unit(2, 128).unwrap();
        let eps = 1.0 / 32.0;
        let u = initial_wulff(&a, &prof, &[0.5, 0.5], 0.1, eps, &grid).unwrap();
        let stress = stress_tensor(&u, eps, &a, &w).unwrap();
        let grad = centered_gradient(&u);
        for k in 0..grid.cells() {
            let gk = &grad[2 * k..2 * k + 2];
            let p = [-gk[0], -gk[1]];
            let mut df = [0.0; 2];
            let f = a.f_grad(&p, &mut df);
            let direct = (eps * f + w.w(u.data()[k]) / eps) + eps * (gk[0] * df[0] + gk[1] * df[1]) * 0.5;
            assert!((stress.trace(k) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
        let constant = PeriodicField::constant(grid, 1.0);
        let (_, gb) = radial_field(grid, [0.5, 0.5, 0.0]);
        assert_eq!(stress_tensor(&constant, eps, &a, &w).unwrap().pair(&gb), 0.0);
        let zero = |_: &Vec3| [[0.0; 3]; 3];
        let iface = extract_interface(&u);
        assert_eq!(curvature_residual(&u, &iface, zero, eps, &a, &w).unwrap(), 0.0);
    }

    #[test]
    fn curvature_pairing_of_the_wulff_shape() {
        // For B = x − c on r·∂W the pairing is (d − 1)/r times Σ σ(ν)(x·ν)
        // weight, i.e. (d − 1) times the anisotropic perimeter.
        let w = standard_well();
        let prof = profile(&w);
        let a = Anisotropy::diagonal(&[4.0, 1.0]).unwrap();
        let grid = Grid::unit(2, 256).unwrap();
        let u = initial_wulff(&a, &prof, &[0.5, 0.5], 0.15, 1.0 / 64.0, &grid).unwrap();
        let iface = extract_interface(&u);
        let (_, gb) = radial_field(grid, [0.5, 0.5, 0.0]);
        let pairing = curvature_pairing(&iface, &a, gb);
        let energy = iface.sharp_energy(&a);
        assert!((pairing - energy).abs() < 0.02 * energy, "{pairing} {energy}");
    }

    #[test]
    fn bulk_error_trivial_cases() {
        let grid = Grid::unit(2, 32).unwrap();
        let u = PeriodicField::from_fn(grid, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        let theta = |x: &Vec3| if x[0] < 0.5 { -0.3 } else { 0.3 };
        assert_eq!(bulk_error(&u, theta), 0.0);
        assert_eq!(bulk_error(&u, |_: &Vec3| 0.0), 0.0);
        let flipped = |x: &Vec3| if x[0] < 0.5 { 0.3 } else { -0.3 };
        assert!((bulk_error(&u, flipped) - 0.3).abs() < 1e-12);
    }
}
