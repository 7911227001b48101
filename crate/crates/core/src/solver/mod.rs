//! Minimizing-movements time stepping for the anisotropic Allen–Cahn
//! equation. Each step minimizes
//! `J(u) = E_ε[u] + (1/2h)‖u − u_prev‖²_{u_prev}`,
//! which is strongly convex whenever `h < 2ε²c_g/λ`.

pub mod lbfgs;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anisotropy::{Anisotropy, Mobility};
use crate::energy::{
    energy_with_gradient, g_at_centers, l2_norm_of_partials, weighted_metric_sq, EnergyReport, EnergyWorkspace,
    GWeight,
};
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};
use crate::potential::{DoubleWell, Profile};
use lbfgs::{Diagonal, LbfgsOptions, LbfgsOutcome};

/// Surface tension, mobility (through `g`) and double well of one model.
#[derive(Clone, Debug)]
pub struct Model {
    pub sigma: Anisotropy,
    pub gw: GWeight,
    pub well: DoubleWell,
}

impl Model {
    pub fn new(sigma: Anisotropy, mobility: Mobility, well: DoubleWell) -> Result<Self> {
        let gw = GWeight::new(sigma.clone(), mobility)?;
        Ok(Self { sigma, gw, well })
    }

    /// `σ = μ = |·|` with the given well.
    pub fn isotropic(dim: usize, well: DoubleWell) -> Result<Self> {
        Self::new(Anisotropy::euclidean(dim)?, Mobility::euclidean(dim)?, well)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Largest admissible step `2ε²c_g/λ`.
    pub fn step_bound(&self, eps: f64) -> f64 {
        2.0 * eps * eps * self.gw.c_g() / self.well.lambda()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps: f64,
    pub h: f64,
    pub theta_h: f64,
    pub tol_grad: f64,
    pub max_inner_iters: usize,
    pub t_end: f64,
}

impl SolverConfig {
    pub const DEFAULT_THETA: f64 = 0.5;
    pub const DEFAULT_TOL: f64 = 1e-9;
    pub const DEFAULT_MAX_INNER: usize = 10_000;

    /// `h = theta_h · 2ε²c_g/λ` with default tolerances.
    pub fn new(model: &Model, eps: f64, theta_h: f64, t_end: f64) -> Result<Self> {
        if !(theta_h > 0.0 && theta_h < 1.0) {
            return Err(Error::config(format!("theta_h must lie in (0, 1), got {theta_h}")));
        }
        if !(eps > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {eps}")));
        }
        if !(t_end >= 0.0) {
            return Err(Error::config(format!("t_end must be nonnegative, got {t_end}")));
        }
        Ok(Self {
            eps,
            h: theta_h * model.step_bound(eps),
            theta_h,
            tol_grad: Self::DEFAULT_TOL,
            max_inner_iters: Self::DEFAULT_MAX_INNER,
            t_end,
        })
    }

    /// Checks the step-size gate and the interface resolution.
    pub fn validate(&self, grid: &Grid, model: &Model) -> Result<()> {
        if model.dim() != grid.dim {
            return Err(Error::config("model and grid dimensions differ"));
        }
        let bound = model.step_bound(self.eps);
        if !(self.h > 0.0 && self.h < bound) {
            return Err(Error::config(format!(
                "time step {} violates the strong-convexity gate h < {bound}",
                self.h
            )));
        }
        if self.eps < 4.0 * grid.dx() {
            return Err(Error::config(format!(
                "epsilon {} resolves the interface with fewer than 4 cells (dx = {})",
                self.eps,
                grid.dx()
            )));
        }
        if !(self.tol_grad > 0.0) || self.max_inner_iters == 0 {
            return Err(Error::config("inner tolerance and iteration cap must be positive"));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.h - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub inner_iters: usize,
    pub grad_residual: f64,
    pub grad_target: f64,
    pub energy_before: EnergyReport,
    pub energy_after: EnergyReport,
    /// `‖u_n − u_{n−1}‖²_{u_{n−1}}`.
    pub metric_increment: f64,
    /// `h ‖(u_n − u_{n−1})/h‖²_{u_{n−1}}`.
    pub dissipation: f64,
    pub linf_center_distance: f64,
}

/// Reusable buffers for repeated steps on one grid.
#[derive(Clone, Debug)]
pub struct StepWorkspace {
    energy: EnergyWorkspace,
    weights: Vec<f64>,
    precond: Vec<f64>,
    terms: Vec<f64>,
}

impl StepWorkspace {
    pub fn new(grid: &Grid) -> Self {
        Self {
            energy: EnergyWorkspace::new(grid),
            weights: vec![0.0; grid.cells()],
            precond: vec![0.0; grid.cells()],
            terms: vec![0.0; grid.cells()],
        }
    }
}

/// One minimizing-movements step from `u_prev`.
pub fn minimize_step(u_prev: &PeriodicField, cfg: &SolverConfig, model: &Model) -> Result<(PeriodicField, StepRecord)> {
    cfg.validate(u_prev.grid(), model)?;
    let mut ws = StepWorkspace::new(u_prev.grid());
    step_with(u_prev, None, cfg, model, &mut ws, 1)
}

/// As [`minimize_step`], optionally starting the inner solver from `guess`
/// when that lowers `J` below its value at `u_prev`.
pub fn step_with(
    u_prev: &PeriodicField,
    guess: Option<&[f64]>,
    cfg: &SolverConfig,
    model: &Model,
    ws: &mut StepWorkspace,
    step: usize,
) -> Result<(PeriodicField, StepRecord)> {
    let grid = *u_prev.grid();
    let prev = u_prev.data();
    if !crate::numeric::all_finite(prev) {
        return Err(Error::numeric("previous iterate has non-finite values", f64::NAN));
    }
    let (eps, h) = (cfg.eps, cfg.h);
    let vol = grid.cell_volume();

    g_at_centers(&grid, prev, &model.gw, &mut ws.weights);
    {
        // Hessian diagonal of J with the Laplacian part bounded by σ_max².
        let dx2 = grid.dx() * grid.dx();
        let smax = model.sigma.stats().sigma_max;
        let lap = 2.0 * grid.dim as f64 * eps * smax * smax / dx2;
        let w = &model.well;
        let weights = &ws.weights;
        ws.precond
            .par_iter_mut()
            .enumerate()
            .with_min_len(4096)
            .for_each(|(k, p)| {
                let mass = eps * weights[k] / h;
                let react = (w.d2w(prev[k]) / (2.0 * eps)).max(-0.5 * mass);
                *p = vol * (mass + lap + react);
            });
    }

    let StepWorkspace {
        energy,
        weights,
        precond,
        terms,
    } = ws;
    let weights = &*weights;
    let mut objective = |u: &[f64], g: &mut [f64]| -> f64 {
        let e = energy_with_gradient(&grid, u, eps, &model.sigma, &model.well, energy, Some(g));
        let c = vol * eps / h;
        g.par_iter_mut()
            .zip(terms.par_iter_mut())
            .enumerate()
            .with_min_len(4096)
            .for_each(|(k, (gk, tk))| {
                let d = u[k] - prev[k];
                *gk += c * weights[k] * d;
                *tk = weights[k] * d * d;
            });
        e.total + 0.5 * c * crate::numeric::pairwise_sum(terms)
    };

    let mut g0 = vec![0.0; grid.cells()];
    let j_prev = objective(prev, &mut g0);
    let g0_norm = l2_norm_of_partials(&grid, &g0);
    let target = cfg.tol_grad * g0_norm.max(1.0);

    let mut start = prev.to_vec();
    if let Some(guess) = guess {
        let mut gg = vec![0.0; grid.cells()];
        if objective(guess, &mut gg) < j_prev {
            start = guess.to_vec();
        }
    }

    let opts = LbfgsOptions {
        max_iters: cfg.max_inner_iters,
        grad_tol: target,
        memory: 5,
        ..Default::default()
    };
    let out: LbfgsOutcome = if g0_norm <= target {
        LbfgsOutcome {
            x: prev.to_vec(),
            value: j_prev,
            grad: g0,
            grad_norm: g0_norm,
            iterations: 0,
            evaluations: 1,
            converged: true,
        }
    } else {
        lbfgs::minimize(
            start,
            &mut objective,
            &Diagonal(precond),
            |g| l2_norm_of_partials(&grid, g),
            &opts,
        )
    };
    if !out.converged {
        return Err(Error::Convergence {
            iterations: out.iterations,
            residual: out.grad_norm,
            target,
        });
    }
    if !crate::numeric::all_finite(&out.x) {
        return Err(Error::numeric("inner solver produced non-finite values", out.grad_norm));
    }

    let before = energy_with_gradient(&grid, prev, eps, &model.sigma, &model.well, energy, None);
    let after = energy_with_gradient(&grid, &out.x, eps, &model.sigma, &model.well, energy, None);
    let inc: Vec<f64> = out.x.iter().zip(prev).map(|(a, b)| a - b).collect();
    let metric = weighted_metric_sq(&grid, weights, &inc, eps);
    let next = PeriodicField::from_vec(grid, out.x)?;
    let record = StepRecord {
        step,
        time: step as f64 * h,
        inner_iters: out.iterations,
        grad_residual: out.grad_norm,
        grad_target: target,
        energy_before: before,
        energy_after: after,
        metric_increment: metric,
        dissipation: metric / h,
        linf_center_distance: next.linf_center_distance(),
    };
    Ok((next, record))
}


/// Options for [`run`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Write a snapshot every this many steps (step 0 included).
    pub snapshot_every: Option<usize>,
    pub snapshot_dir: Option<PathBuf>,
    /// Where the offending state goes when an invariant fails.
    pub dump_dir: Option<PathBuf>,
    /// Keep every this many states in memory.
    pub retain_every: Option<usize>,
    /// Also keep the steps adjacent to each retained one.
    pub retain_neighbors: bool,
    /// Seed the inner solver by extrapolating earlier iterates.
    pub extrapolate: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            snapshot_every: None,
            snapshot_dir: None,
            dump_dir: None,
            retain_every: None,
            retain_neighbors: false,
            extrapolate: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub initial: PeriodicField,
    pub initial_energy: EnergyReport,
    pub records: Vec<StepRecord>,
    pub retained: Vec<(usize, f64, PeriodicField)>,
    pub last: PeriodicField,
}

impl Trajectory {
    /// `Σ h‖(u_n − u_{n−1})/h‖²_{u_{n−1}}`.
    pub fn dissipation_sum(&self) -> f64 {
        self.records.iter().map(|r| r.dissipation).sum()
    }

    /// Maximum-principle bound `max(‖u0 − 1/2‖_∞, 1/2)`.
    pub fn max_principle_bound(&self) -> f64 {
        self.initial.linf_center_distance().max(0.5)
    }
}

pub const MAX_PRINCIPLE_TOL: f64 = 1e-8;
pub const DISSIPATION_TOL: f64 = 1e-10;

/// Marches from `u0` to `t_end`, checking energy monotonicity, the maximum
/// principle and the per-step dissipation inequality after every step.
pub fn run(u0: &PeriodicField, cfg: &SolverConfig, model: &Model, opts: &RunOptions) -> Result<Trajectory> {
    run_with_observer(u0, cfg, model, opts, |_, _, _| Ok(()))
}

/// As [`run`], calling `observe(record, u_prev, u_next)` after every step.
pub fn run_with_observer<O>(
    u0: &PeriodicField,
    cfg: &SolverConfig,
    model: &Model,
    opts: &RunOptions,
    mut observe: O,
) -> Result<Trajectory>
where
    O: FnMut(&StepRecord, &PeriodicField, &PeriodicField) -> Result<()>,
{
    let grid = *u0.grid();
    cfg.validate(&grid, model)?;
    let mut ws = StepWorkspace::new(&grid);
    let mut ews = EnergyWorkspace::new(&grid);
    let e0 = energy_with_gradient(&grid, u0.data(), cfg.eps, &model.sigma, &model.well, &mut ews, None);
    let bound = u0.linf_center_distance().max(0.5);

    let snapshot = |step: usize, t: f64, u: &PeriodicField| -> Result<()> {
        if let (Some(every), Some(dir)) = (opts.snapshot_every, &opts.snapshot_dir) {
            if every > 0 && step.is_multiple_of(every) {
                u.write_snapshot(dir, step, t, cfg.eps)?;
            }
        }
        Ok(())
    };
    snapshot(0, 0.0, u0)?;

    let mut retained = Vec::new();
    if opts.retain_every.is_some() {
        retained.push((0, 0.0, u0.clone()));
    }
    let mut records = Vec::with_capacity(cfg.steps());
    let mut u = u0.clone();
    // Up to two earlier iterates, most recent first.
    let mut history: Vec<PeriodicField> = Vec::new();

    for step in 1..=cfg.steps() {
        let guess: Option<Vec<f64>> = match (history.as_slice(), opts.extrapolate) {
            ([a, b, ..], true) => Some(
                u.data()
                    .iter()
                    .zip(a.data())
                    .zip(b.data())
                    .map(|((x, y), z)| 3.0 * x - 3.0 * y + z)
                    .collect(),
            ),
            ([a, ..], true) => Some(u.data().iter().zip(a.data()).map(|(x, y)| 2.0 * x - y).collect()),
            _ => None,
        };
        let (next, rec) = step_with(&u, guess.as_deref(), cfg, model, &mut ws, step)?;

        let e_prev = rec.energy_before.total;
        let e_next = rec.energy_after.total;
        let mut failure = None;
        if e_next > e_prev + 10.0 * cfg.tol_grad * e0.total.max(f64::MIN_POSITIVE) {
            failure = Some(format!("energy increased at step {step}: {e_prev} -> {e_next}"));
        } else if rec.linf_center_distance > bound + MAX_PRINCIPLE_TOL {
            failure = Some(format!(
                "maximum principle violated at step {step}: {} > {bound}",
                rec.linf_center_distance
            ));
        } else if rec.metric_increment > 2.0 * cfg.h * (e_prev - e_next) + DISSIPATION_TOL * e0.total {
            failure = Some(format!(
                "dissipation inequality violated at step {step}: {} > {}",
                rec.metric_increment,
                2.0 * cfg.h * (e_prev - e_next)
            ));
        }
        if let Some(message) = failure {
            let dump = dump_state(opts.dump_dir.as_deref(), step, rec.time, cfg.eps, &next);
            return Err(Error::Invariant { message, dump });
        }

        observe(&rec, &u, &next)?;
        snapshot(step, rec.time, &next)?;
        if let Some(every) = opts.retain_every.filter(|&e| e > 0) {
            let near = opts.retain_neighbors && (step % every == 1 || (step + 1) % every == 0);
            if step % every == 0 || near {
                retained.push((step, rec.time, next.clone()));
            }
        }
        records.push(rec);
        history.insert(0, std::mem::replace(&mut u, next));
        history.truncate(2);
    }

    Ok(Trajectory {
        config: *cfg,
        initial: u0.clone(),
        initial_energy: e0,
        records,
        retained,
        last: u,
    })
}

fn dump_state(dir: Option<&Path>, step: usize, t: f64, eps: f64, u: &PeriodicField) -> Option<PathBuf> {
    let dir = dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("wulffflow-dump-{}", std::process::id())));
    match u.write_snapshot(&dir, step, t, eps) {
        Ok(path) => Some(path),
        Err(e) => {
            log::error!("could not dump offending state: {e}");
            None
        }
    }
}

/// `u0(x) = Θ((r0 − σ°(x − center))/ε)` on the torus.
pub fn initial_wulff(
    a: &Anisotropy,
    prof: &Profile,
    center: &[f64],
    r0: f64,
    eps: f64,
    grid: &Grid,
) -> Result<PeriodicField> {
    let d = grid.dim;
    if a.dim() != d || center.len() != d {
        return Err(Error::input("anisotropy, center and grid dimensions differ"));
    }
    if !(eps > 0.0 && r0 > 2.0 * eps) {
        return Err(Error::input(format!("need r0 > 2ε, got r0 = {r0}, ε = {eps}")));
    }
    for axis in 0..d {
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        // The support function of the Wulff shape is σ.
        let extent = r0 * a.value(&e);
        if extent + 4.0 * eps > 0.5 * grid.length {
            return Err(Error::input(format!(
                "Wulff shape of radius {r0} (half-width {extent} along axis {axis}) does not fit in the torus with margin 4ε"
            )));
        }
    }
    let polar = PolarEvaluator::new(a)?;
    let mut data = vec![0.0; grid.cells()];
    data.par_iter_mut().enumerate().for_each(|(k, v)| {
        let x = grid.center(k);
        let dx = grid.periodic_delta(&x[..d], center);
        *v = prof.eval((r0 - polar.eval(&dx[..d])) / eps);
    });
    PeriodicField::from_vec(*grid, data)
}

/// Flat slab with normal `m` (integer components so the slab is periodic):
/// `u = Θ(dist/(εσ(ν)))` with `dist` the signed distance to the two planes
/// `x·m = L/4 + L/2 ± L/4` measured inward.
pub fn initial_slab(a: &Anisotropy, prof: &Profile, m: &[i32], eps: f64, grid: &Grid) -> Result<PeriodicField> {
    let d = grid.dim;
    if a.dim() != d || m.len() != d {
        return Err(Error::input("anisotropy, normal and grid dimensions differ"));
    }
    let mf: Vec<f64> = m.iter().map(|&v| v as f64).collect();
    let mn = crate::numeric::norm(&mf);
    if mn == 0.0 {
        return Err(Error::input("slab normal must be nonzero"));
    }
    if !(eps > 0.0) {
        return Err(Error::input("epsilon must be positive"));
    }
    let nu: Vec<f64> = mf.iter().map(|v| v / mn).collect();
    let width = eps * a.value(&nu);
    let l = grid.length;
    Ok(PeriodicField::from_fn(*grid, |x| {
        let s = crate::numeric::dot(x, &mf).rem_euclid(l);
        let dist = (0.25 * l - (s - 0.5 * l).abs()) / mn;
        prof.eval(dist / width)
    }))
}

/// `σ°` evaluation for bulk initialization; non-closed-form polars in 2-D
/// use a periodic cubic table over angles.
struct PolarEvaluator<'a> {
    a: &'a Anisotropy,
    table: Option<Vec<f64>>,
}

const POLAR_TABLE: usize = 4096;

impl<'a> PolarEvaluator<'a> {
    fn new(a: &'a Anisotropy) -> Result<Self> {
        let table = if a.has_closed_form_polar() || a.dim() != 2 {
            None
        } else {
            let t: Result<Vec<f64>> = (0..POLAR_TABLE)
                .into_par_iter()
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / POLAR_TABLE as f64;
                    a.polar(&[th.cos(), th.sin()])
                })
                .collect();
            Some(t?)
        };
        Ok(Self { a, table })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match &self.table {
            None => self.a.polar(x).unwrap_or(f64::INFINITY),
            Some(t) => {
                let r = crate::numeric::norm(x);
                if r == 0.0 {
                    return 0.0;
                }
                let n = t.len();
                let s = x[1].atan2(x[0]).rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
                    * n as f64;
                let i = s.floor() as usize % n;
                let f = s - s.floor();
                let p0 = t[(i + n - 1) % n];
                let p1 = t[i];
                let p2 = t[(i + 1) % n];
                let p3 = t[(i + 2) % n];
                // Catmull–Rom
                let v = p1
                    + 0.5
                        * f
                        * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
                r * v
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_eps;
    use crate::potential::{profile, standard_well};
    use approx::assert_abs_diff_eq;

    fn iso_model(dim: usize) -> Model {
        Model::isotropic(dim, standard_well()).unwrap()
    }

    #[test]
    fn step_gate_and_resolution() {
        let m = iso_model(2);
        let g = Grid::unit(2, 64).unwrap();
        let mut cfg = SolverConfig::new(&m, 1.0 / 16.0, 0.5, 0.0).unwrap();
        assert!(cfg.validate(&g, &m).is_ok());
        assert_abs_diff_eq!(cfg.h, 0.5 * 2.0 * cfg.eps * cfg.eps * 0.99 / 36.0, epsilon = 1e-15);
        cfg.h = m.step_bound(cfg.eps);
        assert!(matches!(cfg.validate(&g, &m), Err(Error::Config(_))));
        let cfg = SolverConfig::new(&m, 1.0 / 32.0, 0.5, 0.0).unwrap();
        assert!(matches!(cfg.validate(&g, &m), Err(Error::Config(_))));
        assert!(SolverConfig::new(&m, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn stationary_states() {
        let m = iso_model(2);
        let g = Grid::unit(2, 32).unwrap();
        let cfg = SolverConfig::new(&m, 1.0 / 8.0, 0.5, 0.0).unwrap();
        for c in [0.0, 1.0, 0.5] {
            let u = PeriodicField::constant(g, c);
            let (v, rec) = minimize_step(&u, &cfg, &m).unwrap();
            assert_eq!(v, u);
            assert_eq!(rec.inner_iters, 0);
        }
    }

    #[test]
    fn step_decreases_objective_and_meets_tolerance() {
        let m = Model::new(
            Anisotropy::diagonal(&[2.0, 1.0]).unwrap(),
            Mobility::euclidean(2).unwrap(),
            standard_well(),
        )
        .unwrap();
        let g = Grid::unit(2, 64).unwrap();
        let eps = 1.0 / 16.0;
        let prof = profile(&m.well);
        let u = initial_wulff(&m.sigma, &prof, &[0.5, 0.5], 0.15, eps, &g).unwrap();
        let cfg = SolverConfig::new(&m, eps, 0.5, 0.0).unwrap();
        let (v, rec) = minimize_step(&u, &cfg, &m).unwrap();
        assert!(rec.grad_residual <= rec.grad_target);
        assert!(rec.energy_after.total < rec.energy_before.total);
        assert!(rec.metric_increment <= 2.0 * cfg.h * (rec.energy_before.total - rec.energy_after.total) + 1e-12);
        assert!(v != u);
    }

    #[test]
    fn constant_run_has_zero_energy() {
        let m = iso_model(1);
        let g = Grid::unit(1, 64).unwrap();
        let mut cfg = SolverConfig::new(&m, 1.0 / 16.0, 0.5, 0.0).unwrap();
        cfg.t_end = 5.0 * cfg.h;
        let traj = run(&PeriodicField::constant(g, 1.0), &cfg, &m, &RunOptions::default()).unwrap();
        assert_eq!(traj.records.len(), 5);
        assert!(traj.records.iter().all(|r| r.energy_after.total == 0.0));
    }

    #[test]
    fn wulff_initial_values() {
        let a = Anisotropy::diagonal(&[4.0, 1.0]).unwrap();
        let prof = profile(&standard_well());
        let g = Grid::unit(2, 128).unwrap();
        let eps = 1.0 / 64.0;
        let u = initial_wulff(&a, &prof, &[0.5, 0.5], 0.2, eps, &g).unwrap();
        // cell centers sit at (i + 1/2)/128, so the center cell is near x = c
        let k = g.ravel_wrapped(&[64, 64]);
        assert!((u.data()[k] - 1.0).abs() < 1e-12);
        // a point on the boundary: σ°(x − c) = r0
        let b = a.wulff_boundary_points(0.2, 8).unwrap()[1];
        let v = prof.eval((0.2 - a.polar(&b).unwrap()) / eps);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-9);
        assert!(initial_wulff(&a, &prof, &[0.5, 0.5], 0.3, eps, &g).is_err());
    }

    #[test]
    fn isotropic_ring_energy_matches_perimeter() {
        let w = standard_well();
        let prof = profile(&w);
        let a = Anisotropy::euclidean(2).unwrap();
        let g = Grid::unit(2, 512).unwrap();
        let eps = 1.0 / 64.0;
        let r0 = 0.3;
        let u = initial_wulff(&a, &prof, &[0.5, 0.5], r0, eps, &g).unwrap();
        let e = energy_eps(&u, eps, &a, &w).unwrap().total;
        let perim = 2.0 * std::f64::consts::PI * r0;
        assert!((e / perim - 1.0).abs() <= 0.02, "{e} {perim}");
    }

    #[test]
    fn tabulated_polar_matches_ascent() {
        use nalgebra::DMatrix;
        let a = Anisotropy::bgn(
            3.0,
            &[
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
            ],
        )
        .unwrap();
        let pe = PolarEvaluator::new(&a).unwrap();
        assert!(pe.table.is_some());
        for k in 0..37 {
            let th = 0.17 * k as f64;
            let x = [0.3 * th.cos(), 0.3 * th.sin()];
            assert_abs_diff_eq!(pe.eval(&x), a.polar(&x).unwrap(), epsilon = 1e-9);
        }
    }

    #[test]
    fn slab_profile() {
        let w = standard_well();
        let prof = profile(&w);
        let a = Anisotropy::euclidean(1).unwrap();
        let g = Grid::unit(1, 256).unwrap();
        let u = initial_slab(&a, &prof, &[1], 0.02, &g).unwrap();
        assert!(u.sample(&[0.5]) > 1.0 - 1e-9);
        assert!(u.sample(&[0.0]) < 1e-9);
        assert_abs_diff_eq!(u.sample(&[0.25]), 0.5, epsilon = 1e-3);
    }
}
