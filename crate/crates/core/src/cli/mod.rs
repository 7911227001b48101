//! Batch commands behind the `wulffflow` binary: `simulate`, `converge`,
//! `calibrate-check` and `anisotropy-report`.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{CalibrationToggle, DiagnosticsToggles, GridSpec, MobilitySpec, RunConfig, Scenario};

use crate::anisotropy::{Anisotropy, Cutoff};
use crate::calibration::{
    build_calibration, check_calibration, growth_rate, stability_monitor, Calibration, CalibrationReport,
    ReferenceEvolution, StabilityReport,
};
use crate::diagnostics::{self, DiagnosticsRow, Vec3};
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};
use crate::identities::{identity_report, IdentityReport};
use crate::numeric::linear_fit;
use crate::solver::{run_with_observer, Model, RunOptions, SolverConfig, StepRecord, Trajectory};

/// One row of the run CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub step: usize,
    pub t: f64,
    #[serde(rename = "E_total")]
    pub e_total: f64,
    #[serde(rename = "E_dirichlet")]
    pub e_dirichlet: f64,
    #[serde(rename = "E_potential")]
    pub e_potential: f64,
    pub dissipation_increment: f64,
    pub dissipation_sum: f64,
    pub max_principle_slack: f64,
    pub inner_iters: usize,
    pub grad_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadiusFit {
    /// Slope of `r²` against `t`.
    pub slope: f64,
    pub intercept: f64,
    pub expected_slope: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub eps: f64,
    pub n: usize,
    pub dx: f64,
    pub h: f64,
    pub steps: usize,
    pub t_final: f64,
    pub initial_energy: EnergyReport,
    pub final_energy: EnergyReport,
    pub dissipation_sum: f64,
    pub min_max_principle_slack: f64,
    pub inner_iters: usize,
    /// `(t, r)` with `r` the Wulff radius of the enclosed volume.
    pub radius_series: Vec<(f64, f64)>,
    pub radius_law: Option<RadiusFit>,
    /// `(t, Hausdorff distance / Δx)` against the exact Wulff boundary.
    pub hausdorff_series: Vec<(f64, f64)>,
    pub calibration: Option<CalibrationReport>,
    pub stability: Option<StabilityReport>,
}

/// Everything a single run produces.
#[derive(Clone, Debug)]
pub struct CaseOutcome {
    pub summary: RunSummary,
    pub rows: Vec<RunRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub trajectory: Trajectory,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::input(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::input(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Volume of the unit Wulff shape `{σ° ≤ 1}`, where available.
pub fn unit_wulff_volume(a: &Anisotropy) -> Option<f64> {
    let d = a.dim();
    if a.is_euclidean() {
        return Some(match d {
            1 => 2.0,
            2 => std::f64::consts::PI,
            _ => 4.0 / 3.0 * std::f64::consts::PI,
        });
    }
    match d {
        1 => Some(a.value(&[1.0]) + a.value(&[-1.0])),
        2 => {
            let pts = a.wulff_boundary_points(1.0, 4096).ok()?;
            let area: f64 = (0..pts.len())
                .map(|k| {
                    let (p, q) = (pts[k], pts[(k + 1) % pts.len()]);
                    p[0] * q[1] - p[1] * q[0]
                })
                .sum();
            Some(0.5 * area.abs())
        }
        _ => None,
    }
}

/// The exact shrinking-Wulff evolution for the configured scenario, when it
/// exists up to `horizon`.
pub fn reference_evolution(cfg: &RunConfig, horizon: f64) -> Result<Option<ReferenceEvolution>> {
    let Scenario::Wulff { center, r0 } = &cfg.scenario else {
        return Ok(None);
    };
    let sigma = cfg.sigma()?;
    if !cfg.mobility_is_sigma() || cfg.grid.d < 2 || (cfg.grid.d != 2 && !sigma.is_euclidean()) {
        return Ok(None);
    }
    match ReferenceEvolution::new(sigma, center, *r0, horizon, cfg.grid.length) {
        Ok(r) => Ok(Some(r)),
        Err(e) => {
            log::warn!("no reference evolution: {e}");
            Ok(None)
        }
    }
}

/// Runs one trajectory with the diagnostics and calibration monitoring the
/// config asks for, writing its artifacts into `dir`.
pub fn simulate_case(cfg: &RunConfig, eps: f64, n: usize, dir: &Path) -> Result<CaseOutcome> {
    simulate_case_every(cfg, eps, n, dir, cfg.diagnostics.every)
}

fn simulate_case_every(cfg: &RunConfig, eps: f64, n: usize, dir: &Path, every: usize) -> Result<CaseOutcome> {
    create_dir(dir)?;
    let model = cfg.model()?;
    let grid = cfg.grid_with(n)?;
    let solver = SolverConfig::new(&model, eps, cfg.theta_h, cfg.t_end)?;
    solver.validate(&grid, &model)?;
    let u0 = cfg.initial_data(&model, eps, &grid)?;
    let opts = RunOptions {
        snapshot_every: cfg.snapshot_every.filter(|&s| s > 0),
        snapshot_dir: Some(dir.join("snapshots")),
        dump_dir: Some(dir.join("dump")),
        retain_every: (every > 0).then_some(every),
        retain_neighbors: cfg.diagnostics.velocity,
        extrapolate: true,
    };

    let run_path = dir.join("run.csv");
    let mut writer = csv::Writer::from_path(&run_path).map_err(|e| csv_error(&run_path, e))?;
    let bound = u0.linf_center_distance().max(0.5);
    let e0 = crate::energy::energy_eps(&u0, eps, &model.sigma, &model.well)?;
    let first = RunRow {
        step: 0,
        t: 0.0,
        e_total: e0.total,
        e_dirichlet: e0.dirichlet,
        e_potential: e0.potential,
        dissipation_increment: 0.0,
        dissipation_sum: 0.0,
        max_principle_slack: bound - u0.linf_center_distance(),
        inner_iters: 0,
        grad_residual: 0.0,
    };
    writer.serialize(first).map_err(|e| csv_error(&run_path, e))?;
    let mut rows = vec![first];
    let mut dissipation_sum = 0.0;
    let outcome = run_with_observer(&u0, &solver, &model, &opts, |rec: &StepRecord, _, _| {
        dissipation_sum += rec.dissipation;
        let row = RunRow {
            step: rec.step,
            t: rec.time,
            e_total: rec.energy_after.total,
            e_dirichlet: rec.energy_after.dirichlet,
            e_potential: rec.energy_after.potential,
            dissipation_increment: rec.dissipation,
            dissipation_sum,
            max_principle_slack: bound - rec.linf_center_distance,
            inner_iters: rec.inner_iters,
            grad_residual: rec.grad_residual,
        };
        rows.push(row);
        writer.serialize(row).map_err(|e| csv_error(&run_path, e))
    });
    writer.flush().map_err(|e| Error::io(&run_path, e))?;
    let traj = outcome?;

    let reference = reference_evolution(cfg, solver.t_end)?;
    let calibration = match &reference {
        Some(r) => match build_calibration(r, cfg.calibration.delta) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("no calibration: {e}");
                None
            }
        },
        None => None,
    };
    let (cal_report, stability) = match (&calibration, cfg.calibration.enabled) {
        (Some(cal), true) => {
            let report = calibration_report(cfg, cal)?;
            let p0 = reference_perimeter(cal.reference());
            let offset = (grid.dx() + eps) * p0;
            let stab = stability_monitor(&traj, cal, &model.well, growth_rate(&report), offset).ok();
            write_json(&dir.join("calibration.json"), &report)?;
            (Some(report), stab)
        }
        (None, true) => {
            return Err(Error::config(
                "calibration requires a Wulff scenario with mobility \"same-as-sigma\" that survives to t_end",
            ))
        }
        _ => (None, None),
    };

    let diag = if every > 0 {
        diagnose(&traj, cfg, &model, every, calibration.as_ref(), stability.as_ref(), dir)?
    } else {
        Vec::new()
    };
    if !diag.is_empty() {
        write_csv_rows(&dir.join("diagnostics.csv"), &diag)?;
    }

    let summary = summarize(cfg, &model, &traj, &grid, every, reference.as_ref(), cal_report, stability)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(CaseOutcome {
        summary,
        rows,
        diagnostics: diag,
        trajectory: traj,
    })
}

/// `P_σ(r0 W) = d |W| r0^{d−1}`.
fn reference_perimeter(r: &ReferenceEvolution) -> f64 {
    let d = r.dim() as f64;
    unit_wulff_volume(r.sigma()).unwrap_or(0.0) * d * r.r0().powf(d - 1.0)
}

fn calibration_report(cfg: &RunConfig, cal: &Calibration) -> Result<CalibrationReport> {
    let horizon = cal.reference().horizon();
    let times = cfg
        .calibration
        .times
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.5 * horizon, horizon]);
    let sample = Grid::new(cfg.grid.d, cfg.calibration.sample_n, cfg.grid.length)?;
    check_calibration(cal, &sample, &times)
}

/// Diagnostics rows at every `every`-th retained step.
pub fn diagnose(
    traj: &Trajectory,
    cfg: &RunConfig,
    model: &Model,
    every: usize,
    calibration: Option<&Calibration>,
    stability: Option<&StabilityReport>,
    dir: &Path,
) -> Result<Vec<DiagnosticsRow>> {
    let eps = traj.config.eps;
    let sigma = &model.sigma;
    let grid = *traj.initial.grid();
    let (b, gb) = diagnostics::radial_field(grid, cfg.center());
    let find = |s: usize| traj.retained.iter().find(|(k, _, _)| *k == s).map(|(_, _, u)| u);
    let mut rows = Vec::new();
    for (step, t, u) in traj.retained.iter().filter(|(k, _, _)| k % every == 0) {
        let (step, t) = (*step, *t);
        let iface = diagnostics::extract_interface(u);
        let mut row = DiagnosticsRow {
            step,
            t,
            equip_defect: Some(diagnostics::equipartition_defect(u, eps, sigma, &model.well)?),
            sharp_energy: Some(iface.sharp_energy(sigma)),
            interface_length: Some(iface.measure()),
            ..Default::default()
        };
        let mut velocity = None;
        if cfg.diagnostics.velocity && !iface.is_empty() {
            if let (Some(prev), Some(next)) = (step.checked_sub(1).and_then(find), find(step + 1)) {
                let v = diagnostics::normal_velocity(&iface, prev, u, next, traj.config.h, &model.well)?;
                row.velocity_l2 = Some(v.l2(&iface));
                let m = diagnostics::mcf_residual(&iface, &v, &b, &gb, sigma, &model.gw.mobility().clone())?;
                row.mcf_residual = Some(m.residual);
                velocity = Some(v);
            }
        }
        if cfg.diagnostics.stress {
            row.curvature_residual = Some(diagnostics::curvature_residual(u, &iface, &gb, eps, sigma, &model.well)?);
        }
        if let Some(cal) = calibration {
            let xi = |x: &Vec3| cal.xi(x, t);
            row.eps_rel_entropy = Some(diagnostics::eps_relative_entropy(u, xi, sigma, &model.well, &Cutoff)?);
            row.rel_entropy = Some(diagnostics::relative_entropy(&iface, xi, sigma, &Cutoff)?);
            row.bulk_error = Some(diagnostics::bulk_error(u, |x: &Vec3| cal.theta(x, t)));
        }
        if let Some(p) = stability.and_then(|s| s.series.iter().find(|p| p.step == step)) {
            row.rel_entropy_cal = Some(p.rel_entropy);
            row.bulk_error_cal = Some(p.bulk_error);
            row.vel_cross_term = p.vel_cross_term.is_finite().then_some(p.vel_cross_term);
            row.gronwall_envelope = Some(p.envelope);
        }
        if cfg.diagnostics.interface_dumps {
            let idir = dir.join("interfaces");
            create_dir(&idir)?;
            let vals = velocity.as_ref().map(|v| v.values.as_slice());
            iface.write_csv(&idir.join(format!("iface_{step}.csv")), vals)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn summarize(
    cfg: &RunConfig,
    model: &Model,
    traj: &Trajectory,
    grid: &Grid,
    every: usize,
    reference: Option<&ReferenceEvolution>,
    calibration: Option<CalibrationReport>,
    stability: Option<StabilityReport>,
) -> Result<RunSummary> {
    let d = grid.dim;
    let center = cfg.center();
    let unit = unit_wulff_volume(&model.sigma);
    let mut radius_series = Vec::new();
    let mut hausdorff_series = Vec::new();
    let states: Vec<(f64, &PeriodicField)> = if traj.retained.is_empty() {
        vec![(0.0, &traj.initial), (traj.records.last().map_or(0.0, |r| r.time), &traj.last)]
    } else {
        let every = every.max(1);
        traj.retained
            .iter()
            .filter(|(k, _, _)| k % every == 0)
            .map(|(_, t, u)| (*t, u))
            .collect()
    };
    if let (Scenario::Wulff { .. }, Some(unit)) = (&cfg.scenario, unit) {
        for (t, u) in &states {
            let iface = diagnostics::extract_interface(u);
            if iface.is_empty() {
                continue;
            }
            let vol = iface.enclosed_volume(&center[..d]);
            radius_series.push((*t, (vol / unit).powf(1.0 / d as f64)));
            if let Some(r) = reference.filter(|_| d == 2) {
                if *t <= r.horizon() {
                    let curve = r.boundary_points(*t, 4096)?;
                    hausdorff_series.push((*t, diagnostics::hausdorff_to_polyline(&iface, &curve) / grid.dx()));
                }
            }
        }
    }
    let radius_law = (radius_series.len() >= 2 && d >= 2).then(|| {
        let ts: Vec<f64> = radius_series.iter().map(|p| p.0).collect();
        let r2: Vec<f64> = radius_series.iter().map(|p| p.1 * p.1).collect();
        let (slope, intercept) = linear_fit(&ts, &r2);
        let expected = -2.0 * (d as f64 - 1.0);
        RadiusFit {
            slope,
            intercept,
            expected_slope: expected,
            relative_error: ((slope - expected) / expected).abs(),
        }
    });
    let bound = traj.max_principle_bound();
    Ok(RunSummary {
        eps: traj.config.eps,
        n: grid.n,
        dx: grid.dx(),
        h: traj.config.h,
        steps: traj.records.len(),
        t_final: traj.records.last().map_or(0.0, |r| r.time),
        initial_energy: traj.initial_energy,
        final_energy: traj.records.last().map_or(traj.initial_energy, |r| r.energy_after),
        dissipation_sum: traj.dissipation_sum(),
        min_max_principle_slack: traj
            .records
            .iter()
            .map(|r| bound - r.linf_center_distance)
            .fold(bound - traj.initial.linf_center_distance(), f64::min),
        inner_iters: traj.records.iter().map(|r| r.inner_iters).sum(),
        radius_series,
        radius_law,
        hausdorff_series,
        calibration,
        stability,
    })
}

/// Maps `f` over `items` with at most `jobs` members in flight; inner
/// data parallelism keeps the global pool.
fn run_jobs<I: Sync, T: Send>(items: &[I], jobs: usize, f: impl Fn(usize, &I) -> T + Sync) -> Vec<T> {
    let jobs = jobs.max(1);
    let mut out = Vec::with_capacity(items.len());
    for (c, chunk) in items.chunks(jobs).enumerate() {
        let part: Vec<T> = chunk
            .par_iter()
            .enumerate()
            .map(|(k, item)| f(c * jobs + k, item))
            .collect();
        out.extend(part);
    }
    out
}

/// `simulate`: one trajectory per ε, each in its own directory when there
/// are several.
pub fn simulate(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<Vec<RunSummary>> {
    let eps = cfg.eps_values();
    let dirs: Vec<PathBuf> = if eps.len() == 1 {
        vec![out.to_path_buf()]
    } else {
        (0..eps.len()).map(|k| out.join(format!("eps_{k}"))).collect()
    };
    let results = run_jobs(&eps, jobs, |k, e| simulate_case(cfg, *e, cfg.grid.n, &dirs[k]).map(|o| o.summary));
    results.into_iter().collect()
}

/// One row of the refinement table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub n: usize,
    pub equip_defect: f64,
    pub mcf_residual: f64,
    pub curvature_residual: f64,
    pub radius_law_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Columns that failed to decrease strictly.
    pub non_monotone: Vec<String>,
}

impl ConvergenceReport {
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match name {
                "equip_defect" => r.equip_defect,
                "mcf_residual" => r.mcf_residual,
                "curvature_residual" => r.curvature_residual,
                _ => r.radius_law_error,
            })
            .collect()
    }

    pub fn strictly_decreasing(&self, name: &str) -> bool {
        self.column(name).windows(2).all(|w| w[1] < w[0])
    }
}

pub const CONVERGENCE_COLUMNS: [&str; 4] = ["equip_defect", "mcf_residual", "curvature_residual", "radius_law_error"];

/// Grid sizes keeping `ε/Δx` fixed at the first entry's ratio.
pub fn sweep_sizes(cfg: &RunConfig) -> Result<Vec<(f64, usize)>> {
    let eps = cfg.eps_values();
    if eps.len() < 3 {
        return Err(Error::input("converge needs an eps_list with at least three entries"));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::input("eps_list must be strictly decreasing"));
    }
    eps.iter()
        .map(|&e| {
            let n = cfg.grid.n as f64 * eps[0] / e;
            if (n - n.round()).abs() > 1e-9 * n {
                return Err(Error::config(format!("ε = {e} does not give an integer grid size ({n})")));
            }
            Ok((e, n.round() as usize))
        })
        .collect()
}

/// `converge`: ε-refinement at fixed `ε/Δx`, evaluated one step before
/// `t_end`.
pub fn converge(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<ConvergenceReport> {
    let sizes = sweep_sizes(cfg)?;
    let reference = reference_evolution(cfg, cfg.t_end)?;
    let mut case_cfg = cfg.clone();
    case_cfg.diagnostics.velocity = true;
    case_cfg.diagnostics.stress = true;
    case_cfg.calibration.enabled = false;
    let results = run_jobs(&sizes, jobs, |k, &(eps, n)| {
        let model = case_cfg.model()?;
        let steps = SolverConfig::new(&model, eps, case_cfg.theta_h, case_cfg.t_end)?.steps();
        if steps < 3 {
            return Err(Error::config("t_end must span at least three steps for every ε"));
        }
        // The velocity needs the state after the evaluated one.
        let last = steps - 1;
        let dir = out.join(format!("eps_{k}"));
        let o = simulate_case_every(&case_cfg, eps, n, &dir, last)?;
        convergence_row(&o, eps, n, reference.as_ref(), last)
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    write_csv_rows(&out.join("converge.csv"), &rows)?;
    let mut report = ConvergenceReport {
        rows,
        non_monotone: Vec::new(),
    };
    report.non_monotone = CONVERGENCE_COLUMNS
        .iter()
        .filter(|c| !report.strictly_decreasing(c))
        .map(|c| c.to_string())
        .collect();
    write_json(&out.join("converge.json"), &report)?;
    Ok(report)
}

fn convergence_row(
    o: &CaseOutcome,
    eps: f64,
    n: usize,
    reference: Option<&ReferenceEvolution>,
    last: usize,
) -> Result<ConvergenceRow> {
    let row = o
        .diagnostics
        .iter()
        .find(|r| r.step == last)
        .ok_or_else(|| Error::numeric("final step produced no diagnostics", f64::NAN))?;
    let missing = |name: &str| Error::numeric(format!("{name} unavailable at the final step"), f64::NAN);
    let radius_law_error = match (reference, o.summary.radius_series.last()) {
        (Some(r), Some(&(t, rad))) => (rad - r.radius(t)).abs() / r.r0(),
        _ => f64::NAN,
    };
    Ok(ConvergenceRow {
        eps,
        n,
        equip_defect: row.equip_defect.ok_or_else(|| missing("equip_defect"))?,
        mcf_residual: row.mcf_residual.ok_or_else(|| missing("mcf_residual"))?,
        curvature_residual: row.curvature_residual.ok_or_else(|| missing("curvature_residual"))?,
        radius_law_error,
    })
}

/// `calibrate-check`: builds the calibration of the configured Wulff
/// scenario up to `t_end` and fits every inequality.
pub fn calibrate_check(cfg: &RunConfig, out: &Path) -> Result<CalibrationReport> {
    let reference = reference_evolution(cfg, cfg.t_end)?.ok_or_else(|| {
        Error::config("calibrate-check needs a Wulff scenario with mobility \"same-as-sigma\" that survives to t_end")
    })?;
    let cal = build_calibration(&reference, cfg.calibration.delta)?;
    let report = calibration_report(cfg, &cal)?;
    create_dir(out)?;
    write_json(&out.join("calibration.json"), &report)?;
    Ok(report)
}

/// `anisotropy-report`: the identity table for the configured anisotropy.
pub fn anisotropy_report(spec: &crate::anisotropy::AnisotropySpec, dim: usize, out: Option<&Path>) -> Result<IdentityReport> {
    let a = Anisotropy::from_spec(spec, dim)?;
    let report = identity_report(&a, 0)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        report.write_csv_file(&dir.join("anisotropy_report.csv"))?;
    }
    Ok(report)
}
