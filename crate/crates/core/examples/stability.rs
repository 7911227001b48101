//! Relative entropy and bulk error of a phase-field run measured against
//! the calibrated exact solution, with the Grönwall envelope.

use wulffflow::anisotropy::Anisotropy;
use wulffflow::calibration::{build_calibration, check_calibration, growth_rate, stability_monitor, ReferenceEvolution};
use wulffflow::field::Grid;
use wulffflow::potential::{profile, standard_well};
use wulffflow::solver::{initial_wulff, run, Model, RunOptions, SolverConfig};

fn main() -> wulffflow::Result<()> {
    let model = Model::isotropic(2, standard_well())?;
    let (eps, n, r0, t_end) = (1.0 / 32.0, 128, 0.25, 0.004);
    let grid = Grid::unit(2, n)?;
    let u0 = initial_wulff(&model.sigma, &profile(&model.well), &[0.5, 0.5], r0, eps, &grid)?;
    let cfg = SolverConfig::new(&model, eps, 0.5, t_end)?;
    let opts = RunOptions {
        retain_every: Some(20),
        retain_neighbors: true,
        ..Default::default()
    };
    let traj = run(&u0, &cfg, &model, &opts)?;

    let reference = ReferenceEvolution::new(Anisotropy::euclidean(2)?, &[0.5, 0.5], r0, t_end, 1.0)?;
    let cal = build_calibration(&reference, None)?;
    let fits = check_calibration(&cal, &Grid::unit(2, 48)?, &[0.0, t_end])?;
    let offset = (grid.dx() + eps) * 2.0 * std::f64::consts::PI * r0;
    let report = stability_monitor(&traj, &cal, &model.well, growth_rate(&fits), offset)?;

    println!(" step      t      E_rel      bulk      envelope");
    for p in report.series.iter().filter(|p| p.step % 20 == 0) {
        println!("{:>5}  {:.5}  {:.3e}  {:.3e}  {:.3e}", p.step, p.t, p.rel_entropy, p.bulk_error, p.envelope);
    }
    println!(
        "\nfitted rate {:.3e}, smallest rate containing the series {:.3e}, within envelope: {}",
        report.growth_rate, report.observed_rate, report.within_envelope
    );
    Ok(())
}
