//! Gradient-flow calibration of the shrinking Wulff shape: builds (ξ, B, ϑ),
//! fits the calibration inequalities on a sample grid, and prints a few
//! samples along a ray.

use wulffflow::anisotropy::Anisotropy;
use wulffflow::calibration::{build_calibration, check_calibration, ReferenceEvolution};
use wulffflow::field::Grid;

fn main() -> wulffflow::Result<()> {
    let sigma = Anisotropy::diagonal(&[4.0, 1.0])?;
    let horizon = 0.01;
    let reference = ReferenceEvolution::new(sigma, &[0.5, 0.5], 0.2, horizon, 1.0)?;
    println!(
        "r(t) = sqrt(r0² - 2t): r(0) = {}, r({horizon}) = {:.5}, extinction at t = {}",
        reference.radius(0.0),
        reference.radius(horizon),
        reference.extinction_time()
    );
    let cal = build_calibration(&reference, None)?;
    println!("tube half-width δ = {:.5}\n", cal.delta());

    println!("  x         dist      ξ_x       B_x       ϑ");
    for k in 0..=12 {
        let x = [0.5 + 0.33 + 0.01 * (k as f64 - 6.0), 0.5, 0.0];
        let s = cal.sample(&x, 0.0);
        println!(
            "{:.3}  {:+.5}  {:+.5}  {:+.5}  {:+.5}",
            x[0], s.distance.value, s.xi[0], s.b[0], s.theta
        );
    }

    let report = check_calibration(&cal, &Grid::unit(2, 48)?, &[0.0, 0.5 * horizon, horizon])?;
    println!("\n{:<14} {:<6} {:>5} {:>12}", "inequality", "bound", "power", "constant");
    for f in &report.fits {
        println!("{:<14} {:<6} {:>5} {:>12.4e}", f.name, f.bound, f.power, f.constant);
    }
    println!("passed: {}", report.passed);
    Ok(())
}
