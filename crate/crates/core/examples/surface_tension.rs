//! Evaluates a two-ellipse surface tension, its polar and Wulff shape, and
//! prints the identity table used by `anisotropy-report`.

use nalgebra::DMatrix;
use wulffflow::anisotropy::{Anisotropy, Cutoff};
use wulffflow::identities::identity_report;

fn main() -> wulffflow::Result<()> {
    let sigma = Anisotropy::bgn(
        2.0,
        &[
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]),
            DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]),
        ],
    )?;

    for deg in [0.0f64, 30.0, 45.0, 90.0] {
        let th = deg.to_radians();
        let p = [th.cos(), th.sin()];
        let ds = sigma.dsigma(&p)?;
        println!(
            "θ = {deg:>4}°  σ = {:.6}  Dσ = ({:+.4}, {:+.4})  σ°(Dσ) = {:.12}",
            sigma.value(&p),
            ds[0],
            ds[1],
            sigma.polar(&ds)?
        );
    }

    let wulff = sigma.wulff_boundary_points(1.0, 8)?;
    println!("\nunit Wulff shape, 8 boundary points:");
    for q in &wulff {
        println!("  ({:+.4}, {:+.4})", q[0], q[1]);
    }

    let k = sigma.fit_dziuk_constants(&Cutoff, 20_000)?;
    println!("\nDziuk constants: lower {:.4e}, upper {:.4e}\n", k.lower, k.upper);

    let report = identity_report(&sigma, 0)?;
    report.write_csv(std::io::stdout().lock())?;
    println!("all identities hold: {}", report.passed());
    Ok(())
}
