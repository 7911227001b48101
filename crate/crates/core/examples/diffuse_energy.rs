//! The diffuse energy of a Wulff-shaped initial datum approaches the sharp
//! anisotropic perimeter as ε shrinks.

use wulffflow::anisotropy::Anisotropy;
use wulffflow::cli::unit_wulff_volume;
use wulffflow::energy::energy_eps;
use wulffflow::field::Grid;
use wulffflow::potential::{profile, standard_well};
use wulffflow::solver::initial_wulff;

fn main() -> wulffflow::Result<()> {
    let sigma = Anisotropy::diagonal(&[4.0, 1.0])?;
    let w = standard_well();
    let prof = profile(&w);
    let r0 = 0.12;
    // perimeter of r0·W is d|W| r0^(d-1)
    let perimeter = 2.0 * unit_wulff_volume(&sigma).unwrap_or(f64::NAN) * r0;
    println!("sharp energy of {r0}·W: {perimeter:.6}");
    println!("   ε        n    E_dirichlet  E_potential  E_total   rel. error");
    for (eps, n) in [(1.0 / 32.0, 128), (1.0 / 32.0, 256), (1.0 / 32.0, 512), (1.0 / 64.0, 256), (1.0 / 128.0, 512)] {
        let grid = Grid::unit(2, n)?;
        let u = initial_wulff(&sigma, &prof, &[0.5, 0.5], r0, eps, &grid)?;
        let e = energy_eps(&u, eps, &sigma, &w)?;
        println!(
            "{eps:.5}  {n:>4}  {:.6}     {:.6}     {:.6}  {:+.3e}",
            e.dirichlet,
            e.potential,
            e.total,
            e.total / perimeter - 1.0
        );
    }
    Ok(())
}
