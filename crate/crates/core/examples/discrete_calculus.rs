//! Summation by parts and second-order consistency of the staggered
//! gradient and divergence on the periodic grid.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wulffflow::field::{Grid, PeriodicField, VectorField};

fn main() -> wulffflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (dim, n) in [(1, 16), (2, 16), (3, 8)] {
        let g = Grid::unit(dim, n)?;
        let mut random = || {
            let data = (0..g.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            PeriodicField::from_vec(g, data)
        };
        let u = random()?;
        let f = VectorField {
            components: (0..dim).map(|_| random()).collect::<wulffflow::Result<_>>()?,
        };
        let lhs = u.forward_gradient().inner(&f);
        let div = f.neg_adjoint_divergence()?;
        let rhs = -g.cell_volume() * u.data().iter().zip(div.data()).map(|(a, b)| a * b).sum::<f64>();
        println!("d = {dim}, n = {n:>2}: <∇u, F> = {lhs:+.15}, -<u, div F> = {rhs:+.15}");
    }

    // div ∇ of sin(2πx) cos(2πy) against -8π² sin cos
    let err = |n: usize| -> wulffflow::Result<f64> {
        let g = Grid::unit(2, n)?;
        let u = PeriodicField::from_fn(g, |x| (TAU * x[0]).sin() * (TAU * x[1]).cos());
        let lap = u.forward_gradient().neg_adjoint_divergence()?;
        Ok((0..g.cells())
            .map(|k| {
                let x = g.center(k);
                (lap.data()[k] + 2.0 * TAU * TAU * (TAU * x[0]).sin() * (TAU * x[1]).cos()).abs()
            })
            .fold(0.0, f64::max))
    };
    println!("\n   n   max error   ratio");
    let mut prev = None;
    for n in [16, 32, 64, 128] {
        let e = err(n)?;
        let ratio = prev.map(|p: f64| format!("{:.3}", p / e)).unwrap_or_default();
        println!("{n:>4}  {e:.4e}  {ratio}");
        prev = Some(e);
    }
    Ok(())
}
