//! The standard double well, its surface-tension constant and the optimal
//! one-dimensional profile.

use wulffflow::potential::{profile, standard_well};

fn main() -> wulffflow::Result<()> {
    let w = standard_well();
    println!("W = {} with coefficients {:?}", w.name(), w.coefficients());
    println!("λ = {}, c0 = ∫√W = {:.12}", w.lambda(), w.c0());

    let prof = profile(&w);
    println!("\n    z      Θ(z)        Θ'(z)     √W(Θ)");
    for k in -4..=4 {
        let z = 0.25 * k as f64;
        let th = prof.eval(z);
        println!("{z:>6.2}  {th:.8}  {:.8}  {:.8}", prof.derivative(z), w.w(th).sqrt());
    }

    if let Some(path) = std::env::args().nth(1) {
        prof.write_csv(std::path::Path::new(&path))?;
        println!("\nprofile table written to {path}");
    }
    Ok(())
}
