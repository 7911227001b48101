//! Drives a run from a TOML configuration, as the `wulffflow simulate`
//! command does, and prints the summary.
//!
//! `cargo run --release --example run_config -- examples/configs/planar_1d.toml /tmp/planar`

use std::path::PathBuf;

use wulffflow::cli::{self, RunConfig};

fn main() -> wulffflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/planar_1d.toml"));
    let cfg = RunConfig::from_file(&path)?;
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("wulffflow-run"));
    for s in cli::simulate(&cfg, &out, 1)? {
        println!("ε = {}, n = {}, {} steps", s.eps, s.n, s.steps);
        println!("  energy {:.6} -> {:.6}", s.initial_energy.total, s.final_energy.total);
        println!("  dissipated {:.4e}, min max-principle slack {:.3e}", s.dissipation_sum, s.min_max_principle_slack);
        if let Some(fit) = s.radius_law {
            println!("  r² slope {:.4} (expected {})", fit.slope, fit.expected_slope);
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
