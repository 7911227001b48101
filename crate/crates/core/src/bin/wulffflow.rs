use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wulffflow::cli::{self, RunConfig, CONVERGENCE_COLUMNS};
use wulffflow::{Error, Result};

#[derive(Parser)]
#[command(name = "wulffflow", version, about = "Anisotropic Allen–Cahn flows by minimizing movements")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Concurrent sweep members.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory per ε.
    Simulate,
    /// ε-refinement sweep at fixed ε/Δx.
    Converge,
    /// Fit the calibration inequalities of the configured Wulff evolution.
    CalibrateCheck,
    /// Identity checks for the configured anisotropy, as CSV on stdout.
    AnisotropyReport,
}

fn execute(args: &Args) -> Result<()> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config <path> is required"))?;
    let cfg = RunConfig::from_file(path)?;
    let out = cfg.output_dir(args.out.as_deref());
    match args.command {
        Command::Simulate => {
            for s in cli::simulate(&cfg, &out, args.jobs)? {
                let fit = s
                    .radius_law
                    .map(|f| format!(", r² slope {:.4} (expected {})", f.slope, f.expected_slope))
                    .unwrap_or_default();
                println!(
                    "eps {} n {}: {} steps, E {:.6e} -> {:.6e}{fit}",
                    s.eps, s.n, s.steps, s.initial_energy.total, s.final_energy.total
                );
            }
        }
        Command::Converge => {
            let report = cli::converge(&cfg, &out, args.jobs)?;
            println!("eps,n,{}", CONVERGENCE_COLUMNS.join(","));
            for r in &report.rows {
                println!(
                    "{},{},{:e},{:e},{:e},{:e}",
                    r.eps, r.n, r.equip_defect, r.mcf_residual, r.curvature_residual, r.radius_law_error
                );
            }
            if let Some(col) = report.non_monotone.first() {
                return Err(Error::invariant(format!("column `{col}` is not strictly decreasing")));
            }
        }
        Command::CalibrateCheck => {
            let report = cli::calibrate_check(&cfg, &out)?;
            println!("{}", report.to_json());
            if !report.passed {
                return Err(Error::invariant("calibration check failed"));
            }
        }
        Command::AnisotropyReport => {
            let report = cli::anisotropy_report(&cfg.anisotropy, cfg.grid.d, Some(&out))?;
            report.write_csv(std::io::stdout().lock())?;
            if !report.passed() {
                let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed()).map(|c| c.check_name).collect();
                return Err(Error::invariant(format!("identity checks failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = std::env::var("WULFFFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not cap threads: {e}");
        }
    }
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Invariant { dump: Some(p), .. } = &e {
                eprintln!("offending state written to {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
