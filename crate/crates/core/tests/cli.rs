use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use wulffflow::cli::{self, RunConfig};
use wulffflow::Error;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wulffflow"))
}

const SMALL_CIRCLE: &str = r#"
eps = 0.0625
t_end = 0.002
[grid]
d = 2
n = 64
[anisotropy]
kind = "euclidean"
[scenario]
kind = "wulff"
center = [0.5, 0.5]
r0 = 0.2
[diagnostics]
every = 5
"#;

#[test]
fn runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(SMALL_CIRCLE).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli::simulate(&cfg, &a, 1).unwrap();
    cli::simulate(&cfg, &b, 1).unwrap();
    for name in ["run.csv", "diagnostics.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn every_csv_has_a_header_and_each_run_one_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_CIRCLE
        .replace("eps = 0.0625", "eps_list = [0.0625, 0.03125]")
        .replace("n = 64", "n = 128");
    let cfg = RunConfig::from_toml(&text).unwrap();
    let summaries = cli::simulate(&cfg, tmp.path(), 2).unwrap();
    assert_eq!(summaries.len(), 2);
    for k in 0..2 {
        let dir = tmp.path().join(format!("eps_{k}"));
        let run = fs::read_to_string(dir.join("run.csv")).unwrap();
        assert!(run.starts_with(
            "step,t,E_total,E_dirichlet,E_potential,dissipation_increment,dissipation_sum,max_principle_slack,inner_iters,grad_residual\n"
        ));
        let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
        assert!(diag.starts_with("step,t,equip_defect,sharp_energy,interface_length,"));
        let jsons = fs::read_dir(&dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"))
            .count();
        assert_eq!(jsons, 1);
    }
}

#[test]
fn constant_data_give_a_flat_zero_energy_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_file(&configs().join("constant.toml")).unwrap();
    cli::simulate(&cfg, tmp.path(), 1).unwrap();
    let mut rdr = csv::Reader::from_path(tmp.path().join("run.csv")).unwrap();
    let mut rows = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        for k in 2..7 {
            assert_eq!(r[k].parse::<f64>().unwrap(), 0.0);
        }
        rows += 1;
    }
    assert!(rows > 1);
}

#[test]
fn euclidean_report_is_exact() {
    let cfg = RunConfig::from_file(&configs().join("circle.toml")).unwrap();
    let report = cli::anisotropy_report(&cfg.anisotropy, 2, None).unwrap();
    assert!(report.passed());
    assert!(report.checks.iter().all(|c| c.max_abs_error <= 1e-10));
}

#[test]
fn isotropic_calibration_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_file(&configs().join("calibrate_circle.toml")).unwrap();
    let report = cli::calibrate_check(&cfg, tmp.path()).unwrap();
    assert!(report.passed);
    assert!(tmp.path().join("calibration.json").exists());
}

#[test]
fn converge_needs_three_decreasing_eps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(SMALL_CIRCLE).unwrap();
    assert!(matches!(cli::converge(&cfg, tmp.path(), 1), Err(Error::Input(_))));
    let text = SMALL_CIRCLE.replace("eps = 0.0625", "eps_list = [0.0625, 0.125, 0.03125]");
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert!(cli::converge(&cfg, tmp.path(), 1).is_err());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, SMALL_CIRCLE.replace("n = 64", "n = 64\nbogus = 1")).unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("bogus"), "{err}");

    let good = tmp.path().join("good.toml");
    fs::write(&good, SMALL_CIRCLE).unwrap();
    let out = bin().args(["converge", "--config"]).arg(&good).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["anisotropy-report", "--config"])
        .arg(configs().join("circle.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("check_name,max_abs_error,samples"));

    let out = bin().args(["simulate", "--config"]).arg(&good).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
