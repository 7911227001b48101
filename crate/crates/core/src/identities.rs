//! Sampled identity checks for an anisotropy, as printed by
//! `anisotropy-report`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::anisotropy::{dual_norm_by_ascent, dziuk_sample_pairs, Anisotropy, Cutoff, DziukConstants};
use crate::error::{Error, Result};
use crate::numeric::{self, dot, norm};

/// Samples used by [`Anisotropy::fit_dziuk_constants`] in the report.
pub const DZIUK_SAMPLES: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub check_name: &'static str,
    pub max_abs_error: f64,
    pub samples: usize,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.max_abs_error <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
    pub dziuk: DziukConstants,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.dziuk.lower > 0.0 && self.dziuk.upper.is_finite() && self.checks.iter().all(IdentityCheck::passed)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.check_name == name)
    }

    /// CSV with columns `check_name, max_abs_error, samples`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check_name", "max_abs_error", "samples"])
            .map_err(|e| Error::input(e.to_string()))?;
        for c in &self.checks {
            w.write_record([c.check_name.to_string(), format!("{:e}", c.max_abs_error), c.samples.to_string()])
                .map_err(|e| Error::input(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

fn random_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let r: f64 = 10f64.powf(rng.gen_range(-1.0..1.0));
    numeric::random_unit(rng, dim).into_iter().map(|x| x * r).collect()
}

fn check(name: &'static str, samples: usize, tolerance: f64, errors: impl Iterator<Item = f64>) -> IdentityCheck {
    IdentityCheck {
        check_name: name,
        max_abs_error: errors.fold(0.0, |m, e| if e.is_nan() { f64::INFINITY } else { m.max(e) }),
        samples,
        tolerance,
    }
}

/// `max_θ q·e(θ)/σ°(e(θ))` by a scan and golden-section refinement; the
/// objective is unimodal on the circle since `{σ° ≤ 1}` is convex.
fn double_polar_2d(a: &Anisotropy, q: &[f64]) -> Result<f64> {
    let f = |th: f64| -> Result<f64> {
        let e = [th.cos(), th.sin()];
        Ok(dot(q, &e) / a.polar(&e)?)
    };
    let n = 128;
    let step = std::f64::consts::TAU / n as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..n {
        let th = step * k as f64;
        let v = f(th)?;
        if v > best.0 {
            best = (v, th);
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > 1e-9 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(f1.max(f2).max(best.0))
}

/// Runs every identity check with the given seed.
pub fn identity_report(a: &Anisotropy, seed: u64) -> Result<IdentityReport> {
    let d = a.dim();
    let mut rng = numeric::rng(seed);
    let mut checks = Vec::new();
    let mut g = vec![0.0; d];

    let pts: Vec<(Vec<f64>, f64)> = (0..100)
        .map(|_| (random_vector(&mut rng, d), rng.gen_range(1e-3..=10.0)))
        .collect();
    checks.push(check(
        "homogeneity",
        pts.len(),
        1e-12,
        pts.iter().map(|(p, l)| {
            let lp: Vec<f64> = p.iter().map(|x| x * l).collect();
            (a.value(&lp) - l * a.value(p)).abs() / (l * a.value(p))
        }),
    ));
    checks.push(check(
        "euler",
        pts.len(),
        1e-10,
        pts.iter().map(|(p, _)| {
            let s = a.value_grad(p, &mut g);
            (dot(p, &g) - s).abs()
        }),
    ));

    let units: Vec<Vec<f64>> = (0..50).map(|_| numeric::random_unit(&mut rng, d)).collect();
    let mut polar_errors = Vec::new();
    for p in &units {
        let ds = a.dsigma(p)?;
        polar_errors.push((a.polar(&ds)? - 1.0).abs());
    }
    checks.push(check("polar_of_gradient", units.len(), 1e-9, polar_errors.into_iter()));

    let mut double = Vec::new();
    for (k, q) in units.iter().enumerate() {
        let v = if d == 2 {
            double_polar_2d(a, q)?
        } else {
            // Ascent on the polar, whose gradient is the maximizer.
            dual_norm_by_ascent(
                d,
                q,
                |p, grad| match a.polar_argmax(p) {
                    Ok((v, arg)) => {
                        grad.copy_from_slice(&arg);
                        v
                    }
                    Err(_) => f64::NAN,
                },
                seed ^ (k as u64 + 1),
            )?
            .0
        };
        double.push((v - a.value(q)).abs() / a.value(q));
    }
    checks.push(check("double_polar", units.len(), 1e-5, double.into_iter()));

    let h = 1e-5;
    let mut grad_err = Vec::new();
    let mut hess_err = Vec::new();
    let mut null_err = Vec::new();
    for p in &units {
        let ds = a.dsigma(p)?;
        let hs = a.d2sigma(p)?;
        for i in 0..d {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[i] += h;
            pm[i] -= h;
            grad_err.push(((a.value(&pp) - a.value(&pm)) / (2.0 * h) - ds[i]).abs());
            let (gp, gm) = (a.dsigma(&pp)?, a.dsigma(&pm)?);
            for j in 0..d {
                hess_err.push(((gp[j] - gm[j]) / (2.0 * h) - hs[(j, i)]).abs());
            }
        }
        let hp: Vec<f64> = (0..d).map(|i| (0..d).map(|j| hs[(i, j)] * p[j]).sum()).collect();
        null_err.push(norm(&hp) / hs.norm().max(f64::MIN_POSITIVE));
    }
    checks.push(check("gradient_fd", units.len(), 1e-6, grad_err.into_iter()));
    checks.push(check("hessian_fd", units.len(), 1e-5, hess_err.into_iter()));
    checks.push(check("radial_null_space", units.len(), 1e-10, null_err.into_iter()));

    let dziuk = a.fit_dziuk_constants(&Cutoff, DZIUK_SAMPLES)?;
    let pairs = dziuk_sample_pairs(d, 4_000, seed ^ 0x5a5a);
    let mut sandwich = Vec::new();
    for (p, pp) in &pairs {
        let gap = a.dziuk_gap(&Cutoff, p, pp)?;
        let dist2: f64 = p.iter().zip(pp).map(|(x, y)| (x - y) * (x - y)).sum();
        let upper = dziuk.upper * (dist2 + 1.0 - norm(pp));
        sandwich.push((dziuk.lower * dist2 - gap).max(gap - upper).max(0.0));
    }
    checks.push(check("dziuk_sandwich", pairs.len(), 1e-6, sandwich.into_iter()));

    let bs: Vec<Vec<f64>> = (0..20).map(|_| random_vector(&mut rng, d)).collect();
    checks.push(check(
        "duality_sup",
        bs.len(),
        1e-6,
        bs.iter().map(|b| {
            let s = a.value_grad(b, &mut g);
            (s - dot(b, &g)) / s
        }),
    ));
    let mut bound = Vec::new();
    for _ in 0..100 {
        let b = random_vector(&mut rng, d);
        let dir = numeric::random_unit(&mut rng, d);
        let scale = rng.gen_range(0.0..=1.0) / a.polar(&dir)?;
        let eta: Vec<f64> = dir.iter().map(|x| x * scale).collect();
        bound.push((dot(&b, &eta) - a.value(&b)).max(0.0));
    }
    checks.push(check("duality_bound", 100, 1e-10, bound.into_iter()));

    Ok(IdentityReport { checks, dziuk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn euclidean_identities_are_exact() {
        let r = identity_report(&Anisotropy::euclidean(2).unwrap(), 1).unwrap();
        assert!(r.passed(), "{r:?}");
        for c in &r.checks {
            assert!(c.max_abs_error <= 1e-10, "{c:?}");
        }
    }

    #[test]
    fn bgn_identities_pass() {
        let ell = Anisotropy::diagonal(&[4.0, 1.0]).unwrap();
        assert!(identity_report(&ell, 2).unwrap().passed());
        let two = Anisotropy::bgn(
            2.0,
            &[
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]),
                DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let r = identity_report(&two, 3).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = identity_report(&Anisotropy::euclidean(3).unwrap(), 4).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("check_name,max_abs_error,samples\n"));
        assert_eq!(text.lines().count(), 1 + r.checks.len());
    }
}
