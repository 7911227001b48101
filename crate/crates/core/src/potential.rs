//! Double-well potentials with wells at 0 and 1 and the optimal 1-D profile.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric;

const SAMPLE_LO: f64 = -2.0;
const SAMPLE_HI: f64 = 3.0;
const SAMPLES: usize = 5_001;

/// A polynomial double-well potential `W(s) = Σ a_k s^k`.
#[derive(Clone, Debug)]
pub struct DoubleWell {
    name: String,
    coeffs: Vec<f64>,
    lambda: f64,
    c0: f64,
    standard: bool,
    /// `φ(z) = ∫₀ᶻ √W` tabulated on `[0, 1]` for non-standard wells.
    phi_table: Vec<f64>,
}

const PHI_NODES: usize = 2048;

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * s + a)
}

fn derive(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

/// `W(s) = 36 s²(1−s)²`, normalized so that `∫₀¹ √W = 1`.
pub fn standard_well() -> DoubleWell {
    let mut w = DoubleWell::from_polynomial("standard36", &[0.0, 0.0, 36.0, -72.0, 36.0])
        .expect("standard well is admissible");
    w.standard = true;
    w
}

/// Looks up a well by its configuration name.
pub fn well_by_name(name: &str) -> Result<DoubleWell> {
    match name {
        "standard36" => Ok(standard_well()),
        other => Err(Error::config(format!("unknown well `{other}` (known: standard36)"))),
    }
}

/// `c₀ = ∫₀¹ √W(s) ds` by adaptive quadrature to absolute tolerance 1e-10.
pub fn c0_of(w: &DoubleWell) -> Result<f64> {
    numeric::adaptive_simpson(|s| w.w(s).max(0.0).sqrt(), 0.0, 1.0, 1e-10)
}

impl DoubleWell {
    /// Admits a polynomial potential after checking the well assumptions on
    /// a sample grid of `[−2, 3]`.
    pub fn from_polynomial(name: &str, coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("well coefficients must be finite and non-empty"));
        }
        let mut w = DoubleWell {
            name: name.to_string(),
            coeffs: coeffs.to_vec(),
            lambda: 0.0,
            c0: 0.0,
            standard: false,
            phi_table: Vec::new(),
        };
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            return Err(Error::input("W ≡ 0 has no separated wells"));
        }
        if w.w(0.0).abs() > 1e-12 * scale || w.w(1.0).abs() > 1e-12 * scale {
            return Err(Error::input("W must vanish at 0 and 1"));
        }
        if !(w.d2w(0.0) > 0.0 && w.d2w(1.0) > 0.0) {
            return Err(Error::input("W″ must be positive at both wells"));
        }
        for k in 0..SAMPLES {
            let s = SAMPLE_LO + (SAMPLE_HI - SAMPLE_LO) * k as f64 / (SAMPLES - 1) as f64;
            if s == 0.0 || s == 1.0 {
                continue;
            }
            if !(w.w(s) > 0.0) {
                return Err(Error::input(format!("W({s}) is not positive")));
            }
            if s < 0.0 && w.dw(s) > 0.0 {
                return Err(Error::input(format!("W must be nonincreasing on (−∞,0]; W′({s}) > 0")));
            }
            if s > 1.0 && w.dw(s) < 0.0 {
                return Err(Error::input(format!("W must be nondecreasing on [1,∞); W′({s}) < 0")));
            }
        }
        w.lambda = -w.min_second_derivative();
        if !(w.lambda > 0.0) {
            return Err(Error::input("a double well cannot be convex"));
        }
        w.c0 = c0_of(&w)?;
        w.phi_table = (0..=PHI_NODES)
            .map(|k| {
                let z = k as f64 / PHI_NODES as f64;
                numeric::adaptive_simpson(|s| w.w(s).max(0.0).sqrt(), 0.0, z, 1e-13)
            })
            .collect::<Result<_>>()?;
        Ok(w)
    }

    /// Global minimum of `W″`; exact at the vertex for quartic wells.
    fn min_second_derivative(&self) -> f64 {
        let d2 = derive(&derive(&self.coeffs));
        match d2.len() {
            0 => 0.0,
            1 => d2[0],
            3 if d2[2] > 0.0 => {
                let s = -d2[1] / (2.0 * d2[2]);
                horner(&d2, s)
            }
            _ => {
                // Sample, then polish the best point with Newton on W‴.
                let d3 = derive(&d2);
                let d4 = derive(&d3);
                let (mut s, _) = (0..=20_000)
                    .map(|k| {
                        let s = -10.0 + 20.0 * k as f64 / 20_000.0;
                        (s, horner(&d2, s))
                    })
                    .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                for _ in 0..50 {
                    let h = horner(&d4, s);
                    if h <= 0.0 {
                        break;
                    }
                    s -= horner(&d3, s) / h;
                }
                horner(&d2, s)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn w(&self, s: f64) -> f64 {
        if self.standard {
            let t = s * (1.0 - s);
            return 36.0 * t * t;
        }
        horner(&self.coeffs, s)
    }

    #[inline]
    pub fn dw(&self, s: f64) -> f64 {
        if self.standard {
            return 72.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        }
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, a)| acc * s + k as f64 * a)
    }

    #[inline]
    pub fn d2w(&self, s: f64) -> f64 {
        horner(&derive(&derive(&self.coeffs)), s)
    }

    /// λ with `W + (λ/2)s²` convex.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `∫₀¹ √W`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `φ(z) = ∫₀ᶻ √W`, extended constantly outside `[0, 1]`.
    #[inline]
    pub fn phi(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        if self.standard {
            return z * z * (3.0 - 2.0 * z);
        }
        let x = z * PHI_NODES as f64;
        let k = (x.floor() as usize).min(PHI_NODES - 1);
        let t = x - k as f64;
        let h = 1.0 / PHI_NODES as f64;
        let (z0, z1) = (k as f64 * h, (k + 1) as f64 * h);
        hermite(
            self.phi_table[k],
            self.phi_table[k + 1],
            self.w(z0).max(0.0).sqrt() * h,
            self.w(z1).max(0.0).sqrt() * h,
            t,
        )
    }
}

#[inline]
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * m1
}

/// The optimal profile `Θ` solving `Θ′ = √W(Θ)`, `Θ(0) = 1/2`.
#[derive(Clone, Debug)]
pub struct Profile {
    well: DoubleWell,
    values: Vec<f64>,
}

impl Profile {
    pub const Z_MAX: f64 = 10.0;
    pub const STEP: f64 = 1e-3;

    fn nodes_per_side() -> usize {
        (Self::Z_MAX / Self::STEP).round() as usize
    }

    /// Value at `z`; constant beyond `[−10, 10]`.
    pub fn eval(&self, z: f64) -> f64 {
        let m = Self::nodes_per_side();
        let x = (z.clamp(-Self::Z_MAX, Self::Z_MAX) + Self::Z_MAX) / Self::STEP;
        let k = (x.floor() as usize).min(2 * m - 1);
        let t = x - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let m0 = self.well.w(y0).max(0.0).sqrt() * Self::STEP;
        let m1 = self.well.w(y1).max(0.0).sqrt() * Self::STEP;
        hermite(y0, y1, m0, m1, t).clamp(y0, y1)
    }

    /// `Θ′(z) = √W(Θ(z))` inside the tabulated range, zero outside.
    pub fn derivative(&self, z: f64) -> f64 {
        if z.abs() > Self::Z_MAX {
            return 0.0;
        }
        self.well.w(self.eval(z)).max(0.0).sqrt()
    }

    /// Tabulated `(z, Θ(z))` pairs.
    pub fn table(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let m = Self::nodes_per_side() as f64;
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| ((k as f64 - m) * Self::STEP, v))
    }

    /// Two-column CSV `z,theta`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "z,theta").map_err(io)?;
        for (z, v) in self.table() {
            writeln!(out, "{z},{v:e}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Integrates the profile ODE by classical RK4 with step 1e-3 on `[−10, 10]`.
pub fn profile(w: &DoubleWell) -> Profile {
    let m = Profile::nodes_per_side();
    let rhs = |y: f64| w.w(y).max(0.0).sqrt();
    let integrate = |dir: f64| -> Vec<f64> {
        let h = dir * Profile::STEP;
        let mut y = 0.5;
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            let next = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            // Keep the tabulation monotone and inside the wells.
            y = if dir > 0.0 { next.clamp(y, 1.0) } else { next.clamp(0.0, y) };
            out.push(y);
        }
        out
    };
    let backward = integrate(-1.0);
    let forward = integrate(1.0);
    let mut values = Vec::with_capacity(2 * m + 1);
    values.extend(backward.into_iter().rev());
    values.push(0.5);
    values.extend(forward);
    Profile {
        well: w.clone(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn logistic(z: f64) -> f64 {
        1.0 / (1.0 + (-6.0 * z).exp())
    }

    #[test]
    fn standard_well_values() {
        let w = standard_well();
        assert_eq!(w.w(0.5), 2.25);
        assert_abs_diff_eq!(w.c0(), 1.0, epsilon = 1e-10);
        assert_eq!(w.lambda(), 36.0);
        for k in 0..=100 {
            let s = -1.0 + 3.0 * k as f64 / 100.0;
            assert_abs_diff_eq!(w.w(s), w.w(1.0 - s), epsilon = 1e-12 * (1.0 + w.w(s)));
        }
    }

    #[test]
    fn lambda_matches_grid_minimum_of_second_derivative() {
        let w = standard_well();
        let min = (0..=10_000)
            .map(|k| {
                let s = k as f64 / 10_000.0;
                36.0 * (2.0 - 12.0 * s + 12.0 * s * s)
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(-min, w.lambda(), epsilon = 1e-9);
    }

    #[test]
    fn c0_from_antiderivative_and_scaling() {
        // s²(3−2s) is an antiderivative of 6s(1−s).
        let exact = 1.0f64 * 1.0 * (3.0 - 2.0);
        assert_abs_diff_eq!(c0_of(&standard_well()).unwrap(), exact, epsilon = 1e-10);
        let scaled = DoubleWell::from_polynomial("x4", &[0.0, 0.0, 144.0, -288.0, 144.0]).unwrap();
        assert_abs_diff_eq!(scaled.c0(), 2.0, epsilon = 1e-10);
        assert!(DoubleWell::from_polynomial("zero", &[0.0]).is_err());
        assert!(DoubleWell::from_polynomial("single", &[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn lambda_convexity_on_random_triples() {
        let w = standard_well();
        let mut rng = crate::numeric::rng(4);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-2.0..3.0);
            let y: f64 = rng.gen_range(-2.0..3.0);
            let t: f64 = rng.gen_range(0.0..1.0);
            let lhs = w.w((1.0 - t) * x + t * y);
            let rhs = (1.0 - t) * w.w(x) + t * w.w(y) + 0.5 * w.lambda() * t * (1.0 - t) * (y - x).powi(2);
            assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()), "{x} {y} {t}");
        }
    }

    #[test]
    fn phi_closed_form_matches_table() {
        let w = standard_well();
        let generic = DoubleWell::from_polynomial("copy", w.coefficients()).unwrap();
        for k in 0..=50 {
            let z = -0.2 + 1.4 * k as f64 / 50.0;
            assert_abs_diff_eq!(w.phi(z), generic.phi(z), epsilon = 1e-12);
        }
        assert_eq!(w.phi(-1.0), 0.0);
        assert_eq!(w.phi(2.0), 1.0);
    }

    #[test]
    fn profile_matches_logistic_solution() {
        let p = profile(&standard_well());
        assert_eq!(p.eval(0.0), 0.5);
        assert_abs_diff_eq!(p.eval(1.0), logistic(1.0), epsilon = 1e-8);
        for k in 0..=400 {
            let z = -10.0 + 20.0 * k as f64 / 400.0 + 1e-4;
            assert_abs_diff_eq!(p.eval(z), logistic(z), epsilon = 1e-8);
        }
        let tail = p.eval(-10.0);
        assert!(tail > 0.0 && tail < 1e-25);
        assert_eq!(p.eval(-50.0), tail);
    }

    #[test]
    fn profile_ode_residual_and_symmetry() {
        let w = standard_well();
        let p = profile(&w);
        let table: Vec<(f64, f64)> = p.table().collect();
        let mut prev = -1.0;
        for win in table.windows(3) {
            let (z, v) = win[1];
            let fd = (win[2].1 - win[0].1) / (win[2].0 - win[0].0);
            // central difference error h²/6·|Θ‴| with |Θ‴| ≤ 27
            assert!((fd - w.w(v).sqrt()).abs() <= 4.6e-6, "z = {z}");
            // strictly increasing wherever 1 − Θ is representable
            if z < 5.0 {
                assert!(v > prev);
            } else {
                assert!(v >= prev);
            }
            prev = v;
        }
        for k in 0..=100 {
            let z = 0.1 * k as f64;
            assert_abs_diff_eq!(p.eval(z) + p.eval(-z), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn profile_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        profile(&standard_well()).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("z,theta\n"));
        assert_eq!(text.lines().count(), 20_002);
    }
}
