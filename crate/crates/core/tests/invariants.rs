use nalgebra::DMatrix;
use proptest::prelude::*;

use wulffflow::anisotropy::{Anisotropy, Cutoff, Mobility};
use wulffflow::calibration::{build_calibration, ReferenceEvolution};
use wulffflow::diagnostics::{
    eps_relative_entropy, extract_interface, relative_entropy, tilt_excess, Vec3,
};
use wulffflow::energy::{energy_eps, energy_with_gradient, EnergyWorkspace, GWeight};
use wulffflow::field::{Grid, PeriodicField, VectorField};
use wulffflow::potential::{profile, standard_well};
use wulffflow::solver::{initial_wulff, minimize_step, Model, SolverConfig};

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A random symmetric positive definite 2x2 matrix, row-major.
fn spd2() -> impl Strategy<Value = Vec<f64>> {
    (0.2f64..3.0, 0.2f64..3.0, -1.0f64..1.0).prop_map(|(a, b, c)| {
        let off = c * (a * b).sqrt() * 0.9;
        vec![a, off, off, b]
    })
}

fn bgn2() -> impl Strategy<Value = Anisotropy> {
    (1.0f64..4.0, prop::collection::vec(spd2(), 1..3)).prop_map(|(q, ms)| {
        let mats: Vec<DMatrix<f64>> = ms.iter().map(|m| DMatrix::from_row_slice(2, 2, m)).collect();
        Anisotropy::bgn(q, &mats).unwrap()
    })
}

fn nonzero2() -> impl Strategy<Value = Vec<f64>> {
    (0.0f64..std::f64::consts::TAU, -1.0f64..1.0)
        .prop_map(|(th, s)| vec![10f64.powf(s) * th.cos(), 10f64.powf(s) * th.sin()])
}

fn field(grid: Grid, lo: f64, hi: f64) -> impl Strategy<Value = PeriodicField> {
    prop::collection::vec(lo..hi, grid.cells()).prop_map(move |v| PeriodicField::from_vec(grid, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_is_homogeneous_and_euler(a in bgn2(), p in nonzero2(), l in 1e-3f64..10.0) {
        let lp: Vec<f64> = p.iter().map(|x| x * l).collect();
        let s = a.value(&p);
        prop_assert!((a.value(&lp) - l * s).abs() <= 1e-12 * l * s);
        let mut g = [0.0; 2];
        a.value_grad(&p, &mut g);
        prop_assert!((p[0] * g[0] + p[1] * g[1] - s).abs() <= 1e-10 * s.max(1.0));
    }

    #[test]
    fn gradient_lies_on_the_polar_sphere(a in bgn2(), p in nonzero2()) {
        let ds = a.dsigma(&p).unwrap();
        prop_assert!((a.polar(&ds).unwrap() - 1.0).abs() <= 1e-9);
        let h = a.d2sigma(&p).unwrap();
        let hp = [h[(0, 0)] * p[0] + h[(0, 1)] * p[1], h[(1, 0)] * p[0] + h[(1, 1)] * p[1]];
        prop_assert!(norm(&hp) <= 1e-10 * h.norm().max(1.0) * norm(&p).max(1.0));
    }

    #[test]
    fn polar_bounds_pairings(a in bgn2(), b in nonzero2(), th in 0.0f64..6.3, t in 0.0f64..=1.0) {
        let dir = [th.cos(), th.sin()];
        let scale = t / a.polar(&dir).unwrap();
        let eta = [dir[0] * scale, dir[1] * scale];
        prop_assert!(b[0] * eta[0] + b[1] * eta[1] <= a.value(&b) + 1e-10);
    }

    #[test]
    fn truncated_cahn_hoffman_is_bounded(a in bgn2(), xi in nonzero2()) {
        let f = a.cahn_hoffman_trunc(&Cutoff, &xi);
        prop_assert!(f.iter().all(|v| v.is_finite()));
        if norm(&xi) <= 1.0 {
            let gap = a.dziuk_gap(&Cutoff, &[1.0, 0.0], &[xi[0] * 0.5, xi[1] * 0.5]).unwrap();
            prop_assert!(gap >= -1e-12);
        }
    }

    #[test]
    fn well_is_symmetric_and_lambda_convex(x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.0f64..=1.0) {
        let w = standard_well();
        prop_assert!((w.w(x) - w.w(1.0 - x)).abs() <= 1e-15);
        let m = (1.0 - t) * x + t * y;
        let bound = (1.0 - t) * w.w(x) + t * w.w(y) + 0.5 * w.lambda() * t * (1.0 - t) * (y - x).powi(2);
        prop_assert!(w.w(m) <= bound + 1e-12);
    }

    #[test]
    fn profile_solves_its_ode(z in -3.0f64..3.0) {
        let w = standard_well();
        let prof = profile(&w);
        let th = prof.eval(z);
        prop_assert!((0.0..=1.0).contains(&th));
        prop_assert!((prof.derivative(z) - w.w(th).sqrt()).abs() <= 1e-7);
    }

    #[test]
    fn summation_by_parts(
        (u, f) in (1usize..=3, prop::sample::select(vec![4usize, 8])).prop_flat_map(|(d, n)| {
            let g = Grid::unit(d, n).unwrap();
            (field(g, -1.0, 1.0), prop::collection::vec(field(g, -1.0, 1.0), d))
        })
    ) {
        let g = *u.grid();
        let f = VectorField { components: f };
        let lhs = u.forward_gradient().inner(&f);
        let div = f.neg_adjoint_divergence().unwrap();
        let rhs = -g.cell_volume() * u.data().iter().zip(div.data()).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn gradient_commutes_with_shifts(u in field(Grid::unit(2, 8).unwrap(), -1.0, 1.0), sx in -8isize..8, sy in -8isize..8) {
        let a = u.shift(&[sx, sy]).forward_gradient();
        let b = u.forward_gradient();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            let shifted = cb.shift(&[sx, sy]);
            prop_assert_eq!(ca.data(), shifted.data());
        }
    }

    #[test]
    fn energy_gradient_matches_differences(
        a in bgn2(),
        u in field(Grid::unit(2, 8).unwrap(), 0.0, 1.0),
        v in field(Grid::unit(2, 8).unwrap(), -1.0, 1.0),
    ) {
        let g = *u.grid();
        let eps = 0.5;
        let w = standard_well();
        let mut ws = EnergyWorkspace::new(&g);
        let mut grad = vec![0.0; g.cells()];
        energy_with_gradient(&g, u.data(), eps, &a, &w, &mut ws, Some(&mut grad));
        let mut along = |s: f64| {
            let x: Vec<f64> = u.data().iter().zip(v.data()).map(|(a, b)| a + s * b).collect();
            energy_with_gradient(&g, &x, eps, &a, &w, &mut ws, None).total
        };
        let h = 1e-5;
        let fd = (along(h) - along(-h)) / (2.0 * h);
        let exact: f64 = grad.iter().zip(v.data()).map(|(a, b)| a * b).sum();
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{} {}", fd, exact);
    }

    #[test]
    fn energy_is_semiconvex(
        u in field(Grid::unit(1, 16).unwrap(), -0.2, 1.2),
        v in field(Grid::unit(1, 16).unwrap(), -0.2, 1.2),
        t in 0.0f64..=1.0,
    ) {
        let a = Anisotropy::euclidean(1).unwrap();
        let w = standard_well();
        let eps = 0.25;
        let e = |x: &PeriodicField| energy_eps(x, eps, &a, &w).unwrap().total;
        let m = PeriodicField::from_vec(
            *u.grid(),
            u.data().iter().zip(v.data()).map(|(x, y)| (1.0 - t) * x + t * y).collect(),
        ).unwrap();
        let dist2: f64 = u.data().iter().zip(v.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * u.grid().cell_volume();
        let lam = w.lambda() / (2.0 * eps);
        prop_assert!(e(&m) <= (1.0 - t) * e(&u) + t * e(&v) + 0.5 * lam * t * (1.0 - t) * dist2 + 1e-12);
    }

    #[test]
    fn g_weight_is_bounded(a in bgn2(), p in nonzero2()) {
        let gw = GWeight::new(a.clone(), Mobility::euclidean(2).unwrap()).unwrap();
        let g = gw.g(&p);
        prop_assert!(g >= gw.c_g() * (1.0 - 1e-12));
        prop_assert!(g <= a.stats().sigma_max + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn steps_dissipate_and_obey_the_maximum_principle(u in field(Grid::unit(2, 16).unwrap(), -0.3, 1.3)) {
        let m = Model::isotropic(2, standard_well()).unwrap();
        let cfg = SolverConfig::new(&m, 0.25, 0.5, 0.0).unwrap();
        let (next, rec) = minimize_step(&u, &cfg, &m).unwrap();
        let e0 = rec.energy_before.total;
        prop_assert!(rec.energy_after.total <= e0 + 10.0 * cfg.tol_grad * e0);
        prop_assert!(rec.metric_increment <= 2.0 * cfg.h * (e0 - rec.energy_after.total) + 1e-10 * e0);
        let bound = u.linf_center_distance().max(0.5);
        prop_assert!(next.linf_center_distance() <= bound + 1e-8);
    }

    #[test]
    fn entropies_are_nonnegative_and_control_the_tilt(alpha in 0.0f64..1.0, beta in -1.0f64..1.0, r0 in 0.09f64..0.15) {
        let w = standard_well();
        let a = Anisotropy::diagonal(&[4.0, 1.0]).unwrap();
        let grid = Grid::unit(2, 96).unwrap();
        let eps = 1.0 / 24.0;
        let u = initial_wulff(&a, &profile(&w), &[0.5, 0.5], r0, eps, &grid).unwrap();
        let iface = extract_interface(&u);
        let scale = alpha / (1.0 + beta * beta).sqrt();
        let xi = move |x: &Vec3| [scale * (3.0 * x[1]).cos(), scale * beta, 0.0];
        prop_assert!(eps_relative_entropy(&u, xi, &a, &w, &Cutoff).unwrap() >= -1e-10);
        let rel = relative_entropy(&iface, xi, &a, &Cutoff).unwrap();
        prop_assert!(rel >= -1e-12);
        let c = a.fit_dziuk_constants(&Cutoff, 4000).unwrap().lower;
        prop_assert!(tilt_excess(&iface, xi) <= rel / c + 1e-9);
    }

    #[test]
    fn transported_boundary_stays_on_the_front(t in 0.0f64..0.01, k in 0usize..64) {
        let r = ReferenceEvolution::new(Anisotropy::diagonal(&[4.0, 1.0]).unwrap(), &[0.5, 0.5], 0.2, 0.01, 1.0).unwrap();
        let p = r.boundary_points(t, 64).unwrap()[k];
        let sd = r.signed_distance(&[p[0], p[1], 0.0], t);
        prop_assert!(sd.value.abs() <= 1e-8);
    }

    #[test]
    fn xi_is_continuous_across_the_cutoff(th in 0.0f64..6.3, side in prop::bool::ANY) {
        let r = ReferenceEvolution::new(Anisotropy::euclidean(2).unwrap(), &[0.5, 0.5], 0.3, 0.02, 1.0).unwrap();
        let cal = build_calibration(&r, None).unwrap();
        let rad = r.radius(0.01);
        let s0 = if side { cal.delta() } else { -cal.delta() };
        let at = |s: f64| {
            let x: Vec3 = [0.5 + (rad + s) * th.cos(), 0.5 + (rad + s) * th.sin(), 0.0];
            cal.xi(&x, 0.01)
        };
        let h = 1e-9;
        let (lo, hi) = (at(s0 - h), at(s0 + h));
        prop_assert!((lo[0] - hi[0]).abs() <= 1e-8 && (lo[1] - hi[1]).abs() <= 1e-8);
    }
}
