use std::sync::Arc;

use proptest::prelude::*;

use holestokes::bogovskii::{bogovskii_perforated, BogovskiiSetup, MeanZeroField};
use holestokes::experiments::{fit_growth, GrowthVerdict};
use holestokes::fem::interpolate_p2;
use holestokes::meshgen::{mesh_rectangle, mesh_single_hole, rescale_mesh};
use holestokes::norms::{lp_norm, lp_norm_where, NormField};
use holestokes::perforated::{build_perforated, DEFAULT_B1};
use holestokes::restriction::{restrict, restriction_exponent, PerforatedMesh};
use holestokes::*;

fn lp(p: f64) -> LebesgueExponent {
    LebesgueExponent::new(p).unwrap()
}

fn poly(c: [f64; 4]) -> ScalarField {
    ScalarField::closure(move |x| c[0] + c[1] * x[0] + c[2] * x[1] * x[1] + c[3] * (3.0 * x[0] * x[1]).sin())
}

fn coeffs() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0..2.0f64)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conjugate_is_an_involution(p in 1.01..50.0f64) {
        let q = conjugate(lp(p));
        prop_assert!((1.0 / p + 1.0 / q.value() - 1.0).abs() < 1e-12);
        prop_assert!((conjugate(q).value() - p).abs() < 1e-9 * p);
    }

    #[test]
    fn restriction_exponent_formula(p in 1.01..2.0f64, alpha in 1.0..4.0f64) {
        let e = restriction_exponent(p, 2, alpha).unwrap();
        prop_assert!((e - ((2.0 - p) * alpha - 2.0) / p).abs() < 1e-14);
        prop_assert!(restriction_exponent(2.0 + p, 2, alpha).is_err());
    }

    #[test]
    fn rescaling_multiplies_areas(f in 0.01..100.0f64, nx in 1usize..6, ny in 1usize..6) {
        let m = mesh_rectangle([-0.3, 0.2], [1.7, 0.9], nx, ny).unwrap();
        let r = rescale_mesh(&m, f).unwrap();
        for t in 0..m.n_triangles() {
            let (a, b) = (m.triangle_area(t), r.triangle_area(t));
            prop_assert!((b - f * f * a).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn single_hole_mesh_area(k in 1u32..7, n_hole in prop::sample::select(vec![16usize, 24, 32])) {
        let spec = DomainSpec::default_with_epsilon(0.5f64.powi(k as i32));
        let m = mesh_single_hole(&spec, 0.5, n_hole).unwrap();
        let area = m.total_area();
        prop_assert!((area - spec.fluid_area(n_hole)).abs() <= 1e-10 * area);
        prop_assert!(m.min_angle_deg() >= 20.0);
    }

    #[test]
    fn norm_monotone_in_domain(c in coeffs(), p in 1.1..6.0f64, cut in 0.0..1.0f64) {
        let m = mesh_rectangle([0.0, 0.0], [1.0, 1.0], 5, 5).unwrap();
        let f = poly(c);
        let full = lp_norm(NormField::Scalar(&f), &m, lp(p), 6).unwrap().value;
        let keep = |t: usize| m.triangle_points(t)[0][0] < cut;
        let part = lp_norm_where(NormField::Scalar(&f), &m, lp(p), 6, &keep).unwrap().value;
        prop_assert!(part <= full);
    }

    #[test]
    fn norm_nondecreasing_in_p_on_unit_area(c in coeffs()) {
        let m = mesh_rectangle([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let f = poly(c);
        let mut last = 0.0;
        for p in [1.1, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0] {
            let n = lp_norm(NormField::Scalar(&f), &m, lp(p), 6).unwrap().value;
            prop_assert!(n >= last * (1.0 - 1e-12));
            last = n;
        }
    }

    #[test]
    fn norm_scaling_law(c in coeffs(), p in 1.1..6.0f64, s in 0.05..20.0f64) {
        let m = mesh_rectangle([0.0, 0.0], [1.0, 1.0], 3, 3).unwrap();
        let r = rescale_mesh(&m, s).unwrap();
        let f = poly(c);
        let g = ScalarField::closure(move |x| {
            let c = c;
            let y = [x[0] / s, x[1] / s];
            c[0] + c[1] * y[0] + c[2] * y[1] * y[1] + c[3] * (3.0 * y[0] * y[1]).sin()
        });
        let a = lp_norm(NormField::Scalar(&f), &m, lp(p), 6).unwrap().value;
        let b = lp_norm(NormField::Scalar(&g), &r, lp(p), 6).unwrap().value;
        let expect = a * s.powf(2.0 / p);
        prop_assert!((b - expect).abs() <= 1e-10 * expect.max(1e-300));
    }

    #[test]
    fn growth_fit_is_scale_free(k in 0.01..100.0f64, rate in 0.0..2.0f64) {
        let eps = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let values: Vec<f64> = eps.iter().map(|e: &f64| (1.0 / e).powf(rate)).collect();
        let scaled: Vec<f64> = values.iter().map(|v| k * v).collect();
        let a = fit_growth(&eps, &values).unwrap();
        let b = fit_growth(&eps, &scaled).unwrap();
        prop_assert!((a.slope - rate).abs() < 1e-9);
        prop_assert!((a.slope - b.slope).abs() < 1e-9);
        prop_assert_eq!(a.verdict, b.verdict);
        if rate > 0.06 {
            prop_assert_eq!(a.verdict, GrowthVerdict::Growing);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn energy_inequality_for_polynomial_sources(c in prop::array::uniform8(-3.0..3.0f64)) {
        let mesh = Arc::new(mesh_rectangle([0.0, 0.0], [1.0, 1.0], 6, 6).unwrap());
        let g = TensorField::closure(move |x| {
            [[c[0] + c[1] * x[1] * x[1], c[2] * x[0] * x[1] + c[3]], [c[4] * x[0], c[5] + c[6] * x[1] + c[7] * x[0] * x[0]]]
        });
        let sol = StokesSolver::new(mesh.clone()).unwrap()
            .solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero).unwrap();
        let two = lp(2.0);
        let grad = lp_norm(NormField::VelocityGradient(&sol.velocity), &mesh, two, 6).unwrap().value;
        let bound = lp_norm(NormField::Tensor(&g), &mesh, two, 6).unwrap().value;
        prop_assert!(grad <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn restriction_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, alpha in prop::sample::select(vec![1.0, 2.0])) {
        let pd = build_perforated(1.0, 2, alpha, HoleShape::disk(0.25), DEFAULT_B1, None).unwrap();
        let pm = PerforatedMesh::new(pd, 16, 1.0).unwrap();
        let pi = std::f64::consts::PI;
        let u = interpolate_p2(&pm.full, &VectorField::closure(move |x| {
            [(pi * x[0]).sin() * (pi * x[1]).sin(), x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])]
        })).unwrap();
        let v = interpolate_p2(&pm.full, &VectorField::closure(move |x| {
            [x[0] * (1.0 - x[0]) * (2.0 * pi * x[1]).sin(), (pi * x[0]).sin().powi(2) * x[1] * (1.0 - x[1])]
        })).unwrap();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let (ru, rv, rw) = (
            restrict(&pm, &u).unwrap().velocity,
            restrict(&pm, &v).unwrap().velocity,
            restrict(&pm, &w).unwrap().velocity,
        );
        let combo: Vec<f64> = ru.iter().zip(&rv).map(|(x, y)| a * x + b * y).collect();
        prop_assert!(max_abs_diff(&rw, &combo) <= 1e-9 * (1.0 + max_abs(&rw)));
    }

    #[test]
    fn bogovskii_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000) {
        let pd = build_perforated(1.0, 2, 1.0, HoleShape::disk(0.25), DEFAULT_B1, None).unwrap();
        let setup = BogovskiiSetup::new(PerforatedMesh::new(pd, 16, 1.0).unwrap()).unwrap();
        let fluid = setup.mesh.fluid.clone();
        let f = MeanZeroField::random(fluid.clone(), seed).unwrap();
        let g = MeanZeroField::random(fluid.clone(), seed + 1).unwrap();
        let h = MeanZeroField::projected(
            fluid,
            f.values.iter().zip(g.values.iter()).map(|(x, y)| std::array::from_fn(|i| a * x[i] + b * y[i])).collect(),
        ).unwrap();
        let (bf, bg, bh) = (
            bogovskii_perforated(&setup, &f).unwrap().velocity,
            bogovskii_perforated(&setup, &g).unwrap().velocity,
            bogovskii_perforated(&setup, &h).unwrap().velocity,
        );
        let combo: Vec<f64> = bf.iter().zip(&bg).map(|(x, y)| a * x + b * y).collect();
        prop_assert!(max_abs_diff(&bh, &combo) <= 1e-9 * (1.0 + max_abs(&bh)));
    }
}
