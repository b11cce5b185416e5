use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;

use fibrate::fiber::{fiber_eval, lambda_value, mu0, nehari_class, solve_t0};
use fibrate::functionals::{Functional, GradP, WeightedPower};
use fibrate::grid::Grid;
use fibrate::io::{load_field, persist_field, to_json_string};
use fibrate::model::{ClassTag, ModelSpec, NehariClass};
use fibrate::potential::bopp_podolski_potential;
use fibrate::power::class_constants;
use fibrate::problems::{build_problem, ProblemParams, Weight};

fn line(n: usize) -> Arc<Grid> {
    Arc::new(Grid::interval(1.0, n).unwrap())
}

/// Sine series with the given coefficients.
fn series(grid: &Grid, coeffs: &[f64]) -> Vec<f64> {
    grid.sample(|x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * PI * x[0]).sin())
            .sum()
    })
    .into_values()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0..1.0f64, 4), 0.5..2.0f64).prop_map(|(mut c, lead)| {
        c.insert(0, lead);
        c
    })
}

fn models() -> Vec<ModelSpec> {
    let g = line(64);
    let base = Path::new(".");
    [
        ProblemParams::Semilinear { q: 3.0, r: 4.0 },
        ProblemParams::ConcaveConvex { p: 2.0, q: 1.5, r: 3.0, f: Weight::default(), g: Weight::default() },
        ProblemParams::Kirchhoff { a: 1.0, r: 3.0, f: Weight::default() },
        ProblemParams::PqLaplacian { p: 2.5, q: 1.5, r: 4.0, f: Weight::default(), g: Weight::default() },
    ]
    .iter()
    .map(|p| build_problem(p, g.clone(), base).unwrap())
    .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_functionals_are_homogeneous(p in 1.1..5.0f64, s in 0.05..20.0f64, c in coeffs()) {
        let g = line(48);
        let u = series(&g, &c);
        let su: Vec<f64> = u.iter().map(|x| s * x).collect();
        let handles: Vec<Box<dyn Functional>> = vec![
            Box::new(GradP::new(g.clone(), p).unwrap()),
            Box::new(WeightedPower::new(g.clone(), p, None).unwrap()),
        ];
        for f in handles {
            let (a, b) = (f.evaluate(&su), s.powf(p) * f.evaluate(&u));
            prop_assert!((a - b).abs() <= 1e-12 * b.abs(), "{}: {a} vs {b}", f.name());
            let e = f.directional(&u, &u);
            let d = p * f.evaluate(&u);
            prop_assert!((e - d).abs() <= 1e-10 * d.abs());
        }
    }

    #[test]
    fn t0_scales_inversely_and_lambda_is_scale_free(s in 0.01..100.0f64, c in coeffs()) {
        for m in models() {
            let u = series(m.grid(), &c);
            let Ok(d) = solve_t0(&m, &u) else { continue };
            let su: Vec<f64> = u.iter().map(|x| s * x).collect();
            let ds = solve_t0(&m, &su).unwrap();
            prop_assert!((ds.t0 * s - d.t0).abs() <= 1e-10 * d.t0, "{}", m.name());
            prop_assert!((ds.lambda - d.lambda).abs() <= 1e-10 * d.lambda.abs(), "{}", m.name());
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            prop_assert!((lambda_value(&m, &neg).unwrap() - d.lambda).abs() <= 1e-12 * d.lambda.abs());
        }
    }

    #[test]
    fn fiber_is_stationary_at_t0_with_zero_energy(c in coeffs()) {
        for m in models() {
            let u = series(m.grid(), &c);
            let Ok(d) = solve_t0(&m, &u) else { continue };
            let (psi, dpsi, _) = fiber_eval(&m, &u, d.t0).unwrap();
            prop_assert!((psi - d.lambda).abs() <= 1e-12 * d.lambda.abs());
            prop_assert!((d.t0 * dpsi).abs() <= 1e-9 * d.lambda.abs(), "{}: {dpsi}", m.name());
            let v: Vec<f64> = u.iter().map(|x| d.t0 * x).collect();
            let phi = m.phi(d.lambda, &v);
            prop_assert!(phi.abs() <= 1e-12 * m.phi_scale(d.lambda, &v));
            prop_assert!((mu0(&m, &v).unwrap() - d.lambda).abs() <= 1e-12 * d.lambda.abs());
        }
    }

    #[test]
    fn nehari_label_follows_curvature_sign(c in coeffs()) {
        for m in models() {
            let u = series(m.grid(), &c);
            let Ok(d) = solve_t0(&m, &u) else { continue };
            let v: Vec<f64> = u.iter().map(|x| d.t0 * x).collect();
            let label = nehari_class(&m, d.lambda, &v).unwrap();
            let expect = if m.i2(&v) * d.psi_second < 0.0 { NehariClass::NMinus } else { NehariClass::NPlus };
            prop_assert_eq!(label, expect);
        }
    }

    #[test]
    fn class_one_constant_matches_fiber_maximum(alpha in 1.05..3.0f64, gap1 in 0.05..2.0f64, gap2 in 0.05..2.0f64) {
        let (eta, beta) = (alpha + gap1, alpha + gap1 + gap2);
        let k = class_constants(ClassTag::ClassOne, alpha, beta, eta).unwrap();
        prop_assert!(k.derived_matches(1e-10), "{k:?}");
    }

    #[test]
    fn class_two_constant_matches_fiber_minimum(eta in 1.05..3.0f64, gap1 in 0.05..2.0f64, gap2 in 0.05..2.0f64) {
        let (beta, alpha) = (eta + gap1, eta + gap1 + gap2);
        let k = class_constants(ClassTag::ClassTwo, alpha, beta, eta).unwrap();
        prop_assert!(k.derived_matches(1e-10), "{k:?}");
        prop_assert!(k.printed_matches(1e-10), "{k:?}");
    }

    #[test]
    fn potential_kernel_is_symmetric(a in 0.0..3.0f64, c1 in 0.5..4.0f64, c2 in 0.5..4.0f64, w in 0.3..2.0f64) {
        let g = Grid::radial(10.0, 200).unwrap();
        let u = g.sample(|r| (-(r[0] - c1).powi(2) / w).exp()).into_values();
        let v = g.sample(|r| (-(r[0] - c2).powi(2)).exp() * (1.0 + r[0])).into_values();
        let sq = |f: &[f64]| f.iter().map(|x| x * x).collect::<Vec<_>>();
        let l = g.dot(&bopp_podolski_potential(&g, &u, a).unwrap(), &sq(&v));
        let r = g.dot(&bopp_podolski_potential(&g, &v, a).unwrap(), &sq(&u));
        prop_assert!((l - r).abs() <= 1e-9 * l.abs());
    }

    #[test]
    fn field_files_roundtrip_bit_exact(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 9)) {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::interval(2.0, 9).unwrap();
        let p = dir.path().join("u.field");
        persist_field(&g, &values, &p).unwrap();
        let back = load_field(&p, &g).unwrap();
        for (a, b) in back.values().iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn json_numbers_roundtrip_bit_exact(values in prop::collection::vec(prop::num::f64::NORMAL, 1..20)) {
        let back: Vec<f64> = serde_json::from_str(&to_json_string(&values).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
