use whitney_core::field::{analyze_field, gap_check, FieldOptions};
use whitney_core::gallery::{expected_invariants, make_immersion, ExampleSpec};
use whitney_core::jets::Engine;

fn specs() -> Vec<ExampleSpec> {
    vec![
        ExampleSpec::WhitneyCn { n: 2, r: 1.5, center: None },
        ExampleSpec::WhitneyCpn { n: 2, theta: 0.6, c: 2.0 },
        ExampleSpec::FlatTorus { radii: vec![0.8, 1.3] },
        ExampleSpec::FlatPlane { n: 3 },
    ]
}

#[test]
fn both_engines_reproduce_closed_forms() {
    for spec in specs() {
        let want = expected_invariants(&spec).unwrap();
        let map = make_immersion(&spec).unwrap();
        for (engine, rel) in [(Engine::Exact, 1e-8), (Engine::FiniteDifference, 1e-5)] {
            let opts = FieldOptions { engine, ..Default::default() };
            let ga = gap_check(&map, &vec![10; spec.n()], &opts).unwrap();
            for p in ga.invariants.iter().flatten() {
                let pairs = [(want.h_norm2, p.h_norm2), (want.mean_norm2, p.mean_norm2), (want.b_norm2, p.b_norm2)];
                for (expected, got) in pairs {
                    if let Some(e) = expected {
                        let scale = e.abs().max(1.0);
                        assert!((got - e).abs() <= rel * scale, "{} {engine:?}: {got} vs {e}", spec.name());
                    }
                }
                if want.whitney_profile {
                    let nf = spec.n() as f64;
                    let profile = 3.0 * nf * nf / (nf + 2.0) * p.mean_norm2;
                    assert!((p.h_norm2 - profile).abs() <= rel * p.h_norm2.max(1.0), "{}", spec.name());
                }
            }
        }
    }
}

#[test]
fn gap_check_agrees_with_full_analysis() {
    for spec in specs() {
        let map = make_immersion(&spec).unwrap();
        let res = vec![16; spec.n()];
        let quick = gap_check(&map, &res, &FieldOptions::default()).unwrap().report;
        let full = analyze_field(&map, &res, spec.is_closed(), &FieldOptions::default()).unwrap().report;
        assert_eq!(quick.gap.verdict, full.gap.verdict, "{}", spec.name());
        assert!((quick.b_norm2.sup - full.invariants.b_norm2.sup).abs() < 1e-12, "{}", spec.name());
        assert!((quick.h_norm2.mean - full.invariants.h_norm2.mean).abs() < 1e-10, "{}", spec.name());
    }
}

#[test]
fn sphere_area_converges_to_quadrature() {
    // reference value pi^2 r^2 from adaptive quadrature of the induced area
    // element over the round sphere
    for r in [1.0, 0.5] {
        let spec = ExampleSpec::WhitneyCn { n: 2, r, center: None };
        let map = make_immersion(&spec).unwrap();
        let want = std::f64::consts::PI.powi(2) * r * r;
        let mut errs = Vec::new();
        for res in [48, 96] {
            let fa = analyze_field(&map, &[res, res], true, &FieldOptions::default()).unwrap();
            let vol = fa.report.integrals.volume;
            let parts: f64 = fa.report.integrals.chart_volumes.iter().sum();
            assert!((parts - vol).abs() < 1e-9 * vol);
            assert!(fa.report.warnings.is_empty(), "{:?}", fa.report.warnings);
            errs.push((vol - want).abs() / want);
        }
        assert!(errs[0] < 5e-4, "{errs:?}");
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }
}

#[test]
fn refinement_shrinks_maslov_defect_on_whitney_sphere() {
    let spec = ExampleSpec::WhitneyCn { n: 2, r: 1.0, center: None };
    let map = make_immersion(&spec).unwrap();
    let opts = FieldOptions::default();
    let coarse = analyze_field(&map, &[24, 24], true, &opts).unwrap().report.maslov.sup_defect;
    let fine = analyze_field(&map, &[48, 48], true, &opts).unwrap().report.maslov.sup_defect;
    assert!(fine < coarse / 4.0, "{coarse:e} -> {fine:e}");
}
