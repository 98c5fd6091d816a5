use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thermolab::anosov::{hyperbolicity_criterion, DiscreteGenerator, SolverOptions};
use thermolab::expr::{parse_expression, Var};
use thermolab::field::{SmField, SmPoint};
use thermolab::flow::Thermostat;
use thermolab::geometry::{DerivativeMode, SurfaceModel};
use thermolab::grid::GridSpec;
use thermolab::identities::check_pestov_pointwise;
use thermolab::report::to_json;
use thermolab::xray::{entry_state, transform_pair, PairField};

/// Random expression text over x, y, theta, smooth on the whole chart.
fn smooth_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("theta".to_string()),
        Just("pi".to_string()),
        (-3.0f64..3.0).prop_map(|c| format!("{c:.3}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} / (2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("tanh({a})")),
            inner.clone().prop_map(|a| format!("exp(0.1*sin({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("log(2 + cos({a}))")),
            inner.clone().prop_map(|a| format!("tan(0.3*sin({a}))")),
        ]
    })
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..(2.0 * PI)).prop_map(|(x, y, t)| [x, y, t])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_and_reparsing_preserves_values(text in smooth_expr(), seed in any::<u64>()) {
        let e = parse_expression(&text).unwrap();
        let back = parse_expression(&e.to_string()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)];
            let (a, b) = (e.eval(p), back.eval(p));
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0), "{text}: {a} vs {b}");
        }
    }

    #[test]
    fn symbolic_derivatives_match_central_differences(text in smooth_expr(), p in point()) {
        let e = parse_expression(&text).unwrap();
        for v in Var::ALL {
            let d = e.derivative(v).eval(p);
            let h = 1e-6;
            let (mut a, mut b) = (p, p);
            a[v.index()] += h;
            b[v.index()] -= h;
            let fd = (e.eval(a) - e.eval(b)) / (2.0 * h);
            prop_assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "{text} d/{}: {d} vs {fd}", v.name());
        }
    }

    #[test]
    fn pestov_holds_for_random_data(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -0.5f64..0.5, p in point()) {
        let m = SurfaceModel::flat_torus();
        let lam = SmField::parse(&format!("{c}*sin(2*pi*x) + 0.2*cos(theta)")).unwrap();
        let u = SmField::parse(&format!("{a}*sin(2*pi*x)*cos(theta) + {b}*cos(2*pi*y)*sin(2*theta)")).unwrap();
        let rep = check_pestov_pointwise(&m, &lam, &u, &[SmPoint::from_coords(p)], DerivativeMode::Analytic);
        prop_assert!(rep.max_residual < 1e-9 * rep.max_lhs.max(1.0));
    }

    #[test]
    fn criterion_of_a_constant_coupling_on_the_flat_torus(c in -3.0f64..3.0) {
        let r = hyperbolicity_criterion(&SurfaceModel::flat_torus(), &SmField::constant(c), &GridSpec::torus(4));
        prop_assert!((r.sup_value - c * c).abs() <= 1e-14 * c * c);
        prop_assert!(!r.anosov_flag);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn xray_transform_is_linear(a in -2.0f64..2.0, s in 0.0f64..(2.0 * PI), ang in -1.4f64..1.4) {
        let th = Thermostat::new(SurfaceModel::flat_disk(), SmField::constant(0.3));
        let p1 = PairField::parse("x*y", "1 + x", "y^2").unwrap();
        let p2 = PairField::parse("cos(x)", "0", "x - y").unwrap();
        let scaled = PairField::new(p2.phi.scale(a), p2.w_x.scale(a), p2.w_y.scale(a));
        let start = entry_state(s, ang);
        let sum = transform_pair(&th, &p1.add(&scaled), start).unwrap().value;
        let parts = transform_pair(&th, &p1, start).unwrap().value + a * transform_pair(&th, &p2, start).unwrap().value;
        prop_assert!((sum - parts).abs() < 1e-11 * sum.abs().max(1.0));
    }

    #[test]
    fn coboundaries_of_smooth_functions_are_recovered(c in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let m = SurfaceModel::flat_torus();
        let lam = SmField::parse("0.3*cos(2*pi*x)").unwrap();
        let gen = DiscreteGenerator::new(&m, &lam, 12, 12, 12).unwrap();
        let tau = 2.0 * PI;
        let w: Vec<f64> = gen
            .nodes()
            .iter()
            .map(|p| {
                c[0] * (tau * p.x).sin() * p.theta.cos()
                    + c[1] * (tau * p.y).cos()
                    + c[2] * (2.0 * p.theta).sin()
                    + c[3] * (tau * (p.x - p.y)).sin() * p.theta.sin()
            })
            .collect();
        let r = gen.solve(&gen.apply(&w), SolverOptions::default()).unwrap();
        prop_assert!(r.residual < 1e-8, "{}", r.residual);
    }
}

#[test]
fn reports_serialize_identically_twice() {
    let m = SurfaceModel::flat_torus();
    let r = hyperbolicity_criterion(&m, &SmField::parse("0.1*sin(2*pi*x)").unwrap(), &GridSpec::torus(8));
    assert_eq!(to_json(&r).unwrap(), to_json(&r).unwrap());
}
