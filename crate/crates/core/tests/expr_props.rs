use amech_core::expr::{central_difference, parse, EvalError, Expression, Func};
use proptest::prelude::*;

const NAMES: [&str; 3] = ["x1", "x2", "y1"];

/// Random smooth expressions in three variables that are finite everywhere.
fn smooth_expr() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![(-3.0f64..3.0).prop_map(Expression::num), (0usize..3).prop_map(Expression::var)];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expression::add(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expression::sub(&a, &b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expression::mul(&a, &b)),
            // denominators bounded away from zero
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                Expression::div(&a, &Expression::add(&Expression::num(1.5), &Expression::powi(&b, 2)))
            }),
            (inner.clone(), 0i32..4).prop_map(|(a, p)| Expression::powi(&a, p)),
            inner.clone().prop_map(|a| Expression::neg(&a)),
            inner.clone().prop_map(|a| Expression::call(Func::Sin, &a)),
            inner.clone().prop_map(|a| Expression::call(Func::Cos, &a)),
            inner.clone().prop_map(|a| Expression::call(Func::Exp, &Expression::call(Func::Sin, &a))),
            inner.clone().prop_map(|a| {
                Expression::call(Func::Log, &Expression::add(&Expression::num(1.0), &Expression::powi(&a, 2)))
            }),
            inner.prop_map(|a| Expression::call(Func::Sqrt, &Expression::add(&Expression::num(1.0), &Expression::powi(&a, 2)))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5f64..1.5, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derivative_matches_central_difference(e in smooth_expr(), x in point(), v in 0usize..3) {
        let exact = e.diff(v).eval(&x).unwrap();
        let fd = central_difference(&e, &x, v, 1e-5).unwrap();
        let value = e.eval(&x).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-5 * (1.0 + value.abs() + exact.abs()), "{exact} vs {fd} for {e:?}");
    }

    #[test]
    fn mixed_partials_agree(e in smooth_expr(), x in point(), a in 0usize..3, b in 0usize..3) {
        let ab = e.diff(a).diff(b).eval(&x).unwrap();
        let ba = e.diff(b).diff(a).eval(&x).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab.abs().max(ba.abs())), "{ab} vs {ba}");
    }

    #[test]
    fn print_parse_round_trip(e in smooth_expr(), x in point()) {
        let printed = e.to_source(&NAMES);
        let reparsed = parse(&printed, &NAMES).unwrap();
        prop_assert_eq!(reparsed.to_source(&NAMES), printed.clone());
        let (u, v) = (e.eval(&x).unwrap(), reparsed.eval(&x).unwrap());
        prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()), "{printed}: {u} vs {v}");
    }

    #[test]
    fn free_vars_are_declared(e in smooth_expr()) {
        prop_assert!(e.free_vars().iter().all(|&v| v < 3));
        prop_assert!(e.diff(0).free_vars().iter().all(|&v| v < 3));
    }
}

#[test]
fn spot_values() {
    let e = parse("y1^2/2", &["y1"]).unwrap();
    assert_eq!(e.eval(&[3.0]).unwrap(), 4.5);
    assert_eq!(e.diff(0).eval(&[3.0]).unwrap(), 3.0);
    assert_eq!(parse("exp(0)", &[] as &[&str]).unwrap().eval(&[]).unwrap(), 1.0);
    assert_eq!(parse("x1^3", &["x1"]).unwrap().eval(&[2.0]).unwrap(), 8.0);
    assert!(matches!(parse("sqrt(x1)", &["x1"]).unwrap().eval(&[-1.0]), Err(EvalError::Domain(_))));
    let s = parse("sin(x1*x2)", &["x1", "x2"]).unwrap();
    assert!((s.diff(0).diff(1).eval(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    let d = parse("x1*x2", &["x1", "x2"]).unwrap().diff(0);
    assert_eq!(d.to_source(&["x1", "x2"]), "x2");
}

#[test]
fn concurrent_evaluation() {
    let e = parse("sin(x1)*exp(x2) + x1^4", &["x1", "x2"]).unwrap();
    let expected: Vec<f64> = (0..64).map(|i| e.eval(&[i as f64 * 0.1, 0.3]).unwrap()).collect();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let e = e.clone();
            std::thread::spawn(move || (0..64).map(|i| e.eval(&[i as f64 * 0.1, 0.3]).unwrap()).collect::<Vec<f64>>())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), expected);
    }
}
