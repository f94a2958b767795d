use std::f64::consts::PI;

use amech_core::catalog::lookup;
use amech_core::dynamics::integrate_el;
use amech_core::jacobi::{conjugate_scan, integrate_jacobi, DEFAULT_TOL_DET, DEFAULT_TOL_SV};
use amech_core::variation::{
    kappa_variation, null_space, second_variation_matrix, second_variation_value, second_variation_vector, symmetry_defect, DeltaField,
    GeneratorCurve, DEFAULT_NULL_TOL,
};
use amech_core::{AmechError, Lagrangian, SkewAlgebroid, Trajectory};
use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{bump, combine, random_bump, random_free};

const LIE: [&str; 6] = ["tangent(2)", "sphere2-tangent", "so3", "heisenberg3", "abelian(3)", "lift(so3)"];

fn host_of(name: &str, t1: f64, h: f64) -> (SkewAlgebroid, Lagrangian, Trajectory) {
    let e = lookup(name).unwrap();
    let tr = integrate_el(&e.algebroid, &e.lagrangian, &e.x0, &e.y0, 0.0, t1, h).unwrap();
    (e.algebroid, e.lagrangian, tr)
}

fn cross(u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let w = Vector3::new(u[0], u[1], u[2]).cross(&Vector3::new(v[0], v[1], v[2]));
    DVector::from_column_slice(w.as_slice())
}

#[test]
fn kappa_variation_on_so3_is_fdot_plus_bracket() {
    let (a, _, tr) = host_of("so3", 1.0, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_bump(&mut rng, 3, 0.0, 1.0);
    let var = kappa_variation(&a, &tr, &g).unwrap();
    let jets = g.node_jets(&tr);
    for m in 0..tr.len() {
        assert!(var.dx[m].is_empty());
        let want = &jets[m].fd + cross(&tr.y[m], &jets[m].f);
        assert!((&var.dy[m] - want).amax() < 1e-14);
    }
}

#[test]
fn second_order_vector_on_so3() {
    let (a, _, tr) = host_of("so3", 1.0, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (gf, gh, gd) = (random_bump(&mut rng, 3, 0.0, 1.0), random_bump(&mut rng, 3, 0.0, 1.0), random_bump(&mut rng, 3, 0.0, 1.0));
    let v = second_variation_vector(&a, &tr, &gf, &gh, &gd).unwrap();
    let (fj, hj, dj) = (gf.node_jets(&tr), gh.node_jets(&tr), gd.node_jets(&tr));
    for m in 0..tr.len() {
        let y = &tr.y[m];
        let dy_xi = &fj[m].fd + cross(y, &fj[m].f);
        let dy_eta = &hj[m].fd + cross(y, &hj[m].f);
        let ddy = &dj[m].fd + cross(y, &dj[m].f) + cross(&dy_eta, &fj[m].f);
        assert!((&v[m].dy_xi - dy_xi).amax() < 1e-14);
        assert!((&v[m].dy_eta - dy_eta).amax() < 1e-14);
        assert!((&v[m].ddy - ddy).amax() < 1e-13);
        assert!(v[m].ddx.is_empty());
    }
}

#[test]
fn tangent_second_jet_matches_two_parameter_family() {
    // x(t, s, r) = x(t) + s f(t) + r h(t) + s r Δ(t); the mixed partial of
    // (x, ẋ) is (Δ, Δ̇)
    let (a, _, tr) = host_of("tangent(2)", 1.0, 1e-2);
    let gf = bump(0.0, 1.0, vec![[0.3, 1.0, -0.5], [1.0, 0.0, 0.2]]);
    let gh = bump(0.0, 1.0, vec![[-0.7, 0.4, 0.1], [0.2, -1.0, 0.9]]);
    let gd = bump(0.0, 1.0, vec![[0.5, 0.5, 0.5], [-0.3, 0.8, 0.0]]);
    let v = second_variation_vector(&a, &tr, &gf, &gh, &gd).unwrap();
    let (fj, hj, dj) = (gf.node_jets(&tr), gh.node_jets(&tr), gd.node_jets(&tr));
    let eps = 1e-3;
    for m in 0..tr.len() {
        let fam = |s: f64, r: f64| -> (DVector<f64>, DVector<f64>) {
            (
                &tr.x[m] + &fj[m].f * s + &hj[m].f * r + &dj[m].f * (s * r),
                &tr.xdot[m] + &fj[m].fd * s + &hj[m].fd * r + &dj[m].fd * (s * r),
            )
        };
        let mixed = |pick: fn((DVector<f64>, DVector<f64>)) -> DVector<f64>| {
            (pick(fam(eps, eps)) - pick(fam(eps, -eps)) - pick(fam(-eps, eps)) + pick(fam(-eps, -eps))) / (4.0 * eps * eps)
        };
        assert!((&v[m].ddx - mixed(|p| p.0)).amax() < 1e-8);
        assert!((&v[m].ddy - mixed(|p| p.1)).amax() < 1e-8);
    }
}

#[test]
fn zero_eta_gives_zero() {
    let (a, l, tr) = host_of("sphere2-tangent", 1.0, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xi = random_bump(&mut rng, 2, 0.0, 1.0);
    let v = second_variation_value(&a, &l, &tr, &GeneratorCurve::zero(2), &xi, &DeltaField::Zero).unwrap();
    assert_eq!(v.value, 0.0);
}

#[test]
fn bilinear_in_both_slots() {
    for name in ["sphere2-tangent", "skew-nonlie3"] {
        let (a, l, tr) = host_of(name, 1.0, 1e-2);
        let k = a.k();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (e1, e2) = (random_free(&mut rng, k, 0.0, 1.0), random_free(&mut rng, k, 0.0, 1.0));
        let (x1, x2) = (random_bump(&mut rng, k, 0.0, 1.0), random_bump(&mut rng, k, 0.0, 1.0));
        let (p, q) = (1.7, -0.6);
        let s = |eta: &GeneratorCurve, xi: &GeneratorCurve| second_variation_value(&a, &l, &tr, eta, xi, &DeltaField::Zero).unwrap().value;
        let lhs = s(&combine(p, e1.clone(), q, e2.clone()), &x1);
        let rhs = p * s(&e1, &x1) + q * s(&e2, &x1);
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{name}: {lhs} vs {rhs}");
        let lhs = s(&e1, &combine(p, x1.clone(), q, x2.clone()));
        let rhs = p * s(&e1, &x1) + q * s(&e1, &x2);
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{name}: {lhs} vs {rhs}");
    }
}

#[test]
fn integration_by_parts_route_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in LIE.iter().chain(&["skew-nonlie3"]) {
        let (a, l, tr) = host_of(name, 1.0, 1e-3);
        let k = a.k();
        for delta in [DeltaField::Zero, DeltaField::Curve(random_bump(&mut rng, k, 0.0, 1.0))] {
            let eta = random_free(&mut rng, k, 0.0, 1.0);
            let xi = random_bump(&mut rng, k, 0.0, 1.0);
            let v = second_variation_value(&a, &l, &tr, &eta, &xi, &delta).unwrap();
            let d = v.discrepancy.unwrap();
            assert!(d <= 1e-6 * (1.0 + v.value.abs()), "{name}: {} vs {:?}", v.value, v.alternative);
        }
    }
}

#[test]
fn hat_generators_have_no_alternative_route() {
    let (a, l, tr) = host_of("so3", 1.0, 1e-2);
    let v = second_variation_value(&a, &l, &tr, &GeneratorCurve::hat(&tr, 3, 10, 0), &GeneratorCurve::hat(&tr, 3, 11, 1), &DeltaField::Zero)
        .unwrap();
    assert!(v.alternative.is_none() && v.discrepancy.is_none());
}

#[test]
fn null_dimension_matches_conjugate_multiplicity() {
    let e = lookup("sphere2-tangent").unwrap();
    for (t1, want) in [(PI, 1usize), (3.0, 0)] {
        let tr = integrate_el(&e.algebroid, &e.lagrangian, &e.x0, &e.y0, 0.0, t1, t1 / 100.0).unwrap();
        let ns = null_space(&second_variation_matrix(&e.algebroid, &e.lagrangian, &tr).unwrap(), DEFAULT_NULL_TOL);
        assert_eq!(ns.dimension, want, "t1 = {t1}");
        let fine = integrate_el(&e.algebroid, &e.lagrangian, &e.x0, &e.y0, 0.0, t1, t1 / 2000.0).unwrap();
        let rep = conjugate_scan(&e.algebroid, &e.lagrangian, &fine, DEFAULT_TOL_DET, DEFAULT_TOL_SV).unwrap();
        let at_end: usize = rep.conjugate_times.iter().filter(|c| (c.t - t1).abs() < 1e-6).map(|c| c.multiplicity).sum();
        assert_eq!(at_end, want, "t1 = {t1}");
    }
}

#[test]
fn symmetric_pair_has_no_defect() {
    let (a, l, tr) = host_of("skew-nonlie3", 1.0, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (g, d) = (random_bump(&mut rng, 3, 0.0, 1.0), random_bump(&mut rng, 3, 0.0, 1.0));
    let s = symmetry_defect(&a, &l, &tr, &g, &g, &d).unwrap();
    assert!(s.defect.abs() < 1e-13 && s.jacobiator_integral.abs() < 1e-13, "{s:?}");
}

#[test]
fn lie_catalog_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in LIE {
        let (a, l, tr) = host_of(name, 1.0, 1e-2);
        let k = a.k();
        let (eta, xi, d) = (random_bump(&mut rng, k, 0.0, 1.0), random_bump(&mut rng, k, 0.0, 1.0), random_bump(&mut rng, k, 0.0, 1.0));
        let s = symmetry_defect(&a, &l, &tr, &eta, &xi, &d).unwrap();
        let scale = second_variation_value(&a, &l, &tr, &eta, &xi, &DeltaField::Curve(d)).unwrap().value.abs().max(1.0);
        assert!(s.defect.abs() <= 1e-6 * scale, "{name}: {s:?}");
        assert!(s.jacobiator_integral.abs() <= 1e-12, "{name}: {s:?}");
    }
}

#[test]
fn non_lie_matrix_asymmetry_is_the_jacobiator_integral() {
    let e = lookup("skew-nonlie3").unwrap();
    let l = Lagrangian::parse(&e.algebroid, "0.5*(2*y1^2 + y2^2 + 1.5*y3^2) + 0.3*y1*y2 - 0.2*y2*y3 + 0.2*y3").unwrap();
    let tr = integrate_el(&e.algebroid, &l, &e.x0, &e.y0, 0.0, 1.0, 0.01).unwrap();
    let bm = second_variation_matrix(&e.algebroid, &l, &tr).unwrap();
    assert!(bm.symmetry_defect_norm() > 1e-6, "{}", bm.symmetry_defect_norm());
    let scale = bm.b.amax();
    let idx = |node: usize, i: usize| (node - 1) * 3 + i;
    let mut checked = 0;
    for (np, i, nq, j) in [(3, 0, 3, 1), (3, 1, 4, 2), (7, 2, 6, 0), (10, 0, 11, 2), (15, 1, 15, 2)] {
        let (p, q) = (idx(np, i), idx(nq, j));
        let asym = bm.b[(p, q)] - bm.b[(q, p)];
        let (hp, hq) = (GeneratorCurve::hat(&tr, 3, np, i), GeneratorCurve::hat(&tr, 3, nq, j));
        let jint = symmetry_defect(&e.algebroid, &l, &tr, &hp, &hq, &GeneratorCurve::zero(3)).unwrap().jacobiator_integral;
        assert!((asym - jint).abs() <= 1e-8 * scale, "({p},{q}): {asym} vs {jint}");
        checked += (jint.abs() > 1e-6) as usize;
    }
    assert!(checked >= 3);
}

#[test]
fn jacobi_fields_annihilate_the_first_slot() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for name in LIE.iter().chain(&["skew-nonlie3"]) {
        let (a, l, tr) = host_of(name, 1.0, 1e-3);
        let k = a.k();
        let xi0: Vec<f64> = (0..k).map(|i| 0.3 - 0.2 * i as f64).collect();
        let xid0: Vec<f64> = (0..k).map(|i| 1.0 - 0.4 * i as f64).collect();
        let jf = GeneratorCurve::from_jacobi(&integrate_jacobi(&a, &l, &tr, &xi0, &xid0).unwrap());
        let xi = random_bump(&mut rng, k, 0.0, 1.0);
        let v = second_variation_value(&a, &l, &tr, &jf, &xi, &DeltaField::Zero).unwrap().value;
        let reference = second_variation_value(&a, &l, &tr, &random_free(&mut rng, k, 0.0, 1.0), &xi, &DeltaField::Zero).unwrap().value;
        assert!(v.abs() <= 1e-7 * reference.abs().max(1.0), "{name}: {v} (reference {reference})");
    }
}

#[test]
fn matrix_is_deterministic() {
    let (a, l, tr) = host_of("sphere2-tangent", 1.0, 0.02);
    let b1 = second_variation_matrix(&a, &l, &tr).unwrap();
    let b2 = second_variation_matrix(&a, &l, &tr).unwrap();
    assert_eq!(b1.to_csv(), b2.to_csv());
    assert_eq!(b1.dim(), 2 * 49);
}

#[test]
fn flat_line_is_nondegenerate() {
    let (a, l, tr) = host_of("tangent(2)", 2.0, 0.02);
    let bm = second_variation_matrix(&a, &l, &tr).unwrap();
    let ns = null_space(&bm, DEFAULT_NULL_TOL);
    assert_eq!(ns.dimension, 0);
    assert_eq!(bm.index(), 0);
    assert!(bm.symmetry_defect_norm() < 1e-12);
}

#[test]
fn xi_must_vanish_at_the_ends() {
    let (a, l, tr) = host_of("so3", 1.0, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eta = random_bump(&mut rng, 3, 0.0, 1.0);
    let xi = random_free(&mut rng, 3, 0.0, 1.0);
    let err = second_variation_value(&a, &l, &tr, &eta, &xi, &DeltaField::Zero).unwrap_err();
    assert!(matches!(err, AmechError::InvalidArgument(_)), "{err}");
}

#[test]
fn rejects_a_non_solution_host() {
    let a = SkewAlgebroid::tangent(1);
    let l = Lagrangian::euclidean(&a);
    let h = 1e-2;
    let x: Vec<DVector<f64>> = (0..=100).map(|m| DVector::from_element(1, (m as f64 * h).powi(2))).collect();
    let y: Vec<DVector<f64>> = (0..=100).map(|m| DVector::from_element(1, 2.0 * m as f64 * h)).collect();
    let tr = Trajectory::from_samples(&a, &l, 0.0, h, x, y).unwrap();
    let g = bump(0.0, 1.0, vec![[1.0, 0.0, 0.0]]);
    let err = second_variation_value(&a, &l, &tr, &g, &g, &DeltaField::Zero).unwrap_err();
    assert!(matches!(err, AmechError::HostResidual { .. }), "{err}");
}
