//! Built-in systems addressable by name.
//!
//! Names: `tangent(n)`, `so3`, `heisenberg3`, `abelian(k)`, `skew-nonlie3`,
//! `sphere2-tangent`, and `lift(<name>)` for any of them.

use std::f64::consts::PI;

use crate::algebroid::{default_names, levi_civita as epsilon, SkewAlgebroid};
use crate::dynamics::Lagrangian;
use crate::error::{AmechError, Result};
use crate::expr::{parse, Expression};
use crate::lift::{lift_algebroid, lift_function};
use crate::systems::MetricField;

/// An algebroid with its default Lagrangian, working domain and initial state.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: String,
    pub algebroid: SkewAlgebroid,
    pub lagrangian: Lagrangian,
    /// Working box for the base, one interval per coordinate.
    pub domain: Vec<(f64, f64)>,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// Fiber metric when the default Lagrangian is purely kinetic.
    pub metric: Option<MetricField>,
}

pub const NAMES: [&str; 6] = ["tangent(n)", "so3", "heisenberg3", "abelian(k)", "skew-nonlie3", "sphere2-tangent"];

fn constant_algebra(label: &str, k: usize, entries: &[(usize, usize, usize, f64)]) -> SkewAlgebroid {
    let mut c = vec![0.0; k * k * k];
    for &(i, j, l, v) in entries {
        c[(i * k + j) * k + l] = v;
        c[(i * k + l) * k + j] = -v;
    }
    SkewAlgebroid::skew_algebra(label, k, &c).expect("catalog data is well formed")
}

fn unit_metric(k: usize) -> MetricField {
    MetricField::identity(k)
}

fn kinetic_entry(name: &str, a: SkewAlgebroid, metric: MetricField, domain: Vec<(f64, f64)>, x0: Vec<f64>, y0: Vec<f64>) -> CatalogEntry {
    let lagrangian = Lagrangian::kinetic(&a, &metric.g).expect("metric matches the fiber rank");
    CatalogEntry { name: name.to_string(), algebroid: a, lagrangian, domain, x0, y0, metric: Some(metric) }
}

pub fn so3() -> SkewAlgebroid {
    let mut c = vec![0.0; 27];
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                c[(i * 3 + j) * 3 + l] = epsilon(j, l, i);
            }
        }
    }
    SkewAlgebroid::skew_algebra("so3", 3, &c).expect("so3 is well formed")
}

/// `[e1,e2] = e3`.
pub fn heisenberg3() -> SkewAlgebroid {
    constant_algebra("heisenberg3", 3, &[(2, 0, 1, 1.0)])
}

pub fn abelian(k: usize) -> Result<SkewAlgebroid> {
    SkewAlgebroid::skew_algebra(format!("abelian({k})"), k, &vec![0.0; k * k * k])
}

/// `[e1,e2] = e3`, `[e2,e3] = e1`, `[e3,e1] = e1`; the Jacobiator of the
/// basis triple is `e3`.
pub fn skew_nonlie3() -> SkewAlgebroid {
    constant_algebra("skew-nonlie3", 3, &[(2, 0, 1, 1.0), (0, 1, 2, 1.0), (0, 2, 0, 1.0)])
}

/// Tangent bundle of the sphere chart `(θ, φ)` with the round metric.
pub fn sphere2_tangent() -> (SkewAlgebroid, MetricField) {
    let names = default_names("x", 2);
    let a = SkewAlgebroid::with_names("sphere2-tangent", names.clone(), default_names("y", 2), tangent_rho(2), vec![Expression::zero(); 8])
        .expect("sphere chart is well formed");
    let g = MetricField::diagonal(vec![Expression::one(), parse("sin(x1)^2", &names).expect("valid metric")]);
    (a, g)
}

fn tangent_rho(n: usize) -> Vec<Expression> {
    (0..n * n).map(|p| if p / n == p % n { Expression::one() } else { Expression::zero() }).collect()
}

/// Anchor `ρ(e1) = x ∂_x`, `ρ(e2) = ∂_x` with zero bracket: skew but not
/// almost-Lie, since `[ρe1, ρe2] = −∂_x`.
pub fn non_almost_lie_example() -> SkewAlgebroid {
    let rho = vec![Expression::var(0), Expression::one()];
    SkewAlgebroid::new("non-almost-lie", 1, 2, rho, vec![Expression::zero(); 8]).expect("example is well formed")
}

fn parse_index(arg: &str, name: &str) -> Result<usize> {
    arg.trim()
        .parse::<usize>()
        .ok()
        .filter(|&v| v >= 1)
        .ok_or_else(|| AmechError::UnknownCatalog(format!("{name}: expected a positive integer argument, got {arg:?}")))
}

fn strip_call<'a>(name: &'a str, head: &str) -> Option<&'a str> {
    name.strip_prefix(head)?.strip_prefix('(')?.strip_suffix(')')
}

/// Resolve a catalog name.
pub fn lookup(name: &str) -> Result<CatalogEntry> {
    let name = name.trim();
    if let Some(inner) = strip_call(name, "lift") {
        let base = lookup(inner)?;
        let lifted = lift_algebroid(&base.algebroid);
        let lagrangian = lift_function(&base.lagrangian, &lifted)?;
        let n = base.algebroid.n();
        let k = base.algebroid.k();
        let mut domain = base.domain.clone();
        domain.extend(std::iter::repeat_n((-1.0, 1.0), n));
        let x0 = base.x0.iter().copied().chain(std::iter::repeat_n(0.0, n)).collect();
        let y0 = base.y0.iter().copied().chain((0..k).map(|i| if i == 0 { 1.0 } else { 0.0 })).collect();
        return Ok(CatalogEntry {
            name: name.to_string(),
            algebroid: lifted.algebroid,
            lagrangian,
            domain,
            x0,
            y0,
            metric: None,
        });
    }
    if let Some(arg) = strip_call(name, "tangent") {
        let n = parse_index(arg, "tangent")?;
        let mut y0 = vec![0.0; n];
        y0[0] = 1.0;
        return Ok(kinetic_entry(name, SkewAlgebroid::tangent(n), unit_metric(n), vec![(-1.0, 1.0); n], vec![0.0; n], y0));
    }
    if let Some(arg) = strip_call(name, "abelian") {
        let k = parse_index(arg, "abelian")?;
        return Ok(kinetic_entry(name, abelian(k)?, unit_metric(k), vec![], vec![], vec![1.0; k]));
    }
    match name {
        "so3" => {
            let g = MetricField::diagonal(vec![Expression::num(1.0), Expression::num(2.0), Expression::num(3.0)]);
            Ok(kinetic_entry(name, so3(), g, vec![], vec![], vec![1.0, 0.1, 0.1]))
        }
        "heisenberg3" => Ok(kinetic_entry(name, heisenberg3(), unit_metric(3), vec![], vec![], vec![1.0, 0.5, 0.2])),
        "skew-nonlie3" => Ok(kinetic_entry(name, skew_nonlie3(), unit_metric(3), vec![], vec![], vec![1.0, 0.5, 0.2])),
        "sphere2-tangent" => {
            let (a, g) = sphere2_tangent();
            Ok(kinetic_entry(name, a, g, vec![(0.2, PI - 0.2), (-PI, PI)], vec![PI / 2.0, 0.0], vec![0.0, 1.0]))
        }
        _ => Err(AmechError::UnknownCatalog(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::lattice;
    use nalgebra::DVector;

    /// Brute-force Jacobiator from three nested brackets.
    fn brute_jacobiator(a: &SkewAlgebroid, u: usize, v: usize, w: usize) -> DVector<f64> {
        let s = a.c_at(&[]).unwrap();
        let e = |i: usize| DVector::from_fn(a.k(), |r, _| if r == i { 1.0 } else { 0.0 });
        s.bracket(&s.bracket(&e(u), &e(v)), &e(w)) + s.bracket(&s.bracket(&e(v), &e(w)), &e(u)) + s.bracket(&s.bracket(&e(w), &e(u)), &e(v))
    }

    #[test]
    fn nonlie_entry_has_nonzero_jacobiator() {
        let a = skew_nonlie3();
        let j = brute_jacobiator(&a, 0, 1, 2);
        assert_eq!(j.as_slice(), &[0.0, 0.0, 1.0]);
        let via = a.jacobiator(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[]).unwrap();
        assert!((via - j).amax() < 1e-15);
    }

    #[test]
    fn lie_entries_pass() {
        for name in ["so3", "heisenberg3", "abelian(4)", "tangent(3)", "sphere2-tangent", "lift(so3)"] {
            let e = lookup(name).unwrap();
            let r = e.algebroid.check_lie(&lattice(&e.domain, 3), 1e-9).unwrap();
            assert!(r.pass, "{name}: {r:?}");
        }
    }

    #[test]
    fn non_almost_lie_example_fails() {
        let a = non_almost_lie_example();
        let r = a.check_almost_lie(&lattice(&[(-1.0, 1.0)], 5), 1e-9).unwrap();
        assert!(!r.pass);
        assert!((r.max_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lifted_dimensions() {
        let e = lookup("lift(so3)").unwrap();
        assert_eq!((e.algebroid.n(), e.algebroid.k()), (0, 6));
        assert_eq!(e.y0.len(), 6);
        let s = lookup("lift(sphere2-tangent)").unwrap();
        assert_eq!((s.algebroid.n(), s.algebroid.k(), s.domain.len(), s.x0.len()), (4, 4, 4, 4));
    }

    #[test]
    fn unknown_names() {
        for bad in ["so4", "tangent(0)", "tangent(x)", "lift(nope)", "abelian"] {
            assert!(matches!(lookup(bad), Err(AmechError::UnknownCatalog(_))), "{bad}");
        }
    }

    #[test]
    fn default_states_fit_dimensions() {
        for name in ["tangent(2)", "so3", "heisenberg3", "abelian(2)", "skew-nonlie3", "sphere2-tangent"] {
            let e = lookup(name).unwrap();
            assert_eq!(e.x0.len(), e.algebroid.n());
            assert_eq!(e.y0.len(), e.algebroid.k());
            assert_eq!(e.domain.len(), e.algebroid.n());
            assert!(e.lagrangian.at(&e.x0, &e.y0).unwrap().w().cholesky().is_some());
        }
    }
}
