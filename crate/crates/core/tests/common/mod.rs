//! Closed-form generator curves shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use amech_core::variation::{GeneratorCurve, Jet};
use rand::Rng;

/// `sin(π (t − t0)/T) · p(t − t0)` per component with quadratic `p`;
/// vanishes at both ends of `[t0, t0 + T]`.
pub fn bump(t0: f64, span: f64, coeffs: Vec<[f64; 3]>) -> GeneratorCurve {
    let k = coeffs.len();
    let w = PI / span;
    GeneratorCurve::analytic(k, move |t| {
        let u = t - t0;
        let (s, c) = ((w * u).sin(), (w * u).cos());
        let mut j = Jet::zero(k);
        for (i, [a, b, q]) in coeffs.iter().enumerate() {
            let p = a + b * u + q * u * u;
            let pd = b + 2.0 * q * u;
            let pdd = 2.0 * q;
            j.f[i] = s * p;
            j.fd[i] = w * c * p + s * pd;
            j.fdd[i] = -w * w * s * p + 2.0 * w * c * pd + s * pdd;
        }
        j
    })
}

/// A bump plus an affine part, so the endpoint values are generic.
pub fn free(t0: f64, affine: Vec<[f64; 2]>, bump_part: GeneratorCurve) -> GeneratorCurve {
    let k = affine.len();
    GeneratorCurve::analytic(k, move |t| {
        let mut j = match &bump_part {
            GeneratorCurve::Analytic { jet, .. } => jet(t),
            _ => Jet::zero(k),
        };
        for (i, [a, b]) in affine.iter().enumerate() {
            j.f[i] += a + b * (t - t0);
            j.fd[i] += b;
        }
        j
    })
}

/// `a·p + b·q` for two analytic curves.
pub fn combine(a: f64, p: GeneratorCurve, b: f64, q: GeneratorCurve) -> GeneratorCurve {
    let k = p.k();
    match (p, q) {
        (GeneratorCurve::Analytic { jet: jp, .. }, GeneratorCurve::Analytic { jet: jq, .. }) => GeneratorCurve::analytic(k, move |t| {
            let (u, v) = (jp(t), jq(t));
            Jet { f: u.f * a + v.f * b, fd: u.fd * a + v.fd * b, fdd: u.fdd * a + v.fdd * b }
        }),
        _ => panic!("combine expects analytic curves"),
    }
}

pub fn random_bump<R: Rng>(rng: &mut R, k: usize, t0: f64, span: f64) -> GeneratorCurve {
    bump(t0, span, (0..k).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect())
}

pub fn random_free<R: Rng>(rng: &mut R, k: usize, t0: f64, span: f64) -> GeneratorCurve {
    let affine = (0..k).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    free(t0, affine, random_bump(rng, k, t0, span))
}
