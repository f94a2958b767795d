//! Tangent lifts.
//!
//! The lift of an algebroid over `M` is an algebroid over `TM` with base
//! coordinates `(x, X)` and fiber coordinates `(y, Y)` in the frame of
//! complete lifts `e_i` followed by vertical lifts `ê_i`:
//!
//! ```text
//! ρ̂(e_i) = ρ^b_i ∂_{x^b} + X^a ∂_aρ^b_i ∂_{X^b}      ρ̂(ê_i) = ρ^b_i ∂_{X^b}
//! [e_i, e_j] = c^k_{ij} e_k + X^a ∂_a c^k_{ij} ê_k
//! [e_i, ê_j] = c^k_{ij} ê_k                          [ê_i, ê_j] = 0
//! ```
//!
//! Functions lift to `d_T L = ∂L/∂x·X + ∂L/∂y·Y`.

use nalgebra::DVector;
use serde::Serialize;

use crate::algebroid::SkewAlgebroid;
use crate::dynamics::{el_residual, Lagrangian, Trajectory};
use crate::error::{dim_check, Result};
use crate::expr::Expression;
use crate::jacobi::{jacobi_residual, JacobiField};
use crate::numerics::diff_o2;
use crate::variation::{kappa_variation, GeneratorCurve};

#[derive(Clone, Debug)]
pub struct LiftedAlgebroid {
    pub algebroid: SkewAlgebroid,
    pub source: String,
}

fn lifted_names(names: &[String]) -> Vec<String> {
    names.iter().cloned().chain(names.iter().map(|s| format!("d{s}"))).collect()
}

pub fn lift_algebroid(a: &SkewAlgebroid) -> LiftedAlgebroid {
    let (n, k) = (a.n(), a.k());
    let (nn, kk) = (2 * n, 2 * k);
    let big_x = |b: usize| Expression::var(n + b);
    let mut rho = vec![Expression::zero(); nn * kk];
    for b in 0..n {
        for i in 0..k {
            let r = a.rho_expr(b, i).clone();
            let d = Expression::sum((0..n).map(|s| Expression::mul(a.drho_expr(s, b, i), &big_x(s))));
            rho[b * kk + i] = r.clone();
            rho[(n + b) * kk + i] = d;
            rho[(n + b) * kk + k + i] = r;
        }
    }
    let mut c = vec![Expression::zero(); kk * kk * kk];
    let idx = |i: usize, j: usize, l: usize| (i * kk + j) * kk + l;
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                let cm = a.c_expr(m, i, j).clone();
                if i < j {
                    c[idx(m, i, j)] = cm.clone();
                    let d = Expression::sum((0..n).map(|s| Expression::mul(a.dc_expr(s, m, i, j), &big_x(s))));
                    c[idx(k + m, i, j)] = d;
                }
                c[idx(k + m, i, k + j)] = cm;
            }
        }
    }
    let label = format!("lift({})", a.label());
    let algebroid = SkewAlgebroid::with_names(label, lifted_names(a.base_names()), lifted_names(a.fiber_names()), rho, c)
        .expect("lifted data is well formed");
    LiftedAlgebroid { algebroid, source: a.label().to_string() }
}

/// `d_T L` as a Lagrangian on the lifted algebroid.
pub fn lift_function(l: &Lagrangian, lifted: &LiftedAlgebroid) -> Result<Lagrangian> {
    let (n, k) = (l.n(), l.k());
    dim_check("lifted base dimension", 2 * n, lifted.algebroid.n())?;
    dim_check("lifted fiber rank", 2 * k, lifted.algebroid.k())?;
    let remap = move |p: usize| if p < n { p } else { 2 * n + (p - n) };
    let grad = l.gradient_exprs();
    let mut terms = Vec::new();
    for a in 0..n {
        terms.push(Expression::mul(&grad[a].remap(&remap), &Expression::var(n + a)));
    }
    for i in 0..k {
        terms.push(Expression::mul(&grad[n + i].remap(&remap), &Expression::var(2 * n + k + i)));
    }
    Lagrangian::new(&lifted.algebroid, Expression::sum(terms))
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckReport {
    /// Sup-norm of the lifted Euler-Lagrange residual along `δ_η γ`.
    pub el_lifted_residual: f64,
    /// Sup-norm of the Jacobi residual of `η` itself.
    pub jacobi_residual: f64,
    pub agreement: f64,
}

/// Evaluate the lifted Euler-Lagrange residual along the variation of a
/// Jacobi field, with second-order finite differences in time.
pub fn jacobi_lift_crosscheck(
    a: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    field: &JacobiField,
) -> Result<CrosscheckReport> {
    let lifted = lift_algebroid(a);
    let ll = lift_function(l, &lifted)?;
    let gen = GeneratorCurve::from_jacobi(field);
    let var = kappa_variation(a, host, &gen)?;
    let join = |p: &[DVector<f64>], q: &[DVector<f64>]| -> Vec<DVector<f64>> {
        p.iter().zip(q).map(|(u, v)| DVector::from_iterator(u.len() + v.len(), u.iter().chain(v.iter()).copied())).collect()
    };
    let xs = join(&var.x, &var.dx);
    let ys = join(&var.y, &var.dy);
    let xd = diff_o2(&xs, host.h);
    let yd = diff_o2(&ys, host.h);
    let xidd = diff_o2(&field.xidot, host.h);
    let mut lifted_sup = 0.0f64;
    let mut jac_sup = 0.0f64;
    for m in 0..host.len() {
        let (r1, r2) = el_residual(&lifted.algebroid, &ll, xs[m].as_slice(), ys[m].as_slice(), xd[m].as_slice(), yd[m].as_slice())?;
        lifted_sup = lifted_sup.max(r1.amax()).max(r2.amax());
        let (j1, j2) = jacobi_residual(
            a,
            l,
            &host.x[m],
            &host.y[m],
            &host.xdot[m],
            &host.ydot[m],
            &field.xi[m],
            &field.xidot[m],
            &xidd[m],
        )?;
        jac_sup = jac_sup.max(j1.amax()).max(j2.amax());
    }
    Ok(CrosscheckReport { el_lifted_residual: lifted_sup, jacobi_residual: jac_sup, agreement: (lifted_sup - jac_sup).abs() })
}
