//! Riemannian and Euler-Poincaré families.
//!
//! For a fiber metric `g` on an almost-Lie algebroid the metric torsion-free
//! connection is obtained from the Koszul formula on the frame,
//!
//! ```text
//! 2 g(∇_i e_j, e_l) = ρ_i g_jl + ρ_j g_il − ρ_l g_ij + c^m_ij g_ml − c^m_jl g_mi + c^m_li g_mj
//! ```
//!
//! with `g⁻¹` formed symbolically by cofactors, so that the curvature can be
//! differentiated exactly. On algebras over a point (`n = 0`) the
//! Euler-Lagrange and Jacobi equations reduce to their Euler-Poincaré forms,
//! which are provided as independent entry points.

use nalgebra::{DMatrix, DVector};

use crate::algebroid::SkewAlgebroid;
use crate::dynamics::{Lagrangian, Trajectory};
use crate::error::{dim_check, AmechError, Result};
use crate::expr::Expression;
use crate::jacobi::JacobiField;
use crate::numerics::diff_o2;

/// Symmetric fiber metric, row-major `k × k`.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub k: usize,
    pub g: Vec<Expression>,
}

impl MetricField {
    /// Uses the upper triangle of `g` and mirrors it.
    pub fn new(k: usize, g: Vec<Expression>) -> Result<Self> {
        dim_check("metric", k * k, g.len())?;
        let mut s = g.clone();
        for i in 0..k {
            for j in 0..i {
                s[i * k + j] = g[j * k + i].clone();
            }
        }
        Ok(MetricField { k, g: s })
    }

    pub fn identity(k: usize) -> Self {
        let g = (0..k * k).map(|p| if p / k == p % k { Expression::one() } else { Expression::zero() }).collect();
        MetricField { k, g }
    }

    pub fn diagonal(entries: Vec<Expression>) -> Self {
        let k = entries.len();
        let mut g = vec![Expression::zero(); k * k];
        for (i, e) in entries.into_iter().enumerate() {
            g[i * k + i] = e;
        }
        MetricField { k, g }
    }

    pub fn get(&self, i: usize, j: usize) -> &Expression {
        &self.g[i * self.k + j]
    }

    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.k;
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = self.get(i, j).eval(x)?;
            }
        }
        Ok(m)
    }
}

/// `Γ^m_{ij}` at `(m * k + i) * k + j`, with `∇_{e_i} e_j = Γ^m_{ij} e_m`.
#[derive(Clone, Debug)]
pub struct ConnectionCoeffs {
    pub k: usize,
    pub gamma: Vec<Expression>,
}

impl ConnectionCoeffs {
    pub fn get(&self, m: usize, i: usize, j: usize) -> &Expression {
        &self.gamma[(m * self.k + i) * self.k + j]
    }

    /// Evaluated coefficients, same layout.
    pub fn at(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gamma.iter().map(|e| e.eval(x)).collect::<std::result::Result<_, _>>()?)
    }
}

/// `R^m_{ijl}` at `((m * k + i) * k + j) * k + l`, with
/// `R(e_i, e_j) e_l = R^m_{ijl} e_m`.
#[derive(Clone, Debug)]
pub struct CurvatureTensor {
    pub k: usize,
    pub r: Vec<Expression>,
}

impl CurvatureTensor {
    pub fn at(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.r.iter().map(|e| e.eval(x)).collect::<std::result::Result<_, _>>()?)
    }
}

/// `ρ(e_i)` applied to a function of the base.
fn anchor_derivative(a: &SkewAlgebroid, i: usize, f: &Expression) -> Expression {
    Expression::sum((0..a.n()).map(|s| Expression::mul(a.rho_expr(s, i), &f.diff(s))))
}

fn determinant(m: &[Expression], k: usize, rows: &[usize], cols: &[usize]) -> Expression {
    if rows.len() == 1 {
        return m[rows[0] * k + cols[0]].clone();
    }
    let r = rows[0];
    let rest: Vec<usize> = rows[1..].to_vec();
    let mut terms = Vec::new();
    for (p, &c) in cols.iter().enumerate() {
        let e = &m[r * k + c];
        if e.is_zero() {
            continue;
        }
        let sub_cols: Vec<usize> = cols.iter().copied().filter(|&q| q != c).collect();
        let minor = determinant(m, k, &rest, &sub_cols);
        let t = Expression::mul(e, &minor);
        terms.push(if p % 2 == 0 { t } else { Expression::neg(&t) });
    }
    Expression::sum(terms)
}

/// Symbolic inverse by cofactors.
fn symbolic_inverse(m: &[Expression], k: usize) -> Vec<Expression> {
    let all: Vec<usize> = (0..k).collect();
    let det = determinant(m, k, &all, &all);
    let mut inv = vec![Expression::zero(); k * k];
    for i in 0..k {
        for j in 0..k {
            // inv[i][j] = cofactor(j, i) / det
            let cof = if k == 1 {
                Expression::one()
            } else {
                let rows: Vec<usize> = all.iter().copied().filter(|&r| r != j).collect();
                let cols: Vec<usize> = all.iter().copied().filter(|&c| c != i).collect();
                let minor = determinant(m, k, &rows, &cols);
                if (i + j) % 2 == 0 {
                    minor
                } else {
                    Expression::neg(&minor)
                }
            };
            inv[i * k + j] = Expression::div(&cof, &det);
        }
    }
    inv
}

/// Metric torsion-free connection of `g`. The algebroid must be almost-Lie
/// and `g` positive definite at every sample.
pub fn levi_civita(a: &SkewAlgebroid, g: &MetricField, samples: &[Vec<f64>]) -> Result<ConnectionCoeffs> {
    let k = a.k();
    dim_check("metric rank", k, g.k)?;
    for x in samples {
        if g.at(x)?.cholesky().is_none() {
            return Err(AmechError::NotPositiveDefinite { x: x.clone() });
        }
    }
    let al = a.check_almost_lie(samples, 1e-9)?;
    if !al.pass {
        return Err(AmechError::NotAlmostLie { residual: al.max_residual });
    }
    let gg = |i: usize, j: usize| g.get(i, j);
    let mut koszul = vec![Expression::zero(); k * k * k];
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let mut terms = vec![
                    anchor_derivative(a, i, gg(j, l)),
                    anchor_derivative(a, j, gg(i, l)),
                    Expression::neg(&anchor_derivative(a, l, gg(i, j))),
                ];
                for m in 0..k {
                    terms.push(Expression::mul(a.c_expr(m, i, j), gg(m, l)));
                    terms.push(Expression::neg(&Expression::mul(a.c_expr(m, j, l), gg(m, i))));
                    terms.push(Expression::mul(a.c_expr(m, l, i), gg(m, j)));
                }
                koszul[(i * k + j) * k + l] = Expression::sum(terms).scale(0.5);
            }
        }
    }
    let ginv = symbolic_inverse(&g.g, k);
    let mut gamma = vec![Expression::zero(); k * k * k];
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                gamma[(m * k + i) * k + j] =
                    Expression::sum((0..k).map(|l| Expression::mul(&ginv[m * k + l], &koszul[(i * k + j) * k + l])));
            }
        }
    }
    Ok(ConnectionCoeffs { k, gamma })
}

/// Sup over samples and frame triples of the torsion residual
/// `Γ^m_ij − Γ^m_ji − c^m_ij` and the metricity residual
/// `ρ_i g_jl − Γ^m_ij g_ml − Γ^m_il g_jm`.
pub fn connection_residuals(
    a: &SkewAlgebroid,
    g: &MetricField,
    gamma: &ConnectionCoeffs,
    samples: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let k = a.k();
    let mut tors = 0.0f64;
    let mut metr = 0.0f64;
    let dg: Vec<Expression> = (0..k)
        .flat_map(|i| (0..k * k).map(move |jl| (i, jl)))
        .map(|(i, jl)| anchor_derivative(a, i, &g.g[jl]))
        .collect();
    for x in samples {
        let gm = g.at(x)?;
        let gv = gamma.at(x)?;
        let c = a.c_at(x)?;
        let gam = |m: usize, i: usize, j: usize| gv[(m * k + i) * k + j];
        for i in 0..k {
            for j in 0..k {
                for m in 0..k {
                    tors = tors.max((gam(m, i, j) - gam(m, j, i) - c.get(m, i, j)).abs());
                }
                for l in 0..k {
                    let mut r = dg[i * k * k + j * k + l].eval(x)?;
                    for m in 0..k {
                        r -= gam(m, i, j) * gm[(m, l)] + gam(m, i, l) * gm[(j, m)];
                    }
                    metr = metr.max(r.abs());
                }
            }
        }
    }
    Ok((tors, metr))
}

pub fn curvature(a: &SkewAlgebroid, gamma: &ConnectionCoeffs) -> CurvatureTensor {
    let k = gamma.k;
    let gm = |m: usize, i: usize, j: usize| gamma.get(m, i, j);
    let mut r = vec![Expression::zero(); k * k * k * k];
    for p in 0..k {
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let mut terms = vec![
                        anchor_derivative(a, i, gm(p, j, l)),
                        Expression::neg(&anchor_derivative(a, j, gm(p, i, l))),
                    ];
                    for m in 0..k {
                        terms.push(Expression::mul(gm(m, j, l), gm(p, i, m)));
                        terms.push(Expression::neg(&Expression::mul(gm(m, i, l), gm(p, j, m))));
                        terms.push(Expression::neg(&Expression::mul(a.c_expr(m, i, j), gm(p, m, l))));
                    }
                    r[((p * k + i) * k + j) * k + l] = Expression::sum(terms);
                }
            }
        }
    }
    CurvatureTensor { k, r }
}

/// `Γ(u, v)^m = Γ^m_ij u^i v^j`.
fn gamma_apply(gv: &[f64], k: usize, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(k, |m, _| {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                s += gv[(m * k + i) * k + j] * u[i] * v[j];
            }
        }
        s
    })
}

/// `R(u, v) w`.
pub fn curvature_apply(rv: &[f64], k: usize, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(k, |m, _| {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    s += rv[((m * k + i) * k + j) * k + l] * u[i] * v[j] * w[l];
                }
            }
        }
        s
    })
}

/// Sup over the grid of `|ẏ + Γ(y, y)|`, with `ẏ` from second-order
/// differences.
pub fn geodesic_residual_nabla(gamma: &ConnectionCoeffs, host: &Trajectory) -> Result<f64> {
    let yd = diff_o2(&host.y, host.h);
    let mut sup = 0.0f64;
    for m in 0..host.len() {
        let gv = gamma.at(host.x[m].as_slice())?;
        let r = &yd[m] + gamma_apply(&gv, gamma.k, &host.y[m], &host.y[m]);
        sup = sup.max(r.amax());
    }
    Ok(sup)
}

/// Pointwise `∇_γ γ` for a state and its fiber derivative.
pub fn covariant_acceleration(gamma: &ConnectionCoeffs, x: &[f64], y: &DVector<f64>, ydot: &DVector<f64>) -> Result<DVector<f64>> {
    let gv = gamma.at(x)?;
    Ok(ydot + gamma_apply(&gv, gamma.k, y, y))
}

/// Sup over the grid of `|∇_γ∇_γ ξ + R(ξ, y) y|`, with the outer covariant
/// derivative from second-order differences.
pub fn jacobi_residual_nabla(
    gamma: &ConnectionCoeffs,
    r: &CurvatureTensor,
    host: &Trajectory,
    field: &JacobiField,
) -> Result<f64> {
    let k = gamma.k;
    let mut gvs = Vec::with_capacity(host.len());
    let mut u = Vec::with_capacity(host.len());
    for m in 0..host.len() {
        let gv = gamma.at(host.x[m].as_slice())?;
        u.push(&field.xidot[m] + gamma_apply(&gv, k, &host.y[m], &field.xi[m]));
        gvs.push(gv);
    }
    let ud = diff_o2(&u, host.h);
    let mut sup = 0.0f64;
    for m in 0..host.len() {
        let rv = r.at(host.x[m].as_slice())?;
        let res = &ud[m] + gamma_apply(&gvs[m], k, &host.y[m], &u[m]) + curvature_apply(&rv, k, &field.xi[m], &host.y[m], &host.y[m]);
        sup = sup.max(res.amax());
    }
    Ok(sup)
}

fn require_point_base(g: &SkewAlgebroid) -> Result<()> {
    if g.n() != 0 {
        return Err(AmechError::InvalidArgument(format!("expected an algebra over a point, base dimension is {}", g.n())));
    }
    Ok(())
}

/// `d/dt ∂L/∂y_j − c^k_{ij} ∂L/∂y^k y^i` on an algebra over a point.
pub fn euler_poincare_residual(g: &SkewAlgebroid, l: &Lagrangian, a: &DVector<f64>, adot: &DVector<f64>) -> Result<DVector<f64>> {
    require_point_base(g)?;
    let p = l.at(&[], a.as_slice())?;
    let c = g.c_at(&[])?;
    let k = g.k();
    let lhs = p.w() * adot;
    Ok(DVector::from_fn(k, |j, _| {
        let mut s = lhs[j];
        for i in 0..k {
            for kk in 0..k {
                s -= c.get(kk, i, j) * p.ly[kk] * a[i];
            }
        }
        s
    }))
}

/// Euler-Poincaré form of the Jacobi equation for `h` along `a`:
/// `d/dt(W J) − ⟨∂L/∂y, [J, ·]⟩ − ⟨W J, [a, ·]⟩` with `J = ḣ + [a, h]`.
pub fn jacobi_g_residual(
    g: &SkewAlgebroid,
    l: &Lagrangian,
    a: &DVector<f64>,
    adot: &DVector<f64>,
    h: &DVector<f64>,
    hdot: &DVector<f64>,
    hddot: &DVector<f64>,
) -> Result<DVector<f64>> {
    require_point_base(g)?;
    let k = g.k();
    let p = l.at(&[], a.as_slice())?;
    let c = g.c_at(&[])?;
    let w = p.w();
    let j = hdot + c.bracket(a, h);
    let jdot = hddot + c.bracket(adot, h) + c.bracket(a, hdot);
    let t = l.third_at(&[], a.as_slice())?;
    let wdot = DMatrix::from_fn(k, k, |r, s| (0..k).map(|q| t[(r * k + s) * k + q] * adot[q]).sum());
    let d_wj = wdot * &j + &w * jdot;
    let wj = &w * &j;
    Ok(DVector::from_fn(k, |jj, _| {
        let mut s = d_wj[jj];
        for kk in 0..k {
            for i in 0..k {
                s -= p.ly[kk] * c.get(kk, i, jj) * j[i];
                s -= wj[kk] * c.get(kk, i, jj) * a[i];
            }
        }
        s
    }))
}

/// Sup of [`jacobi_g_residual`] along an integrated field, with `ḧ` from
/// second-order differences of the field's `ḣ`.
pub fn jacobi_g_residual_along(g: &SkewAlgebroid, l: &Lagrangian, host: &Trajectory, field: &JacobiField) -> Result<f64> {
    let hdd = diff_o2(&field.xidot, host.h);
    let mut sup = 0.0f64;
    for m in 0..host.len() {
        let r = jacobi_g_residual(g, l, &host.y[m], &host.ydot[m], &field.xi[m], &field.xidot[m], &hdd[m])?;
        sup = sup.max(r.amax());
    }
    Ok(sup)
}

/// Maximum drift of `|∂L/∂y|²` along the trajectory.
pub fn momentum_norm_drift(l: &Lagrangian, host: &Trajectory) -> Result<f64> {
    let norms: Vec<f64> = host
        .x
        .iter()
        .zip(&host.y)
        .map(|(x, y)| Ok(l.gradient(x.as_slice(), y.as_slice())?.1.norm_squared()))
        .collect::<Result<_>>()?;
    let c0 = norms[0];
    Ok(norms.iter().map(|c| (c - c0).abs()).fold(0.0, f64::max))
}
