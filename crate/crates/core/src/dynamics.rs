//! Lagrangian systems on a skew algebroid.
//!
//! A [`Lagrangian`] is an expression in the variables `x1..xn, y1..yk` (base
//! first, fiber second) with its gradient and Hessian differentiated once and
//! cached. Third derivatives are built on first use.
//!
//! The Euler-Lagrange equations in a local frame read
//!
//! ```text
//! ẋ^a = ρ^a_i y^i
//! d/dt ∂L/∂y^i = ρ^a_i ∂L/∂x^a + c^k_{ji} y^j ∂L/∂y^k
//! ```
//!
//! and are integrated with fixed-step RK4 after solving for `ẏ` through the
//! fiber Hessian `W = ∂²L/∂y∂y`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebroid::SkewAlgebroid;
use crate::error::{dim_check, AmechError, Result};
use crate::expr::{parse, Expression};
use crate::numerics::{diff_o4, guarded_inverse, hermite, Inverse};

#[derive(Clone, Debug)]
pub struct Lagrangian {
    n: usize,
    k: usize,
    names: Vec<String>,
    expr: Expression,
    grad: Vec<Expression>,
    hess: Vec<Expression>,
    third: OnceLock<Vec<Expression>>,
}

/// Value, gradient and Hessian of `L` at a state.
#[derive(Clone, Debug)]
pub struct LagrangianPoint {
    pub value: f64,
    /// `∂L/∂x`.
    pub lx: DVector<f64>,
    /// `∂L/∂y`.
    pub ly: DVector<f64>,
    /// Full Hessian over `(x, y)`.
    pub hess: DMatrix<f64>,
    n: usize,
}

impl LagrangianPoint {
    /// Fiber Hessian `W`.
    pub fn w(&self) -> DMatrix<f64> {
        let k = self.ly.len();
        self.hess.view((self.n, self.n), (k, k)).into_owned()
    }

    /// `∂²L/∂y^i∂x^a` as a `k × n` matrix.
    pub fn yx(&self) -> DMatrix<f64> {
        let k = self.ly.len();
        self.hess.view((self.n, 0), (k, self.n)).into_owned()
    }

    /// `∂²L/∂x∂x`.
    pub fn xx(&self) -> DMatrix<f64> {
        self.hess.view((0, 0), (self.n, self.n)).into_owned()
    }
}

impl Lagrangian {
    /// Wrap an expression over the variables of `alg` (base, then fiber).
    pub fn new(alg: &SkewAlgebroid, expr: Expression) -> Result<Self> {
        let names: Vec<String> = alg.base_names().iter().chain(alg.fiber_names()).cloned().collect();
        Self::from_parts(alg.n(), alg.k(), names, expr)
    }

    pub fn from_parts(n: usize, k: usize, names: Vec<String>, expr: Expression) -> Result<Self> {
        dim_check("lagrangian variables", n + k, names.len())?;
        if let Some(v) = expr.max_var() {
            if v >= n + k {
                return Err(AmechError::InvalidArgument(format!(
                    "lagrangian references variable index {v} beyond the {} state variables",
                    n + k
                )));
            }
        }
        let d = n + k;
        let grad: Vec<Expression> = (0..d).map(|p| expr.diff(p)).collect();
        let mut hess = vec![Expression::zero(); d * d];
        for p in 0..d {
            for q in p..d {
                let e = grad[p].diff(q);
                hess[p * d + q] = e.clone();
                hess[q * d + p] = e;
            }
        }
        Ok(Lagrangian { n, k, names, expr, grad, hess, third: OnceLock::new() })
    }

    /// Parse `src` with the algebroid's variable names.
    pub fn parse(alg: &SkewAlgebroid, src: &str) -> Result<Self> {
        let names: Vec<String> = alg.base_names().iter().chain(alg.fiber_names()).cloned().collect();
        let e = parse(src, &names)?;
        Self::new(alg, e)
    }

    /// `L = ½ g_{ij}(x) y^i y^j − V(x)`; `metric` is row-major `k × k`
    /// over base variables.
    pub fn mechanical(alg: &SkewAlgebroid, metric: &[Expression], potential: &Expression) -> Result<Self> {
        let (n, k) = (alg.n(), alg.k());
        dim_check("metric", k * k, metric.len())?;
        let mut terms = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let g = &metric[i * k + j];
                if g.is_zero() {
                    continue;
                }
                let yy = Expression::mul(&Expression::var(n + i), &Expression::var(n + j));
                terms.push(Expression::mul(&g.scale(0.5), &yy));
            }
        }
        let kin = Expression::sum(terms);
        Self::new(alg, Expression::sub(&kin, potential))
    }

    pub fn kinetic(alg: &SkewAlgebroid, metric: &[Expression]) -> Result<Self> {
        Self::mechanical(alg, metric, &Expression::zero())
    }

    /// `½|y|²`.
    pub fn euclidean(alg: &SkewAlgebroid) -> Self {
        let k = alg.k();
        let g: Vec<Expression> =
            (0..k * k).map(|p| if p / k == p % k { Expression::one() } else { Expression::zero() }).collect();
        Self::kinetic(alg, &g).expect("identity metric has matching shape")
    }

    /// The zero Lagrangian.
    pub fn zero(alg: &SkewAlgebroid) -> Self {
        Self::new(alg, Expression::zero()).expect("zero has no variables")
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn expr(&self) -> &Expression {
        &self.expr
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn gradient_exprs(&self) -> &[Expression] {
        &self.grad
    }
    pub fn hessian_expr(&self, p: usize, q: usize) -> &Expression {
        &self.hess[p * (self.n + self.k) + q]
    }

    fn vals(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        dim_check("base point", self.n, x.len())?;
        dim_check("fiber vector", self.k, y.len())?;
        Ok(x.iter().chain(y).copied().collect())
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.expr.eval(&self.vals(x, y)?)?)
    }

    /// `(∂L/∂x, ∂L/∂y)`.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let v = self.vals(x, y)?;
        let lx = DVector::from_iterator(self.n, self.grad[..self.n].iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>()?);
        let ly = DVector::from_iterator(self.k, self.grad[self.n..].iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>()?);
        Ok((lx, ly))
    }

    pub fn at(&self, x: &[f64], y: &[f64]) -> Result<LagrangianPoint> {
        let v = self.vals(x, y)?;
        let d = self.n + self.k;
        let (lx, ly) = self.gradient(x, y)?;
        let mut hess = DMatrix::zeros(d, d);
        for p in 0..d {
            for q in p..d {
                let e = &self.hess[p * d + q];
                let val = if e.is_zero() { 0.0 } else { e.eval(&v)? };
                hess[(p, q)] = val;
                hess[(q, p)] = val;
            }
        }
        Ok(LagrangianPoint { value: self.expr.eval(&v)?, lx, ly, hess, n: self.n })
    }

    fn third_exprs(&self) -> &[Expression] {
        self.third.get_or_init(|| {
            let d = self.n + self.k;
            let mut t = vec![Expression::zero(); d * d * d];
            for p in 0..d {
                for q in p..d {
                    for r in q..d {
                        let e = self.hess[p * d + q].diff(r);
                        for (a, b, c) in [(p, q, r), (p, r, q), (q, p, r), (q, r, p), (r, p, q), (r, q, p)] {
                            t[(a * d + b) * d + c] = e.clone();
                        }
                    }
                }
            }
            t
        })
    }

    /// Third derivatives over `(x, y)`, indexed `[(p * d + q) * d + r]`.
    pub fn third_at(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let v = self.vals(x, y)?;
        self.third_exprs()
            .iter()
            .map(|e| if e.is_zero() { Ok(0.0) } else { Ok(e.eval(&v)?) })
            .collect()
    }
}

/// Legendre map `z_i = ∂L/∂y^i`.
pub fn legendre(l: &Lagrangian, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
    Ok(l.gradient(x, y)?.1)
}

/// Energy `⟨∂L/∂y, y⟩ − L`.
pub fn energy(l: &Lagrangian, x: &[f64], y: &[f64]) -> Result<f64> {
    let z = legendre(l, x, y)?;
    Ok(z.dot(&DVector::from_column_slice(y)) - l.value(x, y)?)
}

/// Tulczyjew differential in coordinates `(x, z, ẋ, ż)` of `T E*`.
#[derive(Clone, Debug)]
pub struct Tulczyjew {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub xdot: DVector<f64>,
    pub zdot: DVector<f64>,
}

/// Right-hand side `ρ^a_j ∂L/∂x^a + c^k_{ij} y^i ∂L/∂y^k` of the dynamical
/// Euler-Lagrange equation.
pub(crate) fn el_force(rho: &DMatrix<f64>, c: &crate::algebroid::Structure, y: &DVector<f64>, lx: &DVector<f64>, ly: &DVector<f64>) -> DVector<f64> {
    rho.tr_mul(lx) + c.coad(y, ly)
}

pub fn tulczyjew_differential(alg: &SkewAlgebroid, l: &Lagrangian, x: &[f64], y: &[f64]) -> Result<Tulczyjew> {
    let rho = alg.rho_at(x)?;
    let c = alg.c_at(x)?;
    let (lx, ly) = l.gradient(x, y)?;
    let yv = DVector::from_column_slice(y);
    Ok(Tulczyjew { x: DVector::from_column_slice(x), xdot: &rho * &yv, zdot: el_force(&rho, &c, &yv, &lx, &ly), z: ly })
}

/// Admissibility and dynamical residuals of the Euler-Lagrange equations at
/// a state with prescribed time derivatives.
pub fn el_residual(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    x: &[f64],
    y: &[f64],
    xdot: &[f64],
    ydot: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    dim_check("xdot", alg.n(), xdot.len())?;
    dim_check("ydot", alg.k(), ydot.len())?;
    let rho = alg.rho_at(x)?;
    let c = alg.c_at(x)?;
    let p = l.at(x, y)?;
    let yv = DVector::from_column_slice(y);
    let xd = DVector::from_column_slice(xdot);
    let yd = DVector::from_column_slice(ydot);
    let adm = &xd - &rho * &yv;
    let dz = p.yx() * &xd + p.w() * &yd;
    let dynamic = dz - el_force(&rho, &c, &yv, &p.lx, &p.ly);
    Ok((adm, dynamic))
}

/// Solve the Euler-Lagrange equations for `(ẋ, ẏ)`.
pub fn el_vector_field(alg: &SkewAlgebroid, l: &Lagrangian, t: f64, x: &[f64], y: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
    let rho = alg.rho_at(x)?;
    let c = alg.c_at(x)?;
    let p = l.at(x, y)?;
    let yv = DVector::from_column_slice(y);
    let xdot = &rho * &yv;
    let rhs = el_force(&rho, &c, &yv, &p.lx, &p.ly) - p.yx() * &xdot;
    let winv = invert_w(&p.w(), t, x, y)?;
    Ok((xdot, winv * rhs))
}

pub(crate) fn invert_w(w: &DMatrix<f64>, t: f64, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    match guarded_inverse(w) {
        Inverse::Ok(m) => Ok(m),
        Inverse::Singular { cond } => Err(AmechError::SingularHessian { t, x: x.to_vec(), y: y.to_vec(), cond }),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryMeta {
    pub method: String,
    pub step: f64,
    pub max_admissibility_residual: f64,
    pub max_el_residual: f64,
    pub energy_drift: f64,
}

/// Uniformly sampled admissible curve.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// Time derivatives at the nodes (vector field values for integrated
    /// curves, finite differences for sampled ones).
    pub xdot: Vec<DVector<f64>>,
    pub ydot: Vec<DVector<f64>>,
    pub energy: Vec<f64>,
    pub meta: TrajectoryMeta,
}

/// Number of cells and effective step for covering `[t0, t1]` with steps
/// close to `h`.
pub fn grid(t0: f64, t1: f64, h: f64) -> Result<(usize, f64)> {
    if !(h > 0.0) || !(t1 > t0) || !h.is_finite() || !t0.is_finite() || !t1.is_finite() {
        return Err(AmechError::InvalidArgument(format!("invalid time grid t0={t0}, t1={t1}, h={h}")));
    }
    let m = ((t1 - t0) / h).round().max(1.0) as usize;
    Ok((m, (t1 - t0) / m as f64))
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.x.len().saturating_sub(1)
    }

    pub fn t(&self, m: usize) -> f64 {
        self.t0 + m as f64 * self.h
    }

    pub fn t1(&self) -> f64 {
        self.t(self.cells())
    }

    /// Cubic Hermite state inside cell `m` at fraction `s`: `(x, y, ẋ, ẏ)`.
    pub fn state_at(&self, m: usize, s: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        if s == 0.0 {
            return (self.x[m].clone(), self.y[m].clone(), self.xdot[m].clone(), self.ydot[m].clone());
        }
        if s == 1.0 {
            let j = m + 1;
            return (self.x[j].clone(), self.y[j].clone(), self.xdot[j].clone(), self.ydot[j].clone());
        }
        let (x, xd, _) = hermite(&self.x[m], &self.xdot[m], &self.x[m + 1], &self.xdot[m + 1], self.h, s);
        let (y, yd, _) = hermite(&self.y[m], &self.ydot[m], &self.y[m + 1], &self.ydot[m + 1], self.h, s);
        (x, y, xd, yd)
    }

    /// Build a trajectory from sampled states; derivatives by fourth-order
    /// finite differences.
    pub fn from_samples(
        alg: &SkewAlgebroid,
        l: &Lagrangian,
        t0: f64,
        h: f64,
        x: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
    ) -> Result<Self> {
        dim_check("sample count", x.len(), y.len())?;
        let xdot = diff_o4(&x, h);
        let ydot = diff_o4(&y, h);
        let mut tr = Trajectory {
            t0,
            h,
            x,
            y,
            xdot,
            ydot,
            energy: vec![],
            meta: TrajectoryMeta {
                method: "samples".into(),
                step: h,
                max_admissibility_residual: 0.0,
                max_el_residual: 0.0,
                energy_drift: 0.0,
            },
        };
        tr.finish(alg, l)?;
        Ok(tr)
    }

    fn finish(&mut self, alg: &SkewAlgebroid, l: &Lagrangian) -> Result<()> {
        self.energy = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| energy(l, x.as_slice(), y.as_slice()))
            .collect::<Result<_>>()?;
        let xd = diff_o4(&self.x, self.h);
        let yd = diff_o4(&self.y, self.h);
        let mut adm = 0.0f64;
        let mut dynamic = 0.0f64;
        for m in 0..self.len() {
            let (a, d) = el_residual(alg, l, self.x[m].as_slice(), self.y[m].as_slice(), xd[m].as_slice(), yd[m].as_slice())?;
            adm = adm.max(a.amax());
            dynamic = dynamic.max(d.amax());
        }
        self.meta.max_admissibility_residual = adm;
        self.meta.max_el_residual = dynamic;
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.meta.energy_drift = self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        Ok(())
    }

    /// CSV with header `t,x1..xn,y1..yk,energy` and 17 significant digits.
    pub fn to_csv(&self, base_names: &[String], fiber_names: &[String]) -> String {
        let mut out = String::from("t");
        for name in base_names.iter().chain(fiber_names) {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",energy\n");
        for m in 0..self.len() {
            let _ = write!(out, "{:.16e}", self.t(m));
            for v in self.x[m].iter().chain(self.y[m].iter()) {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = writeln!(out, ",{:.16e}", self.energy[m]);
        }
        out
    }
}

/// Integrate the Euler-Lagrange equations with classical RK4 on a uniform
/// grid.
pub fn integrate_el(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    x0: &[f64],
    y0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory> {
    dim_check("x0", alg.n(), x0.len())?;
    dim_check("y0", alg.k(), y0.len())?;
    dim_check("lagrangian base dimension", alg.n(), l.n())?;
    dim_check("lagrangian fiber rank", alg.k(), l.k())?;
    let (m, h) = grid(t0, t1, h)?;
    let n = alg.n();
    let f = |t: f64, s: &DVector<f64>| -> Result<DVector<f64>> {
        let (xd, yd) = el_vector_field(alg, l, t, &s.as_slice()[..n], &s.as_slice()[n..])?;
        Ok(DVector::from_iterator(s.len(), xd.iter().chain(yd.iter()).copied()))
    };
    let mut s = DVector::from_iterator(n + alg.k(), x0.iter().chain(y0).copied());
    let mut xs = Vec::with_capacity(m + 1);
    let mut ys = Vec::with_capacity(m + 1);
    let mut xds = Vec::with_capacity(m + 1);
    let mut yds = Vec::with_capacity(m + 1);
    let mut k1 = f(t0, &s)?;
    for step in 0..=m {
        let t = t0 + step as f64 * h;
        xs.push(s.rows(0, n).into_owned());
        ys.push(s.rows(n, alg.k()).into_owned());
        xds.push(k1.rows(0, n).into_owned());
        yds.push(k1.rows(n, alg.k()).into_owned());
        if step == m {
            break;
        }
        let k2 = f(t + 0.5 * h, &(&s + &k1 * (0.5 * h)))?;
        let k3 = f(t + 0.5 * h, &(&s + &k2 * (0.5 * h)))?;
        let k4 = f(t + h, &(&s + &k3 * h))?;
        s += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(AmechError::InvalidArgument(format!("state became non-finite at t = {}", t + h)));
        }
        k1 = f(t + h, &s)?;
    }
    let mut tr = Trajectory {
        t0,
        h,
        x: xs,
        y: ys,
        xdot: xds,
        ydot: yds,
        energy: vec![],
        meta: TrajectoryMeta {
            method: "rk4".into(),
            step: h,
            max_admissibility_residual: 0.0,
            max_el_residual: 0.0,
            energy_drift: 0.0,
        },
    };
    tr.finish(alg, l)?;
    Ok(tr)
}
