//! Skew-symmetric algebroids in a local frame.
//!
//! An algebroid is stored as its anchor matrix `ρ^a_i(x)` (`n × k`) and its
//! structure functions `c^i_{jl}(x)` with `[e_j, e_l] = c^i_{jl} e_i`. Only the
//! entries with `j < l` are taken from the caller; the rest are filled in by
//! antisymmetry. First partial derivatives of every datum are computed
//! symbolically once at construction.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{dim_check, AmechError, Result};
use crate::expr::Expression;

/// Structure constants evaluated at a point, `c^i_{jl}` at `(i * k + j) * k + l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Structure {
    pub k: usize,
    pub data: Vec<f64>,
}

impl Structure {
    pub fn zeros(k: usize) -> Self {
        Structure { k, data: vec![0.0; k * k * k] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[(i * self.k + j) * self.k + l]
    }

    /// Pointwise frame bracket `[a, b]^i = c^i_{jl} a^j b^l`.
    pub fn bracket(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let k = self.k;
        DVector::from_fn(k, |i, _| {
            let mut s = 0.0;
            for j in 0..k {
                if a[j] == 0.0 {
                    continue;
                }
                for l in 0..k {
                    s += self.get(i, j, l) * a[j] * b[l];
                }
            }
            s
        })
    }

    /// Matrix `C(y)` with `(C(y) ξ)^i = c^i_{jl} y^j ξ^l`.
    pub fn ad(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k;
        DMatrix::from_fn(k, k, |i, l| (0..k).map(|j| self.get(i, j, l) * y[j]).sum())
    }

    /// Dual action `w_j = c^i_{sj} y^s z_i`, the term appearing on the right of
    /// the Euler-Lagrange equations.
    pub fn coad(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let k = self.k;
        DVector::from_fn(k, |j, _| {
            let mut s = 0.0;
            for i in 0..k {
                for m in 0..k {
                    s += self.get(i, m, j) * y[m] * z[i];
                }
            }
            s
        })
    }
}

/// Algebroid data evaluated at a base point.
#[derive(Clone, Debug)]
pub struct FramePoint {
    /// `ρ^a_i` as an `n × k` matrix.
    pub rho: DMatrix<f64>,
    pub c: Structure,
    /// `∂_b ρ^a_i`, one `n × k` matrix per `b`.
    pub drho: Vec<DMatrix<f64>>,
    /// `∂_b c`, one structure tensor per `b`.
    pub dc: Vec<Structure>,
}

impl FramePoint {
    /// `Σ_b v^b ∂_b ρ`.
    pub fn drho_along(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rho.nrows(), self.rho.ncols());
        for (b, d) in self.drho.iter().enumerate() {
            if v[b] != 0.0 {
                out += d * v[b];
            }
        }
        out
    }

    /// `Σ_b v^b ∂_b c`.
    pub fn dc_along(&self, v: &DVector<f64>) -> Structure {
        let mut out = Structure::zeros(self.c.k);
        for (b, d) in self.dc.iter().enumerate() {
            if v[b] != 0.0 {
                for (o, x) in out.data.iter_mut().zip(&d.data) {
                    *o += v[b] * x;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SkewAlgebroid {
    label: String,
    n: usize,
    k: usize,
    base_names: Vec<String>,
    fiber_names: Vec<String>,
    rho: Vec<Expression>,
    c: Vec<Expression>,
    drho: Vec<Expression>,
    dc: Vec<Expression>,
}

/// Result of a sampled structure check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub max_residual: f64,
    pub pass: bool,
    pub worst_point: Vec<f64>,
}

/// Result of [`SkewAlgebroid::check_lie`].
#[derive(Clone, Debug, Serialize)]
pub struct LieReport {
    pub almost_lie: CheckReport,
    pub jacobi_residual: f64,
    pub pass: bool,
}

pub fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

impl SkewAlgebroid {
    /// Build from the anchor (`rho[a * k + i] = ρ^a_i`) and structure functions
    /// (`c[(i * k + j) * k + l] = c^i_{jl}`). Entries with `j >= l` are ignored.
    pub fn new(label: impl Into<String>, n: usize, k: usize, rho: Vec<Expression>, c: Vec<Expression>) -> Result<Self> {
        Self::with_names(label, default_names("x", n), default_names("y", k), rho, c)
    }

    pub fn with_names(
        label: impl Into<String>,
        base_names: Vec<String>,
        fiber_names: Vec<String>,
        rho: Vec<Expression>,
        c: Vec<Expression>,
    ) -> Result<Self> {
        let n = base_names.len();
        let k = fiber_names.len();
        if k == 0 {
            return Err(AmechError::InvalidArgument("fiber rank must be at least 1".into()));
        }
        dim_check("rho", n * k, rho.len())?;
        dim_check("c", k * k * k, c.len())?;
        for (idx, e) in rho.iter().chain(c.iter()).enumerate() {
            if let Some(v) = e.max_var() {
                if v >= n {
                    return Err(AmechError::InvalidArgument(format!(
                        "algebroid datum #{idx} references variable index {v} but the base has dimension {n}"
                    )));
                }
            }
        }
        let mut cs = vec![Expression::zero(); k * k * k];
        for i in 0..k {
            for j in 0..k {
                for l in (j + 1)..k {
                    let e = c[(i * k + j) * k + l].clone();
                    cs[(i * k + l) * k + j] = Expression::neg(&e);
                    cs[(i * k + j) * k + l] = e;
                }
            }
        }
        let drho = (0..n).flat_map(|b| rho.iter().map(move |e| e.diff(b))).collect();
        let dc = (0..n).flat_map(|b| cs.iter().map(move |e| e.diff(b))).collect();
        Ok(SkewAlgebroid { label: label.into(), n, k, base_names, fiber_names, rho, c: cs, drho, dc })
    }

    /// Tangent bundle of `ℝⁿ`: identity anchor and zero bracket.
    pub fn tangent(n: usize) -> Self {
        let rho = (0..n * n).map(|p| if p / n == p % n { Expression::one() } else { Expression::zero() }).collect();
        Self::new(format!("tangent({n})"), n, n, rho, vec![Expression::zero(); n * n * n])
            .expect("tangent algebroid is well formed")
    }

    /// Skew algebra over a point with constant structure constants.
    pub fn skew_algebra(label: impl Into<String>, k: usize, c: &[f64]) -> Result<Self> {
        dim_check("c", k * k * k, c.len())?;
        Self::new(label, 0, k, vec![], c.iter().map(|&v| Expression::num(v)).collect())
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn base_names(&self) -> &[String] {
        &self.base_names
    }
    pub fn fiber_names(&self) -> &[String] {
        &self.fiber_names
    }

    pub fn rho_expr(&self, a: usize, i: usize) -> &Expression {
        &self.rho[a * self.k + i]
    }

    pub fn c_expr(&self, i: usize, j: usize, l: usize) -> &Expression {
        &self.c[(i * self.k + j) * self.k + l]
    }

    pub fn drho_expr(&self, b: usize, a: usize, i: usize) -> &Expression {
        &self.drho[(b * self.n + a) * self.k + i]
    }

    pub fn dc_expr(&self, b: usize, i: usize, j: usize, l: usize) -> &Expression {
        &self.dc[b * self.k * self.k * self.k + (i * self.k + j) * self.k + l]
    }

    pub fn rho_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        dim_check("base point", self.n, x.len())?;
        let mut m = DMatrix::zeros(self.n, self.k);
        for a in 0..self.n {
            for i in 0..self.k {
                m[(a, i)] = self.rho[a * self.k + i].eval(x)?;
            }
        }
        Ok(m)
    }

    pub fn c_at(&self, x: &[f64]) -> Result<Structure> {
        dim_check("base point", self.n, x.len())?;
        eval_structure(self.k, &self.c, x)
    }

    /// Evaluate anchor, structure functions and their first derivatives.
    pub fn frame_at(&self, x: &[f64]) -> Result<FramePoint> {
        let rho = self.rho_at(x)?;
        let c = eval_structure(self.k, &self.c, x)?;
        let (n, k) = (self.n, self.k);
        let mut drho = Vec::with_capacity(n);
        let mut dc = Vec::with_capacity(n);
        for b in 0..n {
            let mut m = DMatrix::zeros(n, k);
            for a in 0..n {
                for i in 0..k {
                    m[(a, i)] = self.drho_expr(b, a, i).eval(x)?;
                }
            }
            drho.push(m);
            dc.push(eval_structure(k, &self.dc[b * k * k * k..(b + 1) * k * k * k], x)?);
        }
        Ok(FramePoint { rho, c, drho, dc })
    }

    /// `ρ(x) y`.
    pub fn anchor_apply(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        dim_check("fiber vector", self.k, y.len())?;
        Ok(self.rho_at(x)? * DVector::from_column_slice(y))
    }

    /// Bracket of two local sections given by their frame components.
    pub fn bracket(&self, xs: &[Expression], ys: &[Expression]) -> Result<Vec<Expression>> {
        dim_check("section X", self.k, xs.len())?;
        dim_check("section Y", self.k, ys.len())?;
        let k = self.k;
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let mut terms = Vec::new();
            for j in 0..k {
                for l in 0..k {
                    let c = self.c_expr(i, j, l);
                    if !c.is_zero() {
                        terms.push(Expression::mul(c, &Expression::mul(&xs[j], &ys[l])));
                    }
                }
            }
            for a in 0..self.n {
                let dy = ys[i].diff(a);
                let dx = xs[i].diff(a);
                for j in 0..k {
                    let r = self.rho_expr(a, j);
                    if r.is_zero() {
                        continue;
                    }
                    if !dy.is_zero() {
                        terms.push(Expression::mul(r, &Expression::mul(&xs[j], &dy)));
                    }
                    if !dx.is_zero() {
                        terms.push(Expression::neg(&Expression::mul(r, &Expression::mul(&ys[j], &dx))));
                    }
                }
            }
            out.push(Expression::sum(terms));
        }
        Ok(out)
    }

    /// Almost-Lie residual tensor at one point, indexed `[(a * k + i) * k + j]`.
    pub fn almost_lie_residual_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.frame_at(x)?;
        let (n, k) = (self.n, self.k);
        let mut out = vec![0.0; n * k * k];
        for a in 0..n {
            for i in 0..k {
                for j in 0..k {
                    let mut r = 0.0;
                    for m in 0..k {
                        r += f.rho[(a, m)] * f.c.get(m, i, j);
                    }
                    for b in 0..n {
                        r -= f.drho[b][(a, j)] * f.rho[(b, i)] - f.drho[b][(a, i)] * f.rho[(b, j)];
                    }
                    out[(a * k + i) * k + j] = r;
                }
            }
        }
        Ok(out)
    }

    /// Jacobi-identity residual tensor `Jac^s_{ijl}` at one point, indexed
    /// `[((s * k + i) * k + j) * k + l]`.
    pub fn jacobi_tensor_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.frame_at(x)?;
        Ok(jacobi_tensor(&f, self.n, self.k))
    }

    pub fn check_almost_lie(&self, samples: &[Vec<f64>], tol: f64) -> Result<CheckReport> {
        max_over(samples, tol, |x| self.almost_lie_residual_at(x))
    }

    pub fn check_lie(&self, samples: &[Vec<f64>], tol: f64) -> Result<LieReport> {
        let almost_lie = self.check_almost_lie(samples, tol)?;
        let jac = max_over(samples, tol, |x| self.jacobi_tensor_at(x))?;
        Ok(LieReport { pass: almost_lie.pass && jac.pass, jacobi_residual: jac.max_residual, almost_lie })
    }

    /// Jacobiator `J(a,h,f) = [[a,h],f] − [a,[h,f]] + [h,[a,f]]` of the fiber
    /// vectors `a, h, f` over `x`.
    pub fn jacobiator(&self, a: &[f64], h: &[f64], f: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        dim_check("a", self.k, a.len())?;
        dim_check("h", self.k, h.len())?;
        dim_check("f", self.k, f.len())?;
        let t = self.jacobi_tensor_at(x)?;
        Ok(contract_jacobi(&t, self.k, a, h, f))
    }
}

pub(crate) fn contract_jacobi(t: &[f64], k: usize, a: &[f64], h: &[f64], f: &[f64]) -> DVector<f64> {
    DVector::from_fn(k, |s, _| {
        let mut v = 0.0;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    v += t[((s * k + i) * k + j) * k + l] * a[i] * h[j] * f[l];
                }
            }
        }
        v
    })
}

pub(crate) fn jacobi_tensor(f: &FramePoint, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k * k * k];
    // term(i,j,l) = c^m_{ij} c^s_{ml} − ρ^a_l ∂_a c^s_{ij}, summed cyclically
    let term = |s: usize, i: usize, j: usize, l: usize| {
        let mut v = 0.0;
        for m in 0..k {
            v += f.c.get(m, i, j) * f.c.get(s, m, l);
        }
        for a in 0..n {
            v -= f.rho[(a, l)] * f.dc[a].get(s, i, j);
        }
        v
    };
    for s in 0..k {
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    out[((s * k + i) * k + j) * k + l] = term(s, i, j, l) + term(s, j, l, i) + term(s, l, i, j);
                }
            }
        }
    }
    out
}

fn eval_structure(k: usize, c: &[Expression], x: &[f64]) -> Result<Structure> {
    let mut s = Structure::zeros(k);
    for i in 0..k {
        for j in 0..k {
            for l in (j + 1)..k {
                let v = c[(i * k + j) * k + l].eval(x)?;
                s.data[(i * k + j) * k + l] = v;
                s.data[(i * k + l) * k + j] = -v;
            }
        }
    }
    Ok(s)
}

fn max_over(samples: &[Vec<f64>], tol: f64, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let mut at = samples.first().cloned().unwrap_or_default();
    for x in samples {
        let m = f(x)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m > worst {
            worst = m;
            at = x.clone();
        }
    }
    Ok(CheckReport { max_residual: worst, pass: worst <= tol, worst_point: at })
}

/// Regular lattice with `per_axis` points along each side of a box. A box of
/// dimension zero yields the single empty point.
pub fn lattice(bounds: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![]];
    for &(lo, hi) in bounds {
        let mut next = Vec::with_capacity(pts.len() * per_axis);
        for p in &pts {
            for s in 0..per_axis {
                let u = if per_axis == 1 { 0.5 } else { s as f64 / (per_axis - 1) as f64 };
                let mut q = p.clone();
                q.push(lo + u * (hi - lo));
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

/// Levi-Civita symbol on three indices.
pub fn levi_civita(i: usize, j: usize, l: usize) -> f64 {
    match (i, j, l) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}
