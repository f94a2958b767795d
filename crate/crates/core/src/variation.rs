//! Admissible variations, first and second variations of the action.
//!
//! A generator `f(t)` (a curve of fiber coefficients over the host base
//! curve) produces the admissible variation
//! `δ_f γ = (x, y, ρ f, ḟ + c(y, f))`. A pair of generators `f` (the `ξ`
//! slot), `h` (the `η` slot) and a correction field `Δf` produce a second
//! order vector whose last two slots are
//!
//! ```text
//! Δx = ∂_aρ(ρh)^a f + ρ Δf
//! Δy = Δḟ + c(y, Δf) + c(ḣ + c(y, h), f) + ∂_a c (ρh)^a (y, f)
//! ```
//!
//! The second variation is the integral of the second tangent lift of `L`
//! on that vector. All integrals use Simpson's rule on each grid cell with
//! the host interpolated by cubic Hermite polynomials at cell midpoints.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::{contract_jacobi, jacobi_tensor, FramePoint, SkewAlgebroid};
use crate::dynamics::{el_residual, Lagrangian, LagrangianPoint, Trajectory};
use crate::error::{dim_check, AmechError, Result};
use crate::jacobi::{jacobi_residual, HOST_RESIDUAL_LIMIT};
use crate::numerics::{diff_o2, hermite, SIMPSON};

/// Value and first two time derivatives of a generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub f: DVector<f64>,
    pub fd: DVector<f64>,
    pub fdd: DVector<f64>,
}

impl Jet {
    pub fn zero(k: usize) -> Self {
        Jet { f: DVector::zeros(k), fd: DVector::zeros(k), fdd: DVector::zeros(k) }
    }
}

pub type JetFn = Arc<dyn Fn(f64) -> Jet + Send + Sync>;

/// A curve of fiber coefficients along the host.
#[derive(Clone)]
pub enum GeneratorCurve {
    Zero { k: usize },
    /// Node values joined linearly on each cell.
    PiecewiseLinear { t0: f64, h: f64, values: Vec<DVector<f64>> },
    /// Node values and derivatives joined by cubic Hermite polynomials.
    Hermite { t0: f64, h: f64, values: Vec<DVector<f64>>, derivs: Vec<DVector<f64>> },
    /// Closed-form curve with exact derivatives.
    Analytic { k: usize, jet: JetFn },
}

impl std::fmt::Debug for GeneratorCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeneratorCurve::Zero { k } => write!(f, "Zero({k})"),
            GeneratorCurve::PiecewiseLinear { values, .. } => write!(f, "PiecewiseLinear({} nodes)", values.len()),
            GeneratorCurve::Hermite { values, .. } => write!(f, "Hermite({} nodes)", values.len()),
            GeneratorCurve::Analytic { k, .. } => write!(f, "Analytic({k})"),
        }
    }
}

impl GeneratorCurve {
    pub fn zero(k: usize) -> Self {
        GeneratorCurve::Zero { k }
    }

    pub fn analytic(k: usize, jet: impl Fn(f64) -> Jet + Send + Sync + 'static) -> Self {
        GeneratorCurve::Analytic { k, jet: Arc::new(jet) }
    }

    /// Hat function at interior node `node` in fiber direction `i`.
    pub fn hat(host: &Trajectory, k: usize, node: usize, i: usize) -> Self {
        let mut values = vec![DVector::zeros(k); host.len()];
        values[node][i] = 1.0;
        GeneratorCurve::PiecewiseLinear { t0: host.t0, h: host.h, values }
    }

    pub fn from_node_values(host: &Trajectory, values: Vec<DVector<f64>>) -> Self {
        GeneratorCurve::PiecewiseLinear { t0: host.t0, h: host.h, values }
    }

    /// Cubic Hermite generator through a Jacobi field's `(ξ, ξ̇)`.
    pub fn from_jacobi(field: &crate::jacobi::JacobiField) -> Self {
        GeneratorCurve::Hermite { t0: field.t0, h: field.h, values: field.xi.clone(), derivs: field.xidot.clone() }
    }

    pub fn k(&self) -> usize {
        match self {
            GeneratorCurve::Zero { k } | GeneratorCurve::Analytic { k, .. } => *k,
            GeneratorCurve::PiecewiseLinear { values, .. } | GeneratorCurve::Hermite { values, .. } => {
                values.first().map_or(0, |v| v.len())
            }
        }
    }

    /// Whether second derivatives are meaningful inside cells.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, GeneratorCurve::PiecewiseLinear { .. })
    }

    fn check_grid(&self, host: &Trajectory) -> Result<()> {
        match self {
            GeneratorCurve::PiecewiseLinear { t0, h, values } | GeneratorCurve::Hermite { t0, h, values, .. } => {
                dim_check("generator nodes", host.len(), values.len())?;
                let tol = 1e-12 * (1.0 + host.t0.abs() + host.h);
                if (t0 - host.t0).abs() > tol || (h - host.h).abs() > tol {
                    return Err(AmechError::InvalidArgument("generator grid differs from the host grid".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Jet at fraction `s` of cell `m` of the host grid.
    pub fn jet(&self, host: &Trajectory, m: usize, s: f64) -> Jet {
        match self {
            GeneratorCurve::Zero { k } => Jet::zero(*k),
            GeneratorCurve::PiecewiseLinear { h, values, .. } => {
                let (a, b) = (&values[m], &values[m + 1]);
                Jet { f: a * (1.0 - s) + b * s, fd: (b - a) / *h, fdd: DVector::zeros(a.len()) }
            }
            GeneratorCurve::Hermite { h, values, derivs, .. } => {
                let (f, fd, fdd) = hermite(&values[m], &derivs[m], &values[m + 1], &derivs[m + 1], *h, s);
                Jet { f, fd, fdd }
            }
            GeneratorCurve::Analytic { jet, .. } => jet(host.t(m) + s * host.h),
        }
    }

    /// Node values and derivatives; piecewise-linear curves use centered
    /// differences, one-sided at the ends.
    pub fn node_jets(&self, host: &Trajectory) -> Vec<Jet> {
        match self {
            GeneratorCurve::Zero { k } => vec![Jet::zero(*k); host.len()],
            GeneratorCurve::PiecewiseLinear { h, values, .. } => {
                let d = diff_o2(values, *h);
                let dd = diff_o2(&d, *h);
                values.iter().zip(d).zip(dd).map(|((f, fd), fdd)| Jet { f: f.clone(), fd, fdd }).collect()
            }
            GeneratorCurve::Hermite { h, values, derivs, .. } => {
                let dd = diff_o2(derivs, *h);
                values.iter().zip(derivs).zip(dd).map(|((f, fd), fdd)| Jet { f: f.clone(), fd: fd.clone(), fdd }).collect()
            }
            GeneratorCurve::Analytic { jet, .. } => (0..host.len()).map(|m| jet(host.t(m))).collect(),
        }
    }

    fn end_values(&self, host: &Trajectory) -> (DVector<f64>, DVector<f64>) {
        let m = host.cells();
        (self.jet(host, 0, 0.0).f, self.jet(host, m - 1, 1.0).f)
    }

    /// Whether `f(t0) = f(t1) = 0` to within `tol`.
    pub fn vanishes_at_ends(&self, host: &Trajectory, tol: f64) -> bool {
        let (a, b) = self.end_values(host);
        a.amax() <= tol && b.amax() <= tol
    }
}

/// Correction field entering the last slot of the second order vector.
#[derive(Clone, Debug)]
pub enum DeltaField {
    Zero,
    Curve(GeneratorCurve),
    /// `Δf + c(x)(h, f)`, the field paired with `Δf` when the roles of the
    /// two generators are exchanged.
    KappaRelated { delta: GeneratorCurve, h: GeneratorCurve, f: GeneratorCurve },
}

/// Host data at one quadrature point.
#[derive(Clone, Debug)]
pub(crate) struct QPoint {
    pub weight: f64,
    pub cell: usize,
    pub s: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub xdot: DVector<f64>,
    pub ydot: DVector<f64>,
    pub frame: FramePoint,
    pub lp: LagrangianPoint,
}

pub(crate) fn quadrature(alg: &SkewAlgebroid, l: &Lagrangian, host: &Trajectory) -> Result<Vec<QPoint>> {
    let per_cell: Vec<Vec<QPoint>> = (0..host.cells())
        .into_par_iter()
        .map(|m| {
            SIMPSON
                .iter()
                .map(|&(s, w)| {
                    let (x, y, xdot, ydot) = host.state_at(m, s);
                    let frame = alg.frame_at(x.as_slice())?;
                    let lp = l.at(x.as_slice(), y.as_slice())?;
                    Ok(QPoint { weight: w * host.h, cell: m, s, x, y, xdot, ydot, frame, lp })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

impl DeltaField {
    fn value(&self, host: &Trajectory, q: &QPoint, k: usize) -> (DVector<f64>, DVector<f64>) {
        match self {
            DeltaField::Zero => (DVector::zeros(k), DVector::zeros(k)),
            DeltaField::Curve(g) => {
                let j = g.jet(host, q.cell, q.s);
                (j.f, j.fd)
            }
            DeltaField::KappaRelated { delta, h, f } => {
                let d = delta.jet(host, q.cell, q.s);
                let hj = h.jet(host, q.cell, q.s);
                let fj = f.jet(host, q.cell, q.s);
                let c = &q.frame.c;
                let v = d.f + c.bracket(&hj.f, &fj.f);
                let vd = d.fd
                    + q.frame.dc_along(&q.xdot).bracket(&hj.f, &fj.f)
                    + c.bracket(&hj.fd, &fj.f)
                    + c.bracket(&hj.f, &fj.fd);
                (v, vd)
            }
        }
    }

    fn check(&self, host: &Trajectory) -> Result<()> {
        let g = match self {
            DeltaField::Zero => return Ok(()),
            DeltaField::Curve(g) => g,
            DeltaField::KappaRelated { delta, h, f } => {
                h.check_grid(host)?;
                f.check_grid(host)?;
                delta
            }
        };
        g.check_grid(host)?;
        if !g.vanishes_at_ends(host, 1e-12) {
            return Err(AmechError::InvalidArgument("Δf must vanish at both endpoints".into()));
        }
        Ok(())
    }
}

/// Infinitesimal variation in `T E` along the host, sampled at nodes.
#[derive(Clone, Debug)]
pub struct VariationTE {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub dx: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
}

/// `δ_f γ = (x, y, ρ f, ḟ + c(y, f))` at the host nodes.
pub fn kappa_variation(alg: &SkewAlgebroid, host: &Trajectory, g: &GeneratorCurve) -> Result<VariationTE> {
    dim_check("generator rank", alg.k(), g.k())?;
    g.check_grid(host)?;
    let jets = g.node_jets(host);
    let mut v = VariationTE { x: vec![], y: vec![], dx: vec![], dy: vec![] };
    for (m, j) in jets.iter().enumerate() {
        let rho = alg.rho_at(host.x[m].as_slice())?;
        let c = alg.c_at(host.x[m].as_slice())?;
        v.dx.push(&rho * &j.f);
        v.dy.push(&j.fd + c.bracket(&host.y[m], &j.f));
        v.x.push(host.x[m].clone());
        v.y.push(host.y[m].clone());
    }
    Ok(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstVariation {
    /// `∫ ⟨f, F − d/dt ∂L/∂y⟩ dt`, with `F` the Euler-Lagrange force.
    pub integral_term: f64,
    /// `⟨f, ∂L/∂y⟩` at `t1` minus at `t0`.
    pub boundary_term: f64,
    pub total: f64,
    /// `∫ d_T L(δ_f γ) dt`.
    pub direct: f64,
    pub discrepancy: f64,
    /// Sum of absolute integrands and boundary contributions.
    pub scale: f64,
}

pub fn first_variation(alg: &SkewAlgebroid, l: &Lagrangian, host: &Trajectory, g: &GeneratorCurve) -> Result<FirstVariation> {
    dim_check("generator rank", alg.k(), g.k())?;
    g.check_grid(host)?;
    let qs = quadrature(alg, l, host)?;
    let mut integral = 0.0;
    let mut direct = 0.0;
    let mut scale = 0.0;
    for q in &qs {
        let j = g.jet(host, q.cell, q.s);
        let (_, el) = el_residual(alg, l, q.x.as_slice(), q.y.as_slice(), q.xdot.as_slice(), q.ydot.as_slice())?;
        integral -= q.weight * j.f.dot(&el);
        let a = q.lp.lx.dot(&(&q.frame.rho * &j.f));
        let b = q.lp.ly.dot(&(&j.fd + q.frame.c.bracket(&q.y, &j.f)));
        direct += q.weight * (a + b);
        scale += q.weight * (a.abs() + b.abs());
    }
    let last = host.cells();
    let (f0, f1) = g.end_values(host);
    let z0 = l.gradient(host.x[0].as_slice(), host.y[0].as_slice())?.1;
    let z1 = l.gradient(host.x[last].as_slice(), host.y[last].as_slice())?.1;
    let boundary = f1.dot(&z1) - f0.dot(&z0);
    scale += f1.dot(&z1).abs() + f0.dot(&z0).abs();
    let total = integral + boundary;
    Ok(FirstVariation { integral_term: integral, boundary_term: boundary, total, direct, discrepancy: (total - direct).abs(), scale })
}

/// Point of `T T E` in coordinates: base state, the two first order
/// variations and the second order part.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderVector {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub dx_xi: DVector<f64>,
    pub dy_xi: DVector<f64>,
    pub dx_eta: DVector<f64>,
    pub dy_eta: DVector<f64>,
    pub ddx: DVector<f64>,
    pub ddy: DVector<f64>,
}

fn second_order(
    fr: &FramePoint,
    x: &DVector<f64>,
    y: &DVector<f64>,
    f: &Jet,
    h: &Jet,
    delta: (DVector<f64>, DVector<f64>),
) -> SecondOrderVector {
    let c = &fr.c;
    let rho_h = &fr.rho * &h.f;
    let dy_eta = &h.fd + c.bracket(y, &h.f);
    let ddx = fr.drho_along(&rho_h) * &f.f + &fr.rho * &delta.0;
    let ddy = &delta.1 + c.bracket(y, &delta.0) + c.bracket(&dy_eta, &f.f) + fr.dc_along(&rho_h).bracket(y, &f.f);
    SecondOrderVector {
        x: x.clone(),
        y: y.clone(),
        dx_xi: &fr.rho * &f.f,
        dy_xi: &f.fd + c.bracket(y, &f.f),
        dx_eta: rho_h,
        dy_eta,
        ddx,
        ddy,
    }
}

/// Second order vectors at the host nodes for generators `g_xi` (`f`),
/// `g_eta` (`h`) and correction `delta`.
pub fn second_variation_vector(
    alg: &SkewAlgebroid,
    host: &Trajectory,
    g_xi: &GeneratorCurve,
    g_eta: &GeneratorCurve,
    delta: &GeneratorCurve,
) -> Result<Vec<SecondOrderVector>> {
    for (name, g) in [("xi", g_xi), ("eta", g_eta), ("delta", delta)] {
        dim_check(name, alg.k(), g.k())?;
        g.check_grid(host)?;
    }
    let (fj, hj, dj) = (g_xi.node_jets(host), g_eta.node_jets(host), delta.node_jets(host));
    (0..host.len())
        .map(|m| {
            let fr = alg.frame_at(host.x[m].as_slice())?;
            Ok(second_order(&fr, &host.x[m], &host.y[m], &fj[m], &hj[m], (dj[m].f.clone(), dj[m].fd.clone())))
        })
        .collect()
}

fn d2_integrand(lp: &LagrangianPoint, v: &SecondOrderVector) -> f64 {
    let first = lp.lx.dot(&v.ddx) + lp.ly.dot(&v.ddy);
    let qe = DVector::from_iterator(v.dx_eta.len() + v.dy_eta.len(), v.dx_eta.iter().chain(v.dy_eta.iter()).copied());
    let qx = DVector::from_iterator(v.dx_xi.len() + v.dy_xi.len(), v.dx_xi.iter().chain(v.dy_xi.iter()).copied());
    first + qe.dot(&(&lp.hess * qx))
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondVariationValue {
    pub value: f64,
    /// Pairing of the Jacobi operator of `η` with `ξ` (plus the `Δf` term);
    /// present only when `η` has second derivatives.
    pub alternative: Option<f64>,
    pub discrepancy: Option<f64>,
}

fn check_host(host: &Trajectory) -> Result<()> {
    let r = host.meta.max_el_residual;
    if !(r <= HOST_RESIDUAL_LIMIT) {
        return Err(AmechError::HostResidual { residual: r, limit: HOST_RESIDUAL_LIMIT });
    }
    Ok(())
}

/// `δ²S(η, ξ)` with correction field `delta`.
pub fn second_variation_value(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    g_eta: &GeneratorCurve,
    g_xi: &GeneratorCurve,
    delta: &DeltaField,
) -> Result<SecondVariationValue> {
    check_host(host)?;
    dim_check("eta", alg.k(), g_eta.k())?;
    dim_check("xi", alg.k(), g_xi.k())?;
    g_eta.check_grid(host)?;
    g_xi.check_grid(host)?;
    delta.check(host)?;
    if !g_xi.vanishes_at_ends(host, 1e-12) {
        return Err(AmechError::InvalidArgument("ξ must vanish at both endpoints".into()));
    }
    let qs = quadrature(alg, l, host)?;
    second_variation_on(alg, l, host, &qs, g_eta, g_xi, delta)
}

fn second_variation_on(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    qs: &[QPoint],
    g_eta: &GeneratorCurve,
    g_xi: &GeneratorCurve,
    delta: &DeltaField,
) -> Result<SecondVariationValue> {
    let k = alg.k();
    let mut value = 0.0;
    let mut alt = 0.0;
    let smooth = g_eta.is_smooth();
    for q in qs {
        let f = g_xi.jet(host, q.cell, q.s);
        let h = g_eta.jet(host, q.cell, q.s);
        let d = delta.value(host, q, k);
        let v = second_order(&q.frame, &q.x, &q.y, &f, &h, d.clone());
        value += q.weight * d2_integrand(&q.lp, &v);
        if smooth {
            let (_, jac) = jacobi_residual(alg, l, &q.x, &q.y, &q.xdot, &q.ydot, &h.f, &h.fd, &h.fdd)?;
            let (_, el) = el_residual(alg, l, q.x.as_slice(), q.y.as_slice(), q.xdot.as_slice(), q.ydot.as_slice())?;
            alt -= q.weight * (f.f.dot(&jac) + d.0.dot(&el));
        }
    }
    let alternative = smooth.then_some(alt);
    Ok(SecondVariationValue { value, alternative, discrepancy: alternative.map(|a| (a - value).abs()) })
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryDefect {
    /// `δ²S(η, ξ; Δf) − δ²S(ξ, η; Δf + c(h, f))`.
    pub defect: f64,
    /// `∫ ⟨∂L/∂y, J(y, h, f)⟩ dt`.
    pub jacobiator_integral: f64,
}

pub fn symmetry_defect(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    g_eta: &GeneratorCurve,
    g_xi: &GeneratorCurve,
    delta: &GeneratorCurve,
) -> Result<SymmetryDefect> {
    check_host(host)?;
    for g in [g_eta, g_xi, delta] {
        dim_check("generator rank", alg.k(), g.k())?;
        g.check_grid(host)?;
        if !g.vanishes_at_ends(host, 1e-12) {
            return Err(AmechError::InvalidArgument("generators and Δf must vanish at both endpoints".into()));
        }
    }
    let qs = quadrature(alg, l, host)?;
    let a = second_variation_on(alg, l, host, &qs, g_eta, g_xi, &DeltaField::Curve(delta.clone()))?;
    let swapped = DeltaField::KappaRelated { delta: delta.clone(), h: g_eta.clone(), f: g_xi.clone() };
    let b = second_variation_on(alg, l, host, &qs, g_xi, g_eta, &swapped)?;
    let (n, k) = (alg.n(), alg.k());
    let mut jint = 0.0;
    for q in &qs {
        let h = g_eta.jet(host, q.cell, q.s).f;
        let f = g_xi.jet(host, q.cell, q.s).f;
        let t = jacobi_tensor(&q.frame, n, k);
        let j = contract_jacobi(&t, k, q.y.as_slice(), h.as_slice(), f.as_slice());
        jint += q.weight * q.lp.ly.dot(&j);
    }
    Ok(SymmetryDefect { defect: a.value - b.value, jacobiator_integral: jint })
}

/// Discretized second variation over hat generators.
///
/// Entry `(p, q)` is `δ²S(φ_p, φ_q)` with `φ_p` in the first (`η`) slot; the
/// basis index is `p = (node − 1) k + i` over interior nodes.
#[derive(Clone, Debug)]
pub struct SecondVariationMatrix {
    pub b: DMatrix<f64>,
    pub cells: usize,
    pub k: usize,
    pub t0: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondVariationMeta {
    pub basis: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    pub quadrature: String,
    pub delta_convention: String,
    pub symmetry_defect_norm: f64,
    pub null_dimension: usize,
    pub index: usize,
}

pub fn second_variation_matrix(alg: &SkewAlgebroid, l: &Lagrangian, host: &Trajectory) -> Result<SecondVariationMatrix> {
    check_host(host)?;
    let k = alg.k();
    let cells = host.cells();
    if cells < 2 {
        return Err(AmechError::InvalidArgument("second variation needs at least two cells".into()));
    }
    let p_dim = k * (cells - 1);
    let qs = quadrature(alg, l, host)?;
    let h = host.h;
    // local blocks: rows/cols ordered (left node comps, right node comps)
    let locals: Vec<DMatrix<f64>> = qs
        .par_chunks(SIMPSON.len())
        .map(|chunk| {
            let mut loc = DMatrix::zeros(2 * k, 2 * k);
            for q in chunk {
                let basis: Vec<Jet> = (0..2 * k)
                    .map(|b| {
                        let (side, i) = (b / k, b % k);
                        let (val, der) = if side == 0 { (1.0 - q.s, -1.0 / h) } else { (q.s, 1.0 / h) };
                        let mut f = DVector::zeros(k);
                        let mut fd = DVector::zeros(k);
                        f[i] = val;
                        fd[i] = der;
                        Jet { f, fd, fdd: DVector::zeros(k) }
                    })
                    .collect();
                let zero = (DVector::zeros(k), DVector::zeros(k));
                for (pe, he) in basis.iter().enumerate() {
                    for (px, fx) in basis.iter().enumerate() {
                        let v = second_order(&q.frame, &q.x, &q.y, fx, he, zero.clone());
                        loc[(pe, px)] += q.weight * d2_integrand(&q.lp, &v);
                    }
                }
            }
            loc
        })
        .collect();
    let mut b = DMatrix::zeros(p_dim, p_dim);
    for (m, loc) in locals.iter().enumerate() {
        let index = |b: usize| -> Option<usize> {
            let node = m + b / k;
            (node >= 1 && node < cells).then(|| (node - 1) * k + b % k)
        };
        for r in 0..2 * k {
            let Some(gr) = index(r) else { continue };
            for c in 0..2 * k {
                let Some(gc) = index(c) else { continue };
                b[(gr, gc)] += loc[(r, c)];
            }
        }
    }
    Ok(SecondVariationMatrix { b, cells, k, t0: host.t0, h })
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

impl SecondVariationMatrix {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `‖B − Bᵀ‖∞ / ‖B‖∞`.
    pub fn symmetry_defect_norm(&self) -> f64 {
        let d = inf_norm(&(&self.b - self.b.transpose()));
        let s = inf_norm(&self.b);
        if s == 0.0 {
            0.0
        } else {
            d / s
        }
    }

    /// Number of negative eigenvalues of the symmetric part.
    pub fn index(&self) -> usize {
        let sym = (&self.b + self.b.transpose()) * 0.5;
        let scale = inf_norm(&sym);
        SymmetricEigen::new(sym).eigenvalues.iter().filter(|&&e| e < -1e-12 * scale).count()
    }

    pub fn meta(&self, null_tol: f64) -> SecondVariationMeta {
        SecondVariationMeta {
            basis: "hat".into(),
            m: self.cells,
            k: self.k,
            quadrature: "simpson per cell".into(),
            delta_convention: "zero".into(),
            symmetry_defect_norm: self.symmetry_defect_norm(),
            null_dimension: null_space(self, null_tol).dimension,
            index: self.index(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in self.b.row_iter() {
            let row: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Node values of the generator with basis coefficients `v`.
    pub fn node_values(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        let k = self.k;
        (0..=self.cells)
            .map(|node| {
                if node == 0 || node == self.cells {
                    DVector::zeros(k)
                } else {
                    v.rows((node - 1) * k, k).into_owned()
                }
            })
            .collect()
    }
}

/// Default relative singular-value threshold for [`null_space`].
pub const DEFAULT_NULL_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct NullSpace {
    pub dimension: usize,
    /// Singular values in increasing order.
    pub singular_values: Vec<f64>,
    pub basis: Vec<DVector<f64>>,
    pub generators: Vec<GeneratorCurve>,
}

/// Right singular vectors of `B` with `σ < tol σ_max`.
pub fn null_space(bm: &SecondVariationMatrix, tol: f64) -> NullSpace {
    let svd = SVD::new(bm.b.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let max = sv.last().copied().unwrap_or(0.0);
    let mut basis = Vec::new();
    for &i in &order {
        if svd.singular_values[i] < tol * max {
            basis.push(v_t.row(i).transpose());
        }
    }
    let generators = basis
        .iter()
        .map(|v| GeneratorCurve::PiecewiseLinear { t0: bm.t0, h: bm.h, values: bm.node_values(v) })
        .collect();
    NullSpace { dimension: basis.len(), singular_values: sv, basis, generators }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_el;

    fn line() -> (SkewAlgebroid, Lagrangian) {
        let a = SkewAlgebroid::tangent(1);
        let l = Lagrangian::euclidean(&a);
        (a, l)
    }

    #[test]
    fn kappa_on_tangent_swaps_slots() {
        let a = SkewAlgebroid::tangent(2);
        let l = Lagrangian::euclidean(&a);
        let host = integrate_el(&a, &l, &[0.0, 0.0], &[1.0, 2.0], 0.0, 1.0, 0.1).unwrap();
        let g = GeneratorCurve::analytic(2, |t| Jet {
            f: DVector::from_vec(vec![t.sin(), t * t]),
            fd: DVector::from_vec(vec![t.cos(), 2.0 * t]),
            fdd: DVector::from_vec(vec![-t.sin(), 2.0]),
        });
        let v = kappa_variation(&a, &host, &g).unwrap();
        for m in 0..host.len() {
            let t = host.t(m);
            assert!((v.dx[m][0] - t.sin()).abs() < 1e-15);
            assert!((v.dy[m][1] - 2.0 * t).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_generator_gives_zero_variation() {
        let (a, l) = line();
        let host = integrate_el(&a, &l, &[0.0], &[1.0], 0.0, 1.0, 0.1).unwrap();
        let v = kappa_variation(&a, &host, &GeneratorCurve::zero(1)).unwrap();
        assert!(v.dx.iter().chain(&v.dy).all(|d| d.amax() == 0.0));
    }

    #[test]
    fn flat_line_matrix_is_second_difference() {
        let (a, l) = line();
        let host = integrate_el(&a, &l, &[0.0], &[1.0], 0.0, 1.0, 0.25).unwrap();
        let bm = second_variation_matrix(&a, &l, &host).unwrap();
        let h = 0.25;
        let oracle = DMatrix::from_fn(3, 3, |i, j| match (i as i64 - j as i64).abs() {
            0 => 2.0 / h,
            1 => -1.0 / h,
            _ => 0.0,
        });
        assert!((&bm.b - &oracle).amax() < 1e-12);
        assert_eq!(bm.index(), 0);
        assert_eq!(null_space(&bm, DEFAULT_NULL_TOL).dimension, 0);
    }

    #[test]
    fn hat_value_is_index_form() {
        let (a, l) = line();
        let host = integrate_el(&a, &l, &[0.0], &[1.0], 0.0, 1.0, 0.25).unwrap();
        let p = GeneratorCurve::hat(&host, 1, 1, 0);
        let q = GeneratorCurve::hat(&host, 1, 2, 0);
        let v = second_variation_value(&a, &l, &host, &p, &q, &DeltaField::Zero).unwrap();
        assert!((v.value + 4.0).abs() < 1e-12);
        assert!(v.alternative.is_none());
        let z = second_variation_value(&a, &l, &host, &GeneratorCurve::zero(1), &q, &DeltaField::Zero).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn zero_lagrangian_first_variation_vanishes() {
        let a = SkewAlgebroid::tangent(1);
        let l = Lagrangian::zero(&a);
        let xs: Vec<DVector<f64>> = (0..=10).map(|m| DVector::from_element(1, 0.1 * m as f64)).collect();
        let ys = vec![DVector::from_element(1, 1.0); 11];
        let host = Trajectory::from_samples(&a, &l, 0.0, 0.1, xs, ys).unwrap();
        let g = GeneratorCurve::analytic(1, |t| Jet {
            f: DVector::from_element(1, t.cos()),
            fd: DVector::from_element(1, -t.sin()),
            fdd: DVector::from_element(1, -t.cos()),
        });
        let fv = first_variation(&a, &l, &host, &g).unwrap();
        assert_eq!((fv.integral_term, fv.boundary_term, fv.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn xi_must_vanish_at_ends() {
        let (a, l) = line();
        let host = integrate_el(&a, &l, &[0.0], &[1.0], 0.0, 1.0, 0.25).unwrap();
        let g = GeneratorCurve::analytic(1, |_| Jet::zero(1));
        let bad = GeneratorCurve::analytic(1, |t| Jet {
            f: DVector::from_element(1, t),
            fd: DVector::from_element(1, 1.0),
            fdd: DVector::zeros(1),
        });
        assert!(second_variation_value(&a, &l, &host, &g, &bad, &DeltaField::Zero).is_err());
    }
}
