//! Jacobi fields along Euler-Lagrange trajectories.
//!
//! A generator `ξ(t)` induces the variation `δx = ρξ`, `δy = ξ̇ + C(y)ξ` with
//! `(C(y)ξ)^s = c^s_{ik} y^i ξ^k`. The Jacobi equation is the linearization
//! of the Euler-Lagrange equation along that variation. It is integrated in
//! first-order form for the pair `(ξ, μ)`, where the Jacobi momentum is
//!
//! ```text
//! μ_j = ∂²L/∂y^j∂x^a δx^a + W_{js} δy^s
//! ```
//!
//! and `μ̇` equals the tangent map of the Euler-Lagrange force applied to
//! `(δx, δy)`. Along a fixed host this is a linear system
//! `d/dt (ξ, μ) = G(t) (ξ, μ)` with `G` assembled per host state.

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::{FramePoint, SkewAlgebroid};
use crate::dynamics::{integrate_el, invert_w, Lagrangian, LagrangianPoint, Trajectory};
use crate::error::{dim_check, AmechError, Result};
use crate::numerics::diff_o4;

/// Hosts whose Euler-Lagrange residual exceeds this are rejected.
pub const HOST_RESIDUAL_LIMIT: f64 = 1e-6;

/// Per-state data of the linear Jacobi system.
#[derive(Clone, Debug)]
pub(crate) struct HostPoint {
    pub frame: FramePoint,
    pub lp: LagrangianPoint,
    pub winv: DMatrix<f64>,
    /// `C(y)`.
    pub ad: DMatrix<f64>,
    /// Generator `G` of the `(ξ, μ)` system, `2k × 2k`.
    pub g: DMatrix<f64>,
}

impl HostPoint {
    pub fn new(alg: &SkewAlgebroid, l: &Lagrangian, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, k) = (alg.n(), alg.k());
        let frame = alg.frame_at(x.as_slice())?;
        let lp = l.at(x.as_slice(), y.as_slice())?;
        let w = lp.w();
        let winv = invert_w(&w, t, x.as_slice(), y.as_slice())?;
        let ad = frame.c.ad(y);
        let lyx = lp.yx();
        let lxx = lp.xx();
        let mut ax = DMatrix::zeros(k, n);
        for a in 0..n {
            let col = frame.drho[a].tr_mul(&lp.lx)
                + frame.rho.tr_mul(&lxx.column(a).into_owned())
                + frame.dc[a].coad(y, &lp.ly)
                + frame.c.coad(y, &lyx.column(a).into_owned());
            ax.set_column(a, &col);
        }
        let mut ay = DMatrix::zeros(k, k);
        for s in 0..k {
            let mut e = DVector::zeros(k);
            e[s] = 1.0;
            let col = frame.rho.tr_mul(&lyx.row(s).transpose())
                + frame.c.coad(&e, &lp.ly)
                + frame.c.coad(y, &w.column(s).into_owned());
            ay.set_column(s, &col);
        }
        // δy = W⁻¹(μ − L_yx ρ ξ); ξ̇ = δy − C ξ; μ̇ = A_x ρ ξ + A_y δy
        let wl = &winv * &lyx * &frame.rho;
        let p = -&wl - &ad;
        let q = &ax * &frame.rho - &ay * &wl;
        let r = &ay * &winv;
        let mut g = DMatrix::zeros(2 * k, 2 * k);
        g.view_mut((0, 0), (k, k)).copy_from(&p);
        g.view_mut((0, k), (k, k)).copy_from(&winv);
        g.view_mut((k, 0), (k, k)).copy_from(&q);
        g.view_mut((k, k), (k, k)).copy_from(&r);
        Ok(HostPoint { frame, lp, winv, ad, g })
    }

    /// `(δx, δy)` for generator `ξ` with momentum `μ`.
    pub fn variation(&self, xi: &DVector<f64>, mu: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let dx = &self.frame.rho * xi;
        let dy = &self.winv * (mu - self.lp.yx() * &dx);
        (dx, dy)
    }

    /// Momentum of a generator with derivative `ξ̇`.
    pub fn momentum(&self, xi: &DVector<f64>, xidot: &DVector<f64>) -> DVector<f64> {
        let dx = &self.frame.rho * xi;
        let dy = xidot + &self.ad * xi;
        self.lp.yx() * dx + self.lp.w() * dy
    }
}

/// Host data at every node and every cell midpoint.
pub(crate) struct HostCache {
    pub nodes: Vec<HostPoint>,
    pub mids: Vec<HostPoint>,
}

impl HostCache {
    pub fn build(alg: &SkewAlgebroid, l: &Lagrangian, host: &Trajectory) -> Result<Self> {
        let first = HostPoint::new(alg, l, host.t0, &host.x[0], &host.y[0])?;
        let mut nodes: Vec<HostPoint> = (1..host.len())
            .into_par_iter()
            .map(|m| HostPoint::new(alg, l, host.t(m), &host.x[m], &host.y[m]))
            .collect::<Result<_>>()?;
        nodes.insert(0, first);
        let mids = (0..host.cells())
            .into_par_iter()
            .map(|m| {
                let (x, y, _, _) = host.state_at(m, 0.5);
                HostPoint::new(alg, l, host.t(m) + 0.5 * host.h, &x, &y)
            })
            .collect::<Result<_>>()?;
        Ok(HostCache { nodes, mids })
    }
}

fn check_host(host: &Trajectory) -> Result<()> {
    let r = host.meta.max_el_residual;
    if !(r <= HOST_RESIDUAL_LIMIT) {
        return Err(AmechError::HostResidual { residual: r, limit: HOST_RESIDUAL_LIMIT });
    }
    Ok(())
}

fn rk4_step(g0: &DMatrix<f64>, gm: &DMatrix<f64>, g1: &DMatrix<f64>, s: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let k1 = g0 * s;
    let k2 = gm * (s + &k1 * (0.5 * dt));
    let k3 = gm * (s + &k2 * (0.5 * dt));
    let k4 = g1 * (s + &k3 * dt);
    s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Propagate columns of `(ξ; μ)` stacked as a `2k × c` matrix across the grid.
fn propagate(cache: &HostCache, h: f64, s0: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(cache.nodes.len());
    out.push(s0);
    for m in 0..cache.mids.len() {
        let next = rk4_step(&cache.nodes[m].g, &cache.mids[m].g, &cache.nodes[m + 1].g, &out[m], h);
        out.push(next);
    }
    out
}

/// Jacobi field sampled on the host grid.
#[derive(Clone, Debug)]
pub struct JacobiField {
    pub t0: f64,
    pub h: f64,
    pub xi: Vec<DVector<f64>>,
    pub xidot: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    /// `δx = ρξ`.
    pub dx: Vec<DVector<f64>>,
    /// `δy = ξ̇ + C(y)ξ`.
    pub dy: Vec<DVector<f64>>,
}

impl JacobiField {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn t(&self, m: usize) -> f64 {
        self.t0 + m as f64 * self.h
    }

    /// CSV with header `t,xi1..,xidot1..,mu1..`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let k = self.xi.first().map_or(0, |v| v.len());
        let mut out = String::from("t");
        for prefix in ["xi", "xidot", "mu"] {
            for i in 1..=k {
                let _ = write!(out, ",{prefix}{i}");
            }
        }
        out.push('\n');
        for m in 0..self.len() {
            let _ = write!(out, "{:.16e}", self.t(m));
            for v in self.xi[m].iter().chain(self.xidot[m].iter()).chain(self.mu[m].iter()) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

fn field_from_states(cache: &HostCache, host: &Trajectory, states: &[DMatrix<f64>], col: usize) -> JacobiField {
    let k = states[0].nrows() / 2;
    let mut f = JacobiField { t0: host.t0, h: host.h, xi: vec![], xidot: vec![], mu: vec![], dx: vec![], dy: vec![] };
    for (m, s) in states.iter().enumerate() {
        let xi = s.view((0, col), (k, 1)).column(0).into_owned();
        let mu = s.view((k, col), (k, 1)).column(0).into_owned();
        let hp = &cache.nodes[m];
        let (dx, dy) = hp.variation(&xi, &mu);
        f.xidot.push(&dy - &hp.ad * &xi);
        f.xi.push(xi);
        f.mu.push(mu);
        f.dx.push(dx);
        f.dy.push(dy);
    }
    f
}

/// Integrate the Jacobi equation from `ξ(t0) = xi0`, `ξ̇(t0) = xidot0`.
pub fn integrate_jacobi(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    xi0: &[f64],
    xidot0: &[f64],
) -> Result<JacobiField> {
    let k = alg.k();
    dim_check("xi0", k, xi0.len())?;
    dim_check("xidot0", k, xidot0.len())?;
    check_host(host)?;
    let cache = HostCache::build(alg, l, host)?;
    let xi = DVector::from_column_slice(xi0);
    let mu = cache.nodes[0].momentum(&xi, &DVector::from_column_slice(xidot0));
    let s0 = DMatrix::from_iterator(2 * k, 1, xi.iter().chain(mu.iter()).copied());
    let states = propagate(&cache, host.h, s0);
    Ok(field_from_states(&cache, host, &states, 0))
}

/// Residuals of the Jacobi equation for a generator with prescribed jets at
/// a host state `(x, y, ẋ, ẏ)`.
///
/// The first component is the almost-Lie tensor contracted with `ξ` and `y`;
/// it vanishes identically on almost-Lie algebroids. The second is
/// `μ̇ − δF(δx, δy)` with `μ̇` expanded by the chain rule.
#[allow(clippy::too_many_arguments)]
pub fn jacobi_residual(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    x: &DVector<f64>,
    y: &DVector<f64>,
    xdot: &DVector<f64>,
    ydot: &DVector<f64>,
    xi: &DVector<f64>,
    xidot: &DVector<f64>,
    xiddot: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, k) = (alg.n(), alg.k());
    dim_check("xi", k, xi.len())?;
    let fr = alg.frame_at(x.as_slice())?;
    let lp = l.at(x.as_slice(), y.as_slice())?;

    // ρ^a_k c^k_{ij} ξ^i y^j + ∂_bρ^a_i ρ^b_j ξ^i y^j − ∂_bρ^a_j ρ^b_i ξ^i y^j
    let cyx = fr.c.bracket(xi, y);
    let rho_xi = &fr.rho * xi;
    let rho_y = &fr.rho * y;
    let first = &fr.rho * cyx + fr.drho_along(&rho_y) * xi - fr.drho_along(&rho_xi) * y;

    let dx = &fr.rho * xi;
    let ad = fr.c.ad(y);
    let dy = xidot + &ad * xi;
    let lyx = lp.yx();
    let w = lp.w();

    // tangent of the force
    let mut force = DVector::zeros(k);
    if n > 0 {
        force += fr.drho_along(&dx).tr_mul(&lp.lx) + fr.rho.tr_mul(&(lp.xx() * &dx + lyx.tr_mul(&dy)));
        force += fr.dc_along(&dx).coad(y, &lp.ly);
    }
    force += fr.c.coad(&dy, &lp.ly) + fr.c.coad(y, &(&lyx * &dx + &w * &dy));

    // μ̇ by the chain rule; only third derivatives with a fiber index enter
    let d = n + k;
    let qdot: Vec<f64> = xdot.iter().chain(ydot.iter()).copied().collect();
    let hdot = if lp_has_third(l) {
        let t = l.third_at(x.as_slice(), y.as_slice())?;
        DMatrix::from_fn(d, d, |p, q| (0..d).map(|r| t[(p * d + q) * d + r] * qdot[r]).sum())
    } else {
        DMatrix::zeros(d, d)
    };
    let lyx_dot = hdot.view((n, 0), (k, n)).into_owned();
    let w_dot = hdot.view((n, n), (k, k)).into_owned();
    let dx_dot = fr.drho_along(xdot) * xi + &fr.rho * xidot;
    let dy_dot = xiddot + fr.dc_along(xdot).bracket(y, xi) + fr.c.bracket(ydot, xi) + fr.c.bracket(y, xidot);
    let mu_dot = lyx_dot * &dx + &lyx * dx_dot + w_dot * &dy + &w * dy_dot;

    Ok((first, mu_dot - force))
}

fn lp_has_third(l: &Lagrangian) -> bool {
    !l.expr().is_zero()
}

/// Residuals of an integrated field against its own host, with `ξ̈` from
/// fourth-order differences of the recovered `ξ̇`. Returns sup-norms
/// `(first, dynamical)`.
pub fn jacobi_residual_along(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    field: &JacobiField,
) -> Result<(f64, f64)> {
    let xidd = diff_o4(&field.xidot, field.h);
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    for m in 0..field.len() {
        let (r1, r2) = jacobi_residual(
            alg,
            l,
            &host.x[m],
            &host.y[m],
            &host.xdot[m],
            &host.ydot[m],
            &field.xi[m],
            &field.xidot[m],
            &xidd[m],
        )?;
        a = a.max(r1.amax());
        b = b.max(r2.amax());
    }
    Ok((a, b))
}

/// Finite-difference realization `∂_s γ(t, s)` of a one-parameter family of
/// Euler-Lagrange solutions.
#[derive(Clone, Debug)]
pub struct FdVariation {
    pub t0: f64,
    pub h: f64,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub dx: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
}

/// Perturb the initial state along the variation generated by
/// `(ξ0, ξ̇0)` and take central differences of the two perturbed flows.
#[allow(clippy::too_many_arguments)]
pub fn fd_prolongation_oracle(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    x0: &[f64],
    y0: &[f64],
    xi0: &[f64],
    xidot0: &[f64],
    ds: f64,
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<FdVariation> {
    let k = alg.k();
    dim_check("xi0", k, xi0.len())?;
    dim_check("xidot0", k, xidot0.len())?;
    if !(ds > 0.0) {
        return Err(AmechError::InvalidArgument(format!("ds must be positive, got {ds}")));
    }
    let fr = alg.frame_at(x0)?;
    let xi = DVector::from_column_slice(xi0);
    let yv = DVector::from_column_slice(y0);
    let dx0 = &fr.rho * &xi;
    let dy0 = DVector::from_column_slice(xidot0) + fr.c.ad(&yv) * &xi;
    let shifted = |sign: f64| {
        let x: Vec<f64> = x0.iter().zip(dx0.iter()).map(|(a, b)| a + sign * ds * b).collect();
        let y: Vec<f64> = y0.iter().zip(dy0.iter()).map(|(a, b)| a + sign * ds * b).collect();
        integrate_el(alg, l, &x, &y, t0, t1, h)
    };
    let (base, (plus, minus)) = rayon::join(|| integrate_el(alg, l, x0, y0, t0, t1, h), || rayon::join(|| shifted(1.0), || shifted(-1.0)));
    let (base, plus, minus) = (base?, plus?, minus?);
    let diff = |p: &[DVector<f64>], q: &[DVector<f64>]| -> Vec<DVector<f64>> {
        p.iter().zip(q).map(|(a, b)| (a - b) / (2.0 * ds)).collect()
    };
    Ok(FdVariation {
        t0: base.t0,
        h: base.h,
        dx: diff(&plus.x, &minus.x),
        dy: diff(&plus.y, &minus.y),
        x: base.x,
        y: base.y,
    })
}

/// Recover generator initial data from an initial variation `(δx0, δy0)`,
/// taking `ξ0` as the least-squares preimage under `ρ(x0)`.
pub fn generator_from_variation(
    alg: &SkewAlgebroid,
    x0: &[f64],
    y0: &[f64],
    dx0: &[f64],
    dy0: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    dim_check("dx0", alg.n(), dx0.len())?;
    dim_check("dy0", alg.k(), dy0.len())?;
    let fr = alg.frame_at(x0)?;
    let xi = if alg.n() == 0 {
        DVector::zeros(alg.k())
    } else {
        let svd = SVD::new(fr.rho.clone(), true, true);
        svd.solve(&DVector::from_column_slice(dx0), 1e-12)
            .map_err(|e| AmechError::InvalidArgument(format!("pseudo-inverse failed: {e}")))?
    };
    let xidot = DVector::from_column_slice(dy0) - fr.c.ad(&DVector::from_column_slice(y0)) * &xi;
    Ok((xi, xidot))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugatePoint {
    pub t: f64,
    pub multiplicity: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetSample {
    pub t: f64,
    pub det: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateReport {
    pub conjugate_times: Vec<ConjugatePoint>,
    pub det_trace: Vec<DetSample>,
}

/// Default multiplicity threshold relative to the largest singular value.
pub const DEFAULT_TOL_SV: f64 = 1e-6;
/// Default threshold on `σ_min / σ_max` for near-singular detection.
pub const DEFAULT_TOL_DET: f64 = 1e-6;
const BISECTION_STEPS: usize = 40;
const GOLDEN_STEPS: usize = 60;

fn sv_ratio(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let sv = m.singular_values();
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let max = v.last().copied().unwrap_or(0.0);
    let min = v.first().copied().unwrap_or(0.0);
    (if max > 0.0 { min / max } else { 0.0 }, v)
}

/// Scan for times conjugate to `t0` along the host.
///
/// The `k` fundamental fields with `ξ(t0) = 0`, `μ(t0) = e_j` are propagated
/// together; their values form `M(t)`. A conjugate time is reported at each
/// sign change of `det M` (refined by bisection), at each local minimum of
/// `σ_min/σ_max` that refines below `tol_det` without a sign change, and at
/// `t1` when the ratio there is below `tol_det`.
pub fn conjugate_scan(
    alg: &SkewAlgebroid,
    l: &Lagrangian,
    host: &Trajectory,
    tol_det: f64,
    tol_sv: f64,
) -> Result<ConjugateReport> {
    let k = alg.k();
    // regularity is checked before anything else
    HostPoint::new(alg, l, host.t0, &host.x[0], &host.y[0])?;
    check_host(host)?;
    let cache = HostCache::build(alg, l, host)?;
    let mut s0 = DMatrix::zeros(2 * k, k);
    for j in 0..k {
        s0[(k + j, j)] = 1.0;
    }
    let states = propagate(&cache, host.h, s0);
    let xi_of = |s: &DMatrix<f64>| s.view((0, 0), (k, k)).into_owned();
    let dets: Vec<f64> = states.iter().map(|s| xi_of(s).determinant()).collect();
    let ratios: Vec<f64> = states.iter().map(|s| sv_ratio(&xi_of(s)).0).collect();

    // state inside cell m at fraction s via one RK4 sub-step from node m
    let sub = |m: usize, s: f64| -> Result<DMatrix<f64>> {
        if s == 0.0 {
            return Ok(xi_of(&states[m]));
        }
        let dt = s * host.h;
        let at = |frac: f64| -> Result<DMatrix<f64>> {
            let (x, y, _, _) = host.state_at(m, frac);
            Ok(HostPoint::new(alg, l, host.t(m) + frac * host.h, &x, &y)?.g)
        };
        let gm = at(0.5 * s)?;
        let g1 = at(s)?;
        Ok(xi_of(&rk4_step(&cache.nodes[m].g, &gm, &g1, &states[m], dt)))
    };

    let last = states.len() - 1;
    let mut found: Vec<(f64, DMatrix<f64>)> = Vec::new();
    let mut sign_cells = vec![false; last];
    for m in 1..last {
        if dets[m] == 0.0 || dets[m] * dets[m + 1] < 0.0 {
            sign_cells[m] = true;
            if dets[m] == 0.0 {
                found.push((host.t(m), xi_of(&states[m])));
                continue;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            let sgn_lo = dets[m].signum();
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let d = sub(m, mid)?.determinant();
                if d == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if d.signum() == sgn_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            found.push((host.t(m) + s * host.h, sub(m, s)?));
        }
    }
    for m in 1..last {
        let adjacent = sign_cells[m] || sign_cells.get(m - 1).copied().unwrap_or(false);
        if adjacent || !(ratios[m] < ratios[m - 1] && ratios[m] <= ratios[m + 1]) {
            continue;
        }
        // golden-section search on [t_{m-1}, t_{m+1}]
        let eval = |u: f64| -> Result<(f64, DMatrix<f64>)> {
            let (cell, s) = if u < 1.0 { (m - 1, u) } else { (m, u - 1.0) };
            let xi = sub(cell, s)?;
            Ok((sv_ratio(&xi).0, xi))
        };
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.0, 2.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = eval(c)?.0;
        let mut fd = eval(d)?.0;
        for _ in 0..GOLDEN_STEPS {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval(c)?.0;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval(d)?.0;
            }
        }
        let u = 0.5 * (a + b);
        let (r, xi) = eval(u)?;
        if r < tol_det {
            found.push((host.t(m - 1) + u * host.h, xi));
        }
    }
    if ratios[last] < tol_det && !found.iter().any(|(t, _)| (t - host.t(last)).abs() <= host.h) {
        found.push((host.t(last), xi_of(&states[last])));
    }
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let conjugate_times = found
        .into_iter()
        .map(|(t, m)| {
            let (_, sv) = sv_ratio(&m);
            let max = sv.last().copied().unwrap_or(0.0);
            let count = sv.iter().filter(|&&s| s < tol_sv * max).count();
            ConjugatePoint { t, multiplicity: count.max(1), singular_values: sv }
        })
        .collect();
    let det_trace = dets.iter().enumerate().map(|(m, &det)| DetSample { t: host.t(m), det }).collect();
    Ok(ConjugateReport { conjugate_times, det_trace })
}
