//! Grid utilities: finite differences, cubic Hermite interpolation,
//! per-cell Simpson quadrature and a guarded linear solve.

use nalgebra::{DMatrix, DVector};

/// Derivative of uniformly sampled data, second order: central differences
/// inside, three-point one-sided formulas at the ends.
pub fn diff_o2(v: &[DVector<f64>], h: f64) -> Vec<DVector<f64>> {
    let m = v.len();
    match m {
        0 => vec![],
        1 => vec![v[0].clone() * 0.0],
        2 => {
            let d = (&v[1] - &v[0]) / h;
            vec![d.clone(), d]
        }
        _ => (0..m)
            .map(|i| {
                if i == 0 {
                    (&v[0] * -3.0 + &v[1] * 4.0 - &v[2]) / (2.0 * h)
                } else if i == m - 1 {
                    (&v[m - 1] * 3.0 - &v[m - 2] * 4.0 + &v[m - 3]) / (2.0 * h)
                } else {
                    (&v[i + 1] - &v[i - 1]) / (2.0 * h)
                }
            })
            .collect(),
    }
}

/// Derivative of uniformly sampled data, fourth order: five-point stencils,
/// shifted near the ends. Falls back to [`diff_o2`] on short grids.
pub fn diff_o4(v: &[DVector<f64>], h: f64) -> Vec<DVector<f64>> {
    let m = v.len();
    if m < 5 {
        return diff_o2(v, h);
    }
    let d = 12.0 * h;
    (0..m)
        .map(|i| {
            if i == 0 {
                (&v[0] * -25.0 + &v[1] * 48.0 - &v[2] * 36.0 + &v[3] * 16.0 - &v[4] * 3.0) / d
            } else if i == 1 {
                (&v[0] * -3.0 - &v[1] * 10.0 + &v[2] * 18.0 - &v[3] * 6.0 + &v[4]) / d
            } else if i == m - 2 {
                (&v[m - 1] * 3.0 + &v[m - 2] * 10.0 - &v[m - 3] * 18.0 + &v[m - 4] * 6.0 - &v[m - 5]) / d
            } else if i == m - 1 {
                (&v[m - 1] * 25.0 - &v[m - 2] * 48.0 + &v[m - 3] * 36.0 - &v[m - 4] * 16.0 + &v[m - 5] * 3.0) / d
            } else {
                (&v[i - 2] - &v[i - 1] * 8.0 + &v[i + 1] * 8.0 - &v[i + 2]) / d
            }
        })
        .collect()
}

/// Cubic Hermite interpolant on a cell of width `h` at fraction `s`.
/// Returns value, first and second time derivatives.
pub fn hermite(
    p0: &DVector<f64>,
    m0: &DVector<f64>,
    p1: &DVector<f64>,
    m1: &DVector<f64>,
    h: f64,
    s: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let val = p0 * h00 + m0 * (h10 * h) + p1 * h01 + m1 * (h11 * h);
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -d00;
    let d11 = 3.0 * s2 - 2.0 * s;
    let der = (p0 * d00 + p1 * d01) / h + m0 * d10 + m1 * d11;
    let e00 = 12.0 * s - 6.0;
    let e10 = 6.0 * s - 4.0;
    let e01 = -e00;
    let e11 = 6.0 * s - 2.0;
    let sec = (p0 * e00 + p1 * e01) / (h * h) + (m0 * e10 + m1 * e11) / h;
    (val, der, sec)
}

/// Per-cell Simpson nodes and weights (as fractions of the cell width).
pub const SIMPSON: [(f64, f64); 3] = [(0.0, 1.0 / 6.0), (0.5, 4.0 / 6.0), (1.0, 1.0 / 6.0)];

/// Outcome of [`guarded_inverse`].
pub enum Inverse {
    Ok(DMatrix<f64>),
    Singular { cond: f64 },
}

/// Condition-number ceiling for the fiber Hessian.
pub const MAX_CONDITION: f64 = 1e12;

/// Invert `w`, rejecting it when the 1-norm condition number exceeds
/// [`MAX_CONDITION`].
pub fn guarded_inverse(w: &DMatrix<f64>) -> Inverse {
    let norm = one_norm(w);
    if norm == 0.0 || !norm.is_finite() {
        return Inverse::Singular { cond: f64::INFINITY };
    }
    match w.clone().lu().try_inverse() {
        Some(inv) => {
            let cond = norm * one_norm(&inv);
            if cond.is_finite() && cond <= MAX_CONDITION {
                Inverse::Ok(inv)
            } else {
                Inverse::Singular { cond }
            }
        }
        None => Inverse::Singular { cond: f64::INFINITY },
    }
}

pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn sup_norm(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(f: impl Fn(f64) -> f64, h: f64, m: usize) -> Vec<DVector<f64>> {
        (0..=m).map(|i| DVector::from_element(1, f(i as f64 * h))).collect()
    }

    #[test]
    fn differences_are_exact_on_low_degree_polynomials() {
        let h = 0.1;
        let q = samples(|t| 3.0 * t * t - t + 2.0, h, 10);
        for (i, d) in diff_o2(&q, h).iter().enumerate() {
            assert!((d[0] - (6.0 * i as f64 * h - 1.0)).abs() < 1e-12);
        }
        let p = samples(|t| t.powi(4) - 2.0 * t.powi(3), h, 10);
        for (i, d) in diff_o4(&p, h).iter().enumerate() {
            let t = i as f64 * h;
            assert!((d[0] - (4.0 * t.powi(3) - 6.0 * t * t)).abs() < 1e-11, "node {i}");
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| t.powi(3) - t;
        let df = |t: f64| 3.0 * t * t - 1.0;
        let (a, b, h) = (0.3, 0.8, 0.5);
        let v = |x: f64| DVector::from_element(1, x);
        let (val, der, sec) = hermite(&v(f(a)), &v(df(a)), &v(f(b)), &v(df(b)), h, 0.4);
        let t = a + 0.4 * h;
        assert!((val[0] - f(t)).abs() < 1e-14);
        assert!((der[0] - df(t)).abs() < 1e-13);
        assert!((sec[0] - 6.0 * t).abs() < 1e-12);
    }

    #[test]
    fn inverse_guard() {
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!(matches!(guarded_inverse(&w), Inverse::Ok(_)));
        let z = DMatrix::zeros(2, 2);
        assert!(matches!(guarded_inverse(&z), Inverse::Singular { .. }));
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        assert!(matches!(guarded_inverse(&near), Inverse::Singular { .. }));
    }
}
