//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// `∫₀¹ Φ(t)Φ(t)ᵀ dt` by composite Simpson quadrature, where Φ is the
/// Grassmann geodesic from span(ps) to span(pt) obtained from the
/// exponential-map parametrisation `Φ(t) = Ps V cos(Θt) + U sin(Θt)` with
/// `U tan(Θ) Vᵀ = (I − Ps Psᵀ) Pt (Psᵀ Pt)⁻¹`.
pub fn gfk_quadrature(ps: &Array2<f64>, pt: &Array2<f64>, intervals: usize) -> Array2<f64> {
    let ps = to_na(ps);
    let pt = to_na(pt);
    let n = ps.nrows();
    let d = ps.ncols();
    let proj = DMatrix::<f64>::identity(n, n) - &ps * ps.transpose();
    let inv = (ps.transpose() * &pt).try_inverse().expect("subspaces not orthogonal");
    let svd = (proj * &pt * inv).svd(true, true);
    let u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    let theta: Vec<f64> = svd.singular_values.iter().map(|s| s.atan()).collect();
    let psv = &ps * &v;
    let phi = |t: f64| -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(n, d);
        for i in 0..d {
            let c = (theta[i] * t).cos();
            let s = (theta[i] * t).sin();
            for r in 0..n {
                out[(r, i)] = psv[(r, i)] * c + u[(r, i)] * s;
            }
        }
        out
    };
    let intervals = intervals + intervals % 2;
    let h = 1.0 / intervals as f64;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for k in 0..=intervals {
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = phi(k as f64 * h);
        acc += (&f * f.transpose()) * w;
    }
    from_na(&(acc * (h / 3.0)))
}

/// Principal-angle cosines between two orthonormal bases, descending.
pub fn principal_cosines(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let c = to_na(a).transpose() * to_na(b);
    let mut s: Vec<f64> = c.svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn min_eigenvalue(a: &Array2<f64>) -> f64 {
    to_na(a).symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
