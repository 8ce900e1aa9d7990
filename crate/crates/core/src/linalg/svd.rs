use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Thin SVD `a = u · diag(sigma) · vᵀ` of a p×q matrix with p ≥ q.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub sigma: Array1<T>,
    pub v: Array2<T>,
}

/// Thin SVD via the eigendecomposition of `aᵀa`. Intended for the small
/// d×d cross-products between orthonormal bases; left vectors belonging to
/// (numerically) zero singular values are completed orthonormally.
pub fn thin_svd<T: Real>(a: ArrayView2<'_, T>) -> Result<Svd<T>> {
    let (p, q) = a.dim();
    if p < q {
        return Err(Error::InvalidInput(format!("thin_svd expects rows >= cols, got {p}x{q}")));
    }
    let ata = a.t().dot(&a);
    let eig = symmetric_eigen(ata.view())?;
    let sigma = eig.values.mapv(|l| l.max(T::zero()).sqrt());
    let v = eig.vectors;
    let av = a.dot(&v);
    let smax = sigma.iter().cloned().fold(T::zero(), T::max);
    let tol = T::EPS.sqrt() * smax.max(T::one());
    let mut u = Array2::zeros((p, q));
    let mut filled = Vec::with_capacity(q);
    for j in 0..q {
        if sigma[j] > tol {
            let col = &av.column(j) / sigma[j];
            u.column_mut(j).assign(&col);
            filled.push(j);
        }
    }
    complete_columns(&mut u, &filled);
    Ok(Svd { u, sigma, v })
}

/// Singular values of a (small) matrix, non-increasing.
pub fn singular_values<T: Real>(a: ArrayView2<'_, T>) -> Result<Array1<T>> {
    let g = if a.nrows() >= a.ncols() { a.t().dot(&a) } else { a.dot(&a.t()) };
    Ok(symmetric_eigen(g.view())?.values.mapv(|l| l.max(T::zero()).sqrt()))
}

/// Fills the columns of `m` not listed in `filled` with unit vectors
/// orthogonal to every other column (Gram–Schmidt over the standard basis).
pub(crate) fn complete_columns<T: Real>(m: &mut Array2<T>, filled: &[usize]) {
    let (p, q) = m.dim();
    let mut have: Vec<usize> = filled.to_vec();
    let mut candidate = 0;
    for j in 0..q {
        if filled.contains(&j) {
            continue;
        }
        while candidate < p {
            let mut x = Array1::<T>::zeros(p);
            x[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for &h in &have {
                    let c = m.column(h);
                    let proj = c.dot(&x);
                    x.scaled_add(-proj, &c);
                }
            }
            let norm = x.dot(&x).sqrt();
            if norm > T::lit(1e-3) {
                m.column_mut(j).assign(&(x / norm));
                have.push(j);
                break;
            }
        }
    }
}

/// Orthonormalises the columns of `m` in place (modified Gram–Schmidt,
/// two passes). Returns an error if the columns are rank deficient.
pub fn orthonormalize<T: Real>(m: &mut Array2<T>) -> Result<()> {
    let q = m.ncols();
    for j in 0..q {
        for _ in 0..2 {
            for h in 0..j {
                let (left, mut right) = m.view_mut().split_at(Axis(1), j);
                let c = left.column(h);
                let mut x = right.column_mut(0);
                let proj = c.dot(&x);
                x.scaled_add(-proj, &c);
            }
        }
        let mut col = m.slice_mut(s![.., j]);
        let norm = col.dot(&col).sqrt();
        if norm <= T::EPS.sqrt() {
            return Err(Error::DegenerateData("columns are linearly dependent".into()));
        }
        col /= norm;
    }
    Ok(())
}
