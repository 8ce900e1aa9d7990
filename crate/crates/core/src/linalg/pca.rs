use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen;
use super::svd::complete_columns;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Real;

/// Mean-centred PCA subspace: `basis` is D×d with orthonormal columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace<T> {
    pub mean: Array1<T>,
    pub basis: Array2<T>,
    pub eigenvalues: Array1<T>,
}

impl<T: Real> Subspace<T> {
    /// Checks shape consistency; used when loading or hand-constructing.
    pub fn new(mean: Array1<T>, basis: Array2<T>, eigenvalues: Array1<T>) -> Result<Self> {
        if basis.nrows() != mean.len() {
            return Err(Error::InvalidInput(format!(
                "basis has {} rows but mean has {} entries",
                basis.nrows(),
                mean.len()
            )));
        }
        if eigenvalues.len() != basis.ncols() {
            return Err(Error::InvalidInput(format!(
                "{} eigenvalues for {} basis vectors",
                eigenvalues.len(),
                basis.ncols()
            )));
        }
        Ok(Self { mean, basis, eigenvalues })
    }

    /// Zero-mean subspace spanned by the given orthonormal columns.
    pub fn from_basis(basis: Array2<T>) -> Self {
        let d = basis.ncols();
        Self { mean: Array1::zeros(basis.nrows()), basis, eigenvalues: Array1::ones(d) }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `basisᵀ (x − mean)`.
    pub fn project(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::InvalidInput(format!(
                "vector of dimension {} projected onto subspace in R^{}",
                x.len(),
                self.ambient_dim()
            )));
        }
        Ok(self.basis.t().dot(&(&x - &self.mean)))
    }

    /// Projects every row; returns n×d.
    pub fn project_rows(&self, rows: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if rows.ncols() != self.ambient_dim() {
            return Err(Error::InvalidInput(format!(
                "rows of dimension {} projected onto subspace in R^{}",
                rows.ncols(),
                self.ambient_dim()
            )));
        }
        Ok((&rows - &self.mean).dot(&self.basis))
    }

    /// Keeps the leading `d` components.
    pub fn truncate(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.dim() {
            return Err(Error::InvalidDimension(format!("cannot truncate a {}-dim subspace to {d}", self.dim())));
        }
        Ok(Self {
            mean: self.mean.clone(),
            basis: self.basis.slice(ndarray::s![.., ..d]).to_owned(),
            eigenvalues: self.eigenvalues.slice(ndarray::s![..d]).to_owned(),
        })
    }
}

pub fn fit_pca<T: Real>(data: &FeatureMatrix<T>, d: usize) -> Result<Subspace<T>> {
    fit_pca_rows(data.rows(), d)
}

/// PCA of the rows of `x` (sample covariance, divisor n−1).
///
/// Uses the D×D covariance when D ≤ n and the n×n Gram matrix otherwise.
pub fn fit_pca_rows<T: Real>(x: ArrayView2<'_, T>, d: usize) -> Result<Subspace<T>> {
    let (n, dim) = x.dim();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 samples, got {n}")));
    }
    if d == 0 || d > (n - 1).min(dim) {
        return Err(Error::InvalidDimension(format!(
            "requested {d} components from {n} samples in R^{dim}; need 1 <= d <= {}",
            (n - 1).min(dim)
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let xc = &x - &mean;
    if xc.iter().all(|v| *v == T::zero()) {
        return Err(Error::DegenerateSpectrum("all samples are identical".into()));
    }
    let denom = T::from_count(n - 1);
    let (values, basis) = if dim <= n {
        let cov = xc.t().dot(&xc) / denom;
        let eig = symmetric_eigen(cov.view())?;
        let basis = eig.vectors.slice(ndarray::s![.., ..d]).to_owned();
        (eig.values.slice(ndarray::s![..d]).to_owned(), basis)
    } else {
        let gram = xc.dot(&xc.t()) / denom;
        let eig = symmetric_eigen(gram.view())?;
        let lmax = eig.values[0];
        let tol = lmax * T::from_count(n) * T::EPS * T::lit(16.0);
        let mut basis = Array2::zeros((dim, d));
        let mut filled = Vec::with_capacity(d);
        for j in 0..d {
            let l = eig.values[j];
            if l > tol {
                let col = xc.t().dot(&eig.vectors.column(j)) / (l * denom).sqrt();
                basis.column_mut(j).assign(&col);
                filled.push(j);
            }
        }
        complete_columns(&mut basis, &filled);
        fix_signs(&mut basis);
        (eig.values.slice(ndarray::s![..d]).to_owned(), basis)
    };
    if values[0] <= T::zero() {
        return Err(Error::DegenerateSpectrum("covariance has no positive eigenvalue".into()));
    }
    let floor = T::lit(-1e-10);
    let values = values.mapv(|l| if l < T::zero() && l >= floor { T::zero() } else { l.max(T::zero()) });
    Ok(Subspace { mean, basis, eigenvalues: values })
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn fix_signs<T: Real>(m: &mut Array2<T>) {
    for mut col in m.columns_mut() {
        let mut best = T::zero();
        let mut neg = false;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                neg = v < T::zero();
            }
        }
        if neg {
            col.mapv_inplace(|v| -v);
        }
    }
}
