use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative floor applied to whitening eigenvalues.
pub const EIGENVALUE_FLOOR: f64 = 1e-8;

/// `1/√λ_i` after clamping `λ_i` to at least `1e-8 · λ_max`.
pub fn whitening_scales<T: Real>(eigenvalues: &Array1<T>) -> Result<Array1<T>> {
    let lmax = eigenvalues.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    if eigenvalues.is_empty() || !(lmax.is_finite() && lmax > 0.0) {
        return Err(Error::InvalidEigenvalues(format!("largest eigenvalue is {lmax}")));
    }
    let floor = EIGENVALUE_FLOOR * lmax;
    eigenvalues
        .iter()
        .map(|v| {
            let l = v.as_f64();
            if l.is_nan() {
                return Err(Error::InvalidEigenvalues("NaN eigenvalue".into()));
            }
            Ok(T::lit(1.0 / l.max(floor).sqrt()))
        })
        .collect()
}

/// Scales component i of every row by `1/√λ_i`, then L2-normalises rows.
pub fn whiten<T: Real>(vectors: ArrayView2<'_, T>, eigenvalues: &Array1<T>) -> Result<Array2<T>> {
    if vectors.ncols() != eigenvalues.len() {
        return Err(Error::InvalidInput(format!(
            "{} eigenvalues for vectors of dimension {}",
            eigenvalues.len(),
            vectors.ncols()
        )));
    }
    let scales = whitening_scales(eigenvalues)?;
    let mut out = &vectors * &scales;
    for mut row in out.rows_mut() {
        let n = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        if n > 0.0 {
            let n = T::lit(n);
            row.mapv_inplace(|v| v / n);
        }
    }
    Ok(out)
}
