use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Subspace;
use crate::scalar::Real;

/// Subspace alignment: `m = X_Sᵀ X_T`, `x_a = X_S m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaModel<T> {
    pub source: Subspace<T>,
    pub target: Subspace<T>,
    pub m: Array2<T>,
    pub x_a: Array2<T>,
}

pub fn learn_sa<T: Real>(source: &Subspace<T>, target: &Subspace<T>) -> Result<SaModel<T>> {
    if source.ambient_dim() != target.ambient_dim() {
        return Err(Error::InvalidInput(format!(
            "source subspace lives in R^{} but target in R^{}",
            source.ambient_dim(),
            target.ambient_dim()
        )));
    }
    let m = source.basis.t().dot(&target.basis);
    let x_a = source.basis.dot(&m);
    Ok(SaModel { source: source.clone(), target: target.clone(), m, x_a })
}

impl<T: Real> SaModel<T> {
    pub fn ambient_dim(&self) -> usize {
        self.source.ambient_dim()
    }

    pub fn target_dim(&self) -> usize {
        self.target.dim()
    }

    /// `‖X_S m − X_T‖_F²` for an arbitrary d_S×d_T matrix.
    pub fn objective(&self, m: ArrayView2<'_, T>) -> T {
        let r = self.source.basis.dot(&m) - &self.target.basis;
        r.iter().map(|v| *v * *v).sum()
    }

    /// Source sample in target-aligned coordinates: `(x − μ_S)ᵀ x_a`.
    pub fn map_source(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check(x.len())?;
        Ok(self.x_a.t().dot(&(&x - &self.source.mean)))
    }

    /// Target sample in target coordinates: `(x − μ_T)ᵀ X_T`.
    pub fn map_target(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check(x.len())?;
        Ok(self.target.basis.t().dot(&(&x - &self.target.mean)))
    }

    pub fn map_source_rows(&self, rows: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(rows.ncols())?;
        Ok((&rows - &self.source.mean).dot(&self.x_a))
    }

    pub fn map_target_rows(&self, rows: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(rows.ncols())?;
        Ok((&rows - &self.target.mean).dot(&self.target.basis))
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.ambient_dim() {
            return Err(Error::InvalidInput(format!(
                "vector of dimension {len} does not match model dimension {}",
                self.ambient_dim()
            )));
        }
        Ok(())
    }
}

/// Similarity between a source and a target sample (higher is closer).
pub fn sa_similarity<T: Real>(x_s: ArrayView1<'_, T>, x_t: ArrayView1<'_, T>, model: &SaModel<T>) -> Result<T> {
    Ok(model.map_source(x_s)?.dot(&model.map_target(x_t)?))
}

/// Euclidean distance in the target subspace (lower is closer).
pub fn esa_distance<T: Real>(x_s: ArrayView1<'_, T>, x_t: ArrayView1<'_, T>, model: &SaModel<T>) -> Result<T> {
    let a = model.map_source(x_s)?;
    let b = model.map_target(x_t)?;
    Ok(a.iter().zip(b.iter()).map(|(p, q)| (*p - *q) * (*p - *q)).sum::<T>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn span(v: Array2<f64>) -> Subspace<f64> {
        Subspace::from_basis(v)
    }

    #[test]
    fn identical_bases_give_identity() {
        let b = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let m = learn_sa(&span(b.clone()), &span(b)).unwrap();
        assert_eq!(m.m, Array2::<f64>::eye(2));
    }

    #[test]
    fn orthogonal_bases_give_zero() {
        let m = learn_sa(&span(array![[1.0], [0.0]]), &span(array![[0.0], [1.0]])).unwrap();
        assert_eq!(m.m[[0, 0]], 0.0);
        assert!(m.x_a.iter().all(|v| *v == 0.0));
        let s = sa_similarity(array![4.0, 1.0].view(), array![-2.0, 7.0].view(), &m).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn scalar_examples() {
        let e1 = span(array![[1.0], [0.0]]);
        let m = learn_sa(&e1, &e1).unwrap();
        let xs = array![2.0, 0.0];
        let xt = array![3.0, 5.0];
        assert_eq!(sa_similarity(xs.view(), xt.view(), &m).unwrap(), 6.0);
        assert_eq!(esa_distance(xs.view(), xt.view(), &m).unwrap(), 1.0);
        assert_eq!(esa_distance(array![3.0, -1.0].view(), xt.view(), &m).unwrap(), 0.0);
    }

    #[test]
    fn dimension_checks() {
        let a = span(array![[1.0], [0.0]]);
        let b = span(array![[1.0], [0.0], [0.0]]);
        assert!(matches!(learn_sa(&a, &b), Err(Error::InvalidInput(_))));
        let m = learn_sa(&a, &a).unwrap();
        assert!(sa_similarity(array![1.0].view(), array![1.0, 2.0].view(), &m).is_err());
        assert!(esa_distance(array![1.0, 0.0].view(), array![1.0].view(), &m).is_err());
    }
}
