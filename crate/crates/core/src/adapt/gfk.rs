use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{thin_svd, Subspace};
use crate::scalar::Real;

/// Geodesic flow kernel `G = ∫₀¹ Φ(t)Φ(t)ᵀ dt` between two d-dim subspaces.
///
/// The domain means are kept so that callers can centre samples the same
/// way the subspaces were fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfkModel<T> {
    pub g: Array2<T>,
    pub d: usize,
    pub source_mean: Array1<T>,
    pub target_mean: Array1<T>,
}

/// Closed-form GFK from the principal angles between the two bases.
///
/// Subspaces with more than `d` components are truncated to their leading
/// `d`; `2d` may not exceed the ambient dimension.
pub fn learn_gfk<T: Real>(source: &Subspace<T>, target: &Subspace<T>, d: usize) -> Result<GfkModel<T>> {
    let dim = source.ambient_dim();
    if target.ambient_dim() != dim {
        return Err(Error::InvalidInput(format!(
            "source subspace lives in R^{dim} but target in R^{}",
            target.ambient_dim()
        )));
    }
    if d == 0 || d > source.dim() || d > target.dim() {
        return Err(Error::InvalidDimension(format!(
            "GFK dimension {d} not available from subspaces of dims {} and {}",
            source.dim(),
            target.dim()
        )));
    }
    if 2 * d > dim {
        return Err(Error::InvalidDimension(format!(
            "GFK dimension {d} leaves a source complement of rank {} < {d}",
            dim - d
        )));
    }
    let ps = source.basis.slice(ndarray::s![.., ..d]);
    let pt = target.basis.slice(ndarray::s![.., ..d]);
    let a = ps.t().dot(&pt);
    let svd = thin_svd(a.view())?;
    // Columns of `b` are the components of Pt·v_i orthogonal to the source
    // subspace; their norms are the sines of the principal angles.
    let b = pt.dot(&svd.v) - ps.dot(&a.dot(&svd.v));
    let a_dirs = ps.dot(&svd.u);
    let mut g = Array2::<T>::zeros((dim, dim));
    for i in 0..d {
        let ai = a_dirs.column(i);
        let bi = b.column(i);
        let sin = bi.dot(&bi).sqrt();
        let theta = sin.atan2(svd.sigma[i]);
        let (c_aa, c_ab, c_bb) = flow_coefficients(theta, sin);
        let ai2 = ai.insert_axis(Axis(1));
        let bi2 = bi.insert_axis(Axis(1));
        g.scaled_add(c_aa, &ai2.dot(&ai2.t()));
        let ab = ai2.dot(&bi2.t());
        g.scaled_add(c_ab, &ab);
        g.scaled_add(c_ab, &ab.t());
        g.scaled_add(c_bb, &bi2.dot(&bi2.t()));
    }
    // Exact symmetry regardless of rounding order.
    let g = (&g + &g.t()) * T::lit(0.5);
    Ok(GfkModel { g, d, source_mean: source.mean.clone(), target_mean: target.mean.clone() })
}

/// Coefficients of `a aᵀ`, `(a bᵀ + b aᵀ)` and `b bᵀ` where `b` is the
/// unnormalised complement direction (`‖b‖ = sin θ`). Small angles use the
/// analytic limits instead of dividing by vanishing quantities.
fn flow_coefficients<T: Real>(theta: T, sin: T) -> (T, T, T) {
    let th = theta.as_f64();
    let s = sin.as_f64();
    let (c_aa, c_ab, c_bb) = if th < 1e-4 {
        let t2 = th * th;
        (1.0 - t2 / 3.0, 0.5 - t2 / 12.0, 1.0 / 3.0 + 2.0 * t2 / 45.0)
    } else {
        let q = (2.0 * th).sin() / (4.0 * th);
        (0.5 + q, th.sin() / (2.0 * th), (0.5 - q) / (s * s))
    };
    (T::lit(c_aa), T::lit(c_ab), T::lit(c_bb))
}

impl<T: Real> GfkModel<T> {
    pub fn ambient_dim(&self) -> usize {
        self.g.nrows()
    }
}

/// `x_iᵀ G x_j`.
pub fn gfk_similarity<T: Real>(x_i: ArrayView1<'_, T>, x_j: ArrayView1<'_, T>, model: &GfkModel<T>) -> Result<T> {
    let n = model.ambient_dim();
    if x_i.len() != n || x_j.len() != n {
        return Err(Error::InvalidInput(format!(
            "vectors of dimension {} and {} do not match kernel dimension {n}",
            x_i.len(),
            x_j.len()
        )));
    }
    Ok(x_i.dot(&model.g.dot(&x_j)))
}
