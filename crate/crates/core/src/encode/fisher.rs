use ndarray::{Array1, ArrayView2};

use super::{l2_normalize, EncodedVector, GmmModel, Scheme};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Unnormalised Fisher vector: for each component k, the mean-gradient
/// block followed by the variance-gradient block (2·K·d values).
pub fn fisher_vector_raw<T: Real>(descriptors: ArrayView2<'_, T>, gmm: &GmmModel<T>) -> Result<Array1<f64>> {
    let (k, d) = gmm.means.dim();
    if descriptors.ncols() != d {
        return Err(Error::InvalidInput(format!(
            "descriptor dimension {} does not match GMM dimension {d}",
            descriptors.ncols()
        )));
    }
    let n = descriptors.nrows();
    let mut fv = Array1::<f64>::zeros(2 * k * d);
    if n == 0 {
        return Ok(fv);
    }
    let (post, _) = gmm.posteriors(descriptors);
    for c in 0..k {
        let w = gmm.weights[c].as_f64();
        let mu_scale = 1.0 / (n as f64 * w.sqrt());
        let var_scale = 1.0 / (n as f64 * (2.0 * w).sqrt());
        let base = 2 * c * d;
        for (i, row) in descriptors.rows().into_iter().enumerate() {
            let g = post[[i, c]];
            if g == 0.0 {
                continue;
            }
            for j in 0..d {
                let z = (row[j].as_f64() - gmm.means[[c, j]].as_f64()) / gmm.variances[[c, j]].as_f64().sqrt();
                fv[base + j] += g * z;
                fv[base + d + j] += g * (z * z - 1.0);
            }
        }
        for j in 0..d {
            fv[base + j] *= mu_scale;
            fv[base + d + j] *= var_scale;
        }
    }
    Ok(fv)
}

/// Improved Fisher vector: signed square root, then L2 normalisation.
/// An empty descriptor set yields an all-zero vector flagged degenerate.
pub fn encode_fv<T: Real>(descriptors: ArrayView2<'_, T>, gmm: &GmmModel<T>) -> Result<EncodedVector<T>> {
    let raw = fisher_vector_raw(descriptors, gmm)?;
    let mut v: Array1<T> = raw.mapv(|x| T::lit(x.signum() * x.abs().sqrt()));
    let degenerate = descriptors.nrows() == 0 || v.iter().all(|x| *x == T::zero());
    l2_normalize(&mut v);
    Ok(EncodedVector { values: v, scheme: Scheme::FisherVector, degenerate })
}
