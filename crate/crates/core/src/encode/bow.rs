use ndarray::{Array1, ArrayView2};

use super::{l2_normalize, Codebook, EncodedVector, Scheme};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Hard-assignment word counts.
pub fn bow_histogram<T: Real>(descriptors: ArrayView2<'_, T>, cb: &Codebook<T>) -> Result<Array1<T>> {
    if descriptors.ncols() != cb.dim() {
        return Err(Error::InvalidInput(format!(
            "descriptor dimension {} does not match codebook dimension {}",
            descriptors.ncols(),
            cb.dim()
        )));
    }
    let mut h = Array1::<T>::zeros(cb.k());
    for row in descriptors.rows() {
        h[cb.assign(row)] += T::one();
    }
    Ok(h)
}

/// Counts (optionally × idf), element-wise square root, L2 normalisation.
pub fn encode_bow<T: Real>(
    descriptors: ArrayView2<'_, T>,
    cb: &Codebook<T>,
    idf: Option<&Array1<T>>,
) -> Result<EncodedVector<T>> {
    let mut h = bow_histogram(descriptors, cb)?;
    if let Some(w) = idf {
        if w.len() != cb.k() {
            return Err(Error::InvalidInput(format!("idf has {} entries for {} words", w.len(), cb.k())));
        }
        h = h * w;
    }
    h.mapv_inplace(|v| v.max(T::zero()).sqrt());
    let degenerate = h.iter().all(|v| *v == T::zero());
    l2_normalize(&mut h);
    Ok(EncodedVector { values: h, scheme: if idf.is_some() { Scheme::BowTfIdf } else { Scheme::Bow }, degenerate })
}

/// `idf_t = ln(N / n_t)`, with `idf_t = 0` for words that never occur.
pub fn compute_idf<T: Real>(histograms: &[Array1<T>]) -> Result<Array1<T>> {
    let first = histograms.first().ok_or_else(|| Error::InvalidInput("empty corpus".into()))?;
    let k = first.len();
    if histograms.iter().any(|h| h.len() != k) {
        return Err(Error::InvalidInput("histograms differ in length".into()));
    }
    let n = histograms.len() as f64;
    let mut df = vec![0usize; k];
    for h in histograms {
        for (t, v) in h.iter().enumerate() {
            if *v > T::zero() {
                df[t] += 1;
            }
        }
    }
    Ok(df.iter().map(|&c| if c == 0 { T::zero() } else { T::lit((n / c as f64).ln()) }).collect())
}
