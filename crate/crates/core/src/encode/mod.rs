//! Local-descriptor encoding: visual vocabularies, bag-of-words with
//! optional tf-idf, diagonal GMMs, improved Fisher vectors and PCA
//! whitening.

mod bow;
mod fisher;
mod gmm;
mod kmeans;
mod whiten;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use bow::{bow_histogram, compute_idf, encode_bow};
pub use fisher::{encode_fv, fisher_vector_raw};
pub use gmm::{train_gmm, train_gmm_with, GmmConfig, GmmFit, GmmModel};
pub use kmeans::{
    assign_all, distortion, train_codebook, train_codebook_with, Codebook, KMeansConfig, KMeansFit, KdForest,
    SearchMode,
};
pub use whiten::{whiten, whitening_scales};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Bow,
    BowTfIdf,
    FisherVector,
}

/// Encoded image: unit L2 norm unless all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector<T> {
    pub values: Array1<T>,
    pub scheme: Scheme,
    /// Set when there was nothing to encode (e.g. no descriptors).
    pub degenerate: bool,
}

pub(crate) fn l2_normalize<T: crate::Real>(v: &mut Array1<T>) {
    let n = v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
    if n > 0.0 {
        let n = T::lit(n);
        v.mapv_inplace(|x| x / n);
    }
}
