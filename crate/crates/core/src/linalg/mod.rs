//! Dense linear algebra: eigendecomposition, small SVD, PCA subspaces and
//! intrinsic-dimensionality estimation.

mod dim;
mod eigen;
mod pca;
mod svd;

pub use dim::{
    estimate_dim_eig, estimate_dim_fractal, estimate_dim_fractal_rows, estimate_dim_mle, estimate_dim_mle_rows,
    DimEstimate, DimMethod, FractalMethod, FractalParams,
};
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use pca::{fit_pca, fit_pca_rows, fix_signs, Subspace};
pub use svd::{orthonormalize, singular_values, thin_svd, Svd};
