//! Cross-era location retrieval: subspace domain adaptation (GFK, SA, ESA),
//! intrinsic-dimensionality estimation, BOW / Fisher-vector encoding,
//! nearest-neighbour protocols and an interactive relevance-feedback loop.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file name the common concrete instantiations.

pub mod adapt;
pub mod corpus;
pub mod encode;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod matrix;
pub mod retrieve;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{Domain, FeatureMatrix};
pub use scalar::Real;

pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type Subspace32 = linalg::Subspace<f32>;
pub type Subspace64 = linalg::Subspace<f64>;
pub type SaModel32 = adapt::SaModel<f32>;
pub type SaModel64 = adapt::SaModel<f64>;
pub type GfkModel64 = adapt::GfkModel<f64>;
pub type Codebook32 = encode::Codebook<f32>;
pub type GmmModel32 = encode::GmmModel<f32>;
pub type GmmModel64 = encode::GmmModel<f64>;
