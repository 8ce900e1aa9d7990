//! Subspace domain adaptation: subspace alignment (similarity and
//! Euclidean variants), the geodesic flow kernel, and dimension selection.

mod gfk;
mod sa;
mod select;

use serde::{Deserialize, Serialize};

pub use gfk::{gfk_similarity, learn_gfk, GfkModel};
pub use sa::{esa_distance, learn_sa, sa_similarity, SaModel};
pub use select::{select_dim_sa, select_dim_sdm, subspace_disagreement, DEFAULT_D_MAX};

/// Any learned source→target alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlignmentModel<T> {
    Sa(SaModel<T>),
    Gfk(GfkModel<T>),
}
