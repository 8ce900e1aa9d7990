//! Dataset ingestion and persistence: a line-delimited JSON manifest, a
//! binary feature store, a versioned model container and the on-disk
//! workspace layout.
//!
//! Every seeded sampling routine here draws from `Pcg64Mcg` (the `rand_pcg`
//! 128-bit MCG with XSL-RR output), the single generator used project-wide.

mod binio;
mod manifest;
mod model;
mod store;
mod workspace;

pub use manifest::{load_manifest, parse_manifest, save_manifest, Era, Manifest, ManifestEntry, ManifestSummary};
pub use model::{load_model, read_model, save_model, write_model, ModelKind, StoredModel, MODEL_MAGIC, MODEL_VERSION};
pub use store::{
    load_features, merge_distractors, read_text_matrix, sample_descriptors, save_features, FeatureStore, StoreHeader,
    StoreReader, StoreWriter, STORE_MAGIC, STORE_VERSION,
};
pub use workspace::Workspace;

/// Name of the canonical PRNG, recorded in file headers.
pub const PRNG: &str = "pcg64mcg";
