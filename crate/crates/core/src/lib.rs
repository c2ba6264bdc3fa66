//! Interactive re-fitting of word embeddings.
//!
//! The crate holds a versioned store of word vectors, cosine search, two
//! retrofitting modes, an interaction journal with undo and replay, and a
//! small PCA projection for before/after plots. Numeric code is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`.

pub mod error;
pub mod journal;
pub mod projection;
pub mod refit;
pub mod scalar;
pub mod similarity;
pub mod store;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use store::{EmbeddingSpace, Precision, Store, TextFormat, VectorUpdateSet, VersionId};

pub type Space = EmbeddingSpace<f64>;
pub type SpaceF32 = EmbeddingSpace<f32>;
pub type Spec = refit::AttractSpec<f64>;
pub type Params = refit::RefitParams<f64>;
pub type Outcome = refit::RefitOutcome<f64>;
pub type Workbench = journal::Workbench<f64>;
pub type Record = journal::InteractionRecord<f64>;
pub type Projection = projection::Projection2D<f64>;
