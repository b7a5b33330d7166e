//! Explicit negative-weight adversary matrices for the element distinctness
//! function.
//!
//! The crate builds the stacked block matrix `Γ′` out of small factor
//! matrices of the Hamming association scheme, derives its Hadamard-masked,
//! surrogate and legality-restricted variants, and measures their spectral
//! norms with a matrix-free Lanczos solver that is cross-checked against a
//! dense oracle.
//!
//! Coordinates (input positions) are 0-based throughout the API: the
//! position called "1" in the usual notation is coordinate `0` here.
//! Symbols of the alphabet are `0..q`.

pub mod analysis;
pub mod builder;
pub mod error;
pub mod lemma;
pub mod plan;
pub mod scheme;
pub mod spectral;
mod tensor;

pub use analysis::{adversary_ratio, RatioOptions, RatioReport};
pub use builder::{
    default_alpha_profile, AlphaProfile, BlockOperator, CollisionPair, Limits, OperatorKind,
};
pub use error::{Error, Result};
pub use scheme::{FactorKind, FactorMatrix, FactorRole, InstanceParams, KroneckerTerm, Mask};
pub use spectral::{top_singular_value, DenseMatrix, LanczosOptions, LinearOperator, SpectralResult};
