//! Function-approximation embeddings of local descriptors.
//!
//! Every descriptor `x` is coded against learned anchors `C` with
//! coefficients `γ(x)` (`1^T γ = 1`), then mapped to
//! `φ(x) = [γ_j · triu((x - v_j)(x - v_j)^T)]_j`. Per-descriptor embeddings
//! are whitened, aggregated democratically into one image signature,
//! power-law and l2 normalized, and optionally rotated/truncated or
//! binarized with ITQ for search.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod binary;
pub mod coding;
pub mod descriptor;
pub mod embed;
pub mod error;
pub mod pipeline;
pub mod retrieval;
pub mod tensor;
pub mod timing;

pub use coding::{CodingModel, Coefficients, SolverParams, Variant};
pub use descriptor::DescriptorSet;
pub use error::{Error, Result};
pub use tensor::SymMatrix;
