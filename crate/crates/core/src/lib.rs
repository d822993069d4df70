//! Scientific claim verification.
//!
//! Retrieves candidate abstracts for a claim with BM25, jointly predicts a
//! veracity label and rationale sentences from one encoding of the claim,
//! title and full abstract, and scores predictions under the abstract-level
//! and sentence-level protocols.

pub mod data;
mod error;
pub mod eval;
pub mod retrieval;
pub mod synthetic;
pub mod text;
pub mod training;
pub mod verifier;
pub mod weak;

pub use error::{Error, Result};
