//! Multi-task phase retrieval with missing data.
//!
//! This crate builds InstaHide-style synthetic datasets from a Gaussian
//! generative model and implements a full recovery attack against them:
//! given `m` synthetic vectors `y_i = |X w_i|` and the public columns of
//! `X`, it reconstructs `k_priv + 2` private columns of `X` exactly, up to
//! the per-pixel sign that is information-theoretically unidentifiable.
//!
//! The attack runs in stages, each usable on its own:
//!
//! * [`model`] — the generative model: image matrices, selection vectors,
//!   synthetic datasets, and ground-truth oracles for testing.
//! * [`public`] — per-image recovery of the public support of a selection
//!   vector (sparse phase retrieval with missing coordinates).
//! * [`gram`] — exact recovery of the integer-scaled Gram matrix of the
//!   selection vectors via folded-Gaussian covariance inversion.
//! * [`floral`] — locating a principal submatrix of the Gram matrix whose
//!   rows realize all k-subsets of a (k+2)-set, and labeling its rows.
//! * [`signsolve`] — solving the per-pixel piecewise-linear system
//!   `|sum_{i in F(j)} a_i| = v_j` up to a global sign.
//! * [`pipeline`] — the end-to-end attack and its evaluation harness.

pub mod error;
pub mod floral;
pub mod gram;
pub mod model;
pub mod pipeline;
pub mod public;
pub mod signsolve;

pub use error::{Error, Result};
