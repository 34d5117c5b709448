//! Minimum conditional description length (MCDL) estimation for pairwise
//! Markov random fields.
//!
//! A subset `U` of a tractable shape is observed together with its
//! boundary; parameters are fit by minimizing the empirical conditional
//! cross entropy of `U` given the boundary, which is also the expected code
//! length of an arithmetic coder driven by the same conditionals.

pub mod cli;
pub mod codec;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod inference;
pub mod model;
pub mod mpl;
pub mod numeric;
pub mod oracle;
pub mod sampler;

pub use error::{Error, Result};
