//! Differentially private synthesis of relational databases whose relations
//! are linked by foreign keys.
//!
//! Referencing tuples are grouped under the tuple they reference, groups are
//! modelled through permutation marginals of bounded order, and every
//! attribute of every group member is sampled from a per-group-size Markov
//! random field.

pub mod error;
pub mod eval;
pub mod flat;
pub mod marginals;
pub mod mrf;
pub mod orchestrator;
pub mod privacy;
pub mod relational;
pub mod rng;
pub mod synthesis;
pub mod table;

pub use error::{Error, Result};
