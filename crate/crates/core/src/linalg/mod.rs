//! Sparse matrix storage and the quasi-definite LDLᵀ used by the interior-point solver.

pub mod csc;
pub mod ldl;
pub mod ordering;

pub use csc::{dot, inf_norm, CscMatrix};
pub use ldl::{LdlError, LdlFactor};
