//! Conic program representation, standard-form assembly, multiplier
//! bookkeeping and a generic Lagrangian dualizer.

mod dual;
mod program;
mod standard;

pub use dual::{dualize, eq_var_name, ineq_var_name, stat_row_name, DualProgram};
pub use program::{ConicProgram, Row, SocBlock};
pub use standard::{
    assemble_standard_form, extract_duals, translate_solution, Assembly, ConicSolution, ConicStatus, DualTable,
};

use crate::ipm::IpmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("invalid bounds for `{name}`: [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("solution is not optimal (status {0:?})")]
    NotOptimal(ConicStatus),
    #[error(transparent)]
    Solver(#[from] IpmError),
}
