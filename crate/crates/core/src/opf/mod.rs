//! Builders for the convexified ACOPF and its robust primal counterpart.

mod model;
mod robust;

pub use model::{AcopfVariables, OperatingPoint};
pub use robust::{
    apply_ramp_policy, assemble_robust_blocks, build_robust_primal, Budget, Participation, RampPolicy, RobustBlocks,
    RobustDims, UncertaintySpec,
};

use crate::conic::{ConicError, ConicProgram};
use crate::netcase::{CaseError, NetworkCase};
use model::{add_block, res_reactive_bounds, BlockSpec};
use thiserror::Error;

/// Default half-width of the arctangent band, radians.
pub const DEFAULT_EPS_THETA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("RES unit {unit} at bus {bus}: output plus deviation exceeds its rating")]
    ResRating { unit: usize, bus: usize },
    #[error("deviation vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Deterministic convexified ACOPF with its column map.
#[derive(Debug, Clone)]
pub struct DeterministicModel {
    pub program: ConicProgram,
    pub vars: AcopfVariables,
}

impl DeterministicModel {
    /// Columns of the dispatch block: `P_g` per generator, then `c_ii` per
    /// generator bus.
    pub fn x_cols(&self, case: &NetworkCase) -> Vec<usize> {
        x_block(&self.vars, case)
    }
}

pub(crate) fn x_block(vars: &AcopfVariables, case: &NetworkCase) -> Vec<usize> {
    let mut cols = vars.pg.clone();
    cols.extend(case.generator_buses().into_iter().map(|i| vars.cii[i]));
    cols
}

pub fn build_deterministic(case: &NetworkCase, eps_theta: f64) -> Result<DeterministicModel, OpfError> {
    let mut program = ConicProgram::new();
    let e = res_reactive_bounds(case, &[])?;
    let vars = add_block(
        &mut program,
        case,
        &BlockSpec {
            tag: "",
            shared: None,
            res_q_bound: &e,
            eps_theta,
        },
    )?;
    for (k, g) in case.generators.iter().enumerate() {
        program.set_cost(vars.pg[k], g.a);
    }
    program.offset = case.generators.iter().map(|g| g.b).sum();
    Ok(DeterministicModel { program, vars })
}
