use super::program::ConicProgram;
use super::ConicError;
use crate::ipm::{Cone, ConicBackend, IpmSolution, IpmStatus, IterationRecord, SolverSettings, StandardForm};
use crate::linalg::CscMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Standard-form image of a [`ConicProgram`] plus the row bookkeeping needed
/// to translate solutions back.
///
/// Rows are ordered: equalities (zero cone), inequalities, finite lower bounds,
/// finite upper bounds (nonnegative orthant), then one block per cone with the
/// head first.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub form: StandardForm,
    pub n_eq: usize,
    pub n_ineq: usize,
    /// Columns with a finite lower bound, in row order.
    pub lower_cols: Vec<usize>,
    /// Columns with a finite upper bound, in row order.
    pub upper_cols: Vec<usize>,
    pub cone_offset: usize,
}

pub fn assemble_standard_form(p: &ConicProgram) -> Result<Assembly, ConicError> {
    let n = p.num_vars();
    if p.objective.len() != n || p.lower.len() != n || p.upper.len() != n {
        return Err(ConicError::Dimension("objective/bounds length differs from variable count".into()));
    }
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut row = 0usize;
    for r in p.eq_rows.iter().chain(&p.ineq_rows) {
        for &(j, v) in &r.coefs {
            if j >= n {
                return Err(ConicError::Dimension(format!("row {} references column {j}", r.name)));
            }
            trip.push((row, j, v));
        }
        b.push(r.rhs);
        row += 1;
    }
    let lower_cols: Vec<usize> = (0..n).filter(|&j| p.lower[j].is_finite()).collect();
    let upper_cols: Vec<usize> = (0..n).filter(|&j| p.upper[j].is_finite()).collect();
    for &j in &lower_cols {
        trip.push((row, j, -1.0));
        b.push(-p.lower[j]);
        row += 1;
    }
    for &j in &upper_cols {
        trip.push((row, j, 1.0));
        b.push(p.upper[j]);
        row += 1;
    }
    let cone_offset = row;
    let mut cones = Vec::new();
    if !p.eq_rows.is_empty() {
        cones.push(Cone::Zero(p.eq_rows.len()));
    }
    let n_nonneg = p.ineq_rows.len() + lower_cols.len() + upper_cols.len();
    if n_nonneg > 0 {
        cones.push(Cone::NonNeg(n_nonneg));
    }
    for c in &p.socs {
        for &j in std::iter::once(&c.head).chain(&c.tail) {
            if j >= n {
                return Err(ConicError::Dimension(format!("cone {} references column {j}", c.name)));
            }
            trip.push((row, j, -1.0));
            b.push(0.0);
            row += 1;
        }
        cones.push(Cone::Soc(1 + c.tail.len()));
    }
    let form = StandardForm {
        q: p.objective.clone(),
        a: CscMatrix::from_triplets(row, n, &trip),
        b,
        cones,
    };
    Ok(Assembly {
        form,
        n_eq: p.eq_rows.len(),
        n_ineq: p.ineq_rows.len(),
        lower_cols,
        upper_cols,
        cone_offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    Stalled,
}

impl From<IpmStatus> for ConicStatus {
    fn from(s: IpmStatus) -> Self {
        match s {
            IpmStatus::Optimal => ConicStatus::Optimal,
            IpmStatus::PrimalInfeasible => ConicStatus::Infeasible,
            IpmStatus::DualInfeasible => ConicStatus::Unbounded,
            IpmStatus::MaxIterations => ConicStatus::MaxIter,
            IpmStatus::Stalled => ConicStatus::Stalled,
        }
    }
}

/// Solution in model symbols.
///
/// Sign conventions: `eq_duals` are shadow prices `∂ objective / ∂ rhs`
/// (unrestricted); `ineq_duals`, `lower_duals` and `upper_duals` are
/// nonnegative; `cone_duals[k]` lies in the k-th cone, head first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    /// Indexed by column; zero where the bound is infinite.
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    pub cone_duals: Vec<Vec<f64>>,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub log: Vec<IterationRecord>,
}

pub fn translate_solution(p: &ConicProgram, asm: &Assembly, sol: IpmSolution) -> ConicSolution {
    let n = p.num_vars();
    let z = &sol.z;
    let eq_duals: Vec<f64> = z[..asm.n_eq].iter().map(|v| -v).collect();
    let ineq_duals = z[asm.n_eq..asm.n_eq + asm.n_ineq].to_vec();
    let mut lower_duals = vec![0.0; n];
    let mut upper_duals = vec![0.0; n];
    let mut r = asm.n_eq + asm.n_ineq;
    for &j in &asm.lower_cols {
        lower_duals[j] = z[r];
        r += 1;
    }
    for &j in &asm.upper_cols {
        upper_duals[j] = z[r];
        r += 1;
    }
    let mut cone_duals = Vec::with_capacity(p.socs.len());
    let mut off = asm.cone_offset;
    for c in &p.socs {
        let d = 1 + c.tail.len();
        cone_duals.push(z[off..off + d].to_vec());
        off += d;
    }
    ConicSolution {
        status: sol.status.into(),
        objective: sol.primal_objective + p.offset,
        dual_objective: sol.dual_objective + p.offset,
        x: sol.x,
        eq_duals,
        ineq_duals,
        lower_duals,
        upper_duals,
        cone_duals,
        gap: sol.gap,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        iterations: sol.iterations,
        log: sol.log,
    }
}

impl ConicProgram {
    pub fn solve(&self, backend: &dyn ConicBackend, settings: &SolverSettings) -> Result<ConicSolution, ConicError> {
        let asm = assemble_standard_form(self)?;
        let sol = backend.solve(&asm.form, settings)?;
        Ok(translate_solution(self, &asm, sol))
    }
}

/// Multipliers keyed by constraint name.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct DualTable {
    pub equalities: BTreeMap<String, f64>,
    pub inequalities: BTreeMap<String, f64>,
    pub cones: BTreeMap<String, Vec<f64>>,
}

impl DualTable {
    pub fn eq(&self, name: &str) -> Result<f64, ConicError> {
        self.equalities
            .get(name)
            .copied()
            .ok_or_else(|| ConicError::UnknownName(name.to_string()))
    }

    pub fn ineq(&self, name: &str) -> Result<f64, ConicError> {
        self.inequalities
            .get(name)
            .copied()
            .ok_or_else(|| ConicError::UnknownName(name.to_string()))
    }
}

pub fn extract_duals(p: &ConicProgram, sol: &ConicSolution) -> Result<DualTable, ConicError> {
    if sol.status != ConicStatus::Optimal {
        return Err(ConicError::NotOptimal(sol.status));
    }
    Ok(DualTable {
        equalities: p.eq_rows.iter().zip(&sol.eq_duals).map(|(r, v)| (r.name.clone(), *v)).collect(),
        inequalities: p
            .ineq_rows
            .iter()
            .zip(&sol.ineq_duals)
            .map(|(r, v)| (r.name.clone(), *v))
            .collect(),
        cones: p.socs.iter().zip(&sol.cone_duals).map(|(c, v)| (c.name.clone(), v.clone())).collect(),
    })
}
