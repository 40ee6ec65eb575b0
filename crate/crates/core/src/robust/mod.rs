//! Dual robust counterpart: construction, solution, recovery of robust
//! setpoints from multipliers, and the checks built on top of it.
//!
//! The worst case over the box `[−μ̄, μ̄]` enters the dual objective as
//! `Σ_j μ̄_j |R_j|` with `R = −K_Eᵀ y`. Each coordinate is written as an
//! epigraph `t_j ≤ μ̄_j R^σ_j` over a signed split `R_j = σ_j R^σ_j`,
//! `0 ≤ R^σ_j ≤ T`. The orientation `σ` is improved by flipping every
//! coordinate whose sign constraint binds, which keeps each solve conic.

mod checks;

pub use checks::{
    cross_check_strong_duality, exactness_check, refine_participation, select_budget, BudgetSelection,
    ExactnessObjective, ExactnessReport, ParticipationReport, StrongDualityReport,
};

use crate::conic::{dualize, ConicError, ConicProgram, ConicSolution, ConicStatus, DualProgram};
use crate::ipm::{ConicBackend, SolverSettings};
use crate::netcase::NetworkCase;
use crate::opf::{assemble_robust_blocks, OpfError, Participation, RobustBlocks, UncertaintySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `|R_j|` at or below this is treated as zero when reading `μ*`.
pub const SIGN_TOL: f64 = 1e-9;
/// Relative distance to `T` that counts as saturation.
pub const BIG_M_MARGIN: f64 = 1e-6;
/// Warning threshold of `min(R⁺, R⁻) / max(1, |R|)`.
pub const COMPLEMENTARITY_TOL: f64 = 1e-6;
/// Residual and relative-gap bound under which a stalled solve is accepted.
pub const STALLED_ACCEPT: f64 = 1e-7;
/// Relative objective increase required to accept an orientation change.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("{stage}: solver returned {status:?}")]
    NotOptimal { stage: &'static str, status: ConicStatus },
    #[error("split variable of parameter {param} reached the big-M bound {big_m}; re-solve with a larger big-M")]
    BigMSaturated { param: usize, big_m: f64 },
    #[error("orientation search did not settle within {0} rounds")]
    OrientationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcMode {
    Full,
    Budget,
}

#[derive(Debug, Clone)]
pub struct RobustSettings {
    pub eps_theta: f64,
    /// Settings of the dual counterpart solves.
    pub dual_solver: SolverSettings,
    /// Settings of the primal verification solves.
    pub primal_solver: SolverSettings,
    pub max_orientation_rounds: usize,
    /// Lower-bound multiplier of `R^σ_j` above which `σ_j` is flipped.
    pub flip_tol: f64,
}

impl Default for RobustSettings {
    fn default() -> Self {
        Self {
            eps_theta: crate::opf::DEFAULT_EPS_THETA,
            dual_solver: SolverSettings {
                tolerance: 1e-10,
                ..Default::default()
            },
            primal_solver: SolverSettings::default(),
            max_orientation_rounds: 50,
            flip_tol: 1e-7,
        }
    }
}

/// The dual counterpart with the bookkeeping needed for recovery.
#[derive(Debug, Clone)]
pub struct DualRcProgram {
    pub program: ConicProgram,
    pub dual: DualProgram,
    pub blocks: RobustBlocks,
    pub uncertainty: UncertaintySpec,
    pub mode: RcMode,
    /// Which parameters may deviate.
    pub alpha: Vec<bool>,
    /// `+1` or `−1` per parameter.
    pub orientation: Vec<f64>,
    pub big_m: f64,
    /// Column of `R_j`.
    pub r: Vec<usize>,
    /// Column of `R^σ_j`, present when `μ̄_j > 0`.
    pub r_split: Vec<Option<usize>>,
    /// Column of `t_j`, present when `μ̄_j > 0`.
    pub t: Vec<Option<usize>>,
    /// Rows whose multipliers are the dispatch block `x`.
    pub x_rows: Vec<usize>,
    /// Row whose multiplier is `ψ`.
    pub psi_row: usize,
}

/// Robust dispatch recovered from a dual counterpart solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSetpoints {
    pub pg: Vec<f64>,
    /// Generator bus indices, aligned with `cii` and `vm`.
    pub gen_buses: Vec<usize>,
    pub cii: Vec<f64>,
    pub vm: Vec<f64>,
    /// Scheduled RES reactive output.
    pub q_res: Vec<f64>,
    /// Participation factors used by the hatted block.
    pub participation: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// Worst-case contribution `μ̄_j |R_j|` per parameter.
    pub worst_case_terms: Vec<f64>,
    pub alpha: Vec<bool>,
    pub psi: f64,
    /// Realized mismatch between nominal operation and the worst case.
    pub psi_range: (f64, f64),
    pub objective: f64,
    pub solver_status: ConicStatus,
    /// Absolute gap reported by the solver.
    pub duality_gap: f64,
    /// `min(R⁺_j, R⁻_j)` per parameter.
    pub complementarity: Vec<f64>,
    pub complementarity_ok: bool,
    pub orientation_rounds: usize,
    pub uncertainty: UncertaintySpec,
    pub big_m: f64,
    /// Largest `R^σ_j / T`.
    pub big_m_usage: f64,
}

impl RobustSetpoints {
    /// `P_g` per generator then `c_ii` per generator bus.
    pub fn x(&self) -> Vec<f64> {
        self.pg.iter().chain(&self.cii).copied().collect()
    }
}

pub(crate) fn usable(sol: &ConicSolution) -> bool {
    match sol.status {
        ConicStatus::Optimal => true,
        ConicStatus::Stalled | ConicStatus::MaxIter => {
            let rel = (sol.objective - sol.dual_objective).abs() / sol.objective.abs().min(sol.dual_objective.abs()).max(1.0);
            sol.primal_residual <= STALLED_ACCEPT && sol.dual_residual <= STALLED_ACCEPT && rel <= STALLED_ACCEPT
        }
        _ => false,
    }
}

pub(crate) fn require(stage: &'static str, sol: &ConicSolution) -> Result<(), RobustError> {
    if usable(sol) {
        Ok(())
    } else {
        Err(RobustError::NotOptimal { stage, status: sol.status })
    }
}

fn initial_orientation(case: &NetworkCase) -> Vec<f64> {
    // loads stress the system upwards, RES downwards
    let mut s = vec![1.0; case.loads.len()];
    s.extend(std::iter::repeat(-1.0).take(case.res_units.len()));
    s
}

/// Builds the dual counterpart. In budget mode only parameters with a
/// positive `μ̄_j` whose `alpha` entry is set may deviate; `alpha` defaults to
/// all parameters in full mode.
pub fn build_dual_rc(
    case: &NetworkCase,
    unc: &UncertaintySpec,
    mode: RcMode,
    alpha: Option<&[bool]>,
    eps_theta: f64,
) -> Result<DualRcProgram, RobustError> {
    unc.validate(case)?;
    let alpha: Vec<bool> = match (mode, alpha) {
        (RcMode::Full, _) | (RcMode::Budget, None) => vec![true; unc.len()],
        (RcMode::Budget, Some(a)) => {
            if a.len() != unc.len() {
                return Err(OpfError::Dimension {
                    expected: unc.len(),
                    got: a.len(),
                }
                .into());
            }
            if a.iter().filter(|&&b| b).count() > unc.gamma() {
                return Err(OpfError::Parameter("more parameters selected than the budget allows".into()).into());
            }
            a.to_vec()
        }
    };
    let effective = unc.restricted(&alpha);
    let blocks = assemble_robust_blocks(case, &effective, eps_theta, Participation::Fixed)?;
    let big_m = effective.big_m.unwrap_or_else(|| blocks.default_big_m());
    let dual = dualize(&blocks.program)?;
    let x_rows = blocks.x_cols.iter().map(|&j| dual.stat_rows[j]).collect();
    let psi_row = dual.stat_rows[blocks.psi.expect("fixed participation has a mismatch column")];
    let mut rc = DualRcProgram {
        program: ConicProgram::new(),
        dual,
        blocks,
        uncertainty: effective,
        mode,
        alpha,
        orientation: initial_orientation(case),
        big_m,
        r: Vec::new(),
        r_split: Vec::new(),
        t: Vec::new(),
        x_rows,
        psi_row,
    };
    rc.rebuild()?;
    Ok(rc)
}

impl DualRcProgram {
    /// Re-derives the solved program from the dual and the current orientation.
    fn rebuild(&mut self) -> Result<(), RobustError> {
        let mut p = self.dual.program.clone();
        let mu_bar = self.blocks.mu_bar.clone();
        self.r.clear();
        self.r_split.clear();
        self.t.clear();
        for (j, col) in self.blocks.k_e.iter().enumerate() {
            let r = p.add_var(format!("R[{j}]"))?;
            let mut coefs = vec![(r, 1.0)];
            coefs.extend(col.iter().map(|&(row, k)| (self.dual.eq_vars[row], k)));
            p.add_eq(format!("R_def[{j}]"), coefs, 0.0)?;
            self.r.push(r);
            if mu_bar[j] > 0.0 {
                let sigma = self.orientation[j];
                let name = if sigma > 0.0 { "R+" } else { "R-" };
                let rs = p.add_var_bounded(format!("{name}[{j}]"), 0.0, self.big_m)?;
                p.add_eq(format!("R_split[{j}]"), vec![(rs, sigma), (r, -1.0)], 0.0)?;
                let t = p.add_var(format!("t[{j}]"))?;
                p.set_cost(t, -1.0);
                p.add_le(format!("epi[{j}]"), vec![(t, 1.0), (rs, -mu_bar[j])], 0.0)?;
                self.r_split.push(Some(rs));
                self.t.push(Some(t));
            } else {
                self.r_split.push(None);
                self.t.push(None);
            }
        }
        self.program = p;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.r.len()
    }

    /// Solves with the current orientation only.
    pub fn solve_once(&self, backend: &dyn ConicBackend, settings: &SolverSettings) -> Result<ConicSolution, RobustError> {
        let sol = self.program.solve(backend, settings)?;
        require("dual counterpart", &sol)?;
        Ok(sol)
    }
}

/// Solves the counterpart, improving the orientation until no sign
/// constraint binds, then reads the robust setpoints from the multipliers.
pub fn solve_rc_and_recover(
    mut rc: DualRcProgram,
    case: &NetworkCase,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<RobustSetpoints, RobustError> {
    let mut rounds = 1;
    let mut sol = rc.solve_once(backend, &settings.dual_solver)?;
    loop {
        let mut next = rc.orientation.clone();
        let mut flipped = false;
        for j in 0..rc.num_params() {
            if let Some(rs) = rc.r_split[j] {
                if sol.lower_duals[rs] > settings.flip_tol {
                    next[j] = -next[j];
                    flipped = true;
                }
            }
        }
        if !flipped {
            break;
        }
        if rounds >= settings.max_orientation_rounds {
            return Err(RobustError::OrientationLimit(rounds));
        }
        let mut cand = rc.clone();
        cand.orientation = next;
        cand.rebuild()?;
        let cand_sol = cand.solve_once(backend, &settings.dual_solver)?;
        rounds += 1;
        // a binding sign constraint at R_j = 0 need not leave room to improve
        let (old, new) = (rc.dual.primal_objective(&sol), cand.dual.primal_objective(&cand_sol));
        if new <= old + IMPROVEMENT_TOL * old.abs().max(1.0) {
            break;
        }
        rc = cand;
        sol = cand_sol;
    }
    recover(&rc, case, &sol, rounds, settings.flip_tol)
}

fn recover(
    rc: &DualRcProgram,
    case: &NetworkCase,
    sol: &ConicSolution,
    rounds: usize,
    bound_tol: f64,
) -> Result<RobustSetpoints, RobustError> {
    let mu_bar = &rc.blocks.mu_bar;
    let mut mu_star = vec![0.0; rc.num_params()];
    let mut complementarity = vec![0.0; rc.num_params()];
    let mut usage = 0.0f64;
    let mut terms = vec![0.0; rc.num_params()];
    for j in 0..rc.num_params() {
        let r = sol.x[rc.r[j]];
        if let Some(t) = rc.t[j] {
            terms[j] = sol.x[t];
        }
        if mu_bar[j] > 0.0 {
            mu_star[j] = if r < -SIGN_TOL { -mu_bar[j] } else { mu_bar[j] };
        }
        if let Some(rs) = rc.r_split[j] {
            let v = sol.x[rs];
            usage = usage.max(v / rc.big_m);
            // an interior-point solution stops short of a binding bound, so
            // its multiplier is checked too
            if v >= (1.0 - BIG_M_MARGIN) * rc.big_m || sol.upper_duals[rs] > bound_tol {
                return Err(RobustError::BigMSaturated { param: j, big_m: rc.big_m });
            }
            // only one side of the split is carried, so the other is zero
            complementarity[j] = 0.0;
        }
    }
    let x_full = rc.dual.recover_primal(sol);
    let nb = rc.blocks.base.pg.len();
    let x: Vec<f64> = rc.x_rows.iter().map(|&k| sol.eq_duals[k]).collect();
    let cii = x[nb..].to_vec();
    let psi = sol.eq_duals[rc.psi_row];
    let q_res = rc.blocks.base.qr.iter().map(|&j| x_full[j]).collect();
    let complementarity_ok = complementarity
        .iter()
        .zip(&rc.r)
        .all(|(&c, &r)| c <= COMPLEMENTARITY_TOL * sol.x[r].abs().max(1.0));
    Ok(RobustSetpoints {
        pg: x[..nb].to_vec(),
        gen_buses: case.generator_buses(),
        vm: cii.iter().map(|c: &f64| c.max(0.0).sqrt()).collect(),
        cii,
        q_res,
        participation: case.generators.iter().map(|g| g.participation).collect(),
        mu_star,
        worst_case_terms: terms,
        alpha: rc.alpha.clone(),
        psi,
        psi_range: (psi.min(0.0), psi.max(0.0)),
        objective: rc.dual.primal_objective(sol),
        solver_status: sol.status,
        duality_gap: sol.gap,
        complementarity,
        complementarity_ok,
        orientation_rounds: rounds,
        uncertainty: rc.uncertainty.clone(),
        big_m: rc.big_m,
        big_m_usage: usage,
    })
}

/// Full-box robust solve in one call.
pub fn solve_robust(
    case: &NetworkCase,
    unc: &UncertaintySpec,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<RobustSetpoints, RobustError> {
    match unc.budget {
        crate::opf::Budget::Full => {
            let rc = build_dual_rc(case, unc, RcMode::Full, None, settings.eps_theta)?;
            solve_rc_and_recover(rc, case, backend, settings)
        }
        crate::opf::Budget::Gamma(g) => Ok(select_budget(case, unc, g, backend, settings)?.setpoints),
    }
}

/// Setpoints of the deterministic convexified ACOPF in the same layout, for
/// validating a non-robust dispatch.
pub fn deterministic_setpoints(
    case: &NetworkCase,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<RobustSetpoints, RobustError> {
    let model = crate::opf::build_deterministic(case, settings.eps_theta)?;
    let sol = model.program.solve(backend, &settings.primal_solver)?;
    require("deterministic ACOPF", &sol)?;
    let op = model.vars.extract(&sol.x);
    let gen_buses = case.generator_buses();
    let cii: Vec<f64> = gen_buses.iter().map(|&i| op.cii[i]).collect();
    let n = case.loads.len() + case.res_units.len();
    Ok(RobustSetpoints {
        pg: op.pg,
        vm: cii.iter().map(|c| c.max(0.0).sqrt()).collect(),
        gen_buses,
        cii,
        q_res: op.qr,
        participation: case.generators.iter().map(|g| g.participation).collect(),
        mu_star: vec![0.0; n],
        worst_case_terms: vec![0.0; n],
        alpha: vec![false; n],
        psi: 0.0,
        psi_range: (0.0, 0.0),
        objective: sol.objective,
        solver_status: sol.status,
        duality_gap: sol.gap,
        complementarity: vec![0.0; n],
        complementarity_ok: true,
        orientation_rounds: 0,
        uncertainty: UncertaintySpec::none(case),
        big_m: 0.0,
        big_m_usage: 0.0,
    })
}

/// Summary for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustReport {
    pub objective: f64,
    pub mu_star: Vec<f64>,
    pub alpha: Vec<bool>,
    pub duality_gap: f64,
    pub complementarity: Vec<f64>,
    pub complementarity_ok: bool,
    pub strong_duality: Option<StrongDualityReport>,
    pub exactness: Option<ExactnessReport>,
}

impl RobustReport {
    pub fn new(sp: &RobustSetpoints) -> Self {
        Self {
            objective: sp.objective,
            mu_star: sp.mu_star.clone(),
            alpha: sp.alpha.clone(),
            duality_gap: sp.duality_gap,
            complementarity: sp.complementarity.clone(),
            complementarity_ok: sp.complementarity_ok,
            strong_duality: None,
            exactness: None,
        }
    }
}
