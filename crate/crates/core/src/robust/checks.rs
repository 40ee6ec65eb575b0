//! Verification and refinement solves around a recovered robust dispatch.

use super::{build_dual_rc, require, solve_rc_and_recover, RcMode, RobustError, RobustSetpoints, RobustSettings};
use crate::ipm::ConicBackend;
use crate::netcase::NetworkCase;
use crate::opf::{assemble_robust_blocks, Participation, UncertaintySpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongDualityReport {
    pub objective_rc: f64,
    pub objective_primal: f64,
    /// `|objective_rc − objective_primal| / |objective_primal|`.
    pub rel_gap: f64,
    /// Largest `|x*_dual − x*_primal|` over the dispatch block.
    pub max_setpoint_diff: f64,
    pub psi_primal: f64,
}

/// Re-solves the robust primal at `μ*` and compares it with the counterpart.
pub fn cross_check_strong_duality(
    case: &NetworkCase,
    sp: &RobustSetpoints,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<StrongDualityReport, RobustError> {
    let blocks = assemble_robust_blocks(case, &sp.uncertainty, settings.eps_theta, Participation::Fixed)?;
    let program = blocks.program_at(&sp.mu_star)?;
    let sol = program.solve(backend, &settings.primal_solver)?;
    require("robust primal at the worst case", &sol)?;
    let x_primal: Vec<f64> = blocks.x_cols.iter().map(|&j| sol.x[j]).collect();
    let max_setpoint_diff = sp
        .x()
        .iter()
        .zip(&x_primal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(StrongDualityReport {
        objective_rc: sp.objective,
        objective_primal: sol.objective,
        rel_gap: (sp.objective - sol.objective).abs() / sol.objective.abs().max(f64::MIN_POSITIVE),
        max_setpoint_diff,
        psi_primal: blocks.psi.map_or(0.0, |j| sol.x[j]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSelection {
    pub gamma: usize,
    /// Selected parameters as 0/1.
    pub alpha: Vec<f64>,
    /// Worst-case contributions from the full-box solve, when one was needed.
    pub scores: Option<Vec<f64>>,
    pub setpoints: RobustSetpoints,
}

/// Two-phase budget heuristic: rank parameters by their worst-case
/// contribution in the full-box counterpart, keep the top `Γ` and re-solve.
pub fn select_budget(
    case: &NetworkCase,
    unc: &UncertaintySpec,
    gamma: usize,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<BudgetSelection, RobustError> {
    let n = unc.len();
    if gamma > n {
        return Err(crate::opf::OpfError::Parameter(format!("budget {gamma} exceeds {n} parameters")).into());
    }
    let mut unc = unc.clone();
    unc.budget = crate::opf::Budget::Gamma(gamma);
    let mu_bar = unc.bounds();
    let active = mu_bar.iter().filter(|&&m| m > 0.0).count();
    let (keep, scores) = if gamma >= active {
        (mu_bar.iter().map(|&m| m > 0.0).collect::<Vec<_>>(), None)
    } else if gamma == 0 {
        (vec![false; n], None)
    } else {
        let mut full = unc.clone();
        full.budget = crate::opf::Budget::Full;
        let rc = build_dual_rc(case, &full, RcMode::Full, None, settings.eps_theta)?;
        let sp = solve_rc_and_recover(rc, case, backend, settings)?;
        let scores: Vec<f64> = sp.worst_case_terms.iter().map(|t| t.abs()).collect();
        let mut order: Vec<usize> = (0..n).filter(|&j| mu_bar[j] > 0.0).collect();
        // stable sort keeps index order among ties
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut keep = vec![false; n];
        for &j in order.iter().take(gamma) {
            keep[j] = true;
        }
        (keep, Some(scores))
    };
    let rc = build_dual_rc(case, &unc, RcMode::Budget, Some(&keep), settings.eps_theta)?;
    let setpoints = solve_rc_and_recover(rc, case, backend, settings)?;
    Ok(BudgetSelection {
        gamma,
        alpha: keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
        scores,
        setpoints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationReport {
    pub psi: f64,
    pub rho: Vec<f64>,
    pub objective_fixed: f64,
    pub objective_variable: f64,
    /// Relative reduction of the objective, percent.
    pub reduction_pct: f64,
}

/// Re-solves the robust primal at `(μ*, ψ*)` with participation factors as
/// decision variables on the simplex.
pub fn refine_participation(
    case: &NetworkCase,
    sp: &RobustSetpoints,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<ParticipationReport, RobustError> {
    let fixed = assemble_robust_blocks(case, &sp.uncertainty, settings.eps_theta, Participation::Fixed)?;
    let fixed_sol = fixed.program_at(&sp.mu_star)?.solve(backend, &settings.primal_solver)?;
    require("robust primal with fixed participation", &fixed_sol)?;
    // ψ is not unique when the worst-case block has slack in its losses; the
    // value from the paired primal solve is consistent with its dispatch
    let psi = fixed.psi.map_or(sp.psi, |j| fixed_sol.x[j]);
    let blocks = assemble_robust_blocks(case, &sp.uncertainty, settings.eps_theta, Participation::Variable { psi })?;
    let sol = blocks.program_at(&sp.mu_star)?.solve(backend, &settings.primal_solver)?;
    require("robust primal with variable participation", &sol)?;
    let objective_fixed = fixed_sol.objective;
    let objective_variable = sol.objective;
    Ok(ParticipationReport {
        psi,
        rho: blocks.rho.iter().map(|&j| sol.x[j]).collect(),
        objective_fixed,
        objective_variable,
        reduction_pct: 100.0 * (objective_fixed - objective_variable) / objective_fixed.abs().max(f64::MIN_POSITIVE),
    })
}

/// Direction of the reactive objective in the exactness problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactnessObjective {
    MaxReactive,
    #[default]
    MinReactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    pub objective: ExactnessObjective,
    /// Largest `|c_ij² + s_ij² − c_ii c_jj|` in the nominal block.
    pub cone_residual: f64,
    /// Largest `|θ_ij − atan(s_ij / c_ij)|` in the nominal block.
    pub angle_residual: f64,
    /// The same residuals in the worst-case block.
    pub hatted_cone_residual: f64,
    pub hatted_angle_residual: f64,
    pub total_reactive: f64,
}

/// Solves the reactive feasibility problem with the dispatch block fixed at
/// the robust setpoints and reports how far the relaxation is from tight.
pub fn exactness_check(
    case: &NetworkCase,
    sp: &RobustSetpoints,
    objective: ExactnessObjective,
    backend: &dyn ConicBackend,
    settings: &RobustSettings,
) -> Result<ExactnessReport, RobustError> {
    let blocks = assemble_robust_blocks(case, &sp.uncertainty, settings.eps_theta, Participation::Fixed)?;
    let mut program = blocks.program_at(&sp.mu_star)?;
    program.objective.iter_mut().for_each(|c| *c = 0.0);
    program.offset = 0.0;
    let sign = match objective {
        ExactnessObjective::MaxReactive => -1.0,
        ExactnessObjective::MinReactive => 1.0,
    };
    for &j in blocks.base.qg.iter().chain(&blocks.hatted.qg) {
        program.set_cost(j, sign);
    }
    for (k, (&j, v)) in blocks.x_cols.iter().zip(sp.x()).enumerate() {
        program.add_eq(format!("fix[{k}]"), vec![(j, 1.0)], v)?;
    }
    let sol = program.solve(backend, &settings.primal_solver)?;
    require("exactness problem", &sol)?;
    let base = blocks.base.extract(&sol.x);
    let hatted = blocks.hatted.extract(&sol.x);
    Ok(ExactnessReport {
        objective,
        cone_residual: base.cone_residual(case),
        angle_residual: base.angle_residual(case),
        hatted_cone_residual: hatted.cone_residual(case),
        hatted_angle_residual: hatted.angle_residual(case),
        total_reactive: base.qg.iter().sum(),
    })
}
