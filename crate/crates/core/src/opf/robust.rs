//! Robust primal: the base network block plus a hatted copy driven by the
//! deviation vector `μ`, coupled through shared dispatch and the mismatch `ψ`.

use super::model::{add_block, res_reactive_bounds, AcopfVariables, BlockSpec};
use super::{build_deterministic, x_block, OpfError};
use crate::conic::{ConicProgram, ConicStatus};
use crate::ipm::{ConicBackend, SolverSettings};
use crate::netcase::NetworkCase;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Every parameter may deviate.
    Full,
    /// At most `Γ` parameters deviate.
    Gamma(usize),
}

/// Symmetric box `[−μ̄, μ̄]` around nominal injections; parameters are ordered
/// loads first, then RES units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    /// Per load, per unit.
    pub load_dev: Vec<f64>,
    /// Per RES unit, per unit.
    pub res_dev: Vec<f64>,
    pub budget: Budget,
    /// Bound on the split variables of the worst-case epigraph; derived from
    /// the data when absent.
    pub big_m: Option<f64>,
}

impl UncertaintySpec {
    /// Deviation bounds as fractions of nominal load and RES output.
    pub fn from_fractions(case: &NetworkCase, load_frac: f64, res_frac: f64) -> Result<Self, OpfError> {
        for (name, v) in [("load fraction", load_frac), ("RES fraction", res_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(OpfError::Parameter(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(Self {
            load_dev: case.loads.iter().map(|l| load_frac * l.p_d.abs()).collect(),
            res_dev: case.res_units.iter().map(|r| res_frac * r.p_r).collect(),
            budget: Budget::Full,
            big_m: None,
        })
    }

    pub fn none(case: &NetworkCase) -> Self {
        Self {
            load_dev: vec![0.0; case.loads.len()],
            res_dev: vec![0.0; case.res_units.len()],
            budget: Budget::Full,
            big_m: None,
        }
    }

    pub fn len(&self) -> usize {
        self.load_dev.len() + self.res_dev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `μ̄` in parameter order.
    pub fn bounds(&self) -> Vec<f64> {
        self.load_dev.iter().chain(&self.res_dev).copied().collect()
    }

    pub fn gamma(&self) -> usize {
        match self.budget {
            Budget::Full => self.len(),
            Budget::Gamma(g) => g,
        }
    }

    /// Copy with `μ̄_j = 0` wherever `keep[j]` is false.
    pub fn restricted(&self, keep: &[bool]) -> Self {
        let nl = self.load_dev.len();
        let mut out = self.clone();
        for (j, &k) in keep.iter().enumerate() {
            if !k {
                if j < nl {
                    out.load_dev[j] = 0.0;
                } else {
                    out.res_dev[j - nl] = 0.0;
                }
            }
        }
        out
    }

    pub fn validate(&self, case: &NetworkCase) -> Result<(), OpfError> {
        if self.load_dev.len() != case.loads.len() {
            return Err(OpfError::Dimension {
                expected: case.loads.len(),
                got: self.load_dev.len(),
            });
        }
        if self.res_dev.len() != case.res_units.len() {
            return Err(OpfError::Dimension {
                expected: case.res_units.len(),
                got: self.res_dev.len(),
            });
        }
        if self.bounds().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(OpfError::Parameter("deviation bounds must be finite and nonnegative".into()));
        }
        if self.gamma() > self.len() {
            return Err(OpfError::Parameter(format!("budget {} exceeds {} parameters", self.gamma(), self.len())));
        }
        if let Some(t) = self.big_m {
            if !(t > 0.0) {
                return Err(OpfError::Parameter("big-M must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Treatment of participation factors in the hatted block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Participation {
    /// Factors from the case, `ψ` a decision variable.
    Fixed,
    /// Factors are decision variables on the simplex, `ψ` frozen.
    Variable { psi: f64 },
}

/// How generator ramp limits are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RampPolicy {
    /// `fraction × p_max`.
    Capacity { fraction: f64 },
    /// `fraction × |P_g|` from a prior deterministic solve.
    BasePoint { fraction: f64 },
}

impl Default for RampPolicy {
    fn default() -> Self {
        RampPolicy::Capacity {
            fraction: crate::netcase::DEFAULT_RAMP_FRACTION,
        }
    }
}

pub fn apply_ramp_policy(
    case: &NetworkCase,
    policy: RampPolicy,
    eps_theta: f64,
    backend: &dyn ConicBackend,
    settings: &SolverSettings,
) -> Result<NetworkCase, OpfError> {
    let mut out = case.clone();
    match policy {
        RampPolicy::Capacity { fraction } => {
            check_fraction(fraction)?;
            for g in &mut out.generators {
                g.ramp_limit = fraction * g.p_max;
            }
        }
        RampPolicy::BasePoint { fraction } => {
            check_fraction(fraction)?;
            let model = build_deterministic(case, eps_theta)?;
            let sol = model.program.solve(backend, settings)?;
            if sol.status != ConicStatus::Optimal {
                return Err(crate::conic::ConicError::NotOptimal(sol.status).into());
            }
            for (k, g) in out.generators.iter_mut().enumerate() {
                g.ramp_limit = fraction * sol.x[model.vars.pg[k]].abs();
            }
        }
    }
    Ok(out)
}

fn check_fraction(f: f64) -> Result<(), OpfError> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(OpfError::Parameter("ramp fraction must be finite and nonnegative".into()));
    }
    Ok(())
}

/// The robust primal at `μ = 0` together with the blocks that carry `μ`.
#[derive(Debug, Clone)]
pub struct RobustBlocks {
    pub program: ConicProgram,
    pub base: AcopfVariables,
    pub hatted: AcopfVariables,
    /// Mismatch column; absent when it is frozen.
    pub psi: Option<usize>,
    /// Participation columns when they are decision variables.
    pub rho: Vec<usize>,
    /// Dispatch columns: `P_g` per generator, then `c_ii` per generator bus.
    pub x_cols: Vec<usize>,
    /// Per parameter, `(equality row, coefficient)` entries of `K_E`.
    pub k_e: Vec<Vec<(usize, f64)>>,
    /// `(equality row, ψ coefficient)` of the hatted active balances.
    pub h_e: Vec<(usize, f64)>,
    /// Per generator, `(lower, upper)` inequality rows of the ramp band.
    pub ramp_rows: Vec<Option<(usize, usize)>>,
    /// Reactive bound of each RES unit at nominal and at maximal output.
    pub e: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub mu_bar: Vec<f64>,
}

/// Dimensions of the blocks, for debugging output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustDims {
    pub variables: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub cones: usize,
    pub x_block: usize,
    pub parameters: usize,
    pub k_e_nonzeros: usize,
    pub h_e_nonzeros: usize,
    pub ramp_rows: usize,
}

impl RobustBlocks {
    pub fn num_params(&self) -> usize {
        self.k_e.len()
    }

    /// The robust primal with hatted balances shifted to `f − K_E μ`.
    pub fn program_at(&self, mu: &[f64]) -> Result<ConicProgram, OpfError> {
        if mu.len() != self.k_e.len() {
            return Err(OpfError::Dimension {
                expected: self.k_e.len(),
                got: mu.len(),
            });
        }
        let mut p = self.program.clone();
        for (col, &m) in self.k_e.iter().zip(mu) {
            for &(row, k) in col {
                p.eq_rows[row].rhs -= k * m;
            }
        }
        Ok(p)
    }

    /// Default Big-M, `10⁴ · max(1, ‖f‖∞, ‖e‖∞)` over right-hand sides and
    /// finite bounds.
    pub fn default_big_m(&self) -> f64 {
        let p = &self.program;
        let mut m = 1.0f64;
        for r in p.eq_rows.iter().chain(&p.ineq_rows) {
            m = m.max(r.rhs.abs());
        }
        for v in p.lower.iter().chain(&p.upper) {
            if v.is_finite() {
                m = m.max(v.abs());
            }
        }
        1e4 * m
    }

    pub fn dims(&self) -> RobustDims {
        RobustDims {
            variables: self.program.num_vars(),
            equalities: self.program.eq_rows.len(),
            inequalities: self.program.ineq_rows.len(),
            cones: self.program.socs.len(),
            x_block: self.x_cols.len(),
            parameters: self.k_e.len(),
            k_e_nonzeros: self.k_e.iter().map(Vec::len).sum(),
            h_e_nonzeros: self.h_e.len(),
            ramp_rows: 2 * self.ramp_rows.iter().flatten().count(),
        }
    }
}

pub fn assemble_robust_blocks(
    case: &NetworkCase,
    unc: &UncertaintySpec,
    eps_theta: f64,
    participation: Participation,
) -> Result<RobustBlocks, OpfError> {
    unc.validate(case)?;
    let e = res_reactive_bounds(case, &[])?;
    let e_hat = res_reactive_bounds(case, &unc.res_dev)?;
    let mut program = ConicProgram::new();
    let base = add_block(
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
        program.set_cost(base.pg[k], g.a);
    }
    program.offset = case.generators.iter().map(|g| g.b).sum();
    let hatted = add_block(
        &mut program,
        case,
        &BlockSpec {
            tag: "h.",
            shared: Some(&base),
            res_q_bound: &e_hat,
            eps_theta,
        },
    )?;

    // per generator, the column and coefficient carrying ρ_k ψ
    let (psi, rho, share): (Option<usize>, Vec<usize>, Vec<(usize, f64)>) = match participation {
        Participation::Fixed => {
            let psi = program.add_var("psi")?;
            let share = case.generators.iter().map(|g| (psi, g.participation)).collect();
            (Some(psi), Vec::new(), share)
        }
        Participation::Variable { psi } => {
            let rho: Vec<usize> = (0..case.generators.len())
                .map(|k| program.add_var_bounded(format!("rho[{k}]"), 0.0, 1.0))
                .collect::<Result<_, _>>()?;
            program.add_eq("rho_sum", rho.iter().map(|&j| (j, 1.0)).collect(), 1.0)?;
            let share = rho.iter().map(|&j| (j, psi)).collect();
            (None, rho, share)
        }
    };

    let gens_at = case.gens_at_bus();
    let mut h_e = Vec::new();
    for (i, gens) in gens_at.iter().enumerate() {
        let row = hatted.bal_p[i];
        let mut extra: Vec<(usize, f64)> = Vec::new();
        for &k in gens {
            let (col, c) = share[k];
            if c == 0.0 {
                continue;
            }
            match extra.iter_mut().find(|e| e.0 == col) {
                Some(e) => e.1 += c,
                None => extra.push((col, c)),
            }
        }
        for (col, c) in extra {
            program.eq_rows[row].coefs.push((col, c));
            if Some(col) == psi {
                h_e.push((row, c));
            }
        }
    }

    let mut ramp_rows = Vec::with_capacity(case.generators.len());
    for (k, g) in case.generators.iter().enumerate() {
        let (col, c) = share[k];
        let dispatch = if c == 0.0 {
            vec![(base.pg[k], 1.0)]
        } else {
            vec![(base.pg[k], 1.0), (col, c)]
        };
        program.add_le(format!("h.pg_hi[{k}]"), dispatch.clone(), g.p_max)?;
        program.add_ge(format!("h.pg_lo[{k}]"), dispatch, g.p_min)?;
        if c == 0.0 {
            ramp_rows.push(None);
        } else {
            let lo = program.add_ge(format!("ramp_lo[{k}]"), vec![(col, c)], -g.ramp_limit)?;
            let hi = program.add_le(format!("ramp_hi[{k}]"), vec![(col, c)], g.ramp_limit)?;
            ramp_rows.push(Some((lo, hi)));
        }
    }

    let loads_bus: Vec<usize> = case.loads.iter().map(|l| case.idx(l.bus)).collect();
    let mut k_e = Vec::with_capacity(unc.len());
    for (l, &i) in case.loads.iter().zip(&loads_bus) {
        let mut col = vec![(hatted.bal_p[i], -1.0)];
        if l.lr != 0.0 {
            col.push((hatted.bal_q[i], -l.lr));
        }
        k_e.push(col);
    }
    for r in &case.res_units {
        k_e.push(vec![(hatted.bal_p[case.idx(r.bus)], 1.0)]);
    }

    let x_cols = x_block(&base, case);
    Ok(RobustBlocks {
        program,
        base,
        hatted,
        psi,
        rho,
        x_cols,
        k_e,
        h_e,
        ramp_rows,
        e,
        e_hat,
        mu_bar: unc.bounds(),
    })
}

pub fn build_robust_primal(
    case: &NetworkCase,
    unc: &UncertaintySpec,
    mu: &[f64],
    eps_theta: f64,
) -> Result<(RobustBlocks, ConicProgram), OpfError> {
    if mu.len() != unc.len() {
        return Err(OpfError::Dimension {
            expected: unc.len(),
            got: mu.len(),
        });
    }
    let blocks = assemble_robust_blocks(case, unc, eps_theta, Participation::Fixed)?;
    let program = blocks.program_at(mu)?;
    Ok((blocks, program))
}
