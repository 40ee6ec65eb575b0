//! Lagrangian dual of a [`ConicProgram`], itself expressed as a
//! [`ConicProgram`].
//!
//! With `L = c'x + d − y'(Ex − f) + w'(Gx − h) − Σ λ_k'x[K_k]`, `w ≥ 0` and
//! `λ_k` in the (self-dual) second-order cone, the dual is
//!
//! ```text
//! maximize    d + f'y − h'w
//! subject to  −E'y + G'w − Σ P_k'λ_k = −c      (one row per primal column)
//! ```
//!
//! It is stored as a minimization of the negated objective. Bounds of the
//! primal are treated as inequality rows. The shadow price of the stationarity
//! row of column `j` equals the primal value `x_j`.

use super::program::ConicProgram;
use super::standard::ConicSolution;
use super::ConicError;

#[derive(Debug, Clone)]
pub struct DualProgram {
    pub program: ConicProgram,
    /// Stationarity row per primal column.
    pub stat_rows: Vec<usize>,
    /// Dual variable per primal equality row.
    pub eq_vars: Vec<usize>,
    /// Dual variable per primal inequality row.
    pub ineq_vars: Vec<usize>,
    pub lower_vars: Vec<Option<usize>>,
    pub upper_vars: Vec<Option<usize>>,
    pub cone_vars: Vec<Vec<usize>>,
}

pub fn stat_row_name(col: &str) -> String {
    format!("stat[{col}]")
}

pub fn eq_var_name(row: &str) -> String {
    format!("y[{row}]")
}

pub fn ineq_var_name(row: &str) -> String {
    format!("w[{row}]")
}

pub fn dualize(p: &ConicProgram) -> Result<DualProgram, ConicError> {
    let n = p.num_vars();
    let mut d = ConicProgram::new();
    // column-wise accumulation of the stationarity rows
    let mut stat: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];

    let mut eq_vars = Vec::with_capacity(p.eq_rows.len());
    for r in &p.eq_rows {
        let v = d.add_var(eq_var_name(&r.name))?;
        d.set_cost(v, -r.rhs);
        for &(j, a) in &r.coefs {
            stat[j].push((v, -a));
        }
        eq_vars.push(v);
    }
    let mut ineq_vars = Vec::with_capacity(p.ineq_rows.len());
    for r in &p.ineq_rows {
        let v = d.add_var_bounded(ineq_var_name(&r.name), 0.0, f64::INFINITY)?;
        d.set_cost(v, r.rhs);
        for &(j, a) in &r.coefs {
            stat[j].push((v, a));
        }
        ineq_vars.push(v);
    }
    let mut lower_vars = vec![None; n];
    let mut upper_vars = vec![None; n];
    for j in 0..n {
        if p.lower[j].is_finite() {
            // −x_j ≤ −l_j
            let v = d.add_var_bounded(format!("wl[{}]", p.var_name(j)), 0.0, f64::INFINITY)?;
            d.set_cost(v, -p.lower[j]);
            stat[j].push((v, -1.0));
            lower_vars[j] = Some(v);
        }
        if p.upper[j].is_finite() {
            let v = d.add_var_bounded(format!("wu[{}]", p.var_name(j)), 0.0, f64::INFINITY)?;
            d.set_cost(v, p.upper[j]);
            stat[j].push((v, 1.0));
            upper_vars[j] = Some(v);
        }
    }
    let mut cone_vars = Vec::with_capacity(p.socs.len());
    for c in &p.socs {
        let head = d.add_var(format!("lam[{}][0]", c.name))?;
        stat[c.head].push((head, -1.0));
        let mut tail = Vec::with_capacity(c.tail.len());
        for (k, &j) in c.tail.iter().enumerate() {
            let v = d.add_var(format!("lam[{}][{}]", c.name, k + 1))?;
            stat[j].push((v, -1.0));
            tail.push(v);
        }
        d.add_soc(format!("dual[{}]", c.name), head, tail.clone())?;
        let mut all = vec![head];
        all.extend(tail);
        cone_vars.push(all);
    }
    let mut stat_rows = Vec::with_capacity(n);
    for (j, coefs) in stat.into_iter().enumerate() {
        stat_rows.push(d.add_eq(stat_row_name(p.var_name(j)), coefs, -p.objective[j])?);
    }
    d.offset = -p.offset;
    Ok(DualProgram {
        program: d,
        stat_rows,
        eq_vars,
        ineq_vars,
        lower_vars,
        upper_vars,
        cone_vars,
    })
}

impl DualProgram {
    /// Primal values recovered from the multipliers of the stationarity rows.
    pub fn recover_primal(&self, sol: &ConicSolution) -> Vec<f64> {
        self.stat_rows.iter().map(|&k| sol.eq_duals[k]).collect()
    }

    /// Optimal value of the primal program implied by a dual solve.
    pub fn primal_objective(&self, sol: &ConicSolution) -> f64 {
        -sol.objective
    }
}
