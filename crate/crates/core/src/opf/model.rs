//! One copy of the convexified network model: balances, injections, branch
//! flows, cone linkage, arctangent band and operating limits.

use super::OpfError;
use crate::conic::ConicProgram;
use crate::netcase::{branch_admittance, BusType, NetworkCase};
use serde::{Deserialize, Serialize};

/// Column indices of one network block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcopfVariables {
    /// Per generator.
    pub pg: Vec<usize>,
    pub qg: Vec<usize>,
    /// Per RES unit.
    pub qr: Vec<usize>,
    /// Per bus.
    pub cii: Vec<usize>,
    pub theta: Vec<usize>,
    pub p_inj: Vec<usize>,
    pub q_inj: Vec<usize>,
    /// Per branch.
    pub cij: Vec<usize>,
    pub sij: Vec<usize>,
    pub c_lin: Vec<usize>,
    pub s_lin: Vec<usize>,
    pub e_lin: Vec<usize>,
    pub d_lin: Vec<usize>,
    pub pf: Vec<usize>,
    pub pt: Vec<usize>,
    /// Equality rows of the active and reactive nodal balances, per bus.
    pub bal_p: Vec<usize>,
    pub bal_q: Vec<usize>,
}

/// Values of one block at a primal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub qr: Vec<f64>,
    pub cii: Vec<f64>,
    pub vm: Vec<f64>,
    pub theta: Vec<f64>,
    pub cij: Vec<f64>,
    pub sij: Vec<f64>,
    pub pf: Vec<f64>,
    pub pt: Vec<f64>,
}

impl AcopfVariables {
    pub fn extract(&self, x: &[f64]) -> OperatingPoint {
        let take = |cols: &[usize]| cols.iter().map(|&j| x[j]).collect::<Vec<f64>>();
        let cii = take(&self.cii);
        OperatingPoint {
            pg: take(&self.pg),
            qg: take(&self.qg),
            qr: take(&self.qr),
            vm: cii.iter().map(|c| c.max(0.0).sqrt()).collect(),
            cii,
            theta: take(&self.theta),
            cij: take(&self.cij),
            sij: take(&self.sij),
            pf: take(&self.pf),
            pt: take(&self.pt),
        }
    }
}

impl OperatingPoint {
    /// Largest `|c_ij² + s_ij² − c_ii c_jj|` over branches.
    pub fn cone_residual(&self, case: &NetworkCase) -> f64 {
        case.branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                let (f, t) = (case.idx(br.from), case.idx(br.to));
                (self.cij[k].powi(2) + self.sij[k].powi(2) - self.cii[f] * self.cii[t]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|θ_ij − atan2(s_ij, c_ij)|` over branches.
    pub fn angle_residual(&self, case: &NetworkCase) -> f64 {
        case.branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                let (f, t) = (case.idx(br.from), case.idx(br.to));
                (self.theta[f] - self.theta[t] - self.sij[k].atan2(self.cij[k])).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// How a block treats what the hatted copy shares with the base copy.
pub(crate) struct BlockSpec<'a> {
    /// Name prefix, empty for the base block.
    pub tag: &'a str,
    /// Base block whose `P_g` and generator-bus `c_ii` are reused.
    pub shared: Option<&'a AcopfVariables>,
    /// Symmetric reactive bound per RES unit.
    pub res_q_bound: &'a [f64],
    pub eps_theta: f64,
}

fn check_case_bounds(case: &NetworkCase) -> Result<(), OpfError> {
    for (k, g) in case.generators.iter().enumerate() {
        if g.p_min > g.p_max || g.q_min > g.q_max {
            return Err(OpfError::InfeasibleBounds(format!("generator {k} at bus {}", g.bus)));
        }
    }
    for b in &case.buses {
        if b.v_min > b.v_max || b.theta_min > b.theta_max {
            return Err(OpfError::InfeasibleBounds(format!("bus {}", b.id)));
        }
    }
    let r = &case.buses[case.reference_bus()];
    if r.theta_min > 0.0 || r.theta_max < 0.0 {
        return Err(OpfError::InfeasibleBounds(format!("reference bus {} excludes zero angle", r.id)));
    }
    Ok(())
}

pub(crate) fn add_block(p: &mut ConicProgram, case: &NetworkCase, spec: &BlockSpec) -> Result<AcopfVariables, OpfError> {
    check_case_bounds(case)?;
    if !(spec.eps_theta > 0.0) {
        return Err(OpfError::Parameter("eps_theta must be positive".into()));
    }
    let tag = spec.tag;
    let nb = case.buses.len();
    let gens_at = case.gens_at_bus();
    let loads_at = case.loads_at_bus();
    let res_at = case.res_at_bus();

    let pg = match spec.shared {
        Some(base) => base.pg.clone(),
        None => case
            .generators
            .iter()
            .enumerate()
            .map(|(k, g)| p.add_var_bounded(format!("pg[{k}]"), g.p_min, g.p_max))
            .collect::<Result<_, _>>()?,
    };
    let qg = case
        .generators
        .iter()
        .enumerate()
        .map(|(k, g)| p.add_var_bounded(format!("{tag}qg[{k}]"), g.q_min, g.q_max))
        .collect::<Result<Vec<_>, _>>()?;
    let qr = spec
        .res_q_bound
        .iter()
        .enumerate()
        .map(|(u, &e)| p.add_var_bounded(format!("{tag}qr[{u}]"), -e, e))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cii = Vec::with_capacity(nb);
    let mut theta = Vec::with_capacity(nb);
    let mut p_inj = Vec::with_capacity(nb);
    let mut q_inj = Vec::with_capacity(nb);
    for (i, b) in case.buses.iter().enumerate() {
        let shared = spec.shared.filter(|_| !gens_at[i].is_empty());
        cii.push(match shared {
            Some(base) => base.cii[i],
            None => p.add_var_bounded(format!("{tag}cii[{}]", b.id), b.v_min * b.v_min, b.v_max * b.v_max)?,
        });
        theta.push(p.add_var_bounded(format!("{tag}th[{}]", b.id), b.theta_min, b.theta_max)?);
        p_inj.push(p.add_var(format!("{tag}p_inj[{}]", b.id))?);
        q_inj.push(p.add_var(format!("{tag}q_inj[{}]", b.id))?);
    }
    let r = case.reference_bus();
    p.add_eq(format!("{tag}theta_ref"), vec![(theta[r], 1.0)], 0.0)?;

    let nl = case.branches.len();
    let mut v = AcopfVariables {
        pg,
        qg,
        qr,
        cii,
        theta,
        p_inj,
        q_inj,
        cij: Vec::with_capacity(nl),
        sij: Vec::with_capacity(nl),
        c_lin: Vec::with_capacity(nl),
        s_lin: Vec::with_capacity(nl),
        e_lin: Vec::with_capacity(nl),
        d_lin: Vec::with_capacity(nl),
        pf: Vec::with_capacity(nl),
        pt: Vec::with_capacity(nl),
        bal_p: Vec::with_capacity(nb),
        bal_q: Vec::with_capacity(nb),
    };

    // injection rows accumulate branch terms bus by bus
    let mut inj_p: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    let mut inj_q: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (i, b) in case.buses.iter().enumerate() {
        inj_p[i].push((v.p_inj[i], -1.0));
        inj_q[i].push((v.q_inj[i], -1.0));
        if b.g_shunt != 0.0 {
            inj_p[i].push((v.cii[i], b.g_shunt));
        }
        if b.b_shunt != 0.0 {
            inj_q[i].push((v.cii[i], -b.b_shunt));
        }
    }

    for (k, br) in case.branches.iter().enumerate() {
        let y = branch_admittance(br)?;
        let (f, t) = (case.idx(br.from), case.idx(br.to));
        let limit = br.p_max.unwrap_or(f64::INFINITY);
        let c = p.add_var(format!("{tag}cij[{k}]"))?;
        let s = p.add_var(format!("{tag}sij[{k}]"))?;
        let pf = p.add_var_bounded(format!("{tag}pf[{k}]"), -limit, limit)?;
        let pt = p.add_var_bounded(format!("{tag}pt[{k}]"), -limit, limit)?;
        let cc = p.add_var(format!("{tag}C[{k}]"))?;
        let ss = p.add_var(format!("{tag}S[{k}]"))?;
        let ee = p.add_var(format!("{tag}E[{k}]"))?;
        let dd = p.add_var(format!("{tag}D[{k}]"))?;
        let (cf, ct) = (v.cii[f], v.cii[t]);

        p.add_eq(
            format!("{tag}flow_pf[{k}]"),
            vec![(cf, y.ff.re), (c, y.ft.re), (s, y.ft.im), (pf, -1.0)],
            0.0,
        )?;
        p.add_eq(
            format!("{tag}flow_pt[{k}]"),
            vec![(ct, y.tt.re), (c, y.tf.re), (s, -y.tf.im), (pt, -1.0)],
            0.0,
        )?;
        inj_p[f].push((pf, 1.0));
        inj_p[t].push((pt, 1.0));
        // reactive flows enter the injections directly
        inj_q[f].extend([(cf, -y.ff.im), (s, y.ft.re), (c, -y.ft.im)]);
        inj_q[t].extend([(ct, -y.tt.im), (s, -y.tf.re), (c, -y.tf.im)]);

        p.add_eq(format!("{tag}lin_C[{k}]"), vec![(cc, 1.0), (c, -2.0)], 0.0)?;
        p.add_eq(format!("{tag}lin_S[{k}]"), vec![(ss, 1.0), (s, -2.0)], 0.0)?;
        p.add_eq(format!("{tag}lin_E[{k}]"), vec![(ee, 1.0), (cf, -1.0), (ct, 1.0)], 0.0)?;
        p.add_eq(format!("{tag}lin_D[{k}]"), vec![(dd, 1.0), (cf, -1.0), (ct, -1.0)], 0.0)?;
        p.add_soc(format!("{tag}cone[{k}]"), dd, vec![cc, ss, ee])?;

        let (thf, tht) = (v.theta[f], v.theta[t]);
        p.add_le(format!("{tag}band_hi[{k}]"), vec![(thf, 1.0), (tht, -1.0), (s, -1.0)], spec.eps_theta)?;
        p.add_ge(format!("{tag}band_lo[{k}]"), vec![(thf, 1.0), (tht, -1.0), (s, -1.0)], -spec.eps_theta)?;
        p.add_le(format!("{tag}dth_hi[{k}]"), vec![(thf, 1.0), (tht, -1.0)], br.theta_diff_max)?;
        p.add_ge(format!("{tag}dth_lo[{k}]"), vec![(thf, 1.0), (tht, -1.0)], -br.theta_diff_max)?;

        v.cij.push(c);
        v.sij.push(s);
        v.c_lin.push(cc);
        v.s_lin.push(ss);
        v.e_lin.push(ee);
        v.d_lin.push(dd);
        v.pf.push(pf);
        v.pt.push(pt);
    }

    for (i, b) in case.buses.iter().enumerate() {
        p.add_eq(format!("{tag}inj_p[{}]", b.id), merge(std::mem::take(&mut inj_p[i])), 0.0)?;
        p.add_eq(format!("{tag}inj_q[{}]", b.id), merge(std::mem::take(&mut inj_q[i])), 0.0)?;
    }

    for (i, b) in case.buses.iter().enumerate() {
        let mut prow: Vec<(usize, f64)> = gens_at[i].iter().map(|&g| (v.pg[g], 1.0)).collect();
        prow.push((v.p_inj[i], -1.0));
        let mut qrow: Vec<(usize, f64)> = gens_at[i].iter().map(|&g| (v.qg[g], 1.0)).collect();
        qrow.extend(res_at[i].iter().map(|&u| (v.qr[u], 1.0)));
        qrow.push((v.q_inj[i], -1.0));
        let pd: f64 = loads_at[i].iter().map(|&l| case.loads[l].p_d).sum();
        let qd: f64 = loads_at[i].iter().map(|&l| case.loads[l].q_d).sum();
        let pr: f64 = res_at[i].iter().map(|&u| case.res_units[u].p_r).sum();
        v.bal_p.push(p.add_eq(format!("{tag}bal_p[{}]", b.id), prow, pd - pr)?);
        v.bal_q.push(p.add_eq(format!("{tag}bal_q[{}]", b.id), qrow, qd)?);
        debug_assert!(b.bus_type != BusType::LoadOnly || gens_at[i].is_empty());
    }
    Ok(v)
}

/// Sums duplicate columns and drops exact zeros.
fn merge(mut coefs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coefs.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
    for (j, a) in coefs {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Symmetric reactive bound `√(S² − P²)` of each RES unit at output `p`.
pub(crate) fn res_reactive_bounds(case: &NetworkCase, extra: &[f64]) -> Result<Vec<f64>, OpfError> {
    case.res_units
        .iter()
        .enumerate()
        .map(|(u, r)| {
            let p = r.p_r + extra.get(u).copied().unwrap_or(0.0);
            let rad = r.s_max * r.s_max - p * p;
            if rad < 0.0 {
                Err(OpfError::ResRating { unit: u, bus: r.bus })
            } else {
                Ok(rad.sqrt())
            }
        })
        .collect()
}
