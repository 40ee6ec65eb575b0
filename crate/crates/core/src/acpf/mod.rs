//! Participation-factored AC power flow and evaluation of the exact ACOPF
//! inequality constraints at its solution.

use crate::netcase::{branch_admittance, build_admittance, Admittance, CaseError, NetworkCase};
use crate::robust::RobustSetpoints;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITER: usize = 50;
/// Feasibility tolerance of the constraint evaluation.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PfError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("scenario has {got} deviations, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("setpoints do not match the case: {0}")]
    Setpoints(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    InRange,
    OutOfRange,
}

/// One realization of the deviation vector, loads first then RES units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u64,
    pub mu: Vec<f64>,
    pub label: ScenarioLabel,
}

impl Scenario {
    pub fn nominal(n: usize) -> Self {
        Self {
            id: 0,
            mu: vec![0.0; n],
            label: ScenarioLabel::InRange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PfFailure {
    /// Iteration limit reached or the iterate became non-finite.
    Diverged,
    /// The Jacobian could not be factored.
    SingularJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub psi: f64,
    /// Active and reactive flows at both branch ends.
    pub p_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_from: Vec<f64>,
    pub q_to: Vec<f64>,
    /// `P_g + ρ_g ψ` per generator.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// RES active output `P_r + μ_r` and held reactive output.
    pub p_res: Vec<f64>,
    pub q_res: Vec<f64>,
    /// Reactive bound of each RES unit at its realized output; negative when
    /// the output alone exceeds the rating.
    pub q_res_bound: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<PfFailure>,
    pub mismatch: f64,
}

/// Specified injections at a scenario, before the mismatch term.
struct Injections {
    p: Vec<f64>,
    q: Vec<f64>,
    /// `Σ ρ_g` per bus.
    rho: Vec<f64>,
    p_res: Vec<f64>,
    q_res: Vec<f64>,
    q_res_bound: Vec<f64>,
}

fn injections(case: &NetworkCase, sp: &RobustSetpoints, mu: &[f64]) -> Injections {
    let n = case.buses.len();
    let nl = case.loads.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut rho = vec![0.0; n];
    for (k, g) in case.generators.iter().enumerate() {
        let i = case.idx(g.bus);
        p[i] += sp.pg[k];
        rho[i] += sp.participation[k];
    }
    for (l, ld) in case.loads.iter().enumerate() {
        let i = case.idx(ld.bus);
        p[i] -= ld.p_d + mu[l];
        q[i] -= ld.q_d + ld.lr * mu[l];
    }
    let mut p_res = Vec::with_capacity(case.res_units.len());
    let mut q_res = Vec::with_capacity(case.res_units.len());
    let mut q_res_bound = Vec::with_capacity(case.res_units.len());
    for (u, r) in case.res_units.iter().enumerate() {
        let i = case.idx(r.bus);
        let pr = r.p_r + mu[nl + u];
        let rad = r.s_max * r.s_max - pr * pr;
        let bound = if rad >= 0.0 { rad.sqrt() } else { r.s_max - pr.abs() };
        let qr = sp.q_res[u].clamp(-bound.max(0.0), bound.max(0.0));
        p[i] += pr;
        q[i] += qr;
        p_res.push(pr);
        q_res.push(qr);
        q_res_bound.push(bound);
    }
    Injections {
        p,
        q,
        rho,
        p_res,
        q_res,
        q_res_bound,
    }
}

/// Calculated injections `P_i(V, θ)` and `Q_i(V, θ)`.
fn calc_injections(y: &Admittance, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for &(k, yik) in &y.rows[i] {
            let (s, c) = (va[i] - va[k]).sin_cos();
            p[i] += vm[i] * vm[k] * (yik.re * c + yik.im * s);
            q[i] += vm[i] * vm[k] * (yik.re * s - yik.im * c);
        }
    }
    (p, q)
}

/// Newton-Raphson with the mismatch `ψ` distributed by participation
/// factors. Generator buses hold `V = √c_ii`; the reference angle is zero.
pub fn run_pf(case: &NetworkCase, sp: &RobustSetpoints, scenario: &Scenario) -> Result<PfSolution, PfError> {
    let nparams = case.loads.len() + case.res_units.len();
    if scenario.mu.len() != nparams {
        return Err(PfError::Dimension {
            expected: nparams,
            got: scenario.mu.len(),
        });
    }
    check_setpoints(case, sp)?;
    let y = build_admittance(case)?;
    let n = case.buses.len();
    let inj = injections(case, sp, &scenario.mu);
    let reference = case.reference_bus();

    let mut vm = vec![1.0; n];
    let mut is_pv = vec![false; n];
    for (&i, &v) in sp.gen_buses.iter().zip(&sp.vm) {
        vm[i] = v;
        is_pv[i] = true;
    }
    let mut va = vec![0.0; n];
    let mut psi = 0.0;

    // unknown positions
    let th_idx: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
    let v_idx: Vec<usize> = (0..n).filter(|&i| !is_pv[i]).collect();
    let nt = th_idx.len();
    let nv = v_idx.len();
    let dim = nt + nv + 1;
    let mut th_pos = vec![usize::MAX; n];
    for (k, &i) in th_idx.iter().enumerate() {
        th_pos[i] = k;
    }
    let mut v_pos = vec![usize::MAX; n];
    for (k, &i) in v_idx.iter().enumerate() {
        v_pos[i] = nt + k;
    }

    let residual = |vm: &[f64], va: &[f64], psi: f64| -> (DVector<f64>, Vec<f64>, Vec<f64>) {
        let (pc, qc) = calc_injections(&y, vm, va);
        let mut f = DVector::zeros(dim);
        for i in 0..n {
            f[i] = pc[i] - inj.p[i] - inj.rho[i] * psi;
        }
        for (k, &i) in v_idx.iter().enumerate() {
            f[n + k] = qc[i] - inj.q[i];
        }
        (f, pc, qc)
    };

    let mut iterations = 0;
    let mut failure = None;
    let (mut f, mut pc, mut qc) = residual(&vm, &va, psi);
    let mut mismatch = f.amax();
    while mismatch > PF_TOLERANCE {
        if iterations >= PF_MAX_ITER || !mismatch.is_finite() {
            failure = Some(PfFailure::Diverged);
            break;
        }
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            let has_q = !is_pv[i];
            let qi = if has_q { n + v_pos[i] - nt } else { 0 };
            for &(k, yik) in &y.rows[i] {
                let (s, c) = (va[i] - va[k]).sin_cos();
                let (g, b) = (yik.re, yik.im);
                if k == i {
                    if th_pos[i] != usize::MAX {
                        jac[(i, th_pos[i])] += -qc[i] - b * vm[i] * vm[i];
                        if has_q {
                            jac[(qi, th_pos[i])] += pc[i] - g * vm[i] * vm[i];
                        }
                    }
                    if v_pos[i] != usize::MAX {
                        jac[(i, v_pos[i])] += pc[i] / vm[i] + g * vm[i];
                        jac[(qi, v_pos[i])] += qc[i] / vm[i] - b * vm[i];
                    }
                } else {
                    let dp_dth = vm[i] * vm[k] * (g * s - b * c);
                    let dq_dth = -vm[i] * vm[k] * (g * c + b * s);
                    if th_pos[k] != usize::MAX {
                        jac[(i, th_pos[k])] += dp_dth;
                        if has_q {
                            jac[(qi, th_pos[k])] += dq_dth;
                        }
                    }
                    if v_pos[k] != usize::MAX {
                        jac[(i, v_pos[k])] += vm[i] * (g * c + b * s);
                        if has_q {
                            jac[(qi, v_pos[k])] += vm[i] * (g * s - b * c);
                        }
                    }
                }
            }
            jac[(i, dim - 1)] = -inj.rho[i];
        }
        let Some(dx) = jac.lu().solve(&(-&f)) else {
            failure = Some(PfFailure::SingularJacobian);
            break;
        };
        if dx.iter().any(|v| !v.is_finite()) {
            failure = Some(PfFailure::SingularJacobian);
            break;
        }
        for (k, &i) in th_idx.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in v_idx.iter().enumerate() {
            vm[i] += dx[nt + k];
        }
        psi += dx[dim - 1];
        (f, pc, qc) = residual(&vm, &va, psi);
        mismatch = f.amax();
    }
    if failure.is_none() && !mismatch.is_finite() {
        failure = Some(PfFailure::Diverged);
    }

    let mut p_from = Vec::with_capacity(case.branches.len());
    let mut p_to = Vec::with_capacity(case.branches.len());
    let mut q_from = Vec::with_capacity(case.branches.len());
    let mut q_to = Vec::with_capacity(case.branches.len());
    for br in &case.branches {
        let a = branch_admittance(br)?;
        let (i, k) = (case.idx(br.from), case.idx(br.to));
        let vi = Complex64::from_polar(vm[i], va[i]);
        let vk = Complex64::from_polar(vm[k], va[k]);
        let sf = vi * (a.ff * vi + a.ft * vk).conj();
        let st = vk * (a.tf * vi + a.tt * vk).conj();
        p_from.push(sf.re);
        q_from.push(sf.im);
        p_to.push(st.re);
        q_to.push(st.im);
    }

    let pg: Vec<f64> = sp
        .pg
        .iter()
        .zip(&sp.participation)
        .map(|(p, r)| p + r * psi)
        .collect();
    let qg = split_reactive(case, &qc, &inj.q);

    Ok(PfSolution {
        vm,
        va,
        psi,
        p_from,
        p_to,
        q_from,
        q_to,
        pg,
        qg,
        p_res: inj.p_res,
        q_res: inj.q_res,
        q_res_bound: inj.q_res_bound,
        iterations,
        converged: failure.is_none(),
        failure,
        mismatch,
    })
}

fn check_setpoints(case: &NetworkCase, sp: &RobustSetpoints) -> Result<(), PfError> {
    let ng = case.generators.len();
    if sp.pg.len() != ng || sp.participation.len() != ng {
        return Err(PfError::Setpoints(format!("expected {ng} generators")));
    }
    if sp.gen_buses != case.generator_buses() || sp.vm.len() != sp.gen_buses.len() {
        return Err(PfError::Setpoints("generator buses differ".into()));
    }
    if sp.q_res.len() != case.res_units.len() {
        return Err(PfError::Setpoints(format!("expected {} RES units", case.res_units.len())));
    }
    Ok(())
}

/// Reactive output per generator: the bus requirement shared in proportion
/// to each unit's reactive range, or evenly when all ranges are empty.
fn split_reactive(case: &NetworkCase, qc: &[f64], q_fixed: &[f64]) -> Vec<f64> {
    let mut qg = vec![0.0; case.generators.len()];
    for (i, gens) in case.gens_at_bus().iter().enumerate() {
        if gens.is_empty() {
            continue;
        }
        let need = qc[i] - q_fixed[i];
        let span: f64 = gens.iter().map(|&k| case.generators[k].q_max - case.generators[k].q_min).sum();
        for &k in gens {
            let g = &case.generators[k];
            qg[k] = if span > 0.0 {
                need * (g.q_max - g.q_min) / span
            } else {
                need / gens.len() as f64
            };
        }
    }
    qg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    Flow,
    ResReactive,
    GenActive,
    GenReactive,
    Ramp,
    Voltage,
    Angle,
    AngleDiff,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 8] = [
        ConstraintFamily::Flow,
        ConstraintFamily::ResReactive,
        ConstraintFamily::GenActive,
        ConstraintFamily::GenReactive,
        ConstraintFamily::Ramp,
        ConstraintFamily::Voltage,
        ConstraintFamily::Angle,
        ConstraintFamily::AngleDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::Flow => "flow",
            ConstraintFamily::ResReactive => "res_reactive",
            ConstraintFamily::GenActive => "gen_active",
            ConstraintFamily::GenReactive => "gen_reactive",
            ConstraintFamily::Ramp => "ramp",
            ConstraintFamily::Voltage => "voltage",
            ConstraintFamily::Angle => "angle",
            ConstraintFamily::AngleDiff => "angle_diff",
        }
    }
}

/// Tightest constraint of one family. Flow margins are relative to the
/// limit; all others are absolute, in per unit or radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCheck {
    pub family: ConstraintFamily,
    pub worst: String,
    pub margin: f64,
    pub violated: bool,
    /// Largest ratio of the monitored quantity to its limit.
    pub peak_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub families: Vec<FamilyCheck>,
}

impl ViolationRecord {
    pub fn any(&self) -> bool {
        self.families.iter().any(|f| f.violated)
    }

    pub fn violated(&self) -> impl Iterator<Item = &FamilyCheck> {
        self.families.iter().filter(|f| f.violated)
    }

    pub fn family(&self, f: ConstraintFamily) -> Option<&FamilyCheck> {
        self.families.iter().find(|c| c.family == f)
    }
}

struct Tracker {
    family: ConstraintFamily,
    worst: String,
    margin: f64,
    peak: f64,
}

impl Tracker {
    fn new(family: ConstraintFamily) -> Self {
        Self {
            family,
            worst: String::new(),
            margin: f64::INFINITY,
            peak: 0.0,
        }
    }

    fn push(&mut self, name: impl FnOnce() -> String, margin: f64, ratio: f64) {
        if margin < self.margin {
            self.margin = margin;
            self.worst = name();
        }
        if ratio.is_finite() {
            self.peak = self.peak.max(ratio);
        }
    }

    /// Two-sided bound `lo ≤ v ≤ hi` with absolute margin.
    fn push_range(&mut self, name: impl FnOnce() -> String, v: f64, lo: f64, hi: f64) {
        let m = (v - lo).min(hi - v);
        let ratio = if hi.abs() > 0.0 { v.abs() / hi.abs().max(lo.abs()) } else { 0.0 };
        self.push(name, m, ratio);
    }

    fn finish(self) -> Option<FamilyCheck> {
        self.margin.is_finite().then(|| FamilyCheck {
            family: self.family,
            violated: self.margin < -FEAS_TOL,
            worst: self.worst,
            margin: self.margin,
            peak_ratio: self.peak,
        })
    }
}

/// Checks every monitored constraint family at a power flow solution.
pub fn evaluate_constraints(case: &NetworkCase, sp: &RobustSetpoints, pf: &PfSolution) -> ViolationRecord {
    use ConstraintFamily::*;
    let mut flow = Tracker::new(Flow);
    for (k, br) in case.branches.iter().enumerate() {
        if let Some(limit) = br.p_max {
            for (side, p) in [("from", pf.p_from[k]), ("to", pf.p_to[k])] {
                flow.push(
                    || format!("branch {}-{} ({side})", br.from, br.to),
                    (limit - p.abs()) / limit,
                    p.abs() / limit,
                );
            }
        }
    }
    let mut res = Tracker::new(ResReactive);
    for (u, r) in case.res_units.iter().enumerate() {
        let bound = pf.q_res_bound[u];
        res.push(
            || format!("RES {u} at bus {}", r.bus),
            bound - pf.q_res[u].abs(),
            if bound > 0.0 { pf.q_res[u].abs() / bound } else { 0.0 },
        );
    }
    let mut gp = Tracker::new(GenActive);
    let mut gq = Tracker::new(GenReactive);
    let mut ramp = Tracker::new(Ramp);
    for (k, g) in case.generators.iter().enumerate() {
        gp.push_range(|| format!("generator {k} at bus {}", g.bus), pf.pg[k], g.p_min, g.p_max);
        gq.push_range(|| format!("generator {k} at bus {}", g.bus), pf.qg[k], g.q_min, g.q_max);
        let shift = (pf.pg[k] - sp.pg[k]).abs();
        ramp.push(
            || format!("generator {k} at bus {}", g.bus),
            g.ramp_limit - shift,
            if g.ramp_limit > 0.0 { shift / g.ramp_limit } else { 0.0 },
        );
    }
    let mut volt = Tracker::new(Voltage);
    let mut ang = Tracker::new(Angle);
    for (i, b) in case.buses.iter().enumerate() {
        volt.push_range(|| format!("bus {}", b.id), pf.vm[i], b.v_min, b.v_max);
        ang.push_range(|| format!("bus {}", b.id), pf.va[i], b.theta_min, b.theta_max);
    }
    let mut diff = Tracker::new(AngleDiff);
    for br in &case.branches {
        let d = pf.va[case.idx(br.from)] - pf.va[case.idx(br.to)];
        diff.push(
            || format!("branch {}-{}", br.from, br.to),
            br.theta_diff_max - d.abs(),
            d.abs() / br.theta_diff_max,
        );
    }
    ViolationRecord {
        families: [flow, res, gp, gq, ramp, volt, ang, diff]
            .into_iter()
            .filter_map(Tracker::finish)
            .collect(),
    }
}
