use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::FRAC_PI_2;

use super::CaseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Reference,
    Generator,
    LoadOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub bus_type: BusType,
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Shunt conductance and susceptance, per unit at 1 pu voltage.
    #[serde(default)]
    pub g_shunt: f64,
    #[serde(default)]
    pub b_shunt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_sh: f64,
    /// Off-nominal turns ratio magnitude (1 for lines).
    pub tap: f64,
    /// Phase shift in radians.
    #[serde(default)]
    pub shift: f64,
    /// Active-flow limit; `None` means unlimited.
    pub p_max: Option<f64>,
    pub theta_diff_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// Linear cost `a · P + b` with `P` in per unit.
    pub a: f64,
    pub b: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub ramp_limit: f64,
    pub participation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub bus: usize,
    pub p_d: f64,
    pub q_d: f64,
    /// `q_d / p_d` for positive `p_d`, else 0.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResUnit {
    pub bus: usize,
    pub p_r: f64,
    pub s_max: f64,
}

/// Immutable per-unit network description, buses sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<LoadPoint>,
    #[serde(default)]
    pub res_units: Vec<ResUnit>,
}

pub const DEFAULT_THETA_BOUND: f64 = FRAC_PI_2;
pub const DEFAULT_THETA_DIFF: f64 = std::f64::consts::FRAC_PI_4;
pub const DEFAULT_RAMP_FRACTION: f64 = 0.75;

/// Participation factors proportional to inverse marginal cost.
pub fn inverse_cost_participation(gens: &[Generator]) -> Vec<f64> {
    let inv: Vec<f64> = gens.iter().map(|g| 1.0 / g.a).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

impl NetworkCase {
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.binary_search_by_key(&id, |b| b.id).ok()
    }

    /// Bus index, panicking on ids that validation has already ruled out.
    pub fn idx(&self, id: usize) -> usize {
        self.bus_index(id).expect("bus id validated")
    }

    pub fn reference_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.bus_type == BusType::Reference)
            .expect("validated case has a reference bus")
    }

    /// Generator indices per bus index.
    pub fn gens_at_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (k, g) in self.generators.iter().enumerate() {
            out[self.idx(g.bus)].push(k);
        }
        out
    }

    pub fn loads_at_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (k, l) in self.loads.iter().enumerate() {
            out[self.idx(l.bus)].push(k);
        }
        out
    }

    pub fn res_at_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (k, r) in self.res_units.iter().enumerate() {
            out[self.idx(r.bus)].push(k);
        }
        out
    }

    /// Bus indices hosting at least one generator, ascending.
    pub fn generator_buses(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.generators.iter().map(|g| self.idx(g.bus)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn total_load(&self) -> f64 {
        self.loads.iter().map(|l| l.p_d).sum()
    }

    pub fn total_gen_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    /// Sorts buses by id, orders loads/RES by bus and checks every invariant.
    pub fn normalize(mut self) -> Result<Self, CaseError> {
        self.buses.sort_by_key(|b| b.id);
        self.loads.sort_by_key(|l| l.bus);
        self.res_units.sort_by_key(|r| r.bus);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let inv = |field: String, msg: &str| Err(CaseError::Invariant { field, msg: msg.to_string() });
        if !(self.base_mva > 0.0) {
            return inv("base_mva".into(), "must be positive");
        }
        if self.buses.is_empty() {
            return inv("buses".into(), "case has no buses");
        }
        if self.buses.windows(2).any(|w| w[0].id >= w[1].id) {
            return inv("buses".into(), "bus ids must be unique and sorted");
        }
        let n_ref = self.buses.iter().filter(|b| b.bus_type == BusType::Reference).count();
        if n_ref != 1 {
            return Err(CaseError::ReferenceBus(n_ref));
        }
        for b in &self.buses {
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return inv(format!("bus[{}].v_min", b.id), "requires 0 < v_min <= v_max");
            }
            if !(b.theta_min <= b.theta_max) {
                return inv(format!("bus[{}].theta_min", b.id), "requires theta_min <= theta_max");
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if self.bus_index(br.from).is_none() || self.bus_index(br.to).is_none() {
                return inv(format!("branch[{k}].from"), "references a missing bus");
            }
            if br.from == br.to {
                return inv(format!("branch[{k}].to"), "from and to buses coincide");
            }
            if br.x == 0.0 {
                return inv(format!("branch[{k}].x"), "series reactance must be nonzero");
            }
            if !(br.tap > 0.0) {
                return inv(format!("branch[{k}].tap"), "tap ratio must be positive");
            }
            if let Some(p) = br.p_max {
                if !(p > 0.0) {
                    return inv(format!("branch[{k}].p_max"), "flow limit must be positive");
                }
            }
            if !(br.theta_diff_max > 0.0) {
                return inv(format!("branch[{k}].theta_diff_max"), "must be positive");
            }
        }
        let gens_at = {
            let mut v = vec![0usize; self.buses.len()];
            for (k, g) in self.generators.iter().enumerate() {
                match self.bus_index(g.bus) {
                    Some(i) => v[i] += 1,
                    None => return inv(format!("generator[{k}].bus"), "references a missing bus"),
                }
            }
            v
        };
        for (k, g) in self.generators.iter().enumerate() {
            if !(g.a > 0.0) {
                return inv(format!("generator[{k}].a"), "cost coefficient must be positive");
            }
            if !(g.b >= 0.0) {
                return inv(format!("generator[{k}].b"), "cost offset must be nonnegative");
            }
            if !(g.p_min <= g.p_max) {
                return inv(format!("generator[{k}].p_min"), "requires p_min <= p_max");
            }
            if !(g.q_min <= g.q_max) {
                return inv(format!("generator[{k}].q_min"), "requires q_min <= q_max");
            }
            if !(g.ramp_limit >= 0.0) {
                return inv(format!("generator[{k}].ramp_limit"), "must be nonnegative");
            }
            if !(g.participation >= 0.0) {
                return inv(format!("generator[{k}].participation"), "must be nonnegative");
            }
        }
        if !self.generators.is_empty() {
            let total: f64 = self.generators.iter().map(|g| g.participation).sum();
            if (total - 1.0).abs() > 1e-9 {
                return inv("generators.participation".into(), "participation factors must sum to 1");
            }
        }
        for (i, b) in self.buses.iter().enumerate() {
            let has_gen = gens_at[i] > 0;
            match b.bus_type {
                BusType::Reference if !has_gen => {
                    return inv(format!("bus[{}].type", b.id), "reference bus must host a generator")
                }
                BusType::Generator if !has_gen => {
                    return inv(format!("bus[{}].type", b.id), "generator bus without a generator")
                }
                BusType::LoadOnly if has_gen => {
                    return inv(format!("bus[{}].type", b.id), "load-only bus hosts a generator")
                }
                _ => {}
            }
        }
        for (k, l) in self.loads.iter().enumerate() {
            if self.bus_index(l.bus).is_none() {
                return inv(format!("load[{k}].bus"), "references a missing bus");
            }
            if !(l.p_d.is_finite() && l.q_d.is_finite() && l.lr.is_finite()) {
                return inv(format!("load[{k}]"), "values must be finite");
            }
            let expect = if l.p_d > 0.0 { l.q_d / l.p_d } else { 0.0 };
            if (l.lr - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
                return inv(format!("load[{k}].lr"), "must equal q_d / p_d");
            }
        }
        for (k, r) in self.res_units.iter().enumerate() {
            if self.bus_index(r.bus).is_none() {
                return inv(format!("res[{k}].bus"), "references a missing bus");
            }
            if !(r.p_r >= 0.0 && r.p_r <= r.s_max) {
                return inv(format!("res[{k}].p_r"), "requires 0 <= p_r <= s_max");
            }
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<(), CaseError> {
        let n = self.buses.len();
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for br in &self.branches {
            let (f, t) = (self.idx(br.from), self.idx(br.to));
            adj.entry(f).or_default().push(t);
            adj.entry(t).or_default().push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(CaseError::Invariant {
                field: format!("bus[{}]", self.buses[i].id),
                msg: "network is not connected".into(),
            }),
            None => Ok(()),
        }
    }
}
