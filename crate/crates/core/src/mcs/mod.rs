//! Monte-Carlo robustness check: scenario sampling, batched power flows and
//! violation statistics.

use crate::acpf::{evaluate_constraints, run_pf, ConstraintFamily, PfError, Scenario, ScenarioLabel};
use crate::netcase::NetworkCase;
use crate::opf::UncertaintySpec;
use crate::robust::RobustSetpoints;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Width of the out-of-range band as a fraction of the nominal injection.
pub const OUT_OF_RANGE_BAND: f64 = 0.05;

#[derive(Debug, Error)]
pub enum McsError {
    #[error("scenario count must be at least one")]
    NoScenarios,
    #[error("out-of-range sampling needs a nonzero deviation box")]
    EmptyBox,
    #[error("out-of-range band of parameter {0} is empty (zero nominal injection)")]
    DegenerateBand(usize),
    #[error("uncertainty has {got} parameters, the case has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

/// Nominal magnitude of each parameter, loads first then RES units.
pub fn nominal_injections(case: &NetworkCase) -> Vec<f64> {
    case.loads
        .iter()
        .map(|l| l.p_d.abs())
        .chain(case.res_units.iter().map(|r| r.p_r.abs()))
        .collect()
}

/// Deterministic sampler; scenario `id` draws from its own ChaCha stream of
/// the master seed, so any subset can be regenerated independently.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    mu_bar: Vec<f64>,
    band: Vec<f64>,
    mode: ScenarioLabel,
    seed: u64,
}

impl ScenarioSampler {
    pub fn new(case: &NetworkCase, unc: &UncertaintySpec, mode: ScenarioLabel, seed: u64) -> Result<Self, McsError> {
        let expected = case.loads.len() + case.res_units.len();
        if unc.len() != expected {
            return Err(McsError::Dimension { expected, got: unc.len() });
        }
        let mu_bar = unc.bounds();
        let band: Vec<f64> = nominal_injections(case).iter().map(|p| OUT_OF_RANGE_BAND * p).collect();
        if mode == ScenarioLabel::OutOfRange {
            if mu_bar.iter().all(|&m| m == 0.0) {
                return Err(McsError::EmptyBox);
            }
            if let Some(j) = band.iter().position(|&b| !(b > 0.0)) {
                return Err(McsError::DegenerateBand(j));
            }
        }
        Ok(Self {
            mu_bar,
            band,
            mode,
            seed,
        })
    }

    pub fn scenario(&self, id: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        let mu = match self.mode {
            ScenarioLabel::InRange => self
                .mu_bar
                .iter()
                .map(|&m| m * rng.gen_range(-1.0..=1.0))
                .collect(),
            ScenarioLabel::OutOfRange => self
                .mu_bar
                .iter()
                .zip(&self.band)
                .map(|(&m, &b)| {
                    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    // open interval (μ̄, μ̄ + b)
                    let mut u: f64 = rng.gen();
                    while u == 0.0 {
                        u = rng.gen();
                    }
                    side * (m + b * u)
                })
                .collect(),
        };
        Scenario { id, mu, label: self.mode }
    }
}

pub fn generate_scenarios(
    case: &NetworkCase,
    unc: &UncertaintySpec,
    mode: ScenarioLabel,
    n_s: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Scenario>, McsError> {
    if n_s == 0 {
        return Err(McsError::NoScenarios);
    }
    let sampler = ScenarioSampler::new(case, unc, mode, seed)?;
    Ok((0..n_s as u64).map(move |id| sampler.scenario(id)))
}

/// Per-scenario outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub id: u64,
    pub converged: bool,
    pub iterations: usize,
    pub psi: f64,
    /// Tightest margin per family, in [`ConstraintFamily::ALL`] order.
    pub margins: Vec<f64>,
    pub violated: bool,
}

/// Extremes of monitored quantities over all converged scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Largest `|P| / P_max` per branch end pair.
    pub flow_ratio_max: Vec<f64>,
    pub vm_min: Vec<f64>,
    pub vm_max: Vec<f64>,
    pub pg_min: Vec<f64>,
    pub pg_max: Vec<f64>,
    pub qg_min: Vec<f64>,
    pub qg_max: Vec<f64>,
    /// Largest `|P̂_g − P_g| / r̄_g`.
    pub ramp_ratio_max: Vec<f64>,
    pub psi_min: f64,
    pub psi_max: f64,
}

impl Envelope {
    fn empty(case: &NetworkCase) -> Self {
        let (nb, ng, nl) = (case.buses.len(), case.generators.len(), case.branches.len());
        Self {
            flow_ratio_max: vec![0.0; nl],
            vm_min: vec![f64::INFINITY; nb],
            vm_max: vec![f64::NEG_INFINITY; nb],
            pg_min: vec![f64::INFINITY; ng],
            pg_max: vec![f64::NEG_INFINITY; ng],
            qg_min: vec![f64::INFINITY; ng],
            qg_max: vec![f64::NEG_INFINITY; ng],
            ramp_ratio_max: vec![0.0; ng],
            psi_min: f64::INFINITY,
            psi_max: f64::NEG_INFINITY,
        }
    }

    fn merge(&mut self, o: &Envelope) {
        let max = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x = x.max(*y));
        let min = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x = x.min(*y));
        max(&mut self.flow_ratio_max, &o.flow_ratio_max);
        min(&mut self.vm_min, &o.vm_min);
        max(&mut self.vm_max, &o.vm_max);
        min(&mut self.pg_min, &o.pg_min);
        max(&mut self.pg_max, &o.pg_max);
        min(&mut self.qg_min, &o.qg_min);
        max(&mut self.qg_max, &o.qg_max);
        max(&mut self.ramp_ratio_max, &o.ramp_ratio_max);
        self.psi_min = self.psi_min.min(o.psi_min);
        self.psi_max = self.psi_max.max(o.psi_max);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_s: usize,
    pub mode: ScenarioLabel,
    pub seed: u64,
    /// Scenarios with at least one violation or a failed power flow.
    pub violations: usize,
    pub divergences: usize,
    pub violation_probability: f64,
    /// Scenarios violating each family.
    pub histogram: BTreeMap<String, usize>,
    pub envelope: Envelope,
    /// Largest setpoint difference to a reference dispatch, when supplied.
    pub eta: Option<f64>,
    /// Zero violations and zero divergences.
    pub robust: bool,
    #[serde(skip)]
    pub rows: Vec<ScenarioRow>,
}

struct Outcome {
    row: ScenarioRow,
    families: Vec<ConstraintFamily>,
    envelope: Option<Envelope>,
}

fn evaluate(case: &NetworkCase, sp: &RobustSetpoints, sc: &Scenario) -> Result<Outcome, PfError> {
    let pf = run_pf(case, sp, sc)?;
    if !pf.converged {
        return Ok(Outcome {
            row: ScenarioRow {
                id: sc.id,
                converged: false,
                iterations: pf.iterations,
                psi: pf.psi,
                margins: vec![f64::NAN; ConstraintFamily::ALL.len()],
                violated: true,
            },
            families: Vec::new(),
            envelope: None,
        });
    }
    let rec = evaluate_constraints(case, sp, &pf);
    let margins = ConstraintFamily::ALL
        .iter()
        .map(|&f| rec.family(f).map_or(f64::INFINITY, |c| c.margin))
        .collect();
    let mut env = Envelope::empty(case);
    for (k, br) in case.branches.iter().enumerate() {
        if let Some(limit) = br.p_max {
            env.flow_ratio_max[k] = pf.p_from[k].abs().max(pf.p_to[k].abs()) / limit;
        }
    }
    env.vm_min.clone_from(&pf.vm);
    env.vm_max.clone_from(&pf.vm);
    env.pg_min.clone_from(&pf.pg);
    env.pg_max.clone_from(&pf.pg);
    env.qg_min.clone_from(&pf.qg);
    env.qg_max.clone_from(&pf.qg);
    for (k, g) in case.generators.iter().enumerate() {
        let shift = (pf.pg[k] - sp.pg[k]).abs();
        env.ramp_ratio_max[k] = if g.ramp_limit > 0.0 { shift / g.ramp_limit } else { 0.0 };
    }
    env.psi_min = pf.psi;
    env.psi_max = pf.psi;
    Ok(Outcome {
        row: ScenarioRow {
            id: sc.id,
            converged: true,
            iterations: pf.iterations,
            psi: pf.psi,
            margins,
            violated: rec.any(),
        },
        families: rec.violated().map(|c| c.family).collect(),
        envelope: Some(env),
    })
}

/// Runs the power flow for every scenario and aggregates the outcome. The
/// result does not depend on the order in which scenarios are evaluated.
#[allow(clippy::too_many_arguments)]
pub fn validate(
    case: &NetworkCase,
    sp: &RobustSetpoints,
    unc: &UncertaintySpec,
    mode: ScenarioLabel,
    n_s: usize,
    seed: u64,
    reference: Option<&RobustSetpoints>,
) -> Result<ValidationReport, McsError> {
    if n_s == 0 {
        return Err(McsError::NoScenarios);
    }
    let sampler = ScenarioSampler::new(case, unc, mode, seed)?;
    let outcomes: Vec<Outcome> = (0..n_s as u64)
        .into_par_iter()
        .map(|id| evaluate(case, sp, &sampler.scenario(id)))
        .collect::<Result<_, _>>()?;

    let mut histogram: BTreeMap<String, usize> =
        ConstraintFamily::ALL.iter().map(|f| (f.name().to_string(), 0)).collect();
    histogram.insert("diverged".into(), 0);
    let mut envelope = Envelope::empty(case);
    let (mut violations, mut divergences) = (0, 0);
    let mut rows = Vec::with_capacity(n_s);
    for o in outcomes {
        if o.row.violated {
            violations += 1;
        }
        match o.envelope {
            Some(e) => envelope.merge(&e),
            None => {
                divergences += 1;
                *histogram.get_mut("diverged").expect("key inserted") += 1;
            }
        }
        for f in o.families {
            *histogram.get_mut(f.name()).expect("every family is keyed") += 1;
        }
        rows.push(o.row);
    }
    let eta = reference.map(|r| {
        sp.x()
            .iter()
            .zip(r.x())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    Ok(ValidationReport {
        n_s,
        mode,
        seed,
        violations,
        divergences,
        violation_probability: violations as f64 / n_s as f64,
        histogram,
        envelope,
        eta,
        robust: violations == 0 && divergences == 0,
        rows,
    })
}

#[derive(Serialize)]
struct EnvelopeRow<'a> {
    family: &'a str,
    element: String,
    min: f64,
    max: f64,
    limit_lo: f64,
    limit_hi: f64,
}

impl ValidationReport {
    /// Tidy envelope table keyed by constraint family.
    pub fn envelope_csv(&self, case: &NetworkCase) -> Result<String, McsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = &self.envelope;
        for (k, br) in case.branches.iter().enumerate() {
            w.serialize(EnvelopeRow {
                family: "flow",
                element: format!("{}-{}", br.from, br.to),
                min: 0.0,
                max: e.flow_ratio_max[k],
                limit_lo: 0.0,
                limit_hi: if br.p_max.is_some() { 1.0 } else { f64::INFINITY },
            })?;
        }
        for (i, b) in case.buses.iter().enumerate() {
            w.serialize(EnvelopeRow {
                family: "voltage",
                element: b.id.to_string(),
                min: e.vm_min[i],
                max: e.vm_max[i],
                limit_lo: b.v_min,
                limit_hi: b.v_max,
            })?;
        }
        for (k, g) in case.generators.iter().enumerate() {
            w.serialize(EnvelopeRow {
                family: "gen_active",
                element: format!("{k}@{}", g.bus),
                min: e.pg_min[k],
                max: e.pg_max[k],
                limit_lo: g.p_min,
                limit_hi: g.p_max,
            })?;
            w.serialize(EnvelopeRow {
                family: "gen_reactive",
                element: format!("{k}@{}", g.bus),
                min: e.qg_min[k],
                max: e.qg_max[k],
                limit_lo: g.q_min,
                limit_hi: g.q_max,
            })?;
            w.serialize(EnvelopeRow {
                family: "ramp",
                element: format!("{k}@{}", g.bus),
                min: 0.0,
                max: e.ramp_ratio_max[k],
                limit_lo: 0.0,
                limit_hi: 1.0,
            })?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("CSV is UTF-8"))
    }

    /// One row per scenario: id, convergence, iterations, ψ and the tightest
    /// margin of each family.
    pub fn scenarios_csv(&self) -> Result<String, McsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "converged".into(), "iterations".into(), "psi".into()];
        header.extend(ConstraintFamily::ALL.iter().map(|f| format!("margin_{}", f.name())));
        header.push("violated".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.id.to_string(), r.converged.to_string(), r.iterations.to_string(), r.psi.to_string()];
            rec.extend(r.margins.iter().map(|m| m.to_string()));
            rec.push(r.violated.to_string());
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("CSV is UTF-8"))
    }
}
