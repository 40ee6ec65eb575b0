use crate::artifacts::*;
use crate::config::{ConfigArgs, StudyConfig};
use anyhow::{Context, Result};
use rcopf::acpf::ScenarioLabel;
use rcopf::conic::{ConicError, ConicStatus};
use rcopf::ipm::EmbeddedIpm;
use rcopf::mcs::validate;
use rcopf::netcase::{to_json, NetworkCase};
use rcopf::opf::{apply_ramp_policy, OpfError, RampPolicy, UncertaintySpec};
use rcopf::robust::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_VIOLATIONS: u8 = 4;

fn settings(config: &StudyConfig) -> RobustSettings {
    let mut s = RobustSettings {
        eps_theta: config.eps_theta,
        ..Default::default()
    };
    s.primal_solver.tolerance = config.tolerance;
    // multiplier recovery needs a tighter dual solve
    s.dual_solver.tolerance = config.tolerance * 1e-2;
    s
}

fn infeasible_status(s: ConicStatus) -> bool {
    matches!(s, ConicStatus::Infeasible | ConicStatus::Unbounded)
}

fn opf_exit_code(e: &OpfError) -> u8 {
    match e {
        OpfError::Conic(ConicError::NotOptimal(s)) if infeasible_status(*s) => EXIT_INFEASIBLE,
        OpfError::Conic(_) => EXIT_NUMERICAL,
        OpfError::InfeasibleBounds(_) | OpfError::ResRating { .. } => EXIT_INFEASIBLE,
        OpfError::Case(_) | OpfError::Parameter(_) | OpfError::Dimension { .. } => EXIT_INPUT,
    }
}

/// Exit code of a failed solve.
pub fn exit_code(e: &RobustError) -> u8 {
    match e {
        RobustError::NotOptimal { status, .. } if infeasible_status(*status) => EXIT_INFEASIBLE,
        RobustError::Conic(ConicError::NotOptimal(s)) if infeasible_status(*s) => EXIT_INFEASIBLE,
        RobustError::Opf(o) => opf_exit_code(o),
        _ => EXIT_NUMERICAL,
    }
}

/// Case with RES placed and ramp limits set from the deterministic base point.
fn prepared_case(config: &StudyConfig, log: &mut String) -> Result<Result<NetworkCase, RobustError>> {
    let case = config.load_case()?;
    writeln!(
        log,
        "case {}: {} buses, {} branches, {} generators, {} loads, {} RES units",
        config.case.display(),
        case.buses.len(),
        case.branches.len(),
        case.generators.len(),
        case.loads.len(),
        case.res_units.len()
    )?;
    let s = settings(config);
    Ok(apply_ramp_policy(
        &case,
        RampPolicy::BasePoint {
            fraction: config.ramp_fraction,
        },
        config.eps_theta,
        &EmbeddedIpm,
        &s.primal_solver,
    )
    .map_err(RobustError::from))
}

fn uncertainty(config: &StudyConfig, case: &NetworkCase) -> Result<UncertaintySpec, RobustError> {
    let mut unc = UncertaintySpec::from_fractions(case, config.load_uncertainty, config.res_uncertainty)?;
    unc.budget = config.budget;
    Ok(unc)
}

fn solve_inner(config: &StudyConfig, mode: SolveMode, case: &NetworkCase, log: &mut String) -> Result<SolutionFile, RobustError> {
    let s = settings(config);
    let mut diagnostics = Diagnostics::default();
    let sp = match mode {
        SolveMode::Deterministic => deterministic_setpoints(case, &EmbeddedIpm, &s)?,
        SolveMode::Robust => {
            let unc = uncertainty(config, case)?;
            let sp = solve_robust(case, &unc, &EmbeddedIpm, &s)?;
            let _ = writeln!(log, "counterpart: {:?}, {} orientation rounds", sp.solver_status, sp.orientation_rounds);
            match cross_check_strong_duality(case, &sp, &EmbeddedIpm, &s) {
                Ok(r) => {
                    let _ = writeln!(log, "strong duality: rel gap {:.3e}, setpoint diff {:.3e}", r.rel_gap, r.max_setpoint_diff);
                    diagnostics.strong_duality = Some(r);
                }
                Err(e) => diagnostics.notes.push(format!("strong-duality cross-check: {e}")),
            }
            match exactness_check(case, &sp, ExactnessObjective::default(), &EmbeddedIpm, &s) {
                Ok(r) => {
                    let _ = writeln!(log, "exactness: cone residual {:.3e}, angle residual {:.3e}", r.cone_residual, r.angle_residual);
                    diagnostics.exactness = Some(r);
                }
                Err(e) => diagnostics.notes.push(format!("exactness check: {e}")),
            }
            sp
        }
    };
    diagnostics.duality_gap = sp.duality_gap;
    diagnostics.orientation_rounds = sp.orientation_rounds;
    diagnostics.big_m_usage = sp.big_m_usage;
    let _ = writeln!(log, "{} objective {:.10} ({:?})", mode.name(), sp.objective, sp.solver_status);
    for n in &diagnostics.notes {
        let _ = writeln!(log, "note: {n}");
    }
    Ok(SolutionFile {
        config_hash: String::new(),
        mode,
        case: case_name(config),
        config: stored_config(config),
        objective: sp.objective,
        setpoints: sp,
        diagnostics,
    })
}

pub fn cmd_solve(args: &ConfigArgs, mode: SolveMode) -> Result<u8> {
    let config = args.resolve()?;
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    let hash = config.hash()?;
    let mut run = Run::new(&config.output_dir, hash.clone())?;
    let mut log = format!("config {hash}\n");
    let outcome = prepared_case(&config, &mut log)?.and_then(|case| solve_inner(&config, mode, &case, &mut log));
    let code = match outcome {
        Ok(mut sol) => {
            sol.config_hash = hash.clone();
            let objective = sol.objective;
            let path = run.write_json(&format!("solution-{}", mode.name()), &Artifact::Solution(sol))?;
            println!("{} objective {objective:.6} -> {}", mode.name(), path.display());
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            writeln!(log, "error: {e}")?;
            eprintln!("error: {e}");
            code
        }
    };
    run.write(&format!("solve-{}", mode.name()), "log", log.as_bytes())?;
    run.finish(&format!("solve-{}", mode.name()), &stored_config(&config), code)?;
    Ok(code)
}

fn load_setpoints(path: &Path) -> Result<(RobustSetpoints, Option<SolveMode>, String)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading setpoints {}", path.display()))?;
    let digest: String = Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect();
    let value: serde_json::Value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("kind").is_some() {
        match serde_json::from_value(value)? {
            Artifact::Solution(s) => Ok((s.setpoints, Some(s.mode), digest)),
            Artifact::Validation(_) => anyhow::bail!("{} is a validation report, not a solution", path.display()),
        }
    } else {
        Ok((serde_json::from_value(value)?, None, digest))
    }
}

pub fn cmd_validate(args: &ConfigArgs, setpoints: &Path, mode: ScenarioLabel, reference: Option<&Path>) -> Result<u8> {
    let config = args.resolve()?;
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    let (sp, solution_mode, digest) = load_setpoints(setpoints)?;
    let reference = reference.map(load_setpoints).transpose()?.map(|r| r.0);
    let hash = config.hash()?;
    let mut run = Run::new(&config.output_dir, hash.clone())?;
    let mut log = format!("config {hash}\nsetpoints {} ({digest})\n", setpoints.display());
    let case = match prepared_case(&config, &mut log)? {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit_code(&e));
        }
    };
    let unc = UncertaintySpec::from_fractions(&case, config.load_uncertainty, config.res_uncertainty)?;
    let report = validate(&case, &sp, &unc, mode, config.n_s, config.seed, reference.as_ref())?;
    let tag = match mode {
        ScenarioLabel::InRange => "in-range",
        ScenarioLabel::OutOfRange => "out-of-range",
    };
    let stem = format!("{tag}-{digest}");
    run.write(&format!("envelope-{stem}"), "csv", report.envelope_csv(&case)?.as_bytes())?;
    for (name, csv) in split_envelope(&report.envelope_csv(&case)?) {
        run.write(&format!("{name}-{stem}"), "csv", csv.as_bytes())?;
    }
    run.write(&format!("scenarios-{stem}"), "csv", report.scenarios_csv()?.as_bytes())?;
    let summary = format!(
        "{tag}: {} of {} scenarios violate ({:.4} %), {} diverged",
        report.violations,
        report.n_s,
        100.0 * report.violation_probability,
        report.divergences
    );
    println!("{summary}");
    writeln!(log, "{summary}")?;
    let code = if mode == ScenarioLabel::InRange && !report.robust {
        EXIT_VIOLATIONS
    } else {
        EXIT_OK
    };
    let file = Artifact::Validation(ValidationFile {
        config_hash: hash,
        setpoints_digest: digest,
        solution_mode,
        case: case_name(&config),
        config: stored_config(&config),
        report,
    });
    run.write_json(&format!("report-{stem}"), &file)?;
    run.write(&format!("validate-{stem}"), "log", log.as_bytes())?;
    run.finish(&format!("validate-{stem}"), &stored_config(&config), code)?;
    Ok(code)
}

pub fn cmd_convert(input: &Path, output: Option<&Path>, quadratic_tangent: bool) -> Result<u8> {
    let config = StudyConfig {
        case: input.to_path_buf(),
        quadratic_tangent,
        ..Default::default()
    };
    let case = config.load_case()?;
    let mut json = to_json(&case);
    json.push('\n');
    match output {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Default, serde::Serialize)]
struct ReportRow {
    case: String,
    config_hash: String,
    mode: String,
    budget: String,
    load_pct: f64,
    res_pct: f64,
    objective: Option<f64>,
    in_range_violation_pct: Option<f64>,
    out_of_range_violation_pct: Option<f64>,
    eta: Option<f64>,
}

type Rows = std::collections::BTreeMap<(String, String, String), ReportRow>;

fn entry<'a>(rows: &'a mut Rows, config: &StudyConfig, case: &str, hash: &str, mode: &str) -> &'a mut ReportRow {
    rows.entry((case.to_string(), hash.to_string(), mode.to_string()))
        .or_insert_with(|| ReportRow {
            case: case.into(),
            config_hash: hash.into(),
            mode: mode.into(),
            budget: match config.budget {
                rcopf::opf::Budget::Full => "full".to_string(),
                rcopf::opf::Budget::Gamma(g) => g.to_string(),
            },
            load_pct: 100.0 * config.load_uncertainty,
            res_pct: 100.0 * config.res_uncertainty,
            ..Default::default()
        })
}

/// Comparison table over solve and validation artifacts, one row per
/// `(case, config hash, mode)`.
pub fn cmd_report(inputs: &[PathBuf], output: Option<&Path>) -> Result<u8> {
    let mut rows = Rows::new();
    for p in inputs {
        match read_artifact(p)? {
            Artifact::Solution(s) => {
                entry(&mut rows, &s.config, &s.case, &s.config_hash, s.mode.name()).objective = Some(s.objective);
            }
            Artifact::Validation(v) => {
                let mode = v.solution_mode.map_or("unknown", SolveMode::name);
                let r = entry(&mut rows, &v.config, &v.case, &v.config_hash, mode);
                let pct = Some(100.0 * v.report.violation_probability);
                match v.report.mode {
                    ScenarioLabel::InRange => r.in_range_violation_pct = pct,
                    ScenarioLabel::OutOfRange => r.out_of_range_violation_pct = pct,
                }
                r.eta = v.report.eta.or(r.eta);
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows.values() {
        w.serialize(r)?;
    }
    let table = String::from_utf8(w.into_inner()?)?;
    match output {
        Some(p) => std::fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{table}"),
    }
    Ok(EXIT_OK)
}
