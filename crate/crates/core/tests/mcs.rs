mod common;

use common::load;
use rcopf::acpf::{ConstraintFamily, ScenarioLabel};
use rcopf::ipm::EmbeddedIpm;
use rcopf::mcs::*;
use rcopf::netcase::NetworkCase;
use rcopf::opf::UncertaintySpec;
use rcopf::robust::{deterministic_setpoints, solve_robust, RobustSetpoints, RobustSettings};

fn robust(name: &str) -> (NetworkCase, UncertaintySpec, RobustSetpoints) {
    let case = load(name);
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    (case, unc, sp)
}

#[test]
fn scenarios_are_reproducible() {
    let case = load("case14.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let a: Vec<_> = generate_scenarios(&case, &unc, ScenarioLabel::InRange, 50, 11).unwrap().collect();
    let b: Vec<_> = generate_scenarios(&case, &unc, ScenarioLabel::InRange, 50, 11).unwrap().collect();
    let c: Vec<_> = generate_scenarios(&case, &unc, ScenarioLabel::InRange, 50, 12).unwrap().collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
    // any scenario can be regenerated on its own
    let sampler = ScenarioSampler::new(&case, &unc, ScenarioLabel::InRange, 11).unwrap();
    assert_eq!(sampler.scenario(37), a[37]);
    assert!(a.iter().enumerate().all(|(i, s)| s.id == i as u64));
}

#[test]
fn in_range_draws_are_uniform_on_the_box() {
    let case = load("case3.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let n = 100_000;
    let mb = unc.bounds();
    let mut sum = vec![0.0; mb.len()];
    let mut sq = vec![0.0; mb.len()];
    for s in generate_scenarios(&case, &unc, ScenarioLabel::InRange, n, 5).unwrap() {
        assert_eq!(s.label, ScenarioLabel::InRange);
        for (j, &m) in s.mu.iter().enumerate() {
            assert!(m.abs() <= mb[j]);
            sum[j] += m;
            sq[j] += m * m;
        }
    }
    let nf = n as f64;
    for (j, &m) in mb.iter().enumerate() {
        let mean = sum[j] / nf;
        let var = sq[j] / nf;
        let sd_mean = m / 3f64.sqrt() / nf.sqrt();
        let sd_var = (4.0 / 45.0f64).sqrt() * m * m / nf.sqrt();
        assert!(mean.abs() <= 3.0 * sd_mean, "mean {mean}");
        assert!((var - m * m / 3.0).abs() <= 3.0 * sd_var, "var {var}");
    }
}

#[test]
fn out_of_range_draws_leave_the_box() {
    let case = load("star11.json");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
    let mb = unc.bounds();
    let band: Vec<f64> = nominal_injections(&case).iter().map(|p| OUT_OF_RANGE_BAND * p).collect();
    let mut positive = 0usize;
    let n = 4000;
    for s in generate_scenarios(&case, &unc, ScenarioLabel::OutOfRange, n, 9).unwrap() {
        for (j, &m) in s.mu.iter().enumerate() {
            assert!(m.abs() > mb[j] && m.abs() < mb[j] + band[j], "{m}");
            positive += usize::from(m > 0.0);
        }
    }
    let total = (n * mb.len()) as f64;
    let frac = positive as f64 / total;
    assert!((frac - 0.5).abs() <= 3.0 * 0.5 / total.sqrt(), "{frac}");
}

#[test]
fn degenerate_requests_are_rejected() {
    let case = load("case3.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    assert!(matches!(
        generate_scenarios(&case, &unc, ScenarioLabel::InRange, 0, 1),
        Err(McsError::NoScenarios)
    ));
    let zero = UncertaintySpec::from_fractions(&case, 0.0, 0.0).unwrap();
    assert!(matches!(
        ScenarioSampler::new(&case, &zero, ScenarioLabel::OutOfRange, 1),
        Err(McsError::EmptyBox)
    ));
    // the zero box is fine in range: every draw is nominal
    let s = ScenarioSampler::new(&case, &zero, ScenarioLabel::InRange, 1).unwrap();
    assert!(s.scenario(0).mu.iter().all(|&m| m == 0.0));
    let mut idle = case.clone();
    idle.loads[1].p_d = 0.0;
    assert!(matches!(
        ScenarioSampler::new(&idle, &unc, ScenarioLabel::OutOfRange, 1),
        Err(McsError::DegenerateBand(1))
    ));
    let star = load("star11.json");
    assert!(matches!(
        ScenarioSampler::new(&star, &unc, ScenarioLabel::InRange, 1),
        Err(McsError::Dimension { .. })
    ));
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    assert!(matches!(
        validate(&case, &sp, &unc, ScenarioLabel::InRange, 0, 1, None),
        Err(McsError::NoScenarios)
    ));
}

#[test]
fn verdict_agrees_with_rows() {
    let (case, unc, sp) = robust("case3.m");
    for mode in [ScenarioLabel::InRange, ScenarioLabel::OutOfRange] {
        let r = validate(&case, &sp, &unc, mode, 500, 2, None).unwrap();
        assert_eq!(r.rows.len(), 500);
        assert_eq!(r.violations, r.rows.iter().filter(|x| x.violated).count());
        assert_eq!(r.divergences, r.rows.iter().filter(|x| !x.converged).count());
        assert_eq!(r.robust, r.violations == 0 && r.divergences == 0);
        assert_eq!(r.violation_probability, r.violations as f64 / 500.0);
        assert!(r.histogram.values().sum::<usize>() >= r.violations);
        assert_eq!(r.histogram.len(), ConstraintFamily::ALL.len() + 1);
        // a violated row has a negative margin or failed to converge
        for row in &r.rows {
            let neg = row.margins.iter().any(|&m| m < -rcopf::acpf::FEAS_TOL);
            assert_eq!(row.violated, neg || !row.converged);
        }
    }
}

#[test]
fn robust_dispatch_survives_its_box_but_not_beyond() {
    let (case, unc, sp) = robust("case14.m");
    let inr = validate(&case, &sp, &unc, ScenarioLabel::InRange, 2000, 1, None).unwrap();
    let out = validate(&case, &sp, &unc, ScenarioLabel::OutOfRange, 2000, 1, None).unwrap();
    assert!(inr.robust, "{:?}", inr.histogram);
    assert!(out.violation_probability >= inr.violation_probability);
}

#[test]
fn thread_count_does_not_change_the_report() {
    let (case, unc, sp) = robust("star11.json");
    let many = validate(&case, &sp, &unc, ScenarioLabel::OutOfRange, 300, 4, None).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool
        .install(|| validate(&case, &sp, &unc, ScenarioLabel::OutOfRange, 300, 4, None))
        .unwrap();
    assert_eq!(many.scenarios_csv().unwrap(), one.scenarios_csv().unwrap());
    assert_eq!(many.histogram, one.histogram);
    assert_eq!(many.envelope, one.envelope);
    assert_eq!(many.violations, one.violations);
}

#[test]
fn envelope_bounds_every_scenario() {
    let (case, unc, sp) = robust("case3.m");
    let r = validate(&case, &sp, &unc, ScenarioLabel::InRange, 300, 8, None).unwrap();
    let e = &r.envelope;
    let flow = ConstraintFamily::ALL.iter().position(|&f| f == ConstraintFamily::Flow).unwrap();
    let worst_ratio = e.flow_ratio_max.iter().cloned().fold(0.0, f64::max);
    let tightest = r.rows.iter().map(|x| x.margins[flow]).fold(f64::INFINITY, f64::min);
    assert!((tightest - (1.0 - worst_ratio)).abs() < 1e-12);
    for row in &r.rows {
        assert!(e.psi_min <= row.psi && row.psi <= e.psi_max);
    }
    for k in 0..case.generators.len() {
        assert!(e.pg_min[k] <= e.pg_max[k] && e.qg_min[k] <= e.qg_max[k]);
    }
    for i in 0..case.buses.len() {
        assert!(e.vm_min[i] <= e.vm_max[i]);
    }
}

#[test]
fn setpoint_distance_to_reference() {
    let (case, unc, sp) = robust("case4_radial.m");
    let r = validate(&case, &sp, &unc, ScenarioLabel::InRange, 10, 1, Some(&sp)).unwrap();
    assert_eq!(r.eta, Some(0.0));
    let det = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let r = validate(&case, &sp, &unc, ScenarioLabel::InRange, 10, 1, Some(&det)).unwrap();
    let expect = sp.x().iter().zip(det.x()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(r.eta, Some(expect));
    assert!(validate(&case, &sp, &unc, ScenarioLabel::InRange, 10, 1, None).unwrap().eta.is_none());
}

#[test]
fn csv_tables_have_one_row_per_item() {
    let (case, unc, sp) = robust("case3.m");
    let r = validate(&case, &sp, &unc, ScenarioLabel::InRange, 25, 1, None).unwrap();
    let scen = r.scenarios_csv().unwrap();
    let lines: Vec<&str> = scen.lines().collect();
    assert_eq!(lines.len(), 26);
    assert!(lines[0].starts_with("id,converged,iterations,psi,margin_flow"));
    assert_eq!(lines[0].split(',').count(), 5 + ConstraintFamily::ALL.len());
    let env = r.envelope_csv(&case).unwrap();
    assert_eq!(
        env.lines().count(),
        1 + case.branches.len() + case.buses.len() + 3 * case.generators.len()
    );
    // the report serializes without the per-scenario rows
    let json = serde_json::to_value(&r).unwrap();
    assert!(json.get("rows").is_none());
    assert_eq!(json["n_s"], 25);
}
