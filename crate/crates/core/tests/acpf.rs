mod common;

use common::{load, max_abs_diff};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcopf::acpf::*;
use rcopf::ipm::EmbeddedIpm;
use rcopf::opf::UncertaintySpec;
use rcopf::robust::{deterministic_setpoints, solve_robust, RobustSettings};

fn nominal(case: &rcopf::netcase::NetworkCase) -> Scenario {
    Scenario::nominal(case.loads.len() + case.res_units.len())
}

fn with_mu(mu: Vec<f64>) -> Scenario {
    Scenario {
        id: 0,
        mu,
        label: ScenarioLabel::InRange,
    }
}

#[test]
fn radial_dispatch_needs_no_mismatch() {
    for name in ["case2_lossy.m", "case4_radial.m", "star11.json"] {
        let case = load(name);
        let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
        let pf = run_pf(&case, &sp, &nominal(&case)).unwrap();
        assert!(pf.converged);
        assert!(pf.psi.abs() <= 1e-8, "{name}: psi {}", pf.psi);
        assert!(max_abs_diff(&pf.pg, &sp.pg) <= 1e-6);
    }
}

#[test]
fn unloaded_network_stays_flat() {
    let mut case = load("case3.m");
    for l in &mut case.loads {
        l.p_d = 0.0;
        l.q_d = 0.0;
    }
    for br in &mut case.branches {
        br.b_sh = 0.0;
    }
    let mut sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    sp.pg.iter_mut().for_each(|p| *p = 0.0);
    sp.vm.iter_mut().for_each(|v| *v = 1.0);
    let pf = run_pf(&case, &sp, &nominal(&case)).unwrap();
    assert!(pf.converged);
    assert!(pf.psi.abs() < 1e-12);
    assert!(pf.va.iter().all(|a| a.abs() < 1e-12));
    assert!(pf.vm.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!(pf.p_from.iter().chain(&pf.q_to).all(|f| f.abs() < 1e-12));
}

/// Receiving-end voltage of a two-bus line by Newton's method on
/// `V2·conj(y(V1 − V2)) = S_load`, written in rectangular form.
fn two_bus_oracle(v1: f64, y: Complex64, s_load: Complex64) -> Complex64 {
    let mut v2 = Complex64::new(1.0, 0.0);
    let f = |v: Complex64| v * (y * (Complex64::new(v1, 0.0) - v)).conj() - s_load;
    for _ in 0..50 {
        let r = f(v2);
        if r.norm() < 1e-15 {
            break;
        }
        let h = 1e-7;
        let dre = (f(v2 + h) - r) / h;
        let dim = (f(v2 + Complex64::new(0.0, h)) - r) / h;
        let det = dre.re * dim.im - dim.re * dre.im;
        let dx = (dim.im * r.re - dim.re * r.im) / det;
        let dy = (-dre.im * r.re + dre.re * r.im) / det;
        v2 -= Complex64::new(dx, dy);
    }
    v2
}

#[test]
fn two_bus_load_step_matches_oracle() {
    let case = load("case2_lossy.m");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let ld = &case.loads[0];
    let mu = 0.05 * ld.p_d;
    let pf = run_pf(&case, &sp, &with_mu(vec![mu])).unwrap();
    assert!(pf.converged);

    let br = &case.branches[0];
    let y = Complex64::new(br.r, br.x).inv();
    let v1 = sp.vm[0];
    let v2 = two_bus_oracle(v1, y, Complex64::new(ld.p_d + mu, ld.q_d + ld.lr * mu));
    let s1 = Complex64::new(v1, 0.0) * (y * (Complex64::new(v1, 0.0) - v2)).conj();
    assert!((pf.vm[1] - v2.norm()).abs() < 1e-8, "{} vs {}", pf.vm[1], v2.norm());
    assert!((pf.va[1] - v2.arg()).abs() < 1e-8);
    assert!((pf.pg[0] - s1.re).abs() < 1e-8);
    assert!((pf.psi - (s1.re - sp.pg[0])).abs() < 1e-8);
}

#[test]
fn overloaded_line_has_negative_margin() {
    let case = load("case3.m");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let mut pf = run_pf(&case, &sp, &nominal(&case)).unwrap();
    let limit = case.branches[0].p_max.unwrap();
    pf.p_from[0] = 1.03 * limit;
    let rec = evaluate_constraints(&case, &sp, &pf);
    let flow = rec.family(ConstraintFamily::Flow).unwrap();
    assert!((flow.margin + 0.03).abs() < 1e-12, "{}", flow.margin);
    assert!(flow.violated);
    assert!((flow.peak_ratio - 1.03).abs() < 1e-12);
    assert!(rec.violated().any(|f| f.family == ConstraintFamily::Flow));
}

#[test]
fn interior_point_has_no_violations() {
    let case = load("case4_radial.m");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let pf = run_pf(&case, &sp, &nominal(&case)).unwrap();
    let rec = evaluate_constraints(&case, &sp, &pf);
    assert!(!rec.any(), "{:?}", rec.violated().collect::<Vec<_>>());
    assert_eq!(rec.violated().count(), 0);
}

#[test]
fn power_balances_and_slack_is_shared() {
    let case = load("case14.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let participating: Vec<usize> = (0..case.generators.len())
        .filter(|&k| case.generators[k].participation > 0.0)
        .collect();
    assert!(participating.len() >= 2);
    for _ in 0..20 {
        let mu: Vec<f64> = unc.bounds().iter().map(|&b| b * rng.gen_range(-1.0..=1.0)).collect();
        let pf = run_pf(&case, &sp, &with_mu(mu.clone())).unwrap();
        assert!(pf.converged);
        let gen: f64 = pf.pg.iter().sum::<f64>() + pf.p_res.iter().sum::<f64>();
        let load: f64 = case.loads.iter().zip(&mu).map(|(l, m)| l.p_d + m).sum();
        let shunt: f64 = case.buses.iter().zip(&pf.vm).map(|(b, v)| b.g_shunt * v * v).sum();
        let losses: f64 = pf.p_from.iter().zip(&pf.p_to).map(|(a, b)| a + b).sum();
        assert!((gen - load - shunt - losses).abs() < 1e-7, "{}", gen - load - shunt - losses);
        let ratios: Vec<f64> = participating
            .iter()
            .map(|&k| (pf.pg[k] - sp.pg[k]) / case.generators[k].participation)
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-10);
            assert!((r - pf.psi).abs() < 1e-10);
        }
    }
}

#[test]
fn generator_buses_hold_setpoint_voltage() {
    let case = load("case14.m");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let pf = run_pf(&case, &sp, &nominal(&case)).unwrap();
    for ((&i, &v), &c) in sp.gen_buses.iter().zip(&sp.vm).zip(&sp.cii) {
        assert_eq!(pf.vm[i], v);
        assert!((v - c.sqrt()).abs() < 1e-15);
    }
    assert_eq!(pf.va[case.reference_bus()], 0.0);
}

#[test]
fn repeated_runs_are_identical() {
    let case = load("star11.json");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let mu: Vec<f64> = (0..case.loads.len() + case.res_units.len()).map(|j| 0.001 * j as f64).collect();
    let a = run_pf(&case, &sp, &with_mu(mu.clone())).unwrap();
    let b = run_pf(&case, &sp, &with_mu(mu)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn malformed_inputs_are_rejected() {
    let case = load("case3.m");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    assert!(matches!(
        run_pf(&case, &sp, &with_mu(vec![0.0])),
        Err(PfError::Dimension { expected: 2, got: 1 })
    ));
    let mut bad = sp.clone();
    bad.pg.pop();
    assert!(matches!(run_pf(&case, &bad, &nominal(&case)), Err(PfError::Setpoints(_))));
    let mut bad = sp.clone();
    bad.gen_buses.reverse();
    assert!(matches!(run_pf(&case, &bad, &nominal(&case)), Err(PfError::Setpoints(_))));
}

#[test]
fn impossible_load_reports_failure() {
    let case = load("case2_lossy.m");
    let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
    let pf = run_pf(&case, &sp, &with_mu(vec![100.0])).unwrap();
    assert!(!pf.converged);
    assert!(pf.failure.is_some());
}
