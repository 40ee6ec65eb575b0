mod common;

use common::{load, max_abs_diff, rel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcopf::ipm::{EmbeddedIpm, SolverSettings};
use rcopf::netcase::NetworkCase;
use rcopf::opf::*;
use rcopf::robust::*;

fn settings() -> RobustSettings {
    RobustSettings::default()
}

fn primal_objective(case: &NetworkCase, unc: &UncertaintySpec, mu: &[f64]) -> f64 {
    let (_, p) = build_robust_primal(case, unc, mu, DEFAULT_EPS_THETA).unwrap();
    let sol = p.solve(&EmbeddedIpm, &SolverSettings::default()).unwrap();
    sol.objective
}

/// Worst case over every vertex of the box, by brute force.
fn vertex_max(case: &NetworkCase, unc: &UncertaintySpec) -> (f64, Vec<f64>) {
    let mb = unc.bounds();
    let n = mb.len();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for m in 0..(1usize << n) {
        let mu: Vec<f64> = (0..n).map(|j| if m >> j & 1 == 1 { mb[j] } else { -mb[j] }).collect();
        let v = primal_objective(case, unc, &mu);
        if v > best.0 {
            best = (v, mu);
        }
    }
    best
}

#[test]
fn worst_case_matches_vertex_enumeration() {
    for name in ["case3.m", "case4_radial.m"] {
        let case = load(name);
        let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
        let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
        let (best, mu) = vertex_max(&case, &unc);
        assert!(rel(sp.objective, best) < 1e-6, "{name}: {} vs {best}", sp.objective);
        assert_eq!(sp.mu_star, mu, "{name}");
    }
}

#[test]
fn worst_case_sits_on_box_vertices() {
    let case = load("star11.json");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    for (m, b) in sp.mu_star.iter().zip(unc.bounds()) {
        assert!(m.abs() == b, "{m} vs ±{b}");
    }
    assert!(sp.complementarity_ok);
    assert!(sp.big_m_usage < 1.0 - BIG_M_MARGIN);
}

#[test]
fn zero_box_collapses_to_deterministic() {
    for name in ["case3.m", "case14.m"] {
        let case = load(name);
        let unc = UncertaintySpec::from_fractions(&case, 0.0, 0.0).unwrap();
        let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
        let det = deterministic_setpoints(&case, &EmbeddedIpm, &settings()).unwrap();
        assert!(rel(sp.objective, det.objective) < 1e-6, "{name}: {} vs {}", sp.objective, det.objective);
        assert!(sp.mu_star.iter().all(|&m| m == 0.0));
        assert!(max_abs_diff(&sp.pg, &det.pg) < 1e-4, "{name}");
    }
}

#[test]
fn strong_duality_cross_check() {
    for name in ["case2_lossy.m", "case3.m", "case4_radial.m", "case14.m", "star11.json"] {
        let case = load(name);
        let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
        let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
        let r = cross_check_strong_duality(&case, &sp, &EmbeddedIpm, &settings()).unwrap();
        assert!(r.rel_gap <= 1e-5, "{name}: gap {}", r.rel_gap);
        assert!(r.max_setpoint_diff <= 1e-5, "{name}: dx {}", r.max_setpoint_diff);
    }
}

#[test]
fn budget_cross_check_and_limits() {
    let case = load("case3.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sel = select_budget(&case, &unc, 1, &EmbeddedIpm, &settings()).unwrap();
    assert_eq!(sel.alpha.iter().sum::<f64>(), 1.0);
    assert!(sel.scores.is_some());
    let r = cross_check_strong_duality(&case, &sel.setpoints, &EmbeddedIpm, &settings()).unwrap();
    assert!(r.rel_gap <= 1e-5, "gap {}", r.rel_gap);
    // only the selected parameter deviates
    for (m, a) in sel.setpoints.mu_star.iter().zip(&sel.alpha) {
        assert_eq!(*m != 0.0, *a == 1.0);
    }
    assert!(select_budget(&case, &unc, 3, &EmbeddedIpm, &settings()).is_err());
    let mut gamma = unc.clone();
    gamma.budget = Budget::Gamma(1);
    assert!(build_dual_rc(&case, &gamma, RcMode::Budget, Some(&[true, true]), DEFAULT_EPS_THETA).is_err());
    assert!(build_dual_rc(&case, &gamma, RcMode::Budget, Some(&[true]), DEFAULT_EPS_THETA).is_err());
}

#[test]
fn budget_is_monotone_and_collapses() {
    let case = load("case14.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let n = unc.len();
    let det = deterministic_setpoints(&case, &EmbeddedIpm, &settings()).unwrap();
    let full = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    let mut last = f64::NEG_INFINITY;
    for gamma in [0, 1, 3, n] {
        let sel = select_budget(&case, &unc, gamma, &EmbeddedIpm, &settings()).unwrap();
        let obj = sel.setpoints.objective;
        assert!(obj >= last - 1e-6 * obj.abs(), "Γ={gamma}: {obj} < {last}");
        last = obj;
        if gamma == 0 {
            assert!(rel(obj, det.objective) < 1e-6, "{obj} vs {}", det.objective);
        }
        if gamma == n {
            assert!(rel(obj, full.objective) < 1e-6, "{obj} vs {}", full.objective);
        }
    }
}

#[test]
fn worst_case_dominates_random_scenarios() {
    let case = load("case3.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    let mb = unc.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let mu: Vec<f64> = mb.iter().map(|&b| b * rng.gen_range(-1.0..=1.0)).collect();
        let v = primal_objective(&case, &unc, &mu);
        assert!(v <= sp.objective * (1.0 + 1e-7), "{mu:?}: {v} > {}", sp.objective);
    }
}

#[test]
fn larger_box_costs_more() {
    let case = load("case4_radial.m");
    let mut last = f64::NEG_INFINITY;
    for frac in [0.0, 0.02, 0.05, 0.08] {
        let unc = UncertaintySpec::from_fractions(&case, frac, 0.0).unwrap();
        let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
        assert!(sp.objective >= last - 1e-9 * sp.objective.abs(), "{frac}: {} < {last}", sp.objective);
        last = sp.objective;
    }
}

#[test]
fn recovered_mismatch_respects_ramps() {
    let case = load("case3.m");
    let case = apply_ramp_policy(
        &case,
        RampPolicy::Capacity { fraction: 0.05 },
        DEFAULT_EPS_THETA,
        &EmbeddedIpm,
        &SolverSettings::default(),
    )
    .unwrap();
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    let r = cross_check_strong_duality(&case, &sp, &EmbeddedIpm, &settings()).unwrap();
    for g in &case.generators {
        for psi in [sp.psi, r.psi_primal] {
            assert!((g.participation * psi).abs() <= g.ramp_limit + 1e-6, "{psi}");
        }
    }
}

#[test]
fn setpoints_are_consistent() {
    let case = load("case14.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    assert_eq!(sp.pg.len(), case.generators.len());
    assert_eq!(sp.gen_buses, case.generator_buses());
    for ((v, c), &i) in sp.vm.iter().zip(&sp.cii).zip(&sp.gen_buses) {
        assert!((v * v - c).abs() < 1e-12);
        let b = &case.buses[i];
        assert!(*v >= b.v_min - 1e-6 && *v <= b.v_max + 1e-6);
    }
    for (p, g) in sp.pg.iter().zip(&case.generators) {
        assert!(*p >= g.p_min - 1e-6 && *p <= g.p_max + 1e-6);
    }
    assert!(sp.psi_range.0 <= sp.psi && sp.psi <= sp.psi_range.1);
    assert!(sp.big_m_usage > 0.0 && sp.big_m_usage < 1.0 - BIG_M_MARGIN);
}

#[test]
fn tiny_big_m_saturates() {
    let case = load("case3.m");
    let mut unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    unc.big_m = Some(1e-3);
    let err = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap_err();
    assert!(matches!(err, RobustError::BigMSaturated { .. }), "{err}");
}

#[test]
fn participation_refinement() {
    let case = load("case2_lossy.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    let r = refine_participation(&case, &sp, &EmbeddedIpm, &settings()).unwrap();
    assert_eq!(r.rho.len(), 1);
    assert!((r.rho[0] - 1.0).abs() < 1e-6);

    let case = load("case3.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.0).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    let r = refine_participation(&case, &sp, &EmbeddedIpm, &settings()).unwrap();
    assert!((r.rho.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(r.rho.iter().all(|&p| p >= -1e-8));
    assert!(r.reduction_pct >= -1e-4, "{}", r.reduction_pct);
}

#[test]
fn relaxation_is_tight_on_radial_networks() {
    for name in ["case2_lossy.m", "case4_radial.m"] {
        let case = load(name);
        let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
        let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
        let r = exactness_check(&case, &sp, ExactnessObjective::default(), &EmbeddedIpm, &settings()).unwrap();
        assert!(r.cone_residual <= 1e-7, "{name}: {}", r.cone_residual);
        assert!(r.hatted_cone_residual <= 1e-7, "{name}: {}", r.hatted_cone_residual);
    }
}

#[test]
fn setpoints_round_trip_through_json() {
    let case = load("case4_radial.m");
    let unc = UncertaintySpec::from_fractions(&case, 0.05, 0.15).unwrap();
    let sp = solve_robust(&case, &unc, &EmbeddedIpm, &settings()).unwrap();
    let text = serde_json::to_string(&sp).unwrap();
    let back: RobustSetpoints = serde_json::from_str(&text).unwrap();
    assert_eq!(sp, back);
    let report = RobustReport::new(&sp);
    let back: RobustReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(report, back);
}
