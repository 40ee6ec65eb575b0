mod common;

use common::load;
use proptest::prelude::*;
use rcopf::acpf::{evaluate_constraints, run_pf, ConstraintFamily, Scenario, ScenarioLabel};
use rcopf::ipm::EmbeddedIpm;
use rcopf::mcs::{nominal_injections, ScenarioSampler, OUT_OF_RANGE_BAND};
use rcopf::opf::UncertaintySpec;
use rcopf::robust::{deterministic_setpoints, RobustSettings};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn draws_respect_their_region(seed in any::<u64>(), id in any::<u64>(), frac in 0.001f64..0.3) {
        let case = load("case14.m");
        let unc = UncertaintySpec::from_fractions(&case, frac, 0.0).unwrap();
        let mb = unc.bounds();
        let band: Vec<f64> = nominal_injections(&case).iter().map(|p| OUT_OF_RANGE_BAND * p).collect();
        let s = ScenarioSampler::new(&case, &unc, ScenarioLabel::InRange, seed).unwrap().scenario(id);
        prop_assert!(s.mu.iter().zip(&mb).all(|(m, b)| m.abs() <= *b));
        let s = ScenarioSampler::new(&case, &unc, ScenarioLabel::OutOfRange, seed).unwrap().scenario(id);
        for ((m, b), w) in s.mu.iter().zip(&mb).zip(&band) {
            prop_assert!(m.abs() > *b && m.abs() < b + w);
        }
    }

    #[test]
    fn flow_margin_is_relative(ratio in 0.0f64..2.0, k in 0usize..3) {
        let case = load("case3.m");
        let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
        let mut pf = run_pf(&case, &sp, &Scenario::nominal(case.loads.len())).unwrap();
        for (j, br) in case.branches.iter().enumerate() {
            let limit = br.p_max.unwrap();
            let r = if j == k { ratio } else { 0.0 };
            pf.p_from[j] = -r * limit;
            pf.p_to[j] = r * limit;
        }
        let rec = evaluate_constraints(&case, &sp, &pf);
        let flow = rec.family(ConstraintFamily::Flow).unwrap();
        prop_assert!((flow.margin - (1.0 - ratio)).abs() < 1e-12);
        prop_assert_eq!(flow.violated, 1.0 - ratio < -rcopf::acpf::FEAS_TOL);
    }

    #[test]
    fn power_flow_is_deterministic(a in -0.05f64..0.05, b in -0.05f64..0.05) {
        let case = load("case3.m");
        let sp = deterministic_setpoints(&case, &EmbeddedIpm, &RobustSettings::default()).unwrap();
        let sc = Scenario { id: 0, mu: vec![a, b], label: ScenarioLabel::InRange };
        let x = run_pf(&case, &sp, &sc).unwrap();
        let y = run_pf(&case, &sp, &sc).unwrap();
        prop_assert!(x.converged);
        prop_assert_eq!(x, y);
    }
}
