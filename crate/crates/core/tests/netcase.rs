use nalgebra::DMatrix;
use num_complex::Complex64;
use rcopf::netcase::*;
use std::path::PathBuf;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> NetworkCase {
    let path = fixture(name);
    let bytes = std::fs::read(&path).unwrap();
    parse_case(&bytes, CaseFormat::from_path(&path), &McaseOptions::default()).unwrap()
}

/// Dense admittance from incidence matrices, `Y = Cfᵀ Yf + Ctᵀ Yt + diag(shunt)`.
fn dense_oracle(case: &NetworkCase) -> DMatrix<Complex64> {
    let n = case.buses.len();
    let m = case.branches.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut cf = DMatrix::from_element(m, n, zero);
    let mut ct = DMatrix::from_element(m, n, zero);
    let mut yf = DMatrix::from_element(m, n, zero);
    let mut yt = DMatrix::from_element(m, n, zero);
    for (k, br) in case.branches.iter().enumerate() {
        let den = br.r * br.r + br.x * br.x;
        let ys = Complex64::new(br.r / den, -br.x / den);
        let bc = Complex64::new(0.0, br.b_sh / 2.0);
        let t = Complex64::new(br.tap * br.shift.cos(), br.tap * br.shift.sin());
        let (f, to) = (case.idx(br.from), case.idx(br.to));
        cf[(k, f)] = Complex64::new(1.0, 0.0);
        ct[(k, to)] = Complex64::new(1.0, 0.0);
        yf[(k, f)] = (ys + bc) / (t * t.conj());
        yf[(k, to)] = -ys / t.conj();
        yt[(k, f)] = -ys / t;
        yt[(k, to)] = ys + bc;
    }
    let mut y = cf.transpose() * yf + ct.transpose() * yt;
    for (i, b) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(b.g_shunt, b.b_shunt);
    }
    y
}

#[test]
fn two_bus_case_parses() {
    let c = load("case2.m");
    assert_eq!(c.buses.len(), 2);
    assert_eq!(c.branches.len(), 1);
    assert_eq!(c.generators.len(), 1);
    assert_eq!(c.loads.len(), 1);
    assert_eq!(c.buses[0].bus_type, BusType::Reference);
    assert_eq!(c.buses[1].bus_type, BusType::LoadOnly);
    let g = &c.generators[0];
    assert!((g.a - 10.0).abs() < 1e-12);
    assert!((g.b - 2.0).abs() < 1e-12);
    assert!((g.p_max - 2.0).abs() < 1e-12);
    assert!((g.participation - 1.0).abs() < 1e-12);
    assert!((g.ramp_limit - 1.5).abs() < 1e-12);
    let l = &c.loads[0];
    assert!((l.p_d - 1.0).abs() < 1e-12 && (l.q_d - 0.2).abs() < 1e-12);
    assert!((l.lr - 0.2).abs() < 1e-12);
    assert_eq!(c.branches[0].p_max, Some(1.5));
    assert!((c.branches[0].theta_diff_max - DEFAULT_THETA_DIFF).abs() < 1e-15);
}

#[test]
fn fourteen_bus_case_parses() {
    let c = load("case14.m");
    assert_eq!(c.buses.len(), 14);
    assert_eq!(c.branches.len(), 20);
    assert_eq!(c.generators.len(), 5);
    assert_eq!(c.loads.len(), 11);
    assert!((c.total_load() - 2.59).abs() < 1e-12);
    let rho: f64 = c.generators.iter().map(|g| g.participation).sum();
    assert!((rho - 1.0).abs() < 1e-12);
    // cheaper units carry larger participation
    assert!(c.generators[0].participation > c.generators[4].participation);
    assert!((c.buses[8].b_shunt - 0.19).abs() < 1e-12);
    assert_eq!(c.generator_buses(), vec![0, 1, 2, 5, 7]);
}

#[test]
fn every_fixture_validates() {
    for name in ["case2.m", "case2_lossy.m", "case3.m", "case4_radial.m", "case14.m", "star11.json"] {
        let c = load(name);
        c.validate().unwrap();
    }
}

#[test]
fn json_round_trip_is_lossless() {
    for name in ["case3.m", "case14.m", "star11.json"] {
        let c = load(name);
        let text = to_json(&c);
        let back = parse_case(text.as_bytes(), CaseFormat::NativeJson, &McaseOptions::default()).unwrap();
        assert_eq!(c, back);
        assert_eq!(text, to_json(&back));
    }
}

#[test]
fn single_line_admittance() {
    let c = load("case2.m");
    let y = build_admittance(&c).unwrap();
    assert!((y.get(0, 1).im - 10.0).abs() < 1e-12);
    assert!((y.get(0, 0).im + 10.0).abs() < 1e-12);
    assert!(y.get(0, 1).re.abs() < 1e-15);
}

#[test]
fn tap_scales_from_side_self_admittance() {
    let mut c = load("case2.m");
    let base = build_admittance(&c).unwrap();
    c.branches[0].tap = 1.05;
    let tapped = build_admittance(&c).unwrap();
    assert!((tapped.get(0, 0) - base.get(0, 0) / (1.05 * 1.05)).norm() < 1e-12);
    assert!((tapped.get(1, 1) - base.get(1, 1)).norm() < 1e-12);
    assert!((tapped.get(0, 1) - base.get(0, 1) / 1.05).norm() < 1e-12);
}

#[test]
fn admittance_matches_dense_oracle() {
    for name in ["case3.m", "case14.m", "star11.json"] {
        let c = load(name);
        let sparse = build_admittance(&c).unwrap().to_dense();
        let dense = dense_oracle(&c);
        let err = (sparse - dense).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "{name}: {err}");
    }
}

#[test]
fn phase_shifter_breaks_symmetry() {
    let mut c = load("case2.m");
    c.branches[0].shift = 0.1;
    let y = build_admittance(&c).unwrap();
    assert!((y.get(0, 1) - y.get(1, 0)).norm() > 1e-3);
    let dense = dense_oracle(&c);
    assert!((y.to_dense() - dense).iter().all(|v| v.norm() < 1e-12));
}

#[test]
fn admittance_is_permutation_equivariant() {
    let c = load("case14.m");
    let y = build_admittance(&c).unwrap().to_dense();
    // relabel bus k as 100 - k, which reverses the bus order
    let mut p = c.clone();
    let map = |id: usize| 100 - id;
    for b in &mut p.buses {
        b.id = map(b.id);
    }
    for br in &mut p.branches {
        br.from = map(br.from);
        br.to = map(br.to);
    }
    for g in &mut p.generators {
        g.bus = map(g.bus);
    }
    for l in &mut p.loads {
        l.bus = map(l.bus);
    }
    let p = p.normalize().unwrap();
    let yp = build_admittance(&p).unwrap().to_dense();
    let n = c.buses.len();
    for i in 0..n {
        for j in 0..n {
            assert!((y[(i, j)] - yp[(n - 1 - i, n - 1 - j)]).norm() < 1e-14);
        }
    }
}

#[test]
fn zero_impedance_rejected() {
    let mut c = load("case2.m");
    c.branches[0].r = 0.0;
    c.branches[0].x = 0.0;
    assert!(matches!(build_admittance(&c), Err(CaseError::ZeroImpedance { from: 1, to: 2 })));
}

#[test]
fn res_placement_zero_is_identity() {
    let c = load("case14.m");
    assert_eq!(place_res(&c, 0.0, None).unwrap(), c);
}

#[test]
fn res_placement_two_bus() {
    let c = load("case2.m");
    let r = place_res(&c, 0.3, None).unwrap();
    assert_eq!(r.res_units.len(), 1);
    assert_eq!(r.res_units[0].bus, 2);
    assert!((r.res_units[0].p_r - 0.6).abs() < 1e-12);
    assert!((r.res_units[0].s_max - 0.72).abs() < 1e-12);
}

#[test]
fn res_placement_fills_largest_loads_first() {
    let c = load("case14.m");
    let r = place_res(&c, 0.3, None).unwrap();
    let total: f64 = r.res_units.iter().map(|u| u.p_r).sum();
    assert!((total - 0.3 * c.total_gen_capacity()).abs() < 1e-12);
    // 1.02 pu fits in bus 3 (0.942) and part of bus 4 (0.478)
    let bus3 = r.res_units.iter().find(|u| u.bus == 3).unwrap();
    let bus4 = r.res_units.iter().find(|u| u.bus == 4).unwrap();
    assert!((bus3.p_r - 0.942).abs() < 1e-12);
    assert!((bus4.p_r - (1.02 - 0.942)).abs() < 1e-12);
    assert_eq!(r.res_units.len(), 2);
}

#[test]
fn res_placement_spreads_excess_by_demand() {
    let c = load("case2.m");
    // 0.6 × 2.0 = 1.2 pu against 1.0 pu of demand
    let r = place_res(&c, 0.6, None).unwrap();
    assert_eq!(r.res_units.len(), 1);
    assert!((r.res_units[0].p_r - 1.2).abs() < 1e-12);
}

#[test]
fn seeded_placement_is_deterministic() {
    let c = load("case14.m");
    let a = place_res(&c, 0.2, Some(7)).unwrap();
    let b = place_res(&c, 0.2, Some(7)).unwrap();
    assert_eq!(a, b);
    let total: f64 = a.res_units.iter().map(|u| u.p_r).sum();
    assert!((total - 0.2 * c.total_gen_capacity()).abs() < 1e-12);
}

#[test]
fn penetration_out_of_range_rejected() {
    let c = load("case2.m");
    assert!(place_res(&c, 1.5, None).is_err());
    assert!(place_res(&c, -0.1, None).is_err());
}

#[test]
fn quadratic_cost_needs_tangent_flag() {
    let src = std::fs::read_to_string(fixture("case2.m"))
        .unwrap()
        .replace("2\t0\t0\t2\t0.1\t2;", "2\t0\t0\t3\t0.001\t0.1\t2;");
    let err = parse_mcase(&src, &McaseOptions::default()).unwrap_err();
    assert!(matches!(err, CaseError::Unsupported { .. }), "{err}");
    let c = parse_mcase(&src, &McaseOptions { quadratic_tangent: true }).unwrap();
    // tangent at 100 MW: slope 2·0.001·100 + 0.1 = 0.3 $/MWh
    assert!((c.generators[0].a - 30.0).abs() < 1e-12);
    assert!((c.generators[0].b - 0.0).abs() < 1e-12);
}

#[test]
fn unsupported_cost_model_rejected() {
    let src = std::fs::read_to_string(fixture("case2.m"))
        .unwrap()
        .replace("2\t0\t0\t2\t0.1\t2;", "1\t0\t0\t2\t0\t0\t200\t20;");
    assert!(matches!(
        parse_mcase(&src, &McaseOptions::default()),
        Err(CaseError::Unsupported { .. })
    ));
}

#[test]
fn unclosed_matrix_reports_line() {
    let src = std::fs::read_to_string(fixture("case2.m")).unwrap();
    let cut = src.replacen("];", "", 1);
    match parse_mcase(&cut, &McaseOptions::default()) {
        Err(CaseError::Syntax { line, .. }) => assert!(line > 0),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bad_number_reports_line() {
    let src = std::fs::read_to_string(fixture("case2.m")).unwrap().replace("230\t1\t1.1\t0.9;\n\t2", "230\t1\t1.1\tx9;\n\t2");
    assert!(matches!(parse_mcase(&src, &McaseOptions::default()), Err(CaseError::Syntax { line: 9, .. })));
}

#[test]
fn out_of_service_elements_are_skipped() {
    let src = std::fs::read_to_string(fixture("case3.m")).unwrap().replace(
        "1\t3\t0.015\t0.12\t0.02\t250\t250\t250\t0\t0\t1",
        "1\t3\t0.015\t0.12\t0.02\t250\t250\t250\t0\t0\t0",
    );
    let c = parse_mcase(&src, &McaseOptions::default()).unwrap();
    assert_eq!(c.branches.len(), 2);
}

#[test]
fn invariants_are_enforced() {
    let base = load("case3.m");
    let mut two_refs = base.clone();
    two_refs.buses[1].bus_type = BusType::Reference;
    assert!(matches!(two_refs.validate(), Err(CaseError::ReferenceBus(2))));

    let mut rho = base.clone();
    rho.generators[0].participation += 0.1;
    assert!(rho.validate().is_err());

    let mut island = base.clone();
    island.branches.retain(|b| b.to != 3 && b.from != 3);
    assert!(island.validate().is_err());

    let mut volts = base.clone();
    volts.buses[2].v_min = 1.2;
    assert!(volts.validate().is_err());

    let mut lr = base.clone();
    lr.loads[0].lr = 0.9;
    assert!(lr.validate().is_err());
}

#[test]
fn per_unit_injections_close_on_base_mva() {
    // MW totals survive the per-unit round trip
    let c = load("case14.m");
    let mw: f64 = c.loads.iter().map(|l| l.p_d * c.base_mva).sum();
    assert!((mw - 259.0).abs() < 1e-9);
    let mvar: f64 = c.loads.iter().map(|l| l.q_d * c.base_mva).sum();
    assert!((mvar - 73.5).abs() < 1e-9);
}
