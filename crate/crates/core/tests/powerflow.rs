mod common;

use common::{fixture, radial};
use num_complex::Complex64;
use owfsim::case::{parse_case, BusKind, SystemCase};
use owfsim::error::Error;
use owfsim::powerflow::{snapshot_for_emt, solve_powerflow, PowerFlowSolution};
use proptest::prelude::*;

/// Complex power injected at every bus, summed from pi-model branch flows.
fn injections_from_branches(case: &SystemCase, sol: &PowerFlowSolution) -> Vec<Complex64> {
    let mut s = vec![Complex64::new(0.0, 0.0); case.buses.len()];
    for br in case.branches.iter().filter(|b| b.is_closed()) {
        let (f, t) = (
            case.bus_index(br.from).unwrap(),
            case.bus_index(br.to).unwrap(),
        );
        let (vf, vt) = (sol.voltage(f), sol.voltage(t));
        let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ysh = Complex64::new(0.0, br.b_shunt / 2.0);
        s[f] += vf * ((vf - vt) * y + vf * ysh).conj();
        s[t] += vt * ((vt - vf) * y + vt * ysh).conj();
    }
    s
}

/// Generation minus load at each bus as scheduled by the case.
fn scheduled(case: &SystemCase) -> Vec<Complex64> {
    let mut s = vec![Complex64::new(0.0, 0.0); case.buses.len()];
    let base = case.system_mva_base;
    for g in &case.sg_plants {
        s[case.bus_index(g.bus).unwrap()] += g.p_gen * g.mva_base / base;
    }
    for g in &case.gfl_plants {
        s[case.bus_index(g.bus).unwrap()] += Complex64::new(g.p_ref, g.q_ref) * g.mva_base / base;
    }
    for l in &case.loads {
        s[case.bus_index(l.bus).unwrap()] -= Complex64::new(l.p0, l.q0);
    }
    s
}

/// Checks the solution against branch flows: P and Q at PQ buses, P at PV
/// buses, set magnitudes at PV and slack buses.
fn check_solution(case: &SystemCase, sol: &PowerFlowSolution, tol: f64) {
    let flows = injections_from_branches(case, sol);
    let sched = scheduled(case);
    for (i, b) in case.buses.iter().enumerate() {
        assert!((flows[i].re - sol.p_inj[i]).abs() < tol, "bus {}", b.id);
        assert!((flows[i].im - sol.q_inj[i]).abs() < tol, "bus {}", b.id);
        match b.kind {
            BusKind::Pq => assert!((flows[i] - sched[i]).norm() < tol, "bus {}", b.id),
            BusKind::Pv => {
                assert!((flows[i].re - sched[i].re).abs() < tol, "bus {}", b.id);
                assert!((sol.vm[i] - b.v_set).abs() < tol);
            }
            BusKind::Slack => {
                assert!((sol.vm[i] - b.v_set).abs() < tol);
                assert!(sol.va[i].abs() < tol);
            }
        }
    }
}

#[test]
fn nine_bus_fixture_converges_quickly() {
    let case = fixture("ninebus.case");
    let sol = solve_powerflow(&case, 1e-10, 10).unwrap();
    assert!(sol.iterations <= 10);
    assert!(sol.max_mismatch < 1e-8);
    check_solution(&case, &sol, 1e-8);
    // Published operating point of this grid: the slack supplies about 0.72 pu
    // with the third machine's 0.85 pu carried by the inverter.
    let slack = sol.p_inj[case.bus_index(1).unwrap()];
    assert!((slack - 0.716).abs() < 0.01, "{slack}");
}

#[test]
fn snapshot_balances_generation_and_load() {
    let case = fixture("ninebus.case");
    let sol = solve_powerflow(&case, 1e-10, 10).unwrap();
    let snap = snapshot_for_emt(&sol, &case);
    assert_eq!(snap.buses.len(), 9);
    for (i, b) in snap.buses.iter().enumerate() {
        assert!((b.p_gen - b.p_load - sol.p_inj[i]).abs() < 1e-12);
        assert!((b.q_gen - b.q_load - sol.q_inj[i]).abs() < 1e-12);
        assert!((b.magnitude - sol.vm[i]).abs() < 1e-12);
    }
    assert!(snap.to_text().contains("bus"));
}

#[test]
fn two_bus_matches_fixed_point_iteration() {
    let text = "[BUS]\n1 230 slack 1 1.0\n2 230 PQ 1\n[BRANCH]\n1 2 0.02 0.1 0.05\n\
                [LOAD]\n2 0.8 0.3\n[SG]\n1 200 0.4 5 1.8 1.7 0.3 0.5 0\n";
    let sol = solve_powerflow(&parse_case(text).unwrap(), 1e-12, 20).unwrap();
    let y = Complex64::new(1.0, 0.0) / Complex64::new(0.02, 0.1);
    let y22 = y + Complex64::new(0.0, 0.025);
    let mut v2 = Complex64::new(1.0, 0.0);
    for _ in 0..2000 {
        v2 = ((Complex64::new(-0.8, -0.3) / v2).conj() + y) / y22;
    }
    assert!((sol.voltage(1) - v2).norm() < 1e-8);
}

#[test]
fn overload_reports_divergence() {
    let text = "[BUS]\n1 230 slack 1 1.0\n2 230 PQ 1\n[BRANCH]\n1 2 0 0.5 0\n\
                [LOAD]\n2 20 5\n[SG]\n1 200 0.4 5 1.8 1.7 0.3 0.5 0\n";
    let err = solve_powerflow(&parse_case(text).unwrap(), 1e-10, 20).unwrap_err();
    assert!(
        matches!(err, Error::Diverged { .. } | Error::Singular(_)),
        "{err:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radial_solutions_satisfy_branch_flows(case in radial()) {
        let sol = solve_powerflow(&case, 1e-10, 20);
        // Heavily loaded long feeders may legitimately have no solution.
        if let Ok(sol) = sol {
            prop_assert!(sol.max_mismatch < 1e-8);
            check_solution(&case, &sol, 1e-8);
            let losses: Complex64 = injections_from_branches(&case, &sol).iter().sum();
            prop_assert!(losses.re >= -1e-10);
        }
    }
}
