//! Positive-sequence AC power flow (full Newton, polar form) and the
//! initialization snapshot that seeds the time-domain run.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::case::{BusKind, SystemCase};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20;

/// Dense bus admittance matrix in case bus order.
pub fn build_ybus(case: &SystemCase) -> Result<DMatrix<Complex64>> {
    let n = case.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in case.branches.iter().filter(|b| b.is_closed()) {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::ZeroImpedance {
                from: br.from,
                to: br.to,
            });
        }
        let i = case
            .bus_index(br.from)
            .ok_or(Error::InvalidCase(format!("unknown bus {}", br.from)))?;
        let j = case
            .bus_index(br.to)
            .ok_or(Error::InvalidCase(format!("unknown bus {}", br.to)))?;
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ysh = Complex64::new(0.0, br.b_shunt / 2.0);
        y[(i, i)] += ys + ysh;
        y[(j, j)] += ys + ysh;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub bus_ids: Vec<u32>,
    pub vm: Vec<f64>,
    /// Angles in radians, slack at zero.
    pub va: Vec<f64>,
    /// Net injections computed from the solved voltages (system pu).
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    /// Per-SG output on the system base, in case order.
    pub sg_pq: Vec<(f64, f64)>,
    /// Per-GFL output on the system base, in case order.
    pub gfl_pq: Vec<(f64, f64)>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, idx: usize) -> Complex64 {
        Complex64::from_polar(self.vm[idx], self.va[idx])
    }

    pub fn index_of(&self, bus: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus)
    }
}

/// Scheduled (P, Q) injections per bus from fixed generation and loads.
fn scheduled_injections(case: &SystemCase) -> (Vec<f64>, Vec<f64>) {
    let n = case.buses.len();
    let sbase = case.system_mva_base;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for sg in &case.sg_plants {
        if let Some(i) = case.bus_index(sg.bus) {
            p[i] += sg.p_gen * sg.mva_base / sbase;
        }
    }
    for g in &case.gfl_plants {
        if let Some(i) = case.bus_index(g.bus) {
            p[i] += g.p_ref * g.mva_base / sbase;
            q[i] += g.q_ref * g.mva_base / sbase;
        }
    }
    for l in &case.loads {
        if let Some(i) = case.bus_index(l.bus) {
            p[i] -= l.p0;
            q[i] -= l.q0;
        }
    }
    (p, q)
}

fn calc_injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut cur = Complex64::new(0.0, 0.0);
            for k in 0..n {
                cur += y[(i, k)] * v[k];
            }
            v[i] * cur.conj()
        })
        .collect()
}

/// Solves the power flow from a flat start.
pub fn solve_powerflow(case: &SystemCase, tol: f64, max_iter: usize) -> Result<PowerFlowSolution> {
    let n = case.buses.len();
    let slacks: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusKind::Slack)
        .collect();
    if slacks.len() != 1 {
        return Err(Error::InvalidCase(format!(
            "power flow needs exactly one slack bus, found {}",
            slacks.len()
        )));
    }
    let y = build_ybus(case)?;
    let (p_sched, q_sched) = scheduled_injections(case);

    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.v_set })
        .collect();
    let mut va = vec![0.0; n];

    // Unknown ordering: angles of every non-slack bus, then magnitudes of PQ buses.
    let ang_idx: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind != BusKind::Slack)
        .collect();
    let mag_idx: Vec<usize> = (0..n)
        .filter(|&i| case.buses[i].kind == BusKind::Pq)
        .collect();
    let na = ang_idx.len();
    let dim = na + mag_idx.len();

    let mut iterations = 0;
    let mut max_mismatch;
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(vm[i], va[i]))
            .collect();
        let s = calc_injections(&y, &v);
        let mut f = DVector::zeros(dim);
        for (r, &i) in ang_idx.iter().enumerate() {
            f[r] = p_sched[i] - s[i].re;
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            f[na + r] = q_sched[i] - s[i].im;
        }
        max_mismatch = f.amax();
        if max_mismatch <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Diverged {
                iterations,
                mismatch: max_mismatch,
            });
        }
        if !max_mismatch.is_finite() {
            return Err(Error::Diverged {
                iterations,
                mismatch: max_mismatch,
            });
        }

        let jac = jacobian(&y, &vm, &va, &s, &ang_idx, &mag_idx);
        let dx = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Singular("power flow Jacobian".into()))?;
        for (r, &i) in ang_idx.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            vm[i] += dx[na + r];
        }
        iterations += 1;
    }

    let v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(vm[i], va[i]))
        .collect();
    let s = calc_injections(&y, &v);
    let (sg_pq, gfl_pq) = device_outputs(case, &s);
    Ok(PowerFlowSolution {
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        vm,
        va,
        p_inj: s.iter().map(|c| c.re).collect(),
        q_inj: s.iter().map(|c| c.im).collect(),
        sg_pq,
        gfl_pq,
        iterations,
        max_mismatch,
    })
}

/// Polar Jacobian of the mismatch with respect to (angles, magnitudes).
fn jacobian(
    y: &DMatrix<Complex64>,
    vm: &[f64],
    va: &[f64],
    s: &[Complex64],
    ang_idx: &[usize],
    mag_idx: &[usize],
) -> DMatrix<f64> {
    let na = ang_idx.len();
    let dim = na + mag_idx.len();
    let mut j = DMatrix::zeros(dim, dim);

    // dP_i/dθ_k, dP_i/dV_k, dQ_i/dθ_k, dQ_i/dV_k
    let d = |i: usize, k: usize| -> (f64, f64, f64, f64) {
        let g = y[(i, k)].re;
        let b = y[(i, k)].im;
        if i == k {
            let (p, q) = (s[i].re, s[i].im);
            let gii = g;
            let bii = b;
            (
                -q - bii * vm[i] * vm[i],
                p / vm[i] + gii * vm[i],
                p - gii * vm[i] * vm[i],
                q / vm[i] - bii * vm[i],
            )
        } else {
            let th = va[i] - va[k];
            let (sn, cs) = th.sin_cos();
            (
                vm[i] * vm[k] * (g * sn - b * cs),
                vm[i] * (g * cs + b * sn),
                -vm[i] * vm[k] * (g * cs + b * sn),
                vm[i] * (g * sn - b * cs),
            )
        }
    };

    for (r, &i) in ang_idx.iter().enumerate() {
        for (c, &k) in ang_idx.iter().enumerate() {
            j[(r, c)] = d(i, k).0;
        }
        for (c, &k) in mag_idx.iter().enumerate() {
            j[(r, na + c)] = d(i, k).1;
        }
    }
    for (r, &i) in mag_idx.iter().enumerate() {
        for (c, &k) in ang_idx.iter().enumerate() {
            j[(na + r, c)] = d(i, k).2;
        }
        for (c, &k) in mag_idx.iter().enumerate() {
            j[(na + r, na + c)] = d(i, k).3;
        }
    }
    // The mismatch is scheduled - calculated, so the Newton update solves J dx = f.
    j
}

/// Splits computed bus injections back onto devices. Fixed injections keep
/// their scheduled values; synchronous machines at slack/PV buses pick up
/// the remainder, shared in proportion to MVA rating.
/// `(p, q)` per device.
type DevicePq = Vec<(f64, f64)>;

fn device_outputs(case: &SystemCase, s: &[Complex64]) -> (DevicePq, DevicePq) {
    let sbase = case.system_mva_base;
    let gfl_pq: Vec<(f64, f64)> = case
        .gfl_plants
        .iter()
        .map(|g| (g.p_ref * g.mva_base / sbase, g.q_ref * g.mva_base / sbase))
        .collect();

    let mut sg_pq = vec![(0.0, 0.0); case.sg_plants.len()];
    for (bi, bus) in case.buses.iter().enumerate() {
        let sgs: Vec<usize> = (0..case.sg_plants.len())
            .filter(|&k| case.sg_plants[k].bus == bus.id)
            .collect();
        if sgs.is_empty() {
            continue;
        }
        let load: Complex64 = case
            .loads
            .iter()
            .filter(|l| l.bus == bus.id)
            .map(|l| Complex64::new(l.p0, l.q0))
            .sum();
        let fixed: Complex64 = case
            .gfl_plants
            .iter()
            .zip(&gfl_pq)
            .filter(|(g, _)| g.bus == bus.id)
            .map(|(_, &(p, q))| Complex64::new(p, q))
            .sum();
        let total = s[bi] + load - fixed;
        let rating: f64 = sgs.iter().map(|&k| case.sg_plants[k].mva_base).sum();
        for &k in &sgs {
            let sg = &case.sg_plants[k];
            let share = sg.mva_base / rating;
            let p = match bus.kind {
                BusKind::Slack => total.re * share,
                _ => sg.p_gen * sg.mva_base / sbase,
            };
            let q = match bus.kind {
                BusKind::Pq => 0.0,
                _ => total.im * share,
            };
            sg_pq[k] = (p, q);
        }
    }
    (sg_pq, gfl_pq)
}

// ---------------------------------------------------------------------------
// Initialization snapshot

/// Balanced three-phase sinusoid at one bus: `v_k(t) = magnitude * cos(w t + phase_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BusSource {
    pub bus: u32,
    pub magnitude: f64,
    /// Phase angles of phases a, b, c in radians.
    pub phases: [f64; 3],
    /// Generation and load at the bus from the converged solution (system pu).
    pub p_gen: f64,
    pub q_gen: f64,
    pub p_load: f64,
    pub q_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqTarget {
    pub bus: u32,
    /// System base.
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSnapshot {
    pub system_mva_base: f64,
    pub nominal_hz: f64,
    pub buses: Vec<BusSource>,
    pub sg: Vec<PqTarget>,
    pub gfl: Vec<PqTarget>,
    /// GFL references on their own base, carried from the case unchanged.
    pub gfl_refs: Vec<(f64, f64)>,
    pub loads: Vec<PqTarget>,
}

impl InitSnapshot {
    pub fn bus(&self, id: u32) -> Option<&BusSource> {
        self.buses.iter().find(|b| b.bus == id)
    }

    pub fn phasor(&self, id: u32) -> Option<Complex64> {
        self.bus(id)
            .map(|b| Complex64::from_polar(b.magnitude, b.phases[0]))
    }

    /// Text block written into the run log.
    ///
    /// ```text
    /// [INIT_SNAPSHOT]
    /// bus <id> vm <pu> va_deg <deg> pg <pu> qg <pu> pl <pu> ql <pu>
    /// sg <k> bus <id> p <pu> q <pu>
    /// gfl <k> bus <id> p <pu> q <pu>
    /// [/INIT_SNAPSHOT]
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::from("[INIT_SNAPSHOT]\n");
        for b in &self.buses {
            let _ = writeln!(
                out,
                "bus {} vm {:.10} va_deg {:.10} pg {:.10} qg {:.10} pl {:.10} ql {:.10}",
                b.bus,
                b.magnitude,
                b.phases[0].to_degrees(),
                b.p_gen,
                b.q_gen,
                b.p_load,
                b.q_load
            );
        }
        for (k, t) in self.sg.iter().enumerate() {
            let _ = writeln!(
                out,
                "sg {} bus {} p {:.10} q {:.10}",
                k + 1,
                t.bus,
                t.p,
                t.q
            );
        }
        for (k, t) in self.gfl.iter().enumerate() {
            let _ = writeln!(
                out,
                "gfl {} bus {} p {:.10} q {:.10}",
                k + 1,
                t.bus,
                t.p,
                t.q
            );
        }
        out.push_str("[/INIT_SNAPSHOT]\n");
        out
    }
}

/// Converts a converged solution into per-bus source sinusoids and
/// per-device power targets.
pub fn snapshot_for_emt(sol: &PowerFlowSolution, case: &SystemCase) -> InitSnapshot {
    let shift = 2.0 * PI / 3.0;
    let buses = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (p_load, q_load) = case
                .loads
                .iter()
                .filter(|l| l.bus == b.id)
                .fold((0.0, 0.0), |(p, q), l| (p + l.p0, q + l.q0));
            BusSource {
                bus: b.id,
                magnitude: sol.vm[i],
                phases: [sol.va[i], sol.va[i] - shift, sol.va[i] + shift],
                p_gen: sol.p_inj[i] + p_load,
                q_gen: sol.q_inj[i] + q_load,
                p_load,
                q_load,
            }
        })
        .collect();
    InitSnapshot {
        system_mva_base: case.system_mva_base,
        nominal_hz: case.nominal_hz,
        buses,
        sg: case
            .sg_plants
            .iter()
            .zip(&sol.sg_pq)
            .map(|(s, &(p, q))| PqTarget { bus: s.bus, p, q })
            .collect(),
        gfl: case
            .gfl_plants
            .iter()
            .zip(&sol.gfl_pq)
            .map(|(g, &(p, q))| PqTarget { bus: g.bus, p, q })
            .collect(),
        gfl_refs: case.gfl_plants.iter().map(|g| (g.p_ref, g.q_ref)).collect(),
        loads: case
            .loads
            .iter()
            .map(|l| PqTarget {
                bus: l.bus,
                p: l.p0,
                q: l.q0,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;

    const TWO_BUS: &str = "\
[BUS]
1 230 slack 1 1.0
2 230 PQ 1
[BRANCH]
1 2 0.0 0.1 0.0
[LOAD]
2 1.0 0.0
";

    #[test]
    fn ybus_single_reactance() {
        let c = parse_case("[BUS]\n1 230 slack 1\n2 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0\n").unwrap();
        let y = build_ybus(&c).unwrap();
        // 1 / (j0.1) = -j10
        assert!((y[(0, 1)] - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y[(1, 0)] - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y[(0, 0)] - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn ybus_half_shunt_on_each_end() {
        let base = "[BUS]\n1 230 slack 1\n2 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0\n";
        let with = "[BUS]\n1 230 slack 1\n2 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0.2\n";
        let y0 = build_ybus(&parse_case(base).unwrap()).unwrap();
        let y1 = build_ybus(&parse_case(with).unwrap()).unwrap();
        for i in 0..2 {
            assert!((y1[(i, i)] - y0[(i, i)] - Complex64::new(0.0, 0.1)).norm() < 1e-12);
        }
        assert_eq!(y1[(0, 1)], y0[(0, 1)]);
    }

    #[test]
    fn ybus_skips_open_breakers() {
        let a = "[BUS]\n1 230 slack 1\n2 230 PQ 1\n3 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0\n2 3 0.01 0.2 0.1 open\n";
        let b = "[BUS]\n1 230 slack 1\n2 230 PQ 1\n3 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0\n";
        assert_eq!(
            build_ybus(&parse_case(a).unwrap()).unwrap(),
            build_ybus(&parse_case(b).unwrap()).unwrap()
        );
    }

    #[test]
    fn ybus_rejects_zero_impedance() {
        let mut c = parse_case(TWO_BUS).unwrap();
        c.branches[0].x = 0.0;
        assert!(matches!(build_ybus(&c), Err(Error::ZeroImpedance { .. })));
    }

    #[test]
    fn zero_load_is_flat() {
        let c = parse_case("[BUS]\n1 230 slack 1\n2 230 PQ 1\n3 230 PQ 1\n[BRANCH]\n1 2 0.01 0.1 0\n2 3 0.01 0.1 0\n").unwrap();
        let sol = solve_powerflow(&c, 1e-10, 10).unwrap();
        for i in 0..3 {
            assert!((sol.vm[i] - 1.0).abs() < 1e-12);
            assert!(sol.va[i].abs() < 1e-12);
            assert!(sol.p_inj[i].abs() < 1e-12 && sol.q_inj[i].abs() < 1e-12);
        }
        let snap = snapshot_for_emt(&sol, &c);
        for b in &snap.buses {
            assert!((b.magnitude - 1.0).abs() < 1e-12);
            assert!(b.phases[0].abs() < 1e-12);
            assert!((b.phases[1] + 2.0 * PI / 3.0).abs() < 1e-12);
            assert!((b.phases[2] - 2.0 * PI / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_reported() {
        // Far beyond the transfer limit of a 0.1 pu reactance.
        let c =
            parse_case("[BUS]\n1 230 slack 1\n2 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0\n[LOAD]\n2 20 0\n")
                .unwrap();
        assert!(matches!(
            solve_powerflow(&c, 1e-10, 15),
            Err(Error::Diverged { .. }) | Err(Error::Singular(_))
        ));
    }

    #[test]
    fn snapshot_carries_gfl_reference() {
        let text = "[BUS]\n1 230 slack 1\n2 230 PQ 1\n[BRANCH]\n1 2 0 0.1 0\n[LOAD]\n2 1.0 0\n[SG]\n1 200 0 3 1.8 1.7 0.3 0.5 0\n[GFL]\n2 50 0.6 0.1\n";
        let c = parse_case(text).unwrap();
        let sol = solve_powerflow(&c, 1e-10, 10).unwrap();
        let snap = snapshot_for_emt(&sol, &c);
        assert_eq!(snap.gfl_refs, vec![(0.6, 0.1)]);
        assert!((snap.gfl[0].p - 0.3).abs() < 1e-15);
        assert!((snap.gfl[0].q - 0.05).abs() < 1e-15);
        // slack machine supplies the rest plus losses (lossless line here)
        assert!((snap.sg[0].p - 0.7).abs() < 1e-9);
    }
}
