use num_complex::Complex64;
use owfsim::case::{ExciterParams, SgPlant};
use owfsim::emt::{ElementKind, NodalSystem, GROUND};
use owfsim::frames::phasor_to_abc;
use owfsim::machines::{exciter_step, SgMode, Synchronous};

const DT: f64 = 50e-6;
const WB: f64 = 2.0 * std::f64::consts::PI * 60.0;

fn plant() -> SgPlant {
    SgPlant {
        bus: 2,
        mva_base: 192.0,
        p_gen: 163.0 / 192.0,
        h: 3.33,
        xd: 1.72,
        xq: 1.6598,
        xd_p: 0.23,
        xq_p: 0.378,
        ra: 0.002,
        dynamics: Default::default(),
        exciter: Default::default(),
        governor: Default::default(),
    }
}

/// Machine on a stiff bus (an ideal source right at the terminals).
struct Rig {
    net: NodalSystem,
    sources: Vec<usize>,
    bus: [usize; 3],
    v: Complex64,
    m: Synchronous,
    t: f64,
}

impl Rig {
    fn new(v: Complex64, s: Complex64) -> Rig {
        let m = Synchronous::initialize(&plant(), v, s, 100.0, WB, DT, 0.0).unwrap();
        let mut net = NodalSystem::new(DT).unwrap();
        let bus = net.add_nodes::<3>();
        let mut sources = Vec::new();
        for &n in &bus {
            sources.push(
                net.stamp_element(ElementKind::IdealSource { e: 0.0 }, n, GROUND)
                    .unwrap(),
            );
            net.stamp_element(
                ElementKind::Resistor {
                    r: 1.0 / m.conductance(),
                },
                n,
                GROUND,
            )
            .unwrap();
        }
        Rig {
            net,
            sources,
            bus,
            v,
            m,
            t: 0.0,
        }
    }

    fn step(&mut self) -> [f64; 3] {
        self.t += DT;
        let e = phasor_to_abc(self.v, WB * self.t);
        for p in 0..3 {
            self.net.set_source(self.sources[p], e[p]).unwrap();
        }
        let inj_dev = self.m.injection(self.t);
        let mut inj = vec![0.0; 4];
        for p in 0..3 {
            inj[self.bus[p]] = inj_dev[p];
        }
        let v = self.net.solve_step(&inj).unwrap();
        let v_abc = self.bus.map(|n| v[n]);
        self.m.finish(v_abc, self.t)
    }

    fn run(&mut self, seconds: f64) {
        for _ in 0..(seconds / DT).round() as usize {
            self.step();
        }
    }
}

#[test]
fn no_load_machine_draws_no_current() {
    let mut rig = Rig::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    rig.m.set_mode(SgMode::GovernorOn).unwrap();
    rig.run(1.0);
    let i = rig.step();
    let peak = i.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    assert!(peak < 0.01, "{peak}");
}

#[test]
fn torque_step_accelerates_rotor_at_swing_rate() {
    let mut rig = Rig::new(
        Complex64::from_polar(1.025, 0.16),
        Complex64::new(1.63, 0.07),
    );
    rig.m.set_mode(SgMode::ExciterOn).unwrap();
    rig.run(0.05);
    let w0 = rig.m.state().speed;
    rig.m.state_mut().pm += 0.1;
    let span = 0.01;
    rig.run(span);
    let slope = (rig.m.state().speed - w0) / span;
    let expected = 0.1 / (2.0 * plant().h);
    assert!(
        (slope - expected).abs() / expected < 0.02,
        "{slope} vs {expected}"
    );
}

#[test]
fn constant_speed_mode_ignores_torque() {
    let mut rig = Rig::new(
        Complex64::from_polar(1.025, 0.16),
        Complex64::new(1.63, 0.07),
    );
    rig.m.set_mode(SgMode::ConstantSpeed).unwrap();
    rig.m.state_mut().pm += 0.5;
    rig.run(0.5);
    assert_eq!(rig.m.state().speed, 1.0);
}

#[test]
fn equilibrium_balances_power_and_holds_angle() {
    let mut rig = Rig::new(
        Complex64::from_polar(1.025, 0.16),
        Complex64::new(1.63, 0.07),
    );
    rig.run(0.2);
    for mode in [SgMode::ConstantSpeed, SgMode::ExciterOn, SgMode::GovernorOn] {
        rig.m.set_mode(mode).unwrap();
        rig.run(0.3);
    }
    let d0 = rig.m.state().delta;
    rig.run(1.0);
    let drift = (rig.m.state().delta - d0).abs() / 1.0;
    assert!(drift < 1e-5, "angle drift {drift} rad/s");
    let i = rig.m.stator_current();
    let losses = plant().ra * i.norm_sqr();
    let gap = (rig.m.state().pm - losses - rig.m.electrical_power()).abs();
    assert!(gap < 1e-4, "power mismatch {gap}");
    assert!((rig.m.electrical_power() - 163.0 / 192.0).abs() < 2e-3);
}

#[test]
fn exciter_step_response_time_constant() {
    let p = ExciterParams::default();
    let dt = 1e-5;
    let efd0 = 1.8;
    // +0.05 pu reference step: target efd0 + ka * 0.05 = 4.3, below the 5.0 ceiling.
    let target = efd0 + p.ka * 0.05;
    let mut efd = efd0;
    let mut t = 0.0;
    while efd < efd0 + (target - efd0) * (1.0 - (-1.0f64).exp()) {
        efd = exciter_step(efd, efd0, 1.05, 1.0, &p, dt);
        t += dt;
    }
    assert!((t - p.ta).abs() / p.ta < 0.05, "tau {t}");
}
