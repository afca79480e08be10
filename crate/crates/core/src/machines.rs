//! Synchronous generator: two-axis electrical model, swing equation, a
//! single-lag exciter and a droop governor.
//!
//! Machine quantities are per-unit on the machine MVA base; the network
//! interface (currents, conductance) is on the system base. The rotor frame
//! has d on the real axis and q leading; a rotor-frame phasor maps to the
//! synchronous network frame by `e^{j(delta - pi/2)}`. The network sees an
//! EMF behind the mean of the two transient reactances.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::case::{ExciterParams, GovernorParams, SgPlant};
use crate::control::ComplexAverage;
use crate::emt::SourceBehindRl;
use crate::error::{Error, Result};
use crate::frames::{abc_from_space_vector, space_vector};

/// Start-up stages, entered strictly in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SgMode {
    /// Constant EMF behind the transient reactance at the snapshot value.
    VoltageSource,
    /// Flux dynamics active, field voltage and speed held.
    ConstantSpeed,
    /// Exciter and swing equation active, mechanical power held.
    ExciterOn,
    GovernorOn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgState {
    pub delta: f64,
    pub speed: f64,
    pub ed_p: f64,
    pub eq_p: f64,
    pub efd: f64,
    pub pm: f64,
    pub mode: SgMode,
}

/// Reference values captured at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgRefs {
    pub v_ref: f64,
    pub efd0: f64,
    pub p_ref: f64,
}

/// Single-lag exciter `Ta dEfd/dt = Efd0 + Ka (Vref - Vt) - Efd` with the
/// output clamped to its ceiling. Exact for a held terminal voltage.
pub fn exciter_step(efd: f64, efd0: f64, v_ref: f64, v_t: f64, p: &ExciterParams, dt: f64) -> f64 {
    let target = efd0 + p.ka * (v_ref - v_t);
    let next = if p.ta > 0.0 {
        target + (efd - target) * (-dt / p.ta).exp()
    } else {
        target
    };
    next.clamp(p.efd_min, p.efd_max)
}

/// Droop governor with a single-lag actuator:
/// `Tg dPm/dt = Pref - (speed - 1)/R - Pm`, clamped to `[p_min, p_max]`.
pub fn governor_step(pm: f64, p_ref: f64, speed: f64, p: &GovernorParams, dt: f64) -> f64 {
    let target = p_ref - (speed - 1.0) / p.r;
    let next = if p.tg > 0.0 {
        target + (pm - target) * (-dt / p.tg).exp()
    } else {
        target
    };
    next.clamp(p.p_min, p.p_max)
}

#[derive(Debug, Clone)]
pub struct Synchronous {
    plant: SgPlant,
    /// Machine base over system base.
    base_ratio: f64,
    omega_b: f64,
    dt: f64,
    state: SgState,
    refs: SgRefs,
    branch: SourceBehindRl,
    /// Rotor-frame stator current (machine base) from the last step.
    i_rotor: Complex64,
    v_rotor: Complex64,
    /// Stator current one step earlier, for extrapolating the saliency
    /// voltage to the end of the coming step.
    i_prev: Complex64,
    /// One-cycle average of the rotor-frame current driving the flux
    /// equations. Without damper windings nothing else damps the stator
    /// offset mode, which shows up at rated frequency in the rotor frame.
    i_flux: ComplexAverage,
}

fn rotor_to_net(delta: f64) -> Complex64 {
    Complex64::from_polar(1.0, delta - FRAC_PI_2)
}

impl Synchronous {
    /// Builds the machine in equilibrium with a terminal phasor `v` and an
    /// output `s` (system base) at time `t0`.
    pub fn initialize(
        plant: &SgPlant,
        v: Complex64,
        s: Complex64,
        system_mva: f64,
        omega_b: f64,
        dt: f64,
        t0: f64,
    ) -> Result<Self> {
        if !(plant.mva_base > 0.0) || !(plant.h > 0.0) || !(plant.xd_p > 0.0) {
            return Err(Error::InvalidValue(format!(
                "synchronous machine at bus {} is not initializable",
                plant.bus
            )));
        }
        if v.norm() < 1e-6 {
            return Err(Error::InvalidValue(format!(
                "zero terminal voltage at bus {}",
                plant.bus
            )));
        }
        let base_ratio = plant.mva_base / system_mva;
        let s_m = s / base_ratio;
        let i = (s_m / v).conj();
        let e_q = v + Complex64::new(plant.ra, plant.xq) * i;
        let delta = e_q.arg();
        let to_rotor = rotor_to_net(delta).conj();
        let vr = v * to_rotor;
        let ir = i * to_rotor;
        let ed_p = (plant.xq - plant.xq_p) * ir.im;
        let eq_p = vr.im + plant.ra * ir.im + plant.xd_p * ir.re;
        let efd = eq_p + (plant.xd - plant.xd_p) * ir.re;
        let pm = ed_p * ir.re + eq_p * ir.im + (plant.xq_p - plant.xd_p) * ir.re * ir.im;

        let z_scale = 1.0 / base_ratio;
        let x_int = 0.5 * (plant.xd_p + plant.xq_p);
        let mut branch = SourceBehindRl::new(plant.ra * z_scale, x_int * z_scale / omega_b, dt)?;
        let mut m = Synchronous {
            plant: plant.clone(),
            base_ratio,
            omega_b,
            dt,
            state: SgState {
                delta,
                speed: 1.0,
                ed_p,
                eq_p,
                efd,
                pm,
                mode: SgMode::VoltageSource,
            },
            refs: SgRefs {
                v_ref: v.norm(),
                efd0: efd,
                p_ref: pm,
            },
            branch: branch.clone(),
            i_rotor: ir,
            v_rotor: vr,
            i_prev: ir,
            i_flux: ComplexAverage::new(
                (2.0 * std::f64::consts::PI / (omega_b * dt)).round() as usize,
                ir,
            ),
        };
        let e_net = m.emf_rotor() * rotor_to_net(delta);
        branch.seed(e_net, v, i * base_ratio, omega_b * t0);
        m.branch = branch;
        Ok(m)
    }

    pub fn plant(&self) -> &SgPlant {
        &self.plant
    }

    pub fn state(&self) -> &SgState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SgState {
        &mut self.state
    }

    pub fn refs(&self) -> &SgRefs {
        &self.refs
    }

    pub fn refs_mut(&mut self) -> &mut SgRefs {
        &mut self.refs
    }

    pub fn mode(&self) -> SgMode {
        self.state.mode
    }

    /// Advances the start-up stage; going backwards is rejected.
    pub fn set_mode(&mut self, mode: SgMode) -> Result<()> {
        if mode < self.state.mode {
            return Err(Error::Schedule(format!(
                "machine at bus {} cannot go from {:?} back to {:?}",
                self.plant.bus, self.state.mode, mode
            )));
        }
        self.state.mode = mode;
        Ok(())
    }

    /// Per-phase conductance to stamp from the terminal bus to ground.
    pub fn conductance(&self) -> f64 {
        self.branch.conductance()
    }

    /// EMF behind the transient reactance, rotor frame.
    fn emf_rotor(&self) -> Complex64 {
        // The network sees the mean transient reactance; the remaining
        // saliency is an explicit term `j h conj(i)`. A plain one-step delay
        // on it feeds negative damping into the stator mode, so the current
        // is extrapolated to the end of the step.
        let i = 2.0 * self.i_rotor - self.i_prev;
        Complex64::new(self.state.ed_p, self.state.eq_p)
            + Complex64::i() * self.half_saliency() * i.conj()
    }

    fn half_saliency(&self) -> f64 {
        0.5 * (self.plant.xq_p - self.plant.xd_p)
    }

    /// Norton injection for the step ending at `t_next`.
    pub fn injection(&mut self, t_next: f64) -> [f64; 3] {
        let e = self.emf_rotor()
            * rotor_to_net(self.state.delta)
            * Complex64::from_polar(1.0, self.omega_b * t_next);
        self.branch.injection(abc_from_space_vector(e))
    }

    /// Completes the step with the solved terminal voltage at time `t`;
    /// returns the phase currents injected into the bus (system base).
    pub fn finish(&mut self, v_abc: [f64; 3], t: f64) -> [f64; 3] {
        let i_abc = self.branch.finish(v_abc);
        self.i_prev = self.i_rotor;
        let to_rotor =
            (rotor_to_net(self.state.delta) * Complex64::from_polar(1.0, self.omega_b * t)).conj();
        self.i_rotor = space_vector(i_abc) * to_rotor / self.base_ratio;
        self.v_rotor = space_vector(v_abc) * to_rotor;
        self.i_flux.push(self.i_rotor);
        self.advance();
        i_abc
    }

    /// Electrical output power on the machine base.
    pub fn electrical_power(&self) -> f64 {
        let (v, i) = (self.v_rotor, self.i_rotor);
        v.re * i.re + v.im * i.im
    }

    pub fn terminal_voltage(&self) -> f64 {
        self.v_rotor.norm()
    }

    pub fn stator_current(&self) -> Complex64 {
        self.i_rotor
    }

    fn air_gap_torque(&self, ed_p: f64, eq_p: f64) -> f64 {
        let p = &self.plant;
        let i = self.i_rotor;
        ed_p * i.re + eq_p * i.im + (p.xq_p - p.xd_p) * i.re * i.im
    }

    fn derivatives(&self, s: &SgState) -> (f64, f64, f64, f64) {
        let p = &self.plant;
        let d = &p.dynamics;
        let i = self.i_flux.value();
        let deq = (-s.eq_p - (p.xd - p.xd_p) * i.re + s.efd) / d.td0_p;
        let ded = (-s.ed_p + (p.xq - p.xq_p) * i.im) / d.tq0_p;
        if s.mode >= SgMode::ExciterOn {
            let te = self.air_gap_torque(s.ed_p, s.eq_p);
            let dw = (s.pm - te - d.damping * (s.speed - 1.0)) / (2.0 * p.h);
            let ddelta = self.omega_b * (s.speed - 1.0);
            (ded, deq, dw, ddelta)
        } else {
            (ded, deq, 0.0, 0.0)
        }
    }

    /// Integrates the machine states over one step (Heun) with the stator
    /// current held, then the controllers.
    fn advance(&mut self) {
        let s0 = self.state;
        if s0.mode == SgMode::VoltageSource {
            return;
        }
        let dt = self.dt;
        let k1 = self.derivatives(&s0);
        let mut s1 = s0;
        s1.ed_p += dt * k1.0;
        s1.eq_p += dt * k1.1;
        s1.speed += dt * k1.2;
        s1.delta += dt * k1.3;
        let k2 = self.derivatives(&s1);
        let mut s = s0;
        s.ed_p += 0.5 * dt * (k1.0 + k2.0);
        s.eq_p += 0.5 * dt * (k1.1 + k2.1);
        s.speed += 0.5 * dt * (k1.2 + k2.2);
        s.delta += 0.5 * dt * (k1.3 + k2.3);
        if s.mode >= SgMode::ExciterOn {
            s.efd = exciter_step(
                s.efd,
                self.refs.efd0,
                self.refs.v_ref,
                self.terminal_voltage(),
                &self.plant.exciter,
                dt,
            );
        }
        if s.mode >= SgMode::GovernorOn {
            s.pm = governor_step(s.pm, self.refs.p_ref, s.speed, &self.plant.governor, dt);
        }
        self.state = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exciter_holds_at_reference() {
        let p = ExciterParams::default();
        assert_eq!(exciter_step(1.8, 1.8, 1.02, 1.02, &p, 1e-3), 1.8);
    }

    #[test]
    fn exciter_respects_ceiling() {
        let p = ExciterParams::default();
        let mut efd = 1.0;
        for _ in 0..10_000 {
            efd = exciter_step(efd, 1.0, 1.0, 0.5, &p, 1e-3);
            assert!(efd <= p.efd_max);
        }
        assert_eq!(efd, p.efd_max);
        for _ in 0..10_000 {
            efd = exciter_step(efd, 1.0, 1.0, 1.5, &p, 1e-3);
            assert!(efd >= p.efd_min);
        }
        assert_eq!(efd, p.efd_min);
    }

    #[test]
    fn governor_droop() {
        let p = GovernorParams {
            p_min: -1.0,
            ..Default::default()
        };
        assert_eq!(governor_step(0.6, 0.6, 1.0, &p, 1e-3), 0.6);
        let mut pm = 0.6;
        for _ in 0..20_000 {
            pm = governor_step(pm, 0.6, 1.01, &p, 1e-3);
        }
        assert!((pm - 0.4).abs() < 1e-9);
    }

    #[test]
    fn modes_only_move_forward() {
        let plant = SgPlant {
            bus: 1,
            mva_base: 100.0,
            p_gen: 0.5,
            h: 3.0,
            xd: 1.0,
            xq: 0.8,
            xd_p: 0.3,
            xq_p: 0.5,
            ra: 0.0,
            dynamics: Default::default(),
            exciter: Default::default(),
            governor: Default::default(),
        };
        let mut m = Synchronous::initialize(
            &plant,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.1),
            100.0,
            377.0,
            50e-6,
            0.0,
        )
        .unwrap();
        m.set_mode(SgMode::ExciterOn).unwrap();
        assert!(m.set_mode(SgMode::ConstantSpeed).is_err());
        m.set_mode(SgMode::GovernorOn).unwrap();
    }
}
