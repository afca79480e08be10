//! Aggregated Type-4 wind plant: rotor aerodynamics, MPPT and pitch, a
//! reduced permanent-magnet machine behind the rotor-side converter, the DC
//! link with its chopper, and the grid-side converter behind its filter.
//!
//! Every control quantity is per-unit on the plant base (`n` turbines times
//! the turbine rating), which is identical to per-unit on one turbine. The
//! turbine count only enters through the conversion to the system base.

mod aero;
mod converter;
mod dclink;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::case::{OwfParams, OwfPlant};
use crate::emt::SourceBehindRl;
use crate::error::{Error, Result};
use crate::frames::{abc_from_space_vector, from_dq, space_vector, to_dq};
use crate::gfl::{pll_step, PllGains, PllState};

pub use aero::{cp, cp_peak, mppt_ref, pitch_step, PitchState, Rotor, CP_COEFFS};
pub use converter::{
    gsc_step, lvrt_scale, rsc_step, CurrentLoop, GscControl, GscMeasurements, RscControl,
    RscMeasurements, OUTER_FREEZE_V,
};
pub use dclink::{chopper_step, dclink_step, ChopperState, DcLink, DcStepAudit};

/// Lowest rotor speed the mechanics are allowed to reach.
const OMEGA_FLOOR: f64 = 0.05;

/// Start-up stage reached by a plant. Stages only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OwfStage {
    /// Grid-side converter tracks zero current; turbine parked at its
    /// optimal speed.
    Idle,
    GscEnabled,
    TurbineStarted,
    RscEnabled,
}

/// Quantities computed in the last step, for recording.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OwfOutputs {
    /// Complex power delivered at the converter terminal, plant pu.
    pub s_term: Complex64,
    pub p_gsc: f64,
    pub p_rsc: f64,
    pub p_aero: f64,
    pub p_order: f64,
    pub v_term: f64,
    pub v_poi: f64,
    pub wind: f64,
}

#[derive(Debug, Clone)]
pub struct OwfModel {
    params: OwfParams,
    n_turbines: u32,
    /// Plant base over system base.
    base_ratio: f64,
    omega_b: f64,
    dt: f64,
    rotor: Rotor,
    gains: PllGains,
    filter: SourceBehindRl,
    pub pll: PllState,
    pub gsc: GscControl,
    pub rsc: RscControl,
    pub dc: DcLink,
    pub pitch: PitchState,
    /// Rotor speed, pu.
    pub omega: f64,
    /// Stator current and converter voltage in the rotor frame.
    i_s: Complex64,
    u_r: Complex64,
    f_prev: Complex64,
    /// Converter voltage command for the coming step, space vector.
    u_cmd: Complex64,
    stage: OwfStage,
    tripped: bool,
    pub out: OwfOutputs,
}

impl OwfModel {
    /// Builds a plant parked behind its open breaker. `v_poi` is the POI
    /// phasor at `t0`, used to pre-lock the PLL.
    pub fn new(
        plant: &OwfPlant,
        system_mva: f64,
        f_nom: f64,
        v_poi: Complex64,
        wind: f64,
        dt: f64,
        t0: f64,
    ) -> Result<Self> {
        let p = plant.params;
        if plant.n_turbines == 0 {
            return Err(Error::InvalidValue(
                "wind plant needs at least one turbine".into(),
            ));
        }
        let omega_b = 2.0 * PI * f_nom;
        let base_ratio = plant.rating_mw() / system_mva;
        // Filter impedance on the system base.
        let mut filter = SourceBehindRl::new(p.r_f / base_ratio, p.x_f / base_ratio / omega_b, dt)?;
        // Idle converter: EMF equal to the terminal voltage, no current.
        filter.seed(v_poi, v_poi, Complex64::new(0.0, 0.0), omega_b * t0);
        let rotor = Rotor::from_params(&p);
        let u_next = v_poi * Complex64::from_polar(1.0, omega_b * (t0 + dt));
        let theta = u_next.arg();
        let mut dc = DcLink::new(
            p.c_dc,
            p.v_dc_ref,
            p.chopper_on,
            p.chopper_off,
            plant.chopper_enabled,
        );
        dc.prime(0.0, 0.0);
        let mut m = OwfModel {
            params: p,
            n_turbines: plant.n_turbines,
            base_ratio,
            omega_b,
            dt,
            rotor,
            gains: PllGains::from_bandwidth(p.pll_bandwidth_hz, p.pll_zeta, omega_b),
            filter,
            pll: PllState::locked(theta),
            gsc: GscControl::new(&p),
            rsc: RscControl::new(&p),
            dc,
            pitch: PitchState::new(&p),
            omega: 0.0,
            i_s: Complex64::new(0.0, 0.0),
            u_r: Complex64::new(0.0, 0.0),
            f_prev: Complex64::new(0.0, 0.0),
            u_cmd: u_next,
            stage: OwfStage::Idle,
            tripped: false,
            out: OwfOutputs::default(),
        };
        m.omega = m.parked_speed(wind);
        m.out.wind = wind;
        Ok(m)
    }

    pub fn params(&self) -> &OwfParams {
        &self.params
    }

    pub fn n_turbines(&self) -> u32 {
        self.n_turbines
    }

    pub fn rotor(&self) -> &Rotor {
        &self.rotor
    }

    pub fn stage(&self) -> OwfStage {
        self.stage
    }

    /// Converters blocked after a DC overvoltage.
    pub fn tripped(&self) -> bool {
        self.tripped
    }

    /// Plant rating over the system base.
    pub fn base_ratio(&self) -> f64 {
        self.base_ratio
    }

    fn parked_speed(&self, wind: f64) -> f64 {
        self.rotor
            .optimal_speed(wind)
            .clamp(OMEGA_FLOOR, self.params.speed_max)
    }

    fn advance(&mut self, to: OwfStage) -> Result<()> {
        if to as u8 != self.stage as u8 + 1 {
            return Err(Error::Schedule(format!(
                "wind plant cannot go from {:?} to {:?}",
                self.stage, to
            )));
        }
        self.stage = to;
        Ok(())
    }

    /// Releases the outer loops, holding the POI voltage measured now.
    pub fn enable_gsc(&mut self) -> Result<()> {
        self.advance(OwfStage::GscEnabled)?;
        self.gsc.outer_enabled = true;
        self.gsc.v_ac_ref = self.out.v_poi;
        Ok(())
    }

    pub fn start_turbine(&mut self) -> Result<()> {
        self.advance(OwfStage::TurbineStarted)
    }

    /// Starts the machine-side converter; the power order ramps from zero.
    pub fn enable_rsc(&mut self) -> Result<()> {
        self.advance(OwfStage::RscEnabled)?;
        self.rsc = RscControl::new(&self.params);
        self.rsc.vrsc.preset(0.0);
        self.u_r = Complex64::new(self.omega, 0.0);
        self.i_s = Complex64::new(0.0, 0.0);
        self.f_prev = Complex64::new(0.0, 0.0);
        Ok(())
    }

    /// Conductance from each terminal phase to ground, system base.
    pub fn conductance(&self) -> f64 {
        self.filter.conductance()
    }

    /// Injection into the terminal node for the coming solve.
    pub fn injection(&mut self) -> [f64; 3] {
        self.filter.injection(abc_from_space_vector(self.u_cmd))
    }

    /// Completes a step from the solved terminal and POI voltages; returns
    /// the current delivered into the terminal node (system base).
    pub fn finish(
        &mut self,
        v_term_abc: [f64; 3],
        v_poi_abc: [f64; 3],
        wind: f64,
        t: f64,
    ) -> Result<[f64; 3]> {
        let p = self.params;
        let dt = self.dt;
        let i_abc = self.filter.finish(v_term_abc);
        let i = space_vector(i_abc) / self.base_ratio;
        let v = space_vector(v_term_abc);
        let v_poi = space_vector(v_poi_abc).norm();
        let p_gsc = (self.u_cmd * i.conj()).re;
        let s_term = v * i.conj();

        let running = self.stage >= OwfStage::RscEnabled && !self.tripped;
        let p_rsc = if running { self.machine_step() } else { 0.0 };
        let beta = self.pitch.beta;
        let p_aero = self.rotor.aero_power(wind, self.omega, beta);
        if self.stage >= OwfStage::TurbineStarted {
            let torque = if running { self.i_s.re } else { 0.0 };
            self.omega = (self.omega + dt * (p_aero / self.omega - torque) / (2.0 * p.h_turbine))
                .max(OMEGA_FLOOR);
            pitch_step(&mut self.pitch, self.omega, &p, dt);
        } else {
            self.omega = self.parked_speed(wind);
        }

        self.dc.chopper = chopper_step(&self.dc);
        dclink_step(&mut self.dc, p_rsc, p_gsc, dt).map_err(|e| match e {
            Error::Numerical { msg, .. } => Error::Numerical { time: t, msg },
            e => e,
        })?;
        if self.dc.v > p.v_dc_trip && !self.tripped {
            self.tripped = true;
            self.gsc.outer_enabled = false;
        }

        let m = GscMeasurements {
            v_dc: self.dc.v,
            v_poi,
            v: to_dq(v, self.pll.theta),
            i: to_dq(i, self.pll.theta),
            q: s_term.im,
        };
        let u_dq = gsc_step(&mut self.gsc, &m, &p, dt);
        self.pll = pll_step(self.pll, v_term_abc, &self.gains, dt);
        self.u_cmd = from_dq(u_dq, self.pll.theta);

        if running {
            let m = RscMeasurements {
                p_mppt: mppt_ref(self.omega, wind, &self.rotor),
                p_rsc,
                v_rsc: self.u_r.norm(),
                omega: self.omega,
                v_poi,
                i: self.i_s,
                e: Complex64::new(self.omega, 0.0),
            };
            self.u_r = rsc_step(&mut self.rsc, &m, &p, dt);
        } else {
            self.i_s = Complex64::new(0.0, 0.0);
            self.u_r = Complex64::new(self.omega, 0.0);
            self.rsc.p_order = 0.0;
        }

        self.out = OwfOutputs {
            s_term,
            p_gsc,
            p_rsc,
            p_aero,
            p_order: self.rsc.p_order,
            v_term: v.norm(),
            v_poi,
            wind,
        };
        Ok(i_abc)
    }

    /// Trapezoidal step of the stator `L di/dt = e - u - (r + j w x) i` in
    /// the rotor frame; returns the power drawn by the rotor-side converter.
    fn machine_step(&mut self) -> f64 {
        let p = &self.params;
        let l = p.x_s / self.omega_b;
        let a = -Complex64::new(p.r_s, self.omega * p.x_s) / l;
        let f = (Complex64::new(self.omega, 0.0) - self.u_r) / l;
        let h = 0.5 * self.dt;
        self.i_s = (self.i_s * (1.0 + h * a) + h * (self.f_prev + f)) / (1.0 - h * a);
        self.f_prev = f;
        (self.u_r * self.i_s.conj()).re
    }

    /// Power balance of the last DC-link step.
    pub fn dc_audit(&self) -> DcStepAudit {
        self.dc.last
    }

    pub fn chopper_on(&self) -> bool {
        self.dc.chopper == ChopperState::On
    }
}
