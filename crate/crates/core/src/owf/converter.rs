use num_complex::Complex64;

use crate::case::OwfParams;
use crate::control::Pi;
use crate::gfl::limit_current;

/// Below this POI voltage the outer AC-voltage and Q integrators are frozen.
pub const OUTER_FREEZE_V: f64 = 0.9;

/// LVRT power scale: 0 at or below `v_low`, 1 at or above `v_high`, linear between.
pub fn lvrt_scale(v: f64, v_low: f64, v_high: f64) -> f64 {
    if v >= v_high {
        1.0
    } else if v <= v_low {
        0.0
    } else {
        (v - v_low) / (v_high - v_low)
    }
}

/// dq current tracking loop with cross-coupling compensation and voltage
/// feedforward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentLoop {
    pub d: Pi,
    pub q: Pi,
}

impl CurrentLoop {
    pub fn new(kp: f64, ki: f64, u_max: f64) -> Self {
        CurrentLoop {
            d: Pi::new(kp, ki, -u_max, u_max),
            q: Pi::new(kp, ki, -u_max, u_max),
        }
    }

    /// Grid-side form: `u_d = PI(id* - id) - wL iq + v_d`,
    /// `u_q = PI(iq* - iq) + wL id + v_q`, for current flowing out of the
    /// converter through reactance `wl`.
    pub fn grid_side(
        &mut self,
        i_ref: Complex64,
        i: Complex64,
        v: Complex64,
        wl: f64,
        dt: f64,
    ) -> Complex64 {
        let ud = self.d.step(i_ref.re - i.re, dt) - wl * i.im + v.re;
        let uq = self.q.step(i_ref.im - i.im, dt) + wl * i.re + v.im;
        Complex64::new(ud, uq)
    }

    /// Machine-side mirror: the converter sits at the receiving end of the
    /// stator, so `u = e - PI(i* - i) + j(-wL) i` style terms flip sign.
    pub fn machine_side(
        &mut self,
        i_ref: Complex64,
        i: Complex64,
        e: Complex64,
        wl: f64,
        dt: f64,
    ) -> Complex64 {
        let ud = e.re - self.d.step(i_ref.re - i.re, dt) + wl * i.im;
        let uq = e.im - self.q.step(i_ref.im - i.im, dt) - wl * i.re;
        Complex64::new(ud, uq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GscControl {
    pub vdc: Pi,
    pub vac: Pi,
    pub q: Pi,
    pub cc: CurrentLoop,
    pub v_dc_ref: f64,
    pub v_ac_ref: f64,
    pub q_ref: f64,
    pub i_ref: Complex64,
    pub outer_enabled: bool,
}

/// Measurements in the converter's PLL frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GscMeasurements {
    pub v_dc: f64,
    pub v_poi: f64,
    pub v: Complex64,
    pub i: Complex64,
    /// Reactive power delivered at the converter terminal.
    pub q: f64,
}

impl GscControl {
    pub fn new(p: &OwfParams) -> Self {
        let q_max = p.i_max;
        GscControl {
            vdc: Pi::new(p.vdc_kp, p.vdc_ki, -p.i_max, p.i_max),
            vac: Pi::new(p.vac_kp, p.vac_ki, -q_max, q_max),
            q: Pi::new(p.q_kp, p.q_ki, -p.i_max, p.i_max),
            cc: CurrentLoop::new(p.cc_kp, p.cc_ki, 2.0),
            v_dc_ref: p.v_dc_ref,
            v_ac_ref: 1.0,
            q_ref: 0.0,
            i_ref: Complex64::new(0.0, 0.0),
            outer_enabled: false,
        }
    }
}

/// Grid-side converter control, returning the converter voltage command
/// `(u_d*, u_q*)` in the PLL frame.
///
/// Outer loops: `id*` from the DC voltage (export rises when `V_dc` is high),
/// `Q*` from the POI voltage and `iq*` from the reactive-power error. With
/// the q-leading frame `Q = -v_d i_q`, so `iq*` acts on `Q - Q*`. With the
/// outer loops disabled the converter only tracks zero current.
pub fn gsc_step(c: &mut GscControl, m: &GscMeasurements, p: &OwfParams, dt: f64) -> Complex64 {
    if c.outer_enabled {
        let id = c.vdc.step(m.v_dc - c.v_dc_ref, dt);
        let (q_ref, iq) = if m.v_poi < OUTER_FREEZE_V {
            let q_ref = c.vac.peek(p.v_error_sign * (c.v_ac_ref - m.v_poi));
            (q_ref, c.q.peek(m.q - q_ref))
        } else {
            let q_ref = c.vac.step(p.v_error_sign * (c.v_ac_ref - m.v_poi), dt);
            (q_ref, c.q.step(m.q - q_ref, dt))
        };
        c.q_ref = q_ref;
        let (id, iq) = limit_current(id, iq, p.i_max);
        c.i_ref = Complex64::new(id, iq);
    } else {
        c.i_ref = Complex64::new(0.0, 0.0);
    }
    c.cc.grid_side(c.i_ref, m.i, m.v, p.x_f, dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RscControl {
    pub p: Pi,
    pub vrsc: Pi,
    pub cc: CurrentLoop,
    pub i_ref: Complex64,
    /// Power order after LVRT scaling and the start-up ramp.
    pub p_order: f64,
    /// Start-up ramp ceiling on the power order; `None` once the ramp is done.
    pub ramp_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RscMeasurements {
    pub p_mppt: f64,
    pub p_rsc: f64,
    pub v_rsc: f64,
    pub omega: f64,
    pub v_poi: f64,
    /// Stator current and EMF in the rotor frame.
    pub i: Complex64,
    pub e: Complex64,
}

impl RscControl {
    pub fn new(p: &OwfParams) -> Self {
        RscControl {
            p: Pi::new(p.p_kp, p.p_ki, -p.i_max, p.i_max),
            vrsc: Pi::new(p.vrsc_kp, p.vrsc_ki, -p.i_max, p.i_max),
            cc: CurrentLoop::new(p.cc_kp, p.cc_ki, 2.0),
            i_ref: Complex64::new(0.0, 0.0),
            p_order: 0.0,
            ramp_cap: Some(0.0),
        }
    }
}

/// Rotor-side converter control: `id*` from `P_MPPT * lvrt(V_poi) - P_rsc`,
/// `iq*` from the converter voltage error against `V_rsc* = w`, then the
/// machine-side current loop. Returns the converter voltage in the rotor frame.
pub fn rsc_step(c: &mut RscControl, m: &RscMeasurements, p: &OwfParams, dt: f64) -> Complex64 {
    let mut order = m.p_mppt * lvrt_scale(m.v_poi, p.lvrt_v_low, p.lvrt_v_high);
    if let Some(cap) = c.ramp_cap {
        let cap = cap + p.startup_ramp * dt;
        order = order.min(cap);
        c.ramp_cap = if cap >= 1.0 { None } else { Some(cap) };
    }
    c.p_order = order;
    let id = c.p.step(order - m.p_rsc, dt);
    let iq = c.vrsc.step(p.v_error_sign * (m.omega - m.v_rsc), dt);
    let (id, iq) = limit_current(id, iq, p.i_max);
    c.i_ref = Complex64::new(id, iq);
    c.cc.machine_side(c.i_ref, m.i, m.e, m.omega * p.x_s, dt)
}
