//! Grid-following inverter: SRF-PLL, frequency/voltage droop with
//! deadbands, P-priority current limit and a first-order current-source lag.
//!
//! Control quantities are per-unit on the inverter base; the network
//! interface is on the system base.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::case::GflParams;
use crate::control::rate_limit;
use crate::frames::{abc_from_space_vector, from_dq, space_vector, to_dq, wrap_angle};

pub const PLL_OMEGA_MIN: f64 = 0.9;
pub const PLL_OMEGA_MAX: f64 = 1.1;
/// Voltage floor used when turning power commands into currents.
const V_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllState {
    pub theta: f64,
    pub omega: f64,
    pub integ: f64,
}

impl PllState {
    /// Locked onto a voltage at angle `theta` and nominal frequency.
    pub fn locked(theta: f64) -> Self {
        PllState {
            theta: wrap_angle(theta),
            omega: 1.0,
            integ: 0.0,
        }
    }
}

/// PI gains of a second-order PLL in pu frequency per pu q-voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllGains {
    pub kp: f64,
    pub ki: f64,
    pub omega_b: f64,
}

impl PllGains {
    pub fn from_bandwidth(bandwidth_hz: f64, zeta: f64, omega_b: f64) -> Self {
        let wn = 2.0 * PI * bandwidth_hz;
        PllGains {
            kp: 2.0 * zeta * wn / omega_b,
            ki: wn * wn / omega_b,
            omega_b,
        }
    }
}

/// One SRF-PLL step: drives the (magnitude-normalized) q-axis voltage to
/// zero and advances the angle by `omega * dt`.
pub fn pll_step(state: PllState, v_abc: [f64; 3], gains: &PllGains, dt: f64) -> PllState {
    let v = space_vector(v_abc);
    let mag = v.norm();
    let vq = if mag > 1e-3 {
        to_dq(v, state.theta).im / mag
    } else {
        0.0
    };
    let integ = (state.integ + gains.ki * vq * dt).clamp(PLL_OMEGA_MIN - 1.0, PLL_OMEGA_MAX - 1.0);
    let omega = (1.0 + gains.kp * vq + integ).clamp(PLL_OMEGA_MIN, PLL_OMEGA_MAX);
    PllState {
        theta: wrap_angle(state.theta + gains.omega_b * omega * dt),
        omega,
        integ,
    }
}

fn beyond_deadband(x: f64, band: f64) -> f64 {
    if x > band {
        x - band
    } else if x < -band {
        x + band
    } else {
        0.0
    }
}

/// Droop increments `(dp, dq)` in pu. Only the part of the deviation beyond
/// each deadband counts; frequency deviation is taken in pu of `f_nom`.
pub fn droop_response(
    freq_hz: f64,
    v_mag: f64,
    v_ref: f64,
    f_nom: f64,
    p: &GflParams,
) -> (f64, f64) {
    let df = beyond_deadband(freq_hz - f_nom, p.freq_deadband);
    let dv = beyond_deadband(v_mag - v_ref, p.volt_deadband);
    (-p.kf * df / f_nom, -p.kv * dv)
}

/// Moves a reference toward its target at `rate` pu/s.
pub fn ramp_refs(current: (f64, f64), target: (f64, f64), rate: (f64, f64), dt: f64) -> (f64, f64) {
    (
        rate_limit(current.0, target.0, rate.0, dt),
        rate_limit(current.1, target.1, rate.1, dt),
    )
}

/// P-priority limit of a dq current command to `i_max`.
pub fn limit_current(id: f64, iq: f64, i_max: f64) -> (f64, f64) {
    let id = id.clamp(-i_max, i_max);
    let room = (i_max * i_max - id * id).max(0.0).sqrt();
    (id, iq.clamp(-room, room))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GflState {
    pub pll: PllState,
    /// Ramped references before droop.
    pub p_ref: f64,
    pub q_ref: f64,
    pub p_cmd: f64,
    pub q_cmd: f64,
    /// Lagged current output, inverter frame.
    pub id: f64,
    pub iq: f64,
    pub v_meas: f64,
}

#[derive(Debug, Clone)]
pub struct GridFollowing {
    params: GflParams,
    gains: PllGains,
    f_nom: f64,
    /// Inverter base over system base.
    base_ratio: f64,
    v_ref: f64,
    /// Setpoints the references ramp toward.
    target: (f64, f64),
    ramp_rate: (f64, f64),
    pub state: GflState,
    v_last: Complex64,
    dt: f64,
}

impl GridFollowing {
    /// Starts locked onto `v` (system-frame phasor at `t0`) with zero
    /// references, ready to ramp toward `target` (inverter base).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: GflParams,
        mva_base: f64,
        system_mva: f64,
        f_nom: f64,
        v: Complex64,
        target: (f64, f64),
        dt: f64,
        t0: f64,
    ) -> Self {
        let omega_b = 2.0 * PI * f_nom;
        let gains = PllGains::from_bandwidth(params.pll_bandwidth_hz, params.pll_zeta, omega_b);
        let v_sv = v * Complex64::from_polar(1.0, omega_b * t0);
        GridFollowing {
            params,
            gains,
            f_nom,
            base_ratio: mva_base / system_mva,
            v_ref: v.norm(),
            target,
            ramp_rate: (0.0, 0.0),
            state: GflState {
                // The PLL angle always refers to the next sample.
                pll: PllState::locked(v_sv.arg() + omega_b * dt),
                p_ref: 0.0,
                q_ref: 0.0,
                p_cmd: 0.0,
                q_cmd: 0.0,
                id: 0.0,
                iq: 0.0,
                v_meas: v.norm(),
            },
            v_last: v_sv,
            dt,
        }
    }

    pub fn params(&self) -> &GflParams {
        &self.params
    }

    pub fn target(&self) -> (f64, f64) {
        self.target
    }

    /// Starts a linear ramp of the references to the targets over `duration` seconds.
    pub fn start_ramp(&mut self, duration: f64) {
        let d = duration.max(self.dt);
        self.ramp_rate = (
            (self.target.0 - self.state.p_ref).abs() / d,
            (self.target.1 - self.state.q_ref).abs() / d,
        );
    }

    /// Jumps the references to the targets.
    pub fn set_refs_to_target(&mut self) {
        self.state.p_ref = self.target.0;
        self.state.q_ref = self.target.1;
    }

    /// Shunt conductance stamped from each phase to ground (system base).
    pub fn conductance(&self) -> f64 {
        self.params.g_shunt * self.base_ratio
    }

    fn current_sv(&self) -> Complex64 {
        from_dq(
            Complex64::new(self.state.id, self.state.iq),
            self.state.pll.theta,
        ) * self.base_ratio
    }

    /// Injection for the coming solve: the controlled current plus the
    /// compensation for the shunt, based on the voltage rotated one step.
    pub fn injection(&self) -> [f64; 3] {
        let omega_b = 2.0 * PI * self.f_nom;
        let v_pred = self.v_last * Complex64::from_polar(1.0, omega_b * self.dt);
        abc_from_space_vector(self.current_sv() + v_pred * self.conductance())
    }

    /// Updates controls from the solved bus voltage; returns the net current
    /// delivered into the bus (system base), shunt included.
    pub fn finish(&mut self, v_abc: [f64; 3]) -> [f64; 3] {
        let injected = self.injection();
        self.v_last = space_vector(v_abc);
        let out = std::array::from_fn(|p| injected[p] - self.conductance() * v_abc[p]);
        self.gfl_step(v_abc);
        out
    }

    /// Advances PLL, references, droop and the current lag by one step.
    pub fn gfl_step(&mut self, v_abc: [f64; 3]) {
        let dt = self.dt;
        let p = self.params;
        let s = &mut self.state;
        s.pll = pll_step(s.pll, v_abc, &self.gains, dt);
        let v = space_vector(v_abc).norm();
        s.v_meas = v;
        (s.p_ref, s.q_ref) = ramp_refs((s.p_ref, s.q_ref), self.target, self.ramp_rate, dt);
        let (dp, dq) = droop_response(s.pll.omega * self.f_nom, v, self.v_ref, self.f_nom, &p);
        s.p_cmd = s.p_ref + dp;
        s.q_cmd = s.q_ref + dq;
        let vf = v.max(V_FLOOR);
        let (id_cmd, iq_cmd) = limit_current(s.p_cmd / vf, -s.q_cmd / vf, p.i_max);
        let a = if p.t_lag > 0.0 {
            1.0 - (-dt / p.t_lag).exp()
        } else {
            1.0
        };
        s.id += (id_cmd - s.id) * a;
        s.iq += (iq_cmd - s.iq) * a;
    }

    /// Output current magnitude in inverter pu.
    pub fn current_magnitude(&self) -> f64 {
        self.state.id.hypot(self.state.iq)
    }

    /// Output power in inverter pu, from the last measured voltage.
    pub fn power(&self) -> Complex64 {
        // The PLL angle is one step ahead of the stored voltage.
        let omega_b = 2.0 * PI * self.f_nom;
        let v = to_dq(
            self.v_last * Complex64::from_polar(1.0, omega_b * self.dt),
            self.state.pll.theta,
        );
        v * Complex64::new(self.state.id, self.state.iq).conj()
    }
}
