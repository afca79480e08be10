use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChopperState {
    Off,
    On,
}

/// DC link between the two converters, stored as capacitor energy
/// `W = C V^2 / 2` (pu on the turbine base, `C` in seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcLink {
    pub v: f64,
    pub c: f64,
    pub chopper: ChopperState,
    pub chopper_enabled: bool,
    pub v_on: f64,
    pub v_off: f64,
    /// Chopper resistance, sized to absorb 1 pu at the engage threshold.
    pub r_chopper: f64,
    /// Step-averaged powers of the last step, for the balance audit.
    pub last: DcStepAudit,
    prev_in: f64,
    prev_out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DcStepAudit {
    pub p_in: f64,
    pub p_out: f64,
    pub p_chopper: f64,
    pub d_energy_dt: f64,
}

impl DcStepAudit {
    /// `P_in - P_out - P_chopper - dW/dt` over the step.
    pub fn residual(&self) -> f64 {
        self.p_in - self.p_out - self.p_chopper - self.d_energy_dt
    }
}

impl DcLink {
    pub fn new(c: f64, v0: f64, v_on: f64, v_off: f64, chopper_enabled: bool) -> Self {
        DcLink {
            v: v0,
            c,
            chopper: ChopperState::Off,
            chopper_enabled,
            v_on,
            v_off,
            r_chopper: v_on * v_on,
            last: DcStepAudit::default(),
            prev_in: 0.0,
            prev_out: 0.0,
        }
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.c * self.v * self.v
    }

    /// Power the chopper dissipates at the present voltage.
    pub fn chopper_power(&self) -> f64 {
        match self.chopper {
            ChopperState::On => self.v * self.v / self.r_chopper,
            ChopperState::Off => 0.0,
        }
    }

    /// Seeds the trapezoidal history with the present converter powers.
    pub fn prime(&mut self, p_in: f64, p_out: f64) {
        self.prev_in = p_in;
        self.prev_out = p_out;
    }
}

/// Chopper hysteresis: engages at `v >= v_on`, releases at `v <= v_off`.
pub fn chopper_step(dc: &DcLink) -> ChopperState {
    if !dc.chopper_enabled {
        return ChopperState::Off;
    }
    match dc.chopper {
        ChopperState::Off if dc.v >= dc.v_on => ChopperState::On,
        ChopperState::On if dc.v <= dc.v_off => ChopperState::Off,
        s => s,
    }
}

/// Advances `dW/dt = P_in - P_out - V^2/R_ch` by one trapezoidal step. The
/// chopper term is treated implicitly, which keeps the discharge stable for
/// any resistance. Returns the new voltage.
pub fn dclink_step(dc: &mut DcLink, p_in: f64, p_out: f64, dt: f64) -> Result<f64> {
    let w0 = dc.energy();
    let p_in_avg = 0.5 * (dc.prev_in + p_in);
    let p_out_avg = 0.5 * (dc.prev_out + p_out);
    // V^2 / R = 2 W / (C R)
    let a = match dc.chopper {
        ChopperState::On => dt / (dc.c * dc.r_chopper),
        ChopperState::Off => 0.0,
    };
    let w1 = (w0 * (1.0 - a) + dt * (p_in_avg - p_out_avg)) / (1.0 + a);
    if !(w1 > 0.0) || !w1.is_finite() {
        return Err(Error::Numerical {
            time: f64::NAN,
            msg: format!("DC-link voltage collapsed (energy {w1:.3e})"),
        });
    }
    dc.last = DcStepAudit {
        p_in: p_in_avg,
        p_out: p_out_avg,
        p_chopper: a * (w0 + w1) / dt,
        d_energy_dt: (w1 - w0) / dt,
    };
    dc.prev_in = p_in;
    dc.prev_out = p_out;
    dc.v = (2.0 * w1 / dc.c).sqrt();
    Ok(dc.v)
}
