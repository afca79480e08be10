use crate::case::OwfParams;
use crate::control::{rate_limit, Pi};

/// Coefficients of the exponential power-coefficient curve
/// `Cp = c1 (c2/li - c3 beta - c4) e^(-c5/li) + c6 lambda`.
pub const CP_COEFFS: [f64; 6] = [0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068];

/// Power coefficient for tip-speed ratio `lambda` and pitch `beta` (degrees),
/// floored at zero.
pub fn cp(lambda: f64, beta: f64) -> f64 {
    let [c1, c2, c3, c4, c5, c6] = CP_COEFFS;
    if lambda <= 0.0 {
        return 0.0;
    }
    let inv_li = 1.0 / (lambda + 0.08 * beta) - 0.035 / (beta * beta * beta + 1.0);
    (c1 * (c2 * inv_li - c3 * beta - c4) * (-c5 * inv_li).exp() + c6 * lambda).max(0.0)
}

/// Tip-speed ratio maximizing `cp(., 0)` and the maximum itself.
pub fn cp_peak() -> (f64, f64) {
    // Coarse scan then golden-section refinement; the curve is unimodal here.
    let (mut best, mut best_cp) = (1.0, 0.0);
    let mut l = 1.0;
    while l < 20.0 {
        let c = cp(l, 0.0);
        if c > best_cp {
            best = l;
            best_cp = c;
        }
        l += 0.01;
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best - 0.02, best + 0.02);
    while b - a > 1e-12 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if cp(x1, 0.0) > cp(x2, 0.0) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let l = 0.5 * (a + b);
    (l, cp(l, 0.0))
}

/// Rotor geometry derived from the turbine rating: the swept area is chosen
/// so that rated wind at rated speed and optimal tip-speed ratio yields
/// exactly rated power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotor {
    pub radius: f64,
    /// Mechanical speed (rad/s) corresponding to 1 pu.
    pub omega_rated: f64,
    pub lambda_opt: f64,
    pub cp_max: f64,
    pub rated_w: f64,
    pub air_density: f64,
    pub cut_in: f64,
    pub cut_out: f64,
    pub rated_wind: f64,
}

impl Rotor {
    pub fn from_params(p: &OwfParams) -> Self {
        let (lambda_opt, cp_max) = cp_peak();
        let rated_w = p.turbine_mw * 1e6;
        let area = 2.0 * rated_w / (p.air_density * p.rated_wind.powi(3) * cp_max);
        let radius = (area / std::f64::consts::PI).sqrt();
        Rotor {
            radius,
            omega_rated: lambda_opt * p.rated_wind / radius,
            lambda_opt,
            cp_max,
            rated_w,
            air_density: p.air_density,
            cut_in: p.cut_in,
            cut_out: p.cut_out,
            rated_wind: p.rated_wind,
        }
    }

    pub fn in_operating_range(&self, v_wind: f64) -> bool {
        v_wind >= self.cut_in && v_wind <= self.cut_out
    }

    /// Speed (pu) at which the rotor runs at the optimal tip-speed ratio.
    pub fn optimal_speed(&self, v_wind: f64) -> f64 {
        self.lambda_opt * v_wind / (self.radius * self.omega_rated)
    }

    /// Aerodynamic power in pu of the turbine rating,
    /// `rho A v^3 Cp(lambda, beta) / 2`, zero outside the cut-in/cut-out band.
    pub fn aero_power(&self, v_wind: f64, omega: f64, beta: f64) -> f64 {
        if !self.in_operating_range(v_wind) || v_wind <= 0.0 {
            return 0.0;
        }
        let lambda = omega * self.omega_rated * self.radius / v_wind;
        let area = std::f64::consts::PI * self.radius * self.radius;
        0.5 * self.air_density * area * v_wind.powi(3) * cp(lambda, beta) / self.rated_w
    }
}

/// Maximum-power-point power order `k_opt w^3`, clamped at 1 pu and zero
/// outside the wind operating band. `k_opt = 1` by the rotor sizing.
pub fn mppt_ref(omega: f64, v_wind: f64, rotor: &Rotor) -> f64 {
    if !rotor.in_operating_range(v_wind) {
        return 0.0;
    }
    (omega.max(0.0).powi(3)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchState {
    pub beta: f64,
    pub pi: Pi,
}

impl PitchState {
    pub fn new(p: &OwfParams) -> Self {
        PitchState {
            beta: 0.0,
            pi: Pi::new(p.pitch_kp, p.pitch_ki, 0.0, p.pitch_max),
        }
    }
}

/// Pitch controller: PI on the overspeed `w - w_max`, output held in
/// `[0, pitch_max]`, actuator rate-limited to `pitch_rate` deg/s.
pub fn pitch_step(state: &mut PitchState, omega: f64, p: &OwfParams, dt: f64) -> f64 {
    let cmd = state.pi.step(omega - p.speed_max, dt);
    state.beta = rate_limit(state.beta, cmd, p.pitch_rate, dt).clamp(0.0, p.pitch_max);
    state.beta
}
