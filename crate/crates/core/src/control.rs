//! Small discrete-time control blocks shared by the device models.

/// PI regulator with output clamp and integrator anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pi {
    pub kp: f64,
    pub ki: f64,
    pub lo: f64,
    pub hi: f64,
    pub integ: f64,
}

impl Pi {
    pub fn new(kp: f64, ki: f64, lo: f64, hi: f64) -> Self {
        Pi {
            kp,
            ki,
            lo,
            hi,
            integ: 0.0,
        }
    }

    /// Presets the integrator so that a zero error yields `output`.
    pub fn preset(&mut self, output: f64) {
        self.integ = output.clamp(self.lo, self.hi);
    }

    /// Output for `err` without advancing the state.
    pub fn peek(&self, err: f64) -> f64 {
        (self.kp * err + self.integ).clamp(self.lo, self.hi)
    }

    pub fn step(&mut self, err: f64, dt: f64) -> f64 {
        let p = self.kp * err;
        let candidate = self.integ + self.ki * err * dt;
        // Clamp the integrator so that the total output sits on the limit
        // instead of winding up beyond it.
        let upper = (self.hi - p).max(self.lo).min(self.hi);
        let lower = (self.lo - p).min(self.hi).max(self.lo);
        self.integ = if candidate > upper && candidate > self.integ {
            self.integ.max(upper)
        } else if candidate < lower && candidate < self.integ {
            self.integ.min(lower)
        } else {
            candidate
        };
        (p + self.integ).clamp(self.lo, self.hi)
    }

    pub fn set_limits(&mut self, lo: f64, hi: f64) {
        self.lo = lo;
        self.hi = hi;
        self.integ = self.integ.clamp(lo, hi);
    }
}

/// First-order lag `tau dy/dt = u - y`, discretized exactly for a held input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lag {
    pub tau: f64,
    pub y: f64,
}

impl Lag {
    pub fn new(tau: f64, y: f64) -> Self {
        Lag { tau, y }
    }

    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        if self.tau <= 0.0 {
            self.y = u;
        } else {
            self.y += (u - self.y) * (1.0 - (-dt / self.tau).exp());
        }
        self.y
    }
}

/// Moves `current` toward `target` by at most `rate * dt`.
pub fn rate_limit(current: f64, target: f64, rate: f64, dt: f64) -> f64 {
    let max = rate * dt;
    current + (target - current).clamp(-max, max)
}

/// Magnitude of a balanced set from a one-cycle moving average of
/// `(2/3) sum(x^2)`.
#[derive(Debug, Clone)]
pub struct RmsMeter {
    window: Vec<f64>,
    pos: usize,
    sum: f64,
}

impl RmsMeter {
    /// `samples` per averaging window, prefilled with a steady magnitude.
    pub fn new(samples: usize, initial_magnitude: f64) -> Self {
        let n = samples.max(1);
        let sq = initial_magnitude * initial_magnitude;
        RmsMeter {
            window: vec![sq; n],
            pos: 0,
            sum: sq * n as f64,
        }
    }

    pub fn push(&mut self, abc: [f64; 3]) -> f64 {
        let sq = (abc[0] * abc[0] + abc[1] * abc[1] + abc[2] * abc[2]) * 2.0 / 3.0;
        self.sum += sq - self.window[self.pos];
        self.window[self.pos] = sq;
        self.pos = (self.pos + 1) % self.window.len();
        self.value()
    }

    pub fn value(&self) -> f64 {
        (self.sum / self.window.len() as f64).max(0.0).sqrt()
    }
}

/// Moving average of a complex signal over a fixed number of samples.
#[derive(Debug, Clone)]
pub struct ComplexAverage {
    window: Vec<num_complex::Complex64>,
    pos: usize,
    sum: num_complex::Complex64,
}

impl ComplexAverage {
    pub fn new(samples: usize, initial: num_complex::Complex64) -> Self {
        let n = samples.max(1);
        ComplexAverage {
            window: vec![initial; n],
            pos: 0,
            sum: initial * n as f64,
        }
    }

    pub fn push(&mut self, x: num_complex::Complex64) -> num_complex::Complex64 {
        self.sum += x - self.window[self.pos];
        self.window[self.pos] = x;
        self.pos = (self.pos + 1) % self.window.len();
        if self.pos == 0 {
            // Re-sum once per window to keep rounding from accumulating.
            self.sum = self.window.iter().sum();
        }
        self.value()
    }

    pub fn value(&self) -> num_complex::Complex64 {
        self.sum / self.window.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_clamps_and_unwinds() {
        let mut pi = Pi::new(0.1, 10.0, -1.0, 1.0);
        let mut out = 0.0;
        for _ in 0..1000 {
            out = pi.step(5.0, 1e-3);
        }
        assert_eq!(out, 1.0);
        // The integrator stops where the output saturates instead of winding up.
        assert!(pi.integ <= 0.5 + 0.05 + 1e-12);
        let out = pi.step(-0.5, 1e-3);
        assert!(out < 1.0);
    }

    #[test]
    fn lag_time_constant() {
        let mut lag = Lag::new(0.1, 0.0);
        let dt = 1e-4;
        for _ in 0..1000 {
            lag.step(1.0, dt);
        }
        assert!((lag.y - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn rms_of_balanced_set() {
        let n = 400;
        let mut m = RmsMeter::new(n, 0.0);
        let mut v = 0.0;
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            v = m.push(crate::frames::phasor_to_abc(
                num_complex::Complex64::new(0.8, 0.0),
                th,
            ));
        }
        assert!((v - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rate_limiter() {
        assert_eq!(rate_limit(0.0, 1.0, 2.0, 0.1), 0.2);
        assert_eq!(rate_limit(0.0, 0.1, 2.0, 0.1), 0.1);
        assert_eq!(rate_limit(0.0, -1.0, 2.0, 0.1), -0.2);
    }
}
