use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frames::phasor_to_abc;

/// Three-phase EMF behind a series R-L branch, integrated by the owning
/// device with the same trapezoidal rule the network uses.
///
/// The network only sees a conductance `G` from each bus phase to ground (to
/// be stamped by the caller as a resistor `1/G`) and the injection returned
/// by [`SourceBehindRl::injection`]. After the network solve,
/// [`SourceBehindRl::finish`] yields the branch current flowing into the bus.
#[derive(Debug, Clone)]
pub struct SourceBehindRl {
    r: f64,
    l: f64,
    g: f64,
    k: f64,
    i: [f64; 3],
    v: [f64; 3],
    e_next: [f64; 3],
}

impl SourceBehindRl {
    /// `r` and `l` in per-unit (`l = x / omega_base`), `dt` in seconds.
    pub fn new(r: f64, l: f64, dt: f64) -> Result<Self> {
        if !(l > 0.0) || r < 0.0 || !(dt > 0.0) {
            return Err(Error::InvalidValue(format!(
                "source impedance r={r}, l={l} is not usable"
            )));
        }
        let k = 2.0 * l / dt;
        Ok(SourceBehindRl {
            r,
            l,
            g: 1.0 / (r + k),
            k: k - r,
            i: [0.0; 3],
            v: [0.0; 3],
            e_next: [0.0; 3],
        })
    }

    pub fn conductance(&self) -> f64 {
        self.g
    }

    pub fn resistance(&self) -> f64 {
        self.r
    }

    pub fn inductance(&self) -> f64 {
        self.l
    }

    /// Seeds the branch with a sinusoidal steady state at angle `wt`.
    pub fn seed(&mut self, e: Complex64, v: Complex64, i: Complex64, wt: f64) {
        self.i = phasor_to_abc(i, wt);
        self.v = phasor_to_abc(e - v, wt);
        self.e_next = phasor_to_abc(e, wt);
    }

    /// Current injection into the bus for the coming solve, given the EMF at
    /// the end of the step.
    pub fn injection(&mut self, e_next: [f64; 3]) -> [f64; 3] {
        self.e_next = e_next;
        std::array::from_fn(|p| self.g * (e_next[p] + self.v[p] + self.k * self.i[p]))
    }

    /// Completes the step with the solved bus voltage; returns the current
    /// delivered into the bus.
    pub fn finish(&mut self, v_bus: [f64; 3]) -> [f64; 3] {
        for p in 0..3 {
            let vab = self.e_next[p] - v_bus[p];
            self.i[p] = self.g * (vab + self.v[p] + self.k * self.i[p]);
            self.v[p] = vab;
        }
        self.i
    }

    pub fn current(&self) -> [f64; 3] {
        self.i
    }
}
