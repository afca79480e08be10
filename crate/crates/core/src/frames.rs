//! Reference-frame transforms for balanced three-phase quantities.
//!
//! Per-unit instantaneous values use the peak phase quantity as base, so a
//! balanced 1 pu set is `v_a = cos(wt + th)`. The space vector
//! `(2/3)(x_a + a x_b + a^2 x_c)` then has magnitude 1 and the complex power
//! `v conj(i)` is in system per-unit. In the rotating frame at angle `theta`
//! the d axis is the real part and q leads d by 90 degrees.

use std::f64::consts::PI;

use num_complex::Complex64;

/// `e^(j 2 pi / 3)`.
pub fn a_op() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / 3.0)
}

pub fn space_vector(abc: [f64; 3]) -> Complex64 {
    let a = a_op();
    (abc[0] + a * abc[1] + a * a * abc[2]) * (2.0 / 3.0)
}

/// Inverse of [`space_vector`] for zero-sequence-free quantities.
pub fn abc_from_space_vector(z: Complex64) -> [f64; 3] {
    let a = a_op();
    [z.re, (z * a * a).re, (z * a).re]
}

/// Rotates a stationary space vector into the frame at angle `theta`; the
/// result holds `d` in the real part and `q` in the imaginary part.
pub fn to_dq(z: Complex64, theta: f64) -> Complex64 {
    z * Complex64::from_polar(1.0, -theta)
}

pub fn from_dq(dq: Complex64, theta: f64) -> Complex64 {
    dq * Complex64::from_polar(1.0, theta)
}

pub fn abc_to_dq(abc: [f64; 3], theta: f64) -> Complex64 {
    to_dq(space_vector(abc), theta)
}

pub fn dq_to_abc(dq: Complex64, theta: f64) -> [f64; 3] {
    abc_from_space_vector(from_dq(dq, theta))
}

/// Complex power `P + jQ` delivered by current `i` at voltage `v` (any common frame).
pub fn complex_power(v: Complex64, i: Complex64) -> Complex64 {
    v * i.conj()
}

/// Instantaneous phase values of a balanced set described by a phasor at
/// electrical angle `wt`.
pub fn phasor_to_abc(phasor: Complex64, wt: f64) -> [f64; 3] {
    abc_from_space_vector(phasor * Complex64::from_polar(1.0, wt))
}

pub fn wrap_angle(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * PI)
}
