//! Angle wrapping and carrier-precision phase reduction.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Maps an angle onto (−π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Maps an angle onto (−π/2, π/2]; quadrature ellipses are π-periodic.
pub fn wrap_half_pi(x: f64) -> f64 {
    let mut y = x.rem_euclid(PI);
    if y > FRAC_PI_2 {
        y -= PI;
    }
    y
}

/// Fractional part of `2 * length / wavelength`, accurate to a few ulps of the
/// fraction even when the quotient is ~1e10.
///
/// The remainder `length - q * wavelength` of a correctly rounded quotient is
/// exactly representable, so one fused multiply-add recovers the low word.
pub fn round_trip_cycles_frac(length: f64, wavelength: f64) -> f64 {
    let q = length / wavelength;
    let rem = (-q).mul_add(wavelength, length);
    let q_lo = rem / wavelength;
    let hi = 2.0 * q;
    let f = (hi - hi.floor()) + 2.0 * q_lo;
    f - f.floor()
}
