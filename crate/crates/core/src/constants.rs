//! Physical constants (CODATA 2018 exact / recommended values).

/// Speed of light in vacuum, m/s.
pub const C: f64 = 299_792_458.0;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Bundle of the constants used by every formula, carried into provenance headers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub c: f64,
    pub hbar: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants { c: C, hbar: HBAR };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}
