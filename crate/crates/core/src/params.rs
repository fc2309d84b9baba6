use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::C;
use crate::error::{domain, Error, Result};

/// Which transmissivity enters the arm/SRC sloshing frequency.
///
/// `AsPrinted` uses `T_ITM` directly; `SqrtT` uses `√T_ITM`, the form that
/// reduces to the compound-mirror coupling constant when the SRC is short.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SloshingConvention {
    AsPrinted,
    #[default]
    SqrtT,
}

impl SloshingConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            SloshingConvention::AsPrinted => "as-printed",
            SloshingConvention::SqrtT => "sqrt-t",
        }
    }
}

impl fmt::Display for SloshingConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SloshingConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(SloshingConvention::AsPrinted),
            "sqrt-t" => Ok(SloshingConvention::SqrtT),
            other => Err(Error::Config(format!(
                "unknown sloshing convention `{other}` (expected as-printed or sqrt-t)"
            ))),
        }
    }
}

/// Macroscopic description of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerParams {
    /// Arm cavity length, m.
    pub l_arm_m: f64,
    /// Signal-recycling cavity length, m.
    pub l_src_m: f64,
    /// Test-mass mass, kg.
    pub mass_kg: f64,
    /// ITM power transmissivity.
    pub t_itm: f64,
    /// SRM power transmissivity.
    pub t_srm: f64,
    /// Circulating arm power, W.
    pub p_arm_w: f64,
    /// Carrier wavelength, m.
    pub lambda0_m: f64,
    /// Squeezing parameter r.
    pub squeeze_r: f64,
    pub sloshing: SloshingConvention,
}

impl Default for InterferometerParams {
    /// Einstein-Telescope-scale values: 10 km arms, 100 m SRC, 150 kg mirrors,
    /// T_ITM = T_SRM = 0.04, 3 MW, 1064 nm, r = 1.73.
    fn default() -> Self {
        InterferometerParams {
            l_arm_m: 10_000.0,
            l_src_m: 100.0,
            mass_kg: 150.0,
            t_itm: 0.04,
            t_srm: 0.04,
            p_arm_w: 3.0e6,
            lambda0_m: 1064e-9,
            squeeze_r: 1.73,
            sloshing: SloshingConvention::default(),
        }
    }
}

impl InterferometerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_arm_m", self.l_arm_m),
            ("l_src_m", self.l_src_m),
            ("mass_kg", self.mass_kg),
            ("p_arm_w", self.p_arm_w),
            ("lambda0_m", self.lambda0_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        check_transmissivity("t_itm", self.t_itm)?;
        check_transmissivity("t_srm", self.t_srm)?;
        if !(self.squeeze_r.is_finite() && self.squeeze_r >= 0.0) {
            return Err(domain(format!(
                "squeeze_r must be >= 0, got {}",
                self.squeeze_r
            )));
        }
        Ok(())
    }

    /// Carrier angular frequency ω₀ = 2πc/λ₀.
    pub fn omega0(&self) -> f64 {
        TAU * C / self.lambda0_m
    }

    pub fn with_lengths(&self, l_arm_m: f64, l_src_m: f64) -> Self {
        InterferometerParams {
            l_arm_m,
            l_src_m,
            ..*self
        }
    }
}

pub(crate) fn check_transmissivity(name: &str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must lie in (0, 1), got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = InterferometerParams::default();
        p.validate().unwrap();
        assert!((p.omega0() - 1.770_349_2e15).abs() / 1.77e15 < 1e-7);
    }

    #[test]
    fn rejects_bad_values() {
        let p = InterferometerParams {
            t_itm: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = InterferometerParams {
            squeeze_r: -0.1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = InterferometerParams {
            l_src_m: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn convention_round_trips_through_str() {
        for c in [SloshingConvention::AsPrinted, SloshingConvention::SqrtT] {
            assert_eq!(c.as_str().parse::<SloshingConvention>().unwrap(), c);
        }
        assert!("sqrt".parse::<SloshingConvention>().is_err());
    }
}
