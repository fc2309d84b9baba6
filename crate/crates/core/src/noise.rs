//! Closed-form quantum-noise quantities of a signal-recycled interferometer:
//! SQL, optomechanical coupling, filter targets, idler rotation and the
//! strain sensitivity with an imperfect rotation angle.

use std::f64::consts::TAU;

use crate::angle::wrap_half_pi;
use crate::constants::{C, HBAR};
use crate::error::{domain, Result};
use crate::params::{InterferometerParams, SloshingConvention};

/// Lower edge of the frequency band used for rotation-error maxima, Hz.
pub const BAND_F_MIN_HZ: f64 = 1.0;
/// Upper edge of the frequency band used for rotation-error maxima, Hz.
pub const BAND_F_MAX_HZ: f64 = 1.0e4;
/// Number of log-spaced points in the standard band.
pub const BAND_POINTS: usize = 1000;

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "angular frequency must be positive, got {omega}"
        )))
    }
}

/// Log-spaced angular frequencies 2π·f for f in [f_lo, f_hi] Hz, inclusive.
pub fn omega_grid(f_lo_hz: f64, f_hi_hz: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![TAU * f_lo_hz],
        _ => {
            let (a, b) = (f_lo_hz.log10(), f_hi_hz.log10());
            let step = (b - a) / (points - 1) as f64;
            (0..points)
                .map(|i| TAU * 10f64.powf(a + step * i as f64))
                .collect()
        }
    }
}

/// The 1 Hz – 10 kHz, 1000-point grid used for every max |δΦ| evaluation.
pub fn standard_band() -> Vec<f64> {
    omega_grid(BAND_F_MIN_HZ, BAND_F_MAX_HZ, BAND_POINTS)
}

/// Square root of the free-mass SQL, h_SQL = √(8ħ / (m Ω² L_arm²)).
pub fn h_sql(params: &InterferometerParams, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    Ok((8.0 * HBAR / params.mass_kg).sqrt() / (omega * params.l_arm_m))
}

/// Coupling constant of the compound-mirror (short SRC) picture with an
/// explicit detection bandwidth `gamma`.
pub fn kappa_klmtv(params: &InterferometerParams, omega: f64, gamma: f64) -> Result<f64> {
    check_omega(omega)?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(domain(format!(
            "detection bandwidth must be positive, got {gamma}"
        )));
    }
    let l = params.l_arm_m;
    let w2 = omega * omega;
    Ok(32.0 * params.omega0() * params.p_arm_w
        / (params.mass_kg * l * l * w2 * (w2 + gamma * gamma)))
}

/// Arm/SRC coupled-cavity resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sloshing {
    /// Resonance frequency ω_s, rad/s.
    pub omega_s: f64,
    /// Resonance bandwidth γ_s, rad/s.
    pub gamma_s: f64,
}

pub fn sloshing(params: &InterferometerParams) -> Sloshing {
    let t = match params.sloshing {
        SloshingConvention::AsPrinted => params.t_itm,
        SloshingConvention::SqrtT => params.t_itm.sqrt(),
    };
    Sloshing {
        omega_s: C * t / (2.0 * (params.l_arm_m * params.l_src_m).sqrt()),
        gamma_s: C * params.t_srm / (4.0 * params.l_src_m),
    }
}

/// Coupling constant for long-baseline detectors, including the sloshing
/// resonance between arm and SRC.
pub fn kappa_lbi(params: &InterferometerParams, omega: f64) -> Result<f64> {
    let h = h_sql(params, omega)?;
    let Sloshing { omega_s, gamma_s } = sloshing(params);
    let w2 = omega * omega;
    let ws2 = omega_s * omega_s;
    let den = HBAR * C * (gamma_s * gamma_s * w2 + (w2 - ws2) * (w2 - ws2));
    Ok(2.0 * h * h * params.l_arm_m * params.omega0() * params.p_arm_w * gamma_s * ws2 / den)
}

/// Effective bandwidth and detuning the interferometer must present to the idler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterTarget {
    pub gamma_f: f64,
    pub delta_f: f64,
}

impl FilterTarget {
    /// Filter with δ_f = −γ_f, the single-cavity optimum.
    pub fn detuned(gamma_f: f64) -> Result<Self> {
        if !(gamma_f.is_finite() && gamma_f > 0.0) {
            return Err(domain(format!("gamma_f must be positive, got {gamma_f}")));
        }
        Ok(FilterTarget {
            gamma_f,
            delta_f: -gamma_f,
        })
    }
}

/// Required filter: γ_f = lim_{Ω→0} √(Ω² K_LBI / 2) = √(8 ω₀ P γ_s / (m L_arm c ω_s²)),
/// δ_f = −γ_f.
///
/// With the `SqrtT` convention this is √(8 ω₀ P T_SRM / (m c² T_ITM)), independent
/// of both lengths. See [`printed_gamma_f`] for the shorter closed form.
pub fn target_gamma_f(params: &InterferometerParams) -> FilterTarget {
    let Sloshing { omega_s, gamma_s } = sloshing(params);
    let g2 = 8.0 * params.omega0() * params.p_arm_w * gamma_s
        / (params.mass_kg * params.l_arm_m * C * omega_s * omega_s);
    let gamma_f = g2.sqrt();
    FilterTarget {
        gamma_f,
        delta_f: -gamma_f,
    }
}

/// The closed form √(4 ω₀ P T_SRM / (m c² T_ITM²)).
///
/// It sits a factor √2 below the Ω→0 limit of √(Ω² K_LBI / 2) for the
/// `AsPrinted` sloshing frequency, so a filter built from it never matches
/// arctan K; kept for reference and comparison only.
pub fn printed_gamma_f(params: &InterferometerParams) -> f64 {
    (4.0 * params.omega0() * params.p_arm_w * params.t_srm
        / (params.mass_kg * C * C * params.t_itm * params.t_itm))
        .sqrt()
}

/// Idler ellipse rotation produced by a detuned cavity,
/// Φ_rot = arctan((Ω + δ_f)/γ_f) + arctan((−Ω + δ_f)/γ_f).
pub fn phi_rot(omega: f64, target: &FilterTarget) -> f64 {
    ((omega + target.delta_f) / target.gamma_f).atan()
        + ((-omega + target.delta_f) / target.gamma_f).atan()
}

/// Rotation error δΦ of the squeezed quadrature, wrapped to (−π/2, π/2].
///
/// The EPR correlation pairs the idler quadrature at angle θ with the signal
/// quadrature at −θ, so an idler rotation Φ_rot turns the conditional signal
/// ellipse by −Φ_rot; the ideal is −Φ_rot = arctan K and the error is
/// Φ_rot + arctan K.
pub fn delta_phi(params: &InterferometerParams, omega: f64, target: &FilterTarget) -> Result<f64> {
    let k = kappa_lbi(params, omega)?;
    Ok(wrap_half_pi(phi_rot(omega, target) + k.atan()))
}

/// max |δΦ| over `band` (angular frequencies).
pub fn max_abs_delta_phi(
    params: &InterferometerParams,
    target: &FilterTarget,
    band: &[f64],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &w in band {
        worst = worst.max(delta_phi(params, w, target)?.abs());
    }
    Ok(worst)
}

/// sinh²(2r): ratio of the rotation-error term to the ideal term per rad².
pub fn correction_coefficient(r: f64) -> f64 {
    let s = (2.0 * r).sinh();
    s * s
}

/// Squeezing parameter for a given squeezing level in dB, e^{2r} = 10^{dB/10}.
pub fn squeeze_r_from_db(db: f64) -> f64 {
    0.5 * 10f64.powf(db / 10.0).ln()
}

/// Strain PSD split into the exact-rotation term and the rotation-error term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    /// h_SQL²/(2 cosh 2r) · (K + 1/K), strain²/Hz.
    pub ideal: f64,
    /// h_SQL²/2 · sinh²2r/cosh 2r · (K + 1/K) · δΦ², strain²/Hz.
    pub correction: f64,
}

impl Sensitivity {
    pub fn total(&self) -> f64 {
        self.ideal + self.correction
    }
}

/// One-sided strain PSD with rotation error `dphi`, using K = K_LBI.
pub fn sensitivity(params: &InterferometerParams, omega: f64, dphi: f64) -> Result<Sensitivity> {
    let h = h_sql(params, omega)?;
    let k = kappa_lbi(params, omega)?;
    Ok(sensitivity_from_parts(h, k, params.squeeze_r, dphi))
}

pub(crate) fn sensitivity_from_parts(h_sql: f64, kappa: f64, r: f64, dphi: f64) -> Sensitivity {
    let cosh = (2.0 * r).cosh();
    let base = h_sql * h_sql * (kappa + 1.0 / kappa) / 2.0;
    Sensitivity {
        ideal: base / cosh,
        correction: base * correction_coefficient(r) / cosh * dphi * dphi,
    }
}

/// Angular frequency where a decreasing coupling `kappa` crosses 1, found by
/// bisection in log Ω on [lo, hi].
pub fn unit_coupling_omega(kappa: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let f = |w: f64| kappa(w).ln();
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (fa, fb) = (f(lo), f(hi));
    if !(fa > 0.0 && fb < 0.0) {
        return Err(domain(format!(
            "K = 1 is not bracketed on [{lo:e}, {hi:e}] (K = {:e}, {:e})",
            fa.exp(),
            fb.exp()
        )));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m.exp()) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}
