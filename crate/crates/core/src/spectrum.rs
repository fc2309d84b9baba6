//! Strain sensitivity curves for a chosen tuning.

use std::f64::consts::TAU;

use crate::error::Result;
use crate::io::SpectrumSpec;
use crate::noise::{delta_phi, omega_grid, sensitivity, FilterTarget};
use crate::oracle::{oracle_sensitivity, IdlerAnglePolicy};
use crate::params::InterferometerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBin {
    pub frequency_hz: f64,
    /// Exact rotation, strain²/Hz.
    pub s_h_ideal: f64,
    /// With the rotation error of the tuning.
    pub s_h_approx: f64,
    /// Gaussian-state conditional variance for the same tuning.
    pub s_h_oracle: f64,
    pub delta_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpectrum {
    pub bins: Vec<SpectrumBin>,
}

impl SensitivitySpectrum {
    /// Largest S_approx / S_ideal over the bins.
    pub fn max_degradation_ratio(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| b.s_h_approx / b.s_h_ideal)
            .fold(0.0, f64::max)
    }
}

/// Curves on a log-spaced grid for the filter `target` (at `params`' lengths).
pub fn compute_spectrum(
    params: &InterferometerParams,
    target: &FilterTarget,
    spec: &SpectrumSpec,
    policy: IdlerAnglePolicy,
) -> Result<SensitivitySpectrum> {
    spec.validate()?;
    params.validate()?;
    let mut bins = Vec::with_capacity(spec.bins);
    for w in omega_grid(spec.f_min_hz, spec.f_max_hz, spec.bins) {
        let dphi = delta_phi(params, w, target)?;
        let s = sensitivity(params, w, dphi)?;
        bins.push(SpectrumBin {
            frequency_hz: w / TAU,
            s_h_ideal: s.ideal,
            s_h_approx: s.total(),
            s_h_oracle: oracle_sensitivity(params, w, target, policy)?,
            delta_phi: dphi,
        });
    }
    Ok(SensitivitySpectrum { bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{h_sql, kappa_lbi, target_gamma_f, unit_coupling_omega};

    #[test]
    fn default_grid_shape() {
        let p = InterferometerParams::default();
        let s = compute_spectrum(
            &p,
            &target_gamma_f(&p),
            &SpectrumSpec::default(),
            Default::default(),
        )
        .unwrap();
        assert_eq!(s.bins.len(), 600);
        assert!((s.bins[0].frequency_hz - 1.0).abs() < 1e-12);
        assert!((s.bins[599].frequency_hz - 1e4).abs() < 1e-8);
        assert!(s
            .bins
            .windows(2)
            .all(|w| w[1].frequency_hz > w[0].frequency_hz));
    }

    #[test]
    fn ideal_at_unit_coupling() {
        let p = InterferometerParams::default();
        let w1 = unit_coupling_omega(|w| kappa_lbi(&p, w).unwrap(), 1.0, 1e5).unwrap();
        let h = h_sql(&p, w1).unwrap();
        let s = sensitivity(&p, w1, 0.0).unwrap().ideal;
        let expect = h * h / (2.0 * p.squeeze_r).cosh();
        assert!((s - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn oracle_tracks_approximation() {
        let p = InterferometerParams::default();
        let s = compute_spectrum(
            &p,
            &target_gamma_f(&p),
            &SpectrumSpec::default(),
            Default::default(),
        )
        .unwrap();
        for b in &s.bins {
            assert!((b.s_h_oracle - b.s_h_approx).abs() / b.s_h_approx < 0.05);
        }
        assert!(s.max_degradation_ratio() < 1.1);
    }
}
