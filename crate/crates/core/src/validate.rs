//! Independent re-verification of working-point rows.
//!
//! Every check starts from the raw fields of a row. The SRC phase after
//! tuning, the compound-mirror phase (taken from the complex reflectivity)
//! and the rotation maximum are all recomputed here, without the search's
//! tuning solver or cached metrics.

use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::angle::{round_trip_cycles_frac, wrap_half_pi, wrap_pi};
use crate::constants::C;
use crate::error::Result;
use crate::io::{read_workpoints, RunConfig, WorkPointRow};
use crate::noise::{correction_coefficient, kappa_lbi, standard_band, target_gamma_f};
use crate::search::error_budget_bound;
use crate::src_cavity::{gamma_f_of_phi, solve_phi_exact, src_response, PHASE_SLACK};

/// Relative tolerance on re-derived row fields and metrics.
pub const FIELD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Δ or γ_f inconsistent with (φ_approx, n, lengths).
    CandidateInvariant,
    Band,
    NRange,
    Budget,
    MicroBound,
    /// A correction that is not a multiple of λ₀/2.
    CarrierLattice,
    SrcPhase,
    Resonance,
    RotationError,
    Degradation,
    /// Stored max |δΦ| or degradation differs from the recomputation.
    MetricMismatch,
    /// φ_exact cannot be reached at these lengths.
    Unreachable,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::CandidateInvariant => "candidate invariant",
            Violation::Band => "band",
            Violation::NRange => "n range",
            Violation::Budget => "budget",
            Violation::MicroBound => "micro bound",
            Violation::CarrierLattice => "carrier lattice",
            Violation::SrcPhase => "src phase",
            Violation::Resonance => "resonance",
            Violation::RotationError => "rotation error",
            Violation::Degradation => "degradation",
            Violation::MetricMismatch => "metric mismatch",
            Violation::Unreachable => "unreachable bandwidth",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn on_half_wave_lattice(dl: f64, half_wave: f64) -> bool {
    let k = (dl / half_wave).round();
    close(dl, k * half_wave, FIELD_TOL) || dl == 0.0
}

/// Recomputed (max |δΦ|, degradation) for a detuned filter of bandwidth `gamma`.
fn rotation_metrics(p: &crate::InterferometerParams, gamma: f64) -> Result<(f64, f64)> {
    let mut worst = 0.0_f64;
    for w in standard_band() {
        let rot = ((w - gamma) / gamma).atan() + ((-w - gamma) / gamma).atan();
        let err = wrap_half_pi(rot + kappa_lbi(p, w)?.atan());
        worst = worst.max(err.abs());
    }
    Ok((worst, correction_coefficient(p.squeeze_r) * worst * worst))
}

/// All constraints `row` violates under `config`; empty means it passes.
pub fn validate_row(row: &WorkPointRow, config: &RunConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = &config.tolerances;
    let grid = &config.grid;
    let p = config.params.with_lengths(row.l_arm_m, row.l_src_m);
    let half_wave = p.lambda0_m / 2.0;

    let delta = TAU * row.delta_over_2pi_hz;
    let delta_expected = (row.phi_approx_rad + row.n as f64 * PI) * C / row.l_src_m;
    let gamma_expected = gamma_f_of_phi(row.phi_approx_rad, p.t_itm, p.t_srm, row.l_arm_m);
    if !close(delta, delta_expected, FIELD_TOL)
        || !close(row.gamma_f_rad_s, gamma_expected, FIELD_TOL)
    {
        out.push(Violation::CandidateInvariant);
    }
    if !grid.band().contains(delta_expected) {
        out.push(Violation::Band);
    }
    if row.n < grid.n_min || row.n > grid.n_max {
        out.push(Violation::NRange);
    }
    if !(row.dl_arm_m.abs() < tol.micro_bound_m && row.dl_src_m.abs() < tol.micro_bound_m) {
        out.push(Violation::MicroBound);
    }
    if !on_half_wave_lattice(row.dl_arm_m, half_wave)
        || !on_half_wave_lattice(row.dl_src_m, half_wave)
    {
        out.push(Violation::CarrierLattice);
    }

    let Ok(phi_exact) = solve_phi_exact(target_gamma_f(&p).gamma_f, p.t_itm, p.t_srm, row.l_arm_m)
    else {
        out.push(Violation::Unreachable);
        return out;
    };
    let bound = error_budget_bound(&p, phi_exact, tol.dphi_budget_rad);
    if (row.phi_approx_rad - phi_exact).abs() > bound + PHASE_SLACK {
        out.push(Violation::Budget);
    }

    let phi_src = delta_expected * (row.l_src_m + row.dl_src_m) / C - row.n as f64 * PI;
    if (phi_src - phi_exact).abs() > tol.src_phase_window_rad + PHASE_SLACK {
        out.push(Violation::SrcPhase);
    }
    let resonance = src_response(phi_src, p.t_itm, p.t_srm).map(|r| {
        let gamma = gamma_f_of_phi(phi_src, p.t_itm, p.t_srm, row.l_arm_m);
        let carrier = round_trip_cycles_frac(row.l_arm_m, p.lambda0_m)
            + round_trip_cycles_frac(row.dl_arm_m, p.lambda0_m);
        let sideband = 2.0 * (delta_expected - gamma) * (row.l_arm_m + row.dl_arm_m) / C;
        wrap_pi(TAU * carrier + sideband + r.r_eff.arg())
    });
    match resonance {
        Ok(res) if res.abs() <= tol.resonance_phase_rad => {}
        _ => out.push(Violation::Resonance),
    }

    match rotation_metrics(&p, gamma_expected) {
        Ok((max, degradation)) => {
            if !(max < tol.dphi_budget_rad) {
                out.push(Violation::RotationError);
            }
            if !(degradation < tol.max_degradation) {
                out.push(Violation::Degradation);
            }
            if !close(row.max_dphi_rad, max, FIELD_TOL)
                || !close(row.degradation, degradation, FIELD_TOL)
            {
                out.push(Violation::MetricMismatch);
            }
        }
        Err(_) => out.push(Violation::RotationError),
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowReport {
    pub line: usize,
    pub violations: Vec<Violation>,
}

impl RowReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<RowReport>,
    pub malformed: Vec<(usize, String)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.malformed.is_empty() && self.rows.iter().all(RowReport::passed)
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed()).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            if r.passed() {
                writeln!(f, "line {}: pass", r.line)?;
            } else {
                let names: Vec<&str> = r.violations.iter().map(|v| v.name()).collect();
                writeln!(f, "line {}: FAIL ({})", r.line, names.join(", "))?;
            }
        }
        for (line, msg) in &self.malformed {
            writeln!(f, "line {line}: MALFORMED ({msg})")?;
        }
        write!(
            f,
            "{} rows, {} failed, {} malformed",
            self.rows.len(),
            self.failed_rows(),
            self.malformed.len()
        )
    }
}

pub fn validate_rows(rows: &[(usize, WorkPointRow)], config: &RunConfig) -> Vec<RowReport> {
    rows.iter()
        .map(|(line, row)| RowReport {
            line: *line,
            violations: validate_row(row, config),
        })
        .collect()
}

/// Parse and check a working-point file.
pub fn validate_file(path: &std::path::Path, config: &RunConfig) -> Result<ValidationReport> {
    let parsed = read_workpoints(path)?;
    Ok(ValidationReport {
        rows: validate_rows(&parsed.rows, config),
        malformed: parsed.malformed,
    })
}
