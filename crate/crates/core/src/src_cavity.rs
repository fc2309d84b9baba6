//! The signal-recycling cavity seen by the idler as a compound mirror, the
//! idler resonance condition in the arm, and microscopic length tuning.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::{round_trip_cycles_frac, wrap_pi};
use crate::constants::C;
use crate::error::{domain, Error, Result};
use crate::noise::target_gamma_f;
use crate::params::{check_transmissivity, InterferometerParams};

/// Absolute slack on phase-window comparisons, absorbing lattice rounding.
pub const PHASE_SLACK: f64 = 1e-12;

/// Complex response of the SRC for the idler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrcResponse {
    pub r_eff: Complex64,
    pub t_eff: Complex64,
    /// Single-pass idler phase in the SRC, rad.
    pub phi_src: f64,
}

/// Compound-mirror reflectivity and transmissivity of ITM + SRM,
/// r = (√R_ITM − √R_SRM e^{2iφ}) / (1 − √(R_ITM R_SRM) e^{2iφ}),
/// t = √(T_ITM T_SRM) e^{iφ} / (1 − √(R_ITM R_SRM) e^{2iφ}).
pub fn src_response(phi_src: f64, t_itm: f64, t_srm: f64) -> Result<SrcResponse> {
    check_transmissivity("t_itm", t_itm)?;
    check_transmissivity("t_srm", t_srm)?;
    let (a, b) = ((1.0 - t_itm).sqrt(), (1.0 - t_srm).sqrt());
    let z = Complex64::from_polar(1.0, 2.0 * phi_src);
    let den = 1.0 - a * b * z;
    Ok(SrcResponse {
        r_eff: (a - b * z) / den,
        t_eff: (t_itm * t_srm).sqrt() * Complex64::from_polar(1.0, phi_src) / den,
        phi_src,
    })
}

/// |t_eff|² without forming complex numbers.
pub fn src_power_transmission(phi_src: f64, t_itm: f64, t_srm: f64) -> f64 {
    let ab = ((1.0 - t_itm) * (1.0 - t_srm)).sqrt();
    t_itm * t_srm / (1.0 + ab * ab - 2.0 * ab * (2.0 * phi_src).cos())
}

/// arg r_eff, computed as arg(√R_ITM − √R_SRM z) − arg(1 − √(R_ITM R_SRM) z).
pub fn src_reflection_phase(phi_src: f64, t_itm: f64, t_srm: f64) -> f64 {
    let (a, b) = ((1.0 - t_itm).sqrt(), (1.0 - t_srm).sqrt());
    let (s, c) = (2.0 * phi_src).sin_cos();
    let num = (-b * s).atan2(a - b * c);
    let den = (-a * b * s).atan2(1.0 - a * b * c);
    wrap_pi(num - den)
}

/// Effective idler bandwidth γ_f = c |t_eff|² / (4 L_arm).
pub fn gamma_f_of_phi(phi_src: f64, t_itm: f64, t_srm: f64, l_arm: f64) -> f64 {
    C * src_power_transmission(phi_src, t_itm, t_srm) / (4.0 * l_arm)
}

/// Achievable γ_f range: (φ = π/2 minimum, φ = 0 maximum).
pub fn gamma_f_range(t_itm: f64, t_srm: f64, l_arm: f64) -> (f64, f64) {
    (
        gamma_f_of_phi(FRAC_PI_2, t_itm, t_srm, l_arm),
        gamma_f_of_phi(0.0, t_itm, t_srm, l_arm),
    )
}

/// SRC phase in [0, π/2] producing `gamma_target`, by inverting
/// cos 2φ = (1 + R_ITM R_SRM − T_ITM T_SRM c/(4 L_arm γ_f)) / (2√(R_ITM R_SRM)).
pub fn solve_phi_exact(gamma_target: f64, t_itm: f64, t_srm: f64, l_arm: f64) -> Result<f64> {
    check_transmissivity("t_itm", t_itm)?;
    check_transmissivity("t_srm", t_srm)?;
    if !(gamma_target > 0.0 && l_arm > 0.0) {
        return Err(domain("gamma_f target and arm length must be positive"));
    }
    let (r1, r2) = (1.0 - t_itm, 1.0 - t_srm);
    let ab = (r1 * r2).sqrt();
    let u = (1.0 + r1 * r2 - t_itm * t_srm * C / (4.0 * l_arm * gamma_target)) / (2.0 * ab);
    let unreachable = || {
        let (min, max) = gamma_f_range(t_itm, t_srm, l_arm);
        Error::UnreachableBandwidth {
            target: gamma_target,
            min,
            max,
        }
    };
    const EDGE: f64 = 1e-14;
    if !(-1.0 - EDGE..=1.0 + EDGE).contains(&u) {
        return Err(unreachable());
    }
    Ok(0.5 * u.clamp(-1.0, 1.0).acos())
}

/// SRC phase that realizes the required filter for these parameters.
pub fn phi_exact(params: &InterferometerParams) -> Result<f64> {
    solve_phi_exact(
        target_gamma_f(params).gamma_f,
        params.t_itm,
        params.t_srm,
        params.l_arm_m,
    )
}

/// Pump-detuning band, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBand {
    pub lo: f64,
    pub hi: f64,
}

impl DeltaBand {
    pub fn from_hz(lo_hz: f64, hi_hz: f64) -> Self {
        DeltaBand {
            lo: TAU * lo_hz,
            hi: TAU * hi_hz,
        }
    }

    /// Δ/2π ∈ [5, 50] MHz.
    pub fn standard() -> Self {
        Self::from_hz(5e6, 50e6)
    }

    pub fn contains(&self, delta: f64) -> bool {
        delta >= self.lo && delta <= self.hi
    }
}

/// Pump detuning for SRC phase `phi` on FSR index `n`: Δ = (φ + nπ) c / L_SRC.
pub fn pump_detuning(phi: f64, n_fsr: i64, l_src: f64) -> f64 {
    (phi + n_fsr as f64 * PI) * C / l_src
}

/// FSR indices whose detuning stays inside `band` for every SRC length in
/// [l_src_min, l_src_max]; `None` when no index qualifies.
pub fn admissible_fsr_indices(
    l_src_min: f64,
    l_src_max: f64,
    band: &DeltaBand,
    phi: f64,
) -> Option<RangeInclusive<i64>> {
    // Δ grows with n and shrinks with L_SRC: the longest SRC sets the lower
    // index, the shortest the upper.
    let n_min = ((band.lo * l_src_max / C - phi) / PI).ceil() as i64;
    let n_max = ((band.hi * l_src_min / C - phi) / PI).floor() as i64;
    (n_min <= n_max).then_some(n_min..=n_max)
}

/// One grid cell of the working-point search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningCandidate {
    pub l_arm_m: f64,
    pub l_src_m: f64,
    pub phi_approx: f64,
    pub n_fsr: i64,
    /// Pump detuning Δ, rad/s.
    pub delta: f64,
    pub gamma_f: f64,
    pub delta_f: f64,
}

impl TuningCandidate {
    /// Candidate at the lengths held in `params`.
    pub fn new(params: &InterferometerParams, phi_approx: f64, n_fsr: i64) -> Self {
        let gamma_f = gamma_f_of_phi(phi_approx, params.t_itm, params.t_srm, params.l_arm_m);
        TuningCandidate {
            l_arm_m: params.l_arm_m,
            l_src_m: params.l_src_m,
            phi_approx,
            n_fsr,
            delta: pump_detuning(phi_approx, n_fsr, params.l_src_m),
            gamma_f,
            delta_f: -gamma_f,
        }
    }

    pub fn delta_hz(&self) -> f64 {
        self.delta / TAU
    }
}

/// Phase offsets i·step for |i·step| ≤ window.
///
/// When 1/step is an integer N the offsets are formed as i/N, so a lattice
/// refined by an integer factor reproduces every coarse offset bit for bit.
pub fn phase_offsets(window: f64, step: f64) -> impl Iterator<Item = f64> {
    let half = (window / step + 1e-9).floor() as i64;
    let inv = (1.0 / step).round();
    let exact = inv >= 1.0 && ((1.0 / step) - inv).abs() <= 1e-9 * inv;
    (-half..=half).map(move |i| {
        if exact {
            i as f64 / inv
        } else {
            i as f64 * step
        }
    })
}

/// All (φ, n) pairs around φ_exact whose detuning lies in `band`, for the
/// lengths held in `params`. Ordered by φ, then n.
pub fn enumerate_candidates(
    params: &InterferometerParams,
    phi_window: f64,
    phi_step: f64,
    band: DeltaBand,
) -> Result<impl Iterator<Item = TuningCandidate>> {
    if !(phi_window >= 0.0) || !(phi_step > 0.0) {
        return Err(domain("phi_window must be >= 0 and phi_step > 0"));
    }
    let centre = phi_exact(params)?;
    let params = *params;
    Ok(phase_offsets(phi_window, phi_step).flat_map(move |off| {
        let phi = centre + off;
        let n_lo = ((band.lo * params.l_src_m / C - phi) / PI).ceil() as i64;
        let n_hi = ((band.hi * params.l_src_m / C - phi) / PI).floor() as i64;
        (n_lo..=n_hi)
            .map(move |n| TuningCandidate::new(&params, phi, n))
            .filter(move |c| band.contains(c.delta))
    }))
}

/// Single-pass SRC phase of the idler after moving the SRM by `dl_src`:
/// Δ (L_SRC + δL_SRC) / c, with the nπ carried by the FSR index removed.
pub fn realized_src_phase(delta: f64, l_src: f64, dl_src: f64, n_fsr: i64) -> f64 {
    delta * (l_src + dl_src) / C - n_fsr as f64 * PI
}

/// Idler round-trip phase in the arm minus 2πℕ, wrapped to (−π, π]:
/// 2 (ω₀ + Δ + δ_f)(L_arm + δL_arm)/c + arg r_eff(φ_src), with δ_f = −γ_f(φ_src).
///
/// The carrier part 2ω₀L/c = 2π·(2L/λ₀) is reduced modulo 2π separately for
/// `l_arm` and `dl_arm`, keeping ~1e-12 rad accuracy on a ~1e11 rad phase.
/// The bandwidth is evaluated at the macroscopic `l_arm`.
pub fn round_trip_residual(
    params: &InterferometerParams,
    l_arm: f64,
    dl_arm: f64,
    delta: f64,
    phi_src: f64,
) -> f64 {
    let gamma = gamma_f_of_phi(phi_src, params.t_itm, params.t_srm, l_arm);
    let carrier = round_trip_cycles_frac(l_arm, params.lambda0_m)
        + round_trip_cycles_frac(dl_arm, params.lambda0_m);
    let offset = 2.0 * (delta - gamma) * (l_arm + dl_arm) / C;
    wrap_pi(TAU * carrier + offset + src_reflection_phase(phi_src, params.t_itm, params.t_srm))
}

/// Resonance residual of an untuned candidate.
pub fn resonance_residual(candidate: &TuningCandidate, params: &InterferometerParams) -> f64 {
    round_trip_residual(
        params,
        candidate.l_arm_m,
        0.0,
        candidate.delta,
        candidate.phi_approx,
    )
}

/// Acceptance thresholds shared by micro-tuning, the search and validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest accepted |resonance residual|, rad.
    pub resonance_phase_rad: f64,
    /// Largest accepted max |δΦ|, rad.
    pub dphi_budget_rad: f64,
    /// Microscopic length corrections must satisfy |δL| < this, m.
    pub micro_bound_m: f64,
    /// Largest accepted |φ_src(after tuning) − φ_exact|, rad.
    pub src_phase_window_rad: f64,
    /// Largest accepted sinh²(2r)·max|δΦ|².
    pub max_degradation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            resonance_phase_rad: 1e-4,
            dphi_budget_rad: 0.02,
            micro_bound_m: 0.01,
            src_phase_window_rad: 0.002,
            max_degradation: 0.1,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("resonance_phase_rad", self.resonance_phase_rad),
            ("dphi_budget_rad", self.dphi_budget_rad),
            ("micro_bound_m", self.micro_bound_m),
            ("src_phase_window_rad", self.src_phase_window_rad),
            ("max_degradation", self.max_degradation),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Microscopic corrections on the carrier half-wave lattices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroTuning {
    /// δL_arm = arm_steps · λ₀/2.
    pub arm_steps: i64,
    /// δL_SRC = src_steps · λ₀/2.
    pub src_steps: i64,
    pub dl_arm_m: f64,
    pub dl_src_m: f64,
    /// SRC phase after tuning.
    pub phi_src: f64,
    pub residual_phase: f64,
}

/// Largest k with k·half_wave strictly below `bound`.
pub fn max_lattice_steps(bound: f64, half_wave: f64) -> i64 {
    let mut k = (bound / half_wave).floor() as i64;
    while k > 0 && k as f64 * half_wave >= bound {
        k -= 1;
    }
    k.max(0)
}

/// Search the two λ₀/2 lattices within ±`micro_bound_m` for a tuning that
/// closes the idler resonance.
///
/// Both corrections stay on carrier half-wave multiples, so carrier resonance
/// in arm and SRC is untouched. Returns the feasible pair with the smallest
/// |SRC step| (ties to the positive step), and for that SRC step the arm step
/// with the smallest |residual|. Every returned tuning has been re-checked with
/// [`round_trip_residual`].
pub fn micro_tune(
    candidate: &TuningCandidate,
    params: &InterferometerParams,
    tol: &Tolerances,
) -> Option<MicroTuning> {
    let phi_exact = solve_phi_exact(
        target_gamma_f(params).gamma_f,
        params.t_itm,
        params.t_srm,
        candidate.l_arm_m,
    )
    .ok()?;
    MicroSolver::new(candidate, params, tol, phi_exact)?.solve()
}

pub(crate) struct MicroSolver<'a> {
    cand: &'a TuningCandidate,
    params: &'a InterferometerParams,
    tol: &'a Tolerances,
    phi_exact: f64,
    half_wave: f64,
    max_steps: i64,
    src_step: f64,
    j_lo: i64,
    j_hi: i64,
    base: f64,
    reach: f64,
    slope: f64,
}

impl<'a> MicroSolver<'a> {
    pub(crate) fn new(
        cand: &'a TuningCandidate,
        params: &'a InterferometerParams,
        tol: &'a Tolerances,
        phi_exact: f64,
    ) -> Option<Self> {
        let lambda = params.lambda0_m;
        let half_wave = lambda / 2.0;
        let max_steps = max_lattice_steps(tol.micro_bound_m, half_wave);
        let src_step = cand.delta * half_wave / C;
        let window = tol.src_phase_window_rad + PHASE_SLACK;
        let j_lo =
            (((phi_exact - window - cand.phi_approx) / src_step).ceil() as i64).max(-max_steps);
        let j_hi =
            (((phi_exact + window - cand.phi_approx) / src_step).floor() as i64).min(max_steps);
        if j_lo > j_hi {
            return None;
        }
        let l = cand.l_arm_m;
        let base = wrap_pi(TAU * round_trip_cycles_frac(l, lambda) + 2.0 * cand.delta * l / C);
        // Arm steps move the phase by (Δ + δ_f) λ₀/c < Δ λ₀/c each.
        let reach = max_steps as f64 * cand.delta * lambda / C + tol.resonance_phase_rad;
        let phi_lo = cand.phi_approx + j_lo as f64 * src_step;
        let phi_hi = cand.phi_approx + j_hi as f64 * src_step;
        let slope = phase_slope_bound(phi_lo, phi_hi, params.t_itm, params.t_srm, l)
            * src_step.abs()
            * (1.0 + 1e-6)
            + 1e-15;
        Some(MicroSolver {
            cand,
            params,
            tol,
            phi_exact,
            half_wave,
            max_steps,
            src_step,
            j_lo,
            j_hi,
            base,
            reach,
            slope,
        })
    }

    fn phi_at(&self, j: i64) -> f64 {
        self.cand.phi_approx + j as f64 * self.src_step
    }

    /// Wrapped residual at arm step 0 and the per-arm-step phase, for SRC step j.
    fn eval(&self, j: i64) -> (f64, f64) {
        let p = self.params;
        let phi = self.phi_at(j);
        let gamma = gamma_f_of_phi(phi, p.t_itm, p.t_srm, self.cand.l_arm_m);
        let w = wrap_pi(
            self.base - 2.0 * gamma * self.cand.l_arm_m / C
                + src_reflection_phase(phi, p.t_itm, p.t_srm),
        );
        (w, (self.cand.delta - gamma) * p.lambda0_m / C)
    }

    fn best_arm_step(&self, w: f64, arm_step: f64) -> (i64, f64) {
        let k0 = (-w / arm_step)
            .round()
            .clamp(-(self.max_steps as f64), self.max_steps as f64) as i64;
        let mut best = (k0, wrap_pi(w + k0 as f64 * arm_step));
        for k in [k0 - 1, k0 + 1] {
            if k.abs() > self.max_steps {
                continue;
            }
            let r = wrap_pi(w + k as f64 * arm_step);
            if r.abs() < best.1.abs() || (r.abs() == best.1.abs() && k.abs() < best.0.abs()) {
                best = (k, r);
            }
        }
        best
    }

    fn tuning_at(&self, j: i64) -> Option<MicroTuning> {
        let phi = self.phi_at(j);
        if (phi - self.phi_exact).abs() > self.tol.src_phase_window_rad + PHASE_SLACK {
            return None;
        }
        let (w, arm_step) = self.eval(j);
        let (k, res) = self.best_arm_step(w, arm_step);
        if res.abs() > self.tol.resonance_phase_rad {
            return None;
        }
        let tuning = MicroTuning {
            arm_steps: k,
            src_steps: j,
            dl_arm_m: k as f64 * self.half_wave,
            dl_src_m: j as f64 * self.half_wave,
            phi_src: phi,
            residual_phase: res,
        };
        recheck(self.cand, self.params, self.tol, self.phi_exact, &tuning).then_some(tuning)
    }

    /// First feasible SRC step walking from `start` towards `end` (inclusive).
    ///
    /// Steps whose residual is further from zero than the arm lattice can
    /// reach are skipped in bulk, using the Lipschitz bound on the SRC phase
    /// response; no feasible step can lie inside a skipped stretch.
    fn scan(&self, start: i64, end: i64) -> Option<MicroTuning> {
        let dir = if end >= start { 1 } else { -1 };
        let mut j = start;
        while (end - j) * dir >= 0 {
            let (w, _) = self.eval(j);
            let excess = w.abs() - self.reach;
            if excess <= 0.0 {
                if let Some(t) = self.tuning_at(j) {
                    return Some(t);
                }
                j += dir;
            } else {
                let skip = (excess / self.slope).ceil();
                let remaining = ((end - j) * dir + 1) as f64;
                if skip >= remaining {
                    return None;
                }
                j += dir * (skip as i64).max(1);
            }
        }
        None
    }

    pub(crate) fn solve(&self) -> Option<MicroTuning> {
        let (lo, hi) = (self.j_lo, self.j_hi);
        if lo > 0 {
            return self.scan(lo, hi);
        }
        if hi < 0 {
            return self.scan(hi, lo);
        }
        let up = self.scan(0, hi);
        let down_limit = match &up {
            Some(t) => -(t.src_steps - 1),
            None => lo,
        }
        .max(lo);
        let down = if down_limit <= -1 {
            self.scan(-1, down_limit)
        } else {
            None
        };
        down.or(up)
    }
}

/// Independent post-condition replay of a tuning against raw lengths.
fn recheck(
    cand: &TuningCandidate,
    params: &InterferometerParams,
    tol: &Tolerances,
    phi_exact: f64,
    t: &MicroTuning,
) -> bool {
    let half_wave = params.lambda0_m / 2.0;
    let on_lattice = |dl: f64| {
        let k = (dl / half_wave).round();
        (dl - k * half_wave).abs() <= 1e-9 * half_wave.max(dl.abs())
    };
    if !(t.dl_arm_m.abs() < tol.micro_bound_m && t.dl_src_m.abs() < tol.micro_bound_m) {
        return false;
    }
    if !(on_lattice(t.dl_arm_m) && on_lattice(t.dl_src_m)) {
        return false;
    }
    let phi = realized_src_phase(cand.delta, cand.l_src_m, t.dl_src_m, cand.n_fsr);
    if (phi - phi_exact).abs() > tol.src_phase_window_rad + PHASE_SLACK {
        return false;
    }
    round_trip_residual(params, cand.l_arm_m, t.dl_arm_m, cand.delta, phi).abs()
        <= tol.resonance_phase_rad
}

/// Upper bound on |d/dφ (arg r_eff(φ) − 2 γ_f(φ) L_arm / c)| for φ in [lo, hi].
///
/// Each of d arg(√R_ITM − √R_SRM z)/dφ and d arg(1 − √(R_ITM R_SRM) z)/dφ is
/// monotone in u = cos 2φ, so its extreme sits at an end of the u-range.
fn phase_slope_bound(lo: f64, hi: f64, t_itm: f64, t_srm: f64, l_arm: f64) -> f64 {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (a, b) = ((1.0 - t_itm).sqrt(), (1.0 - t_srm).sqrt());
    let ab = a * b;
    let (x_lo, x_hi) = (2.0 * lo, 2.0 * hi);
    let contains = |offset: f64| {
        // Does [x_lo, x_hi] contain offset + kπ·2 for some integer k?
        let k = ((x_lo - offset) / TAU).ceil();
        offset + k * TAU <= x_hi
    };
    let u_max = if contains(0.0) {
        1.0
    } else {
        x_lo.cos().max(x_hi.cos())
    };
    let u_min = if contains(PI) {
        -1.0
    } else {
        x_lo.cos().min(x_hi.cos())
    };
    let sin_max = if contains(FRAC_PI_2) || contains(-FRAC_PI_2) {
        1.0
    } else {
        x_lo.sin().abs().max(x_hi.sin().abs())
    };
    // d arg(p − q e^{2iφ})/dφ = 2 (q² − p q u)/(p² + q² − 2 p q u)
    let arg_slope = |p: f64, q: f64, u: f64| {
        let den = p * p + q * q - 2.0 * p * q * u;
        if den <= f64::MIN_POSITIVE {
            // r_eff passes through zero and its phase jumps by π.
            f64::INFINITY
        } else {
            (2.0 * (q * q - p * q * u) / den).abs()
        }
    };
    let term_a = arg_slope(a, b, u_min).max(arg_slope(a, b, u_max));
    let term_b = arg_slope(1.0, ab, u_min).max(arg_slope(1.0, ab, u_max));
    let g0 = C * t_itm * t_srm / (4.0 * l_arm);
    let d_min = 1.0 + ab * ab - 2.0 * ab * u_max;
    let term_g = 2.0 * l_arm / C * g0 * 4.0 * ab * sin_max / (d_min * d_min);
    term_a + term_b + term_g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SloshingConvention;

    fn table() -> InterferometerParams {
        InterferometerParams::default()
    }

    #[test]
    fn matched_mirrors_on_resonance() {
        let s = src_response(0.0, 0.04, 0.04).unwrap();
        assert!(s.r_eff.norm() < 1e-15);
        assert!((s.t_eff.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quarter_wave_transmission() {
        let s = src_response(FRAC_PI_2, 0.04, 0.04).unwrap();
        let expect = 0.04 * 0.04 / (1.0 + 0.96 * 0.96 + 2.0 * 0.96);
        assert!((s.t_eff.norm_sqr() - expect).abs() < 1e-17);
        assert!((expect - 4.165e-4).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_transmissivity() {
        assert!(src_response(0.1, 0.0, 0.04).is_err());
        assert!(src_response(0.1, 0.04, 1.2).is_err());
    }

    #[test]
    fn reflection_phase_matches_complex_arg() {
        for &phi in &[0.01, 0.124, 0.3, 1.2, 2.9, -0.7] {
            let s = src_response(phi, 0.04, 0.07).unwrap();
            let d = wrap_pi(s.r_eff.arg() - src_reflection_phase(phi, 0.04, 0.07));
            assert!(d.abs() < 1e-13, "phi = {phi}");
            let g = C * s.t_eff.norm_sqr() / 4e4;
            assert!((g - gamma_f_of_phi(phi, 0.04, 0.07, 1e4)).abs() / g < 1e-13);
        }
    }

    #[test]
    fn gamma_f_maximum_and_periodicity() {
        assert!((gamma_f_of_phi(0.0, 0.04, 0.04, 1e4) - C / 4e4).abs() < 1e-9);
        assert!((C / 4e4 - 7_494.811_45).abs() < 1e-4);
        for &phi in &[0.05, 0.4, 1.1] {
            let a = gamma_f_of_phi(phi, 0.04, 0.04, 1e4);
            let b = gamma_f_of_phi(phi + PI, 0.04, 0.04, 1e4);
            assert!((a - b).abs() / a < 1e-12);
        }
    }

    #[test]
    fn gamma_f_decreasing_on_quarter_period() {
        let mut prev = f64::INFINITY;
        for i in 1..10_000 {
            let phi = FRAC_PI_2 * i as f64 / 10_000.0;
            let g = gamma_f_of_phi(phi, 0.04, 0.04, 1e4);
            assert!(g < prev);
            prev = g;
        }
    }

    fn bisect_phi(target: f64) -> f64 {
        // gamma_f_of_phi decreases on (0, π/2).
        let (mut lo, mut hi) = (0.0_f64, FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma_f_of_phi(mid, 0.04, 0.04, 1e4) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn solve_phi_exact_for_printed_target() {
        let phi = solve_phi_exact(198.5, 0.04, 0.04, 1e4).unwrap();
        assert!((phi - bisect_phi(198.5)).abs() < 1e-10);
        assert!((phi - 0.124).abs() < 5e-4, "{phi}");
    }

    #[test]
    fn solve_phi_exact_round_trip_and_edges() {
        for &g in &[5.0, 56.14, 198.5, 280.7, 3000.0, 7000.0] {
            let phi = solve_phi_exact(g, 0.04, 0.04, 1e4).unwrap();
            assert!(phi > 0.0 && phi < FRAC_PI_2);
            assert!((gamma_f_of_phi(phi, 0.04, 0.04, 1e4) - g).abs() / g < 1e-9);
        }
        let top = gamma_f_of_phi(0.0, 0.04, 0.04, 1e4);
        assert!(solve_phi_exact(top, 0.04, 0.04, 1e4).unwrap().abs() < 1e-6);
        assert!(matches!(
            solve_phi_exact(top * 1.01, 0.04, 0.04, 1e4),
            Err(Error::UnreachableBandwidth { .. })
        ));
        let (min, _) = gamma_f_range(0.04, 0.04, 1e4);
        assert!(solve_phi_exact(min * 0.99, 0.04, 0.04, 1e4).is_err());
    }

    #[test]
    fn fsr_indices_for_standard_band() {
        let band = DeltaBand::standard();
        let phi = phi_exact(&table()).unwrap();
        assert_eq!(
            admissible_fsr_indices(100.0, 200.0, &band, phi),
            Some(7..=33)
        );
        assert_eq!(
            admissible_fsr_indices(100.0, 200.0, &band, 0.0),
            Some(7..=33)
        );
        assert_eq!(
            admissible_fsr_indices(100.0, 200.0, &DeltaBand::from_hz(5e6, 5.1e6), 0.0),
            None
        );
    }

    #[test]
    fn refined_offsets_contain_coarse_offsets() {
        let coarse: Vec<f64> = phase_offsets(0.002, 0.0001).collect();
        let fine: Vec<f64> = phase_offsets(0.002, 0.00001).collect();
        assert_eq!((coarse.len(), fine.len()), (41, 401));
        for (k, c) in coarse.iter().enumerate() {
            assert_eq!(c.to_bits(), fine[10 * k].to_bits());
        }
        assert_eq!(phase_offsets(0.0, 0.37).collect::<Vec<_>>(), vec![0.0]);
    }

    #[test]
    fn detuning_for_seven_fsr() {
        let d = pump_detuning(0.16828, 7, 100.0) / TAU;
        assert!((d - 10.57e6).abs() < 0.01e6, "{d}");
    }

    #[test]
    fn candidates_satisfy_invariants() {
        let p = table();
        let band = DeltaBand::standard();
        let all: Vec<_> = enumerate_candidates(&p, 0.002, 0.0001, band)
            .unwrap()
            .collect();
        // n = 4..=33 at L_SRC = 100 m.
        assert_eq!(all.len(), 41 * 30);
        for c in &all {
            assert_eq!(c.delta, pump_detuning(c.phi_approx, c.n_fsr, c.l_src_m));
            assert_eq!(c.delta_f, -c.gamma_f);
            assert!(band.contains(c.delta));
        }
        let centre = phi_exact(&p).unwrap();
        let only: Vec<_> = enumerate_candidates(&p, 0.0, 0.37, band).unwrap().collect();
        assert!(only.iter().all(|c| c.phi_approx == centre));
        assert_eq!(only.len(), 30);
        let narrow = DeltaBand::from_hz(5e6, 5.000_001e6);
        assert_eq!(
            enumerate_candidates(&p, 0.002, 0.0001, narrow)
                .unwrap()
                .count(),
            0
        );
    }

    #[test]
    fn residual_zero_for_manufactured_length() {
        let p = table();
        let phi = 0.2;
        let delta = pump_detuning(phi, 12, 100.0);
        let gamma = gamma_f_of_phi(phi, p.t_itm, p.t_srm, 1.0);
        let arg = src_reflection_phase(phi, p.t_itm, p.t_srm);
        // Total phase 2π·10⁶ exactly: L = (2π·10⁶ − arg r) c / (2 ω_idler + 2 δ_f).
        let l = (TAU * 1e6 - arg) * C / (2.0 * (p.omega0() + delta - gamma));
        // Bandwidth at the manufactured length is what enters the phase.
        let gamma_l = gamma_f_of_phi(phi, p.t_itm, p.t_srm, l);
        let l = (TAU * 1e6 - arg) * C / (2.0 * (p.omega0() + delta - gamma_l));
        let r = round_trip_residual(&p, l, 0.0, delta, phi);
        assert!(r.abs() < 1e-8, "{r}");
    }

    #[test]
    fn residual_idler_half_wave_periodicity() {
        let p = table();
        let c = TuningCandidate::new(&p.with_lengths(10_003.0, 100.0), 0.237, 9);
        let w_idler = p.omega0() + c.delta;
        let half = PI * C / w_idler;
        let a = round_trip_residual(&p, c.l_arm_m, 0.0, c.delta, c.phi_approx);
        let b = round_trip_residual(&p, c.l_arm_m, half, c.delta, c.phi_approx);
        assert!(wrap_pi(a - b).abs() < 1e-9, "{a} {b}");
        assert_eq!(a, resonance_residual(&c, &p));
    }

    #[test]
    fn residual_is_two_pi_periodic_in_phase() {
        // Shifting Δ by πc/L_arm adds exactly 2π to 2(ω+δ_f)L/c.
        let p = table();
        let c = TuningCandidate::new(&p, 0.237, 9);
        let a = round_trip_residual(&p, c.l_arm_m, 0.0, c.delta, c.phi_approx);
        let b = round_trip_residual(
            &p,
            c.l_arm_m,
            0.0,
            c.delta + PI * C / c.l_arm_m,
            c.phi_approx,
        );
        assert!(wrap_pi(a - b).abs() < 1e-10);
    }

    #[test]
    fn lattice_step_count() {
        let half = 532e-9;
        let k = max_lattice_steps(0.01, half);
        assert!((k as f64) * half < 0.01 && (k + 1) as f64 * half >= 0.01);
        assert_eq!(max_lattice_steps(2.0 * half, half), 1);
        assert_eq!(max_lattice_steps(0.1 * half, half), 0);
    }

    /// A candidate whose untuned residual is already zero: scan φ_approx and n
    /// for a sign change of the residual, then bisect on φ_approx.
    fn resonant_candidate(p: &InterferometerParams) -> TuningCandidate {
        let centre = phi_exact(p).unwrap();
        let step = 1e-5;
        for n in 7..=33 {
            let f = |phi: f64| resonance_residual(&TuningCandidate::new(p, phi, n), p);
            let mut lo = centre - 0.0015;
            while lo < centre + 0.0015 {
                let (a, b) = (f(lo), f(lo + step));
                if a < 0.0 && b > 0.0 && b - a < 1.0 {
                    let mut hi = lo + step;
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if f(mid) < 0.0 {
                            lo = mid
                        } else {
                            hi = mid
                        }
                    }
                    return TuningCandidate::new(p, 0.5 * (lo + hi), n);
                }
                lo += step;
            }
        }
        panic!("no resonant candidate in this cell");
    }

    #[test]
    fn resonant_candidate_needs_no_tuning() {
        let p = table().with_lengths(10_003.0, 100.0);
        let c = resonant_candidate(&p);
        assert!(resonance_residual(&c, &p).abs() < 1e-9);
        let t = micro_tune(&c, &p, &Tolerances::default()).unwrap();
        assert_eq!((t.arm_steps, t.src_steps), (0, 0));
        assert_eq!((t.dl_arm_m, t.dl_src_m), (0.0, 0.0));
        assert!(t.residual_phase.abs() < 1e-9);
    }

    #[test]
    fn unreachable_residual_is_rejected() {
        let p = table().with_lengths(10_002.0, 150.0);
        let tol = Tolerances {
            micro_bound_m: 1e-6,
            ..Default::default()
        };
        let half = p.lambda0_m / 2.0;
        let kmax = max_lattice_steps(tol.micro_bound_m, half) as f64;
        let centre = phi_exact(&p).unwrap();
        let mut rejected = 0;
        for i in 0..200 {
            let c = TuningCandidate::new(&p, centre + (i as f64 - 100.0) * 1e-5, 20);
            let r = resonance_residual(&c, &p);
            // Reachable phase: arm steps (Δ+δ_f)λ₀/c plus SRC steps, each times kmax,
            // bounded by a generous slope of 10 rad/rad for the SRC response.
            let reach =
                kmax * c.delta * p.lambda0_m / C * (1.0 + 10.0 / 2.0) + tol.resonance_phase_rad;
            if r.abs() > reach {
                assert!(micro_tune(&c, &p, &tol).is_none());
                rejected += 1;
            }
        }
        assert!(rejected > 150);
    }

    #[test]
    fn micro_tune_is_deterministic() {
        let p = table().with_lengths(9_999.0, 133.0);
        let tol = Tolerances::default();
        for n in 7..=33 {
            let c = TuningCandidate::new(&p, phi_exact(&p).unwrap() + 0.0003, n);
            assert_eq!(micro_tune(&c, &p, &tol), micro_tune(&c, &p, &tol));
        }
    }

    #[test]
    fn accepted_tunings_replay() {
        let tol = Tolerances::default();
        let mut found = 0;
        for l_src in [100.0, 117.0, 164.0, 200.0] {
            let p = table().with_lengths(10_001.0, l_src);
            for c in enumerate_candidates(&p, 0.002, 0.0001, DeltaBand::standard()).unwrap() {
                if let Some(t) = micro_tune(&c, &p, &tol) {
                    found += 1;
                    let half = p.lambda0_m / 2.0;
                    assert!(t.dl_arm_m.abs() < 0.01 && t.dl_src_m.abs() < 0.01);
                    assert_eq!(t.dl_arm_m, t.arm_steps as f64 * half);
                    assert_eq!(t.dl_src_m, t.src_steps as f64 * half);
                    let phi = realized_src_phase(c.delta, c.l_src_m, t.dl_src_m, c.n_fsr);
                    assert!((phi - t.phi_src).abs() < 1e-12);
                    let r = round_trip_residual(&p, c.l_arm_m, t.dl_arm_m, c.delta, phi);
                    assert!(r.abs() <= tol.resonance_phase_rad);
                    assert!((r - t.residual_phase).abs() < 1e-9);
                }
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn slope_bound_dominates_finite_differences() {
        for &(lo, hi) in &[
            (0.2, 0.25),
            (0.0, 0.01),
            (-0.01, 0.02),
            (1.5, 1.7),
            (0.7, 0.9),
        ] {
            let bound = phase_slope_bound(lo, hi, 0.04, 0.04, 1e4);
            let g = |phi: f64| {
                src_reflection_phase(phi, 0.04, 0.04)
                    - 2.0 * gamma_f_of_phi(phi, 0.04, 0.04, 1e4) * 1e4 / C
            };
            for i in 0..=1000 {
                let phi = lo + (hi - lo) * i as f64 / 1000.0;
                let h = 1e-7;
                let d = wrap_pi(g(phi + h) - g(phi - h)) / (2.0 * h);
                assert!(d.abs() <= bound * (1.0 + 1e-6), "phi {phi}: {d} > {bound}");
            }
        }
    }

    #[test]
    fn default_convention_reaches_target() {
        let p = InterferometerParams {
            sloshing: SloshingConvention::AsPrinted,
            ..table()
        };
        assert!(phi_exact(&p).is_ok());
        assert!(phi_exact(&table()).is_ok());
    }
}
