//! Grid search over (L_arm, L_SRC, φ_approx, n) for working points.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::C;
use crate::error::{Error, Result};
use crate::noise::{
    correction_coefficient, max_abs_delta_phi, phi_rot, standard_band, FilterTarget,
};
use crate::params::InterferometerParams;
use crate::src_cavity::{
    gamma_f_of_phi, micro_tune, phase_offsets, phi_exact, DeltaBand, MicroTuning, Tolerances,
    TuningCandidate, PHASE_SLACK,
};

/// Sweep bounds. Lengths in metres, phases in radians, detuning band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub l_arm_min_m: f64,
    pub l_arm_max_m: f64,
    pub l_arm_step_m: f64,
    pub l_src_min_m: f64,
    pub l_src_max_m: f64,
    pub l_src_step_m: f64,
    /// Half-width of the φ_approx window around φ_exact.
    pub phi_window_rad: f64,
    pub phi_step_rad: f64,
    pub n_min: i64,
    pub n_max: i64,
    pub delta_min_hz: f64,
    pub delta_max_hz: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            l_arm_min_m: 9995.0,
            l_arm_max_m: 10005.0,
            l_arm_step_m: 1.0,
            l_src_min_m: 100.0,
            l_src_max_m: 200.0,
            l_src_step_m: 1.0,
            phi_window_rad: 0.002,
            phi_step_rad: 0.0001,
            n_min: 7,
            n_max: 33,
            delta_min_hz: 5e6,
            delta_max_hz: 50e6,
        }
    }
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| min + i as f64 * step).collect()
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let ranges = [
            (
                "l_arm",
                self.l_arm_min_m,
                self.l_arm_max_m,
                self.l_arm_step_m,
            ),
            (
                "l_src",
                self.l_src_min_m,
                self.l_src_max_m,
                self.l_src_step_m,
            ),
        ];
        for (name, lo, hi, step) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0) {
                return bad(format!("{name} range must be finite and positive"));
            }
            if !(step.is_finite() && step > 0.0) {
                return bad(format!("{name} step must be positive, got {step}"));
            }
            if lo > hi {
                return bad(format!("{name} range is empty: [{lo}, {hi}]"));
            }
        }
        if !(self.phi_step_rad.is_finite() && self.phi_step_rad > 0.0) {
            return bad(format!(
                "phi_step_rad must be positive, got {}",
                self.phi_step_rad
            ));
        }
        if !(self.phi_window_rad.is_finite() && self.phi_window_rad >= 0.0) {
            return bad(format!(
                "phi_window_rad must be >= 0, got {}",
                self.phi_window_rad
            ));
        }
        if self.n_min > self.n_max {
            return bad(format!(
                "n range is empty: [{}, {}]",
                self.n_min, self.n_max
            ));
        }
        if !(self.delta_min_hz > 0.0 && self.delta_min_hz < self.delta_max_hz) {
            return bad(format!(
                "detuning band is empty: [{}, {}] Hz",
                self.delta_min_hz, self.delta_max_hz
            ));
        }
        // Every index must reach the band for some SRC length and phase in
        // [0, π/2].
        let band = self.band();
        let lowest = ((band.lo * self.l_src_min_m / C - PI / 2.0) / PI).ceil() as i64;
        let highest = ((band.hi * self.l_src_max_m / C) / PI).floor() as i64;
        if self.n_min < lowest || self.n_max > highest {
            return bad(format!(
                "n range [{}, {}] leaves the detuning band (feasible [{lowest}, {highest}])",
                self.n_min, self.n_max
            ));
        }
        Ok(())
    }

    pub fn band(&self) -> DeltaBand {
        DeltaBand::from_hz(self.delta_min_hz, self.delta_max_hz)
    }

    pub fn arm_lengths(&self) -> Vec<f64> {
        axis(self.l_arm_min_m, self.l_arm_max_m, self.l_arm_step_m)
    }

    pub fn src_lengths(&self) -> Vec<f64> {
        axis(self.l_src_min_m, self.l_src_max_m, self.l_src_step_m)
    }

    pub fn phase_offsets(&self) -> Vec<f64> {
        phase_offsets(self.phi_window_rad, self.phi_step_rad).collect()
    }

    pub fn cell_count(&self) -> u64 {
        [
            self.arm_lengths().len(),
            self.src_lengths().len(),
            self.phase_offsets().len(),
            (self.n_max - self.n_min + 1) as usize,
        ]
        .iter()
        .map(|&n| n as u64)
        .product()
    }
}

/// An accepted candidate with its tuning and rotation metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingPoint {
    pub candidate: TuningCandidate,
    pub micro: MicroTuning,
    pub max_dphi: f64,
    /// sinh²(2r)·max_dphi²: fractional excess noise power.
    pub degradation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCell {
    pub l_arm_m: f64,
    pub l_src_m: f64,
    pub count: usize,
}

/// Why a cell produced no working point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Δ outside the detuning band.
    Band,
    /// |φ_approx − φ_exact| beyond the error-budget bound, or no φ_exact.
    Budget,
    /// max |δΦ| or the degradation over threshold.
    Rotation,
    /// No microscopic tuning closes the resonance.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub cells: u64,
    pub accepted: u64,
    pub rejected_band: u64,
    pub rejected_budget: u64,
    pub rejected_rotation: u64,
    pub rejected_micro: u64,
    pub wall_time: Duration,
}

impl SearchStats {
    fn record(&mut self, outcome: std::result::Result<(), Rejection>) {
        self.cells += 1;
        match outcome {
            Ok(()) => self.accepted += 1,
            Err(Rejection::Band) => self.rejected_band += 1,
            Err(Rejection::Budget) => self.rejected_budget += 1,
            Err(Rejection::Rotation) => self.rejected_rotation += 1,
            Err(Rejection::Micro) => self.rejected_micro += 1,
        }
    }

    fn merge(&mut self, other: &SearchStats) {
        self.cells += other.cells;
        self.accepted += other.accepted;
        self.rejected_band += other.rejected_band;
        self.rejected_budget += other.rejected_budget;
        self.rejected_rotation += other.rejected_rotation;
        self.rejected_micro += other.rejected_micro;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub points: Vec<WorkingPoint>,
    pub density: Vec<DensityCell>,
    pub stats: SearchStats,
}

/// Relative step of the central difference in [`error_budget_bound`].
pub const BUDGET_FD_STEP: f64 = 1e-6;

/// max over the standard band of |dΦ_rot/dφ_SRC| at `phi`, with the Ω where
/// it peaks. Φ_rot depends on φ through γ_f(φ) and δ_f = −γ_f.
pub fn rotation_phase_sensitivity(
    params: &InterferometerParams,
    phi: f64,
    rel_step: f64,
) -> (f64, f64) {
    let h = rel_step * phi.abs().max(f64::MIN_POSITIVE);
    let g = |p: f64| gamma_f_of_phi(p, params.t_itm, params.t_srm, params.l_arm_m);
    let (gp, gm) = (g(phi + h), g(phi - h));
    let (tp, tm) = (
        FilterTarget {
            gamma_f: gp,
            delta_f: -gp,
        },
        FilterTarget {
            gamma_f: gm,
            delta_f: -gm,
        },
    );
    let mut best = (0.0, 0.0);
    for w in standard_band() {
        let d = ((phi_rot(w, &tp) - phi_rot(w, &tm)) / (2.0 * h)).abs();
        if d > best.0 {
            best = (d, w);
        }
    }
    best
}

/// Largest |φ_approx − φ_exact| keeping the first-order rotation error
/// below `budget`: budget / max_Ω |dΦ_rot/dφ_SRC| at φ_exact.
pub fn error_budget_bound(params: &InterferometerParams, phi_exact: f64, budget: f64) -> f64 {
    budget / rotation_phase_sensitivity(params, phi_exact, BUDGET_FD_STEP).0
}

/// Rotation metrics of a candidate's filter: (max |δΦ|, degradation).
pub fn rotation_metrics(params: &InterferometerParams, gamma_f: f64) -> Option<(f64, f64)> {
    let target = FilterTarget {
        gamma_f,
        delta_f: -gamma_f,
    };
    let max = max_abs_delta_phi(params, &target, &standard_band()).ok()?;
    Some((max, correction_coefficient(params.squeeze_r) * max * max))
}

fn rotation_ok(metrics: Option<(f64, f64)>, tol: &Tolerances) -> bool {
    matches!(metrics, Some((m, d)) if m < tol.dphi_budget_rad && d < tol.max_degradation)
}

/// Budget, rotation and micro-tuning checks for one candidate. `params` must
/// hold the candidate's lengths; the band is checked by the caller.
fn assess(
    cand: &TuningCandidate,
    params: &InterferometerParams,
    tol: &Tolerances,
    phi_exact: f64,
    bound: f64,
    metrics: Option<(f64, f64)>,
) -> std::result::Result<WorkingPoint, Rejection> {
    if (cand.phi_approx - phi_exact).abs() > bound + PHASE_SLACK {
        return Err(Rejection::Budget);
    }
    let (max_dphi, degradation) = match metrics {
        Some(m) if rotation_ok(metrics, tol) => m,
        _ => return Err(Rejection::Rotation),
    };
    let micro = micro_tune(cand, params, tol).ok_or(Rejection::Micro)?;
    Ok(WorkingPoint {
        candidate: *cand,
        micro,
        max_dphi,
        degradation,
    })
}

/// Full check of one candidate against the error budget, the rotation
/// thresholds and micro-tuning. The filter is judged at φ_approx; micro-tuning
/// keeps the realized phase within the SRC window around φ_exact.
pub fn evaluate_candidate(
    candidate: &TuningCandidate,
    params: &InterferometerParams,
    tol: &Tolerances,
) -> std::result::Result<WorkingPoint, Rejection> {
    let p = params.with_lengths(candidate.l_arm_m, candidate.l_src_m);
    let phi_exact = phi_exact(&p).map_err(|_| Rejection::Budget)?;
    let bound = error_budget_bound(&p, phi_exact, tol.dphi_budget_rad);
    let metrics = rotation_metrics(&p, candidate.gamma_f);
    assess(candidate, &p, tol, phi_exact, bound, metrics)
}

fn search_cell(
    params: &InterferometerParams,
    grid: &GridSpec,
    tol: &Tolerances,
    offsets: &[f64],
) -> (Vec<WorkingPoint>, SearchStats) {
    let mut stats = SearchStats::default();
    let mut points = Vec::new();
    let n_count = (grid.n_max - grid.n_min + 1) as u64;
    let Ok(phi_exact) = phi_exact(params) else {
        let total = n_count * offsets.len() as u64;
        stats.cells = total;
        stats.rejected_budget = total;
        return (points, stats);
    };
    let bound = error_budget_bound(params, phi_exact, tol.dphi_budget_rad);
    let band = grid.band();
    for &off in offsets {
        let phi = phi_exact + off;
        let mut metrics = None;
        for n in grid.n_min..=grid.n_max {
            let cand = TuningCandidate::new(params, phi, n);
            if !band.contains(cand.delta) {
                stats.record(Err(Rejection::Band));
                continue;
            }
            let m = *metrics.get_or_insert_with(|| rotation_metrics(params, cand.gamma_f));
            match assess(&cand, params, tol, phi_exact, bound, m) {
                Ok(wp) => {
                    points.push(wp);
                    stats.record(Ok(()));
                }
                Err(r) => stats.record(Err(r)),
            }
        }
    }
    (points, stats)
}

/// Canonical order: (L_arm, L_SRC, n, φ_approx).
pub fn canonical_sort(points: &mut [WorkingPoint]) {
    points.sort_by(|a, b| {
        let (a, b) = (&a.candidate, &b.candidate);
        a.l_arm_m
            .total_cmp(&b.l_arm_m)
            .then(a.l_src_m.total_cmp(&b.l_src_m))
            .then(a.n_fsr.cmp(&b.n_fsr))
            .then(a.phi_approx.total_cmp(&b.phi_approx))
    });
}

/// Evaluate every grid cell. Output is canonically sorted and identical for
/// any `workers` ≥ 1; `workers` = 1 runs on the calling thread.
pub fn run_search(
    grid: &GridSpec,
    params: &InterferometerParams,
    tol: &Tolerances,
    workers: usize,
) -> Result<SearchResult> {
    grid.validate()?;
    params.validate()?;
    tol.validate()?;
    if workers == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    let start = Instant::now();
    let offsets = grid.phase_offsets();
    let pairs: Vec<(f64, f64)> = grid
        .arm_lengths()
        .into_iter()
        .flat_map(|a| grid.src_lengths().into_iter().map(move |s| (a, s)))
        .collect();
    let eval = |&(a, s): &(f64, f64)| search_cell(&params.with_lengths(a, s), grid, tol, &offsets);
    let parts: Vec<(Vec<WorkingPoint>, SearchStats)> = if workers == 1 {
        pairs.iter().map(eval).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(|| pairs.par_iter().map(eval).collect())
    };
    let mut stats = SearchStats::default();
    let mut points = Vec::new();
    for (p, s) in parts {
        points.extend(p);
        stats.merge(&s);
    }
    canonical_sort(&mut points);
    let density = density_map(&points);
    stats.wall_time = start.elapsed();
    Ok(SearchResult {
        points,
        density,
        stats,
    })
}

/// Working points per (L_arm, L_SRC), ordered by (L_arm, L_SRC).
pub fn density_map(points: &[WorkingPoint]) -> Vec<DensityCell> {
    let mut keys: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.candidate.l_arm_m, p.candidate.l_src_m))
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut cells: Vec<DensityCell> = Vec::new();
    for (a, s) in keys {
        match cells.last_mut() {
            Some(c) if c.l_arm_m.to_bits() == a.to_bits() && c.l_src_m.to_bits() == s.to_bits() => {
                c.count += 1
            }
            _ => cells.push(DensityCell {
                l_arm_m: a,
                l_src_m: s,
                count: 1,
            }),
        }
    }
    cells
}

/// Working points of `result` in the (L_arm, L_SRC) cell.
pub fn points_in_cell(points: &[WorkingPoint], l_arm: f64, l_src: f64) -> Vec<WorkingPoint> {
    points
        .iter()
        .filter(|p| p.candidate.l_arm_m == l_arm && p.candidate.l_src_m == l_src)
        .copied()
        .collect()
}

/// Re-search a single (L_arm, L_SRC) cell of `grid` with a finer phase step.
pub fn zoom_cell(
    grid: &GridSpec,
    l_arm: f64,
    l_src: f64,
    phi_step: f64,
    params: &InterferometerParams,
    tol: &Tolerances,
) -> Result<SearchResult> {
    let fine = GridSpec {
        l_arm_min_m: l_arm,
        l_arm_max_m: l_arm,
        l_src_min_m: l_src,
        l_src_max_m: l_src,
        phi_step_rad: phi_step,
        ..*grid
    };
    run_search(&fine, params, tol, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::target_gamma_f;
    use crate::params::SloshingConvention;
    use crate::src_cavity::{resonance_residual, solve_phi_exact};

    #[test]
    fn default_grid_cardinality() {
        let g = GridSpec::default();
        assert_eq!(g.arm_lengths().len(), 11);
        assert_eq!(g.src_lengths().len(), 101);
        assert_eq!(g.phase_offsets().len(), 41);
        assert_eq!(g.cell_count(), 1_229_877);
        g.validate().unwrap();
    }

    #[test]
    fn degenerate_grids_are_configuration_errors() {
        let p = InterferometerParams::default();
        let t = Tolerances::default();
        for g in [
            GridSpec {
                l_arm_min_m: 10005.0,
                l_arm_max_m: 9995.0,
                ..Default::default()
            },
            GridSpec {
                l_src_step_m: 0.0,
                ..Default::default()
            },
            GridSpec {
                n_min: 40,
                n_max: 30,
                ..Default::default()
            },
            GridSpec {
                n_min: 1,
                ..Default::default()
            },
            GridSpec {
                delta_min_hz: 6e7,
                ..Default::default()
            },
        ] {
            assert!(
                matches!(run_search(&g, &p, &t, 1), Err(Error::Config(_))),
                "{g:?}"
            );
        }
        let g = GridSpec::default();
        assert!(run_search(&g, &p, &t, 0).is_err());
    }

    #[test]
    fn budget_bound_in_range_for_both_conventions() {
        for conv in [SloshingConvention::SqrtT, SloshingConvention::AsPrinted] {
            let p = InterferometerParams {
                sloshing: conv,
                ..Default::default()
            };
            let phi = phi_exact(&p).unwrap();
            let b = error_budget_bound(&p, phi, 0.02);
            assert!((0.001..=0.004).contains(&b), "{conv}: {b}");
            assert_eq!(error_budget_bound(&p, phi, 0.04), 2.0 * b);
        }
    }

    #[test]
    fn budget_derivative_richardson() {
        let p = InterferometerParams::default();
        let phi = phi_exact(&p).unwrap();
        let (d, w) = rotation_phase_sensitivity(&p, phi, 1e-6);
        let g = |x: f64| gamma_f_of_phi(x, p.t_itm, p.t_srm, p.l_arm_m);
        let h = 1e-7 * phi;
        let rot = |x: f64| {
            phi_rot(
                w,
                &FilterTarget {
                    gamma_f: g(x),
                    delta_f: -g(x),
                },
            )
        };
        let fine = ((rot(phi + h) - rot(phi - h)) / (2.0 * h)).abs();
        assert!((d - fine).abs() / fine < 0.01);
    }

    #[test]
    fn density_counts() {
        assert!(density_map(&[]).is_empty());
        let p = InterferometerParams::default();
        let c = TuningCandidate::new(&p, 0.2, 10);
        let micro = MicroTuning {
            arm_steps: 0,
            src_steps: 0,
            dl_arm_m: 0.0,
            dl_src_m: 0.0,
            phi_src: 0.2,
            residual_phase: 0.0,
        };
        let wp = |a: f64, s: f64| WorkingPoint {
            candidate: TuningCandidate {
                l_arm_m: a,
                l_src_m: s,
                ..c
            },
            micro,
            max_dphi: 0.0,
            degradation: 0.0,
        };
        let pts = [wp(1.0, 2.0), wp(3.0, 4.0), wp(1.0, 2.0), wp(1.0, 2.0)];
        let d = density_map(&pts);
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].l_arm_m, d[0].count), (1.0, 3));
        assert_eq!((d[1].l_arm_m, d[1].count), (3.0, 1));
    }

    /// An L_arm for which φ_approx = φ_exact is already resonant: place the
    /// round-trip phase on a multiple of 2π.
    fn manufactured(p0: &InterferometerParams, n: i64) -> (InterferometerParams, TuningCandidate) {
        let mut p = *p0;
        for _ in 0..3 {
            let phi =
                solve_phi_exact(target_gamma_f(&p).gamma_f, p.t_itm, p.t_srm, p.l_arm_m).unwrap();
            let c = TuningCandidate::new(&p, phi, n);
            let w_eff = p.omega0() + c.delta - c.gamma_f;
            let arg = crate::src_cavity::src_reflection_phase(phi, p.t_itm, p.t_srm);
            let total = 2.0 * w_eff * p.l_arm_m / C + arg;
            let m = (total / std::f64::consts::TAU).round();
            p.l_arm_m = (m * std::f64::consts::TAU - arg) * C / (2.0 * w_eff);
        }
        let phi = phi_exact(&p).unwrap();
        (p, TuningCandidate::new(&p, phi, n))
    }

    #[test]
    fn resonant_candidate_is_accepted() {
        let (p, c) = manufactured(&InterferometerParams::default(), 10);
        assert!(
            resonance_residual(&c, &p).abs() < 1e-4,
            "{}",
            resonance_residual(&c, &p)
        );
        let wp = evaluate_candidate(&c, &p, &Tolerances::default()).unwrap();
        let intrinsic = max_abs_delta_phi(&p, &target_gamma_f(&p), &standard_band()).unwrap();
        assert!((wp.max_dphi - intrinsic).abs() < 1e-12);
        assert!(wp.max_dphi < 0.02);
    }

    #[test]
    fn outside_budget_is_rejected() {
        let (p, c) = manufactured(&InterferometerParams::default(), 10);
        let phi = c.phi_approx + 0.01;
        let far = TuningCandidate::new(&p, phi, 10);
        assert_eq!(
            evaluate_candidate(&far, &p, &Tolerances::default()),
            Err(Rejection::Budget)
        );
    }

    #[test]
    fn small_grid_is_worker_independent() {
        let g = GridSpec {
            l_arm_min_m: 9999.0,
            l_arm_max_m: 10001.0,
            l_src_min_m: 100.0,
            l_src_max_m: 108.0,
            ..Default::default()
        };
        let p = InterferometerParams::default();
        let t = Tolerances::default();
        let one = run_search(&g, &p, &t, 1).unwrap();
        let three = run_search(&g, &p, &t, 3).unwrap();
        assert_eq!(one.points, three.points);
        assert_eq!(one.density, three.density);
        assert_eq!(one.stats.cells, g.cell_count());
        let s = one.stats;
        assert_eq!(
            s.cells,
            s.accepted
                + s.rejected_band
                + s.rejected_budget
                + s.rejected_rotation
                + s.rejected_micro
        );
        let total: usize = one.density.iter().map(|d| d.count).sum();
        assert_eq!(total, one.points.len());
    }
}
