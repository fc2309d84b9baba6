//! Command-line surface: `spectrum`, `search` and `validate`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::{
    provenance, read_workpoints, write_density, write_spectrum, write_stats, write_workpoints,
    RunConfig, WorkPointRow,
};
use crate::oracle::IdlerAnglePolicy;
use crate::params::SloshingConvention;
use crate::search::{run_search, SearchResult};
use crate::spectrum::{compute_spectrum, SensitivitySpectrum};
use crate::src_cavity::TuningCandidate;
use crate::validate::{validate_file, validate_row, ValidationReport};

#[derive(Debug, Parser)]
#[command(
    name = "epr-workpoints",
    version,
    about = "EPR-squeezing working points and sensitivity curves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Carrier wavelength in nm.
    #[arg(long, global = true)]
    pub lambda_nm: Option<f64>,
    #[arg(long, global = true, value_parser = parse_convention)]
    pub sloshing_convention: Option<SloshingConvention>,
}

fn parse_convention(s: &str) -> std::result::Result<SloshingConvention, String> {
    SloshingConvention::from_str(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write ideal, approximate and oracle sensitivity curves.
    Spectrum {
        /// Tuning as L_arm,L_SRC,phi,n; otherwise the first valid working point.
        #[arg(long)]
        seed_tuning: Option<SeedTuning>,
    },
    /// Scan the grid and write working points, density map and stats.
    Search,
    /// Re-check a working-point file (default: the one in the output directory).
    Validate { file: Option<PathBuf> },
}

/// Macroscopic tuning given on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedTuning {
    pub l_arm_m: f64,
    pub l_src_m: f64,
    pub phi: f64,
    pub n: i64,
}

impl FromStr for SeedTuning {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected L_arm,L_SRC,phi,n, got `{s}`"));
        }
        let f = |i: usize| {
            parts[i]
                .parse::<f64>()
                .map_err(|_| format!("not a number: `{}`", parts[i]))
        };
        Ok(SeedTuning {
            l_arm_m: f(0)?,
            l_src_m: f(1)?,
            phi: f(2)?,
            n: parts[3]
                .parse()
                .map_err(|_| format!("not an integer: `{}`", parts[3]))?,
        })
    }
}

impl SeedTuning {
    pub fn candidate(&self, config: &RunConfig) -> TuningCandidate {
        TuningCandidate::new(
            &config.params.with_lengths(self.l_arm_m, self.l_src_m),
            self.phi,
            self.n,
        )
    }
}

/// Configuration from the file (or defaults) with command-line overrides.
pub fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(nm) = cli.lambda_nm {
        config.params.lambda0_m = nm / 1e9;
    }
    if let Some(conv) = cli.sloshing_convention {
        config.params.sloshing = conv;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_search(config: &RunConfig) -> Result<SearchResult> {
    config.validate()?;
    config.output.prepare()?;
    let result = run_search(
        &config.grid,
        &config.params,
        &config.tolerances,
        config.workers,
    )?;
    let rows: Vec<WorkPointRow> = result.points.iter().map(WorkPointRow::from).collect();
    write_workpoints(
        &config.output.workpoints_path(),
        &rows,
        &provenance("workpoints", config, &[]),
    )?;
    write_density(
        &config.output.density_path(),
        &result.density,
        &provenance("density", config, &[]),
    )?;
    write_stats(
        &config.output.stats_path(),
        &result.stats,
        &provenance("stats", config, &[]),
    )?;
    Ok(result)
}

/// First row of an existing working-point file that passes validation.
fn first_valid_row(path: &Path, config: &RunConfig) -> Option<WorkPointRow> {
    let parsed = read_workpoints(path).ok()?;
    parsed
        .rows
        .into_iter()
        .map(|(_, r)| r)
        .find(|r| validate_row(r, config).is_empty())
}

pub struct SpectrumRun {
    pub candidate: TuningCandidate,
    pub spectrum: SensitivitySpectrum,
}

/// Spectrum for `tuning`, or for the first valid working point: taken from
/// the output directory when a working-point file is there, otherwise from a
/// fresh search.
pub fn cmd_spectrum(config: &RunConfig, tuning: Option<TuningCandidate>) -> Result<SpectrumRun> {
    config.validate()?;
    config.output.prepare()?;
    let candidate = match tuning {
        Some(c) => c,
        None => {
            let existing = first_valid_row(&config.output.workpoints_path(), config);
            match existing {
                Some(r) => TuningCandidate::new(
                    &config.params.with_lengths(r.l_arm_m, r.l_src_m),
                    r.phi_approx_rad,
                    r.n,
                ),
                None => {
                    let found = run_search(
                        &config.grid,
                        &config.params,
                        &config.tolerances,
                        config.workers,
                    )?;
                    found.points.first().map(|w| w.candidate).ok_or_else(|| {
                        Error::NoWorkingPoint(
                            "the search found none and no tuning was supplied".into(),
                        )
                    })?
                }
            }
        }
    };
    let params = config
        .params
        .with_lengths(candidate.l_arm_m, candidate.l_src_m);
    let target = crate::noise::FilterTarget::detuned(candidate.gamma_f)?;
    let spectrum = compute_spectrum(
        &params,
        &target,
        &config.spectrum,
        IdlerAnglePolicy::default(),
    )?;
    let extra = [
        (
            "tuning_L_arm_m".to_string(),
            crate::io::fmt_f64(candidate.l_arm_m),
        ),
        (
            "tuning_L_SRC_m".to_string(),
            crate::io::fmt_f64(candidate.l_src_m),
        ),
        (
            "tuning_phi_rad".to_string(),
            crate::io::fmt_f64(candidate.phi_approx),
        ),
        ("tuning_n".to_string(), candidate.n_fsr.to_string()),
        (
            "idler_angle_policy".to_string(),
            "ideal-rotation".to_string(),
        ),
    ];
    write_spectrum(
        &config.output.spectrum_path(),
        &spectrum,
        &provenance("spectrum", config, &extra),
    )?;
    Ok(SpectrumRun {
        candidate,
        spectrum,
    })
}

pub fn cmd_validate(file: &Path, config: &RunConfig) -> Result<ValidationReport> {
    validate_file(file, config)
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let config = build_config(&cli)?;
    match cli.command {
        Command::Search => {
            let r = cmd_search(&config)?;
            let s = &r.stats;
            println!(
                "cells {} accepted {} rejected: band {} budget {} rotation {} micro {}",
                s.cells,
                s.accepted,
                s.rejected_band,
                s.rejected_budget,
                s.rejected_rotation,
                s.rejected_micro
            );
            println!("wall time {:.3} s", s.wall_time.as_secs_f64());
            println!("wrote {}", config.output.workpoints_path().display());
            Ok(0)
        }
        Command::Spectrum { seed_tuning } => {
            let run = cmd_spectrum(&config, seed_tuning.map(|s| s.candidate(&config)))?;
            let c = &run.candidate;
            println!(
                "tuning L_arm {} m, L_SRC {} m, phi {:.6} rad, n {}, Delta/2pi {:.6e} Hz",
                c.l_arm_m,
                c.l_src_m,
                c.phi_approx,
                c.n_fsr,
                c.delta_hz()
            );
            println!(
                "max S_approx/S_ideal {:.6}",
                run.spectrum.max_degradation_ratio()
            );
            println!("wrote {}", config.output.spectrum_path().display());
            Ok(0)
        }
        Command::Validate { file } => {
            let path = file.unwrap_or_else(|| config.output.workpoints_path());
            let report = cmd_validate(&path, &config)?;
            println!("{report}");
            Ok(if report.passed() { 0 } else { 1 })
        }
    }
}
