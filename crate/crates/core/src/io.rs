//! Run configuration and the CSV result files.
//!
//! Every file opens with a `#` block recording the configuration hash, the
//! physical constants and the convention flags. Floats are written with 17
//! significant digits so that parsing a file gives back the exact values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{C, HBAR};
use crate::error::{Error, Result};
use crate::params::InterferometerParams;
use crate::search::{DensityCell, GridSpec, SearchStats, WorkingPoint};
use crate::src_cavity::Tolerances;

/// Frequency axis of the spectrum command, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSpec {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub bins: usize,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec {
            f_min_hz: 1.0,
            f_max_hz: 1e4,
            bins: 600,
        }
    }
}

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min_hz > 0.0 && self.f_min_hz < self.f_max_hz && self.f_max_hz.is_finite()) {
            return Err(Error::Config(format!(
                "spectrum range must satisfy 0 < f_min < f_max, got [{}, {}]",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if self.bins < 2 {
            return Err(Error::Config(format!(
                "spectrum needs >= 2 bins, got {}",
                self.bins
            )));
        }
        Ok(())
    }
}

/// Output directory and file names inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub workpoints: String,
    pub density: String,
    pub stats: String,
    pub spectrum: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            workpoints: "workpoints.csv".into(),
            density: "density.csv".into(),
            stats: "stats.txt".into(),
            spectrum: "spectrum.csv".into(),
        }
    }
}

impl OutputSpec {
    pub fn workpoints_path(&self) -> PathBuf {
        self.dir.join(&self.workpoints)
    }
    pub fn density_path(&self) -> PathBuf {
        self.dir.join(&self.density)
    }
    pub fn stats_path(&self) -> PathBuf {
        self.dir.join(&self.stats)
    }
    pub fn spectrum_path(&self) -> PathBuf {
        self.dir.join(&self.spectrum)
    }

    /// Create the directory and make sure a file can be written in it.
    pub fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| {
            Error::Config(format!(
                "cannot create output directory {}: {e}",
                self.dir.display()
            ))
        })?;
        let probe = self.dir.join(".write-probe");
        fs::write(&probe, b"").map_err(|e| {
            Error::Config(format!(
                "output directory {} is not writable: {e}",
                self.dir.display()
            ))
        })?;
        fs::remove_file(&probe)?;
        Ok(())
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Everything a command needs. Missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: InterferometerParams,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
    pub spectrum: SpectrumSpec,
    pub output: OutputSpec,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: InterferometerParams::default(),
            grid: GridSpec::default(),
            tolerances: Tolerances::default(),
            spectrum: SpectrumSpec::default(),
            output: OutputSpec::default(),
            workers: default_workers(),
        }
    }
}

/// The part of the configuration that determines results.
#[derive(Serialize)]
struct HashedConfig<'a> {
    params: &'a InterferometerParams,
    grid: &'a GridSpec,
    tolerances: &'a Tolerances,
    spectrum: &'a SpectrumSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid.validate()?;
        self.tolerances.validate()?;
        self.spectrum.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the result-determining settings; worker count and paths
    /// are excluded.
    pub fn hash(&self) -> String {
        let view = HashedConfig {
            params: &self.params,
            grid: &self.grid,
            tolerances: &self.tolerances,
            spectrum: &self.spectrum,
        };
        let text = toml::to_string(&view).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Bit-exact float text: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `#` header block for an output file of the given kind.
pub fn provenance(kind: &str, config: &RunConfig, extra: &[(String, String)]) -> String {
    let p = &config.params;
    let mut lines = vec![
        format!("epr-workpoints {kind}"),
        format!("config_sha256 = {}", config.hash()),
        format!("c_m_per_s = {}", fmt_f64(C)),
        format!("hbar_J_s = {}", fmt_f64(HBAR)),
        format!("lambda0_m = {}", fmt_f64(p.lambda0_m)),
        format!("sloshing_convention = {}", p.sloshing),
        "src_reflectivity = (sqrt(R_itm) - sqrt(R_srm) e^(2i phi)) / (1 - sqrt(R_itm R_srm) e^(2i phi))"
            .to_string(),
        "filter_target = gamma_f = sqrt(8 w0 P gamma_s / (m L_arm c w_s^2)), delta_f = -gamma_f"
            .to_string(),
    ];
    lines.extend(extra.iter().map(|(k, v)| format!("{k} = {v}")));
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

/// Write `header` then `rows` as CSV, atomically replacing `path`.
fn write_csv(path: &Path, provenance: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = provenance.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

pub const WORKPOINT_COLUMNS: [&str; 10] = [
    "L_arm_m",
    "L_SRC_m",
    "n",
    "phi_approx_rad",
    "delta_over_2pi_hz",
    "gamma_f_rad_s",
    "dL_arm_m",
    "dL_src_m",
    "max_dphi_rad",
    "degradation",
];

pub const DENSITY_COLUMNS: [&str; 3] = ["L_arm_m", "L_SRC_m", "count"];

/// One line of the working-point file, as raw fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkPointRow {
    pub l_arm_m: f64,
    pub l_src_m: f64,
    pub n: i64,
    pub phi_approx_rad: f64,
    pub delta_over_2pi_hz: f64,
    pub gamma_f_rad_s: f64,
    pub dl_arm_m: f64,
    pub dl_src_m: f64,
    pub max_dphi_rad: f64,
    pub degradation: f64,
}

impl From<&WorkingPoint> for WorkPointRow {
    fn from(w: &WorkingPoint) -> Self {
        let c = &w.candidate;
        WorkPointRow {
            l_arm_m: c.l_arm_m,
            l_src_m: c.l_src_m,
            n: c.n_fsr,
            phi_approx_rad: c.phi_approx,
            delta_over_2pi_hz: c.delta_hz(),
            gamma_f_rad_s: c.gamma_f,
            dl_arm_m: w.micro.dl_arm_m,
            dl_src_m: w.micro.dl_src_m,
            max_dphi_rad: w.max_dphi,
            degradation: w.degradation,
        }
    }
}

impl WorkPointRow {
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.l_arm_m),
            fmt_f64(self.l_src_m),
            self.n.to_string(),
            fmt_f64(self.phi_approx_rad),
            fmt_f64(self.delta_over_2pi_hz),
            fmt_f64(self.gamma_f_rad_s),
            fmt_f64(self.dl_arm_m),
            fmt_f64(self.dl_src_m),
            fmt_f64(self.max_dphi_rad),
            fmt_f64(self.degradation),
        ]
    }

    fn parse(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        if rec.len() != WORKPOINT_COLUMNS.len() {
            return Err(format!(
                "expected {} fields, found {}",
                WORKPOINT_COLUMNS.len(),
                rec.len()
            ));
        }
        let f = |i: usize| -> std::result::Result<f64, String> {
            let s = rec[i].trim();
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!(
                    "{}: not a finite number: `{s}`",
                    WORKPOINT_COLUMNS[i]
                )),
            }
        };
        let n = rec[2]
            .trim()
            .parse::<i64>()
            .map_err(|_| format!("n: not an integer: `{}`", rec[2].trim()))?;
        Ok(WorkPointRow {
            l_arm_m: f(0)?,
            l_src_m: f(1)?,
            n,
            phi_approx_rad: f(3)?,
            delta_over_2pi_hz: f(4)?,
            gamma_f_rad_s: f(5)?,
            dl_arm_m: f(6)?,
            dl_src_m: f(7)?,
            max_dphi_rad: f(8)?,
            degradation: f(9)?,
        })
    }
}

pub fn write_workpoints(path: &Path, rows: &[WorkPointRow], provenance: &str) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(WorkPointRow::fields).collect();
    write_csv(path, provenance, &WORKPOINT_COLUMNS, &rows)
}

pub fn write_density(path: &Path, cells: &[DensityCell], provenance: &str) -> Result<()> {
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec![fmt_f64(c.l_arm_m), fmt_f64(c.l_src_m), c.count.to_string()])
        .collect();
    write_csv(path, provenance, &DENSITY_COLUMNS, &rows)
}

/// Rows of a working-point file. Malformed rows are kept with their line
/// numbers instead of being dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedWorkpoints {
    pub rows: Vec<(usize, WorkPointRow)>,
    pub malformed: Vec<(usize, String)>,
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn check_header<R: std::io::Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let got = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let line = got.position().map_or(1, |p| p.line() as usize);
    if got.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line,
            msg: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

pub fn parse_workpoints(text: &str) -> Result<ParsedWorkpoints> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &WORKPOINT_COLUMNS)?;
    let mut out = ParsedWorkpoints::default();
    for rec in rdr.records() {
        match rec {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line() as usize);
                match WorkPointRow::parse(&r) {
                    Ok(row) => out.rows.push((line, row)),
                    Err(msg) => out.malformed.push((line, msg)),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                out.malformed.push((line, e.to_string()));
            }
        }
    }
    Ok(out)
}

pub fn read_workpoints(path: &Path) -> Result<ParsedWorkpoints> {
    parse_workpoints(&fs::read_to_string(path)?)
}

pub fn parse_density(text: &str) -> Result<Vec<DensityCell>> {
    let mut rdr = csv_reader(text);
    check_header(&mut rdr, &DENSITY_COLUMNS)?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let r = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = r.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if r.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        cells.push(DensityCell {
            l_arm_m: r[0]
                .trim()
                .parse()
                .map_err(|_| bad("L_arm_m is not a number"))?,
            l_src_m: r[1]
                .trim()
                .parse()
                .map_err(|_| bad("L_SRC_m is not a number"))?,
            count: r[2]
                .trim()
                .parse()
                .map_err(|_| bad("count is not an integer"))?,
        });
    }
    Ok(cells)
}

/// `key = value` lines; wall time is left out so reruns are byte-identical.
pub fn format_stats(stats: &SearchStats, provenance: &str) -> String {
    let mut s = provenance.to_string();
    for (k, v) in [
        ("cells", stats.cells),
        ("accepted", stats.accepted),
        ("rejected_band", stats.rejected_band),
        ("rejected_budget", stats.rejected_budget),
        ("rejected_rotation", stats.rejected_rotation),
        ("rejected_micro", stats.rejected_micro),
    ] {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

pub fn write_stats(path: &Path, stats: &SearchStats, provenance: &str) -> Result<()> {
    write_atomic(path, format_stats(stats, provenance).as_bytes())
}

/// Inverse of [`format_stats`], wall time set to zero.
pub fn parse_stats(text: &str) -> Result<SearchStats> {
    let mut s = SearchStats::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value: `{line}`")))?;
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| bad(format!("not a count: `{}`", v.trim())))?;
        let slot = match k.trim() {
            "cells" => &mut s.cells,
            "accepted" => &mut s.accepted,
            "rejected_band" => &mut s.rejected_band,
            "rejected_budget" => &mut s.rejected_budget,
            "rejected_rotation" => &mut s.rejected_rotation,
            "rejected_micro" => &mut s.rejected_micro,
            other => return Err(bad(format!("unknown key `{other}`"))),
        };
        *slot = v;
    }
    Ok(s)
}

pub const SPECTRUM_COLUMNS: [&str; 7] = [
    "frequency_hz",
    "S_h_ideal",
    "sqrt_S_h_ideal",
    "S_h_approx",
    "sqrt_S_h_approx",
    "S_h_oracle",
    "delta_phi_rad",
];

pub fn write_spectrum(
    path: &Path,
    spectrum: &crate::spectrum::SensitivitySpectrum,
    provenance: &str,
) -> Result<()> {
    let rows: Vec<Vec<String>> = spectrum
        .bins
        .iter()
        .map(|b| {
            vec![
                fmt_f64(b.frequency_hz),
                fmt_f64(b.s_h_ideal),
                fmt_f64(b.s_h_ideal.sqrt()),
                fmt_f64(b.s_h_approx),
                fmt_f64(b.s_h_approx.sqrt()),
                fmt_f64(b.s_h_oracle),
                fmt_f64(b.delta_phi),
            ]
        })
        .collect();
    write_csv(path, provenance, &SPECTRUM_COLUMNS, &rows)
}
