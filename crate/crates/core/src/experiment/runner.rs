use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::descriptor::{deg_to_rad, DescriptorError, ExperimentDescriptor, OutputFormat, Preset};
use crate::detection::{derive_seed, simulate_scan, DetectionError, RateSet, ScanRecord};
use crate::fit::{analyze_scan, sweep_analysis, FitResult, ScanAnalysis, SweepRecord};
use crate::switch::{conditional_phase_shift, theory_curve, RegimeReport, SwitchParams};

/// Pump wavelength used by [`pump_delay_fs_to_degrees`].
pub const DEFAULT_PUMP_WAVELENGTH_NM: f64 = 405.0;
const SPEED_OF_LIGHT_UM_PER_FS: f64 = 0.299_792_458;
const OVERLAY_OVERSAMPLE: usize = 10;
const THEORY_GRID_POINTS: usize = 721;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; output does not depend on this.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Serialized view of one fringe fit. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub offset: f64,
    pub amplitude: f64,
    pub amplitude_sigma: f64,
    pub phase_deg: f64,
    pub phase_sigma_deg: f64,
    pub period_um: f64,
    pub period_sigma_um: Option<f64>,
    pub period_fixed: bool,
    pub chi2: f64,
    pub dof: i64,
    pub flags: Vec<String>,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        Self {
            offset: f.model.offset,
            amplitude: f.model.amplitude,
            amplitude_sigma: f.amplitude_sigma(),
            phase_deg: f.model.phase.to_degrees(),
            phase_sigma_deg: f.phase_sigma().to_degrees(),
            period_um: f.model.period,
            period_sigma_um: f.period_sigma(),
            period_fixed: f.period_fixed,
            chi2: f.chi2,
            dof: f.dof,
            flags: f.flags.names().into_iter().map(String::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Summary {
    pub format: &'static str,
    pub preset: Preset,
    pub seed: u64,
    pub theta_p_deg: f64,
    pub r: f64,
    pub singles: Option<FitSummary>,
    pub coincidences: Option<FitSummary>,
    pub delta_phi_deg: Option<f64>,
    pub sigma_deg: Option<f64>,
    pub theory_delta_phi_deg: Option<f64>,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl Fig3Summary {
    pub fn flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Summary {
    pub format: &'static str,
    pub preset: Preset,
    pub seed: u64,
    pub r: f64,
    pub regime: RegimeReport,
    pub points: Vec<SweepRecord>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl Fig4Summary {
    pub fn flagged(&self) -> bool {
        self.points.iter().any(SweepRecord::is_flagged)
    }
}

/// Presents an angle in degrees on `[0, 360)`.
pub fn present_mod360(deg: f64) -> f64 {
    let m = deg.rem_euclid(360.0);
    if m >= 360.0 {
        0.0
    } else {
        m
    }
}

/// Converts a pump delay to a pump phase in degrees at the given pump
/// wavelength. The mapping is only approximate, so a warning is logged.
pub fn pump_delay_fs_to_degrees(delay_fs: f64, pump_wavelength_nm: f64) -> f64 {
    let deg = 360.0 * delay_fs * SPEED_OF_LIGHT_UM_PER_FS / (pump_wavelength_nm / 1000.0);
    log::warn!(
        "pump delay {delay_fs} fs -> {deg:.1} deg assumes a {pump_wavelength_nm} nm pump; \
         descriptors should give theta_p in degrees directly"
    );
    deg
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes a CSV whose first line is a `# cphase <kind> v1` comment.
fn write_csv_rows<S: Serialize>(
    path: &Path,
    kind: &str,
    rows: &[S],
) -> Result<(), ExperimentError> {
    let mut w = create(path)?;
    writeln!(w, "# cphase {kind} v1").map_err(io_err(path))?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush().map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Serialize)]
struct OverlayRow {
    delay_um: f64,
    singles1_fit: f64,
    coinc_fit: f64,
}

#[derive(Serialize)]
struct Fig3CsvRow<'a> {
    channel: &'a str,
    offset: f64,
    amplitude: f64,
    amplitude_sigma: f64,
    phase_deg: f64,
    phase_sigma_deg: f64,
    period_um: f64,
    chi2: f64,
    dof: i64,
    flags: String,
}

/// Simulates one reference-delay scan at the descriptor's `fig3_theta_p_deg`,
/// fits both fringes and writes the scan, the fits and a dense overlay.
pub fn run_fig3(
    desc: &ExperimentDescriptor,
    opts: &RunOptions,
) -> Result<Fig3Summary, ExperimentError> {
    desc.validate()?;
    ensure_dir(&desc.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()?;
    let config = desc.source_config(desc.fig3_theta_p_deg, desc.seed)?;
    let record = pool.install(|| simulate_scan(&config, &desc.scan))?;
    let mut files = Vec::new();

    let scan_path = desc.out_dir.join("fig3_scan.csv");
    let mut w = create(&scan_path)?;
    record.write_csv(&mut w)?;
    w.flush().map_err(io_err(&scan_path))?;
    files.push(scan_path);

    let r = desc.r();
    let theory = conditional_phase_shift(r, deg_to_rad(desc.fig3_theta_p_deg))
        .ok()
        .map(f64::to_degrees);
    let mut summary = Fig3Summary {
        format: "cphase.fig3/1",
        preset: desc.preset,
        seed: desc.seed,
        theta_p_deg: desc.fig3_theta_p_deg,
        r,
        singles: None,
        coincidences: None,
        delta_phi_deg: None,
        sigma_deg: None,
        theory_delta_phi_deg: theory,
        flags: Vec::new(),
        files: Vec::new(),
    };

    match analyze_scan(&record, desc.scan.period_um()) {
        Ok(a) => {
            summary.singles = Some((&a.singles).into());
            summary.coincidences = Some((&a.coincidences).into());
            summary.delta_phi_deg = Some(a.difference.delta_phi_deg());
            summary.sigma_deg = Some(a.difference.sigma_deg());
            summary.flags = a.flags().names().into_iter().map(String::from).collect();
            let overlay = desc.out_dir.join("fig3_overlay.csv");
            write_csv_rows(&overlay, "fig3-overlay", &overlay_rows(&record, &a))?;
            files.push(overlay);
        }
        Err(e) => {
            log::warn!("fig3 fit failed: {e}");
            summary.flags.push(format!("fit_failed: {e}"));
        }
    }

    let fits_path = match desc.format {
        OutputFormat::Json => {
            let p = desc.out_dir.join("fig3_fits.json");
            write_json(&p, &summary)?;
            p
        }
        OutputFormat::Csv => {
            let p = desc.out_dir.join("fig3_fits.csv");
            let mut rows = Vec::new();
            for (channel, fit) in [
                ("singles1", &summary.singles),
                ("coinc", &summary.coincidences),
            ] {
                if let Some(f) = fit {
                    rows.push(Fig3CsvRow {
                        channel,
                        offset: f.offset,
                        amplitude: f.amplitude,
                        amplitude_sigma: f.amplitude_sigma,
                        phase_deg: f.phase_deg,
                        phase_sigma_deg: f.phase_sigma_deg,
                        period_um: f.period_um,
                        chi2: f.chi2,
                        dof: f.dof,
                        flags: f.flags.join(";"),
                    });
                }
            }
            write_csv_rows(&p, "fig3-fits", &rows)?;
            p
        }
    };
    files.push(fits_path);
    summary.files = files;
    Ok(summary)
}

fn overlay_rows(record: &ScanRecord, a: &ScanAnalysis) -> Vec<OverlayRow> {
    let delays = record.delays();
    let (Some(&first), Some(&last)) = (delays.first(), delays.last()) else {
        return Vec::new();
    };
    let n = (delays.len() - 1) * OVERLAY_OVERSAMPLE + 1;
    (0..n)
        .map(|k| {
            let x = first + (last - first) * k as f64 / (n - 1).max(1) as f64;
            OverlayRow {
                delay_um: x,
                singles1_fit: a.singles.model.eval(x),
                coinc_fit: a.coincidences.model.eval(x),
            }
        })
        .collect()
}

/// Simulates one scan per sweep point. Each point gets its own seed derived
/// from the descriptor seed and its index, so the result does not depend on
/// scheduling.
pub fn simulate_sweep(
    desc: &ExperimentDescriptor,
    opts: &RunOptions,
) -> Result<Vec<(f64, ScanRecord)>, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()?;
    pool.install(|| {
        desc.sweep_theta_p_deg
            .par_iter()
            .enumerate()
            .map(|(i, &theta_deg)| {
                let config = desc.source_config(theta_deg, derive_seed(desc.seed, i as u64))?;
                Ok((deg_to_rad(theta_deg), simulate_scan(&config, &desc.scan)?))
            })
            .collect::<Result<Vec<_>, DetectionError>>()
    })
    .map_err(Into::into)
}

#[derive(Serialize)]
struct SweepCsvRow {
    theta_p_deg: f64,
    delta_phi_deg: Option<f64>,
    sigma_deg: Option<f64>,
    chi2: Option<f64>,
    dof: Option<i64>,
    flags: String,
}

#[derive(Serialize)]
struct TheoryRow {
    theta_p_deg: f64,
    delta_phi_deg: Option<f64>,
    delta_phi_deg_mod360: Option<f64>,
}

#[derive(Serialize)]
struct CombinedRow {
    theta_p_deg: f64,
    measured_deg: Option<f64>,
    measured_deg_mod360: Option<f64>,
    sigma_deg: Option<f64>,
    theory_deg: Option<f64>,
    theory_deg_mod360: Option<f64>,
    flags: String,
}

/// Runs the pump-phase sweep: one scan and one phase difference per point,
/// plus a theory curve computed from the rates alone.
pub fn run_fig4(
    desc: &ExperimentDescriptor,
    opts: &RunOptions,
) -> Result<Fig4Summary, ExperimentError> {
    desc.validate()?;
    ensure_dir(&desc.out_dir)?;
    let scans = simulate_sweep(desc, opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()?;
    let points = pool.install(|| sweep_analysis(&scans, desc.scan.period_um()));
    let records: Vec<SweepRecord> = points.iter().map(|p| p.record()).collect();
    let r = desc.r();
    let mut files = Vec::new();

    let summary = Fig4Summary {
        format: "cphase.fig4/1",
        preset: desc.preset,
        seed: desc.seed,
        r,
        regime: RegimeReport::from_ratio(r),
        points: records,
        files: Vec::new(),
    };

    let sweep_path = match desc.format {
        OutputFormat::Json => {
            let p = desc.out_dir.join("fig4_sweep.json");
            write_json(&p, &summary)?;
            p
        }
        OutputFormat::Csv => {
            let p = desc.out_dir.join("fig4_sweep.csv");
            let rows: Vec<SweepCsvRow> = summary
                .points
                .iter()
                .map(|s| SweepCsvRow {
                    theta_p_deg: s.theta_p_deg,
                    delta_phi_deg: s.delta_phi_deg,
                    sigma_deg: s.sigma_deg,
                    chi2: s.chi2,
                    dof: s.dof,
                    flags: s.flags.join(";"),
                })
                .collect();
            write_csv_rows(&p, "fig4-sweep", &rows)?;
            p
        }
    };
    files.push(sweep_path);

    let theory_path = desc.out_dir.join("fig4_theory.csv");
    write_csv_rows(&theory_path, "fig4-theory", &theory_rows(&desc.rates))?;
    files.push(theory_path);

    let combined_path = desc.out_dir.join("fig4_combined.csv");
    let combined: Vec<CombinedRow> = summary
        .points
        .iter()
        .map(|s| {
            let theory = conditional_phase_shift(r, deg_to_rad(s.theta_p_deg))
                .ok()
                .map(f64::to_degrees);
            CombinedRow {
                theta_p_deg: s.theta_p_deg,
                measured_deg: s.delta_phi_deg,
                measured_deg_mod360: s.delta_phi_deg.map(present_mod360),
                sigma_deg: s.sigma_deg,
                theory_deg: theory,
                theory_deg_mod360: theory.map(present_mod360),
                flags: s.flags.join(";"),
            }
        })
        .collect();
    write_csv_rows(&combined_path, "fig4-combined", &combined)?;
    files.push(combined_path);

    Ok(Fig4Summary { files, ..summary })
}

/// Dense theory curve over `[0°, 360°]` from the rates alone.
fn theory_rows(rates: &RateSet) -> Vec<TheoryRow> {
    let r = rates.ratio();
    let grid: Vec<f64> = (0..THEORY_GRID_POINTS)
        .map(|k| deg_to_rad(360.0 * k as f64 / (THEORY_GRID_POINTS - 1) as f64))
        .collect();
    theory_curve(r, &grid)
        .into_iter()
        .map(|p| {
            let d = p.phase_shift.map(f64::to_degrees);
            TheoryRow {
                theta_p_deg: p.theta_p.to_degrees(),
                delta_phi_deg: d,
                delta_phi_deg_mod360: d.map(present_mod360),
            }
        })
        .collect()
}

/// What the rates of a descriptor imply for the model amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub format: &'static str,
    pub preset: Preset,
    pub rates: RateSet,
    pub r: f64,
    pub regime: RegimeReport,
    pub max_phase_shift_deg: f64,
    pub alpha_abs: f64,
    pub beta_abs: f64,
    pub a_dc_abs: f64,
    pub ref_amp_abs: f64,
    pub implied_singles_2: f64,
    pub singles_2_residual: f64,
}

pub fn calibration_report(
    desc: &ExperimentDescriptor,
) -> Result<CalibrationReport, ExperimentError> {
    desc.validate()?;
    let cal = desc.calibration()?;
    let SwitchParams {
        alpha,
        beta,
        a_dc,
        ref_amp,
        ..
    } = cal.switch;
    Ok(CalibrationReport {
        format: "cphase.calibration/1",
        preset: desc.preset,
        rates: desc.rates,
        r: cal.r,
        regime: RegimeReport::from_ratio(cal.r),
        max_phase_shift_deg: crate::switch::max_phase_shift(cal.r).to_degrees(),
        alpha_abs: alpha.norm(),
        beta_abs: beta.norm(),
        a_dc_abs: a_dc.norm(),
        ref_amp_abs: ref_amp.norm(),
        implied_singles_2: cal.implied_singles_2,
        singles_2_residual: cal.singles_2_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mod360_presentation() {
        assert_eq!(present_mod360(-10.0), 350.0);
        assert_eq!(present_mod360(455.0), 95.0);
        assert_eq!(present_mod360(0.0), 0.0);
        assert_eq!(present_mod360(-1e-15), 0.0);
    }

    #[test]
    fn pump_delay_conversion() {
        let deg = pump_delay_fs_to_degrees(1.6, DEFAULT_PUMP_WAVELENGTH_NM);
        assert!((deg - 426.4).abs() < 0.1, "{deg}");
    }

    #[test]
    fn calibration_report_for_presets() {
        let small = ExperimentDescriptor::preset(Preset::Small).unwrap();
        let rep = calibration_report(&small).unwrap();
        assert!((rep.max_phase_shift_deg - 7.79).abs() < 0.01);
        let large = ExperimentDescriptor::preset(Preset::Large).unwrap();
        assert!(calibration_report(&large).unwrap().r > 2.0);
    }
}
